#include <iostream>

#include "lrvb_app/app.hpp"

int main(int argc, char** argv) { return lrvb::app::run(argc, argv, std::cout, std::cerr); }
