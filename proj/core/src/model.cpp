#include "lrvb/model.hpp"

#include <algorithm>

namespace lrvb {

std::size_t VariationalModel::alpha_index(std::string_view name) const {
  const auto& names = alpha_names();
  const auto it = std::find(names.begin(), names.end(), name);
  if (it == names.end()) {
    std::string valid;
    for (const auto& n : names) valid += (valid.empty() ? "" : ", ") + n;
    throw ParameterError("unknown prior parameter '" + std::string(name) + "'; valid names: " + valid);
  }
  return static_cast<std::size_t>(it - names.begin());
}

void VariationalModel::check_alpha(std::span<const double> alpha) const { check_alpha_size(alpha.size()); }

void VariationalModel::check_alpha_size(std::size_t size) const {
  if (size != alpha_names().size())
    throw ParameterError("expected " + std::to_string(alpha_names().size()) + " prior parameters, got " +
                         std::to_string(size));
}

}  // namespace lrvb
