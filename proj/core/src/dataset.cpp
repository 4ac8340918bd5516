#include "lrvb/dataset.hpp"

#include <algorithm>
#include <charconv>
#include <cmath>
#include <cstdio>
#include <fstream>
#include <istream>
#include <ostream>
#include <string_view>

#include "lrvb/errors.hpp"

namespace lrvb {
namespace {

// Two-pass summary over values already sorted into canonical order.
ArmSummary summarize(const std::vector<double>& ys) {
  ArmSummary s;
  s.count = ys.size();
  if (ys.empty()) return s;
  double sum = 0.0;
  for (double y : ys) sum += y;
  s.mean = sum / static_cast<double>(ys.size());
  for (double y : ys) s.sum_sq_dev += (y - s.mean) * (y - s.mean);
  return s;
}

std::string_view trim(std::string_view s) {
  while (!s.empty() && (s.front() == ' ' || s.front() == '\t')) s.remove_prefix(1);
  while (!s.empty() && (s.back() == ' ' || s.back() == '\t' || s.back() == '\r')) s.remove_suffix(1);
  return s;
}

template <class Num>
bool parse_number(std::string_view text, Num& out) {
  text = trim(text);
  if (text.empty()) return false;
  if constexpr (std::is_floating_point_v<Num>) {
    // strtod accepts forms from_chars rejects on older toolchains (e.g. leading '+').
    std::string buf(text);
    char* end = nullptr;
    out = std::strtod(buf.c_str(), &end);
    return end == buf.c_str() + buf.size();
  } else {
    const auto* first = text.data();
    const auto* last = text.data() + text.size();
    const auto [ptr, ec] = std::from_chars(first, last, out);
    return ec == std::errc() && ptr == last;
  }
}

}  // namespace

MicrocreditDataset::MicrocreditDataset(std::vector<Observation> rows) : rows_(std::move(rows)) {
  if (rows_.empty()) throw ValidationError("dataset has no rows");
  int max_site = 0;
  for (const Observation& r : rows_) {
    if (r.site < 1) throw ValidationError("site ids must be positive integers");
    if (r.treatment != 0 && r.treatment != 1) throw ValidationError("treatment must be 0 or 1");
    if (!std::isfinite(r.outcome)) throw ValidationError("outcome must be finite");
    max_site = std::max(max_site, r.site);
  }
  const auto k = static_cast<std::size_t>(max_site);
  // Canonical accumulation order: (site, treatment, outcome). Row order is irrelevant.
  std::vector<std::vector<double>> arms(2 * k);
  for (const Observation& r : rows_) arms[2 * static_cast<std::size_t>(r.site - 1) + r.treatment].push_back(r.outcome);
  summaries_.resize(k);
  for (std::size_t s = 0; s < k; ++s) {
    auto& c = arms[2 * s];
    auto& t = arms[2 * s + 1];
    if (c.empty() && t.empty()) throw ValidationError("site " + std::to_string(s + 1) + " has no observations");
    std::sort(c.begin(), c.end());
    std::sort(t.begin(), t.end());
    summaries_[s] = {summarize(c), summarize(t)};
    if (c.empty() || t.empty())
      warnings_.push_back("site " + std::to_string(s + 1) + " has only " + (c.empty() ? "treated" : "control") +
                          " observations; its effect is identified through pooling only");
  }
}

std::vector<std::size_t> MicrocreditDataset::site_counts() const {
  std::vector<std::size_t> out;
  out.reserve(summaries_.size());
  for (const SiteSummary& s : summaries_) out.push_back(s.control.count + s.treated.count);
  return out;
}

MicrocreditDataset read_dataset_csv(std::istream& in) {
  std::string line;
  std::size_t line_no = 0;
  if (!std::getline(in, line)) throw ValidationError("empty dataset file", 1);
  ++line_no;
  if (trim(line) != "site,treatment,outcome")
    throw ValidationError("expected header 'site,treatment,outcome'", line_no);
  std::vector<Observation> rows;
  while (std::getline(in, line)) {
    ++line_no;
    const std::string_view text = trim(line);
    if (text.empty()) continue;
    const auto c1 = text.find(',');
    const auto c2 = c1 == std::string_view::npos ? c1 : text.find(',', c1 + 1);
    if (c2 == std::string_view::npos || text.find(',', c2 + 1) != std::string_view::npos)
      throw ValidationError("expected 3 comma-separated fields", line_no);
    Observation obs;
    if (!parse_number(text.substr(0, c1), obs.site) || obs.site < 1)
      throw ValidationError("site must be a positive integer", line_no);
    if (!parse_number(text.substr(c1 + 1, c2 - c1 - 1), obs.treatment) || (obs.treatment != 0 && obs.treatment != 1))
      throw ValidationError("treatment must be 0 or 1", line_no);
    if (!parse_number(text.substr(c2 + 1), obs.outcome) || !std::isfinite(obs.outcome))
      throw ValidationError("outcome must be a finite number", line_no);
    rows.push_back(obs);
  }
  return MicrocreditDataset(std::move(rows));
}

MicrocreditDataset read_dataset_csv_file(const std::string& path) {
  std::ifstream in(path);
  if (!in) throw ValidationError("cannot open dataset '" + path + "'");
  return read_dataset_csv(in);
}

void write_dataset_csv(std::ostream& out, const MicrocreditDataset& data) {
  out << "site,treatment,outcome\n";
  char buf[64];
  for (const Observation& r : data.rows()) {
    std::snprintf(buf, sizeof buf, "%.17g", r.outcome);
    out << r.site << ',' << r.treatment << ',' << buf << '\n';
  }
}

}  // namespace lrvb
