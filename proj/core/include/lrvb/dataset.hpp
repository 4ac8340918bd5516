#pragma once

#include <cstddef>
#include <cstdint>
#include <iosfwd>
#include <string>
#include <vector>

namespace lrvb {

struct Observation {
  int site = 1;  // 1-based
  int treatment = 0;
  double outcome = 0.0;
};

/// Per-(site, arm) summary used by the variational objective.
struct ArmSummary {
  std::size_t count = 0;
  double mean = 0.0;
  double sum_sq_dev = 0.0;  // Σ (y - mean)²
};

struct SiteSummary {
  ArmSummary control;
  ArmSummary treated;
};

/// Rows of (site, treatment, outcome) for K sites. Immutable once built.
class MicrocreditDataset {
 public:
  MicrocreditDataset() = default;
  /// Validates and takes ownership of rows. Throws ValidationError.
  explicit MicrocreditDataset(std::vector<Observation> rows);

  const std::vector<Observation>& rows() const noexcept { return rows_; }
  std::size_t num_sites() const noexcept { return summaries_.size(); }
  std::size_t size() const noexcept { return rows_.size(); }
  std::vector<std::size_t> site_counts() const;
  const std::vector<SiteSummary>& summaries() const noexcept { return summaries_; }
  /// Sites whose rows are all treated or all control.
  const std::vector<std::string>& warnings() const noexcept { return warnings_; }

 private:
  std::vector<Observation> rows_;
  std::vector<SiteSummary> summaries_;
  std::vector<std::string> warnings_;
};

/// Reads the `site,treatment,outcome` CSV schema. Errors carry the 1-based
/// file line number (the header is line 1).
MicrocreditDataset read_dataset_csv(std::istream& in);
MicrocreditDataset read_dataset_csv_file(const std::string& path);
void write_dataset_csv(std::ostream& out, const MicrocreditDataset& data);

}  // namespace lrvb
