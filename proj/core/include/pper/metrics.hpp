#pragma once

#include <optional>
#include <string>
#include <vector>

#include <nlohmann/json.hpp>

#include "pper/dataio.hpp"
#include "pper/matcher.hpp"

namespace pper::metrics {

// Blocking quality: pairs completeness, reduction ratio, and their harmonic
// mean. pc is undefined (null) for an empty truth set.
struct BlockingReport {
  std::optional<double> pc;
  double rr = 0.0;
  std::optional<double> f;
  std::uint64_t t_total = 0;
  std::uint64_t t_prime = 0;

  nlohmann::json to_json() const;
};

BlockingReport blocking_metrics(const dataio::GroundTruth& truth,
                                const std::vector<std::pair<std::int64_t, std::int64_t>>& t_prime,
                                std::uint64_t total_comparisons);

struct RocPoint {
  double threshold = 0.0;
  double recall = 0.0;
  double precision = 0.0;
  double fpr = 0.0;
};

// ROC at the nine evenly spaced thresholds 0.1 .. 0.9. Precision with zero
// predictions is reported as 1 (no false alarms).
std::vector<RocPoint> er_metrics(const std::vector<matcher::MatchResult>& matches,
                                 const dataio::GroundTruth& truth,
                                 std::uint64_t total_comparisons);

void write_roc_csv(const std::string& path, const std::vector<RocPoint>& points);

}  // namespace pper::metrics
