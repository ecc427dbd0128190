#include "pper/metrics.hpp"

#include <algorithm>
#include <fstream>

namespace pper::metrics {

nlohmann::json BlockingReport::to_json() const {
  nlohmann::json j{{"rr", rr}, {"t_total", t_total}, {"t_prime", t_prime}};
  j["pc"] = pc ? nlohmann::json(*pc) : nlohmann::json(nullptr);
  j["f"] = f ? nlohmann::json(*f) : nlohmann::json(nullptr);
  return j;
}

BlockingReport blocking_metrics(const dataio::GroundTruth& truth,
                                const std::vector<std::pair<std::int64_t, std::int64_t>>& t_prime,
                                std::uint64_t total_comparisons) {
  BlockingReport rep;
  rep.t_total = total_comparisons;
  rep.t_prime = t_prime.size();
  rep.rr = total_comparisons == 0
               ? 0.0
               : 1.0 - static_cast<double>(t_prime.size()) / static_cast<double>(total_comparisons);
  if (!truth.pairs.empty()) {
    std::uint64_t blocked = 0;
    for (const auto& [a, b] : truth.pairs)
      if (std::binary_search(t_prime.begin(), t_prime.end(), std::make_pair(a, b))) ++blocked;
    rep.pc = static_cast<double>(blocked) / static_cast<double>(truth.pairs.size());
    if (*rep.pc + rep.rr > 0.0) rep.f = 2.0 * *rep.pc * rep.rr / (*rep.pc + rep.rr);
  }
  return rep;
}

std::vector<RocPoint> er_metrics(const std::vector<matcher::MatchResult>& matches,
                                 const dataio::GroundTruth& truth,
                                 std::uint64_t total_comparisons) {
  std::vector<RocPoint> points;
  const std::uint64_t negatives =
      total_comparisons > truth.pairs.size() ? total_comparisons - truth.pairs.size() : 0;
  for (int i = 1; i <= 9; ++i) {
    const double t = 0.1 * i;
    std::uint64_t tp = 0, fp = 0;
    for (const auto& m : matches) {
      if (m.score / 100.0 <= t) continue;
      if (truth.contains(m.id1, m.id2))
        ++tp;
      else
        ++fp;
    }
    RocPoint p;
    p.threshold = t;
    p.recall = truth.pairs.empty()
                   ? 0.0
                   : static_cast<double>(tp) / static_cast<double>(truth.pairs.size());
    p.precision = (tp + fp) == 0 ? 1.0 : static_cast<double>(tp) / static_cast<double>(tp + fp);
    p.fpr = negatives == 0 ? 0.0 : static_cast<double>(fp) / static_cast<double>(negatives);
    points.push_back(p);
  }
  return points;
}

void write_roc_csv(const std::string& path, const std::vector<RocPoint>& points) {
  std::ofstream f(path, std::ios::binary);
  if (!f) throw DataFault("cannot open for writing: " + path);
  f << "threshold,recall,precision,fpr\n";
  char buf[160];
  for (const auto& p : points) {
    std::snprintf(buf, sizeof(buf), "%.1f,%.6f,%.6f,%.8f\n", p.threshold, p.recall, p.precision,
                  p.fpr);
    f << buf;
  }
}

}  // namespace pper::metrics
