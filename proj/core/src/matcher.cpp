#include "pper/matcher.hpp"

#include <algorithm>

#include "pper/blocking.hpp"

namespace pper::matcher {

he::CipherVec vr_overlap(const he::HEBackend& be, const he::CipherVec& enc_a,
                         const he::CipherVec& enc_b, const pmatrix::EvalOps& ops) {
  const int B = be.batch_size();
  he::CipherVec acc;
  for (int k = 0; k < B; ++k) {
    he::CipherVec eq = ops.eeq(enc_a, be.rotate(enc_b, k));
    acc = acc.valid() ? be.add(acc, eq) : eq;
  }
  // Total-sum reduction: log2(B) rotate-and-add steps, no extra depth.
  for (int shift = 1; shift < B; shift <<= 1) acc = be.add(acc, be.rotate(acc, shift));
  return acc;
}

he::CipherVec elementwise_overlap(const he::HEBackend& be,
                                  const std::vector<he::CipherVec>& enc_a,
                                  const std::vector<he::CipherVec>& enc_b,
                                  const pmatrix::EvalOps& ops) {
  he::CipherVec acc;
  for (const auto& a : enc_a) {
    for (const auto& b : enc_b) {
      he::CipherVec eq = ops.eeq(a, b);
      acc = acc.valid() ? be.add(acc, eq) : eq;
    }
  }
  return acc;
}

double score_percent(int overlap, int card_a, int card_b) {
  if (overlap < 0) throw DataFault("negative overlap");
  if (overlap > std::min(card_a, card_b))
    throw DataFault("overlap " + std::to_string(overlap) + " exceeds cardinality min(" +
                    std::to_string(card_a) + ", " + std::to_string(card_b) + ")");
  const int uni = card_a + card_b - overlap;
  if (uni <= 0) return 0.0;
  return 100.0 * static_cast<double>(overlap) / static_cast<double>(uni);
}

std::vector<MatchResult> filter_matches(std::vector<MatchResult> results, double threshold) {
  if (threshold < 0.0 || threshold > 1.0) throw ConfigError("threshold must lie in [0, 1]");
  std::erase_if(results, [&](const MatchResult& m) { return m.score / 100.0 <= threshold; });
  std::sort(results.begin(), results.end(), [](const MatchResult& a, const MatchResult& b) {
    return std::tie(a.id1, a.id2) < std::tie(b.id1, b.id2);
  });
  return results;
}

std::vector<MatchResult> cleartext_er(const std::vector<dataio::Record>& d1,
                                      const std::vector<dataio::Record>& d2, double threshold,
                                      std::uint32_t token_domain, int token_length) {
  const blocking::CandidateSet cands = blocking::cleartext_candidates(d1, d2);

  auto token_sets = [&](const std::vector<dataio::Record>& ds, dataio::Side side) {
    std::unordered_map<std::int64_t, std::vector<std::uint32_t>> out;
    for (const auto& r : ds) {
      dataio::TokenVec tv = dataio::tokenize(r, side, token_domain, token_length);
      std::vector<std::uint32_t> codes(tv.slots.begin(),
                                       tv.slots.begin() + tv.cardinality);
      out.emplace(r.local_id, std::move(codes));
    }
    return out;
  };
  auto toks1 = token_sets(d1, dataio::Side::A);
  auto toks2 = token_sets(d2, dataio::Side::B);

  std::vector<MatchResult> results;
  for (const auto& [id1, id2] : cands.pairs) {
    const auto& a = toks1.at(id1);
    const auto& b = toks2.at(id2);
    std::vector<std::uint32_t> inter;
    std::set_intersection(a.begin(), a.end(), b.begin(), b.end(), std::back_inserter(inter));
    MatchResult m;
    m.id1 = id1;
    m.id2 = id2;
    m.overlap = static_cast<int>(inter.size());
    m.score = score_percent(m.overlap, static_cast<int>(a.size()), static_cast<int>(b.size()));
    results.push_back(m);
  }
  return filter_matches(std::move(results), threshold);
}

}  // namespace pper::matcher
