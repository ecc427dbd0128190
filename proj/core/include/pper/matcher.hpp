#pragma once

#include <cstdint>
#include <vector>

#include "pper/dataio.hpp"
#include "pper/he_backend.hpp"
#include "pper/private_matrix.hpp"

namespace pper::matcher {

struct MatchResult {
  std::int64_t id1 = 0;
  std::int64_t id2 = 0;
  double score = 0.0;  // Jaccard percent in [0, 100]
  int overlap = 0;
};

// Encrypted set overlap by Vector Rotation: sums slot equality of encA
// against every cyclic rotation of encB, then reduces to a total with
// log2(batch) rotate-and-add steps. With unique tokens and non-colliding pads
// every slot of the result equals |A cap B|.
he::CipherVec vr_overlap(const he::HEBackend& be, const he::CipherVec& enc_a,
                         const he::CipherVec& enc_b, const pmatrix::EvalOps& ops);

// Element-wise overlap for the non-SIMD baselines: one ciphertext per token,
// equality accumulated pairwise.
he::CipherVec elementwise_overlap(const he::HEBackend& be,
                                  const std::vector<he::CipherVec>& enc_a,
                                  const std::vector<he::CipherVec>& enc_b,
                                  const pmatrix::EvalOps& ops);

// Jaccard percent 100 * overlap / (cardA + cardB - overlap); 0 when the
// union is empty. Throws on overlap exceeding either cardinality.
double score_percent(int overlap, int card_a, int card_b);

// Keeps results with score/100 strictly above the threshold; sorts by ids.
std::vector<MatchResult> filter_matches(std::vector<MatchResult> results, double threshold);

// Plaintext token-set Jaccard over cleartext candidate pairs: the ground
// oracle for every equivalence test. threshold 0 keeps all nonzero scores.
std::vector<MatchResult> cleartext_er(const std::vector<dataio::Record>& d1,
                                      const std::vector<dataio::Record>& d2, double threshold,
                                      std::uint32_t token_domain, int token_length);

}  // namespace pper::matcher
