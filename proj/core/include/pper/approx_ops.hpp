#pragma once

#include "pper/he_backend.hpp"

namespace pper::approx {

// Parameters of the iterated comparison: amplification exponent m, inverse
// iterations d' (initial normalization) and d (per round), and t rounds.
struct CompParams {
  int m = 4;
  int d_prime = 5;
  int d = 5;
  int t = 6;

  void validate() const;  // m must be a power of two >= 2
};

// An integer id mapped into [1/2, 3/2): 1/2 + i/range.
struct ScaledId {
  double value;
};

ScaledId rescale_id(int i, int range);  // throws RangeError for i outside [0, range)

// Slot-wise reciprocal by Goldschmidt iteration. Valid for slot values in
// (0, 2); converges as |1-x|^(2^(d+1)).
he::CipherVec inv_goldschmidt(const he::HEBackend& be, const he::CipherVec& x, int d,
                              const char* site = "inv_goldschmidt");

// Slot-wise comparison score: ~0 where a<b, exactly 0.5 where a=b, ~1 where
// a>b. Inputs must lie in [1/2, 3/2). Bootstraps at loop boundaries when the
// backend allows it; otherwise depth exhaustion surfaces as DepthBudgetError.
he::CipherVec comp(const he::HEBackend& be, const he::CipherVec& a, const he::CipherVec& b,
                   const CompParams& p);

// Slot-wise equality: 4*c*(1-c) with c = comp(a,b). ~1 where a=b, ~0 otherwise.
he::CipherVec eeq_ni(const he::HEBackend& be, const he::CipherVec& a, const he::CipherVec& b,
                     const CompParams& p);

// Exact multiplication-chain depth of comp under this module's construction.
int min_depth_estimate(const CompParams& p);

}  // namespace pper::approx
