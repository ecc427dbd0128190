#include "pper/approx_ops.hpp"

#include <cmath>
#include <string>

namespace pper::approx {

namespace {

bool is_power_of_two(int v) { return v > 0 && (v & (v - 1)) == 0; }

int log2_int(int v) {
  int r = 0;
  while (v > 1) {
    v >>= 1;
    ++r;
  }
  return r;
}

// Bootstraps c when fewer than `need` levels remain and the parameter set
// allows it. With bootstrapping disabled this is a no-op and the following
// multiplication fails loudly instead.
he::CipherVec ensure_levels(const he::HEBackend& be, he::CipherVec c, int need) {
  if (!be.params().bootstrapping_enabled) return c;
  if (be.params().multiplicative_depth - c.depth_consumed() < need) return be.bootstrap(c);
  return c;
}

}  // namespace

void CompParams::validate() const {
  if (m < 2 || !is_power_of_two(m))
    throw ConfigError("comp amplification exponent m must be a power of two >= 2");
  if (d_prime < 1 || d < 1) throw ConfigError("comp inverse iteration counts must be positive");
  if (t < 0) throw ConfigError("comp round count must be non-negative");
}

ScaledId rescale_id(int i, int range) {
  if (range <= 0) throw RangeError("rescale_id: range must be positive");
  if (i < 0 || i >= range)
    throw RangeError("rescale_id: id " + std::to_string(i) + " outside [0, " +
                     std::to_string(range) + ")");
  return ScaledId{0.5 + static_cast<double>(i) / static_cast<double>(range)};
}

he::CipherVec inv_goldschmidt(const he::HEBackend& be, const he::CipherVec& x, int d,
                              const char* site) {
  // a0 = 2-x, b0 = 1-x; b <- b^2, a <- a*(1+b). a_d = (1 - b0^(2^(d+1))) / x.
  he::CipherVec a = be.sub_from_scalar(2.0, x);
  he::CipherVec b = be.sub_from_scalar(1.0, x);
  for (int i = 0; i < d; ++i) {
    a = ensure_levels(be, a, 3);
    b = ensure_levels(be, b, 3);
    b = be.mul(b, b, site);
    a = be.mul(a, be.add_scalar(b, 1.0), site);
  }
  return a;
}

namespace {

// x^m for power-of-two m via repeated squaring.
he::CipherVec pow_m(const he::HEBackend& be, he::CipherVec x, int m, const char* site) {
  for (int i = 0; i < log2_int(m); ++i) {
    x = ensure_levels(be, x, 3);
    x = be.mul(x, x, site);
  }
  return x;
}

}  // namespace

he::CipherVec comp(const he::HEBackend& be, const he::CipherVec& a, const he::CipherVec& b,
                   const CompParams& p) {
  p.validate();
  // Normalize onto x+y ~= 1: the inverse argument (a+b)/2 stays in (0,2)
  // because a,b are in [1/2, 3/2).
  he::CipherVec s = be.mul_scalar(be.add(a, b), 0.5, "comp.norm");
  he::CipherVec inv_s = inv_goldschmidt(be, s, p.d_prime, "comp.norm.inv");
  inv_s = ensure_levels(be, inv_s, 3);
  he::CipherVec half_inv = be.mul_scalar(inv_s, 0.5, "comp.norm");
  he::CipherVec x = be.mul(ensure_levels(be, a, 3), half_inv, "comp.norm");
  he::CipherVec y = be.mul(ensure_levels(be, b, 3), half_inv, "comp.norm");

  // Amplification: both tracks divide by the same approximate inverse, so the
  // inverse error cancels out of the x:y ratio instead of compounding.
  for (int round = 0; round < p.t; ++round) {
    x = ensure_levels(be, x, 3);
    y = ensure_levels(be, y, 3);
    he::CipherVec xm = pow_m(be, x, p.m, "comp.round.pow");
    he::CipherVec ym = pow_m(be, y, p.m, "comp.round.pow");
    he::CipherVec denom_inv = inv_goldschmidt(be, be.add(xm, ym), p.d, "comp.round.inv");
    denom_inv = ensure_levels(be, denom_inv, 3);
    x = be.mul(ensure_levels(be, xm, 3), denom_inv, "comp.round");
    y = be.mul(ensure_levels(be, ym, 3), denom_inv, "comp.round");
  }

  // Symmetrized output (x - y + 1) / 2: antisymmetric by construction and
  // exactly 0.5 on equal inputs.
  he::CipherVec out = be.add_scalar(be.sub(x, y), 1.0);
  out = ensure_levels(be, out, 3);
  return be.mul_scalar(out, 0.5, "comp.out");
}

he::CipherVec eeq_ni(const he::HEBackend& be, const he::CipherVec& a, const he::CipherVec& b,
                     const CompParams& p) {
  he::CipherVec c = comp(be, a, b, p);
  // 4*c*(1-c); comp(b,a) is 1-comp(a,b), which halves the depth.
  he::CipherVec c4 = be.mul_scalar(ensure_levels(be, c, 3), 4.0, "eeq_ni");
  he::CipherVec one_minus = be.sub_from_scalar(1.0, c);
  return be.mul(ensure_levels(be, c4, 2), ensure_levels(be, one_minus, 2), "eeq_ni");
}

int min_depth_estimate(const CompParams& p) {
  p.validate();
  // Normalization: s (1), Inv(d') (d'+1), half_inv (1), x0 (1) = d'+4.
  // Each round: m-power (log2 m), Inv(d) (d+1), combine (1).
  // Final symmetrization: one plaintext halving.
  return (p.d_prime + 4) + p.t * (log2_int(p.m) + p.d + 2) + 1;
}

}  // namespace pper::approx
