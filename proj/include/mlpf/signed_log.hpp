#pragma once

#include <cmath>
#include <limits>
#include <stdexcept>

namespace mlpf {

// Signed log-magnitude scalar: value = sign * exp(log_abs). Keeps sums and
// differences of quantities like p(y_{1:1000}) representable; the ML
// unbiased estimator can be negative, so a bare log does not suffice.
// Canonical zero is {sign = 0, log_abs = -inf}.
struct SignedLog {
  int sign = 0;
  double log_abs = -std::numeric_limits<double>::infinity();

  static SignedLog zero() { return {}; }

  static SignedLog from_log(double log_value, int sign = +1) {
    if (sign == 0 || log_value == -std::numeric_limits<double>::infinity()) return zero();
    if (sign != 1 && sign != -1) throw std::invalid_argument("SignedLog: sign must be -1, 0, +1");
    return {sign, log_value};
  }

  static SignedLog from_value(double v) {
    if (v == 0.0) return zero();
    return {v > 0.0 ? +1 : -1, std::log(std::abs(v))};
  }

  bool is_zero() const { return sign == 0; }

  // sign * exp(log_abs); may over/underflow for extreme magnitudes.
  double value() const { return sign == 0 ? 0.0 : sign * std::exp(log_abs); }

  SignedLog negated() const { return {-sign, log_abs}; }

  friend SignedLog operator+(const SignedLog& a, const SignedLog& b) {
    if (a.sign == 0) return b;
    if (b.sign == 0) return a;
    const bool a_big = a.log_abs >= b.log_abs;
    const SignedLog& big = a_big ? a : b;
    const SignedLog& small = a_big ? b : a;
    const double d = small.log_abs - big.log_abs;  // <= 0
    if (a.sign == b.sign) return {a.sign, big.log_abs + std::log1p(std::exp(d))};
    if (d == 0.0) return zero();
    const double t = -std::expm1(d);  // 1 - exp(d) in (0, 1]
    return {big.sign, big.log_abs + std::log(t)};
  }

  friend SignedLog operator-(const SignedLog& a, const SignedLog& b) { return a + b.negated(); }

  friend SignedLog operator*(const SignedLog& a, const SignedLog& b) {
    if (a.sign == 0 || b.sign == 0) return zero();
    return {a.sign * b.sign, a.log_abs + b.log_abs};
  }
};

}  // namespace mlpf
