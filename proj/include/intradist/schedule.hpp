// Adaptive intra-distillation strength.
//
// For alpha > 1 the weight ramps as a power curve: alpha'(x) = alpha *
// (p*x/N)^gamma for x < N/p and alpha afterwards, with gamma = ln(1/alpha) /
// ln(p/q). The sentinels pin two anchors: alpha'(N/q) = 1 and alpha'(N/p) =
// alpha; q = alpha*p makes the ramp linear. For alpha <= 1 the schedule is
// the constant alpha. x counts optimizer updates; sentinels may be
// non-integer, the closed form is evaluated directly at integer x.
#pragma once

#include <cmath>
#include <cstdint>
#include <stdexcept>
#include <string>

namespace intradist {

struct AlphaSchedule {
  double alpha = 0.0;
  double sentinel_p = 5.0;
  double sentinel_q = 10.0;
  std::int64_t n_total = 1;

  bool adaptive() const { return alpha > 1.0; }

  void validate() const {
    if (!(alpha >= 0.0)) {
      throw std::invalid_argument("alpha must be >= 0, got " + std::to_string(alpha));
    }
    if (n_total < 1) {
      throw std::invalid_argument("total steps must be >= 1, got " +
                                  std::to_string(n_total));
    }
    if (adaptive() && !(sentinel_q > sentinel_p && sentinel_p > 0.0)) {
      throw std::invalid_argument(
          "sentinels must satisfy q > p > 0, got p = " + std::to_string(sentinel_p) +
          ", q = " + std::to_string(sentinel_q));
    }
  }
};

inline double gamma(const AlphaSchedule& s) {
  s.validate();
  if (!s.adaptive()) {
    throw std::logic_error("gamma is undefined for a constant schedule (alpha <= 1)");
  }
  return std::log(1.0 / s.alpha) / std::log(s.sentinel_p / s.sentinel_q);
}

inline double alpha_at(const AlphaSchedule& s, std::int64_t step) {
  s.validate();
  if (step < 0) {
    throw std::invalid_argument("schedule step must be >= 0, got " +
                                std::to_string(step));
  }
  if (!s.adaptive()) return s.alpha;
  const double x = static_cast<double>(step);
  const double n = static_cast<double>(s.n_total);
  if (x * s.sentinel_p >= n) return s.alpha;
  return s.alpha * std::pow(s.sentinel_p * x / n, gamma(s));
}

}  // namespace intradist
