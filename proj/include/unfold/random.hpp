#pragma once

#include <cmath>
#include <cstdint>
#include <limits>
#include <numbers>
#include <random>

#include <boost/math/special_functions/erf.hpp>

namespace unfold {

inline constexpr double kInf = std::numeric_limits<double>::infinity();

inline double norm_pdf(double x) {
  return std::exp(-0.5 * x * x) / std::sqrt(2.0 * std::numbers::pi);
}

inline double norm_log_pdf(double x) {
  return -0.5 * x * x - 0.5 * std::log(2.0 * std::numbers::pi);
}

inline double norm_cdf(double x) { return 0.5 * std::erfc(-x / std::numbers::sqrt2); }

/// Upper tail 1 - Phi(x) without cancellation.
inline double norm_sf(double x) { return 0.5 * std::erfc(x / std::numbers::sqrt2); }

inline double norm_quantile(double p) {
  if (p <= 0.0) return -kInf;
  if (p >= 1.0) return kInf;
  return -std::numbers::sqrt2 * boost::math::erfc_inv(2.0 * p);
}

inline double logistic_cdf(double x) {
  return x >= 0 ? 1.0 / (1.0 + std::exp(-x)) : std::exp(x) / (1.0 + std::exp(x));
}

/// Per-chain random stream. Seeded through seed_seq so that (seed, stream)
/// pairs give unrelated sequences.
class Rng {
 public:
  explicit Rng(std::uint64_t seed, std::uint64_t stream = 0) { reseed(seed, stream); }

  void reseed(std::uint64_t seed, std::uint64_t stream = 0) {
    std::seed_seq seq{static_cast<std::uint32_t>(seed), static_cast<std::uint32_t>(seed >> 32),
                      static_cast<std::uint32_t>(stream),
                      static_cast<std::uint32_t>(stream >> 32), 0x5eedu};
    engine_.seed(seq);
    normal_.reset();
  }

  double normal() { return normal_(engine_); }
  double normal(double mean, double sd) { return mean + sd * normal_(engine_); }

  /// Uniform on the open interval (0, 1).
  double uniform() {
    double u;
    do {
      u = std::generate_canonical<double, 53>(engine_);
    } while (u <= 0.0);
    return u;
  }

  double exponential(double rate) { return -std::log(uniform()) / rate; }

  std::size_t index(std::size_t n) {
    return std::uniform_int_distribution<std::size_t>(0, n - 1)(engine_);
  }

  std::mt19937_64& engine() { return engine_; }

 private:
  std::mt19937_64 engine_;
  std::normal_distribution<double> normal_;
};

/// Draw from Normal(mean, sd^2) restricted to (lower, upper).
///
/// Inverse-CDF sampling in the bulk; for one-sided tails more than 4 sd out
/// the exponential rejection sampler of Robert (1995), or a uniform rejection
/// sampler when the tail interval is short.
inline double truncated_normal(double mean, double sd, double lower, double upper, Rng& rng) {
  if (!(sd > 0.0)) throw std::invalid_argument("truncated_normal: sd must be positive");
  if (!(lower < upper)) throw std::invalid_argument("truncated_normal: lower must be below upper");
  const double a = (lower - mean) / sd;
  const double b = (upper - mean) / sd;

  // Standardised draw restricted to (lo, hi) with lo >= 4.
  auto upper_tail = [&rng](double lo, double hi) {
    const double lambda = 0.5 * (lo + std::sqrt(lo * lo + 4.0));
    if (std::isfinite(hi) && 0.5 * (hi * hi - lo * lo) < 1.0) {
      for (;;) {
        const double x = lo + (hi - lo) * rng.uniform();
        if (std::log(rng.uniform()) < -0.5 * (x * x - lo * lo)) return x;
      }
    }
    for (;;) {
      const double x = lo + rng.exponential(lambda);
      if (x >= hi) continue;
      const double d = x - lambda;
      if (std::log(rng.uniform()) < -0.5 * d * d) return x;
    }
  };

  double x;
  if (a >= 4.0) {
    x = upper_tail(a, b);
  } else if (b <= -4.0) {
    x = -upper_tail(-b, -a);
  } else if (a >= 0.0) {
    const double pa = norm_sf(a), pb = norm_sf(b);
    x = -norm_quantile(pb + rng.uniform() * (pa - pb));
  } else {
    const double pa = norm_cdf(a), pb = norm_cdf(b);
    x = norm_quantile(pa + rng.uniform() * (pb - pa));
  }
  // Rounding in the quantile can land a hair outside a very narrow interval.
  if (x <= a) x = std::nextafter(a, kInf);
  if (x >= b) x = std::nextafter(b, -kInf);
  double out = mean + sd * x;
  if (out <= lower) out = std::nextafter(lower, kInf);
  if (out >= upper) out = std::nextafter(upper, -kInf);
  return out;
}

}  // namespace unfold
