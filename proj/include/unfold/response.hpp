#pragma once

#include <algorithm>
#include <array>
#include <cmath>
#include <limits>
#include <numeric>
#include <ostream>
#include <span>
#include <string>
#include <vector>

#include <boost/math/quadrature/gauss.hpp>
#include <boost/math/quadrature/gauss_kronrod.hpp>

#include "unfold/core.hpp"
#include "unfold/random.hpp"

namespace unfold {

/// Probability vector over categories 0..K.
struct CategoryProbs {
  std::vector<double> probs;

  std::size_t size() const { return probs.size(); }
  double operator[](std::size_t k) const { return probs[k]; }

  std::vector<double> cumulative() const {
    std::vector<double> c(probs.size());
    std::partial_sum(probs.begin(), probs.end(), c.begin());
    return c;
  }
};

class QuadratureError : public std::runtime_error {
 public:
  using std::runtime_error::runtime_error;
};

// ---------------------------------------------------------------------------
// GRM

inline double link_cdf(Link link, double x) {
  return link == Link::probit ? norm_cdf(x) : logistic_cdf(x);
}

/// G(alpha (beta - mu_k)) = G(tau_k + alpha beta).
inline double grm_cumulative(double beta, const GrmItem& item, int k) {
  if (k < 0 || k >= item.max_category()) {
    throw UserError("grm_cumulative: k = " + std::to_string(k) + " outside 0.." +
                    std::to_string(item.max_category() - 1));
  }
  return link_cdf(item.link(), item.cutpoints()[static_cast<std::size_t>(k)] + item.alpha() * beta);
}

inline CategoryProbs grm_probs(double beta, const GrmItem& item) {
  const int kmax = item.max_category();
  CategoryProbs out{std::vector<double>(static_cast<std::size_t>(kmax + 1))};
  double prev = 0.0;
  for (int k = 0; k < kmax; ++k) {
    const double c = grm_cumulative(beta, item, k);
    out.probs[k] = std::max(0.0, c - prev);
    prev = c;
  }
  out.probs[kmax] = std::max(0.0, 1.0 - prev);
  return out;
}

// ---------------------------------------------------------------------------
// GGUM

/// Evaluated in log space: each category carries two exponents that grow
/// linearly in beta, so the per-beta maximum is subtracted before exp().
inline CategoryProbs ggum_probs(double beta, const GgumItem& item) {
  const int kmax = item.max_category();
  const std::vector<double> tau = item.full_taus();
  std::vector<double> prefix(tau.size());
  std::partial_sum(tau.begin(), tau.end(), prefix.begin());

  const double x = beta - item.delta();
  const double a = item.alpha();
  const int top = 2 * kmax + 1;
  std::vector<double> e1(kmax + 1), e2(kmax + 1);
  double emax = -kInf;
  for (int k = 0; k <= kmax; ++k) {
    e1[k] = a * (k * x - prefix[k]);
    e2[k] = a * ((top - k) * x - prefix[top - k]);
    emax = std::max({emax, e1[k], e2[k]});
  }
  CategoryProbs out{std::vector<double>(kmax + 1)};
  double total = 0.0;
  for (int k = 0; k <= kmax; ++k) {
    out.probs[k] = std::exp(e1[k] - emax) + std::exp(e2[k] - emax);
    total += out.probs[k];
  }
  for (double& p : out.probs) p /= total;
  return out;
}

// ---------------------------------------------------------------------------
// OPUM
//
// With z_m ~ N(eta_m, 1) independent, the probability that option m attains
// the maximum is nu(m) = int phi(t - eta_m) prod_{m' != m} Phi(t - eta_m') dt.
// Every such integrand is negligible outside [max(eta) - h, max(eta) + h]
// (the bound is 2 Phi(-h) per component), so all components share one window.

struct QuadratureConfig {
  double half_width = 9.0;
  double abs_tol = 1e-10;
  unsigned max_depth = 12;
};

namespace detail {

inline double nu_integrand(double t, std::span<const double> eta, std::size_t m) {
  double v = norm_pdf(t - eta[m]);
  for (std::size_t s = 0; s < eta.size() && v > 0.0; ++s) {
    if (s != m) v *= norm_cdf(t - eta[s]);
  }
  return v;
}

inline CategoryProbs fold_twins(std::span<const double> nu) {
  const std::size_t kmax = nu.size() / 2;
  CategoryProbs out{std::vector<double>(kmax + 1)};
  out.probs[0] = nu[kmax];
  for (std::size_t k = 1; k <= kmax; ++k) out.probs[k] = nu[kmax - k] + nu[kmax + k];
  return out;
}

}  // namespace detail

/// Probability that each latent option is the argmax, by adaptive
/// Gauss-Kronrod quadrature. Throws QuadratureError when the error estimate
/// exceeds the absolute tolerance.
inline std::vector<double> argmax_probs(std::span<const double> eta, const QuadratureConfig& quad = {}) {
  const double top = *std::max_element(eta.begin(), eta.end());
  const double lo = top - quad.half_width, hi = top + quad.half_width;
  std::vector<double> nu(eta.size());
  for (std::size_t m = 0; m < eta.size(); ++m) {
    double err = 0.0;
    nu[m] = boost::math::quadrature::gauss_kronrod<double, 31>::integrate(
        [&](double t) { return detail::nu_integrand(t, eta, m); }, lo, hi, quad.max_depth, 1e-13,
        &err);
    if (!(err <= quad.abs_tol)) {
      throw QuadratureError("argmax quadrature did not reach tolerance: error estimate " +
                            std::to_string(err));
    }
  }
  return nu;
}

inline CategoryProbs opum_probs(double beta, const OpumItem& item, const QuadratureConfig& quad = {}) {
  std::vector<double> eta(item.width());
  item.linear_predictor(beta, eta);
  return detail::fold_twins(argmax_probs(eta, quad));
}

/// Fixed composite Gauss-Legendre rule over the same window as argmax_probs
/// (6 panels x 20 nodes). Used inside the sampler where probabilities are
/// needed for every cell; agreement with the adaptive rule is checked in tests.
class FastArgmax {
 public:
  static constexpr int kPanels = 6;
  static constexpr int kNodes = 20;

  explicit FastArgmax(double half_width = 9.0) : half_width_(half_width) {
    using rule = boost::math::quadrature::gauss<double, kNodes>;
    const auto& x = rule::abscissa();
    const auto& w = rule::weights();
    // Tabulated rules store the non-negative half of the symmetric nodes.
    std::vector<std::pair<double, double>> ref;
    for (std::size_t s = 0; s < x.size(); ++s) {
      ref.emplace_back(x[s], w[s]);
      if (x[s] != 0.0) ref.emplace_back(-x[s], w[s]);
    }
    const double panel = 2.0 * half_width_ / kPanels;
    for (int p = 0; p < kPanels; ++p) {
      const double mid = -half_width_ + panel * (p + 0.5);
      for (const auto& [xr, wr] : ref) {
        offsets_.push_back(mid + 0.5 * panel * xr);
        weights_.push_back(0.5 * panel * wr);
      }
    }
  }

  /// nu(m) for every option.
  void all(std::span<const double> eta, std::span<double> nu) const {
    const std::size_t n = eta.size();
    const double top = *std::max_element(eta.begin(), eta.end());
    std::fill(nu.begin(), nu.end(), 0.0);
    std::array<double, 64> cdf{}, prefix{}, suffix{};
    std::vector<double> heap;
    double* c = cdf.data();
    double* pre = prefix.data();
    double* suf = suffix.data();
    if (n + 1 > cdf.size()) {
      heap.resize(3 * (n + 1));
      c = heap.data();
      pre = c + n + 1;
      suf = pre + n + 1;
    }
    for (std::size_t q = 0; q < offsets_.size(); ++q) {
      const double t = top + offsets_[q];
      for (std::size_t s = 0; s < n; ++s) c[s] = norm_cdf(t - eta[s]);
      pre[0] = 1.0;
      for (std::size_t s = 0; s < n; ++s) pre[s + 1] = pre[s] * c[s];
      suf[n] = 1.0;
      for (std::size_t s = n; s-- > 0;) suf[s] = suf[s + 1] * c[s];
      for (std::size_t s = 0; s < n; ++s) {
        const double d = t - eta[s];
        if (d > 12.0 || d < -12.0) continue;
        nu[s] += weights_[q] * norm_pdf(d) * pre[s] * suf[s + 1];
      }
    }
  }

  /// Probability of category k (twins summed).
  double category(std::span<const double> eta, int k) const {
    const int kmax = static_cast<int>(eta.size() / 2);
    const double top = *std::max_element(eta.begin(), eta.end());
    const std::size_t m1 = static_cast<std::size_t>(kmax + k);
    const std::size_t m2 = static_cast<std::size_t>(kmax - k);
    double total = 0.0;
    for (std::size_t q = 0; q < offsets_.size(); ++q) {
      const double t = top + offsets_[q];
      const double d1 = t - eta[m1], d2 = t - eta[m2];
      const bool use1 = d1 > -12.0 && d1 < 12.0;
      const bool use2 = k != 0 && d2 > -12.0 && d2 < 12.0;
      if (!use1 && !use2) continue;
      double others = 1.0;
      for (std::size_t s = 0; s < eta.size(); ++s) {
        if (s != m1 && s != m2) others *= norm_cdf(t - eta[s]);
      }
      if (others == 0.0) continue;
      double v = 0.0;
      if (use1) v += norm_pdf(d1) * (k == 0 ? 1.0 : norm_cdf(d2));
      if (use2) v += norm_pdf(d2) * norm_cdf(d1);
      total += weights_[q] * v * others;
    }
    return total;
  }

 private:
  double half_width_;
  std::vector<double> offsets_;
  std::vector<double> weights_;
};

inline const FastArgmax& fast_argmax() {
  static const FastArgmax rule;
  return rule;
}

inline CategoryProbs opum_probs_fast(double beta, const OpumItem& item) {
  std::vector<double> eta(item.width()), nu(item.width());
  item.linear_predictor(beta, eta);
  fast_argmax().all(eta, nu);
  return detail::fold_twins(nu);
}

/// Probability of canonical category k for one subject under an OPUM item.
inline double opum_category_prob(double beta, const OpumItem& item, int k) {
  std::array<double, 64> buf{};
  std::vector<double> heap;
  std::span<double> eta;
  if (item.width() <= buf.size()) {
    eta = std::span<double>(buf.data(), item.width());
  } else {
    heap.resize(item.width());
    eta = heap;
  }
  item.linear_predictor(beta, eta);
  return fast_argmax().category(eta, k);
}

/// Twin-folded category of a latent vector: the argmax option m maps to |m|.
inline int argmax_category(std::span<const double> z) {
  const auto it = std::max_element(z.begin(), z.end());
  const int kmax = static_cast<int>(z.size() / 2);
  return std::abs(static_cast<int>(it - z.begin()) - kmax);
}

/// Direct simulation of the utility maximisation: the Monte Carlo oracle for
/// opum_probs.
inline CategoryProbs opum_probs_mc(double beta, const OpumItem& item, std::size_t n_draws,
                                   std::uint64_t seed) {
  if (n_draws == 0) throw UserError("opum_probs_mc: n_draws must be >= 1");
  Rng rng(seed, 0x6d63);
  std::vector<double> eta(item.width()), z(item.width());
  item.linear_predictor(beta, eta);
  std::vector<std::size_t> counts(static_cast<std::size_t>(item.max_category() + 1), 0);
  for (std::size_t r = 0; r < n_draws; ++r) {
    for (std::size_t s = 0; s < z.size(); ++s) z[s] = eta[s] + rng.normal();
    ++counts[static_cast<std::size_t>(argmax_category(z))];
  }
  CategoryProbs out{std::vector<double>(counts.size())};
  for (std::size_t k = 0; k < counts.size(); ++k) {
    out.probs[k] = static_cast<double>(counts[k]) / static_cast<double>(n_draws);
  }
  return out;
}

// ---------------------------------------------------------------------------
// Likelihood

inline constexpr double kProbFloor = 1e-300;

/// Item parameters for whichever model a likelihood is evaluated under.
struct ModelParams {
  ModelTag model = ModelTag::opum;
  std::vector<OpumItem> opum;
  std::vector<GrmItem> grm;
  std::vector<GgumItem> ggum;

  std::size_t n_items() const {
    switch (model) {
      case ModelTag::opum: return opum.size();
      case ModelTag::grm: return grm.size();
      case ModelTag::ggum: return ggum.size();
    }
    return 0;
  }
};

enum class ZetaMode { conditional, mixture };

struct LogLikelihood {
  double total = 0.0;
  std::vector<double> pointwise;  // I x J row-major; 0 for missing cells
  std::size_t n_floored = 0;      // cells whose probability hit kProbFloor
  std::vector<std::pair<std::size_t, std::size_t>> zero_cells;
};

/// Probability of an observed response; OPUM applies the item's zeta.
inline double cell_prob(double beta, const ModelParams& params, std::size_t j, int y) {
  switch (params.model) {
    case ModelTag::opum: {
      const OpumItem& it = params.opum[j];
      return opum_category_prob(beta, it, effective_response(y, it.max_category(), it.zeta()));
    }
    case ModelTag::grm: return grm_probs(beta, params.grm[j]).probs[static_cast<std::size_t>(y)];
    case ModelTag::ggum: return ggum_probs(beta, params.ggum[j]).probs[static_cast<std::size_t>(y)];
  }
  return 0.0;
}

/// Log-likelihood of a response matrix. In ZetaMode::conditional the OPUM
/// items' current zeta is used; ZetaMode::mixture averages each item's
/// likelihood over both scale directions with weight 1/2 (the per-item
/// pointwise entries then hold the conditional values and `total` the mixture).
///
/// A zero probability at an observed cell makes `total` -inf and the cell
/// is listed in `zero_cells`; pointwise values use the 1e-300 floor.
inline LogLikelihood log_likelihood(const ResponseMatrix& data, std::span<const double> betas,
                                    const ModelParams& params,
                                    ZetaMode mode = ZetaMode::conditional) {
  if (betas.size() != data.n_subjects() || params.n_items() != data.n_items()) {
    throw UserError("log_likelihood: parameter dimensions do not match the data");
  }
  LogLikelihood out;
  out.pointwise.assign(data.n_subjects() * data.n_items(), 0.0);
  bool has_zero = false;
  for (std::size_t i = 0; i < data.n_subjects(); ++i) {
    for (std::size_t j = 0; j < data.n_items(); ++j) {
      if (!data.observed(i, j)) continue;
      double p = cell_prob(betas[i], params, j, data.at(i, j));
      if (!(p > 0.0)) {
        has_zero = true;
        out.zero_cells.emplace_back(i, j);
      }
      if (!(p > kProbFloor)) {
        p = kProbFloor;
        ++out.n_floored;
      }
      out.pointwise[i * data.n_items() + j] = std::log(p);
    }
  }
  if (mode == ZetaMode::conditional || params.model != ModelTag::opum) {
    for (double v : out.pointwise) out.total += v;
  } else {
    for (std::size_t j = 0; j < data.n_items(); ++j) {
      OpumItem flipped = params.opum[j];
      flipped.set_zeta(!flipped.zeta());
      double same = 0.0, other = 0.0;
      for (std::size_t i = 0; i < data.n_subjects(); ++i) {
        if (!data.observed(i, j)) continue;
        same += out.pointwise[i * data.n_items() + j];
        const int k = effective_response(data.at(i, j), flipped.max_category(), flipped.zeta());
        other += std::log(std::max(kProbFloor, opum_category_prob(betas[i], flipped, k)));
      }
      const double hi = std::max(same, other);
      out.total += hi + std::log(0.5 * std::exp(same - hi) + 0.5 * std::exp(other - hi));
    }
  }
  if (has_zero) out.total = -kInf;
  return out;
}

// ---------------------------------------------------------------------------
// Response curves

struct CurveGrid {
  ModelTag model = ModelTag::opum;
  std::string item_label;
  std::vector<double> beta_grid;
  std::vector<CategoryProbs> probs;              // per grid point
  std::vector<std::vector<double>> cumulative;   // per grid point, Pr(y <= k)
};

struct CurveItem {
  ModelTag model = ModelTag::opum;
  OpumItem opum;
  GrmItem grm;
  GgumItem ggum;
};

inline CurveGrid response_curves(const CurveItem& item, std::span<const double> beta_grid,
                                 std::string label = "item1",
                                 const QuadratureConfig& quad = {}) {
  for (std::size_t g = 0; g < beta_grid.size(); ++g) {
    if (!std::isfinite(beta_grid[g])) throw UserError("response_curves: grid must be finite");
    if (g > 0 && beta_grid[g] < beta_grid[g - 1]) throw UserError("response_curves: grid must be sorted");
  }
  CurveGrid out;
  out.model = item.model;
  out.item_label = std::move(label);
  out.beta_grid.assign(beta_grid.begin(), beta_grid.end());
  for (double b : beta_grid) {
    CategoryProbs p;
    switch (item.model) {
      case ModelTag::opum: {
        p = opum_probs(b, item.opum, quad);
        if (item.opum.zeta()) std::reverse(p.probs.begin(), p.probs.end());
        break;
      }
      case ModelTag::grm: p = grm_probs(b, item.grm); break;
      case ModelTag::ggum: p = ggum_probs(b, item.ggum); break;
    }
    std::vector<double> cum = p.cumulative();
    for (std::size_t k = 1; k < cum.size(); ++k) cum[k] = std::max(cum[k], cum[k - 1]);
    out.probs.push_back(std::move(p));
    out.cumulative.push_back(std::move(cum));
  }
  return out;
}

/// Flat CSV: beta, model, item, k, prob, cum_prob.
inline void write_curve_csv(std::ostream& os, const std::vector<CurveGrid>& curves,
                            bool header = true) {
  if (header) os << "beta,model,item,k,prob,cum_prob\n";
  char buf[64];
  auto num = [&buf](double v) {
    std::snprintf(buf, sizeof buf, "%.10g", v);
    return std::string(buf);
  };
  for (const auto& c : curves) {
    for (std::size_t g = 0; g < c.beta_grid.size(); ++g) {
      for (std::size_t k = 0; k < c.probs[g].size(); ++k) {
        os << num(c.beta_grid[g]) << ',' << to_string(c.model) << ',' << c.item_label << ',' << k
           << ',' << num(c.probs[g][k]) << ',' << num(c.cumulative[g][k]) << '\n';
      }
    }
  }
}

}  // namespace unfold
