#pragma once

#include <algorithm>
#include <array>
#include <atomic>
#include <cmath>
#include <cstdint>
#include <exception>
#include <mutex>
#include <span>
#include <string>
#include <thread>
#include <utility>
#include <vector>

#include "unfold/core.hpp"
#include "unfold/random.hpp"
#include "unfold/response.hpp"

namespace unfold {

struct SamplerConfig {
  std::size_t n_iterations = 3000;
  std::size_t burn_in = 2000;
  std::size_t thin = 1;
  std::size_t n_chains = 4;
  std::uint64_t seed = 1;
  std::size_t mh_period = 50;
  double flip_proposal_var = 0.75;
  PriorConfig prior;
  bool enable_zeta = false;
  // Item-only sweeps per orientation when choosing each item's starting
  // zeta (0 starts every item at zeta = 0).
  std::size_t zeta_start_sweeps = 200;
  bool enable_beta_flip = true;
  // Location and scale moves along the directions the likelihood cannot see.
  bool enable_rescale = true;
  // Interleave conditionals given the centred utilities z - eta.
  bool enable_ancillary = true;
  // Start from the prior-shaped state instead of the response scores.
  bool prior_init = false;
  int alpha_sweeps = 3;
  // Store pointwise log-likelihood on every n-th stored draw (0 = never).
  std::size_t loglik_every = 0;
  std::size_t threads = 1;

  void validate() const {
    if (n_iterations == 0) throw UserError("sampler: n_iterations must be positive");
    if (!(burn_in < n_iterations)) throw UserError("sampler: burn_in must be below n_iterations");
    if (thin < 1) throw UserError("sampler: thin must be >= 1");
    if (n_chains < 1) throw UserError("sampler: n_chains must be >= 1");
    if (mh_period < 1) throw UserError("sampler: mh_period must be >= 1");
    if (!(flip_proposal_var > 0.0)) throw UserError("sampler: flip_proposal_var must be positive");
    if (alpha_sweeps < 1) throw UserError("sampler: alpha_sweeps must be >= 1");
    prior.validate();
  }

  /// Run shape used for the application: 4 chains, 200k burn-in, thin 10,
  /// 10k saved draws per chain.
  static SamplerConfig paper_mode() {
    SamplerConfig c;
    c.n_chains = 4;
    c.burn_in = 200000;
    c.thin = 10;
    c.n_iterations = c.burn_in + 10000 * c.thin;
    c.enable_rescale = false;
    c.enable_ancillary = false;
    c.prior_init = true;
    c.zeta_start_sweeps = 0;
    return c;
  }

  std::size_t n_stored() const { return (n_iterations - burn_in) / thin; }
};

/// Normal full conditional of a scalar: mean and variance.
struct NormalMoments {
  double mean = 0.0;
  double var = 1.0;
};

// ---------------------------------------------------------------------------
// Latent utilities

namespace detail {

inline double max_excluding(std::span<const double> z, std::size_t a, std::size_t b) {
  double m = -kInf;
  for (std::size_t s = 0; s < z.size(); ++s) {
    if (s != a && s != b) m = std::max(m, z[s]);
  }
  return m;
}

}  // namespace detail

/// One Gibbs sweep over the coordinates of a single cell's latent vector,
/// keeping the argmax inside the twin set of category k.
inline void sweep_latent_cell(std::span<double> z, std::span<const double> eta, int k, Rng& rng) {
  const std::size_t kmax = z.size() / 2;
  const std::size_t hi = kmax + static_cast<std::size_t>(k);
  const std::size_t lo = kmax - static_cast<std::size_t>(k);
  for (std::size_t s = 0; s < z.size(); ++s) {
    if (s != hi && s != lo) {
      z[s] = truncated_normal(eta[s], 1.0, -kInf, std::max(z[lo], z[hi]), rng);
      continue;
    }
    const std::size_t twin = s == hi ? lo : hi;
    const double rest = detail::max_excluding(z, s, twin);
    if (twin != s && z[twin] > rest) {
      z[s] = eta[s] + rng.normal();
    } else {
      z[s] = truncated_normal(eta[s], 1.0, rest, kInf, rng);
    }
  }
}

inline void check_latent_cell(std::span<const double> z, int k, std::size_t i, std::size_t j) {
  if (argmax_category(z) != k) {
    throw InvariantError("latent argmax left its twin set at cell (" + std::to_string(i) + ", " +
                         std::to_string(j) + ")");
  }
}

/// Fresh latent vector for one cell given eta and category k. Exact rejection
/// from Normal(eta, I) when the category is not rare; otherwise a consistent
/// start followed by Gibbs sweeps.
inline void redraw_latent_cell(std::span<double> z, std::span<const double> eta, int k, Rng& rng,
                               int max_tries = 200, int fallback_sweeps = 20) {
  for (int attempt = 0; attempt < max_tries; ++attempt) {
    for (std::size_t s = 0; s < z.size(); ++s) z[s] = eta[s] + rng.normal();
    if (argmax_category(z) == k) return;
  }
  const std::size_t kmax = z.size() / 2;
  const std::size_t hi = kmax + static_cast<std::size_t>(k);
  const std::size_t lo = kmax - static_cast<std::size_t>(k);
  const std::size_t win = eta[hi] >= eta[lo] ? hi : lo;
  for (std::size_t s = 0; s < z.size(); ++s) z[s] = eta[s] + rng.normal();
  z[win] = detail::max_excluding(z, win, win) + rng.exponential(1.0);
  for (int sweep = 0; sweep < fallback_sweeps; ++sweep) sweep_latent_cell(z, eta, k, rng);
}

inline int state_category(const ChainState& state, const ResponseMatrix& data, std::size_t i,
                          std::size_t j) {
  const OpumItem& it = state.items[j];
  return effective_response(data.at(i, j), it.max_category(), it.zeta());
}

/// Gibbs update of every latent vector. Missing cells are refreshed from
/// Normal(eta, I).
inline void sample_z(ChainState& state, const ResponseMatrix& data, Rng& rng) {
  std::vector<double> eta;
  for (std::size_t i = 0; i < data.n_subjects(); ++i) {
    for (std::size_t j = 0; j < data.n_items(); ++j) {
      auto z = state.latent(i, j);
      eta.resize(z.size());
      state.items[j].linear_predictor(state.betas[i], eta);
      if (!data.observed(i, j)) {
        for (std::size_t s = 0; s < z.size(); ++s) z[s] = eta[s] + rng.normal();
        continue;
      }
      const int k = state_category(state, data, i, j);
      sweep_latent_cell(z, eta, k, rng);
      check_latent_cell(z, k, i, j);
    }
  }
}

inline void redraw_subject_latents(ChainState& state, const ResponseMatrix& data, std::size_t i,
                                   Rng& rng) {
  std::vector<double> eta;
  for (std::size_t j = 0; j < data.n_items(); ++j) {
    auto z = state.latent(i, j);
    eta.resize(z.size());
    state.items[j].linear_predictor(state.betas[i], eta);
    if (!data.observed(i, j)) {
      for (std::size_t s = 0; s < z.size(); ++s) z[s] = eta[s] + rng.normal();
      continue;
    }
    const int k = state_category(state, data, i, j);
    redraw_latent_cell(z, eta, k, rng);
    check_latent_cell(z, k, i, j);
  }
}

inline void redraw_item_latents(ChainState& state, const ResponseMatrix& data, std::size_t j,
                                Rng& rng) {
  std::vector<double> eta(state.layout.width(j));
  for (std::size_t i = 0; i < data.n_subjects(); ++i) {
    auto z = state.latent(i, j);
    state.items[j].linear_predictor(state.betas[i], eta);
    if (!data.observed(i, j)) {
      for (std::size_t s = 0; s < z.size(); ++s) z[s] = eta[s] + rng.normal();
      continue;
    }
    const int k = state_category(state, data, i, j);
    redraw_latent_cell(z, eta, k, rng);
    check_latent_cell(z, k, i, j);
  }
}

// ---------------------------------------------------------------------------
// Conjugate steps

inline NormalMoments beta_conditional(const ChainState& state, const ResponseMatrix& data,
                                      std::size_t i) {
  double prec = 1.0, lin = 0.0;
  for (std::size_t j = 0; j < data.n_items(); ++j) {
    if (!data.observed(i, j)) continue;
    const auto& a = state.items[j].alphas();
    const auto& mu = state.items[j].mus();
    const auto z = state.latent(i, j);
    for (std::size_t s = 0; s < a.size(); ++s) {
      prec += a[s] * a[s];
      lin += a[s] * (z[s] + a[s] * mu[s]);
    }
  }
  return {lin / prec, 1.0 / prec};
}

inline void sample_beta(ChainState& state, const ResponseMatrix& data, Rng& rng) {
  for (std::size_t i = 0; i < data.n_subjects(); ++i) {
    const NormalMoments m = beta_conditional(state, data, i);
    state.betas[i] = rng.normal(m.mean, std::sqrt(m.var));
  }
}

/// Untruncated conditional of each alpha_{j,m}, storage order; the center
/// entry is left at mean 0, variance 0.
inline std::vector<NormalMoments> alpha_conditional(const ChainState& state,
                                                    const ResponseMatrix& data, std::size_t j,
                                                    const PriorConfig& prior) {
  const OpumItem& it = state.items[j];
  const std::size_t w = it.width(), kmax = w / 2;
  std::vector<double> ss(w, 0.0), sz(w, 0.0);
  for (std::size_t i = 0; i < data.n_subjects(); ++i) {
    if (!data.observed(i, j)) continue;
    const auto z = state.latent(i, j);
    for (std::size_t s = 0; s < w; ++s) {
      const double d = state.betas[i] - it.mus()[s];
      ss[s] += d * d;
      sz[s] += d * z[s];
    }
  }
  std::vector<NormalMoments> out(w, NormalMoments{0.0, 0.0});
  for (std::size_t s = 0; s < w; ++s) {
    if (s == kmax) continue;
    const double var = 1.0 / (1.0 / prior.kappa_sq + ss[s]);
    out[s] = {var * sz[s], var};
  }
  return out;
}

/// Coordinate-wise Gibbs on the order polytope; each coordinate is a
/// univariate truncated normal between its neighbours.
inline void sample_alpha(ChainState& state, const ResponseMatrix& data, std::size_t j,
                         const PriorConfig& prior, Rng& rng, int sweeps = 3) {
  const std::vector<NormalMoments> mom = alpha_conditional(state, data, j, prior);
  auto& a = state.items[j].mutable_alphas();
  const std::size_t w = a.size(), kmax = w / 2;
  for (int sweep = 0; sweep < sweeps; ++sweep) {
    for (std::size_t s = 0; s < w; ++s) {
      if (s == kmax) continue;
      const double lower = s == 0 ? -kInf : a[s - 1];
      const double upper = s + 1 == w ? kInf : a[s + 1];
      if (!(lower < upper)) {
        throw InvariantError("alpha update: empty truncation interval for item " + std::to_string(j));
      }
      a[s] = truncated_normal(mom[s].mean, std::sqrt(mom[s].var), lower, upper, rng);
    }
  }
  if (!state.items[j].in_order_polytope()) {
    throw InvariantError("alpha update left the order polytope for item " + std::to_string(j));
  }
}

inline std::vector<NormalMoments> mu_conditional(const ChainState& state, const ResponseMatrix& data,
                                                 std::size_t j, const PriorConfig& prior) {
  const OpumItem& it = state.items[j];
  const std::size_t w = it.width(), kmax = w / 2;
  const int K = it.max_category();
  std::vector<double> sz(w, 0.0);
  double sb = 0.0;
  std::size_t n = 0;
  for (std::size_t i = 0; i < data.n_subjects(); ++i) {
    if (!data.observed(i, j)) continue;
    const auto z = state.latent(i, j);
    for (std::size_t s = 0; s < w; ++s) sz[s] += z[s];
    sb += state.betas[i];
    ++n;
  }
  std::vector<NormalMoments> out(w, NormalMoments{0.0, 0.0});
  for (std::size_t s = 0; s < w; ++s) {
    if (s == kmax) continue;
    const double a = it.alphas()[s];
    const double var = 1.0 / (1.0 / prior.omega_sq + static_cast<double>(n) * a * a);
    const double ups = prior.upsilon(static_cast<int>(s) - K);
    out[s] = {var * (ups / prior.omega_sq + a * (a * sb - sz[s])), var};
  }
  return out;
}

inline void sample_mu(ChainState& state, const ResponseMatrix& data, std::size_t j,
                      const PriorConfig& prior, Rng& rng) {
  const std::vector<NormalMoments> mom = mu_conditional(state, data, j, prior);
  auto& mu = state.items[j].mutable_mus();
  for (std::size_t s = 0; s < mu.size(); ++s) {
    if (s == mu.size() / 2) continue;
    mu[s] = rng.normal(mom[s].mean, std::sqrt(mom[s].var));
  }
}

// ---------------------------------------------------------------------------
// Ancillary moves
//
// Writing z = eta + e with e ~ Normal(0, I) independent of the parameters, a
// parameter's conditional given e is its prior restricted to the values that
// keep every argmax in its twin set. Alternating these with the conditionals
// given z lets weakly informed parameters take large steps.

namespace detail {

using IntervalSet = std::vector<std::pair<double, double>>;

inline IntervalSet intersect(const IntervalSet& a, const IntervalSet& b) {
  IntervalSet out;
  std::size_t p = 0, q = 0;
  while (p < a.size() && q < b.size()) {
    const double lo = std::max(a[p].first, b[q].first);
    const double hi = std::min(a[p].second, b[q].second);
    if (lo < hi) out.emplace_back(lo, hi);
    if (a[p].second < b[q].second) ++p; else ++q;
  }
  return out;
}

/// Values of x where the upper envelope of the lines slope[s] x + icpt[s]
/// is attained by line lo or hi. Slopes must be strictly increasing.
inline IntervalSet envelope_segments(std::span<const double> slope, std::span<const double> icpt,
                                     std::size_t lo, std::size_t hi) {
  auto cross = [&](std::size_t u, std::size_t v) {
    return (icpt[u] - icpt[v]) / (slope[v] - slope[u]);
  };
  std::vector<std::size_t> hull;
  for (std::size_t s = 0; s < slope.size(); ++s) {
    while (hull.size() >= 2 &&
           cross(hull[hull.size() - 2], s) <= cross(hull[hull.size() - 2], hull.back())) {
      hull.pop_back();
    }
    hull.push_back(s);
  }
  IntervalSet out;
  for (std::size_t h = 0; h < hull.size(); ++h) {
    if (hull[h] != lo && hull[h] != hi) continue;
    const double left = h == 0 ? -kInf : cross(hull[h - 1], hull[h]);
    const double right = h + 1 == hull.size() ? kInf : cross(hull[h], hull[h + 1]);
    if (left < right) out.emplace_back(left, right);
  }
  return out;
}

/// Range of increments d such that z[s] + d keeps the argmax of z in the
/// twin set of category k.
inline std::pair<double, double> latent_slack(std::span<const double> z, std::size_t s, int k) {
  const std::size_t kmax = z.size() / 2;
  const std::size_t hi = kmax + static_cast<std::size_t>(k);
  const std::size_t lo = kmax - static_cast<std::size_t>(k);
  if (s != lo && s != hi) return {-kInf, std::max(z[lo], z[hi]) - z[s]};
  const std::size_t twin = s == hi ? lo : hi;
  const double rest = max_excluding(z, s, twin);
  if (twin != s && z[twin] > rest) return {-kInf, kInf};
  return {rest - z[s], kInf};
}

/// Normal(mean, sd^2) restricted to a union of disjoint intervals. Returns
/// false when every piece has negligible mass.
inline bool draw_on_union(const IntervalSet& set, double mean, double sd, Rng& rng, double& out) {
  std::vector<double> mass(set.size());
  double total = 0.0;
  for (std::size_t p = 0; p < set.size(); ++p) {
    const double a = (set[p].first - mean) / sd, b = (set[p].second - mean) / sd;
    mass[p] = a > 0.0 ? norm_sf(a) - norm_sf(b) : norm_cdf(b) - norm_cdf(a);
    total += mass[p];
  }
  if (!(total > 0.0)) return false;
  double u = rng.uniform() * total;
  std::size_t p = 0;
  while (p + 1 < set.size() && u >= mass[p]) u -= mass[p++];
  out = truncated_normal(mean, sd, set[p].first, set[p].second, rng);
  return true;
}

inline bool cells_consistent(const ChainState& state, const ResponseMatrix& data, std::size_t i) {
  for (std::size_t j = 0; j < data.n_items(); ++j) {
    if (data.observed(i, j) && argmax_category(state.latent(i, j)) != state_category(state, data, i, j)) {
      return false;
    }
  }
  return true;
}

}  // namespace detail

/// beta_i given e: its prior on the set where every observed argmax stays put.
inline void ancillary_beta(ChainState& state, const ResponseMatrix& data, std::size_t i, Rng& rng) {
  const double beta = state.betas[i];
  detail::IntervalSet feasible{{-kInf, kInf}};
  std::vector<double> icpt;
  for (std::size_t j = 0; j < data.n_items() && !feasible.empty(); ++j) {
    if (!data.observed(i, j)) continue;
    const OpumItem& it = state.items[j];
    const auto z = state.latent(i, j);
    const auto& a = it.alphas();
    icpt.resize(z.size());
    for (std::size_t s = 0; s < z.size(); ++s) icpt[s] = z[s] - a[s] * beta;
    const auto k = static_cast<std::size_t>(state_category(state, data, i, j));
    const std::size_t kmax = z.size() / 2;
    feasible = detail::intersect(feasible, detail::envelope_segments(a, icpt, kmax - k, kmax + k));
  }
  double proposal = beta;
  if (!detail::draw_on_union(feasible, 0.0, 1.0, rng, proposal)) return;
  const double step = proposal - beta;
  auto shift = [&](double d) {
    for (std::size_t j = 0; j < data.n_items(); ++j) {
      auto z = state.latent(i, j);
      const auto& a = state.items[j].alphas();
      for (std::size_t s = 0; s < z.size(); ++s) z[s] += a[s] * d;
    }
  };
  shift(step);
  state.betas[i] = proposal;
  // A draw that lands within rounding of a breakpoint is undone.
  if (!detail::cells_consistent(state, data, i)) {
    shift(-step);
    state.betas[i] = beta;
  }
}

/// alpha_{j,s} given e: truncated prior between its neighbours and the
/// bounds implied by every observed cell of item j.
inline void ancillary_alpha(ChainState& state, const ResponseMatrix& data, std::size_t j,
                            std::size_t s, const PriorConfig& prior, Rng& rng) {
  OpumItem& it = state.items[j];
  auto& a = it.mutable_alphas();
  const double mu = it.mus()[s];
  double lower = s == 0 ? -kInf : a[s - 1];
  double upper = s + 1 == a.size() ? kInf : a[s + 1];
  for (std::size_t i = 0; i < data.n_subjects(); ++i) {
    if (!data.observed(i, j)) continue;
    const double d = state.betas[i] - mu;
    if (d == 0.0) continue;
    const auto [dn, up] = detail::latent_slack(state.latent(i, j), s, state_category(state, data, i, j));
    // increment of z is (alpha' - alpha) d
    const double x1 = a[s] + dn / d, x2 = a[s] + up / d;
    lower = std::max(lower, d > 0.0 ? x1 : x2);
    upper = std::min(upper, d > 0.0 ? x2 : x1);
  }
  if (!(lower < upper)) return;
  const double proposal = truncated_normal(0.0, std::sqrt(prior.kappa_sq), lower, upper, rng);
  const double step = proposal - a[s];
  for (std::size_t i = 0; i < data.n_subjects(); ++i) {
    state.latent(i, j)[s] += step * (state.betas[i] - mu);
  }
  a[s] = proposal;
}

/// mu_{j,s} given e; every cell's z[s] moves by -alpha_s times the step.
inline void ancillary_mu(ChainState& state, const ResponseMatrix& data, std::size_t j,
                         std::size_t s, const PriorConfig& prior, Rng& rng) {
  OpumItem& it = state.items[j];
  const double alpha = it.alphas()[s];
  if (alpha == 0.0) return;
  auto& mu = it.mutable_mus();
  double lower = -kInf, upper = kInf;
  for (std::size_t i = 0; i < data.n_subjects(); ++i) {
    if (!data.observed(i, j)) continue;
    const auto [dn, up] = detail::latent_slack(state.latent(i, j), s, state_category(state, data, i, j));
    const double x1 = mu[s] - dn / alpha, x2 = mu[s] - up / alpha;
    lower = std::max(lower, alpha > 0.0 ? x2 : x1);
    upper = std::min(upper, alpha > 0.0 ? x1 : x2);
  }
  if (!(lower < upper)) return;
  const int K = it.max_category();
  const double proposal = truncated_normal(prior.upsilon(static_cast<int>(s) - K),
                                           std::sqrt(prior.omega_sq), lower, upper, rng);
  const double step = proposal - mu[s];
  for (std::size_t i = 0; i < data.n_subjects(); ++i) state.latent(i, j)[s] -= alpha * step;
  mu[s] = proposal;
}

inline void ancillary_item(ChainState& state, const ResponseMatrix& data, std::size_t j,
                           const PriorConfig& prior, Rng& rng) {
  const std::size_t w = state.items[j].width();
  for (std::size_t s = 0; s < w; ++s) {
    if (s == w / 2) continue;
    ancillary_alpha(state, data, j, s, prior, rng);
    ancillary_mu(state, data, j, s, prior, rng);
  }
}

// ---------------------------------------------------------------------------
// Affine moves
//
// beta -> a + b beta, mu -> a + b mu, alpha -> alpha / b (b > 0) leaves every
// eta unchanged, so z stays consistent and only the priors see the move.

inline void apply_affine(ChainState& state, double shift, double scale) {
  for (double& b : state.betas) b = shift + scale * b;
  for (auto& it : state.items) {
    const std::size_t c = it.width() / 2;
    auto& a = it.mutable_alphas();
    auto& mu = it.mutable_mus();
    for (std::size_t s = 0; s < it.width(); ++s) {
      if (s == c) continue;
      a[s] /= scale;
      mu[s] = shift + scale * mu[s];
    }
  }
}

/// Exact conditional of the shift a given everything else (translations have
/// unit Jacobian).
inline NormalMoments shift_conditional(const ChainState& state, const PriorConfig& prior) {
  double prec = static_cast<double>(state.betas.size()), lin = 0.0;
  for (double b : state.betas) lin -= b;
  for (const auto& it : state.items) {
    const int K = it.max_category();
    for (int m = -K; m <= K; ++m) {
      if (m == 0) continue;
      prec += 1.0 / prior.omega_sq;
      lin -= (it.mu(m) - prior.upsilon(m)) / prior.omega_sq;
    }
  }
  return {lin / prec, 1.0 / prec};
}

inline void sample_shift(ChainState& state, const PriorConfig& prior, Rng& rng) {
  const NormalMoments m = shift_conditional(state, prior);
  apply_affine(state, rng.normal(m.mean, std::sqrt(m.var)), 1.0);
}

/// Log acceptance ratio of scaling by b, Jacobian b^I included.
inline double scale_log_ratio(const ChainState& state, const PriorConfig& prior, double scale) {
  double sb = 0.0, dmu = 0.0, sa = 0.0;
  for (double b : state.betas) sb += b * b;
  for (const auto& it : state.items) {
    const int K = it.max_category();
    for (int m = -K; m <= K; ++m) {
      if (m == 0) continue;
      const double u = prior.upsilon(m), mu = it.mu(m);
      dmu += (scale * mu - u) * (scale * mu - u) - (mu - u) * (mu - u);
      sa += it.alpha(m) * it.alpha(m);
    }
  }
  const double n = static_cast<double>(state.betas.size());
  return -0.5 * (scale * scale - 1.0) * sb - 0.5 * dmu / prior.omega_sq -
         0.5 * sa * (1.0 / (scale * scale) - 1.0) / prior.kappa_sq + n * std::log(scale);
}

/// Random walk on log b; the step is symmetric in log b.
inline bool mh_scale(ChainState& state, const PriorConfig& prior, Rng& rng) {
  const double sd = 1.5 / std::sqrt(2.0 * static_cast<double>(state.betas.size()) + 2.0);
  const double scale = std::exp(rng.normal(0.0, sd));
  if (std::log(rng.uniform()) >= scale_log_ratio(state, prior, scale)) return false;
  apply_affine(state, 0.0, scale);
  return true;
}

// ---------------------------------------------------------------------------
// Prior draws

/// Exact draw of alpha from Normal(0, kappa^2 I) restricted to the order
/// polytope: order statistics of half-normals on each side of the center.
inline std::vector<double> draw_alpha_prior(int max_category, const PriorConfig& prior, Rng& rng,
                                            double min_gap = 0.0) {
  const std::size_t K = static_cast<std::size_t>(max_category);
  const double sd = std::sqrt(prior.kappa_sq);
  std::vector<double> pos(K), neg(K);
  for (auto& v : pos) v = std::abs(rng.normal()) * sd;
  for (auto& v : neg) v = -std::abs(rng.normal()) * sd;
  std::sort(pos.begin(), pos.end());
  std::sort(neg.begin(), neg.end());
  if (min_gap > 0.0) {
    double prev = 0.0;
    for (auto& v : pos) prev = v = std::max(v, prev + min_gap);
    prev = 0.0;
    for (auto it = neg.rbegin(); it != neg.rend(); ++it) prev = *it = std::min(*it, prev - min_gap);
  }
  std::vector<double> a(2 * K + 1, 0.0);
  for (std::size_t s = 0; s < K; ++s) {
    a[s] = neg[s];
    a[K + 1 + s] = pos[s];
  }
  return a;
}

inline std::vector<double> draw_mu_prior(int max_category, const PriorConfig& prior, Rng& rng) {
  std::vector<double> mu(static_cast<std::size_t>(2 * max_category + 1), 0.0);
  const double sd = std::sqrt(prior.omega_sq);
  for (int m = -max_category; m <= max_category; ++m) {
    if (m != 0) mu[static_cast<std::size_t>(m + max_category)] = rng.normal(prior.upsilon(m), sd);
  }
  return mu;
}

inline OpumItem draw_item_prior(int max_category, const PriorConfig& prior, Rng& rng,
                                bool zeta = false) {
  auto a = draw_alpha_prior(max_category, prior, rng);
  auto mu = draw_mu_prior(max_category, prior, rng);
  return OpumItem(std::move(a), std::move(mu), zeta);
}

// ---------------------------------------------------------------------------
// Metropolis-Hastings moves

/// Log of the product of theta ratios over item j's observed cells when the
/// item is replaced by `proposed`.
inline double zeta_flip_log_ratio(const ChainState& state, const ResponseMatrix& data, std::size_t j,
                                  const OpumItem& proposed) {
  const OpumItem& cur = state.items[j];
  double lr = 0.0;
  for (std::size_t i = 0; i < data.n_subjects(); ++i) {
    if (!data.observed(i, j)) continue;
    const int y = data.at(i, j);
    const double pn = opum_category_prob(state.betas[i], proposed,
                                         effective_response(y, proposed.max_category(), proposed.zeta()));
    const double pc = opum_category_prob(state.betas[i], cur,
                                         effective_response(y, cur.max_category(), cur.zeta()));
    lr += std::log(std::max(pn, kProbFloor)) - std::log(std::max(pc, kProbFloor));
  }
  return lr;
}

/// Proposes zeta' = 1 - zeta with (alpha', mu') from the prior. The proposal
/// is the prior, so the acceptance ratio reduces to the likelihood ratio.
inline bool mh_flip_zeta(ChainState& state, const ResponseMatrix& data, std::size_t j,
                         const PriorConfig& prior, Rng& rng) {
  const OpumItem& cur = state.items[j];
  OpumItem proposed = draw_item_prior(cur.max_category(), prior, rng, !cur.zeta());
  const double lr = zeta_flip_log_ratio(state, data, j, proposed);
  if (std::log(rng.uniform()) >= lr) return false;
  state.items[j] = std::move(proposed);
  redraw_item_latents(state, data, j, rng);
  return true;
}

inline double beta_flip_log_ratio(const ChainState& state, const ResponseMatrix& data, std::size_t i,
                                  double proposed) {
  const double cur = state.betas[i];
  double lr = norm_log_pdf(proposed) - norm_log_pdf(cur);
  for (std::size_t j = 0; j < data.n_items(); ++j) {
    if (!data.observed(i, j)) continue;
    const OpumItem& it = state.items[j];
    const int k = effective_response(data.at(i, j), it.max_category(), it.zeta());
    lr += std::log(std::max(opum_category_prob(proposed, it, k), kProbFloor)) -
          std::log(std::max(opum_category_prob(cur, it, k), kProbFloor));
  }
  return lr;
}

/// Proposes beta' ~ Normal(-beta, lambda^2). The proposal is symmetric under
/// the swap beta <-> beta', so only likelihood and prior ratios remain.
inline bool mh_flip_beta(ChainState& state, const ResponseMatrix& data, std::size_t i,
                         double proposal_var, Rng& rng) {
  const double proposed = rng.normal(-state.betas[i], std::sqrt(proposal_var));
  const double lr = beta_flip_log_ratio(state, data, i, proposed);
  if (std::log(rng.uniform()) >= lr) return false;
  state.betas[i] = proposed;
  redraw_subject_latents(state, data, i, rng);
  return true;
}

// ---------------------------------------------------------------------------
// Chains

struct MoveCounts {
  std::size_t zeta_accepted = 0, zeta_proposed = 0;
  std::size_t beta_flip_accepted = 0, beta_flip_proposed = 0;
};

/// Standardised mean of y / K_j over each subject's observed cells; 0 for
/// subjects with no observed cells.
inline std::vector<double> response_scores(const ResponseMatrix& data) {
  std::vector<double> score(data.n_subjects(), 0.0);
  std::vector<bool> has(data.n_subjects(), false);
  double sum = 0.0, n = 0.0;
  for (std::size_t i = 0; i < data.n_subjects(); ++i) {
    double s = 0.0, c = 0.0;
    for (std::size_t j = 0; j < data.n_items(); ++j) {
      if (!data.observed(i, j)) continue;
      s += static_cast<double>(data.at(i, j)) / data.max_category(j);
      c += 1.0;
    }
    if (c == 0.0) continue;
    score[i] = s / c;
    has[i] = true;
    sum += score[i];
    n += 1.0;
  }
  if (n < 2.0) return std::vector<double>(data.n_subjects(), 0.0);
  const double mean = sum / n;
  double ss = 0.0;
  for (std::size_t i = 0; i < score.size(); ++i) {
    if (has[i]) ss += (score[i] - mean) * (score[i] - mean);
  }
  const double sd = std::sqrt(ss / (n - 1.0));
  for (std::size_t i = 0; i < score.size(); ++i) {
    score[i] = has[i] && sd > 0.0 ? (score[i] - mean) / sd : 0.0;
  }
  return score;
}

/// Log-likelihood of item j's observed cells at the current state.
inline double item_loglik(const ChainState& state, const ResponseMatrix& data, std::size_t j) {
  double ll = 0.0;
  for (std::size_t i = 0; i < data.n_subjects(); ++i) {
    if (!data.observed(i, j)) continue;
    const double p = opum_category_prob(state.betas[i], state.items[j], state_category(state, data, i, j));
    ll += std::log(std::max(p, kProbFloor));
  }
  return ll;
}

/// Starting orientation of item j. Short item-only runs under each zeta,
/// given the current traits, give mean log-likelihoods l0 and l1; zeta is
/// then drawn with Pr(zeta = 1) = 1 / (1 + exp(l0 - l1)) and the item starts
/// from that run's last state. Items that fit about equally either way start
/// at random, so chains disagree instead of all agreeing by construction.
inline void choose_start_zeta(ChainState& state, const ResponseMatrix& data, std::size_t j,
                              const PriorConfig& prior, Rng& rng, std::size_t sweeps) {
  const int K = data.max_category(j);
  std::vector<double> psi(static_cast<std::size_t>(2 * K + 1));
  for (int m = -K; m <= K; ++m) psi[static_cast<std::size_t>(m + K)] = 0.5 * m;
  std::array<OpumItem, 2> end;
  std::array<double, 2> mean_ll{};
  for (int c = 0; c < 2; ++c) {
    state.items[j] = OpumItem::from_psi(psi, c == 1);
    double total = 0.0;
    for (std::size_t t = 0; t < sweeps; ++t) {
      redraw_item_latents(state, data, j, rng);
      sample_alpha(state, data, j, prior, rng, 3);
      sample_mu(state, data, j, prior, rng);
      ancillary_item(state, data, j, prior, rng);
      if (2 * t >= sweeps) total += item_loglik(state, data, j);
    }
    mean_ll[c] = total / static_cast<double>(sweeps - sweeps / 2);
    end[c] = state.items[j];
  }
  const double d = mean_ll[0] - mean_ll[1];
  const double p1 = d > 0.0 ? std::exp(-d) / (1.0 + std::exp(-d)) : 1.0 / (1.0 + std::exp(d));
  state.items[j] = end[rng.uniform() < p1 ? 1 : 0];
  redraw_item_latents(state, data, j, rng);
}

/// Traits start at the standardised response score plus N(0, 0.5^2) noise;
/// items start with attraction points psi_m = m / 2. With `prior_init`,
/// traits are drawn from N(0, 1), alpha_m = kappa m / K and mu = upsilon.
inline ChainState initial_state(const ResponseMatrix& data, const SamplerConfig& config, Rng& rng) {
  ChainState state;
  state.layout = LatentLayout(data.max_categories());
  if (config.prior_init) {
    state.betas.resize(data.n_subjects());
    for (auto& b : state.betas) b = rng.normal();
  } else {
    state.betas = response_scores(data);
    for (auto& b : state.betas) b += 0.5 * rng.normal();
  }
  for (std::size_t j = 0; j < data.n_items(); ++j) {
    const int K = data.max_category(j);
    if (config.prior_init) {
      std::vector<double> a(static_cast<std::size_t>(2 * K + 1)), mu(a.size(), 0.0);
      const double kappa = std::sqrt(config.prior.kappa_sq);
      for (int m = -K; m <= K; ++m) {
        a[static_cast<std::size_t>(m + K)] = kappa * m / K;
        if (m != 0) mu[static_cast<std::size_t>(m + K)] = config.prior.upsilon(m);
      }
      state.items.emplace_back(std::move(a), std::move(mu));
      continue;
    }
    std::vector<double> psi(static_cast<std::size_t>(2 * K + 1));
    for (int m = -K; m <= K; ++m) psi[static_cast<std::size_t>(m + K)] = 0.5 * m;
    state.items.push_back(OpumItem::from_psi(psi));
  }
  state.z.assign(data.n_subjects() * state.layout.row_width(), 0.0);
  for (std::size_t i = 0; i < data.n_subjects(); ++i) redraw_subject_latents(state, data, i, rng);
  if (config.enable_zeta && config.zeta_start_sweeps > 1) {
    for (std::size_t j = 0; j < data.n_items(); ++j) {
      choose_start_zeta(state, data, j, config.prior, rng, config.zeta_start_sweeps);
    }
  }
  return state;
}

/// One full kernel iteration: z, beta, per-item (alpha, mu), then the MH moves
/// when the iteration counter is a multiple of mh_period.
inline void gibbs_iteration(ChainState& state, const ResponseMatrix& data,
                            const SamplerConfig& config, Rng& rng, MoveCounts& counts) {
  sample_z(state, data, rng);
  sample_beta(state, data, rng);
  if (config.enable_ancillary) {
    for (std::size_t i = 0; i < data.n_subjects(); ++i) ancillary_beta(state, data, i, rng);
  }
  for (std::size_t j = 0; j < data.n_items(); ++j) {
    sample_alpha(state, data, j, config.prior, rng, config.alpha_sweeps);
    sample_mu(state, data, j, config.prior, rng);
    if (config.enable_ancillary) ancillary_item(state, data, j, config.prior, rng);
  }
  if (config.enable_rescale) {
    sample_shift(state, config.prior, rng);
    for (int r = 0; r < 2; ++r) mh_scale(state, config.prior, rng);
  }
  if (state.iteration % config.mh_period == 0) {
    if (config.enable_zeta) {
      for (std::size_t j = 0; j < data.n_items(); ++j) {
        ++counts.zeta_proposed;
        counts.zeta_accepted += mh_flip_zeta(state, data, j, config.prior, rng);
      }
    }
    if (config.enable_beta_flip) {
      for (std::size_t i = 0; i < data.n_subjects(); ++i) {
        ++counts.beta_flip_proposed;
        counts.beta_flip_accepted += mh_flip_beta(state, data, i, config.flip_proposal_var, rng);
      }
    }
  }
  ++state.iteration;
}

/// Pointwise log-likelihood over observed cells in observed_cells() order.
inline std::vector<double> pointwise_loglik(const ChainState& state, const ResponseMatrix& data) {
  std::vector<double> out;
  out.reserve(data.n_observed());
  for (std::size_t i = 0; i < data.n_subjects(); ++i) {
    for (std::size_t j = 0; j < data.n_items(); ++j) {
      if (!data.observed(i, j)) continue;
      const int k = state_category(state, data, i, j);
      out.push_back(std::log(std::max(opum_category_prob(state.betas[i], state.items[j], k), kProbFloor)));
    }
  }
  return out;
}

inline bool is_stored_iteration(std::size_t t, const SamplerConfig& config) {
  return t >= config.burn_in && (t - config.burn_in + 1) % config.thin == 0;
}

inline ChainDraws run_chain(const ResponseMatrix& data, const SamplerConfig& config,
                            std::size_t chain_index = 0) {
  config.validate();
  Rng rng(config.seed, chain_index);
  ChainState state = initial_state(data, config, rng);
  MoveCounts counts;
  ChainDraws out;
  for (std::size_t t = 0; t < config.n_iterations; ++t) {
    gibbs_iteration(state, data, config, rng, counts);
    if (!is_stored_iteration(t, config)) continue;
    const std::size_t draw = out.betas.size();
    out.betas.push_back(state.betas);
    std::vector<ItemDraw> items;
    items.reserve(state.items.size());
    for (const auto& it : state.items) items.push_back({it.alphas(), it.mus(), it.zeta()});
    out.items.push_back(std::move(items));
    if (config.loglik_every > 0 && draw % config.loglik_every == 0) {
      out.loglik_draws.push_back(draw);
      out.loglik.push_back(pointwise_loglik(state, data));
    }
  }
  out.zeta_accepted = counts.zeta_accepted;
  out.zeta_proposed = counts.zeta_proposed;
  out.beta_flip_accepted = counts.beta_flip_accepted;
  out.beta_flip_proposed = counts.beta_flip_proposed;
  return out;
}

/// Runs `n_chains` chains over at most `threads` worker threads. Chain c uses
/// random stream c of the configured seed, so results do not depend on the
/// thread count.
template <class ChainFn>
std::vector<ChainDraws> run_parallel(std::size_t n_chains, std::size_t threads, ChainFn&& fn) {
  std::vector<ChainDraws> chains(n_chains);
  std::vector<std::exception_ptr> errors(n_chains);
  std::atomic<std::size_t> next{0};
  auto worker = [&] {
    for (std::size_t c = next++; c < n_chains; c = next++) {
      try {
        chains[c] = fn(c);
      } catch (...) {
        errors[c] = std::current_exception();
      }
    }
  };
  const std::size_t n_workers = std::clamp<std::size_t>(threads, 1, n_chains);
  if (n_workers == 1) {
    worker();
  } else {
    std::vector<std::jthread> pool;
    for (std::size_t w = 0; w < n_workers; ++w) pool.emplace_back(worker);
  }
  for (auto& e : errors) {
    if (e) std::rethrow_exception(e);
  }
  return chains;
}

inline PosteriorDraws run_chains(const ResponseMatrix& data, const SamplerConfig& config) {
  config.validate();
  PosteriorDraws out;
  out.model = ModelTag::opum;
  out.echo = {config.n_iterations, config.burn_in, config.thin, config.seed};
  out.chains = run_parallel(config.n_chains, config.threads,
                            [&](std::size_t c) { return run_chain(data, config, c); });
  return out;
}

}  // namespace unfold
