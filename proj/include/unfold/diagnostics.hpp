#pragma once

#include <algorithm>
#include <cmath>
#include <numeric>
#include <span>
#include <string>
#include <vector>

#include "unfold/core.hpp"
#include "unfold/random.hpp"

namespace unfold {

// ---------------------------------------------------------------------------
// WAIC

struct WaicReport {
  double waic = 0.0;
  double lppd = 0.0;
  double p_waic = 0.0;
  std::vector<double> cell_lppd;
  std::vector<double> cell_p_waic;
  std::size_t n_draws = 0;
  // Variance uses the n - 1 denominator.
  std::string variance_convention = "sample (n-1)";
};

namespace detail {

inline double log_mean_exp(std::span<const double> x) {
  const double hi = *std::max_element(x.begin(), x.end());
  double s = 0.0;
  for (double v : x) s += std::exp(v - hi);
  return hi + std::log(s / static_cast<double>(x.size()));
}

// Shifted by the first value so constant input gives exactly 0.
inline double sample_variance(std::span<const double> x) {
  const double n = static_cast<double>(x.size());
  const double x0 = x.front();
  double s = 0.0;
  for (double v : x) s += v - x0;
  const double mean = s / n;
  double ss = 0.0;
  for (double v : x) ss += (v - x0 - mean) * (v - x0 - mean);
  return ss / (n - 1.0);
}

}  // namespace detail

/// Pointwise WAIC on a draws x cells matrix. Higher is better:
/// waic = lppd - p_waic.
inline WaicReport waic(const std::vector<std::vector<double>>& loglik) {
  if (loglik.size() < 2) throw UserError("waic needs at least 2 draws");
  const std::size_t n_cells = loglik.front().size();
  for (const auto& row : loglik) {
    if (row.size() != n_cells) throw UserError("waic: ragged log-likelihood matrix");
    for (double v : row) {
      if (!std::isfinite(v)) throw UserError("waic: non-finite log-likelihood entry");
    }
  }
  WaicReport r;
  r.n_draws = loglik.size();
  r.cell_lppd.resize(n_cells);
  r.cell_p_waic.resize(n_cells);
  std::vector<double> column(loglik.size());
  for (std::size_t c = 0; c < n_cells; ++c) {
    for (std::size_t d = 0; d < loglik.size(); ++d) column[d] = loglik[d][c];
    r.cell_lppd[c] = detail::log_mean_exp(column);
    r.cell_p_waic[c] = detail::sample_variance(column);
    r.lppd += r.cell_lppd[c];
    r.p_waic += r.cell_p_waic[c];
  }
  r.waic = r.lppd - r.p_waic;
  return r;
}

/// The aggregate reading: log E[exp(sum ll)] - Var(sum ll) over draws.
inline WaicReport waic_aggregate(const std::vector<std::vector<double>>& loglik) {
  if (loglik.size() < 2) throw UserError("waic needs at least 2 draws");
  std::vector<double> totals;
  for (const auto& row : loglik) totals.push_back(std::accumulate(row.begin(), row.end(), 0.0));
  WaicReport r;
  r.n_draws = loglik.size();
  r.lppd = detail::log_mean_exp(totals);
  r.p_waic = detail::sample_variance(totals);
  r.waic = r.lppd - r.p_waic;
  return r;
}

// ---------------------------------------------------------------------------
// Multimodality

struct Mode {
  double location = 0.0;
  double mass = 0.0;
};

struct ModeReport {
  bool is_multimodal = false;
  std::vector<Mode> modes;  // modes with mass >= min_mass
  std::vector<Mode> all_modes;
  double min_mass = 0.1;
  double bandwidth = 0.0;
};

inline double silverman_bandwidth(std::span<const double> x) {
  std::vector<double> s(x.begin(), x.end());
  std::sort(s.begin(), s.end());
  const double n = static_cast<double>(s.size());
  const double mean = std::accumulate(s.begin(), s.end(), 0.0) / n;
  double ss = 0.0;
  for (double v : s) ss += (v - mean) * (v - mean);
  const double sd = std::sqrt(ss / (n - 1.0));
  auto quantile = [&s](double p) {
    const double h = p * static_cast<double>(s.size() - 1);
    const auto lo = static_cast<std::size_t>(std::floor(h));
    const std::size_t hi = std::min(lo + 1, s.size() - 1);
    return s[lo] + (h - static_cast<double>(lo)) * (s[hi] - s[lo]);
  };
  const double iqr = quantile(0.75) - quantile(0.25);
  double spread = std::min(sd, iqr / 1.34);
  if (!(spread > 0.0)) spread = sd;
  return 0.9 * spread * std::pow(n, -0.2);
}

/// Gaussian KDE on a 512-point grid; each local maximum owns the grid points
/// that climb to it (its watershed basin) and its mass is the normalised
/// trapezoid integral over the basin.
inline ModeReport detect_multimodality(std::span<const double> samples, double min_mass = 0.1) {
  if (samples.size() < 100) throw UserError("detect_multimodality needs at least 100 samples");
  if (!(min_mass > 0.0 && min_mass < 0.5)) {
    throw UserError("detect_multimodality: min_mass must lie in (0, 0.5)");
  }
  const auto [mn, mx] = std::minmax_element(samples.begin(), samples.end());
  if (!(*mx > *mn)) throw UserError("detect_multimodality: samples have zero variance");

  ModeReport r;
  r.min_mass = min_mass;
  const double h = silverman_bandwidth(samples);
  r.bandwidth = h;
  constexpr std::size_t G = 512;
  const double lo = *mn - 3.0 * h, hi = *mx + 3.0 * h;
  const double step = (hi - lo) / static_cast<double>(G - 1);
  std::vector<double> grid(G), dens(G, 0.0);
  for (std::size_t g = 0; g < G; ++g) grid[g] = lo + step * static_cast<double>(g);

  std::vector<double> sorted(samples.begin(), samples.end());
  std::sort(sorted.begin(), sorted.end());
  const double cut = 8.0 * h;
  for (std::size_t g = 0; g < G; ++g) {
    const auto first = std::lower_bound(sorted.begin(), sorted.end(), grid[g] - cut);
    const auto last = std::upper_bound(first, sorted.end(), grid[g] + cut);
    double s = 0.0;
    for (auto it = first; it != last; ++it) s += norm_pdf((grid[g] - *it) / h);
    dens[g] = s;
  }

  // Steepest-ascent labelling.
  std::vector<std::size_t> peak(G);
  for (std::size_t g = 0; g < G; ++g) {
    std::size_t c = g;
    for (;;) {
      std::size_t best = c;
      if (c > 0 && dens[c - 1] > dens[best]) best = c - 1;
      if (c + 1 < G && dens[c + 1] > dens[best]) best = c + 1;
      if (best == c) break;
      c = best;
    }
    peak[g] = c;
  }
  std::vector<double> mass(G, 0.0);
  double total = 0.0;
  for (std::size_t g = 0; g + 1 < G; ++g) {
    const double a = 0.5 * step * dens[g], b = 0.5 * step * dens[g + 1];
    mass[peak[g]] += a;
    mass[peak[g + 1]] += b;
    total += a + b;
  }
  for (std::size_t g = 0; g < G; ++g) {
    if (peak[g] != g || !(mass[g] > 0.0)) continue;
    const Mode m{grid[g], mass[g] / total};
    r.all_modes.push_back(m);
    if (m.mass >= min_mass) r.modes.push_back(m);
  }
  r.is_multimodal = r.modes.size() >= 2;
  return r;
}

// ---------------------------------------------------------------------------
// Ranks

/// 1-based rank of each subject within every draw, then the per-subject
/// median across draws.
inline std::vector<double> rank_summary(const std::vector<std::vector<double>>& beta_draws) {
  if (beta_draws.empty()) throw UserError("rank_summary needs at least one draw");
  const std::size_t n = beta_draws.front().size();
  std::vector<std::vector<double>> ranks(n);
  std::vector<std::size_t> order(n);
  for (const auto& d : beta_draws) {
    if (d.size() != n) throw UserError("rank_summary: ragged draws");
    std::iota(order.begin(), order.end(), 0);
    std::stable_sort(order.begin(), order.end(), [&d](std::size_t a, std::size_t b) { return d[a] < d[b]; });
    for (std::size_t r = 0; r < n; ++r) ranks[order[r]].push_back(static_cast<double>(r + 1));
  }
  std::vector<double> out(n);
  for (std::size_t i = 0; i < n; ++i) {
    auto& v = ranks[i];
    std::sort(v.begin(), v.end());
    const std::size_t m = v.size() / 2;
    out[i] = v.size() % 2 ? v[m] : 0.5 * (v[m - 1] + v[m]);
  }
  return out;
}

// ---------------------------------------------------------------------------
// Convergence

/// Split-R-hat over chains of equal length (each chain is halved).
inline double split_rhat(const std::vector<std::vector<double>>& chains) {
  if (chains.empty()) throw UserError("split_rhat: no chains");
  const std::size_t n = chains.front().size();
  for (const auto& c : chains) {
    if (c.size() != n) throw UserError("split_rhat: chains differ in length");
  }
  const std::size_t half = n / 2;
  if (half < 2) throw UserError("split_rhat: too few draws");
  std::vector<std::span<const double>> parts;
  for (const auto& c : chains) {
    parts.emplace_back(c.data(), half);
    parts.emplace_back(c.data() + (n - half), half);
  }
  const double m = static_cast<double>(parts.size()), len = static_cast<double>(half);
  std::vector<double> means, vars;
  for (auto p : parts) {
    means.push_back(std::accumulate(p.begin(), p.end(), 0.0) / len);
    vars.push_back(detail::sample_variance(p));
  }
  const double grand = std::accumulate(means.begin(), means.end(), 0.0) / m;
  double b = 0.0;
  for (double v : means) b += (v - grand) * (v - grand);
  b *= len / (m - 1.0);
  const double w = std::accumulate(vars.begin(), vars.end(), 0.0) / m;
  if (!(w > 0.0)) return b > 0.0 ? kInf : 1.0;
  const double var_plus = (len - 1.0) / len * w + b / len;
  return std::sqrt(var_plus / w);
}

/// Effective sample size over all chains combined, from the multi-chain
/// autocorrelation estimate truncated by Geyer's initial positive sequence.
/// Autocovariances are computed lag by lag until the sequence stops.
inline double effective_sample_size(const std::vector<std::vector<double>>& chains) {
  if (chains.empty()) throw UserError("effective_sample_size: no chains");
  const std::size_t n = chains.front().size();
  if (n < 4) throw UserError("effective_sample_size: too few draws");
  const double m = static_cast<double>(chains.size()), len = static_cast<double>(n);
  std::vector<double> means;
  for (const auto& c : chains) {
    if (c.size() != n) throw UserError("effective_sample_size: chains differ in length");
    means.push_back(std::accumulate(c.begin(), c.end(), 0.0) / len);
  }
  // Mean over chains of the lag autocovariance (1/n normalisation).
  auto mean_acov = [&](std::size_t lag) {
    double total = 0.0;
    for (std::size_t c = 0; c < chains.size(); ++c) {
      double s = 0.0;
      for (std::size_t t = 0; t + lag < n; ++t) {
        s += (chains[c][t] - means[c]) * (chains[c][t + lag] - means[c]);
      }
      total += s / len;
    }
    return total / m;
  };
  const double acov0 = mean_acov(0);
  const double w = acov0 * len / (len - 1.0);
  double var_plus = (len - 1.0) / len * w;
  if (chains.size() > 1) {
    const double grand = std::accumulate(means.begin(), means.end(), 0.0) / m;
    double b = 0.0;
    for (double v : means) b += (v - grand) * (v - grand);
    var_plus += b / (m - 1.0);
  }
  if (!(var_plus > 0.0)) return m * len;
  auto rho = [&](std::size_t lag) {
    return 1.0 - (w - (lag == 0 ? acov0 : mean_acov(lag))) / var_plus;
  };
  double tau = -1.0;
  double prev_pair = kInf;
  for (std::size_t t = 0; t + 1 < n; t += 2) {
    double pair = rho(t) + rho(t + 1);
    if (pair < 0.0) break;
    pair = std::min(pair, prev_pair);
    tau += 2.0 * pair;
    prev_pair = pair;
  }
  tau = std::max(tau, 1.0 / std::log10(m * len));
  return m * len / tau;
}

struct ParameterConvergence {
  std::string name;
  double rhat = 1.0;
  double ess = 0.0;
};

/// Pearson correlation; returns 0 when either input is constant.
inline double pearson(std::span<const double> x, std::span<const double> y) {
  const double n = static_cast<double>(x.size());
  const double mx = std::accumulate(x.begin(), x.end(), 0.0) / n;
  const double my = std::accumulate(y.begin(), y.end(), 0.0) / n;
  double sxy = 0.0, sxx = 0.0, syy = 0.0;
  for (std::size_t i = 0; i < x.size(); ++i) {
    sxy += (x[i] - mx) * (y[i] - my);
    sxx += (x[i] - mx) * (x[i] - mx);
    syy += (y[i] - my) * (y[i] - my);
  }
  if (!(sxx > 0.0) || !(syy > 0.0)) return 0.0;
  return sxy / std::sqrt(sxx * syy);
}

inline std::vector<double> average_ranks(std::span<const double> x) {
  std::vector<std::size_t> order(x.size());
  std::iota(order.begin(), order.end(), 0);
  std::sort(order.begin(), order.end(), [&x](std::size_t a, std::size_t b) { return x[a] < x[b]; });
  std::vector<double> r(x.size());
  for (std::size_t s = 0; s < order.size();) {
    std::size_t e = s;
    while (e + 1 < order.size() && x[order[e + 1]] == x[order[s]]) ++e;
    const double avg = 0.5 * static_cast<double>(s + e) + 1.0;
    for (std::size_t q = s; q <= e; ++q) r[order[q]] = avg;
    s = e + 1;
  }
  return r;
}

inline double spearman(std::span<const double> x, std::span<const double> y) {
  const auto rx = average_ranks(x), ry = average_ranks(y);
  return pearson(rx, ry);
}

/// Chain-level mean of each subject's beta.
inline std::vector<double> chain_mean_betas(const ChainDraws& chain) {
  if (chain.betas.empty()) return {};
  std::vector<double> m(chain.betas.front().size(), 0.0);
  for (const auto& d : chain.betas) {
    for (std::size_t i = 0; i < m.size(); ++i) m[i] += d[i];
  }
  for (double& v : m) v /= static_cast<double>(chain.betas.size());
  return m;
}

/// Posterior median of each subject's beta over all chains.
inline std::vector<double> posterior_median_betas(const PosteriorDraws& draws) {
  if (draws.chains.empty() || draws.chains.front().betas.empty()) return {};
  const std::size_t n = draws.chains.front().betas.front().size();
  std::vector<double> out(n);
  std::vector<double> v;
  for (std::size_t i = 0; i < n; ++i) {
    v.clear();
    for (const auto& c : draws.chains) {
      for (const auto& d : c.betas) v.push_back(d[i]);
    }
    const auto mid = v.begin() + static_cast<std::ptrdiff_t>(v.size() / 2);
    std::nth_element(v.begin(), mid, v.end());
    out[i] = *mid;
  }
  return out;
}

/// Reflects a stored OPUM draw: beta -> -beta, (alpha_m, mu_m) ->
/// (-alpha_{-m}, -mu_{-m}). The likelihood is invariant under this map.
inline void reflect_chain(ChainDraws& chain, ModelTag model) {
  for (auto& d : chain.betas) {
    for (double& b : d) b = -b;
  }
  for (auto& d : chain.items) {
    for (auto& it : d) {
      if (model == ModelTag::opum) {
        std::reverse(it.alphas.begin(), it.alphas.end());
        std::reverse(it.mus.begin(), it.mus.end());
        for (double& a : it.alphas) a = -a;
        for (double& m : it.mus) m = -m;
        it.alphas[it.alphas.size() / 2] = 0.0;
        it.mus[it.mus.size() / 2] = 0.0;
      } else if (model == ModelTag::grm) {
        for (double& a : it.alphas) a = -a;
      }
    }
  }
}

/// The global sign of the trait is not identified; reflect every chain whose
/// mean betas correlate negatively with those of `reference` (or with chain
/// 0 when no reference is given). Returns the number of chains reflected.
inline std::size_t align_signs(PosteriorDraws& draws, std::span<const double> reference = {}) {
  if (draws.chains.empty()) return 0;
  std::vector<double> ref(reference.begin(), reference.end());
  if (ref.empty()) ref = chain_mean_betas(draws.chains.front());
  std::size_t flipped = 0;
  for (auto& c : draws.chains) {
    if (pearson(chain_mean_betas(c), ref) < 0.0) {
      reflect_chain(c, draws.model);
      ++flipped;
    }
  }
  return flipped;
}

/// Split-R-hat and ESS per subject trait.
inline std::vector<ParameterConvergence> beta_convergence(const PosteriorDraws& draws) {
  std::vector<ParameterConvergence> out;
  if (draws.chains.empty() || draws.chains.front().betas.empty()) return out;
  const std::size_t n = draws.chains.front().betas.front().size();
  std::vector<std::vector<double>> series(draws.chains.size());
  for (std::size_t i = 0; i < n; ++i) {
    for (std::size_t c = 0; c < draws.chains.size(); ++c) {
      series[c].clear();
      for (const auto& d : draws.chains[c].betas) series[c].push_back(d[i]);
    }
    out.push_back({"beta[" + std::to_string(i + 1) + "]", split_rhat(series), effective_sample_size(series)});
  }
  return out;
}

}  // namespace unfold
