#pragma once

#include <algorithm>
#include <cmath>
#include <vector>

#include "unfold/core.hpp"
#include "unfold/opum_sampler.hpp"
#include "unfold/random.hpp"
#include "unfold/response.hpp"

namespace unfold {

struct GrmConfig {
  std::size_t n_iterations = 3000;
  std::size_t burn_in = 2000;
  std::size_t thin = 1;
  std::size_t n_chains = 4;
  std::uint64_t seed = 1;
  double alpha_prior_var = 3.0;
  double tau_prior_var = 9.0;
  // Spacing of the cut-point prior means; with K = 4 the defaults give
  // (-4, -2, 2, 4).
  double tau_prior_step = 2.0;
  double tau_prior_gap = 1.0;
  std::size_t loglik_every = 0;
  std::size_t threads = 1;

  void validate() const {
    if (n_iterations == 0) throw UserError("grm: n_iterations must be positive");
    if (!(burn_in < n_iterations)) throw UserError("grm: burn_in must be below n_iterations");
    if (thin < 1) throw UserError("grm: thin must be >= 1");
    if (n_chains < 1) throw UserError("grm: n_chains must be >= 1");
    if (!(alpha_prior_var > 0.0) || !(tau_prior_var > 0.0)) {
      throw UserError("grm: prior variances must be positive");
    }
    if (!(tau_prior_step > 0.0) || tau_prior_gap < 0.0) {
      throw UserError("grm: cut-point prior spacing must be positive");
    }
  }

  std::vector<double> tau_prior_means(int max_category) const {
    std::vector<double> m(static_cast<std::size_t>(max_category));
    for (int k = 0; k < max_category; ++k) {
      const double c = k - 0.5 * (max_category - 1);
      const double sgn = c > 0 ? 1.0 : (c < 0 ? -1.0 : 0.0);
      m[static_cast<std::size_t>(k)] = tau_prior_step * c + tau_prior_gap * sgn;
    }
    return m;
  }
};

struct GrmChainState {
  std::vector<double> betas;
  std::vector<double> alphas;
  std::vector<std::vector<double>> cutpoints;
  std::vector<double> u;  // I x J row-major; meaningful for observed cells only
  std::size_t iteration = 0;

  double& latent(std::size_t i, std::size_t j) { return u[i * alphas.size() + j]; }
  double latent(std::size_t i, std::size_t j) const { return u[i * alphas.size() + j]; }
};

namespace detail {

inline double grm_lower(const std::vector<double>& tau, int k) {
  return k == 0 ? -kInf : tau[static_cast<std::size_t>(k - 1)];
}
inline double grm_upper(const std::vector<double>& tau, int k) {
  return k == static_cast<int>(tau.size()) ? kInf : tau[static_cast<std::size_t>(k)];
}

}  // namespace detail

inline void grm_sample_u(GrmChainState& s, const ResponseMatrix& data, Rng& rng) {
  for (std::size_t i = 0; i < data.n_subjects(); ++i) {
    for (std::size_t j = 0; j < data.n_items(); ++j) {
      if (!data.observed(i, j)) continue;
      const int k = data.at(i, j);
      const double lo = detail::grm_lower(s.cutpoints[j], k);
      const double hi = detail::grm_upper(s.cutpoints[j], k);
      const double u = truncated_normal(-s.alphas[j] * s.betas[i], 1.0, lo, hi, rng);
      if (!(u > lo && u <= hi)) {
        throw InvariantError("grm latent escaped its category interval");
      }
      s.latent(i, j) = u;
    }
  }
}

inline NormalMoments grm_beta_conditional(const GrmChainState& s, const ResponseMatrix& data,
                                          std::size_t i) {
  double prec = 1.0, lin = 0.0;
  for (std::size_t j = 0; j < data.n_items(); ++j) {
    if (!data.observed(i, j)) continue;
    prec += s.alphas[j] * s.alphas[j];
    lin -= s.alphas[j] * s.latent(i, j);
  }
  return {lin / prec, 1.0 / prec};
}

inline NormalMoments grm_alpha_conditional(const GrmChainState& s, const ResponseMatrix& data,
                                           std::size_t j, const GrmConfig& config) {
  double prec = 1.0 / config.alpha_prior_var, lin = 0.0;
  for (std::size_t i = 0; i < data.n_subjects(); ++i) {
    if (!data.observed(i, j)) continue;
    prec += s.betas[i] * s.betas[i];
    lin -= s.betas[i] * s.latent(i, j);
  }
  return {lin / prec, 1.0 / prec};
}

/// Cut point k lies between the latents of categories k and k+1 and between
/// its neighbours.
inline void grm_sample_cutpoints(GrmChainState& s, const ResponseMatrix& data, std::size_t j,
                                 const GrmConfig& config, Rng& rng) {
  auto& tau = s.cutpoints[j];
  const int K = static_cast<int>(tau.size());
  std::vector<double> top(static_cast<std::size_t>(K + 1), -kInf), bottom(static_cast<std::size_t>(K + 1), kInf);
  for (std::size_t i = 0; i < data.n_subjects(); ++i) {
    if (!data.observed(i, j)) continue;
    const auto k = static_cast<std::size_t>(data.at(i, j));
    top[k] = std::max(top[k], s.latent(i, j));
    bottom[k] = std::min(bottom[k], s.latent(i, j));
  }
  const std::vector<double> means = config.tau_prior_means(K);
  const double sd = std::sqrt(config.tau_prior_var);
  for (int k = 0; k < K; ++k) {
    const auto sk = static_cast<std::size_t>(k);
    const double lo = std::max(k == 0 ? -kInf : tau[sk - 1], top[sk]);
    const double hi = std::min(k + 1 == K ? kInf : tau[sk + 1], bottom[sk + 1]);
    if (!(lo < hi)) throw InvariantError("grm cut-point update: empty interval");
    tau[sk] = truncated_normal(means[sk], sd, lo, hi, rng);
  }
  for (int k = 1; k < K; ++k) {
    if (!(tau[k - 1] < tau[k])) throw InvariantError("grm cut points lost their order");
  }
}

inline void grm_iteration(GrmChainState& s, const ResponseMatrix& data, const GrmConfig& config,
                          Rng& rng) {
  grm_sample_u(s, data, rng);
  for (std::size_t i = 0; i < data.n_subjects(); ++i) {
    const NormalMoments m = grm_beta_conditional(s, data, i);
    s.betas[i] = rng.normal(m.mean, std::sqrt(m.var));
  }
  for (std::size_t j = 0; j < data.n_items(); ++j) {
    const NormalMoments m = grm_alpha_conditional(s, data, j, config);
    s.alphas[j] = rng.normal(m.mean, std::sqrt(m.var));
    grm_sample_cutpoints(s, data, j, config, rng);
  }
  ++s.iteration;
}

inline GrmChainState grm_initial_state(const ResponseMatrix& data, const GrmConfig& config, Rng& rng) {
  GrmChainState s;
  s.betas.resize(data.n_subjects());
  for (auto& b : s.betas) b = rng.normal();
  s.alphas.assign(data.n_items(), 1.0);
  for (std::size_t j = 0; j < data.n_items(); ++j) {
    s.cutpoints.push_back(config.tau_prior_means(data.max_category(j)));
  }
  s.u.assign(data.n_subjects() * data.n_items(), 0.0);
  grm_sample_u(s, data, rng);
  return s;
}

inline std::vector<double> grm_pointwise_loglik(const GrmChainState& s, const ResponseMatrix& data) {
  std::vector<double> out;
  out.reserve(data.n_observed());
  for (std::size_t i = 0; i < data.n_subjects(); ++i) {
    for (std::size_t j = 0; j < data.n_items(); ++j) {
      if (!data.observed(i, j)) continue;
      const GrmItem item(s.alphas[j], s.cutpoints[j]);
      const double p = grm_probs(s.betas[i], item).probs[static_cast<std::size_t>(data.at(i, j))];
      out.push_back(std::log(std::max(p, kProbFloor)));
    }
  }
  return out;
}

inline ChainDraws run_grm_chain(const ResponseMatrix& data, const GrmConfig& config,
                                std::size_t chain_index = 0) {
  config.validate();
  Rng rng(config.seed, chain_index);
  GrmChainState s = grm_initial_state(data, config, rng);
  ChainDraws out;
  for (std::size_t t = 0; t < config.n_iterations; ++t) {
    grm_iteration(s, data, config, rng);
    if (t < config.burn_in || (t - config.burn_in + 1) % config.thin != 0) continue;
    const std::size_t draw = out.betas.size();
    out.betas.push_back(s.betas);
    std::vector<ItemDraw> items;
    for (std::size_t j = 0; j < data.n_items(); ++j) items.push_back({{s.alphas[j]}, s.cutpoints[j], false});
    out.items.push_back(std::move(items));
    if (config.loglik_every > 0 && draw % config.loglik_every == 0) {
      out.loglik_draws.push_back(draw);
      out.loglik.push_back(grm_pointwise_loglik(s, data));
    }
  }
  return out;
}

inline PosteriorDraws run_grm_chains(const ResponseMatrix& data, const GrmConfig& config) {
  config.validate();
  PosteriorDraws out;
  out.model = ModelTag::grm;
  out.echo = {config.n_iterations, config.burn_in, config.thin, config.seed};
  out.chains = run_parallel(config.n_chains, config.threads,
                            [&](std::size_t c) { return run_grm_chain(data, config, c); });
  return out;
}

}  // namespace unfold
