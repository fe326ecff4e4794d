#include <gtest/gtest.h>

#include "geweke.hpp"
#include "oracles.hpp"
#include "unfold/diagnostics.hpp"
#include "unfold/grm_sampler.hpp"
#include "unfold/simulate.hpp"

using namespace unfold;

namespace {

ResponseMatrix all_missing(std::size_t I, std::size_t J, int K) {
  return ResponseMatrix(I, std::vector<int>(J, K), std::vector<int>(I * J, kMissing));
}

std::vector<double> draw_ordered_cutpoints(const GrmConfig& cfg, int K, Rng& rng) {
  const auto m = cfg.tau_prior_means(K);
  std::vector<double> t(static_cast<std::size_t>(K));
  for (;;) {
    for (int k = 0; k < K; ++k) t[k] = rng.normal(m[k], std::sqrt(cfg.tau_prior_var));
    if (std::is_sorted(t.begin(), t.end()) && std::adjacent_find(t.begin(), t.end()) == t.end()) return t;
  }
}

int grm_category(double u, const std::vector<double>& tau) {
  int k = 0;
  while (k < static_cast<int>(tau.size()) && u > tau[k]) ++k;
  return k;
}

}  // namespace

TEST(GrmConfig, PriorMeans) {
  GrmConfig cfg;
  EXPECT_EQ(cfg.tau_prior_means(4), (std::vector<double>{-4.0, -2.0, 2.0, 4.0}));
  EXPECT_EQ(cfg.tau_prior_means(1), (std::vector<double>{0.0}));
  const auto m3 = cfg.tau_prior_means(3);
  EXPECT_EQ(m3, (std::vector<double>{-3.0, 0.0, 3.0}));
  cfg.alpha_prior_var = 0.0;
  EXPECT_THROW(cfg.validate(), UserError);
}

TEST(GrmConditionals, MatchRegressionSolve) {
  Rng rng(1);
  GrmConfig cfg;
  for (int rep = 0; rep < 100; ++rep) {
    SimSpec spec;
    spec.n_subjects = 6;
    spec.model = ModelTag::grm;
    spec.grm_items = grm_design(3, 2);
    spec.seed = rep + 1;
    spec.missing_rate = 0.2;
    const auto sim = simulate(spec);
    auto s = grm_initial_state(sim.data, cfg, rng);
    for (auto& a : s.alphas) a = rng.normal();
    grm_sample_u(s, sim.data, rng);
    for (std::size_t i = 0; i < 6; ++i) {
      std::vector<double> xs, ys;
      for (std::size_t j = 0; j < 3; ++j) {
        if (!sim.data.observed(i, j)) continue;
        xs.push_back(-s.alphas[j]);
        ys.push_back(s.latent(i, j));
      }
      const Eigen::MatrixXd X = Eigen::Map<Eigen::VectorXd>(xs.data(), xs.size());
      const Eigen::VectorXd y = Eigen::Map<Eigen::VectorXd>(ys.data(), ys.size());
      const auto post = oracle::regression_posterior(X, y, Eigen::VectorXd::Zero(1), Eigen::MatrixXd::Identity(1, 1));
      const auto m = grm_beta_conditional(s, sim.data, i);
      EXPECT_NEAR(m.mean, post.mean(0), 1e-12);
      EXPECT_NEAR(m.var, post.cov(0, 0), 1e-12);
    }
    for (std::size_t j = 0; j < 3; ++j) {
      std::vector<double> xs, ys;
      for (std::size_t i = 0; i < 6; ++i) {
        if (!sim.data.observed(i, j)) continue;
        xs.push_back(-s.betas[i]);
        ys.push_back(s.latent(i, j));
      }
      const Eigen::MatrixXd X = Eigen::Map<Eigen::VectorXd>(xs.data(), xs.size());
      const Eigen::VectorXd y = Eigen::Map<Eigen::VectorXd>(ys.data(), ys.size());
      const auto post = oracle::regression_posterior(X, y, Eigen::VectorXd::Zero(1),
                                                     Eigen::MatrixXd::Identity(1, 1) / cfg.alpha_prior_var);
      const auto m = grm_alpha_conditional(s, sim.data, j, cfg);
      EXPECT_NEAR(m.mean, post.mean(0), 1e-12);
      EXPECT_NEAR(m.var, post.cov(0, 0), 1e-12);
    }
  }
}

TEST(GrmChain, EmptyDataRecoversPrior) {
  const auto data = all_missing(4, 3, 4);
  GrmConfig cfg;
  cfg.n_iterations = 20000;
  cfg.burn_in = 0;
  cfg.n_chains = 1;
  const auto d = run_grm_chain(data, cfg);
  std::vector<double> beta, alpha, tau0;
  for (std::size_t t = 0; t < d.betas.size(); ++t) {
    beta.push_back(d.betas[t][0]);
    alpha.push_back(d.items[t][1].alphas[0]);
    tau0.push_back(d.items[t][2].mus[0]);
  }
  auto mv = [](const std::vector<double>& x) {
    const auto m = geweke::iid_moments(x);
    double ss = 0.0;
    for (double v : x) ss += (v - m.mean) * (v - m.mean);
    return std::pair{m.mean, ss / (x.size() - 1.0)};
  };
  const auto [bm, bv] = mv(beta);
  const auto [am, av] = mv(alpha);
  EXPECT_NEAR(bm, 0.0, 0.05);
  EXPECT_NEAR(bv, 1.0, 0.05);
  EXPECT_NEAR(am, 0.0, 0.08);
  EXPECT_NEAR(av, 3.0, 0.15);
  // Lowest cut point of the ordered prior sits below its unconstrained mean.
  EXPECT_LT(mv(tau0).first, -4.0);
}

TEST(GrmChain, OrderPreservedAndDeterministic) {
  SimSpec spec;
  spec.n_subjects = 60;
  spec.model = ModelTag::grm;
  spec.grm_items = grm_design(5, 4);
  spec.missing_rate = 0.1;
  const auto sim = simulate(spec);
  GrmConfig cfg;
  cfg.n_iterations = 300;
  cfg.burn_in = 100;
  cfg.n_chains = 2;
  cfg.loglik_every = 20;
  const auto a = run_grm_chains(sim.data, cfg);
  for (const auto& c : a.chains) {
    for (const auto& d : c.items) {
      for (const auto& it : d) {
        for (std::size_t k = 1; k < it.mus.size(); ++k) ASSERT_LT(it.mus[k - 1], it.mus[k]);
      }
    }
    EXPECT_EQ(c.loglik.size(), 10u);
  }
  cfg.threads = 2;
  EXPECT_TRUE(a == run_grm_chains(sim.data, cfg));
  EXPECT_EQ(a.model, ModelTag::grm);
}

TEST(GrmChain, GewekeJointConsistency) {
  const std::size_t I = 5, J = 2;
  const int K = 2;
  GrmConfig cfg;
  Rng rng(3);
  const std::size_t cycles = 100000;

  auto functions = [&](const GrmChainState& s, const std::vector<int>& y) {
    std::vector<double> f;
    f.push_back(s.betas[0]);
    f.push_back(s.betas[0] * s.betas[0]);
    f.push_back(s.betas[1] * s.betas[2]);
    for (std::size_t j = 0; j < J; ++j) {
      f.push_back(s.alphas[j]);
      f.push_back(s.alphas[j] * s.alphas[j]);
      for (double t : s.cutpoints[j]) {
        f.push_back(t);
        f.push_back(t * t);
      }
    }
    double ym = 0.0;
    for (int v : y) ym += v;
    f.push_back(ym / static_cast<double>(y.size()));
    f.push_back(s.alphas[0] * s.betas[0]);
    return f;
  };
  auto draw_data = [&](GrmChainState& s, std::vector<int>& y) {
    for (std::size_t i = 0; i < I; ++i) {
      for (std::size_t j = 0; j < J; ++j) {
        const double u = -s.alphas[j] * s.betas[i] + rng.normal();
        s.latent(i, j) = u;
        y[i * J + j] = grm_category(u, s.cutpoints[j]);
      }
    }
  };
  auto draw_prior = [&]() {
    GrmChainState s;
    for (std::size_t i = 0; i < I; ++i) s.betas.push_back(rng.normal());
    for (std::size_t j = 0; j < J; ++j) {
      s.alphas.push_back(rng.normal(0.0, std::sqrt(cfg.alpha_prior_var)));
      s.cutpoints.push_back(draw_ordered_cutpoints(cfg, K, rng));
    }
    s.u.assign(I * J, 0.0);
    return s;
  };

  std::vector<int> y(I * J);
  std::vector<std::vector<double>> marginal, successive;
  auto push = [](std::vector<std::vector<double>>& dst, const std::vector<double>& f) {
    if (dst.empty()) dst.resize(f.size());
    for (std::size_t q = 0; q < f.size(); ++q) dst[q].push_back(f[q]);
  };
  for (std::size_t t = 0; t < cycles; ++t) {
    auto s = draw_prior();
    draw_data(s, y);
    push(marginal, functions(s, y));
  }
  auto s = draw_prior();
  draw_data(s, y);
  for (std::size_t t = 0; t < cycles; ++t) {
    const ResponseMatrix data(I, std::vector<int>(J, K), y);
    grm_iteration(s, data, cfg, rng);
    draw_data(s, y);
    push(successive, functions(s, y));
  }
  const auto z = geweke::z_scores(marginal, successive);
  for (std::size_t q = 0; q < z.size(); ++q) RecordProperty("z" + std::to_string(q), std::to_string(z[q]));
  EXPECT_GE(geweke::fraction_within(z, 4.0), 0.95) << ::testing::PrintToString(z);
}

TEST(GrmChain, RecoversMonotoneTraits) {
  SimSpec spec;
  spec.n_subjects = 300;
  spec.model = ModelTag::grm;
  spec.grm_items = grm_design(10, 4);
  spec.seed = 11;
  const auto sim = simulate(spec);
  GrmConfig cfg;
  cfg.n_iterations = 1500;
  cfg.burn_in = 500;
  cfg.n_chains = 2;
  auto d = run_grm_chains(sim.data, cfg);
  align_signs(d, sim.betas);
  const auto med = posterior_median_betas(d);
  EXPECT_GE(spearman(med, sim.betas), 0.9);
}
