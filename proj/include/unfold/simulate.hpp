#pragma once

#include <cmath>
#include <string>
#include <vector>

#include "unfold/core.hpp"
#include "unfold/random.hpp"
#include "unfold/response.hpp"

namespace unfold {

struct SimSpec {
  std::size_t n_subjects = 300;
  ModelTag model = ModelTag::opum;
  std::vector<OpumItem> opum_items;
  std::vector<GrmItem> grm_items;
  std::vector<GgumItem> ggum_items;
  std::uint64_t seed = 1;
  double missing_rate = 0.0;

  std::size_t n_items() const {
    switch (model) {
      case ModelTag::opum: return opum_items.size();
      case ModelTag::grm: return grm_items.size();
      case ModelTag::ggum: return ggum_items.size();
    }
    return 0;
  }

  void validate() const {
    if (n_subjects == 0) throw UserError("simulate: n_subjects must be positive");
    if (n_items() == 0) throw UserError("simulate: no items for model " + to_string(model));
    if (!(missing_rate >= 0.0 && missing_rate < 1.0)) {
      throw UserError("simulate: missing_rate must lie in [0, 1)");
    }
    for (const auto& it : opum_items) it.validate();
  }
};

struct SimResult {
  ResponseMatrix data;
  std::vector<double> betas;
  // Same layout as posterior draws: chain 0, a single draw.
  PosteriorDraws truth;
};

/// Observed (reverse-coded when zeta is set) category from one utility draw.
inline int simulate_opum_cell(double beta, const OpumItem& item, Rng& rng) {
  std::vector<double> z(item.width());
  item.linear_predictor(beta, z);
  for (double& v : z) v += rng.normal();
  return effective_response(argmax_category(z), item.max_category(), item.zeta());
}

inline int simulate_grm_cell(double beta, const GrmItem& item, Rng& rng) {
  double eps = 0.0;
  if (item.link() == Link::probit) {
    eps = rng.normal();
  } else {
    const double v = rng.uniform();
    eps = std::log(v / (1.0 - v));
  }
  const double u = -item.alpha() * beta + eps;
  int k = 0;
  while (k < item.max_category() && u > item.cutpoints()[static_cast<std::size_t>(k)]) ++k;
  return k;
}

inline int draw_categorical(const CategoryProbs& p, Rng& rng) {
  double u = rng.uniform();
  for (std::size_t k = 0; k + 1 < p.size(); ++k) {
    if (u < p[k]) return static_cast<int>(k);
    u -= p[k];
  }
  return static_cast<int>(p.size() - 1);
}

inline SimResult simulate(const SimSpec& spec) {
  spec.validate();
  Rng rng(spec.seed, 0x51u);
  const std::size_t I = spec.n_subjects, J = spec.n_items();
  SimResult out;
  out.betas.resize(I);
  for (double& b : out.betas) b = rng.normal();

  std::vector<int> kmax(J);
  for (std::size_t j = 0; j < J; ++j) {
    switch (spec.model) {
      case ModelTag::opum: kmax[j] = spec.opum_items[j].max_category(); break;
      case ModelTag::grm: kmax[j] = spec.grm_items[j].max_category(); break;
      case ModelTag::ggum: kmax[j] = spec.ggum_items[j].max_category(); break;
    }
  }
  std::vector<int> cells(I * J);
  for (std::size_t i = 0; i < I; ++i) {
    for (std::size_t j = 0; j < J; ++j) {
      int y = 0;
      switch (spec.model) {
        case ModelTag::opum: y = simulate_opum_cell(out.betas[i], spec.opum_items[j], rng); break;
        case ModelTag::grm: y = simulate_grm_cell(out.betas[i], spec.grm_items[j], rng); break;
        case ModelTag::ggum: y = draw_categorical(ggum_probs(out.betas[i], spec.ggum_items[j]), rng); break;
      }
      cells[i * J + j] = y;
    }
  }
  if (spec.missing_rate > 0.0) {
    for (int& y : cells) {
      if (rng.uniform() < spec.missing_rate) y = kMissing;
    }
  }
  out.data = ResponseMatrix(I, kmax, std::move(cells));

  out.truth.model = spec.model;
  out.truth.echo.seed = spec.seed;
  ChainDraws chain;
  chain.betas.push_back(out.betas);
  std::vector<ItemDraw> items;
  for (std::size_t j = 0; j < J; ++j) {
    switch (spec.model) {
      case ModelTag::opum: {
        const auto& it = spec.opum_items[j];
        items.push_back({it.alphas(), it.mus(), it.zeta()});
        break;
      }
      case ModelTag::grm:
        items.push_back({{spec.grm_items[j].alpha()}, spec.grm_items[j].cutpoints(), false});
        break;
      case ModelTag::ggum: {
        const auto& it = spec.ggum_items[j];
        std::vector<double> a{it.alpha()};
        std::vector<double> t{it.delta()};
        t.insert(t.end(), it.free_taus().begin(), it.free_taus().end());
        items.push_back({std::move(a), std::move(t), false});
        break;
      }
    }
  }
  chain.items.push_back(std::move(items));
  out.truth.chains.push_back(std::move(chain));
  return out;
}

// ---------------------------------------------------------------------------
// Item designs
//
// Items are built from attraction points: option m has utility
// -gain (beta - psi_m)^2 up to a shared term, giving alpha_m = 2 gain
// (psi_m - psi_0) and mu_m = (psi_m + psi_0) / 2.

inline OpumItem item_from_points(std::span<const double> psi, double gain, bool zeta = false) {
  OpumItem base = OpumItem::from_psi(psi, zeta);
  auto a = base.alphas();
  for (double& v : a) v *= gain;
  return OpumItem(std::move(a), base.mus(), zeta);
}

/// Categories rise with beta across [-3, 3]: options 0..K sit left to right
/// around `center`, the negative options far to the left.
inline OpumItem monotone_item(int max_category, double center, double gain = 1.5,
                              double spacing = 0.9) {
  const int K = max_category;
  std::vector<double> psi(static_cast<std::size_t>(2 * K + 1));
  const double start = center - 0.5 * spacing * K;
  for (int k = 0; k <= K; ++k) psi[static_cast<std::size_t>(K + k)] = start + spacing * k;
  for (int k = 1; k <= K; ++k) psi[static_cast<std::size_t>(K - k)] = start - 7.0 - k;
  return item_from_points(psi, gain);
}

/// Category 0 near `center`; higher categories further out on both sides.
/// `skew` stretches the right-hand points relative to the left.
inline OpumItem unfolding_item(int max_category, double center, double gain = 1.5,
                               double spacing = 0.8, double skew = 1.0) {
  const int K = max_category;
  std::vector<double> psi(static_cast<std::size_t>(2 * K + 1));
  psi[static_cast<std::size_t>(K)] = center;
  for (int k = 1; k <= K; ++k) {
    psi[static_cast<std::size_t>(K + k)] = center + skew * (0.4 + spacing * k);
    psi[static_cast<std::size_t>(K - k)] = center - (0.4 + spacing * k);
  }
  return item_from_points(psi, gain);
}

/// Six monotone items over a spread of locations and four unfolding items,
/// K = 4 each.
inline std::vector<OpumItem> mixed_design(int max_category = 4) {
  std::vector<OpumItem> items;
  for (double c : {-1.5, -0.9, -0.3, 0.3, 0.9, 1.5}) items.push_back(monotone_item(max_category, c));
  items.push_back(unfolding_item(max_category, -1.0, 1.5, 0.8, 1.2));
  items.push_back(unfolding_item(max_category, -0.3, 1.5, 0.7, 0.8));
  items.push_back(unfolding_item(max_category, 0.4, 1.5, 0.8, 1.1));
  items.push_back(unfolding_item(max_category, 1.1, 1.5, 0.7, 0.9));
  return items;
}

/// Items symmetric about 0 (alpha_m = -alpha_{-m}, mu_m = -mu_{-m}), so the
/// likelihood cannot tell beta from -beta.
inline std::vector<OpumItem> symmetric_design(std::size_t n_items, int max_category = 4) {
  std::vector<OpumItem> items;
  for (std::size_t j = 0; j < n_items; ++j) {
    items.push_back(unfolding_item(max_category, 0.0, 1.5, 0.5 + 0.1 * static_cast<double>(j), 1.0));
  }
  return items;
}

inline std::vector<OpumItem> monotone_design(std::size_t n_items, int max_category = 4,
                                             double gain = 3.0) {
  std::vector<OpumItem> items;
  for (std::size_t j = 0; j < n_items; ++j) {
    const double c = n_items == 1 ? 0.0 : -1.2 + 2.4 * static_cast<double>(j) / static_cast<double>(n_items - 1);
    items.push_back(monotone_item(max_category, c, gain));
  }
  return items;
}

inline std::vector<GrmItem> grm_design(std::size_t n_items, int max_category = 4) {
  std::vector<GrmItem> items;
  for (std::size_t j = 0; j < n_items; ++j) {
    const double shift = n_items == 1 ? 0.0 : -1.0 + 2.0 * static_cast<double>(j) / static_cast<double>(n_items - 1);
    std::vector<double> tau;
    for (int k = 0; k < max_category; ++k) tau.push_back(-1.5 + 3.0 * k / std::max(1, max_category - 1) + shift);
    items.emplace_back(1.5, std::move(tau));
  }
  return items;
}

inline std::vector<GgumItem> ggum_design(std::size_t n_items, int max_category = 3) {
  std::vector<GgumItem> items;
  for (std::size_t j = 0; j < n_items; ++j) {
    const double delta = n_items == 1 ? 0.0 : -1.5 + 3.0 * static_cast<double>(j) / static_cast<double>(n_items - 1);
    std::vector<double> tau;
    for (int k = 1; k <= max_category; ++k) tau.push_back(-1.2 + 0.25 * (k - 1));
    items.emplace_back(1.0, delta, std::move(tau));
  }
  return items;
}

/// Reverse-codes column j: y -> K_j - y.
inline ResponseMatrix reverse_item(const ResponseMatrix& data, std::size_t j) {
  std::vector<int> cells = data.cells();
  for (std::size_t i = 0; i < data.n_subjects(); ++i) {
    int& y = cells[i * data.n_items() + j];
    if (y != kMissing) y = data.max_category(j) - y;
  }
  return ResponseMatrix(data.n_subjects(), data.max_categories(), std::move(cells), data.item_names());
}

}  // namespace unfold
