#pragma once

// Random items and chain states shared by the sampler tests and the
// acceptance run.

#include <algorithm>
#include <cmath>
#include <vector>

#include "unfold/opum_sampler.hpp"

namespace fixture {

using namespace unfold;

inline OpumItem random_item(Rng& rng, int K, double scale = 1.5) {
  std::vector<double> pos(K), neg(K), mu(2 * K + 1, 0.0);
  for (auto& v : pos) v = std::abs(scale * rng.normal()) + 0.05;
  for (auto& v : neg) v = -std::abs(scale * rng.normal()) - 0.05;
  std::sort(pos.begin(), pos.end());
  std::sort(neg.begin(), neg.end());
  std::vector<double> a(2 * K + 1, 0.0);
  for (int s = 0; s < K; ++s) {
    a[s] = neg[s];
    a[K + 1 + s] = pos[s];
  }
  for (int s = 0; s < 2 * K + 1; ++s) {
    if (s != K) mu[s] = 1.5 * rng.normal();
  }
  return OpumItem(a, mu);
}

inline ChainState make_state(const ResponseMatrix& data, std::vector<OpumItem> items, std::vector<double> betas,
                      Rng& rng) {
  ChainState s;
  s.layout = LatentLayout(data.max_categories());
  s.items = std::move(items);
  s.betas = std::move(betas);
  s.z.assign(data.n_subjects() * s.layout.row_width(), 0.0);
  for (std::size_t i = 0; i < data.n_subjects(); ++i) redraw_subject_latents(s, data, i, rng);
  return s;
}

struct Instance {
  ResponseMatrix data;
  ChainState state;
};

inline Instance random_instance(Rng& rng, std::size_t I, std::size_t J, int K, double missing = 0.2) {
  std::vector<int> cells;
  for (std::size_t c = 0; c < I * J; ++c) {
    cells.push_back(rng.uniform() < missing ? kMissing : static_cast<int>(rng.index(K + 1)));
  }
  ResponseMatrix data(I, std::vector<int>(J, K), cells);
  std::vector<OpumItem> items;
  for (std::size_t j = 0; j < J; ++j) items.push_back(random_item(rng, K));
  std::vector<double> betas(I);
  for (auto& b : betas) b = rng.normal();
  ChainState st = make_state(data, items, betas, rng);
  return {std::move(data), std::move(st)};
}

}  // namespace fixture
