#pragma once

#include <cmath>
#include <cstddef>
#include <cstdint>
#include <optional>
#include <span>
#include <stdexcept>
#include <string>
#include <vector>

namespace unfold {

/// Raised for bad input: malformed files, invalid parameters, violated
/// preconditions. The CLI maps these to exit code 1.
class UserError : public std::runtime_error {
 public:
  using std::runtime_error::runtime_error;
};

/// Raised when an internal invariant breaks (e.g. a latent draw escaping its
/// truncation region). The CLI maps these to exit code 2.
class InvariantError : public std::logic_error {
 public:
  using std::logic_error::logic_error;
};

enum class ModelTag { opum, grm, ggum };

inline std::string to_string(ModelTag tag) {
  switch (tag) {
    case ModelTag::opum: return "opum";
    case ModelTag::grm: return "grm";
    case ModelTag::ggum: return "ggum";
  }
  return "?";
}

inline ModelTag parse_model_tag(const std::string& s) {
  if (s == "opum") return ModelTag::opum;
  if (s == "grm") return ModelTag::grm;
  if (s == "ggum") return ModelTag::ggum;
  throw UserError("unknown model tag '" + s + "' (expected opum, grm or ggum)");
}

inline constexpr int kMissing = -1;

/// I x J matrix of ordinal responses. Item j takes categories 0..K_j;
/// missing cells are stored as kMissing and never enter a likelihood.
class ResponseMatrix {
 public:
  ResponseMatrix() = default;

  ResponseMatrix(std::size_t n_subjects, std::vector<int> max_category,
                 std::vector<int> cells, std::vector<std::string> item_names = {})
      : n_subjects_(n_subjects),
        max_category_(std::move(max_category)),
        cells_(std::move(cells)),
        item_names_(std::move(item_names)) {
    if (cells_.size() != n_subjects_ * max_category_.size()) {
      throw UserError("response matrix: cell count does not match I x J");
    }
    for (std::size_t j = 0; j < max_category_.size(); ++j) {
      if (max_category_[j] < 1) {
        throw UserError("response matrix: item " + std::to_string(j) +
                        " has K_j < 1");
      }
    }
    for (std::size_t i = 0; i < n_subjects_; ++i) {
      for (std::size_t j = 0; j < n_items(); ++j) {
        const int y = at(i, j);
        if (y != kMissing && (y < 0 || y > max_category_[j])) {
          throw UserError("response matrix: cell (" + std::to_string(i) + ", " +
                          std::to_string(j) + ") = " + std::to_string(y) +
                          " outside 0.." + std::to_string(max_category_[j]));
        }
      }
    }
    if (item_names_.empty()) {
      for (std::size_t j = 0; j < n_items(); ++j) {
        item_names_.push_back("item" + std::to_string(j + 1));
      }
    }
    if (item_names_.size() != n_items()) {
      throw UserError("response matrix: item name count does not match J");
    }
  }

  std::size_t n_subjects() const { return n_subjects_; }
  std::size_t n_items() const { return max_category_.size(); }
  int max_category(std::size_t j) const { return max_category_[j]; }
  const std::vector<int>& max_categories() const { return max_category_; }
  const std::vector<std::string>& item_names() const { return item_names_; }

  int at(std::size_t i, std::size_t j) const { return cells_[i * n_items() + j]; }
  bool observed(std::size_t i, std::size_t j) const { return at(i, j) != kMissing; }
  const std::vector<int>& cells() const { return cells_; }

  std::size_t n_observed() const {
    std::size_t n = 0;
    for (int y : cells_) n += (y != kMissing);
    return n;
  }

  std::size_t n_observed_in_item(std::size_t j) const {
    std::size_t n = 0;
    for (std::size_t i = 0; i < n_subjects_; ++i) n += observed(i, j);
    return n;
  }

 private:
  std::size_t n_subjects_ = 0;
  std::vector<int> max_category_;
  std::vector<int> cells_;
  std::vector<std::string> item_names_;
};

/// Raw table as read from disk: nullopt marks an empty (missing) cell.
using RawTable = std::vector<std::vector<std::optional<int>>>;

struct ValidationResult {
  ResponseMatrix matrix;
  std::vector<std::string> warnings;
};

/// Builds a ResponseMatrix from a raw integer table. K_j is the largest
/// observed label unless `max_category_override` supplies it.
inline ValidationResult validate_matrix(const RawTable& raw,
                                        std::vector<std::string> item_names = {},
                                        const std::vector<int>& max_category_override = {}) {
  if (raw.empty()) throw UserError("response table has no rows");
  const std::size_t n_items = raw.front().size();
  if (n_items == 0) throw UserError("response table has no columns");
  for (std::size_t i = 0; i < raw.size(); ++i) {
    if (raw[i].size() != n_items) {
      throw UserError("response table is not rectangular: row " + std::to_string(i + 1) +
                      " has " + std::to_string(raw[i].size()) + " cells, expected " +
                      std::to_string(n_items));
    }
  }
  if (!max_category_override.empty() && max_category_override.size() != n_items) {
    throw UserError("max-category override length does not match the item count");
  }

  ValidationResult out;
  std::vector<int> cells(raw.size() * n_items, kMissing);
  std::vector<int> max_seen(n_items, -1);
  std::vector<int> min_seen(n_items, -1);
  std::vector<std::size_t> row_count(raw.size(), 0);
  std::vector<std::size_t> col_count(n_items, 0);

  for (std::size_t i = 0; i < raw.size(); ++i) {
    for (std::size_t j = 0; j < n_items; ++j) {
      if (!raw[i][j]) continue;
      const int y = *raw[i][j];
      if (y < 0) {
        throw UserError("negative category label " + std::to_string(y) + " at row " +
                        std::to_string(i + 1) + ", column " + std::to_string(j + 1));
      }
      cells[i * n_items + j] = y;
      max_seen[j] = std::max(max_seen[j], y);
      min_seen[j] = min_seen[j] < 0 ? y : std::min(min_seen[j], y);
      ++row_count[i];
      ++col_count[j];
    }
  }
  for (std::size_t i = 0; i < raw.size(); ++i) {
    if (row_count[i] == 0) throw UserError("row " + std::to_string(i + 1) + " is empty");
  }
  std::vector<int> max_category(n_items);
  for (std::size_t j = 0; j < n_items; ++j) {
    if (col_count[j] == 0) throw UserError("column " + std::to_string(j + 1) + " is empty");
    if (min_seen[j] == max_seen[j]) {
      out.warnings.push_back("item " + std::to_string(j + 1) +
                             " has a single observed category");
    }
    max_category[j] = max_category_override.empty() ? max_seen[j] : max_category_override[j];
    if (max_category[j] < max_seen[j]) {
      throw UserError("item " + std::to_string(j + 1) + " has label " +
                      std::to_string(max_seen[j]) + " above its configured K_j");
    }
    if (max_category[j] < 1) {
      max_category[j] = 1;
    }
  }
  out.matrix = ResponseMatrix(raw.size(), std::move(max_category), std::move(cells),
                              std::move(item_names));
  return out;
}

/// Observed category under the item's scale direction: y when zeta is unset,
/// K - y when the item is reverse coded.
constexpr int effective_response(int y, int max_category, bool zeta) {
  return zeta ? max_category - y : y;
}

/// Parameters of one unfolding item. Latent options are indexed
/// m = -K..K; storage index is m + K. The center entries are pinned at 0.
class OpumItem {
 public:
  OpumItem() = default;

  /// `alphas` and `mus` hold all 2K+1 entries (center included, must be 0).
  OpumItem(std::vector<double> alphas, std::vector<double> mus, bool zeta = false)
      : alphas_(std::move(alphas)), mus_(std::move(mus)), zeta_(zeta) {
    if (alphas_.size() != mus_.size() || alphas_.size() < 3 || alphas_.size() % 2 == 0) {
      throw UserError("OPUM item needs 2K+1 alphas and mus with K >= 1");
    }
    validate();
  }

  /// Builds an item from the 2K non-center values, ordered m = -K..-1, 1..K.
  static OpumItem from_free(std::span<const double> alphas, std::span<const double> mus,
                            bool zeta = false) {
    if (alphas.size() != mus.size() || alphas.empty() || alphas.size() % 2 != 0) {
      throw UserError("OPUM item needs 2K alphas and 2K mus (center excluded)");
    }
    const std::size_t k = alphas.size() / 2;
    std::vector<double> a(2 * k + 1, 0.0), m(2 * k + 1, 0.0);
    for (std::size_t s = 0; s < k; ++s) {
      a[s] = alphas[s];
      m[s] = mus[s];
      a[k + 1 + s] = alphas[k + s];
      m[k + 1 + s] = mus[k + s];
    }
    return OpumItem(std::move(a), std::move(m), zeta);
  }

  /// Attraction points psi_{-K} < ... < psi_K mapped to alpha_m = 2(psi_m - psi_0)
  /// and mu_m = (psi_m + psi_0) / 2.
  static OpumItem from_psi(std::span<const double> psi, bool zeta = false) {
    if (psi.size() < 3 || psi.size() % 2 == 0) {
      throw UserError("attraction points need 2K+1 entries");
    }
    for (std::size_t s = 1; s < psi.size(); ++s) {
      if (!(psi[s - 1] < psi[s])) throw UserError("attraction points must be strictly increasing");
    }
    const std::size_t k = psi.size() / 2;
    const double center = psi[k];
    std::vector<double> a(psi.size()), m(psi.size());
    for (std::size_t s = 0; s < psi.size(); ++s) {
      a[s] = 2.0 * (psi[s] - center);
      m[s] = 0.5 * (psi[s] + center);
    }
    a[k] = 0.0;
    m[k] = 0.0;
    return OpumItem(std::move(a), std::move(m), zeta);
  }

  int max_category() const { return static_cast<int>(alphas_.size() / 2); }
  std::size_t width() const { return alphas_.size(); }

  double alpha(int m) const { return alphas_[static_cast<std::size_t>(m + max_category())]; }
  double mu(int m) const { return mus_[static_cast<std::size_t>(m + max_category())]; }
  bool zeta() const { return zeta_; }
  void set_zeta(bool z) { zeta_ = z; }

  const std::vector<double>& alphas() const { return alphas_; }
  const std::vector<double>& mus() const { return mus_; }
  std::vector<double>& mutable_alphas() { return alphas_; }
  std::vector<double>& mutable_mus() { return mus_; }

  /// eta_m = alpha_m (beta - mu_m), the mean of latent utility difference m.
  void linear_predictor(double beta, std::span<double> eta) const {
    for (std::size_t s = 0; s < alphas_.size(); ++s) eta[s] = alphas_[s] * (beta - mus_[s]);
  }

  bool in_order_polytope() const {
    const std::size_t k = alphas_.size() / 2;
    if (alphas_[k] != 0.0 || mus_[k] != 0.0) return false;
    for (std::size_t s = 1; s < alphas_.size(); ++s) {
      if (!(alphas_[s - 1] < alphas_[s])) return false;
    }
    for (double v : alphas_) {
      if (!std::isfinite(v)) return false;
    }
    for (double v : mus_) {
      if (!std::isfinite(v)) return false;
    }
    return true;
  }

  void validate() const {
    if (!in_order_polytope()) {
      throw UserError("OPUM item violates alpha_{-K} < ... < alpha_{-1} < 0 < alpha_1 < ... < alpha_K "
                      "or has non-zero / non-finite center entries");
    }
  }

 private:
  std::vector<double> alphas_;
  std::vector<double> mus_;
  bool zeta_ = false;
};

enum class Link { probit, logistic };

/// Graded response item. Cut points tau_0 < ... < tau_{K-1} define
/// Pr(y <= k | beta) = G(tau_k + alpha beta) = G(alpha (beta - mu_k)) with
/// location mu_k = -tau_k / alpha.
class GrmItem {
 public:
  GrmItem() = default;

  GrmItem(double alpha, std::vector<double> cutpoints, Link link = Link::probit)
      : alpha_(alpha), cutpoints_(std::move(cutpoints)), link_(link) {
    if (cutpoints_.empty()) throw UserError("GRM item needs at least one cut point");
    if (!std::isfinite(alpha_)) throw UserError("GRM discrimination must be finite");
    for (std::size_t k = 0; k < cutpoints_.size(); ++k) {
      if (!std::isfinite(cutpoints_[k])) throw UserError("GRM cut points must be finite");
      if (k > 0 && !(cutpoints_[k - 1] < cutpoints_[k])) {
        throw UserError("GRM cut points must be strictly increasing");
      }
    }
  }

  /// Location form: tau_k = -alpha mu_k. With alpha > 0 the locations must
  /// therefore decrease in k.
  static GrmItem from_locations(double alpha, std::span<const double> mus,
                                Link link = Link::probit) {
    std::vector<double> tau(mus.size());
    for (std::size_t k = 0; k < mus.size(); ++k) tau[k] = -alpha * mus[k];
    if (alpha == 0.0 && mus.size() == 1) return GrmItem(0.0, tau, link);
    return GrmItem(alpha, std::move(tau), link);
  }

  int max_category() const { return static_cast<int>(cutpoints_.size()); }
  double alpha() const { return alpha_; }
  const std::vector<double>& cutpoints() const { return cutpoints_; }
  double location(std::size_t k) const { return -cutpoints_[k] / alpha_; }
  Link link() const { return link_; }

 private:
  double alpha_ = 1.0;
  std::vector<double> cutpoints_;
  Link link_ = Link::probit;
};

/// Generalized graded unfolding item. Only tau_1..tau_K are free; the full
/// vector over 0..2K+1 has tau_0 = tau_{K+1} = 0 and tau_{2K+2-k} = -tau_k.
class GgumItem {
 public:
  GgumItem() = default;

  GgumItem(double alpha, double delta, std::vector<double> free_taus)
      : alpha_(alpha), delta_(delta), free_taus_(std::move(free_taus)) {
    if (!(alpha_ > 0.0) || !std::isfinite(alpha_)) throw UserError("GGUM alpha must be positive");
    if (!std::isfinite(delta_)) throw UserError("GGUM delta must be finite");
    if (free_taus_.empty()) throw UserError("GGUM item needs K >= 1 thresholds");
  }

  int max_category() const { return static_cast<int>(free_taus_.size()); }
  double alpha() const { return alpha_; }
  double delta() const { return delta_; }
  const std::vector<double>& free_taus() const { return free_taus_; }

  /// tau_0..tau_{2K+1}.
  std::vector<double> full_taus() const {
    const std::size_t k = free_taus_.size();
    std::vector<double> tau(2 * k + 2, 0.0);
    for (std::size_t s = 1; s <= k; ++s) {
      tau[s] = free_taus_[s - 1];
      tau[2 * k + 2 - s] = -free_taus_[s - 1];
    }
    return tau;
  }

 private:
  double alpha_ = 1.0;
  double delta_ = 0.0;
  std::vector<double> free_taus_;
};

/// Hyperparameters of the truncated Gaussian item prior. The mean of mu_m is
/// upsilon_m = sign(m) * upsilon_offset + upsilon_slope * m, which is
/// antisymmetric in m by construction.
struct PriorConfig {
  double kappa_sq = 100.0;
  double omega_sq = 25.0;
  double upsilon_offset = 4.0;
  double upsilon_slope = 1.5;

  double upsilon(int m) const {
    if (m == 0) return 0.0;
    return (m > 0 ? upsilon_offset : -upsilon_offset) + upsilon_slope * m;
  }

  std::vector<double> upsilon_vector(int max_category) const {
    std::vector<double> v(static_cast<std::size_t>(2 * max_category + 1));
    for (int m = -max_category; m <= max_category; ++m) v[m + max_category] = upsilon(m);
    return v;
  }

  void validate() const {
    if (!(kappa_sq > 0.0) || !(omega_sq > 0.0)) {
      throw UserError("prior variances kappa_sq and omega_sq must be positive");
    }
  }
};

/// Offsets of each item's latent block inside a subject's row of z.
class LatentLayout {
 public:
  LatentLayout() = default;
  explicit LatentLayout(const std::vector<int>& max_category) {
    offsets_.reserve(max_category.size());
    for (int k : max_category) {
      offsets_.push_back(row_width_);
      widths_.push_back(static_cast<std::size_t>(2 * k + 1));
      row_width_ += static_cast<std::size_t>(2 * k + 1);
    }
  }
  std::size_t row_width() const { return row_width_; }
  std::size_t offset(std::size_t j) const { return offsets_[j]; }
  std::size_t width(std::size_t j) const { return widths_[j]; }

 private:
  std::vector<std::size_t> offsets_;
  std::vector<std::size_t> widths_;
  std::size_t row_width_ = 0;
};

/// One MCMC state. Owned by a single chain.
struct ChainState {
  std::vector<double> betas;
  std::vector<OpumItem> items;
  LatentLayout layout;
  std::vector<double> z;  // subject-major: z[i * row_width + offset(j) + m + K_j]
  std::size_t iteration = 0;

  std::span<double> latent(std::size_t i, std::size_t j) {
    return {z.data() + i * layout.row_width() + layout.offset(j), layout.width(j)};
  }
  std::span<const double> latent(std::size_t i, std::size_t j) const {
    return {z.data() + i * layout.row_width() + layout.offset(j), layout.width(j)};
  }
};

/// Stored parameters of one item at one saved iteration. For OPUM the vectors
/// hold all 2K+1 entries; for GRM `alphas` = {alpha} and `mus` = cut points.
struct ItemDraw {
  std::vector<double> alphas;
  std::vector<double> mus;
  bool zeta = false;

  bool operator==(const ItemDraw&) const = default;
};

struct ChainDraws {
  std::vector<std::vector<double>> betas;             // [draw][subject]
  std::vector<std::vector<ItemDraw>> items;           // [draw][item]
  std::vector<std::size_t> loglik_draws;              // draw indices carrying a loglik row
  std::vector<std::vector<double>> loglik;            // [row][observed cell]
  std::size_t zeta_accepted = 0, zeta_proposed = 0;
  std::size_t beta_flip_accepted = 0, beta_flip_proposed = 0;

  bool operator==(const ChainDraws&) const = default;
};

struct SamplerEcho {
  std::size_t n_iterations = 0;
  std::size_t burn_in = 0;
  std::size_t thin = 1;
  std::uint64_t seed = 0;

  bool operator==(const SamplerEcho&) const = default;
};

struct PosteriorDraws {
  ModelTag model = ModelTag::opum;
  SamplerEcho echo;
  std::vector<ChainDraws> chains;

  std::size_t n_draws_per_chain() const { return chains.empty() ? 0 : chains.front().betas.size(); }

  bool operator==(const PosteriorDraws&) const = default;

  void validate() const {
    const std::size_t n = n_draws_per_chain();
    for (const auto& c : chains) {
      if (c.betas.size() != n || c.items.size() != n) {
        throw InvariantError("posterior draws: inconsistent draw counts across chains/parameters");
      }
      if (model != ModelTag::opum) continue;
      for (const auto& d : c.items) {
        for (const auto& it : d) {
          OpumItem probe(it.alphas, it.mus, it.zeta);
          (void)probe;
        }
      }
    }
  }
};

/// Cells observed in row-major (subject, item) order; the column order of
/// every pointwise log-likelihood row.
inline std::vector<std::pair<std::size_t, std::size_t>> observed_cells(const ResponseMatrix& data) {
  std::vector<std::pair<std::size_t, std::size_t>> cells;
  cells.reserve(data.n_observed());
  for (std::size_t i = 0; i < data.n_subjects(); ++i) {
    for (std::size_t j = 0; j < data.n_items(); ++j) {
      if (data.observed(i, j)) cells.emplace_back(i, j);
    }
  }
  return cells;
}

}  // namespace unfold
