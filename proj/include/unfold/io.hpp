#pragma once

#include <charconv>
#include <cstdlib>
#include <filesystem>
#include <fstream>
#include <map>
#include <optional>
#include <sstream>
#include <string>
#include <string_view>
#include <system_error>
#include <vector>

#include "unfold/core.hpp"
#include "unfold/grm_sampler.hpp"
#include "unfold/opum_sampler.hpp"

namespace unfold {

namespace fs = std::filesystem;

// ---------------------------------------------------------------------------
// Text helpers

/// Shortest decimal that parses back to the same double.
inline std::string format_double(double v) {
  char buf[32];
  const auto res = std::to_chars(buf, buf + sizeof buf, v);
  return std::string(buf, res.ptr);
}

inline std::string_view trim(std::string_view s) {
  while (!s.empty() && (s.front() == ' ' || s.front() == '\t' || s.front() == '\r')) s.remove_prefix(1);
  while (!s.empty() && (s.back() == ' ' || s.back() == '\t' || s.back() == '\r')) s.remove_suffix(1);
  return s;
}

inline std::vector<std::string_view> split_csv(std::string_view line) {
  std::vector<std::string_view> out;
  std::size_t start = 0;
  for (;;) {
    const std::size_t pos = line.find(',', start);
    out.push_back(trim(line.substr(start, pos == std::string_view::npos ? std::string_view::npos : pos - start)));
    if (pos == std::string_view::npos) break;
    start = pos + 1;
  }
  return out;
}

template <class T>
T parse_number(std::string_view s, const std::string& where) {
  s = trim(s);
  T v{};
  if (!s.empty() && s.front() == '+') s.remove_prefix(1);
  const auto res = std::from_chars(s.data(), s.data() + s.size(), v);
  if (res.ec != std::errc() || res.ptr != s.data() + s.size() || s.empty()) {
    throw UserError(where + ": cannot parse '" + std::string(s) + "' as a number");
  }
  return v;
}

inline bool parse_bool(std::string_view s, const std::string& where) {
  s = trim(s);
  if (s == "1" || s == "true" || s == "yes" || s == "on") return true;
  if (s == "0" || s == "false" || s == "no" || s == "off") return false;
  throw UserError(where + ": cannot parse '" + std::string(s) + "' as a boolean");
}

inline std::ifstream open_input(const fs::path& path) {
  std::ifstream in(path);
  if (!in) throw UserError("cannot open '" + path.string() + "' for reading");
  return in;
}

inline std::ofstream open_output(const fs::path& path) {
  std::ofstream out(path);
  if (!out) throw UserError("cannot open '" + path.string() + "' for writing");
  return out;
}

// ---------------------------------------------------------------------------
// Responses

/// CSV with a header of item names; integer cells, empty or NA cell = missing.
inline ValidationResult parse_responses(std::istream& in, const std::string& source = "input",
                                        const std::vector<int>& max_category_override = {}) {
  std::string line;
  if (!std::getline(in, line)) throw UserError(source + ": empty file");
  if (line.size() >= 3 && line.compare(0, 3, "\xEF\xBB\xBF") == 0) line.erase(0, 3);
  std::vector<std::string> names;
  for (auto f : split_csv(line)) names.emplace_back(f);
  RawTable raw;
  std::size_t lineno = 1;
  while (std::getline(in, line)) {
    ++lineno;
    if (trim(line).empty()) continue;
    const auto fields = split_csv(line);
    if (fields.size() != names.size()) {
      throw UserError(source + ": line " + std::to_string(lineno) + " has " +
                      std::to_string(fields.size()) + " fields, header has " +
                      std::to_string(names.size()));
    }
    std::vector<std::optional<int>> row;
    for (auto f : fields) {
      if (f.empty() || f == "NA") {
        row.emplace_back();
      } else {
        row.emplace_back(parse_number<int>(f, source + ": line " + std::to_string(lineno)));
      }
    }
    raw.push_back(std::move(row));
  }
  return validate_matrix(raw, std::move(names), max_category_override);
}

inline ValidationResult load_responses(const fs::path& path,
                                       const std::vector<int>& max_category_override = {}) {
  auto in = open_input(path);
  return parse_responses(in, path.string(), max_category_override);
}

inline void write_responses(std::ostream& out, const ResponseMatrix& data) {
  for (std::size_t j = 0; j < data.n_items(); ++j) out << (j ? "," : "") << data.item_names()[j];
  out << '\n';
  for (std::size_t i = 0; i < data.n_subjects(); ++i) {
    for (std::size_t j = 0; j < data.n_items(); ++j) {
      if (j) out << ',';
      if (data.observed(i, j)) out << data.at(i, j);
    }
    out << '\n';
  }
}

inline void save_responses(const fs::path& path, const ResponseMatrix& data) {
  auto out = open_output(path);
  write_responses(out, data);
}

// ---------------------------------------------------------------------------
// Run configuration

struct RunConfig {
  ModelTag model = ModelTag::opum;
  SamplerConfig sampler;
  GrmConfig grm;
  std::string input;
  std::string output;

  /// GRM run shape follows the sampler keys.
  GrmConfig grm_config() const {
    GrmConfig g = grm;
    g.n_iterations = sampler.n_iterations;
    g.burn_in = sampler.burn_in;
    g.thin = sampler.thin;
    g.n_chains = sampler.n_chains;
    g.seed = sampler.seed;
    g.loglik_every = sampler.loglik_every;
    g.threads = sampler.threads;
    return g;
  }
};

/// Flat `key = value` lines; `#` starts a comment. Unknown keys are errors.
inline RunConfig parse_config(std::istream& in, const std::string& source = "config") {
  RunConfig c;
  std::string line;
  std::size_t lineno = 0;
  while (std::getline(in, line)) {
    ++lineno;
    const auto hash = line.find('#');
    std::string_view body = trim(std::string_view(line).substr(0, hash));
    if (body.empty()) continue;
    const auto eq = body.find('=');
    const std::string where = source + ":" + std::to_string(lineno);
    if (eq == std::string_view::npos) throw UserError(where + ": expected key = value");
    const std::string key(trim(body.substr(0, eq)));
    const std::string_view val = trim(body.substr(eq + 1));
    auto sz = [&] { return parse_number<std::size_t>(val, where); };
    auto dbl = [&] { return parse_number<double>(val, where); };

    if (key == "model") c.model = parse_model_tag(std::string(val));
    else if (key == "input") c.input = std::string(val);
    else if (key == "output") c.output = std::string(val);
    else if (key == "sampler.n_iterations") c.sampler.n_iterations = sz();
    else if (key == "sampler.burn_in") c.sampler.burn_in = sz();
    else if (key == "sampler.thin") c.sampler.thin = sz();
    else if (key == "sampler.n_chains") c.sampler.n_chains = sz();
    else if (key == "sampler.seed") c.sampler.seed = parse_number<std::uint64_t>(val, where);
    else if (key == "sampler.mh_period") c.sampler.mh_period = sz();
    else if (key == "sampler.flip_proposal_var") c.sampler.flip_proposal_var = dbl();
    else if (key == "sampler.enable_zeta") c.sampler.enable_zeta = parse_bool(val, where);
    else if (key == "sampler.enable_beta_flip") c.sampler.enable_beta_flip = parse_bool(val, where);
    else if (key == "sampler.enable_rescale") c.sampler.enable_rescale = parse_bool(val, where);
    else if (key == "sampler.enable_ancillary") c.sampler.enable_ancillary = parse_bool(val, where);
    else if (key == "sampler.zeta_start_sweeps") c.sampler.zeta_start_sweeps = sz();
    else if (key == "sampler.prior_init") c.sampler.prior_init = parse_bool(val, where);
    else if (key == "sampler.alpha_sweeps") c.sampler.alpha_sweeps = parse_number<int>(val, where);
    else if (key == "sampler.loglik_every") c.sampler.loglik_every = sz();
    else if (key == "sampler.threads") c.sampler.threads = sz();
    else if (key == "prior.kappa_sq") c.sampler.prior.kappa_sq = dbl();
    else if (key == "prior.omega_sq") c.sampler.prior.omega_sq = dbl();
    else if (key == "prior.upsilon_offset") c.sampler.prior.upsilon_offset = dbl();
    else if (key == "prior.upsilon_slope") c.sampler.prior.upsilon_slope = dbl();
    else if (key == "grm.alpha_prior_var") c.grm.alpha_prior_var = dbl();
    else if (key == "grm.tau_prior_var") c.grm.tau_prior_var = dbl();
    else if (key == "grm.tau_prior_step") c.grm.tau_prior_step = dbl();
    else if (key == "grm.tau_prior_gap") c.grm.tau_prior_gap = dbl();
    else throw UserError(where + ": unknown config key '" + key + "'");
  }
  return c;
}

inline RunConfig load_config(const fs::path& path) {
  auto in = open_input(path);
  return parse_config(in, path.string());
}

/// UNFOLD_SEED, when set, replaces the configured seed.
inline void apply_seed_env(SamplerConfig& config) {
  if (const char* env = std::getenv("UNFOLD_SEED"); env && *env) {
    config.seed = parse_number<std::uint64_t>(env, "UNFOLD_SEED");
  }
}

// ---------------------------------------------------------------------------
// Posterior draws

inline void save_draws(const PosteriorDraws& draws, const fs::path& dir) {
  fs::create_directories(dir);
  {
    auto out = open_output(dir / "beta.csv");
    out << "chain,draw,subject,value\n";
    for (std::size_t c = 0; c < draws.chains.size(); ++c) {
      const auto& ch = draws.chains[c];
      for (std::size_t d = 0; d < ch.betas.size(); ++d) {
        for (std::size_t i = 0; i < ch.betas[d].size(); ++i) {
          out << c << ',' << d << ',' << i << ',' << format_double(ch.betas[d][i]) << '\n';
        }
      }
    }
  }
  {
    auto out = open_output(dir / "items.csv");
    auto zeta = open_output(dir / "zeta.csv");
    out << "chain,draw,item,m,alpha,mu\n";
    zeta << "chain,draw,item,zeta\n";
    for (std::size_t c = 0; c < draws.chains.size(); ++c) {
      const auto& ch = draws.chains[c];
      for (std::size_t d = 0; d < ch.items.size(); ++d) {
        for (std::size_t j = 0; j < ch.items[d].size(); ++j) {
          const ItemDraw& it = ch.items[d][j];
          if (draws.model == ModelTag::opum) {
            const int K = static_cast<int>(it.alphas.size() / 2);
            for (int m = -K; m <= K; ++m) {
              out << c << ',' << d << ',' << j << ',' << m << ','
                  << format_double(it.alphas[static_cast<std::size_t>(m + K)]) << ','
                  << format_double(it.mus[static_cast<std::size_t>(m + K)]) << '\n';
            }
          } else {
            // GRM: alpha repeated on every cut-point row. GGUM truth: mu
            // holds delta then the free thresholds.
            for (std::size_t m = 0; m < it.mus.size(); ++m) {
              out << c << ',' << d << ',' << j << ',' << m << ',' << format_double(it.alphas.front())
                  << ',' << format_double(it.mus[m]) << '\n';
            }
          }
          zeta << c << ',' << d << ',' << j << ',' << (it.zeta ? 1 : 0) << '\n';
        }
      }
    }
  }
  bool any_loglik = false;
  for (const auto& ch : draws.chains) any_loglik = any_loglik || !ch.loglik.empty();
  if (any_loglik) {
    auto out = open_output(dir / "loglik.csv");
    out << "chain,draw,cell,value\n";
    for (std::size_t c = 0; c < draws.chains.size(); ++c) {
      const auto& ch = draws.chains[c];
      for (std::size_t r = 0; r < ch.loglik.size(); ++r) {
        for (std::size_t q = 0; q < ch.loglik[r].size(); ++q) {
          out << c << ',' << ch.loglik_draws[r] << ',' << q << ',' << format_double(ch.loglik[r][q]) << '\n';
        }
      }
    }
  }
  auto out = open_output(dir / "manifest.txt");
  out << "model = " << to_string(draws.model) << '\n';
  out << "n_chains = " << draws.chains.size() << '\n';
  out << "n_draws = " << draws.n_draws_per_chain() << '\n';
  out << "n_iterations = " << draws.echo.n_iterations << '\n';
  out << "burn_in = " << draws.echo.burn_in << '\n';
  out << "thin = " << draws.echo.thin << '\n';
  out << "seed = " << draws.echo.seed << '\n';
  for (std::size_t c = 0; c < draws.chains.size(); ++c) {
    const auto& ch = draws.chains[c];
    out << "chain." << c << ".zeta_accepted = " << ch.zeta_accepted << '\n';
    out << "chain." << c << ".zeta_proposed = " << ch.zeta_proposed << '\n';
    out << "chain." << c << ".beta_flip_accepted = " << ch.beta_flip_accepted << '\n';
    out << "chain." << c << ".beta_flip_proposed = " << ch.beta_flip_proposed << '\n';
  }
}

inline std::map<std::string, std::string> read_key_values(const fs::path& path) {
  auto in = open_input(path);
  std::map<std::string, std::string> kv;
  std::string line;
  while (std::getline(in, line)) {
    const auto eq = line.find('=');
    if (trim(line).empty()) continue;
    if (eq == std::string::npos) throw UserError(path.string() + ": malformed line '" + line + "'");
    kv[std::string(trim(std::string_view(line).substr(0, eq)))] =
        std::string(trim(std::string_view(line).substr(eq + 1)));
  }
  return kv;
}

namespace detail {

/// Calls fn(fields, lineno) for every data row of a CSV with the given header.
template <class Fn>
void for_each_row(const fs::path& path, std::string_view header, std::size_t n_fields, Fn&& fn) {
  auto in = open_input(path);
  std::string line;
  if (!std::getline(in, line) || trim(line) != header) {
    throw UserError(path.string() + ": expected header '" + std::string(header) + "'");
  }
  std::size_t lineno = 1;
  while (std::getline(in, line)) {
    ++lineno;
    if (trim(line).empty()) continue;
    const auto f = split_csv(line);
    if (f.size() != n_fields) {
      throw UserError(path.string() + ": line " + std::to_string(lineno) + " has " +
                      std::to_string(f.size()) + " fields, expected " + std::to_string(n_fields));
    }
    fn(f, path.string() + ":" + std::to_string(lineno));
  }
}

template <class T>
T& grow(std::vector<T>& v, std::size_t idx) {
  if (v.size() <= idx) v.resize(idx + 1);
  return v[idx];
}

}  // namespace detail

inline PosteriorDraws load_draws(const fs::path& dir) {
  const auto kv = read_key_values(dir / "manifest.txt");
  auto get = [&](const std::string& key) {
    const auto it = kv.find(key);
    if (it == kv.end()) throw UserError((dir / "manifest.txt").string() + ": missing key '" + key + "'");
    return it->second;
  };
  PosteriorDraws out;
  out.model = parse_model_tag(get("model"));
  const auto n_chains = parse_number<std::size_t>(get("n_chains"), "manifest");
  out.echo.n_iterations = parse_number<std::size_t>(get("n_iterations"), "manifest");
  out.echo.burn_in = parse_number<std::size_t>(get("burn_in"), "manifest");
  out.echo.thin = parse_number<std::size_t>(get("thin"), "manifest");
  out.echo.seed = parse_number<std::uint64_t>(get("seed"), "manifest");
  out.chains.resize(n_chains);
  for (std::size_t c = 0; c < n_chains; ++c) {
    auto& ch = out.chains[c];
    const std::string p = "chain." + std::to_string(c) + ".";
    ch.zeta_accepted = parse_number<std::size_t>(get(p + "zeta_accepted"), "manifest");
    ch.zeta_proposed = parse_number<std::size_t>(get(p + "zeta_proposed"), "manifest");
    ch.beta_flip_accepted = parse_number<std::size_t>(get(p + "beta_flip_accepted"), "manifest");
    ch.beta_flip_proposed = parse_number<std::size_t>(get(p + "beta_flip_proposed"), "manifest");
  }
  auto chain_at = [&](std::string_view f, const std::string& where) -> ChainDraws& {
    const auto c = parse_number<std::size_t>(f, where);
    if (c >= n_chains) throw UserError(where + ": chain index out of range");
    return out.chains[c];
  };

  detail::for_each_row(dir / "beta.csv", "chain,draw,subject,value", 4, [&](const auto& f, const std::string& w) {
    auto& ch = chain_at(f[0], w);
    auto& d = detail::grow(ch.betas, parse_number<std::size_t>(f[1], w));
    detail::grow(d, parse_number<std::size_t>(f[2], w)) = parse_number<double>(f[3], w);
  });
  detail::for_each_row(dir / "items.csv", "chain,draw,item,m,alpha,mu", 6, [&](const auto& f, const std::string& w) {
    auto& ch = chain_at(f[0], w);
    auto& d = detail::grow(ch.items, parse_number<std::size_t>(f[1], w));
    auto& it = detail::grow(d, parse_number<std::size_t>(f[2], w));
    const int m = parse_number<int>(f[3], w);
    const double a = parse_number<double>(f[4], w), mu = parse_number<double>(f[5], w);
    if (out.model == ModelTag::opum) {
      // Rows run m = -K..K, so the first row of an item fixes K.
      if (it.alphas.empty()) {
        if (m >= 0) throw UserError(w + ": item rows must start at m = -K");
        it.alphas.assign(static_cast<std::size_t>(-2 * m + 1), 0.0);
        it.mus.assign(static_cast<std::size_t>(-2 * m + 1), 0.0);
      }
      const int K = static_cast<int>(it.alphas.size() / 2);
      if (m < -K || m > K) throw UserError(w + ": index m out of range");
      it.alphas[static_cast<std::size_t>(m + K)] = a;
      it.mus[static_cast<std::size_t>(m + K)] = mu;
    } else {
      if (m < 0) throw UserError(w + ": negative index");
      it.alphas.assign(1, a);
      detail::grow(it.mus, static_cast<std::size_t>(m)) = mu;
    }
  });
  detail::for_each_row(dir / "zeta.csv", "chain,draw,item,zeta", 4, [&](const auto& f, const std::string& w) {
    auto& ch = chain_at(f[0], w);
    auto& d = detail::grow(ch.items, parse_number<std::size_t>(f[1], w));
    detail::grow(d, parse_number<std::size_t>(f[2], w)).zeta = parse_bool(f[3], w);
  });
  if (fs::exists(dir / "loglik.csv")) {
    detail::for_each_row(dir / "loglik.csv", "chain,draw,cell,value", 4, [&](const auto& f, const std::string& w) {
      auto& ch = chain_at(f[0], w);
      const auto draw = parse_number<std::size_t>(f[1], w);
      if (ch.loglik_draws.empty() || ch.loglik_draws.back() != draw) {
        ch.loglik_draws.push_back(draw);
        ch.loglik.emplace_back();
      }
      const auto q = parse_number<std::size_t>(f[2], w);
      if (q != ch.loglik.back().size()) throw UserError(w + ": loglik cells out of order");
      ch.loglik.back().push_back(parse_number<double>(f[3], w));
    });
  }
  try {
    out.validate();
  } catch (const InvariantError& e) {
    throw UserError(dir.string() + ": " + e.what());
  }
  return out;
}

/// Stacks every chain's stored pointwise log-likelihood rows.
inline std::vector<std::vector<double>> stacked_loglik(const PosteriorDraws& draws) {
  std::vector<std::vector<double>> rows;
  for (const auto& ch : draws.chains) rows.insert(rows.end(), ch.loglik.begin(), ch.loglik.end());
  return rows;
}

// ---------------------------------------------------------------------------
// Staged output directories

/// Writes go to a sibling staging directory that replaces `target` on
/// commit() and is removed otherwise.
class StagedDir {
 public:
  explicit StagedDir(fs::path target) : target_(std::move(target)) {
    staging_ = target_;
    staging_ += ".partial";
    std::error_code ec;
    fs::remove_all(staging_, ec);
    fs::create_directories(staging_);
  }
  StagedDir(const StagedDir&) = delete;
  StagedDir& operator=(const StagedDir&) = delete;
  ~StagedDir() {
    if (!committed_) {
      std::error_code ec;
      fs::remove_all(staging_, ec);
    }
  }

  const fs::path& path() const { return staging_; }

  void commit() {
    std::error_code ec;
    fs::remove_all(target_, ec);
    fs::rename(staging_, target_);
    committed_ = true;
  }

 private:
  fs::path target_;
  fs::path staging_;
  bool committed_ = false;
};

}  // namespace unfold
