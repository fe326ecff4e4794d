#include <CLI11.hpp>

#include <cstdio>
#include <iostream>
#include <optional>

#include "unfold/unfold.hpp"

namespace fs = std::filesystem;
using namespace unfold;

namespace {

/// "a:b:step", inclusive of b up to rounding.
std::vector<double> parse_grid(const std::string& spec) {
  std::vector<std::string_view> f;
  std::size_t start = 0;
  for (std::size_t p = 0; p <= spec.size(); ++p) {
    if (p == spec.size() || spec[p] == ':') {
      f.push_back(trim(std::string_view(spec).substr(start, p - start)));
      start = p + 1;
    }
  }
  if (f.size() != 3) throw UserError("--grid expects lo:hi:step");
  const double lo = parse_number<double>(f[0], "--grid");
  const double hi = parse_number<double>(f[1], "--grid");
  const double step = parse_number<double>(f[2], "--grid");
  if (!(step > 0.0) || !(hi >= lo)) throw UserError("--grid needs lo <= hi and step > 0");
  const auto n = static_cast<std::size_t>(std::floor((hi - lo) / step + 1e-9)) + 1;
  if (n > 10'000'000) throw UserError("--grid has too many points");
  std::vector<double> g(n);
  for (std::size_t s = 0; s < n; ++s) g[s] = lo + step * static_cast<double>(s);
  return g;
}

std::vector<std::string> split_list(const std::string& s) {
  std::vector<std::string> out;
  for (auto f : split_csv(s)) {
    if (!f.empty()) out.emplace_back(f);
  }
  return out;
}

void write_waic(std::ostream& out, const std::string& prefix, const WaicReport& r) {
  out << prefix << "waic = " << format_double(r.waic) << '\n'
      << prefix << "lppd = " << format_double(r.lppd) << '\n'
      << prefix << "p_waic = " << format_double(r.p_waic) << '\n'
      << prefix << "n_draws = " << r.n_draws << '\n'
      << prefix << "variance = " << r.variance_convention << '\n';
}

/// Writes a single file through a temporary sibling.
template <class Fn>
void write_file_atomically(const fs::path& path, Fn&& fn) {
  fs::path tmp = path;
  tmp += ".partial";
  try {
    {
      auto out = open_output(tmp);
      fn(out);
      if (!out) throw UserError("write failed: " + tmp.string());
    }
    fs::rename(tmp, path);
  } catch (...) {
    std::error_code ec;
    fs::remove(tmp, ec);
    throw;
  }
}

struct FitFlags {
  std::string config;
  std::string model;
  std::string input;
  std::string output;
  std::optional<std::size_t> iters, burnin, thin, chains, threads, loglik_every, mh_period;
  std::optional<std::uint64_t> seed;
  std::optional<double> kappa_sq, omega_sq;
  bool zeta = false;
  bool no_beta_flip = false;
  bool basic_kernel = false;
};

void add_run_flags(CLI::App* cmd, FitFlags& f) {
  cmd->add_option("--config", f.config, "key = value run configuration");
  cmd->add_option("--iters", f.iters, "Total iterations per chain");
  cmd->add_option("--burnin", f.burnin, "Iterations discarded per chain");
  cmd->add_option("--thin", f.thin, "Keep every n-th post-burn-in iteration");
  cmd->add_option("--chains", f.chains, "Number of chains");
  cmd->add_option("--seed", f.seed, "Master seed (overrides config and UNFOLD_SEED)");
  cmd->add_option("--threads", f.threads, "Chains run concurrently");
  cmd->add_option("--loglik-every", f.loglik_every,
                  "Store pointwise log-likelihood every n-th kept draw (0 = about 250 per chain)");
  cmd->add_option("--mh-period", f.mh_period, "Iterations between flip proposals");
  cmd->add_option("--kappa-sq", f.kappa_sq, "Prior variance of alpha");
  cmd->add_option("--omega-sq", f.omega_sq, "Prior variance of mu");
  cmd->add_flag("--zeta", f.zeta, "Sample the scale-direction flags");
  cmd->add_flag("--no-beta-flip", f.no_beta_flip, "Disable the trait sign-flip move");
  cmd->add_flag("--basic-kernel", f.basic_kernel, "Drop the affine and ancillary moves");
}

/// Precedence: config file, then UNFOLD_SEED, then explicit flags.
RunConfig resolve(const FitFlags& f) {
  RunConfig c = f.config.empty() ? RunConfig{} : load_config(f.config);
  apply_seed_env(c.sampler);
  if (!f.model.empty()) c.model = parse_model_tag(f.model);
  if (!f.input.empty()) c.input = f.input;
  if (!f.output.empty()) c.output = f.output;
  auto& s = c.sampler;
  if (f.iters) s.n_iterations = *f.iters;
  if (f.burnin) s.burn_in = *f.burnin;
  if (f.thin) s.thin = *f.thin;
  if (f.chains) s.n_chains = *f.chains;
  if (f.threads) s.threads = *f.threads;
  if (f.loglik_every) s.loglik_every = *f.loglik_every;
  if (f.mh_period) s.mh_period = *f.mh_period;
  if (f.seed) s.seed = *f.seed;
  if (f.kappa_sq) s.prior.kappa_sq = *f.kappa_sq;
  if (f.omega_sq) s.prior.omega_sq = *f.omega_sq;
  if (f.zeta) s.enable_zeta = true;
  if (f.no_beta_flip) s.enable_beta_flip = false;
  if (f.basic_kernel) s.enable_rescale = s.enable_ancillary = false;
  s.validate();
  if (s.loglik_every == 0) s.loglik_every = std::max<std::size_t>(1, s.n_stored() / 250);
  return c;
}

PosteriorDraws fit_model(ModelTag model, const ResponseMatrix& data, const RunConfig& c) {
  switch (model) {
    case ModelTag::opum: return run_chains(data, c.sampler);
    case ModelTag::grm: return run_grm_chains(data, c.grm_config());
    case ModelTag::ggum: break;
  }
  throw UserError("no sampler for model ggum; fit supports opum and grm");
}

ResponseMatrix load_input(const std::string& path) {
  if (path.empty()) throw UserError("no input file given");
  auto r = load_responses(path);
  for (const auto& w : r.warnings) std::cerr << "warning: " << w << '\n';
  return std::move(r.matrix);
}

int cmd_fit(const FitFlags& f) {
  const RunConfig c = resolve(f);
  if (c.output.empty()) throw UserError("fit needs --output");
  const ResponseMatrix data = load_input(c.input);
  const PosteriorDraws draws = fit_model(c.model, data, c);
  StagedDir dir(c.output);
  save_draws(draws, dir.path());
  {
    std::ofstream m(dir.path() / "manifest.txt", std::ios::app);
    m << "input = " << c.input << '\n';
    m << "n_subjects = " << data.n_subjects() << '\n';
    m << "n_items = " << data.n_items() << '\n';
    m << "enable_zeta = " << (c.sampler.enable_zeta ? "true" : "false") << '\n';
    m << "loglik_every = " << c.sampler.loglik_every << '\n';
    m << "enable_rescale = " << (c.sampler.enable_rescale ? "true" : "false") << '\n';
    m << "enable_ancillary = " << (c.sampler.enable_ancillary ? "true" : "false") << '\n';
    m << "prior_init = " << (c.sampler.prior_init ? "true" : "false") << '\n';
  }
  dir.commit();
  std::cout << "wrote " << draws.chains.size() << " chains x " << draws.n_draws_per_chain() << " draws to "
            << c.output << '\n';
  return 0;
}

struct SimFlags {
  std::string model = "opum";
  std::string design = "mixed";
  std::size_t subjects = 300;
  std::size_t items = 10;
  int categories = 4;
  std::optional<std::uint64_t> seed;
  double missing = 0.0;
  std::vector<std::size_t> reverse;
  std::string output;
};

int cmd_simulate(const SimFlags& f) {
  SimSpec spec;
  spec.n_subjects = f.subjects;
  spec.model = parse_model_tag(f.model);
  spec.missing_rate = f.missing;
  SamplerConfig seed_holder;
  apply_seed_env(seed_holder);
  spec.seed = f.seed ? *f.seed : seed_holder.seed;
  if (f.categories < 1) throw UserError("--categories must be >= 1");
  switch (spec.model) {
    case ModelTag::opum:
      if (f.design == "mixed") spec.opum_items = mixed_design(f.categories);
      else if (f.design == "symmetric") spec.opum_items = symmetric_design(f.items, f.categories);
      else if (f.design == "monotone") spec.opum_items = monotone_design(f.items, f.categories);
      else throw UserError("unknown design '" + f.design + "' (mixed, symmetric, monotone)");
      break;
    case ModelTag::grm: spec.grm_items = grm_design(f.items, f.categories); break;
    case ModelTag::ggum: spec.ggum_items = ggum_design(f.items, f.categories); break;
  }
  if (f.output.empty()) throw UserError("simulate needs --output");
  SimResult sim = simulate(spec);
  for (std::size_t j : f.reverse) {
    if (j >= sim.data.n_items()) throw UserError("--reverse item index out of range");
    sim.data = reverse_item(sim.data, j);
  }
  StagedDir dir(f.output);
  save_responses(dir.path() / "data.csv", sim.data);
  save_draws(sim.truth, dir.path() / "truth");
  dir.commit();
  std::cout << "wrote " << sim.data.n_subjects() << " x " << sim.data.n_items() << " responses to "
            << (fs::path(f.output) / "data.csv").string() << '\n';
  return 0;
}

struct CurveFlags {
  std::string model;
  std::vector<double> alpha;
  std::vector<double> mu;
  std::vector<double> tau;
  std::optional<double> delta;
  std::string link = "probit";
  bool zeta = false;
  std::string grid = "-5:5:0.05";
  std::string label = "item1";
  std::string output;
};

int cmd_curves(const CurveFlags& f) {
  CurveItem item;
  item.model = parse_model_tag(f.model);
  switch (item.model) {
    case ModelTag::grm: {
      if (f.alpha.size() != 1) throw UserError("grm curves need one --alpha");
      Link link = Link::probit;
      if (f.link == "logistic") link = Link::logistic;
      else if (f.link != "probit") throw UserError("--link must be probit or logistic");
      item.grm = GrmItem(f.alpha[0], f.tau, link);
      break;
    }
    case ModelTag::ggum: {
      if (f.alpha.size() != 1 || !f.delta) throw UserError("ggum curves need one --alpha and --delta");
      if (f.tau.size() < 2 || f.tau[0] != 0.0) {
        throw UserError("ggum --tau lists tau_0..tau_K with tau_0 = 0");
      }
      item.ggum = GgumItem(f.alpha[0], *f.delta, std::vector<double>(f.tau.begin() + 1, f.tau.end()));
      break;
    }
    case ModelTag::opum:
      item.opum = OpumItem(f.alpha, f.mu, f.zeta);
      break;
  }
  const auto grid = parse_grid(f.grid);
  const std::vector<CurveGrid> curves{response_curves(item, grid, f.label)};
  if (f.output.empty() || f.output == "-") {
    write_curve_csv(std::cout, curves);
  } else {
    write_file_atomically(f.output, [&](std::ostream& out) { write_curve_csv(out, curves); });
  }
  return 0;
}

int cmd_waic(const std::string& draws_dir, bool aggregate, const std::string& output) {
  const PosteriorDraws d = load_draws(draws_dir);
  const auto rows = stacked_loglik(d);
  if (rows.empty()) throw UserError(draws_dir + ": no stored log-likelihoods");
  const WaicReport r = waic(rows);
  auto emit = [&](std::ostream& out) {
    out << "model = " << to_string(d.model) << '\n';
    write_waic(out, "", r);
    if (aggregate) write_waic(out, "aggregate.", waic_aggregate(rows));
  };
  if (output.empty()) {
    emit(std::cout);
    return 0;
  }
  StagedDir dir(output);
  {
    auto out = open_output(dir.path() / "waic.txt");
    emit(out);
    auto cells = open_output(dir.path() / "cells.csv");
    cells << "cell,lppd,p_waic\n";
    for (std::size_t c = 0; c < r.cell_lppd.size(); ++c) {
      cells << c << ',' << format_double(r.cell_lppd[c]) << ',' << format_double(r.cell_p_waic[c]) << '\n';
    }
  }
  dir.commit();
  emit(std::cout);
  return 0;
}

int cmd_diagnose(const std::string& draws_dir, double min_mass, const std::string& output) {
  PosteriorDraws d = load_draws(draws_dir);
  const std::size_t flipped = align_signs(d);
  const auto conv = beta_convergence(d);
  std::vector<std::vector<double>> pooled;
  for (const auto& c : d.chains) pooled.insert(pooled.end(), c.betas.begin(), c.betas.end());
  const auto ranks = rank_summary(pooled);
  const auto median = posterior_median_betas(d);
  const std::size_t I = median.size();
  std::vector<ModeReport> modes;
  std::size_t n_multi = 0;
  std::vector<double> trace(pooled.size());
  for (std::size_t i = 0; i < I; ++i) {
    for (std::size_t t = 0; t < pooled.size(); ++t) trace[t] = pooled[t][i];
    modes.push_back(detect_multimodality(trace, min_mass));
    n_multi += modes.back().is_multimodal;
  }
  double rhat_max = 1.0;
  std::size_t rhat_ok = 0;
  double ess_min = kInf;
  for (const auto& p : conv) {
    rhat_max = std::max(rhat_max, p.rhat);
    rhat_ok += p.rhat < 1.1;
    ess_min = std::min(ess_min, p.ess);
  }
  const double frac = I ? static_cast<double>(n_multi) / static_cast<double>(I) : 0.0;
  auto summary = [&](std::ostream& out) {
    out << "model = " << to_string(d.model) << '\n'
        << "n_subjects = " << I << '\n'
        << "n_draws = " << pooled.size() << '\n'
        << "chains_reflected = " << flipped << '\n'
        << "rhat_max = " << format_double(rhat_max) << '\n'
        << "rhat_below_1.1 = " << rhat_ok << '\n'
        << "ess_min = " << format_double(ess_min) << '\n'
        << "min_mass = " << format_double(min_mass) << '\n'
        << "multimodal_subjects = " << n_multi << '\n'
        << "multimodal_fraction = " << format_double(frac) << '\n';
  };
  if (!output.empty()) {
    StagedDir dir(output);
    {
      auto out = open_output(dir.path() / "summary.txt");
      summary(out);
      auto subj = open_output(dir.path() / "subjects.csv");
      subj << "subject,median_beta,median_rank,rhat,ess,n_modes,multimodal\n";
      for (std::size_t i = 0; i < I; ++i) {
        subj << i << ',' << format_double(median[i]) << ',' << format_double(ranks[i]) << ','
             << format_double(conv[i].rhat) << ',' << format_double(conv[i].ess) << ','
             << modes[i].modes.size() << ',' << (modes[i].is_multimodal ? 1 : 0) << '\n';
      }
    }
    dir.commit();
  }
  summary(std::cout);
  return 0;
}

int cmd_compare(const std::string& models, FitFlags f, const std::string& output) {
  const RunConfig c = resolve(f);
  const ResponseMatrix data = load_input(c.input);
  std::vector<std::pair<ModelTag, WaicReport>> table;
  for (const auto& name : split_list(models)) {
    const ModelTag tag = parse_model_tag(name);
    const PosteriorDraws draws = fit_model(tag, data, c);
    table.emplace_back(tag, waic(stacked_loglik(draws)));
  }
  if (table.empty()) throw UserError("--models is empty");
  auto emit = [&](std::ostream& out) {
    out << "model,waic,lppd,p_waic,n_draws\n";
    for (const auto& [tag, r] : table) {
      out << to_string(tag) << ',' << format_double(r.waic) << ',' << format_double(r.lppd) << ','
          << format_double(r.p_waic) << ',' << r.n_draws << '\n';
    }
  };
  if (!output.empty()) write_file_atomically(output, emit);
  emit(std::cout);
  return 0;
}

}  // namespace

int main(int argc, char** argv) {
  CLI::App app{"Ordinal probit unfolding: fit, simulate and compare item response models"};
  app.require_subcommand(1);

  FitFlags fit;
  auto* fit_cmd = app.add_subcommand("fit", "Run MCMC chains and write draws");
  fit_cmd->add_option("--model", fit.model, "opum or grm");
  fit_cmd->add_option("--input", fit.input, "Response CSV");
  fit_cmd->add_option("--output", fit.output, "Output directory for draws");
  add_run_flags(fit_cmd, fit);

  SimFlags sim;
  auto* sim_cmd = app.add_subcommand("simulate", "Draw a synthetic response matrix");
  sim_cmd->add_option("--model", sim.model, "opum, grm or ggum")->capture_default_str();
  sim_cmd->add_option("--design", sim.design, "OPUM items: mixed, symmetric or monotone")->capture_default_str();
  sim_cmd->add_option("--subjects", sim.subjects)->capture_default_str();
  sim_cmd->add_option("--items", sim.items, "Item count (ignored by the mixed design)")->capture_default_str();
  sim_cmd->add_option("--categories", sim.categories, "Highest category K")->capture_default_str();
  sim_cmd->add_option("--seed", sim.seed);
  sim_cmd->add_option("--missing", sim.missing, "Missing-cell rate")->capture_default_str();
  sim_cmd->add_option("--reverse", sim.reverse, "Reverse-code these item indices")->delimiter(',');
  sim_cmd->add_option("--output", sim.output, "Output directory")->required();

  CurveFlags curve;
  auto* curve_cmd = app.add_subcommand("curves", "Write response-curve data");
  curve_cmd->add_option("--model", curve.model, "opum, grm or ggum")->required();
  curve_cmd->add_option("--alpha", curve.alpha, "Discrimination(s); OPUM takes all 2K+1 values")->delimiter(',');
  curve_cmd->add_option("--mu", curve.mu, "OPUM locations, 2K+1 values")->delimiter(',');
  curve_cmd->add_option("--tau", curve.tau, "GRM cut points, or GGUM tau_0..tau_K")->delimiter(',');
  curve_cmd->add_option("--delta", curve.delta, "GGUM location");
  curve_cmd->add_option("--link", curve.link, "GRM link: probit or logistic")->capture_default_str();
  curve_cmd->add_flag("--zeta", curve.zeta, "Reverse the OPUM item");
  curve_cmd->add_option("--grid", curve.grid, "lo:hi:step")->capture_default_str();
  curve_cmd->add_option("--label", curve.label)->capture_default_str();
  curve_cmd->add_option("--output", curve.output, "CSV path (stdout when omitted)");

  std::string draws_dir, out_dir;
  bool aggregate = false;
  auto* waic_cmd = app.add_subcommand("waic", "WAIC from stored pointwise log-likelihoods");
  waic_cmd->add_option("--draws", draws_dir, "Draw directory")->required();
  waic_cmd->add_flag("--aggregate", aggregate, "Also report the joint-likelihood form");
  waic_cmd->add_option("--output", out_dir, "Report directory");

  double min_mass = 0.1;
  auto* diag_cmd = app.add_subcommand("diagnose", "Convergence, ranks and multimodality per subject");
  diag_cmd->add_option("--draws", draws_dir, "Draw directory")->required();
  diag_cmd->add_option("--min-mass", min_mass, "Smallest mode mass that counts")->capture_default_str();
  diag_cmd->add_option("--output", out_dir, "Report directory");

  FitFlags cmp;
  std::string models = "opum,grm";
  std::string table_path;
  auto* cmp_cmd = app.add_subcommand("compare", "Fit several models and tabulate WAIC");
  cmp_cmd->add_option("--models", models)->capture_default_str();
  cmp_cmd->add_option("--input", cmp.input, "Response CSV");
  cmp_cmd->add_option("--output", table_path, "CSV path for the table");
  add_run_flags(cmp_cmd, cmp);

  try {
    app.parse(argc, argv);
  } catch (const CLI::ParseError& e) {
    const int code = app.exit(e);
    return code == 0 ? 0 : 1;
  }

  try {
    if (*fit_cmd) return cmd_fit(fit);
    if (*sim_cmd) return cmd_simulate(sim);
    if (*curve_cmd) return cmd_curves(curve);
    if (*waic_cmd) return cmd_waic(draws_dir, aggregate, out_dir);
    if (*diag_cmd) return cmd_diagnose(draws_dir, min_mass, out_dir);
    if (*cmp_cmd) return cmd_compare(models, cmp, table_path);
  } catch (const UserError& e) {
    std::cerr << "error: " << e.what() << '\n';
    return 1;
  } catch (const InvariantError& e) {
    std::cerr << "internal error: " << e.what() << '\n';
    return 2;
  } catch (const std::exception& e) {
    std::cerr << "internal error: " << e.what() << '\n';
    return 2;
  }
  return 1;
}
