#ifndef LSCHAIN_CLI_HPP
#define LSCHAIN_CLI_HPP

#include <atomic>
#include <cmath>
#include <cstdint>
#include <cstdlib>
#include <filesystem>
#include <iostream>
#include <limits>
#include <mutex>
#include <string>
#include <thread>
#include <vector>

#include "lschain/verification.hpp"

namespace lschain {

// ---------------------------------------------------------------------------
// Configuration
// ---------------------------------------------------------------------------

/// All command-line / config-file settings with their documented defaults.
/// Grid endpoints default to the point coupling (tau_re, tau_im), so an
/// unconfigured sweep degenerates to a 1x1 grid at the run coupling.
struct CliConfig {
  std::string command = "run";

  std::string model = "spin";  // spin | anharmonic
  int n_sites = 4;
  int local_dim = 2;   // spin only
  int d_trunc = 4;     // anharmonic only
  std::uint64_t rng_seed = 0;
  int kbar = 1;

  double tau_re = 0.02;
  double tau_im = 0.0;
  double tau_re_min = std::numeric_limits<double>::quiet_NaN();
  double tau_re_max = std::numeric_limits<double>::quiet_NaN();
  int tau_re_count = 1;
  double tau_im_min = std::numeric_limits<double>::quiet_NaN();
  double tau_im_max = std::numeric_limits<double>::quiet_NaN();
  int tau_im_count = 1;

  int j_max = 40;
  double tail_tol = 1e-14;
  double residual_tol = 1e-9;
  bool track_u = false;
  int workers = 1;
  std::string out_dir;  // default: $LSCHAIN_OUT_DIR if set, else "."

  /// Fill unset fields and check the invariants.
  void finalize() {
    if (out_dir.empty()) {
      const char* env = std::getenv("LSCHAIN_OUT_DIR");
      out_dir = (env != nullptr && env[0] != '\0') ? env : ".";
    }
    if (std::isnan(tau_re_min)) tau_re_min = tau_re;
    if (std::isnan(tau_re_max)) tau_re_max = tau_re;
    if (std::isnan(tau_im_min)) tau_im_min = tau_im;
    if (std::isnan(tau_im_max)) tau_im_max = tau_im;
    if (n_sites < 2) throw ConfigError("config: n_sites must be >= 2");
    if (tau_re_count < 1 || tau_im_count < 1)
      throw ConfigError("config: grid counts must be >= 1");
    if (workers < 1) throw ConfigError("config: workers must be >= 1");
    if (model != "spin" && model != "anharmonic")
      throw ConfigError("config: model must be spin or anharmonic");
  }
};

/// Apply a parsed JSON config document; unknown keys are rejected so typos
/// cannot silently fall back to defaults.
inline void apply_config_json(CliConfig& cfg, const Json& doc) {
  if (!doc.is_object()) throw ConfigError("config file: top-level JSON object expected");
  for (const auto& [key, value] : doc.items()) {
    if (key == "model") cfg.model = value.get<std::string>();
    else if (key == "n_sites") cfg.n_sites = value.get<int>();
    else if (key == "local_dim") cfg.local_dim = value.get<int>();
    else if (key == "d_trunc") cfg.d_trunc = value.get<int>();
    else if (key == "rng_seed") cfg.rng_seed = value.get<std::uint64_t>();
    else if (key == "kbar") cfg.kbar = value.get<int>();
    else if (key == "tau_re") cfg.tau_re = value.get<double>();
    else if (key == "tau_im") cfg.tau_im = value.get<double>();
    else if (key == "tau_re_min") cfg.tau_re_min = value.get<double>();
    else if (key == "tau_re_max") cfg.tau_re_max = value.get<double>();
    else if (key == "tau_re_count") cfg.tau_re_count = value.get<int>();
    else if (key == "tau_im_min") cfg.tau_im_min = value.get<double>();
    else if (key == "tau_im_max") cfg.tau_im_max = value.get<double>();
    else if (key == "tau_im_count") cfg.tau_im_count = value.get<int>();
    else if (key == "j_max") cfg.j_max = value.get<int>();
    else if (key == "tail_tol") cfg.tail_tol = value.get<double>();
    else if (key == "residual_tol") cfg.residual_tol = value.get<double>();
    else if (key == "track_u") cfg.track_u = value.get<bool>();
    else if (key == "workers") cfg.workers = value.get<int>();
    else if (key == "out_dir") cfg.out_dir = value.get<std::string>();
    else throw ConfigError("config file: unknown key '" + key + "'");
  }
}

inline CliConfig load_config_file(const std::string& path) {
  CliConfig cfg;
  Json doc;
  try {
    doc = Json::parse(read_text_file(path));
  } catch (const Json::parse_error& e) {
    throw ConfigError(std::string("config file: ") + e.what());
  }
  apply_config_json(cfg, doc);
  return cfg;
}

inline ChainSpec build_model(const CliConfig& cfg) {
  if (cfg.model == "spin")
    return build_spin_model(cfg.local_dim, cfg.n_sites, cfg.rng_seed, cfg.kbar);
  return build_anharmonic_model(cfg.d_trunc, cfg.n_sites);
}

inline ChainSpec build_model_sized(const CliConfig& cfg, int n) {
  CliConfig sized = cfg;
  sized.n_sites = n;
  return build_model(sized);
}

inline EngineConfig engine_config(const CliConfig& cfg) {
  EngineConfig ec;
  ec.tau = Complex(cfg.tau_re, cfg.tau_im);
  ec.j_max = cfg.j_max;
  ec.tail_tol = cfg.tail_tol;
  ec.residual_tol = cfg.residual_tol;
  ec.track_u = cfg.track_u;
  ec.validate();
  return ec;
}

// ---------------------------------------------------------------------------
// Artifact formatting (17 significant digits everywhere)
// ---------------------------------------------------------------------------

inline Json complex_to_decimal_json(const Complex& z) {
  Json j;
  j["re"] = double_to_decimal(z.real());
  j["im"] = double_to_decimal(z.imag());
  return j;
}

inline Json run_report_to_json(const RunReport& rep, const CliConfig& cfg) {
  Json j;
  Json conf;
  conf["model"] = cfg.model;
  conf["n_sites"] = cfg.n_sites;
  conf["local_dim"] = cfg.local_dim;
  conf["d_trunc"] = cfg.d_trunc;
  conf["rng_seed"] = cfg.rng_seed;
  conf["kbar"] = cfg.kbar;
  conf["tau_re"] = double_to_decimal(cfg.tau_re);
  conf["tau_im"] = double_to_decimal(cfg.tau_im);
  conf["j_max"] = cfg.j_max;
  conf["tail_tol"] = double_to_decimal(cfg.tail_tol);
  conf["residual_tol"] = double_to_decimal(cfg.residual_tol);
  conf["track_u"] = cfg.track_u;
  j["config"] = std::move(conf);

  j["e_n"] = complex_to_decimal_json(rep.e_n);
  j["gap_margin"] = double_to_decimal(rep.gap_margin);
  j["blockdiag_residual"] = double_to_decimal(rep.blockdiag_residual);
  j["t0_estimate"] = double_to_decimal(rep.t0_estimate);
  j["u_unitarity"] = double_to_decimal(rep.u_unitarity);
  j["u_conj_residual"] = double_to_decimal(rep.u_conj_residual);
  j["wall_time_s"] = double_to_decimal(rep.wall_time_s);

  Json norms = Json::array();
  for (const auto& pl : rep.per_length_norms) {
    Json row;
    row["length"] = pl.length;
    row["max_weighted_norm"] = double_to_decimal(pl.max_weighted_norm);
    row["decay_bound"] = double_to_decimal(pl.decay_bound);
    norms.push_back(std::move(row));
  }
  j["per_length_norms"] = std::move(norms);

  Json steps = Json::array();
  for (const auto& s : rep.steps) {
    Json row;
    row["k"] = s.step.k;
    row["q"] = s.step.q;
    row["e"] = complex_to_decimal_json(s.e);
    row["j_used"] = s.diag.j_used;
    row["tail_estimate"] = double_to_decimal(s.diag.tail_estimate);
    row["s_norm"] = double_to_decimal(s.diag.s_norm);
    row["v_diag_weighted_norm"] = double_to_decimal(s.diag.v_diag_weighted_norm);
    row["delta"] = double_to_decimal(s.diag.delta);
    row["certified_tail"] = s.diag.certified_tail;
    row["snorm_bound_ok"] = s.diag.snorm_bound_ok;
    row["max_snorm_ratio"] = double_to_decimal(s.diag.max_snorm_ratio);
    steps.push_back(std::move(row));
  }
  j["steps"] = std::move(steps);
  return j;
}

inline std::string per_length_norms_csv(const RunReport& rep) {
  std::string out = "length,max_weighted_norm,decay_bound\n";
  for (const auto& pl : rep.per_length_norms)
    out += std::to_string(pl.length) + "," + double_to_decimal(pl.max_weighted_norm) + "," +
           double_to_decimal(pl.decay_bound) + "\n";
  return out;
}

inline void write_artifact(const CliConfig& cfg, const std::string& name,
                           const std::string& content) {
  namespace fs = std::filesystem;
  std::error_code ec;
  fs::create_directories(cfg.out_dir, ec);
  if (ec) throw ConfigError("cannot create output directory '" + cfg.out_dir + "'");
  write_text_file((fs::path(cfg.out_dir) / name).string(), content);
}

// ---------------------------------------------------------------------------
// Sweep
// ---------------------------------------------------------------------------

struct SweepRow {
  Complex tau;
  Complex e;
  double gap_margin = std::numeric_limits<double>::quiet_NaN();
  bool converged = false;
};

inline double grid_value(double lo, double hi, int count, int index) {
  if (count == 1) return lo;
  return lo + (hi - lo) * static_cast<double>(index) / static_cast<double>(count - 1);
}

/// Row-major over the real axis with the imaginary axis fastest; each row is
/// an independent engine run, so worker count cannot change any value.
inline std::vector<SweepRow> run_sweep(const CliConfig& cfg) {
  const ChainSpec spec = build_model(cfg);
  auto ctx = std::make_shared<const ChainContext>(spec, 4096);

  std::vector<Complex> taus;
  for (int ir = 0; ir < cfg.tau_re_count; ++ir)
    for (int ii = 0; ii < cfg.tau_im_count; ++ii)
      taus.emplace_back(grid_value(cfg.tau_re_min, cfg.tau_re_max, cfg.tau_re_count, ir),
                        grid_value(cfg.tau_im_min, cfg.tau_im_max, cfg.tau_im_count, ii));

  const EngineConfig base_ec = engine_config(cfg);  // validated once, up front

  std::vector<SweepRow> rows(taus.size());
  std::atomic<std::size_t> next{0};
  std::mutex fatal_mutex;
  std::exception_ptr fatal;
  auto worker = [&]() {
    for (;;) {
      const std::size_t i = next.fetch_add(1);
      if (i >= taus.size()) return;
      SweepRow row;
      row.tau = taus[i];
      EngineConfig ec = base_ec;
      ec.tau = taus[i];
      ec.track_u = false;
      try {
        BlockDiagEngine eng(ctx, ec);
        const RunReport rep = eng.run();
        row.e = rep.e_n;
        row.gap_margin = rep.gap_margin;
        row.converged = true;
      } catch (const ConfigError&) {
        // a bad configuration is fatal, not a per-row failure
        std::lock_guard<std::mutex> lock(fatal_mutex);
        if (!fatal) fatal = std::current_exception();
        return;
      } catch (const Error&) {
      }
      rows[i] = row;
    }
  };

  const int n_workers =
      std::max(1, std::min<int>(cfg.workers, static_cast<int>(taus.size())));
  if (n_workers == 1) {
    worker();
  } else {
    std::vector<std::thread> pool;
    for (int w = 0; w < n_workers; ++w) pool.emplace_back(worker);
    for (auto& t : pool) t.join();
  }
  if (fatal) std::rethrow_exception(fatal);
  return rows;
}

inline std::string sweep_csv(const std::vector<SweepRow>& rows) {
  std::string out = "re_tau,im_tau,re_E,im_E,gap_margin,converged\n";
  for (const auto& r : rows) {
    const Complex e = r.converged ? r.e : Complex(std::numeric_limits<double>::quiet_NaN(),
                                                  std::numeric_limits<double>::quiet_NaN());
    out += double_to_decimal(r.tau.real()) + "," + double_to_decimal(r.tau.imag()) + "," +
           double_to_decimal(e.real()) + "," + double_to_decimal(e.imag()) + "," +
           double_to_decimal(r.gap_margin) + "," + (r.converged ? "1" : "0") + "\n";
  }
  return out;
}

// ---------------------------------------------------------------------------
// Thermo artifacts
// ---------------------------------------------------------------------------

inline Json thermo_report_to_json(const ThermoReport& rep) {
  Json j;
  j["tau"] = complex_to_decimal_json(rep.tau);
  Json ladder = Json::array();
  for (std::size_t i = 0; i < rep.n_values.size(); ++i) {
    Json row;
    row["n"] = rep.n_values[i];
    row["e"] = complex_to_decimal_json(rep.energies[i]);
    row["e_per_site"] = complex_to_decimal_json(rep.per_site[i]);
    row["site_spread"] = double_to_decimal(rep.site_spreads[i]);
    row["decomposition_residual"] = double_to_decimal(rep.decomposition_residuals[i]);
    row["standalone_spread"] = double_to_decimal(rep.standalone_spreads[i]);
    ladder.push_back(std::move(row));
  }
  j["ladder"] = std::move(ladder);
  Json pairs = Json::array();
  for (const auto& p : rep.pairs) {
    Json row;
    row["n"] = p.n;
    row["m"] = p.m;
    row["diff"] = double_to_decimal(p.diff);
    row["majorant"] = double_to_decimal(p.bound);
    row["within_bound"] = p.ok;
    pairs.push_back(std::move(row));
  }
  j["pairs"] = std::move(pairs);
  return j;
}

inline std::string thermo_per_site_csv(const ThermoReport& rep) {
  std::string out =
      "n,re_E,im_E,re_E_per_site,im_E_per_site,site_spread,decomposition_residual,"
      "standalone_spread\n";
  for (std::size_t i = 0; i < rep.n_values.size(); ++i)
    out += std::to_string(rep.n_values[i]) + "," + double_to_decimal(rep.energies[i].real()) +
           "," + double_to_decimal(rep.energies[i].imag()) + "," +
           double_to_decimal(rep.per_site[i].real()) + "," +
           double_to_decimal(rep.per_site[i].imag()) + "," +
           double_to_decimal(rep.site_spreads[i]) + "," +
           double_to_decimal(rep.decomposition_residuals[i]) + "," +
           double_to_decimal(rep.standalone_spreads[i]) + "\n";
  return out;
}

inline std::string thermo_pairs_csv(const ThermoReport& rep) {
  std::string out = "n,m,diff,majorant,within_bound\n";
  for (const auto& p : rep.pairs)
    out += std::to_string(p.n) + "," + std::to_string(p.m) + "," + double_to_decimal(p.diff) +
           "," + double_to_decimal(p.bound) + "," + (p.ok ? "1" : "0") + "\n";
  return out;
}

// ---------------------------------------------------------------------------
// Commands (exit codes: 0 ok, 1 config error, 2 nonconvergence, 3 all sweep
// rows failed, 4 verification failure, 5 root bracketing failure)
// ---------------------------------------------------------------------------

inline int cmd_run(const CliConfig& cfg) {
  const ChainSpec spec = build_model(cfg);
  BlockDiagEngine eng(std::make_shared<const ChainContext>(spec, 4096), engine_config(cfg));
  RunReport rep;
  try {
    rep = eng.run();
  } catch (const NonconvergenceError& e) {
    std::cerr << "run: " << e.what() << "\n";
    return 2;
  }
  write_artifact(cfg, "run_report.json", run_report_to_json(rep, cfg).dump(2) + "\n");
  write_artifact(cfg, "per_length_norms.csv", per_length_norms_csv(rep));
  std::cout << "E_N = " << double_to_decimal(rep.e_n.real()) << " + "
            << double_to_decimal(rep.e_n.imag()) << "i, gap margin "
            << double_to_decimal(rep.gap_margin) << "\n";
  return 0;
}

inline int cmd_sweep(const CliConfig& cfg) {
  const std::vector<SweepRow> rows = run_sweep(cfg);
  write_artifact(cfg, "sweep.csv", sweep_csv(rows));
  std::size_t ok = 0;
  for (const auto& r : rows) ok += r.converged ? 1 : 0;
  std::cout << "sweep: " << ok << "/" << rows.size() << " rows converged\n";
  return ok == 0 ? 3 : 0;
}

inline int cmd_verify(const CliConfig& cfg) {
  const ChainSpec spec = build_model(cfg);
  VerifySuiteOptions opt;
  opt.with_neumann = true;
  const std::vector<VerificationRecord> recs =
      run_verification_suite(spec, engine_config(cfg), opt);
  const std::string text = format_verification_report(recs);
  write_artifact(cfg, "verification_report.txt", text);
  std::cout << text;
  return all_passed(recs) ? 0 : 4;
}

inline int cmd_thermo(const CliConfig& cfg) {
  std::vector<int> n_list;
  for (int n = 2; n <= cfg.n_sites; ++n) n_list.push_back(n);
  const auto family = [&cfg](int n) { return build_model_sized(cfg, n); };
  ThermoReport rep;
  try {
    rep = thermo_analysis(family, Complex(cfg.tau_re, cfg.tau_im), n_list, engine_config(cfg));
  } catch (const NonconvergenceError& e) {
    std::cerr << "thermo: " << e.what() << "\n";
    return 2;
  }
  write_artifact(cfg, "thermo_report.json", thermo_report_to_json(rep).dump(2) + "\n");
  write_artifact(cfg, "thermo_per_site.csv", thermo_per_site_csv(rep));
  write_artifact(cfg, "thermo_pairs.csv", thermo_pairs_csv(rep));
  std::cout << "thermo: ladder of " << rep.n_values.size() << " chain sizes written\n";
  return 0;
}

inline int cmd_estimate_t0() {
  TauDomainEstimate est;
  try {
    est = tau_domain_estimate();
  } catch (const BracketingError& e) {
    std::cerr << "estimate-t0: " << e.what() << "\n";
    return 5;
  }
  Json j;
  j["a_root"] = double_to_decimal(est.a_root);
  j["c"] = double_to_decimal(est.c);
  j["t0"] = double_to_decimal(est.t0);
  j["delta_at_t0"] = double_to_decimal(est.delta_at_t0);
  j["delta_at_t0_ge_half"] = est.delta_at_t0_ge_half;
  j["gap_denominator_positive"] = est.gap_denominator_positive;
  std::cout << j.dump(2) << "\n";
  return 0;
}

inline int dispatch(const CliConfig& cfg) {
  if (cfg.command == "run") return cmd_run(cfg);
  if (cfg.command == "sweep") return cmd_sweep(cfg);
  if (cfg.command == "verify") return cmd_verify(cfg);
  if (cfg.command == "thermo") return cmd_thermo(cfg);
  if (cfg.command == "estimate-t0") return cmd_estimate_t0();
  throw ConfigError("unknown command '" + cfg.command + "'");
}

}  // namespace lschain

#endif  // LSCHAIN_CLI_HPP
