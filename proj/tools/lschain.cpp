// Command-line front end: run | sweep | verify | thermo | estimate-t0.
// Settings come from defaults, then an optional JSON config file, then any
// explicitly passed flags (highest precedence).

#include <iostream>
#include <map>
#include <string>

#include "CLI11.hpp"
#include "lschain/cli.hpp"

int main(int argc, char** argv) {
  CLI::App app{"lschain: block-diagonalization of short-range quantum chains"};
  app.require_subcommand(1);

  std::string config_path;
  lschain::CliConfig flags;
  std::map<std::string, CLI::Option*> opt;

  opt["config"] = app.add_option("--config", config_path, "JSON config file");
  opt["model"] = app.add_option("--model", flags.model, "spin | anharmonic");
  opt["n_sites"] = app.add_option("--n_sites", flags.n_sites, "chain length N");
  opt["local_dim"] = app.add_option("--local_dim", flags.local_dim, "local dimension (spin model)");
  opt["d_trunc"] = app.add_option("--d_trunc", flags.d_trunc, "oscillator truncation (anharmonic model)");
  opt["rng_seed"] = app.add_option("--rng_seed", flags.rng_seed, "seed for the random spin couplings");
  opt["kbar"] = app.add_option("--kbar", flags.kbar, "maximal seed interaction range");
  opt["tau_re"] = app.add_option("--tau_re", flags.tau_re, "Re(tau)");
  opt["tau_im"] = app.add_option("--tau_im", flags.tau_im, "Im(tau)");
  opt["tau_re_min"] = app.add_option("--tau_re_min", flags.tau_re_min, "sweep grid Re(tau) start");
  opt["tau_re_max"] = app.add_option("--tau_re_max", flags.tau_re_max, "sweep grid Re(tau) end");
  opt["tau_re_count"] = app.add_option("--tau_re_count", flags.tau_re_count, "sweep grid Re(tau) points");
  opt["tau_im_min"] = app.add_option("--tau_im_min", flags.tau_im_min, "sweep grid Im(tau) start");
  opt["tau_im_max"] = app.add_option("--tau_im_max", flags.tau_im_max, "sweep grid Im(tau) end");
  opt["tau_im_count"] = app.add_option("--tau_im_count", flags.tau_im_count, "sweep grid Im(tau) points");
  opt["j_max"] = app.add_option("--j_max", flags.j_max, "series truncation order");
  opt["tail_tol"] = app.add_option("--tail_tol", flags.tail_tol, "series tail tolerance");
  opt["residual_tol"] = app.add_option("--residual_tol", flags.residual_tol, "block-diagonal residual tolerance");
  opt["track_u"] = app.add_flag("--track_u", flags.track_u, "accumulate the full conjugation operator");
  opt["workers"] = app.add_option("--workers", flags.workers, "sweep worker threads");
  opt["out_dir"] = app.add_option("--out_dir", flags.out_dir, "artifact output directory");

  for (const char* name : {"run", "sweep", "verify", "thermo", "estimate-t0"})
    app.add_subcommand(name)->fallthrough();

  try {
    app.parse(argc, argv);
  } catch (const CLI::CallForHelp& e) {
    return app.exit(e);
  } catch (const CLI::ParseError& e) {
    app.exit(e);
    return 1;
  }

  try {
    lschain::CliConfig cfg;
    if (opt["config"]->count() > 0) cfg = lschain::load_config_file(config_path);

    if (opt["model"]->count() > 0) cfg.model = flags.model;
    if (opt["n_sites"]->count() > 0) cfg.n_sites = flags.n_sites;
    if (opt["local_dim"]->count() > 0) cfg.local_dim = flags.local_dim;
    if (opt["d_trunc"]->count() > 0) cfg.d_trunc = flags.d_trunc;
    if (opt["rng_seed"]->count() > 0) cfg.rng_seed = flags.rng_seed;
    if (opt["kbar"]->count() > 0) cfg.kbar = flags.kbar;
    if (opt["tau_re"]->count() > 0) cfg.tau_re = flags.tau_re;
    if (opt["tau_im"]->count() > 0) cfg.tau_im = flags.tau_im;
    if (opt["tau_re_min"]->count() > 0) cfg.tau_re_min = flags.tau_re_min;
    if (opt["tau_re_max"]->count() > 0) cfg.tau_re_max = flags.tau_re_max;
    if (opt["tau_re_count"]->count() > 0) cfg.tau_re_count = flags.tau_re_count;
    if (opt["tau_im_min"]->count() > 0) cfg.tau_im_min = flags.tau_im_min;
    if (opt["tau_im_max"]->count() > 0) cfg.tau_im_max = flags.tau_im_max;
    if (opt["tau_im_count"]->count() > 0) cfg.tau_im_count = flags.tau_im_count;
    if (opt["j_max"]->count() > 0) cfg.j_max = flags.j_max;
    if (opt["tail_tol"]->count() > 0) cfg.tail_tol = flags.tail_tol;
    if (opt["residual_tol"]->count() > 0) cfg.residual_tol = flags.residual_tol;
    if (opt["track_u"]->count() > 0) cfg.track_u = flags.track_u;
    if (opt["workers"]->count() > 0) cfg.workers = flags.workers;
    if (opt["out_dir"]->count() > 0) cfg.out_dir = flags.out_dir;

    cfg.command = app.get_subcommands().at(0)->get_name();
    cfg.finalize();
    return lschain::dispatch(cfg);
  } catch (const lschain::BracketingError& e) {
    std::cerr << "error: " << e.what() << "\n";
    return 5;
  } catch (const lschain::NonconvergenceError& e) {
    std::cerr << "error: " << e.what() << "\n";
    return 2;
  } catch (const lschain::Error& e) {
    std::cerr << "error: " << e.what() << "\n";
    return 1;
  } catch (const std::exception& e) {
    std::cerr << "error: " << e.what() << "\n";
    return 1;
  }
}
