#pragma once

#include <algorithm>
#include <fstream>
#include <iostream>
#include <optional>
#include <ostream>
#include <sstream>
#include <string>
#include <vector>

#include "CLI11.hpp"
#include "qsdkit/experiment.hpp"
#include "qsdkit/spectral_oracle.hpp"

namespace qsdkit::cli {

inline constexpr int kExitOk = 0;
inline constexpr int kExitUsage = 2;
inline constexpr int kExitNumeric = 3;

namespace detail {

struct ChainFlags {
  std::string chain;
  std::optional<double> doeblin;
  bool uniformized = false;

  void attach(CLI::App* app, bool positional) {
    if (positional) {
      app->add_option("chain_spec", chain, "builtin spec (loopy:E, mm1:RHO:K, contact:N:LAMBDA) or chain file");
    }
    app->add_option("--chain", chain, "builtin spec or chain file");
    app->add_option("--doeblin", doeblin, "Doeblinization: scale (DT) or killing shift (CT)");
    app->add_flag("--uniformize", uniformized, "uniformize a CT chain before use");
  }

  AnyChain build() const {
    if (chain.empty()) throw DomainError("a chain is required (--chain)");
    return transform_chain(parse_chain(chain), doeblin, uniformized);
  }
};

struct RunFlags {
  std::string variant = "vanilla";
  double step_c = 1.0;
  double alpha = 0.7;
  std::optional<std::int64_t> burn_in;
  std::optional<std::int64_t> tours;
  std::optional<int> replicates;
  std::optional<std::uint64_t> seed;
  std::optional<std::string> initial;
  unsigned threads = 0;
  std::int64_t max_tour_steps = kDefaultMaxTourSteps;
  bool record_mu = false;

  void attach(CLI::App* app, bool with_variant) {
    if (with_variant) app->add_option("--variant", variant, "vanilla | projected | projected_avg");
    app->add_option("--alpha", alpha, "step exponent for projected variants, in (0.5, 1]");
    app->add_option("--step-c", step_c, "step constant for projected variants");
    app->add_option("--burn-in", burn_in, "first iterate entering the Polyak average (default 10% of tours)");
    app->add_option("--tours", tours, "tours per replicate");
    app->add_option("--replicates", replicates, "independent replicates");
    app->add_option("--seed", seed, "base seed; replicate i uses seed + i");
    app->add_option("--init", initial, "initial law: uniform | point:I");
    app->add_option("--threads", threads, "worker threads (0: all cores)");
    app->add_option("--max-tour-steps", max_tour_steps, "abort a run when one tour exceeds this many steps");
    app->add_flag("--record-mu", record_mu, "add mean estimate columns to the CSV");
  }

  void apply(RunConfig& cfg) const {
    cfg.variant = parse_variant(variant);
    cfg.schedule = StepSchedule(step_c, alpha);
    if (burn_in) cfg.average_from = *burn_in;
    if (tours) cfg.n_tours = *tours;
    if (replicates) cfg.replicates = *replicates;
    if (seed) cfg.seed = *seed;
    if (initial) cfg.initial = *initial;
    cfg.threads = threads;
    cfg.max_tour_steps = max_tour_steps;
    cfg.record_mu = record_mu;
  }
};

inline void write_to(const std::string& path, std::ostream& fallback, const std::string& text) {
  if (path.empty() || path == "-") {
    fallback << text;
    return;
  }
  std::ofstream f(path, std::ios::binary);
  if (!f) throw DomainError("cannot open '" + path + "' for writing");
  f << text;
  if (!f) throw NumericError("failed writing '" + path + "'");
}

inline std::string fmt(double x) { return qsdkit::detail::format_number(x); }

inline std::string final_mse(const MseCurve& c) { return fmt(c.final_point().mse); }

inline std::string slope_text(const MseCurve& c) { return fmt(c.slope.value_or(std::nan(""))); }

}  // namespace detail

/// Entry point shared by the executable and the tests. args excludes argv[0].
inline int cli_main(const std::vector<std::string>& args, std::ostream& out, std::ostream& err) {
  CLI::App app{"Quasi-stationary distribution estimation by stochastic approximation", "qsdkit"};
  app.require_subcommand(1);
  app.set_help_all_flag("--help-all", "show help for all subcommands");

  // oracle
  detail::ChainFlags oracle_chain;
  auto* oracle = app.add_subcommand("oracle", "print the spectral report of a chain");
  oracle_chain.attach(oracle, true);

  // check-clt
  detail::ChainFlags clt_chain;
  auto* check = app.add_subcommand("check-clt", "print the CLT eigenvalue-condition verdict and margin");
  clt_chain.attach(check, true);

  // run
  detail::ChainFlags run_chain;
  detail::RunFlags run_flags;
  std::string run_out, run_trace;
  auto* run = app.add_subcommand("run", "run one replicated experiment and write its MSE curve as CSV");
  run_chain.attach(run, false);
  run_flags.attach(run, true);
  run->add_option("--out", run_out, "CSV path (default: standard output)");
  run->add_option("--trace", run_trace, "per-iteration trace CSV path");

  // experiment
  std::string preset_name, exp_dir;
  detail::RunFlags exp_flags;
  auto* experiment = app.add_subcommand("experiment", "run a reference preset: vanilla against projected_avg");
  experiment->add_option("preset", preset_name, "loopy | mm1 | contact")->required();
  exp_flags.attach(experiment, false);
  experiment->add_option("--out-dir", exp_dir, "directory for <preset>_<variant>.csv");

  // sweep
  detail::ChainFlags sweep_chain;
  detail::RunFlags sweep_flags;
  std::string sweep_param, sweep_out;
  std::vector<std::string> sweep_values;
  auto* sweep = app.add_subcommand("sweep", "vary one parameter over a grid and tabulate final errors");
  sweep_chain.attach(sweep, false);
  sweep_flags.attach(sweep, true);
  sweep->add_option("--param", sweep_param, "chain ({} in --chain) | alpha | step-c | doeblin | tours")->required();
  sweep->add_option("--values", sweep_values, "grid values")->required()->delimiter(',');
  sweep->add_option("--out", sweep_out, "CSV path (default: standard output)");

  std::vector<std::string> reversed(args.rbegin(), args.rend());
  try {
    app.parse(std::move(reversed));
  } catch (const CLI::CallForHelp&) {
    const auto subs = app.get_subcommands();
    out << (subs.empty() ? app.help() : subs.front()->help());
    return kExitOk;
  } catch (const CLI::CallForAllHelp&) {
    out << app.help("", CLI::AppFormatMode::All);
    return kExitOk;
  } catch (const CLI::ParseError& e) {
    err << "error: " << e.what() << "\n" << app.help();
    return kExitUsage;
  }

  try {
    if (*oracle) {
      const AnyChain chain = oracle_chain.build();
      write_report(out, spectral_report(chain));
    } else if (*check) {
      const AnyChain chain = clt_chain.build();
      const auto verdict = check_clt(full_spectrum(transient_block(chain)), kind_of(chain));
      out << "kind=" << to_string(kind_of(chain)) << '\n'
          << "clt=" << (verdict.holds ? "holds" : "fails") << '\n'
          << "clt_margin=" << detail::fmt(verdict.margin) << '\n';
    } else if (*run) {
      RunConfig cfg;
      if (run_chain.chain.empty()) throw DomainError("a chain is required (--chain)");
      cfg.chain = run_chain.chain;
      cfg.doeblin = run_chain.doeblin;
      cfg.uniformized = run_chain.uniformized;
      run_flags.apply(cfg);
      std::ostringstream trace;
      const MseCurve curve = run_experiment(cfg, run_trace.empty() ? nullptr : &trace);
      std::ostringstream csv;
      write_curve_csv(csv, cfg, curve);
      detail::write_to(run_out, out, csv.str());
      if (!run_trace.empty()) detail::write_to(run_trace, out, trace.str());
      for (const auto& w : curve.warnings) err << "warning: " << w << '\n';
    } else if (*experiment) {
      Preset preset = make_preset(preset_name);
      RunConfig cfg = preset.config;
      exp_flags.apply(cfg);
      const Comparison cmp = run_comparison(cfg);
      out << "preset=" << preset.name << '\n' << "chain=" << cfg.chain << '\n';
      if (cfg.doeblin) out << "doeblin=" << detail::fmt(*cfg.doeblin) << '\n';
      out << "tours=" << cfg.n_tours << '\n' << "replicates=" << cfg.replicates << '\n';
      if (cmp.clt) {
        out << "clt=" << (cmp.clt->holds ? "holds" : "fails") << '\n'
            << "clt_margin=" << detail::fmt(cmp.clt->margin) << '\n';
      }
      out << "final_mse_vanilla=" << detail::final_mse(cmp.vanilla) << '\n'
          << "final_mse_projected_avg=" << detail::final_mse(cmp.averaged) << '\n'
          << "ratio=" << detail::fmt(cmp.final_ratio()) << '\n'
          << "slope_vanilla=" << detail::slope_text(cmp.vanilla) << '\n'
          << "slope_projected_avg=" << detail::slope_text(cmp.averaged) << '\n';
      if (!exp_dir.empty()) {
        for (const auto& [variant, curve] : {std::pair{Variant::vanilla, &cmp.vanilla},
                                             std::pair{Variant::projected_avg, &cmp.averaged}}) {
          RunConfig arm = cfg;
          arm.variant = variant;
          std::ostringstream csv;
          write_curve_csv(csv, arm, *curve);
          detail::write_to(exp_dir + "/" + preset.name + "_" + to_string(variant) + ".csv", out, csv.str());
        }
      }
    } else if (*sweep) {
      std::ostringstream csv;
      csv << "# qsdkit v1 sweep, param=" << sweep_param << ", chain=" << sweep_chain.chain
          << ", variant=" << sweep_flags.variant << '\n'
          << "value,final_mse_l2sq,final_err_l1,T_n,slope\n";
      for (const auto& value : sweep_values) {
        RunConfig cfg;
        cfg.chain = sweep_chain.chain;
        cfg.doeblin = sweep_chain.doeblin;
        cfg.uniformized = sweep_chain.uniformized;
        detail::RunFlags flags = sweep_flags;
        if (sweep_param == "chain") {
          const auto hole = cfg.chain.find("{}");
          if (hole == std::string::npos) throw DomainError("--param chain needs a {} placeholder in --chain");
          cfg.chain.replace(hole, 2, value);
        } else if (sweep_param == "alpha") {
          flags.alpha = qsdkit::detail::parse_double(value, "alpha");
        } else if (sweep_param == "step-c") {
          flags.step_c = qsdkit::detail::parse_double(value, "step-c");
        } else if (sweep_param == "doeblin") {
          cfg.doeblin = qsdkit::detail::parse_double(value, "doeblin");
        } else if (sweep_param == "tours") {
          flags.tours = qsdkit::detail::parse_integer(value, "tours");
        } else {
          throw DomainError("unknown sweep parameter '" + sweep_param + "'");
        }
        flags.apply(cfg);
        const MseCurve curve = run_experiment(cfg);
        const auto& last = curve.final_point();
        csv << value << ',' << detail::fmt(last.mse) << ',' << detail::fmt(last.err_l1) << ','
            << detail::fmt(last.T) << ',' << detail::slope_text(curve) << '\n';
        for (const auto& w : curve.warnings) err << "warning (" << value << "): " << w << '\n';
      }
      detail::write_to(sweep_out, out, csv.str());
    }
  } catch (const DomainError& e) {
    err << "error: " << e.what() << '\n';
    return kExitUsage;
  } catch (const ContractError& e) {
    err << "error: " << e.what() << '\n';
    return kExitUsage;
  } catch (const std::exception& e) {
    err << "error: " << e.what() << '\n';
    return kExitNumeric;
  }
  return kExitOk;
}

}  // namespace qsdkit::cli
