#include "mlnc/cli.hpp"

#include <filesystem>
#include <optional>
#include <string>
#include <vector>

#include <CLI11.hpp>

#include "mlnc/errors.hpp"
#include "mlnc/io.hpp"
#include "mlnc/landscape.hpp"
#include "mlnc/lemmas.hpp"
#include "mlnc/optimizer.hpp"
#include "mlnc/theory.hpp"

namespace mlnc {

namespace fs = std::filesystem;

namespace {

struct Options {
  std::string config;
  std::string out;
  std::vector<std::uint64_t> seeds;
  std::string snapshot;
  bool origin = false;
  bool escape = false;
  std::optional<double> tolerance;
  std::uint64_t rotation_seed = 0;
  int max_k = 8;
  std::int64_t draws = 10000;
  std::uint64_t lemma_seed = 2024;
};

ExperimentConfig load(const Options& opt) {
  ExperimentConfig cfg = load_config(opt.config);
  if (!opt.seeds.empty()) cfg.seeds = opt.seeds;
  return cfg;
}

fs::path out_dir(const Options& opt, const ExperimentConfig& cfg) { return opt.out.empty() ? cfg.output_dir : opt.out; }

void print_checks(const VerificationReport& rep, std::ostream& out) {
  for (const auto& c : rep.checks) {
    out << (c.passed ? "PASS " : "FAIL ") << c.name << " residual=" << format_double(c.residual)
        << " tol=" << format_double(c.tolerance) << "\n";
  }
  out << (rep.passed() ? "verify: all checks passed\n" : "verify: some checks failed\n");
}

int cmd_train(const Options& opt, std::ostream& out) {
  const ExperimentConfig cfg = load(opt);
  const fs::path dir = out_dir(opt, cfg);
  const std::string hash = config_hash(cfg);
  const Dataset data = generate_dataset(cfg.labels);

  Json runs = Json::array();
  int code = kExitPass;
  std::optional<std::size_t> best;
  double best_f = 0.0;
  double lo = 0.0;
  double hi = 0.0;
  std::vector<ModelState> finals;
  for (std::uint64_t seed : cfg.seeds) {
    TrainConfig tc = cfg.train;
    tc.seed = seed;
    Trajectory traj;
    ModelState last;
    bool diverged = false;
    std::string message;
    try {
      traj = train(init_state(data, cfg.model, seed, tc.init_scale), data, cfg.model, tc);
      last = traj.final_state;
    } catch (const DivergenceError& e) {
      traj = e.trajectory;
      last = e.last_state;
      diverged = true;
      message = e.what();
      code = kExitNumeric;
    }
    const std::string tag = "seed" + std::to_string(seed);
    write_text(dir / ("trajectory_" + tag + ".csv"), trajectory_csv(traj, data.M()));
    write_state(dir / ("state_" + tag), last, hash);
    finals.push_back(last);

    Json run = {{"seed", seed}, {"diverged", diverged}, {"converged", traj.converged},
                {"iterations", traj.iterations}, {"step_halvings", traj.step_halvings},
                {"final_step", traj.final_step}};
    if (!traj.records.empty()) {
      const TrajectoryRecord& rec = traj.records.back();
      run["f"] = rec.f;
      run["grad_norm"] = rec.grad_norm;
      if (rec.metrics) run["metrics"] = to_json(*rec.metrics);
      if (!diverged) {
        if (!best || rec.f < best_f) {
          best = finals.size() - 1;
          best_f = rec.f;
        }
        lo = runs.empty() ? rec.f : std::min(lo, rec.f);
        hi = runs.empty() ? rec.f : std::max(hi, rec.f);
      }
      out << tag << ": f=" << format_double(rec.f) << " grad_norm=" << format_double(rec.grad_norm)
          << " iterations=" << traj.iterations << (traj.converged ? " converged" : " not converged") << "\n";
    }
    if (diverged) {
      run["error"] = message;
      out << tag << ": diverged: " << message << "\n";
    }
    runs.push_back(run);
  }

  Json summary = {{"config_hash", hash}, {"runs", runs}};
  if (best) {
    summary["best_seed"] = cfg.seeds[*best];
    summary["f_spread"] = lo != 0.0 ? (hi - lo) / std::abs(lo) : hi - lo;
    write_state(dir / "state_best", finals[*best], hash);
  }
  write_text(dir / "summary.json", summary.dump(2) + "\n");
  return code;
}

int cmd_construct(const Options& opt, std::ostream& out) {
  const ExperimentConfig cfg = load(opt);
  if (!cfg.labels.is_balanced())
    throw ConfigError("construct: every present multiplicity must be balanced");
  const fs::path dir = out_dir(opt, cfg);
  const std::string hash = config_hash(cfg);
  const Dataset data = generate_dataset(cfg.labels);
  const AnalyticSolution sol = optimal_rho(cfg.labels, cfg.model);
  const ModelState state = construct_global(data, cfg.model, sol, opt.rotation_seed);
  const Evaluation eval = evaluate(state, data, cfg.model);

  Json doc = to_json(sol);
  doc["config_hash"] = hash;
  doc["f"] = eval.f;
  doc["grad_norm"] = eval.grad.norm();
  doc["rotation_seed"] = opt.rotation_seed;
  write_text(dir / "solution.json", doc.dump(2) + "\n");
  write_state(dir / "state", state, hash);

  out << "rho=" << format_double(sol.rho) << " bound=" << format_double(sol.bound) << " f=" << format_double(eval.f)
      << " grad_norm=" << format_double(eval.grad.norm()) << "\n";
  for (const auto& r : sol.per_m) {
    out << "m=" << r.m << " c1=" << format_double(r.c1) << " c2=" << format_double(r.c2)
        << " C=" << format_double(r.Cm) << " z_in=" << format_double(r.z_in) << " z_out=" << format_double(r.z_out)
        << "\n";
  }
  return kExitPass;
}

int cmd_verify(const Options& opt, std::ostream& out) {
  const ExperimentConfig cfg = load(opt);
  std::string snapshot_hash;
  const ModelState state = read_state(opt.snapshot, &snapshot_hash);
  const Dataset data = generate_dataset(cfg.labels);
  check_shapes(state, data, cfg.model);
  const double tol = opt.tolerance.value_or(cfg.verify_tolerance);
  const VerificationReport rep = verify_global(state, data, cfg.model, VerifyTolerances::uniform(tol));

  Json doc = to_json(rep);
  doc["snapshot_config_hash"] = snapshot_hash;
  doc["config_hash"] = config_hash(cfg);
  write_text(out_dir(opt, cfg) / "verify_report.json", doc.dump(2) + "\n");
  print_checks(rep, out);
  return rep.passed() ? kExitPass : kExitVerifyFail;
}

int cmd_landscape(const Options& opt, std::ostream& out) {
  if (opt.origin == !opt.snapshot.empty()) throw ConfigError("landscape: give exactly one of --snapshot or --origin");
  const ExperimentConfig cfg = load(opt);
  if (cfg.model.d <= cfg.labels.K) throw ConfigError("landscape: the probe requires d > K");
  const Dataset data = generate_dataset(cfg.labels);
  const ModelState state =
      opt.origin ? ModelState::zeros(data.K(), cfg.model.d, data.size()) : read_state(opt.snapshot);
  check_shapes(state, data, cfg.model);
  const CurvatureReport rep = probe(state, data, cfg.model);
  const fs::path dir = out_dir(opt, cfg);
  write_text(dir / "curvature.json", to_json(rep).dump(2) + "\n");
  out << "classification=" << to_string(rep.classification) << " grad_norm=" << format_double(rep.grad_norm)
      << " lambda_min=" << format_double(rep.lambda_min_estimate)
      << " near_zero_directions=" << rep.near_zero_directions << "\n";
  if (!opt.escape) return kExitPass;

  if (rep.classification != CurvatureClass::strict_saddle) {
    out << "escape: skipped, the state is not a strict saddle\n";
    return kExitVerifyFail;
  }
  TrainConfig tc = cfg.train;
  tc.seed = cfg.seeds.front();
  const double tol = opt.tolerance.value_or(cfg.verify_tolerance);
  const EscapeReport esc = escape_test(state, data, cfg.model, rep, tc, VerifyTolerances::uniform(tol));
  write_text(dir / "escape.json", to_json(esc).dump(2) + "\n");
  out << "escape: f_saddle=" << format_double(esc.f_saddle) << " f_final=" << format_double(esc.f_final)
      << (esc.verification.passed() ? " endpoint verified\n" : " endpoint failed verification\n");
  return esc.descended && esc.verification.passed() ? kExitPass : kExitVerifyFail;
}

int cmd_lemmas(const Options& opt, std::ostream& out) {
  const LemmaReport rep = run_lemma_suite(opt.max_k, opt.draws, opt.lemma_seed);
  for (const auto& row : rep.rows) {
    out << (row.passed ? "PASS " : "FAIL ") << row.suite;
    if (row.K > 0) out << " K=" << row.K << " m=" << row.m;
    out << " value=" << format_double(row.value) << "\n";
  }
  out << (rep.passed() ? "lemmas: all passed\n" : "lemmas: failures\n");
  if (!opt.out.empty()) write_text(fs::path(opt.out) / "lemmas.json", to_json(rep).dump(2) + "\n");
  return rep.passed() ? kExitPass : kExitVerifyFail;
}

}  // namespace

int run_cli(int argc, const char* const* argv, std::ostream& out, std::ostream& err) {
  CLI::App app{"Multi-label neural collapse laboratory for the unconstrained feature model"};
  app.require_subcommand(1);
  Options opt;

  auto add_common = [&](CLI::App* sub, bool config_required) {
    auto* c = sub->add_option("--config", opt.config, "experiment config (JSON)");
    if (config_required) c->required()->check(CLI::ExistingFile);
    sub->add_option("--out", opt.out, "output directory (defaults to the config's output_dir)");
    sub->add_option("--seed", opt.seeds, "override the config's seed list");
  };

  auto* train_cmd = app.add_subcommand("train", "gradient descent from every configured seed");
  add_common(train_cmd, true);

  auto* construct_cmd = app.add_subcommand("construct", "analytic global minimizer");
  add_common(construct_cmd, true);
  construct_cmd->add_option("--rotation-seed", opt.rotation_seed, "rotate the simplex frame (0 = canonical)");

  auto* verify_cmd = app.add_subcommand("verify", "check a snapshot against every optimality condition");
  add_common(verify_cmd, true);
  verify_cmd->add_option("--snapshot", opt.snapshot, "snapshot directory")->required();
  verify_cmd->add_option("--tolerance", opt.tolerance, "uniform tolerance overriding the config");

  auto* landscape_cmd = app.add_subcommand("landscape", "curvature probe at a snapshot or the origin");
  add_common(landscape_cmd, true);
  landscape_cmd->add_option("--snapshot", opt.snapshot, "snapshot directory");
  landscape_cmd->add_flag("--origin", opt.origin, "probe the all-zero state");
  landscape_cmd->add_flag("--escape", opt.escape, "perturb along negative curvature and retrain");
  landscape_cmd->add_option("--tolerance", opt.tolerance, "verification tolerance for the escape endpoint");

  auto* lemmas_cmd = app.add_subcommand("lemmas", "combinatorial and loss identity suites");
  add_common(lemmas_cmd, false);
  lemmas_cmd->add_option("--max-k", opt.max_k, "largest number of classes");
  lemmas_cmd->add_option("--draws", opt.draws, "random draws for the loss bound");
  lemmas_cmd->add_option("--lemma-seed", opt.lemma_seed, "seed for the random suites");

  try {
    app.parse(argc, argv);
  } catch (const CLI::ParseError& e) {
    const int code = app.exit(e, out, err);
    return code == 0 ? kExitPass : kExitUsage;
  }

  try {
    if (*train_cmd) return cmd_train(opt, out);
    if (*construct_cmd) return cmd_construct(opt, out);
    if (*verify_cmd) return cmd_verify(opt, out);
    if (*landscape_cmd) return cmd_landscape(opt, out);
    if (*lemmas_cmd) return cmd_lemmas(opt, out);
  } catch (const ConfigError& e) {
    err << "config error: " << e.what() << "\n";
    return kExitUsage;
  } catch (const SnapshotError& e) {
    err << "snapshot error: " << e.what() << "\n";
    return kExitUsage;
  } catch (const std::invalid_argument& e) {
    err << "error: " << e.what() << "\n";
    return kExitUsage;
  } catch (const SolverError& e) {
    err << "solver error: " << e.what() << " (residual " << format_double(e.residual()) << ")\n";
    return kExitNumeric;
  } catch (const NumericError& e) {
    err << "numeric error: " << e.what() << "\n";
    return kExitNumeric;
  } catch (const std::exception& e) {
    err << "error: " << e.what() << "\n";
    return kExitUsage;
  }
  return kExitUsage;
}

}  // namespace mlnc
