// ensprune: command-line front end.
//
// Exit codes: 0 success, 2 validation error, 3 solver not optimal, 4 I/O error,
// 1 anything else.

#include <cstdio>
#include <fstream>
#include <iostream>
#include <optional>
#include <sstream>
#include <string>

#include <CLI11.hpp>
#include <json.hpp>

#include "ensprune/conic.hpp"
#include "ensprune/io.hpp"
#include "ensprune/pipeline.hpp"
#include "ensprune/solver.hpp"

namespace {

using namespace ensprune;

enum Exit { kOk = 0, kOther = 1, kValidation = 2, kSolver = 3, kIo = 4 };

// Parsed CLI options shared by the subcommands.
struct Options {
  std::string data;
  std::string out;
  std::string format = "json-text";
  std::uint64_t seed = 0;
  double alpha = 0.3;
  double lambda = 0.5;
  std::vector<double> alphas;
  std::vector<double> lambdas;
  std::optional<double> threshold;
  bool auto_threshold = false;
  std::string vote = "majority";
  std::string lambda_scale = "relative";
  bool simplex = false;
  std::optional<double> ridge;
  double tol = 1e-8;
  int max_iters = 100;
  bool trace = false;

  SyntheticSpec gen;
  std::string provenance;
};

void emit(const Options& o, const std::string& text) {
  if (o.out.empty()) {
    std::cout << text;
  } else {
    write_text_atomic(o.out, text);
  }
}

SolverSettings solver_settings(const Options& o) {
  SolverSettings s;
  s.tol_gap = s.tol_primal = s.tol_dual = o.tol;
  s.max_iters = o.max_iters;
  if (o.trace) s.trace = &std::cerr;
  s.validate();
  return s;
}

PruneConfig prune_config(const Options& o) {
  PruneConfig c;
  if (!o.alphas.empty()) c.alpha_grid = o.alphas;
  if (!o.lambdas.empty()) c.lambda_grid = o.lambdas;
  if (!o.auto_threshold) c.threshold = o.threshold;
  c.ridge = o.ridge;
  c.seed = o.seed;
  c.simplex_mode = o.simplex;
  c.vote = vote_mode_from_string(o.vote);
  c.lambda_scale = lambda_scale_from_string(o.lambda_scale);
  c.solver = solver_settings(o);
  c.validate();
  return c;
}

void write_report_out(const Options& o, const PruneReport& r) {
  const ReportFormat f = report_format_from_string(o.format);
  if (o.out.empty()) {
    std::cout << (f == ReportFormat::json_text ? report_to_json(r) : report_to_csv(r));
  } else {
    write_report(r, o.out, f);
  }
}

int cmd_gen(const Options& o) {
  SyntheticSpec spec = o.gen;
  spec.seed = o.seed;
  const EnsembleData d = generate_synthetic_ensemble(spec);
  if (o.out.empty()) throw InvalidSpec("gen needs --out DIR");
  std::string prov = o.provenance;
  if (prov.empty()) {
    std::ostringstream ss;
    ss << "synthetic M=" << spec.num_models << " N=" << spec.num_samples << " C=" << spec.num_classes
       << " acc=" << format_double(spec.accuracy_low) << ".." << format_double(spec.accuracy_high)
       << " corr=" << format_double(spec.correlation) << " sharp=" << format_double(spec.sharpness)
       << " seed=" << spec.seed;
    prov = ss.str();
  }
  write_predictions(o.out, d, prov);
  return kOk;
}

int cmd_check(const Options& o) {
  const EnsembleData d = read_predictions(o.data);
  std::printf("ok models=%zu samples=%zu classes=%zu train=%zu valid=%zu test=%zu\n",
              d.predictions.num_models(), d.predictions.num_samples(), d.predictions.num_classes(),
              d.split.train.size(), d.split.valid.size(), d.split.test.size());
  return kOk;
}

int cmd_fit(const Options& o) {
  const EnsembleData d = read_predictions(o.data);
  const PruneConfig c = prune_config(o);
  const WeightVector anchor = uniform_weights(d.predictions.num_models());
  const QuadraticSurrogate s = build_surrogate(d.predictions, d.labels, anchor, c.ridge, d.split.train);
  const double lam = c.lambda_scale == LambdaScale::relative ? o.lambda * lambda_max(s, o.alpha) : o.lambda;
  const PruningProgram prog = build_pruning_socp(s, o.alpha, lam, c.simplex_mode);
  const ConicSolution sol = solve(prog.program, c.solver);
  nlohmann::json j{{"alpha", o.alpha},
                   {"lambda", o.lambda},
                   {"lambda_effective", lam},
                   {"status", to_string(sol.status)},
                   {"iterations", sol.iterations},
                   {"objective", sol.primal_objective},
                   {"weights", prog.weights(sol.x)}};
  emit(o, j.dump(2) + '\n');
  return sol.status == SolveStatus::optimal ? kOk : kSolver;
}

int cmd_cv(const Options& o) {
  const EnsembleData d = read_predictions(o.data);
  const CvResult cv = cross_validate(d.predictions, d.labels, d.split, prune_config(o));
  emit(o, cv_to_json(cv));
  return kOk;
}

int cmd_prune(const Options& o) {
  const EnsembleData d = read_predictions(o.data);
  write_report_out(o, prune_with(d, prune_config(o), o.alpha, o.lambda));
  return kOk;
}

int cmd_run(const Options& o) {
  const EnsembleData d = read_predictions(o.data);
  write_report_out(o, run_pipeline(d, prune_config(o)));
  return kOk;
}

int cmd_solve(const Options& o) {
  std::ifstream in(o.data);
  if (!in) throw IoError("cannot open '" + o.data + "' for reading");
  const ConeProgram p = read_program(in);
  const ConicSolution sol = solve(p, solver_settings(o));
  emit(o, solution_to_json(sol));
  return sol.status == SolveStatus::optimal ? kOk : kSolver;
}

void add_solver_flags(CLI::App* app, Options& o) {
  app->add_option("--tol", o.tol, "Solver tolerance for gap and residuals")->capture_default_str();
  app->add_option("--max-iters", o.max_iters, "Solver iteration limit")->capture_default_str();
  app->add_flag("--trace", o.trace, "Print solver iterations to stderr");
}

void add_prune_flags(CLI::App* app, Options& o) {
  app->add_option("--seed", o.seed, "Seed recorded in the report")->capture_default_str();
  app->add_option("--ridge", o.ridge, "Ridge added to Q (default 1e-8 trace(Q)/M)");
  app->add_flag("--simplex", o.simplex, "Constrain weights to the probability simplex");
  app->add_option("--lambda-scale", o.lambda_scale, "absolute|relative")
      ->check(CLI::IsMember({"absolute", "relative"}))
      ->capture_default_str();
  add_solver_flags(app, o);
}

void add_vote_flags(CLI::App* app, Options& o) {
  auto* thr = app->add_option("--threshold", o.threshold, "Fixed pruning threshold h");
  app->add_flag("--auto-threshold", o.auto_threshold, "Pick h on the validation split (default)")
      ->excludes(thr);
  app->add_option("--vote", o.vote, "majority|weighted")
      ->check(CLI::IsMember({"majority", "weighted"}))
      ->capture_default_str();
  app->add_option("--out", o.out, "Output file (stdout if omitted)");
  app->add_option("--format", o.format, "json-text|csv-summary")
      ->check(CLI::IsMember({"json", "json-text", "csv", "csv-summary"}))
      ->capture_default_str();
}

}  // namespace

int main(int argc, char** argv) {
  CLI::App app{"Sparse ensemble pruning by second-order cone programming"};
  app.require_subcommand(1);
  Options o;

  auto* gen = app.add_subcommand("gen", "Write a synthetic ensemble data set");
  gen->add_option("--models", o.gen.num_models)->capture_default_str();
  gen->add_option("--samples", o.gen.num_samples)->capture_default_str();
  gen->add_option("--classes", o.gen.num_classes)->capture_default_str();
  gen->add_option("--acc-low", o.gen.accuracy_low)->capture_default_str();
  gen->add_option("--acc-high", o.gen.accuracy_high)->capture_default_str();
  gen->add_option("--correlation", o.gen.correlation)->capture_default_str();
  gen->add_option("--sharpness", o.gen.sharpness)->capture_default_str();
  gen->add_option("--train-frac", o.gen.train_fraction)->capture_default_str();
  gen->add_option("--valid-frac", o.gen.valid_fraction)->capture_default_str();
  gen->add_option("--seed", o.seed)->capture_default_str();
  gen->add_option("--provenance", o.provenance, "Free text stored in the manifest");
  gen->add_option("--out", o.out, "Output directory")->required();

  auto* check = app.add_subcommand("check", "Validate a data set");
  check->add_option("data", o.data, "Manifest file or directory")->required();

  auto* fit = app.add_subcommand("fit", "Solve for weights at one (alpha, lambda)");
  fit->add_option("data", o.data, "Manifest file or directory")->required();
  fit->add_option("--alpha", o.alpha)->capture_default_str();
  fit->add_option("--lambda", o.lambda)->capture_default_str();
  fit->add_option("--out", o.out, "Output file (stdout if omitted)");
  add_prune_flags(fit, o);

  auto* cv = app.add_subcommand("cv", "Grid search over (alpha, lambda)");
  cv->add_option("data", o.data, "Manifest file or directory")->required();
  cv->add_option("--alphas", o.alphas, "Alpha grid")->delimiter(',');
  cv->add_option("--lambdas", o.lambdas, "Lambda grid")->delimiter(',');
  add_prune_flags(cv, o);
  add_vote_flags(cv, o);

  auto* prune = app.add_subcommand("prune", "Fit, threshold, vote and report at one (alpha, lambda)");
  prune->add_option("data", o.data, "Manifest file or directory")->required();
  prune->add_option("--alpha", o.alpha)->capture_default_str();
  prune->add_option("--lambda", o.lambda)->capture_default_str();
  add_prune_flags(prune, o);
  add_vote_flags(prune, o);

  auto* run = app.add_subcommand("run", "Grid search, prune and report");
  run->add_option("data", o.data, "Manifest file or directory")->required();
  run->add_option("--alphas", o.alphas, "Alpha grid")->delimiter(',');
  run->add_option("--lambdas", o.lambdas, "Lambda grid")->delimiter(',');
  add_prune_flags(run, o);
  add_vote_flags(run, o);

  auto* solve_cmd = app.add_subcommand("solve", "Solve a cone program file");
  solve_cmd->add_option("program", o.data, "Cone program in text format")->required();
  solve_cmd->add_option("--out", o.out, "Output file (stdout if omitted)");
  add_solver_flags(solve_cmd, o);

  try {
    app.parse(argc, argv);
  } catch (const CLI::CallForHelp& e) {
    return app.exit(e);
  } catch (const CLI::CallForAllHelp& e) {
    return app.exit(e);
  } catch (const CLI::ParseError& e) {
    app.exit(e);
    return kValidation;
  }

  try {
    if (*gen) return cmd_gen(o);
    if (*check) return cmd_check(o);
    if (*fit) return cmd_fit(o);
    if (*cv) return cmd_cv(o);
    if (*prune) return cmd_prune(o);
    if (*run) return cmd_run(o);
    if (*solve_cmd) return cmd_solve(o);
  } catch (const FitFailed& e) {
    std::cerr << "error: " << e.what() << '\n';
    return kSolver;
  } catch (const AllCellsFailed& e) {
    std::cerr << "error: " << e.what() << '\n';
    return kSolver;
  } catch (const ValidationError& e) {
    std::cerr << "error: " << e.what() << '\n';
    return kValidation;
  } catch (const MalformedProgram& e) {
    std::cerr << "error: " << e.what() << '\n';
    return kValidation;
  } catch (const DomainError& e) {
    std::cerr << "error: " << e.what() << '\n';
    return kValidation;
  } catch (const IoError& e) {
    std::cerr << "error: " << e.what() << '\n';
    return kIo;
  } catch (const std::exception& e) {
    std::cerr << "error: " << e.what() << '\n';
    return kOther;
  }
  return kOther;
}
