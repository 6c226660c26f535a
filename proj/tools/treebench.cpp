// Command-line front end: generate, validate, solve, and benchmark
// scenario-tree optimal control problems. Exit codes: 0 success, 1 the run
// or the document failed its check, 2 usage or I/O errors.

#include <cstdint>
#include <cstdio>
#include <filesystem>
#include <fstream>
#include <random>
#include <sstream>
#include <string>
#include <vector>

#include "CLI11.hpp"
#include "json.hpp"

#include <scenopt/experiment.hpp>
#include <scenopt/generators.hpp>
#include <scenopt/problem_io.hpp>
#include <scenopt/solvers.hpp>

namespace {

void write_text(const std::string& path, const std::string& content) {
  std::ofstream out(path, std::ios::binary);
  if (!out) throw scenopt::Error("cannot open \"" + path + "\" for writing");
  out << content;
  if (!out) throw scenopt::Error("short write to \"" + path + "\"");
}

std::string read_text(const std::string& path) {
  std::ifstream in(path, std::ios::binary);
  if (!in) throw scenopt::Error("cannot open \"" + path + "\"");
  std::ostringstream buf;
  buf << in.rdbuf();
  return buf.str();
}

struct SolveArgs {
  std::string file;
  std::string solver = "nama";
  std::string out;
  double eps = 5e-4;
  double lambda = 0.0;
  int memory = 5;
  int max_iters = 20000;
  bool warm_start = false;
  bool precondition = false;
};

nlohmann::json solve_report_json(const scenopt::SolverReport& rep,
                                 const std::string& solver, bool converged) {
  nlohmann::json j;
  j["schema"] = "scenopt-solvereport-v1";
  j["solver"] = solver;
  j["status"] = rep.status == scenopt::SolverStatus::Converged
                    ? "converged"
                    : "max_iters_exceeded";
  j["converged"] = converged;
  j["eps"] = rep.eps;
  j["iterations"] = rep.iterations;
  j["residual_inf"] = rep.residual_inf;
  j["verified"] = rep.verified;
  j["verify_residual_inf"] = rep.verify_residual_inf;
  j["verify_subdiff_dist"] = rep.verify_subdiff_dist;
  j["lambda_final"] = rep.lambda_final;
  j["lipschitz_estimate"] = rep.lipschitz_estimate;
  j["lipschitz_calls"] = rep.lipschitz_calls;
  j["oracle_calls"] = {{"dual_grad", rep.stats.dual_grad_calls},
                       {"hessian_vec", rep.stats.hessian_vec_calls},
                       {"prox", rep.stats.prox_calls},
                       {"conjugate", rep.stats.conj_calls},
                       {"total", rep.stats.sweep_total()}};
  j["wall_ms"] = rep.wall_ms;
  std::vector<double> root_control(
      rep.x.u.col(0).data(), rep.x.u.col(0).data() + rep.x.u.rows());
  j["root_control"] = root_control;
  j["residual_trace"] = rep.residual_trace;
  j["fbe_trace"] = rep.fbe_trace;
  return j;
}

int run_solve(const SolveArgs& a) {
  const auto spec = scenopt::solver_spec_from_name(a.solver);
  scenopt::SolverConfig cfg;
  cfg.eps = a.eps;
  cfg.lambda0 = a.lambda;
  cfg.memory = a.memory;
  cfg.max_iters = a.max_iters;
  cfg.warm_start = a.warm_start;
  cfg.precondition = a.precondition;
  cfg.nama_parallel_linesearch = spec.parallel_linesearch;

  const auto prob = scenopt::load_problem(a.file);
  const auto rep = scenopt::solve(prob, cfg, spec.kind);
  const bool ok =
      rep.status == scenopt::SolverStatus::Converged && rep.verified;

  std::printf("%s: %s in %d iterations, residual %.3e (eps %.1e)\n",
              spec.name.c_str(), ok ? "converged" : "did not converge",
              rep.iterations, rep.residual_inf, rep.eps);
  std::printf(
      "  %llu dual_grad + %llu hessian_vec oracle sweeps, %llu prox, "
      "%.3f ms\n",
      static_cast<unsigned long long>(rep.stats.dual_grad_calls),
      static_cast<unsigned long long>(rep.stats.hessian_vec_calls),
      static_cast<unsigned long long>(rep.stats.prox_calls), rep.wall_ms);

  if (!a.out.empty()) {
    write_text(a.out, solve_report_json(rep, spec.name, ok).dump(2) + "\n");
    std::printf("  report written to %s\n", a.out.c_str());
  }
  return ok ? 0 : 1;
}

struct GenRandomArgs {
  std::uint64_t seed = 1;
  int nx = 3;
  int nu = 2;
  int horizon = 3;
  int branching = 2;
  std::string out;
};

int run_gen_random(const GenRandomArgs& a) {
  const auto prob = scenopt::gen_random_instance(
      a.seed, {a.nx, a.nu}, {a.horizon, a.branching});
  scenopt::save_problem(prob, a.out);
  std::printf("wrote %s: %d nodes, %d stages, dual dimension %d\n",
              a.out.c_str(), prob.num_nodes(), prob.tree.num_stages,
              prob.dual_dim);
  return 0;
}

struct GenSpringArgs {
  int masses = 5;
  int horizon = 11;
  std::uint64_t sample_seed = 0;
  std::string out;
};

int run_gen_spring(const GenSpringArgs& a) {
  scenopt::SpringMassParams par;
  par.horizon = a.horizon;
  if (a.sample_seed != 0) {
    std::mt19937_64 gen(a.sample_seed);
    par.root_state = scenopt::sample_initial_state(a.masses, par, gen);
  }
  const auto prob = scenopt::gen_spring_mass(a.masses, par);
  scenopt::save_problem(prob, a.out);
  std::printf("wrote %s: %d nodes, %d stages, dual dimension %d\n",
              a.out.c_str(), prob.num_nodes(), prob.tree.num_stages,
              prob.dual_dim);
  return 0;
}

int run_validate(const std::string& file) {
  const auto violations = scenopt::validate_problem_text(read_text(file));
  if (violations.empty()) {
    std::printf("ok: %s parses and validates\n", file.c_str());
    return 0;
  }
  std::fprintf(stderr, "%s fails validation:\n", file.c_str());
  for (const auto& v : violations)
    std::fprintf(stderr, "  %s\n", v.c_str());
  return 1;
}

struct BenchArgs {
  int samples = 50;
  int masses = 5;
  int horizon = 8;
  std::uint64_t seed = 1;
  double eps = 5e-4;
  bool no_timing = false;
  bool no_precondition = false;
  std::string out_dir;
};

int run_bench_spring(const BenchArgs& a) {
  scenopt::SpringMassParams par;
  par.horizon = a.horizon;

  // One generator stream across the batch: the seed pins every root state.
  std::mt19937_64 gen(a.seed);
  std::vector<scenopt::BatchEntry> batch;
  batch.reserve(static_cast<std::size_t>(a.samples));
  for (int k = 0; k < a.samples; ++k) {
    par.root_state = scenopt::sample_initial_state(a.masses, par, gen);
    batch.push_back(
        {"sm" + std::to_string(k), scenopt::gen_spring_mass(a.masses, par)});
  }

  scenopt::ExperimentConfig cfg;
  cfg.solver.eps = a.eps;
  // Probability products condition the dual badly on deep trees, so the
  // probability scaling is on unless explicitly disabled.
  cfg.solver.precondition = !a.no_precondition;
  cfg.include_timing = !a.no_timing;
  auto report =
      scenopt::run_experiment(batch, scenopt::default_solver_set(), cfg);
  report.metadata = {
      {"generator", "spring-mass"},
      {"masses", a.masses},
      {"horizon", a.horizon},
      {"samples", a.samples},
      {"seed", a.seed},
      {"eps", a.eps},
      {"preconditioned", !a.no_precondition},
      {"timing", !a.no_timing},
      {"tree", "full-branching Markov construction: every node keeps one "
               "child per reachable mode"}};

  std::filesystem::create_directories(a.out_dir);
  const auto dir = std::filesystem::path(a.out_dir);
  write_text((dir / "results.csv").string(), report.csv());
  write_text((dir / "traces.csv").string(), report.traces_csv());
  write_text((dir / "summary.json").string(),
             report.summary_json().dump(2) + "\n");

  for (const auto& s : report.summaries()) {
    std::printf(
        "%s: %d/%d converged, median %.0f oracle calls, p95 %.0f, "
        "%.0f%% within 50\n",
        s.solver.c_str(), s.converged, s.count, s.median_calls, s.p95_calls,
        100.0 * s.frac_within_50);
  }
  std::printf("reports written to %s\n", a.out_dir.c_str());
  return 0;
}

}  // namespace

int main(int argc, char** argv) {
  CLI::App app{"scenario-tree optimal control solver benchmark"};
  app.require_subcommand(1);

  SolveArgs solve_args;
  auto* solve_cmd =
      app.add_subcommand("solve", "solve a problem file and report the run");
  solve_cmd->add_option("file", solve_args.file, "problem file")->required();
  solve_cmd->add_option("--solver", solve_args.solver,
                        "minfbe, nama, pnama, or gpad");
  solve_cmd->add_option("--eps", solve_args.eps, "residual tolerance");
  solve_cmd->add_option("--lambda", solve_args.lambda,
                        "step size; 0 estimates it");
  solve_cmd->add_option("--memory", solve_args.memory, "L-BFGS memory");
  solve_cmd->add_option("--max-iters", solve_args.max_iters,
                        "iteration budget");
  solve_cmd->add_flag("--warm-start", solve_args.warm_start,
                      "warm start from a few baseline iterations");
  solve_cmd->add_flag("--precondition", solve_args.precondition,
                      "probability-scale the constraint rows");
  solve_cmd->add_option("--out", solve_args.out, "write a JSON run report");

  auto* gen_cmd = app.add_subcommand("gen", "generate a problem file");
  gen_cmd->require_subcommand(1);
  GenRandomArgs random_args;
  auto* gen_random = gen_cmd->add_subcommand(
      "random", "seeded random instance on a full branching tree");
  gen_random->add_option("--seed", random_args.seed, "draw stream seed");
  gen_random->add_option("--nx", random_args.nx, "state dimension");
  gen_random->add_option("--nu", random_args.nu, "input dimension");
  gen_random->add_option("--horizon", random_args.horizon, "number of stages");
  gen_random->add_option("--branching", random_args.branching,
                         "children per node");
  gen_random->add_option("--out", random_args.out, "output file")->required();

  GenSpringArgs spring_args;
  auto* gen_spring = gen_cmd->add_subcommand(
      "spring-mass", "mass-spring-damper chain with Markov-jump drift");
  gen_spring->add_option("--masses", spring_args.masses, "number of masses");
  gen_spring->add_option("--horizon", spring_args.horizon,
                         "number of stages");
  gen_spring->add_option("--sample-seed", spring_args.sample_seed,
                         "draw the initial state; 0 keeps the origin");
  gen_spring->add_option("--out", spring_args.out, "output file")->required();

  std::string validate_file;
  auto* validate_cmd =
      app.add_subcommand("validate", "parse and validate a problem file");
  validate_cmd->add_option("file", validate_file, "problem file")->required();

  auto* bench_cmd = app.add_subcommand("bench", "run a solver benchmark");
  bench_cmd->require_subcommand(1);
  BenchArgs bench_args;
  auto* bench_spring = bench_cmd->add_subcommand(
      "spring-mass", "sampled initial states on the spring-mass chain");
  bench_spring->add_option("--samples", bench_args.samples,
                           "instances to draw");
  bench_spring->add_option("--seed", bench_args.seed, "sampling seed");
  bench_spring->add_option("--horizon", bench_args.horizon,
                           "number of stages");
  bench_spring->add_option("--masses", bench_args.masses, "number of masses");
  bench_spring->add_option("--eps", bench_args.eps, "residual tolerance");
  bench_spring->add_flag("--no-timing", bench_args.no_timing,
                         "zero the wall_ms column for byte-stable reports");
  bench_spring->add_flag("--no-precondition", bench_args.no_precondition,
                         "solve in the unscaled dual space");
  bench_spring->add_option("--out", bench_args.out_dir, "output directory")
      ->required();

  CLI11_PARSE(app, argc, argv);

  try {
    if (solve_cmd->parsed()) return run_solve(solve_args);
    if (gen_random->parsed()) return run_gen_random(random_args);
    if (gen_spring->parsed()) return run_gen_spring(spring_args);
    if (validate_cmd->parsed()) return run_validate(validate_file);
    if (bench_spring->parsed()) return run_bench_spring(bench_args);
  } catch (const scenopt::ParseError& e) {
    std::fprintf(stderr, "%s\n", e.what());
    return 1;
  } catch (const std::exception& e) {
    std::fprintf(stderr, "treebench: %s\n", e.what());
    return 2;
  }
  return 2;
}
