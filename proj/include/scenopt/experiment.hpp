#pragma once

#include <algorithm>
#include <cmath>
#include <cstdint>
#include <iomanip>
#include <limits>
#include <map>
#include <sstream>
#include <string>
#include <vector>

#include "json.hpp"

#include "errors.hpp"
#include "problem_data.hpp"
#include "problem_io.hpp"
#include "riccati.hpp"
#include "solvers.hpp"

namespace scenopt {

/// One solver column of an experiment. `name` labels the CSV rows; p-NAMA
/// is NAMA with the parallel line search enabled.
struct SolverSpec {
  std::string name;
  SolverKind kind = SolverKind::Nama;
  bool parallel_linesearch = false;
};

inline SolverSpec solver_spec_from_name(const std::string& name) {
  if (name == "minfbe") return {"minfbe", SolverKind::Minfbe, false};
  if (name == "nama") return {"nama", SolverKind::Nama, false};
  if (name == "pnama") return {"pnama", SolverKind::Nama, true};
  if (name == "gpad") return {"gpad", SolverKind::Gpad, false};
  throw InvalidParams("unknown solver \"" + name +
                      "\"; expected minfbe, nama, pnama, or gpad");
}

inline std::vector<SolverSpec> default_solver_set() {
  return {solver_spec_from_name("minfbe"), solver_spec_from_name("nama"),
          solver_spec_from_name("gpad")};
}

/// A labeled instance of a batch. The id names the CSV rows, so it must
/// not contain commas.
struct BatchEntry {
  std::string id;
  ProblemInstance prob;
};

struct ExperimentConfig {
  SolverConfig solver;
  /// False writes wall_ms as zero everywhere, which makes the emitted CSV
  /// and summary byte-deterministic for a fixed seed.
  bool include_timing = true;
  /// Share one factor cache among instances with equal factor hashes
  /// (equal up to root state and nonsmooth specs).
  bool reuse_factors = true;
};

/// One instance x solver outcome. A run that threw carries the message in
/// `error` with converged false; the envelope flag is vacuously true for
/// solvers that do not track the envelope.
struct ExperimentRow {
  std::string instance_id;
  std::string solver;
  int iterations = 0;
  std::uint64_t dual_grad_calls = 0;
  std::uint64_t hessian_vec_calls = 0;
  std::uint64_t prox_calls = 0;
  double final_residual_inf = std::numeric_limits<double>::infinity();
  double wall_ms = 0.0;
  bool converged = false;
  bool fbe_monotone = true;
  std::string error;
  std::vector<double> residual_trace;

  std::uint64_t oracle_calls() const {
    return dual_grad_calls + hessian_vec_calls;
  }
};

/// Distribution digest of one solver over the batch. Quantiles are over
/// the converged rows' combined oracle calls (dual gradients plus
/// Hessian-vector products); the within-50 fraction is over all rows.
struct SolverSummary {
  std::string solver;
  int count = 0;
  int converged = 0;
  double median_calls = 0.0;
  double p84_calls = 0.0;
  double p95_calls = 0.0;
  double frac_within_50 = 0.0;
  int fbe_violations = 0;
  double total_wall_ms = 0.0;
};

namespace detail {

/// Nearest-rank quantile of a sorted sample.
inline double quantile_sorted(const std::vector<double>& sorted, double p) {
  if (sorted.empty()) return 0.0;
  const auto n = sorted.size();
  auto rank = static_cast<std::size_t>(
      std::ceil(p * static_cast<double>(n)));
  if (rank < 1) rank = 1;
  if (rank > n) rank = n;
  return sorted[rank - 1];
}

inline std::string format_double(double v) {
  std::ostringstream out;
  out << std::setprecision(17) << v;
  return out.str();
}

inline std::string format_ms(double v) {
  std::ostringstream out;
  out << std::fixed << std::setprecision(3) << v;
  return out.str();
}

inline bool trace_nonincreasing(const std::vector<double>& trace) {
  for (std::size_t k = 1; k < trace.size(); ++k) {
    const double slack = 1e-10 * (1.0 + std::abs(trace[k - 1]));
    if (trace[k] > trace[k - 1] + slack) return false;
  }
  return true;
}

}  // namespace detail

inline constexpr const char* kResultsCsvHeader =
    "instance_id,solver,iterations,dual_grad_calls,hessian_vec_calls,"
    "prox_calls,final_residual_inf,wall_ms,converged";

struct RunReport {
  std::vector<ExperimentRow> rows;
  nlohmann::json metadata = nlohmann::json::object();

  /// One row per instance x solver, pinned column set.
  std::string csv() const {
    std::string out = std::string(kResultsCsvHeader) + "\n";
    for (const auto& r : rows) {
      out += r.instance_id + "," + r.solver + "," +
             std::to_string(r.iterations) + "," +
             std::to_string(r.dual_grad_calls) + "," +
             std::to_string(r.hessian_vec_calls) + "," +
             std::to_string(r.prox_calls) + "," +
             detail::format_double(r.final_residual_inf) + "," +
             detail::format_ms(r.wall_ms) + "," +
             (r.converged ? "1" : "0") + "\n";
    }
    return out;
  }

  /// Long-format residual traces, one row per visited iterate.
  std::string traces_csv() const {
    std::string out = "instance_id,solver,iteration,residual\n";
    for (const auto& r : rows)
      for (std::size_t k = 0; k < r.residual_trace.size(); ++k)
        out += r.instance_id + "," + r.solver + "," + std::to_string(k) +
               "," + detail::format_double(r.residual_trace[k]) + "\n";
    return out;
  }

  std::vector<SolverSummary> summaries() const {
    std::vector<SolverSummary> out;
    const auto find = [&out](const std::string& name) -> SolverSummary& {
      for (auto& s : out)
        if (s.solver == name) return s;
      out.push_back(SolverSummary{});
      out.back().solver = name;
      return out.back();
    };
    std::map<std::string, std::vector<double>> calls;
    std::map<std::string, int> within;
    for (const auto& r : rows) {
      SolverSummary& s = find(r.solver);
      ++s.count;
      s.total_wall_ms += r.wall_ms;
      if (!r.fbe_monotone) ++s.fbe_violations;
      if (r.converged) {
        ++s.converged;
        calls[r.solver].push_back(static_cast<double>(r.oracle_calls()));
        if (r.oracle_calls() <= 50) ++within[r.solver];
      }
    }
    for (auto& s : out) {
      auto& sample = calls[s.solver];
      std::sort(sample.begin(), sample.end());
      s.median_calls = detail::quantile_sorted(sample, 0.5);
      s.p84_calls = detail::quantile_sorted(sample, 0.84);
      s.p95_calls = detail::quantile_sorted(sample, 0.95);
      s.frac_within_50 =
          s.count > 0 ? static_cast<double>(within[s.solver]) / s.count : 0.0;
    }
    return out;
  }

  /// Every number here is recomputable from the per-row CSV.
  nlohmann::json summary_json() const {
    nlohmann::json j;
    j["schema"] = "scenopt-runreport-v1";
    j["metadata"] = metadata;
    nlohmann::json solvers = nlohmann::json::object();
    for (const auto& s : summaries()) {
      solvers[s.solver] = {{"count", s.count},
                           {"converged", s.converged},
                           {"median_oracle_calls", s.median_calls},
                           {"p84_oracle_calls", s.p84_calls},
                           {"p95_oracle_calls", s.p95_calls},
                           {"frac_within_50_calls", s.frac_within_50},
                           {"fbe_monotone_violations", s.fbe_violations},
                           {"total_wall_ms", s.total_wall_ms}};
    }
    j["solvers"] = std::move(solvers);
    return j;
  }
};

/// Runs every solver on every instance, in the given order. Failures of a
/// single run (factorization or solver throw) are recorded in the row and
/// do not abort the batch.
inline RunReport run_experiment(const std::vector<BatchEntry>& instances,
                                const std::vector<SolverSpec>& solvers,
                                const ExperimentConfig& cfg = {}) {
  validate_config(cfg.solver);
  RunReport report;
  report.rows.reserve(instances.size() * solvers.size());

  // Factor caches shared across the batch. Preconditioned runs factor the
  // scaled instance internally and ignore the shared cache.
  std::map<std::uint64_t, FactorCache> caches;

  for (const auto& entry : instances) {
    const FactorCache* shared = nullptr;
    std::string factor_error;
    if (cfg.reuse_factors && !cfg.solver.precondition) {
      const std::uint64_t key = factor_hash(entry.prob);
      auto it = caches.find(key);
      if (it == caches.end()) {
        try {
          it = caches.emplace(key, factor(entry.prob)).first;
        } catch (const Error& e) {
          factor_error = e.what();
        }
      }
      if (it != caches.end()) shared = &it->second;
    }

    for (const auto& spec : solvers) {
      ExperimentRow row;
      row.instance_id = entry.id;
      row.solver = spec.name;
      if (!factor_error.empty()) {
        row.error = factor_error;
        report.rows.push_back(std::move(row));
        continue;
      }
      SolverConfig run_cfg = cfg.solver;
      run_cfg.nama_parallel_linesearch = spec.parallel_linesearch;
      try {
        const SolverReport rep =
            solve(entry.prob, run_cfg, spec.kind, shared);
        row.iterations = rep.iterations;
        row.dual_grad_calls = rep.stats.dual_grad_calls;
        row.hessian_vec_calls = rep.stats.hessian_vec_calls;
        row.prox_calls = rep.stats.prox_calls;
        row.final_residual_inf = rep.residual_inf;
        row.wall_ms = cfg.include_timing ? rep.wall_ms : 0.0;
        row.converged = rep.status == SolverStatus::Converged && rep.verified;
        row.fbe_monotone = detail::trace_nonincreasing(rep.fbe_trace);
        row.residual_trace = rep.residual_trace;
      } catch (const Error& e) {
        row.error = e.what();
      }
      report.rows.push_back(std::move(row));
    }
  }
  return report;
}

}  // namespace scenopt
