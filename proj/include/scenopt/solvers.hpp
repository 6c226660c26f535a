#pragma once

#include <Eigen/Dense>
#include <chrono>
#include <cmath>
#include <cstdint>
#include <random>
#include <thread>
#include <utility>
#include <vector>

#include "scenopt/errors.hpp"
#include "scenopt/fbe.hpp"
#include "scenopt/lbfgs.hpp"
#include "scenopt/prox.hpp"
#include "scenopt/riccati.hpp"
#include "scenopt/tree_oracles.hpp"

namespace scenopt {

enum class BacktrackingRule { Original, Simple, None };
enum class SolverKind { Minfbe, Nama, Gpad };
enum class SolverStatus { Converged, MaxItersExceeded };

/// Run parameters shared by the three dual solvers. lambda0 = 0 requests the
/// automatic step 0.9 / L (0.95 / L without backtracking, and always for
/// GPAD) with L from a power iteration on the dual Hessian.
struct SolverConfig {
  double lambda0 = 0.0;
  double eps = 5e-4;       ///< residual tolerance, inf norm
  double eps_curv = 1e-12; ///< curvature gate of the L-BFGS push
  double eps_bt = 0.25;    ///< simple-rule constant, in (0, 1/2)
  double beta_bt = 0.05;   ///< original-rule constant, in [0, 1)
  int memory = 5;
  int max_iters = 20000;
  BacktrackingRule backtracking_rule = BacktrackingRule::Simple;
  bool warm_start = false;
  int warm_start_iters = 5;
  bool precondition = false;
  bool nama_parallel_linesearch = false;
  /// NAMA update anchor. True takes the forward-backward point T_lambda(w)
  /// of the accepted trial, which keeps the envelope value nonincreasing.
  /// False anchors the same displacement at the current iterate,
  /// y+ = y - lambda R(w), which carries no descent guarantee.
  bool nama_update_tlambda = true;
};

inline void validate_config(const SolverConfig& cfg) {
  if (cfg.lambda0 < 0.0) throw InvalidParams("lambda0 must be >= 0");
  if (!(cfg.eps > 0.0)) throw InvalidParams("eps must be > 0");
  if (!(cfg.eps_curv > 0.0)) throw InvalidParams("eps_curv must be > 0");
  if (!(cfg.eps_bt > 0.0 && cfg.eps_bt < 0.5))
    throw InvalidParams("eps_bt must lie in (0, 1/2)");
  if (cfg.beta_bt < 0.0 || cfg.beta_bt >= 1.0)
    throw InvalidParams("beta_bt must lie in [0, 1)");
  if (cfg.memory < 1) throw InvalidParams("memory must be >= 1");
  if (cfg.max_iters < 1) throw InvalidParams("max_iters must be >= 1");
  if (cfg.warm_start_iters < 0)
    throw InvalidParams("warm_start_iters must be >= 0");
}

/// Outcome of one solver run. The triple (x, y, z) of a converged report
/// satisfies the termination conditions ||z - Hx||_inf <= eps and
/// dist_inf(y, dg(z)) <= lambda_final * eps; verify_report re-checks both
/// from the triple alone and records the result in the verify_* fields.
struct SolverReport {
  SolverStatus status = SolverStatus::MaxItersExceeded;
  PrimalPoint x;
  DualVector y;
  DualVector z;
  double residual_inf = std::numeric_limits<double>::infinity();
  int iterations = 0;
  OracleStats stats;
  std::uint64_t lipschitz_calls = 0;  ///< power-iteration sweeps, kept apart
  double lipschitz_estimate = 0.0;    ///< 0 when lambda0 was given
  double lambda_final = 0.0;
  double eps = 0.0;
  std::vector<double> residual_trace;  ///< one entry per visited iterate
  std::vector<double> fbe_trace;       ///< envelope value per visited iterate
  double wall_ms = 0.0;
  bool verified = false;
  double verify_residual_inf = std::numeric_limits<double>::infinity();
  double verify_subdiff_dist = std::numeric_limits<double>::infinity();
};

/// Largest eigenvalue of the dual Hessian -H x0(.), by power iteration from
/// a fixed pseudo-random start. Sweeps are reported through `calls`, not
/// through the solver's oracle counters.
inline double estimate_dual_lipschitz(const FactorCache& cache,
                                      const ProblemInstance& prob,
                                      std::uint64_t* calls = nullptr,
                                      double rel_tol = 1e-6,
                                      int max_rounds = 100) {
  std::mt19937_64 gen(0x5eed5eed5eed5eedULL);
  DualVector v(prob.dual_dim);
  for (int i = 0; i < prob.dual_dim; ++i)
    v(i) = 2.0 * ((gen() >> 11) * 0x1.0p-53) - 1.0;
  v /= v.norm();

  double rayleigh = 0.0;
  for (int round = 0; round < max_rounds; ++round) {
    const DualVector image = -apply_H(prob, hessian_vec(cache, prob, v));
    if (calls) ++*calls;
    const double next = v.dot(image);
    const double magnitude = image.norm();
    if (!(magnitude > 0.0)) return 1e-12;
    const bool settled = std::abs(next - rayleigh) <= rel_tol * std::abs(next);
    rayleigh = next;
    if (settled) break;
    v = image / magnitude;
  }
  return std::max(rayleigh, 1e-12);
}

namespace detail {

inline double weighted_inf(const DualVector& res, const Vec* weight) {
  if (weight == nullptr) return res.cwiseAbs().maxCoeff();
  return res.cwiseProduct(*weight).cwiseAbs().maxCoeff();
}

inline double halve_lambda(double lambda) {
  const double next = 0.5 * lambda;
  if (next < 1e-14)
    throw StepUnderflow("backtracking drove lambda below 1e-14");
  return next;
}

inline double resolve_lambda0(const SolverConfig& cfg, SolverKind kind,
                              const FactorCache& cache,
                              const ProblemInstance& prob, SolverReport& rep) {
  if (cfg.lambda0 > 0.0) return cfg.lambda0;
  rep.lipschitz_estimate =
      estimate_dual_lipschitz(cache, prob, &rep.lipschitz_calls);
  const bool fixed_step = kind == SolverKind::Gpad ||
                          cfg.backtracking_rule == BacktrackingRule::None;
  return (fixed_step ? 0.95 : 0.9) / rep.lipschitz_estimate;
}

inline void merge_stats(OracleStats& into, const OracleStats& from) {
  into.dual_grad_calls += from.dual_grad_calls;
  into.hessian_vec_calls += from.hessian_vec_calls;
  into.prox_calls += from.prox_calls;
  into.conj_calls += from.conj_calls;
}

/// A lambda change redefines the envelope at the current iterate, so the
/// trace entries recorded for it are rewritten under the new step. This
/// keeps consecutive trace entries comparable under one envelope, which is
/// what the decrease conditions guarantee.
inline void refresh_trace_tail(SolverReport& rep, const FbState& state,
                               const Vec* residual_weight) {
  rep.residual_trace.back() = weighted_inf(state.R, residual_weight);
  rep.fbe_trace.back() = state.value;
}

inline void finish_report(SolverReport& rep, SolverStatus status,
                          const FbState& state, double residual,
                          std::chrono::steady_clock::time_point start) {
  rep.status = status;
  rep.x = state.x;
  rep.y = state.y;
  rep.z = state.z;
  rep.residual_inf = residual;
  rep.lambda_final = state.lambda;
  rep.wall_ms = std::chrono::duration<double, std::milli>(
                    std::chrono::steady_clock::now() - start)
                    .count();
}

}  // namespace detail

/// Data consumed by the backtracking rules beyond the current state. The
/// original rule compares the smooth value at the candidate next iterate
/// (free from its forward-backward step) against the quadratic model
/// anchored at the accepted trial point w, whose pieces the line-search
/// certificate supplies without further sweeps. The simple rule reads the
/// curvature image H x0(R) at the current iterate (free from the gradient
/// in MINFBE and from x0(r) in NAMA).
struct BacktrackProbe {
  double candidate_fhat = 0.0;
  double anchor_fhat = 0.0;    ///< fhat(w)
  double anchor_inner = 0.0;   ///< <Hx(w), R(w)>
  double anchor_res_sq = 0.0;  ///< ||R(w)||^2
  const DualVector* curvature_image = nullptr;
};

struct BacktrackDecision {
  double lambda;
  bool restarted;
};

/// Decides whether lambda halves at the current state. Callers clear the
/// L-BFGS buffer and rebuild lambda-dependent quantities when it does.
inline BacktrackDecision backtrack_lambda(const FbState& state,
                                          BacktrackingRule rule,
                                          const SolverConfig& cfg,
                                          const BacktrackProbe& probe) {
  const double lambda = state.lambda;
  bool trigger = false;
  switch (rule) {
    case BacktrackingRule::None:
      break;
    case BacktrackingRule::Original: {
      // fhat(T(w)) > fhat(w) - lambda <grad fhat(w), R(w)>
      //              + (1-beta) lambda/2 ||R(w)||^2, grad fhat = -Hx. The
      // model and the probe share the anchor w, so the descent lemma stops
      // the halving once lambda L <= 1 - beta.
      const double model =
          probe.anchor_fhat + lambda * probe.anchor_inner +
          0.5 * (1.0 - cfg.beta_bt) * lambda * probe.anchor_res_sq;
      trigger = probe.candidate_fhat > model;
      break;
    }
    case BacktrackingRule::Simple: {
      if (probe.curvature_image == nullptr)
        throw InvalidParams("simple rule needs the curvature image");
      // lambda ||grad fhat(T) - grad fhat(y)|| > eps_bt ||T - y|| reduces to
      // lambda ||H x0(R)|| > eps_bt ||R||.
      trigger =
          lambda * probe.curvature_image->norm() > cfg.eps_bt * state.R.norm();
      break;
    }
  }
  if (!trigger) return {lambda, false};
  return {detail::halve_lambda(lambda), true};
}

/// Dual MINFBE with L-BFGS directions. Per accepted iteration: one dual_grad
/// (the forward-backward step at the next iterate), one hessian_vec (the FBE
/// gradient), and one further hessian_vec for the homogeneous image of the
/// new direction. A lambda halving restarts the iteration at the same
/// iterate and empties the buffer.
inline SolverReport solve_minfbe(const ProblemInstance& prob,
                                 const FactorCache& cache,
                                 const SeparableNonsmooth& g,
                                 const SolverConfig& cfg, const DualVector& y0,
                                 const Vec* residual_weight = nullptr) {
  validate_config(cfg);
  const auto start = std::chrono::steady_clock::now();
  SolverReport rep;
  rep.eps = cfg.eps;
  double lambda = detail::resolve_lambda0(cfg, SolverKind::Minfbe, cache, prob,
                                          rep);
  LbfgsBuffer buffer(cfg.memory, cfg.eps_curv);

  FbState state = fb_step(cache, prob, g, y0, lambda, &rep.stats);
  DualVector grad, prev_y, prev_grad;
  bool grad_valid = false;
  bool have_pair = false;
  bool fresh_iterate = true;
  int iter = 0;

  for (;;) {
    const double residual = detail::weighted_inf(state.R, residual_weight);
    if (fresh_iterate) {
      rep.residual_trace.push_back(residual);
      rep.fbe_trace.push_back(state.value);
      fresh_iterate = false;
    }
    if (residual <= cfg.eps) {
      rep.iterations = iter;
      detail::finish_report(rep, SolverStatus::Converged, state, residual,
                            start);
      return rep;
    }
    if (iter >= cfg.max_iters) {
      rep.iterations = iter;
      detail::finish_report(rep, SolverStatus::MaxItersExceeded, state,
                            residual, start);
      return rep;
    }

    if (!grad_valid) {
      grad = fbe_grad(state, cache, prob, &rep.stats);
      grad_valid = true;
    }

    if (cfg.backtracking_rule == BacktrackingRule::Simple) {
      // grad - R = lambda H x0(R), the simple rule's curvature image.
      bool halved = false;
      for (;;) {
        const DualVector image = (grad - state.R) / lambda;
        BacktrackProbe probe;
        probe.curvature_image = &image;
        const auto decision =
            backtrack_lambda(state, BacktrackingRule::Simple, cfg, probe);
        if (!decision.restarted) break;
        lambda = decision.lambda;
        buffer.clear();
        have_pair = false;
        rescale_state(state, g, lambda, &rep.stats);
        grad = fbe_grad(state, cache, prob, &rep.stats);
        halved = true;
      }
      // The residual is lambda-dependent; re-enter the loop head so the
      // convergence test sees the rebuilt state. grad stays valid.
      if (halved) {
        detail::refresh_trace_tail(rep, state, residual_weight);
        continue;
      }
    }

    if (have_pair) {
      buffer.push(state.y - prev_y, grad - prev_grad,
                  prev_grad.squaredNorm());
      have_pair = false;
    }

    const DualVector dir = buffer.apply_direction(grad);
    const PrimalPoint hom_dir = hessian_vec(cache, prob, dir, &rep.stats);
    const LineSearchCert cert = linesearch_cert(state, dir, hom_dir, prob);
    const double slack = 1e-12 * (1.0 + std::abs(state.value));

    CertEval accepted;
    bool found = false;
    double tau = 1.0;
    for (int halving = 0; halving <= 60; ++halving, tau *= 0.5) {
      accepted = evaluate_cert(cert, g, tau, &rep.stats);
      if (accepted.delta <= slack) {
        found = true;
        break;
      }
    }
    if (!found) throw LineSearchStalled("no step in {2^-nu, nu <= 60} decreases the envelope");

    FbState next = fb_step(cache, prob, g, accepted.T, lambda, &rep.stats);

    if (cfg.backtracking_rule == BacktrackingRule::Original) {
      BacktrackProbe probe;
      probe.candidate_fhat = next.fhat;
      probe.anchor_fhat = cert_fhat(cert, accepted.tau);
      probe.anchor_inner = accepted.Hx_w.dot(accepted.R);
      probe.anchor_res_sq = accepted.R.squaredNorm();
      const auto decision =
          backtrack_lambda(state, BacktrackingRule::Original, cfg, probe);
      if (decision.restarted) {
        lambda = decision.lambda;
        buffer.clear();
        have_pair = false;
        rescale_state(state, g, lambda, &rep.stats);
        detail::refresh_trace_tail(rep, state, residual_weight);
        grad_valid = false;  // R changed with lambda
        continue;  // stay at the current iterate; the candidate is dropped
      }
    }

    prev_y = state.y;
    prev_grad = std::move(grad);
    grad_valid = false;
    have_pair = true;
    state = std::move(next);
    ++iter;
    fresh_iterate = true;
  }
}

/// Dual NAMA. Per accepted iteration: one dual_grad plus the two homogeneous
/// images x0(r) and x0(d); the FBE gradient is never formed. With
/// nama_parallel_linesearch the two images are computed concurrently when
/// the machine has a second core; the arithmetic is identical either way.
inline SolverReport solve_nama(const ProblemInstance& prob,
                               const FactorCache& cache,
                               const SeparableNonsmooth& g,
                               const SolverConfig& cfg, const DualVector& y0,
                               const Vec* residual_weight = nullptr) {
  validate_config(cfg);
  const auto start = std::chrono::steady_clock::now();
  SolverReport rep;
  rep.eps = cfg.eps;
  double lambda =
      detail::resolve_lambda0(cfg, SolverKind::Nama, cache, prob, rep);
  LbfgsBuffer buffer(cfg.memory, cfg.eps_curv);

  FbState state = fb_step(cache, prob, g, y0, lambda, &rep.stats);
  DualVector prev_y, prev_res;
  bool have_pair = false;
  bool fresh_iterate = true;
  int iter = 0;

  for (;;) {
    const double residual = detail::weighted_inf(state.R, residual_weight);
    if (fresh_iterate) {
      rep.residual_trace.push_back(residual);
      rep.fbe_trace.push_back(state.value);
      fresh_iterate = false;
    }
    if (residual <= cfg.eps) {
      rep.iterations = iter;
      detail::finish_report(rep, SolverStatus::Converged, state, residual,
                            start);
      return rep;
    }
    if (iter >= cfg.max_iters) {
      rep.iterations = iter;
      detail::finish_report(rep, SolverStatus::MaxItersExceeded, state,
                            residual, start);
      return rep;
    }

    if (have_pair) {
      buffer.push(state.y - prev_y, state.R - prev_res,
                  prev_res.squaredNorm());
      have_pair = false;
    }

    const DualVector res = state.R;
    const DualVector dir = buffer.apply_direction(res);

    PrimalPoint hom_res, hom_dir;
    if (cfg.nama_parallel_linesearch &&
        std::thread::hardware_concurrency() >= 2) {
      OracleStats side;
      std::thread worker(
          [&] { hom_res = hessian_vec(cache, prob, res, &side); });
      hom_dir = hessian_vec(cache, prob, dir, &rep.stats);
      worker.join();
      detail::merge_stats(rep.stats, side);
    } else {
      hom_res = hessian_vec(cache, prob, res, &rep.stats);
      hom_dir = hessian_vec(cache, prob, dir, &rep.stats);
    }

    if (cfg.backtracking_rule == BacktrackingRule::Simple) {
      const DualVector image = apply_H(prob, hom_res);
      BacktrackProbe probe;
      probe.curvature_image = &image;
      const auto decision =
          backtrack_lambda(state, BacktrackingRule::Simple, cfg, probe);
      if (decision.restarted) {
        lambda = decision.lambda;
        buffer.clear();
        have_pair = false;
        rescale_state(state, g, lambda, &rep.stats);
        detail::refresh_trace_tail(rep, state, residual_weight);
        continue;  // r changed with lambda; redo the direction work
      }
    }

    // Trial points blend the quasi-Newton step with the forward-backward
    // point: w(tau) = y + tau d + (1-tau)(T - y). The tau -> 0 endpoint is
    // T_lambda(y), whose envelope value never exceeds phi(y) below the
    // critical step, so the halving search terminates.
    const DualVector shift = -lambda * res;
    const PrimalPoint hom_shift{-lambda * hom_res.x, -lambda * hom_res.u};
    const LineSearchCert cert = linesearch_cert_shifted(
        state, g, shift, dir, hom_shift, hom_dir, prob, &rep.stats);
    const double slack = 1e-12 * (1.0 + std::abs(state.value));

    CertEval accepted;
    bool found = false;
    double tau = 1.0;
    for (int halving = 0; halving <= 60; ++halving, tau *= 0.5) {
      accepted = evaluate_cert(cert, g, tau, &rep.stats);
      if (cert.value_anchor + accepted.delta <= state.value + slack) {
        found = true;
        break;
      }
    }
    if (!found) throw LineSearchStalled("no step in {2^-nu, nu <= 60} decreases the envelope");

    const DualVector y_next = cfg.nama_update_tlambda
                                  ? accepted.T
                                  : DualVector(state.y - lambda * accepted.R);
    FbState next = fb_step(cache, prob, g, y_next, lambda, &rep.stats);

    if (cfg.backtracking_rule == BacktrackingRule::Original) {
      BacktrackProbe probe;
      probe.candidate_fhat = next.fhat;
      probe.anchor_fhat = cert_fhat(cert, accepted.tau);
      probe.anchor_inner = accepted.Hx_w.dot(accepted.R);
      probe.anchor_res_sq = accepted.R.squaredNorm();
      const auto decision =
          backtrack_lambda(state, BacktrackingRule::Original, cfg, probe);
      if (decision.restarted) {
        lambda = decision.lambda;
        buffer.clear();
        have_pair = false;
        rescale_state(state, g, lambda, &rep.stats);
        detail::refresh_trace_tail(rep, state, residual_weight);
        continue;
      }
    }

    prev_y = state.y;
    prev_res = state.R;
    have_pair = true;
    state = std::move(next);
    ++iter;
    fresh_iterate = true;
  }
}

/// Accelerated dual proximal gradient baseline: fixed step, Nesterov
/// extrapolation, no restarts. One dual_grad and one prox per iteration. The
/// returned triple is taken at the extrapolated point whose residual met the
/// tolerance, so it satisfies the same termination conditions.
inline SolverReport solve_gpad(const ProblemInstance& prob,
                               const FactorCache& cache,
                               const SeparableNonsmooth& g,
                               const SolverConfig& cfg, const DualVector& y0,
                               const Vec* residual_weight = nullptr) {
  validate_config(cfg);
  const auto start = std::chrono::steady_clock::now();
  SolverReport rep;
  rep.eps = cfg.eps;
  const double lambda =
      detail::resolve_lambda0(cfg, SolverKind::Gpad, cache, prob, rep);

  DualVector y_prev = y0;
  double t = 1.0;
  FbState state = fb_step(cache, prob, g, y0, lambda, &rep.stats);
  int iter = 0;

  for (;;) {
    const double residual = detail::weighted_inf(state.R, residual_weight);
    rep.residual_trace.push_back(residual);
    rep.fbe_trace.push_back(state.value);
    if (residual <= cfg.eps) {
      rep.iterations = iter;
      detail::finish_report(rep, SolverStatus::Converged, state, residual,
                            start);
      return rep;
    }
    if (iter >= cfg.max_iters) {
      rep.iterations = iter;
      detail::finish_report(rep, SolverStatus::MaxItersExceeded, state,
                            residual, start);
      return rep;
    }

    const DualVector y_next = state.T;
    const double t_next = 0.5 * (1.0 + std::sqrt(1.0 + 4.0 * t * t));
    const DualVector w = y_next + ((t - 1.0) / t_next) * (y_next - y_prev);
    y_prev = y_next;
    t = t_next;
    state = fb_step(cache, prob, g, w, lambda, &rep.stats);
    ++iter;
  }
}

/// A few fixed GPAD iterations from zero, used as a warm start for the
/// Newton-type solvers. Returns the forward-backward iterate, not the
/// extrapolated point.
inline DualVector warm_start(const ProblemInstance& prob,
                             const FactorCache& cache,
                             const SeparableNonsmooth& g,
                             const SolverConfig& cfg, double lambda,
                             OracleStats* stats = nullptr) {
  DualVector y = DualVector::Zero(prob.dual_dim);
  if (cfg.warm_start_iters <= 0) return y;
  if (!(lambda > 0.0)) throw InvalidParams("warm_start: lambda must be > 0");
  DualVector w = y;
  double t = 1.0;
  for (int k = 0; k < cfg.warm_start_iters; ++k) {
    const FbState state = fb_step(cache, prob, g, w, lambda, stats);
    const DualVector y_next = state.T;
    const double t_next = 0.5 * (1.0 + std::sqrt(1.0 + 4.0 * t * t));
    w = y_next + ((t - 1.0) / t_next) * (y_next - y);
    y = y_next;
    t = t_next;
  }
  return y;
}

/// Scales each constraint block by the square root of its node probability.
/// Indicator boxes scale their bounds, scaled-l1 blocks divide gamma, so the
/// scaled problem is an exact reformulation with dual map y = sqrt(pi) yb.
inline ProblemInstance precondition(const ProblemInstance& prob) {
  ProblemInstance scaled = prob;
  const auto scale_spec = [](NonsmoothSpec& spec, double root) {
    switch (spec.kind) {
      case NonsmoothKind::None:
        break;
      case NonsmoothKind::Box:
        spec.zmin *= root;
        spec.zmax *= root;
        break;
      case NonsmoothKind::ScaledL1:
        spec.gamma /= root;
        break;
    }
  };
  for (int i = 1; i < prob.num_nodes(); ++i) {
    const auto si = static_cast<std::size_t>(i);
    const double pi = prob.tree.probability[si];
    if (!(pi > 0.0)) throw ZeroProbability("precondition: node probability");
    const double root = std::sqrt(pi);
    scaled.con[si].F *= root;
    scaled.con[si].G *= root;
    scale_spec(scaled.con[si].g, root);
  }
  for (int i = prob.tree.first_leaf(); i < prob.num_nodes(); ++i) {
    const auto li = static_cast<std::size_t>(prob.leaf_ordinal(i));
    const double pi = prob.tree.probability[static_cast<std::size_t>(i)];
    if (!(pi > 0.0)) throw ZeroProbability("precondition: leaf probability");
    const double root = std::sqrt(pi);
    scaled.tcon[li].F *= root;
    scale_spec(scaled.tcon[li].g, root);
  }
  return scaled;
}

namespace detail {

/// Per-row map factors between the preconditioned dual space and the
/// original one: y = factor * yb, z = zb / factor, factor = sqrt(pi).
inline Vec probability_roots(const ProblemInstance& prob) {
  Vec roots(prob.dual_dim);
  for (int i = 1; i < prob.num_nodes(); ++i) {
    const auto si = static_cast<std::size_t>(i);
    roots.segment(prob.dual_offset[si], prob.stage_rows(i))
        .setConstant(std::sqrt(prob.tree.probability[si]));
  }
  for (int i = prob.tree.first_leaf(); i < prob.num_nodes(); ++i) {
    const int l = prob.leaf_ordinal(i);
    roots.segment(prob.tdual_offset[static_cast<std::size_t>(l)],
                  prob.terminal_rows(l))
        .setConstant(
            std::sqrt(prob.tree.probability[static_cast<std::size_t>(i)]));
  }
  return roots;
}

}  // namespace detail

/// Re-derives the termination quantities from the returned triple alone
/// (stacked constraint map plus subdifferential distance) and stores them in
/// the report. Shares no state with the solver loops.
inline void verify_report(const ProblemInstance& prob,
                          const SeparableNonsmooth& g, SolverReport& rep) {
  const DualVector Hx = apply_H(prob, rep.x);
  rep.verify_residual_inf = (rep.z - Hx).cwiseAbs().maxCoeff();
  rep.verify_subdiff_dist = dist_subdiff_inf(g, rep.y, rep.z);
  const double slop = 1.0 + 1e-9;
  rep.verified = rep.status == SolverStatus::Converged &&
                 rep.verify_residual_inf <= rep.eps * slop &&
                 rep.verify_subdiff_dist <= rep.lambda_final * rep.eps * slop;
}

/// Top-level driver: optional preconditioning and warm start around one
/// solver run, then independent verification against the original instance.
/// `shared_cache` skips the factorization when the caller already holds one
/// for this instance; preconditioned runs always factor the scaled instance.
inline SolverReport solve(const ProblemInstance& prob, const SolverConfig& cfg,
                          SolverKind kind,
                          const FactorCache* shared_cache = nullptr) {
  validate_config(cfg);
  const auto start = std::chrono::steady_clock::now();

  const auto dispatch = [&](const ProblemInstance& inst,
                            const FactorCache& cache,
                            const SeparableNonsmooth& g, const DualVector& y0,
                            const Vec* weight) {
    switch (kind) {
      case SolverKind::Minfbe:
        return solve_minfbe(inst, cache, g, cfg, y0, weight);
      case SolverKind::Nama:
        return solve_nama(inst, cache, g, cfg, y0, weight);
      case SolverKind::Gpad:
        return solve_gpad(inst, cache, g, cfg, y0, weight);
    }
    throw InvalidParams("unknown solver kind");
  };

  // One Lipschitz estimate serves the warm start and the solver run; the
  // dispatched config always carries an explicit step.
  const auto run = [&](const ProblemInstance& inst, const FactorCache& cache,
                       const SeparableNonsmooth& g, const Vec* weight) {
    double lhat = 0.0;
    std::uint64_t lhat_calls = 0;
    SolverConfig run_cfg = cfg;
    if (!(cfg.lambda0 > 0.0)) {
      lhat = estimate_dual_lipschitz(cache, inst, &lhat_calls);
      const bool fixed_step =
          kind == SolverKind::Gpad ||
          cfg.backtracking_rule == BacktrackingRule::None;
      run_cfg.lambda0 = (fixed_step ? 0.95 : 0.9) / lhat;
    }
    OracleStats warm_stats;
    DualVector y0 = DualVector::Zero(inst.dual_dim);
    if (cfg.warm_start) {
      const double lambda_ws =
          cfg.lambda0 > 0.0 ? cfg.lambda0 : 0.95 / lhat;
      y0 = warm_start(inst, cache, g, cfg, lambda_ws, &warm_stats);
    }
    SolverReport out = dispatch(inst, cache, g, y0, weight);
    detail::merge_stats(out.stats, warm_stats);
    out.lipschitz_estimate = lhat;
    out.lipschitz_calls = lhat_calls;
    return out;
  };

  SolverReport rep;
  if (!cfg.precondition) {
    FactorCache local;
    const FactorCache* cache = shared_cache;
    if (cache == nullptr) {
      local = factor(prob);
      cache = &local;
    }
    const SeparableNonsmooth g = make_nonsmooth(prob);
    rep = run(prob, *cache, g, nullptr);
    verify_report(prob, g, rep);
  } else {
    const ProblemInstance scaled = precondition(prob);
    const FactorCache cache = factor(scaled);
    const SeparableNonsmooth g_scaled = make_nonsmooth(scaled);
    const Vec roots = detail::probability_roots(prob);
    const Vec weight = roots.cwiseInverse();
    rep = run(scaled, cache, g_scaled, &weight);
    rep.y = rep.y.cwiseProduct(roots).eval();
    rep.z = rep.z.cwiseProduct(weight).eval();
    verify_report(prob, make_nonsmooth(prob), rep);
  }
  rep.wall_ms = std::chrono::duration<double, std::milli>(
                    std::chrono::steady_clock::now() - start)
                    .count();
  return rep;
}

}  // namespace scenopt
