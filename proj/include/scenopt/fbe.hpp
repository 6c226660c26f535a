#pragma once

#include <Eigen/Dense>
#include <cmath>
#include <limits>

#include "scenopt/errors.hpp"
#include "scenopt/prox.hpp"
#include "scenopt/tree_oracles.hpp"

namespace scenopt {

/// One forward-backward evaluation at a dual point. Invariants:
///   Hx    = H x(y)
///   z     = prox_{lambda^-1 g}(lambda^-1 y + Hx)
///   R     = z - Hx
///   T     = y - lambda R
///   fhat  = f*(-H'y) = -<Hx, y> - f(x)
///   value = fhat + g*(T) + lambda <Hx, R> + (lambda/2) ||R||^2
/// value is +inf when g*(T) is (fbe_value throws on access). conj_T and
/// znorm_sq are kept because the line-search certificate reuses them.
struct FbState {
  DualVector y;
  double lambda = 0.0;
  PrimalPoint x;
  DualVector Hx;
  DualVector z;
  DualVector T;
  DualVector R;
  double fhat = 0.0;
  double conj_T = 0.0;
  double znorm_sq = 0.0;
  double value = 0.0;
};

namespace detail {

inline void finish_fb_fields(FbState& state, const SeparableNonsmooth& g,
                             OracleStats* stats) {
  const double lambda = state.lambda;
  state.z = prox_g(g, state.y / lambda + state.Hx, 1.0 / lambda);
  if (stats) ++stats->prox_calls;
  state.R = state.z - state.Hx;
  state.T = state.y - lambda * state.R;
  state.conj_T = conj_value_g(g, state.T);
  if (stats) ++stats->conj_calls;
  state.znorm_sq = state.z.squaredNorm();
  state.value = state.fhat + state.conj_T + lambda * state.Hx.dot(state.R) +
                0.5 * lambda * state.R.squaredNorm();
}

}  // namespace detail

/// Forward-backward evaluation at y. Exactly one dual_grad and one prox_g.
inline FbState fb_step(const FactorCache& cache, const ProblemInstance& prob,
                       const SeparableNonsmooth& g, const DualVector& y,
                       double lambda, OracleStats* stats = nullptr) {
  if (!(lambda > 0.0)) throw InvalidParams("fb_step: lambda must be > 0");
  FbState state;
  state.y = y;
  state.lambda = lambda;
  state.x = dual_grad(cache, prob, y, stats);
  state.Hx = apply_H(prob, state.x);
  state.fhat = -state.Hx.dot(y) - eval_f(prob, state.x);
  detail::finish_fb_fields(state, g, stats);
  return state;
}

/// Rebuilds the lambda-dependent fields of a state in place after a step
/// change. x, Hx, and fhat are lambda-independent, so this costs one prox_g
/// and no sweeps.
inline void rescale_state(FbState& state, const SeparableNonsmooth& g,
                          double lambda, OracleStats* stats = nullptr) {
  if (!(lambda > 0.0)) throw InvalidParams("rescale_state: lambda must be > 0");
  state.lambda = lambda;
  detail::finish_fb_fields(state, g, stats);
}

/// phi_lambda(y). Throws InfiniteConjugate when g*(T) overflowed, which
/// only happens on inconsistent states (T of a valid state is a subgradient
/// of g at z, where g* is finite).
inline double fbe_value(const FbState& state) {
  if (!std::isfinite(state.value))
    throw InfiniteConjugate("fbe_value: g*(T) is infinite");
  return state.value;
}

/// grad phi_lambda(y) = (I - lambda grad^2 fhat) R. Exactly one hessian_vec.
inline DualVector fbe_grad(const FbState& state, const FactorCache& cache,
                           const ProblemInstance& prob,
                           OracleStats* stats = nullptr) {
  const PrimalPoint hom = hessian_vec(cache, prob, state.R, stats);
  return state.R + state.lambda * apply_H(prob, hom);
}

/// Precomputed quadratic certificate for the FBE difference along a ray:
///
///   phi_lambda(anchor + tau dir) - phi_lambda(anchor)
///     = alpha2 tau^2 + alpha1 tau + alpha0(tau),
///
/// exact for every tau because x(.) is affine. alpha0(tau) collects the prox
/// terms and costs one prox_g plus one conj_value_g per tau; alpha1 and
/// alpha2 are tau-independent. The anchor is y for the MINFBE search and the
/// shifted point y + r for the NAMA search.
struct LineSearchCert {
  DualVector anchor;
  DualVector dir;
  double lambda = 0.0;
  DualVector Hx_anchor;   ///< H x(anchor)
  DualVector Hx_dir;      ///< H x0(dir)
  DualVector prox_base;   ///< anchor/lambda + Hx_anchor
  DualVector prox_slope;  ///< dir/lambda + Hx_dir
  double alpha1 = 0.0;
  double alpha2 = 0.0;
  double conj_anchor = 0.0;     ///< g*(T(anchor))
  double znorm_sq_anchor = 0.0; ///< ||z(anchor)||^2
  double value_anchor = 0.0;    ///< phi_lambda(anchor)
  double fhat_anchor = 0.0;     ///< fhat(anchor)
};

/// One certificate evaluation. Everything the solvers need at the accepted
/// point is here; in particular T is the next MINFBE iterate and R feeds the
/// printed NAMA update.
struct CertEval {
  double tau = 0.0;
  double delta = 0.0;  ///< phi(anchor + tau dir) - phi(anchor)
  DualVector w;        ///< anchor + tau dir
  DualVector Hx_w;
  DualVector z;
  DualVector R;
  DualVector T;
};

namespace detail {

inline void fill_cert_coefficients(LineSearchCert& cert) {
  const double quad = cert.dir.dot(cert.Hx_dir);
  cert.alpha2 = -0.5 * quad - 0.5 * cert.lambda * cert.Hx_dir.squaredNorm();
  cert.alpha1 =
      -cert.Hx_anchor.dot(cert.dir + cert.lambda * cert.Hx_dir);
  cert.prox_base = cert.anchor / cert.lambda + cert.Hx_anchor;
  cert.prox_slope = cert.dir / cert.lambda + cert.Hx_dir;
}

}  // namespace detail

/// Certificate anchored at the state's own point. The caller supplies
/// x0(dir) from one hessian_vec call; no further sweeps happen here.
inline LineSearchCert linesearch_cert(const FbState& state,
                                      const DualVector& dir,
                                      const PrimalPoint& hom_dir,
                                      const ProblemInstance& prob) {
  LineSearchCert cert;
  cert.anchor = state.y;
  cert.dir = dir;
  cert.lambda = state.lambda;
  cert.Hx_anchor = state.Hx;
  cert.Hx_dir = apply_H(prob, hom_dir);
  cert.conj_anchor = state.conj_T;
  cert.znorm_sq_anchor = state.znorm_sq;
  cert.value_anchor = state.value;
  cert.fhat_anchor = state.fhat;
  detail::fill_cert_coefficients(cert);
  return cert;
}

/// Certificate anchored at the shifted point y + r with direction d - r, the
/// substitution that turns the NAMA trial w = y + tau d + (1 - tau) r into a
/// ray from a fixed anchor. The shifted anchor quantities follow from the
/// frozen state plus x0(r) and x0(d); assembling them costs one prox_g and
/// one conj_value_g and no sweeps.
inline LineSearchCert linesearch_cert_shifted(
    const FbState& state, const SeparableNonsmooth& g, const DualVector& r,
    const DualVector& dir, const PrimalPoint& hom_r,
    const PrimalPoint& hom_dir, const ProblemInstance& prob,
    OracleStats* stats = nullptr) {
  const double lambda = state.lambda;
  LineSearchCert cert;
  cert.anchor = state.y + r;
  cert.dir = dir - r;
  cert.lambda = lambda;

  const DualVector Hr = apply_H(prob, hom_r);
  cert.Hx_anchor = state.Hx + Hr;
  cert.Hx_dir = apply_H(prob, hom_dir) - Hr;

  // fhat at the shifted anchor, exact because fhat is quadratic with
  // gradient -Hx and curvature -H x0(.).
  cert.fhat_anchor = state.fhat - state.Hx.dot(r) - 0.5 * r.dot(Hr);

  const DualVector z_anchor =
      prox_g(g, cert.anchor / lambda + cert.Hx_anchor, 1.0 / lambda);
  if (stats) ++stats->prox_calls;
  const DualVector res_anchor = z_anchor - cert.Hx_anchor;
  cert.conj_anchor = conj_value_g(g, cert.anchor - lambda * res_anchor);
  if (stats) ++stats->conj_calls;
  cert.znorm_sq_anchor = z_anchor.squaredNorm();
  cert.value_anchor = cert.fhat_anchor + cert.conj_anchor +
                      lambda * cert.Hx_anchor.dot(res_anchor) +
                      0.5 * lambda * res_anchor.squaredNorm();
  detail::fill_cert_coefficients(cert);
  return cert;
}

/// Smooth value at the trial point w(tau) = anchor + tau dir, exact from the
/// certificate's frozen quadratic data. No oracle calls.
inline double cert_fhat(const LineSearchCert& cert, double tau) {
  return cert.fhat_anchor - tau * cert.Hx_anchor.dot(cert.dir) -
         0.5 * tau * tau * cert.dir.dot(cert.Hx_dir);
}

/// Evaluates the certificate at one tau: one prox_g, one conj_value_g, no
/// sweeps.
inline CertEval evaluate_cert(const LineSearchCert& cert,
                              const SeparableNonsmooth& g, double tau,
                              OracleStats* stats = nullptr) {
  CertEval ev;
  ev.tau = tau;
  ev.w = cert.anchor + tau * cert.dir;
  ev.Hx_w = cert.Hx_anchor + tau * cert.Hx_dir;
  ev.z = prox_g(g, cert.prox_base + tau * cert.prox_slope, 1.0 / cert.lambda);
  if (stats) ++stats->prox_calls;
  ev.R = ev.z - ev.Hx_w;
  ev.T = ev.w - cert.lambda * ev.R;
  const double conj = conj_value_g(g, ev.T);
  if (stats) ++stats->conj_calls;
  ev.delta = cert.alpha2 * tau * tau + cert.alpha1 * tau + conj -
             cert.conj_anchor +
             0.5 * cert.lambda * (ev.z.squaredNorm() - cert.znorm_sq_anchor);
  return ev;
}

}  // namespace scenopt
