#pragma once

#include <Eigen/Dense>
#include <cstdint>

#include "scenopt/problem_data.hpp"
#include "scenopt/riccati.hpp"

namespace scenopt {

/// Call counters threaded through the oracles and solvers. hessian_vec
/// counts every execution of the homogeneous sweep, including the
/// line-search sub-oracle uses.
struct OracleStats {
  std::uint64_t dual_grad_calls = 0;
  std::uint64_t hessian_vec_calls = 0;
  std::uint64_t prox_calls = 0;
  std::uint64_t conj_calls = 0;

  std::uint64_t sweep_total() const { return dual_grad_calls + hessian_vec_calls; }
};

namespace detail {

/// Shared backward/forward sweep. With `affine` set this is the dual
/// gradient solve (root state p, offsets from q, r, c, p_N included); with
/// it cleared it is the homogeneous part, i.e. the map whose negated image
/// under H is the dual Hessian-vector product.
///
/// Backward: leaves start the costate at F_N' y_N (+ pi p_N); every interior
/// node combines the direct read of its children's stacked stage duals with
/// the children's costates. Forward: closed-loop simulation from the root.
inline PrimalPoint riccati_sweep(const FactorCache& cache,
                                 const ProblemInstance& prob,
                                 const DualVector& y, bool affine) {
  if (y.size() != cache.dual_dim)
    throw DimensionMismatch("riccati_sweep: dual vector has wrong length");
  const auto& tree = prob.tree;
  const int n = cache.num_nodes;

  Mat costate(cache.nx, n);
  PrimalPoint out = zero_primal(cache.nx, cache.nu, tree);

  for (int i = cache.first_leaf; i < n; ++i) {
    const int l = prob.leaf_ordinal(i);
    const auto sl = static_cast<std::size_t>(l);
    const auto& blk = prob.tcon[sl];
    costate.col(i).noalias() =
        blk.F.transpose() *
        y.segment(prob.tdual_offset[sl], blk.F.rows());
    if (affine) costate.col(i) += cache.leaf_costate_affine[sl];
  }

  for (int t = tree.num_stages - 1; t >= 0; --t) {
    const NodeRange rng = nodes_at(tree, t);
    for (int i = rng.first; i < rng.past; ++i) {
      const auto si = static_cast<std::size_t>(i);
      const auto ydual =
          y.segment(cache.child_dual_offset[si], cache.child_dual_rows[si]);
      out.u.col(i).noalias() = cache.dual_to_input[si] * ydual;
      costate.col(i).noalias() = cache.dual_to_costate[si] * ydual;
      if (affine) {
        out.u.col(i) += cache.input_affine[si];
        costate.col(i) += cache.costate_affine[si];
      }
      for (int c : tree.children[si]) {
        const auto sc = static_cast<std::size_t>(c);
        out.u.col(i).noalias() += cache.child_to_input[sc] * costate.col(c);
        costate.col(i).noalias() +=
            cache.closed_loop[sc].transpose() * costate.col(c);
      }
    }
  }

  if (affine) out.x.col(0) = prob.root_state;
  for (int t = 0; t < tree.num_stages; ++t) {
    const NodeRange rng = nodes_at(tree, t);
    for (int i = rng.first; i < rng.past; ++i) {
      const auto si = static_cast<std::size_t>(i);
      out.u.col(i).noalias() += cache.gain[si] * out.x.col(i);
      for (int c : tree.children[si]) {
        const auto sc = static_cast<std::size_t>(c);
        const auto& d = prob.dyn[sc];
        out.x.col(c).noalias() = d.A * out.x.col(i) + d.B * out.u.col(i);
        if (affine) out.x.col(c) += d.c;
      }
    }
  }
  return out;
}

}  // namespace detail

/// x(y) = argmin_z { <z, H'y> + f(z) }, the point whose negated image under
/// H is the dual gradient. Two stage-ordered sweeps over the cache.
inline PrimalPoint dual_grad(const FactorCache& cache,
                             const ProblemInstance& prob, const DualVector& y,
                             OracleStats* stats = nullptr) {
  detail::check_shapes(cache, prob, "dual_grad");
  if (stats) ++stats->dual_grad_calls;
  return detail::riccati_sweep(cache, prob, y, true);
}

/// Homogeneous part x0(r) of the affine map y -> x(y), so that
/// grad^2 fhat(y) r = -H x0(r) for every y. Same sweeps as dual_grad with
/// the affine offsets and the root state zeroed.
inline PrimalPoint hessian_vec(const FactorCache& cache,
                               const ProblemInstance& prob,
                               const DualVector& r,
                               OracleStats* stats = nullptr) {
  detail::check_shapes(cache, prob, "hessian_vec");
  if (stats) ++stats->hessian_vec_calls;
  return detail::riccati_sweep(cache, prob, r, false);
}

/// grad fhat(y) = -H x(y).
inline DualVector grad_fhat(const FactorCache& cache,
                            const ProblemInstance& prob, const DualVector& y,
                            OracleStats* stats = nullptr) {
  return -apply_H(prob, dual_grad(cache, prob, y, stats));
}

/// fhat(y) = f*(-H'y) = -<H x(y), y> - f(x(y)). The minimizer is feasible
/// by construction, so eval_f is finite on it.
inline double fhat_value(const FactorCache& cache, const ProblemInstance& prob,
                         const DualVector& y, OracleStats* stats = nullptr) {
  const PrimalPoint x = dual_grad(cache, prob, y, stats);
  return -apply_H(prob, x).dot(y) - eval_f(prob, x);
}

}  // namespace scenopt
