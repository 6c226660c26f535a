#pragma once

#include <Eigen/Dense>
#include <string>
#include <vector>

#include "scenopt/errors.hpp"
#include "scenopt/problem_data.hpp"

namespace scenopt {

/// Offline factorization of the tree-structured dual-gradient subproblem
///
///   x(y) = argmin { <z, H'y> + f(z) : z satisfies the tree dynamics }.
///
/// Backward elimination of the inputs gives, at every node i, a value
/// function V^i(x) = x' P x + w'x whose quadratic part P depends only on
/// the problem matrices and probabilities. Everything the online sweeps
/// need is precomputed here:
///
///   gain            u = gain x + offset, the eliminated-input feedback
///   dual_to_input   maps the stacked stage duals of i's children onto the
///                   input offset (children duals enter i's subproblem
///                   because their constraint rows read (x^i, u^i))
///   child_to_input  per child: maps the child's backward vector w onto the
///                   input offset
///   closed_loop     per child: A + B gain of the ancestor, the adjoint of
///                   the backward w recursion
///   dual_to_costate transpose of the stacked closed-loop constraint reads
///                   F + G gain, mapping children duals onto w
///   input_affine / costate_affine / leaf_costate_affine
///                   the contributions of q, r, c, p_N; these are the only
///                   members that depend on the affine data
///
/// The cache depends on the problem only through shapes, probabilities, and
/// the Q/R/S/A/B/F/G/P_N matrices, except the *_affine members. It never
/// depends on the root state or on any dual vector.
struct FactorCache {
  int nx = 0, nu = 0;
  int num_nodes = 0;
  int first_leaf = 0;
  int dual_dim = 0;

  // per non-leaf node
  std::vector<Mat> gain;            ///< nu x nx
  std::vector<Mat> dual_to_input;   ///< nu x child_dual_rows[i]
  std::vector<Mat> dual_to_costate; ///< nx x child_dual_rows[i]
  std::vector<Vec> input_affine;    ///< nu
  std::vector<Vec> costate_affine;  ///< nx
  std::vector<Mat> input_hessian;   ///< nu x nu, kept for refactor_affine
  std::vector<int> child_dual_offset;  ///< start of the children's stage duals
  std::vector<int> child_dual_rows;

  // per non-root node
  std::vector<Mat> child_to_input;  ///< nu x nx
  std::vector<Mat> closed_loop;     ///< nx x nx

  // per node: probability-weighted value matrix of the backward recursion
  std::vector<Mat> value_quad;      ///< nx x nx

  // per leaf ordinal
  std::vector<Vec> leaf_costate_affine;  ///< pi * p_N
};

namespace detail {

inline void check_shapes(const FactorCache& cache, const ProblemInstance& prob,
                         const char* who) {
  if (cache.num_nodes != prob.num_nodes() || cache.nx != prob.nx ||
      cache.nu != prob.nu || cache.dual_dim != prob.dual_dim ||
      cache.first_leaf != prob.tree.first_leaf())
    throw CacheMismatch(std::string(who) +
                        ": cache was built for a different problem shape");
}

}  // namespace detail

/// Builds the factor cache by one backward pass over the tree. Throws
/// NotStronglyConvex when an eliminated input Hessian has min eigenvalue
/// below 1e-10. All solves go through a Cholesky factorization; no matrix
/// is ever inverted explicitly.
inline FactorCache factor(const ProblemInstance& prob) {
  const int nx = prob.nx, nu = prob.nu;
  const int n = prob.num_nodes();
  const auto& tree = prob.tree;

  FactorCache cache;
  cache.nx = nx;
  cache.nu = nu;
  cache.num_nodes = n;
  cache.first_leaf = tree.first_leaf();
  cache.dual_dim = prob.dual_dim;
  cache.gain.resize(static_cast<std::size_t>(cache.first_leaf));
  cache.dual_to_input.resize(static_cast<std::size_t>(cache.first_leaf));
  cache.dual_to_costate.resize(static_cast<std::size_t>(cache.first_leaf));
  cache.input_affine.resize(static_cast<std::size_t>(cache.first_leaf));
  cache.costate_affine.resize(static_cast<std::size_t>(cache.first_leaf));
  cache.input_hessian.resize(static_cast<std::size_t>(cache.first_leaf));
  cache.child_dual_offset.resize(static_cast<std::size_t>(cache.first_leaf));
  cache.child_dual_rows.resize(static_cast<std::size_t>(cache.first_leaf));
  cache.child_to_input.resize(static_cast<std::size_t>(n));
  cache.closed_loop.resize(static_cast<std::size_t>(n));
  cache.value_quad.resize(static_cast<std::size_t>(n));
  cache.leaf_costate_affine.resize(static_cast<std::size_t>(tree.num_leaves()));

  for (int i = cache.first_leaf; i < n; ++i) {
    const auto si = static_cast<std::size_t>(i);
    const int l = prob.leaf_ordinal(i);
    const auto& tc = prob.tcost[static_cast<std::size_t>(l)];
    const double pi = tree.probability[si];
    cache.value_quad[si] = pi * tc.P;
    cache.leaf_costate_affine[static_cast<std::size_t>(l)] = pi * tc.p;
  }

  for (int t = tree.num_stages - 1; t >= 0; --t) {
    const NodeRange rng = nodes_at(tree, t);
    for (int i = rng.first; i < rng.past; ++i) {
      const auto si = static_cast<std::size_t>(i);
      const auto& kids = tree.children[si];

      Mat huu = Mat::Zero(nu, nu);
      Mat hux = Mat::Zero(nu, nx);
      Mat hxx = Mat::Zero(nx, nx);
      Vec su = Vec::Zero(nu);
      Vec sx = Vec::Zero(nx);
      int mrows = 0;
      for (int c : kids) {
        const auto sc = static_cast<std::size_t>(c);
        const double pc = tree.probability[sc];
        const auto& d = prob.dyn[sc];
        const auto& cc = prob.cost[sc];
        const Mat PB = cache.value_quad[sc] * d.B;
        const Mat PA = cache.value_quad[sc] * d.A;
        huu.noalias() += pc * cc.R + d.B.transpose() * PB;
        hux.noalias() += pc * cc.S + d.B.transpose() * PA;
        hxx.noalias() += pc * cc.Q + d.A.transpose() * PA;
        const Vec pc2 = 2.0 * (cache.value_quad[sc] * d.c);
        su.noalias() += pc * cc.r + d.B.transpose() * pc2;
        sx.noalias() += pc * cc.q + d.A.transpose() * pc2;
        mrows += prob.stage_rows(c);
      }
      huu = 0.5 * (huu + huu.transpose());

      {
        Eigen::SelfAdjointEigenSolver<Mat> es(huu, Eigen::EigenvaluesOnly);
        if (es.eigenvalues().minCoeff() < 1e-10)
          throw NotStronglyConvex("factor: eliminated input Hessian at node " +
                                  std::to_string(i) +
                                  " has min eigenvalue below 1e-10");
      }
      Eigen::LLT<Mat> llt(huu);
      cache.input_hessian[si] = huu;
      cache.gain[si] = -llt.solve(hux);
      cache.input_affine[si] = -0.5 * llt.solve(su);
      cache.costate_affine[si] = sx + cache.gain[si].transpose() * su;

      cache.child_dual_rows[si] = mrows;
      cache.child_dual_offset[si] =
          prob.dual_offset[static_cast<std::size_t>(kids.front())];
      Mat gt(nu, mrows);  // stacked G' of the children
      Mat dt(nx, mrows);  // stacked (F + G gain)' of the children
      int col = 0;
      for (int c : kids) {
        const auto sc = static_cast<std::size_t>(c);
        const auto& blk = prob.con[sc];
        const int rows = static_cast<int>(blk.F.rows());
        gt.middleCols(col, rows) = blk.G.transpose();
        dt.middleCols(col, rows) =
            (blk.F + blk.G * cache.gain[si]).transpose();
        cache.child_to_input[sc] = -0.5 * llt.solve(prob.dyn[sc].B.transpose());
        cache.closed_loop[sc] = prob.dyn[sc].A + prob.dyn[sc].B * cache.gain[si];
        col += rows;
      }
      cache.dual_to_input[si] = -0.5 * llt.solve(gt);
      cache.dual_to_costate[si] = dt;

      Mat value = hxx + hux.transpose() * cache.gain[si];
      cache.value_quad[si] = 0.5 * (value + value.transpose());
    }
  }
  return cache;
}

/// Recomputes only the affine members (input_affine, costate_affine,
/// leaf_costate_affine) after the q, r, c, or p_N data changed. Throws
/// ShapeChanged when the problem's shape no longer matches the cache.
inline void refactor_affine(FactorCache& cache, const ProblemInstance& prob) {
  if (cache.num_nodes != prob.num_nodes() || cache.nx != prob.nx ||
      cache.nu != prob.nu || cache.dual_dim != prob.dual_dim ||
      cache.first_leaf != prob.tree.first_leaf())
    throw ShapeChanged("refactor_affine: problem shape changed since factor()");
  const auto& tree = prob.tree;

  for (int i = cache.first_leaf; i < cache.num_nodes; ++i) {
    const int l = prob.leaf_ordinal(i);
    cache.leaf_costate_affine[static_cast<std::size_t>(l)] =
        tree.probability[static_cast<std::size_t>(i)] *
        prob.tcost[static_cast<std::size_t>(l)].p;
  }
  for (int i = 0; i < cache.first_leaf; ++i) {
    const auto si = static_cast<std::size_t>(i);
    Vec su = Vec::Zero(cache.nu);
    Vec sx = Vec::Zero(cache.nx);
    for (int c : tree.children[si]) {
      const auto sc = static_cast<std::size_t>(c);
      const double pc = tree.probability[sc];
      const auto& d = prob.dyn[sc];
      const Vec pc2 = 2.0 * (cache.value_quad[sc] * d.c);
      su.noalias() += pc * prob.cost[sc].r + d.B.transpose() * pc2;
      sx.noalias() += pc * prob.cost[sc].q + d.A.transpose() * pc2;
    }
    Eigen::LLT<Mat> llt(cache.input_hessian[si]);
    cache.input_affine[si] = -0.5 * llt.solve(su);
    cache.costate_affine[si] = sx + cache.gain[si].transpose() * su;
  }
}

}  // namespace scenopt
