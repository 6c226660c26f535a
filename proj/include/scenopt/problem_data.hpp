#pragma once

#include <Eigen/Dense>
#include <limits>
#include <string>
#include <vector>

#include "scenopt/errors.hpp"
#include "scenopt/scenario_tree.hpp"

namespace scenopt {

using Mat = Eigen::MatrixXd;
using Vec = Eigen::VectorXd;

/// Dynamics attached to a non-root node i: x^i = A x^anc(i) + B u^anc(i) + c.
struct NodeDynamics {
  Mat A, B;
  Vec c;
};

/// Stage cost attached to a non-root node i, read at the ancestor's pair:
///   cost(x, u) = [x; u]' [[Q, S'], [S, R]] [x; u] + q'x + r'u
/// with no 1/2 factor in front of the quadratic form.
struct NodeCost {
  Mat Q, R, S;
  Vec q, r;
};

/// Terminal cost of a leaf: cost(x) = x' P x + p'x (again no 1/2 factor).
struct TerminalCost {
  Mat P;
  Vec p;
};

enum class NonsmoothKind { None, Box, ScaledL1 };

/// Nonsmooth spec of one constraint block. Box keeps zmin/zmax, ScaledL1
/// keeps gamma; the unused members stay empty/zero.
struct NonsmoothSpec {
  NonsmoothKind kind = NonsmoothKind::None;
  Vec zmin, zmax;
  double gamma = 0.0;
};

/// Constraint rows attached to a non-root node i, read at the ancestor's
/// pair: z^i = F x^anc(i) + G u^anc(i), with m_i = rows(F) = rows(G).
struct ConstraintBlock {
  Mat F, G;
  NonsmoothSpec g;
};

/// Extra rows attached to a leaf, read at the leaf's own state:
/// z_N^i = F x^i.
struct TerminalBlock {
  Mat F;
  NonsmoothSpec g;
};

/// One point of the primal space. Column i of x is the state at node i (the
/// root column is the initial state, fixed to p for points produced by the
/// oracles); column i of u is the input at non-leaf node i. Non-leaf ids are
/// contiguous [0, first_leaf) because leaves sit at the final stage.
struct PrimalPoint {
  Mat x;  ///< n_x by num_nodes
  Mat u;  ///< n_u by first_leaf

  Vec flatten() const {
    Vec out(u.size() + x.size());
    out << Eigen::Map<const Vec>(u.data(), u.size()),
        Eigen::Map<const Vec>(x.data(), x.size());
    return out;
  }
  double dot(const PrimalPoint& o) const {
    return u.cwiseProduct(o.u).sum() + x.cwiseProduct(o.x).sum();
  }
};

inline PrimalPoint zero_primal(int nx, int nu, const ScenarioTree& tree) {
  return PrimalPoint{Mat::Zero(nx, tree.num_nodes()),
                     Mat::Zero(nu, tree.first_leaf())};
}

/// Dual vectors are flat: first the stage blocks of nodes 1..V-1 in id
/// order, then the terminal blocks of the leaves in id order. Offsets live
/// in ProblemInstance.
using DualVector = Eigen::VectorXd;

/// A complete multistage problem over a scenario tree.
///
/// Per-node containers are indexed by node id with index 0 unused (the root
/// carries no dynamics, cost, or constraint block). Terminal containers are
/// indexed by leaf ordinal, i.e. node id minus first_leaf(). Call
/// finalize_layout() after filling the data to compute the dual offsets.
struct ProblemInstance {
  ScenarioTree tree;
  int nx = 0, nu = 0;
  Vec root_state;

  std::vector<NodeDynamics> dyn;
  std::vector<NodeCost> cost;
  std::vector<TerminalCost> tcost;
  std::vector<ConstraintBlock> con;
  std::vector<TerminalBlock> tcon;

  std::vector<int> dual_offset;   ///< per node; -1 at the root
  std::vector<int> tdual_offset;  ///< per leaf ordinal
  int dual_dim = 0;

  int num_nodes() const { return tree.num_nodes(); }
  int leaf_ordinal(int node) const { return node - tree.first_leaf(); }

  /// Decision-variable count: one input per node of stages 0..N-1 plus one
  /// state per node of stages 1..N (the root state is data, not a variable).
  int primal_dim() const {
    return tree.first_leaf() * nu + (tree.num_nodes() - 1) * nx;
  }

  int stage_rows(int node) const {
    return static_cast<int>(con[static_cast<std::size_t>(node)].F.rows());
  }
  int terminal_rows(int leaf_ord) const {
    return static_cast<int>(tcon[static_cast<std::size_t>(leaf_ord)].F.rows());
  }

  void finalize_layout() {
    const int n = num_nodes();
    dual_offset.assign(static_cast<std::size_t>(n), -1);
    int off = 0;
    for (int i = 1; i < n; ++i) {
      dual_offset[static_cast<std::size_t>(i)] = off;
      off += stage_rows(i);
    }
    tdual_offset.assign(static_cast<std::size_t>(tree.num_leaves()), 0);
    for (int l = 0; l < tree.num_leaves(); ++l) {
      tdual_offset[static_cast<std::size_t>(l)] = off;
      off += terminal_rows(l);
    }
    dual_dim = off;
  }
};

/// z = H x: stage rows read the ancestor's pair, terminal rows the leaf state.
inline DualVector apply_H(const ProblemInstance& prob, const PrimalPoint& pt) {
  if (pt.x.rows() != prob.nx || pt.x.cols() != prob.num_nodes() ||
      pt.u.rows() != prob.nu || pt.u.cols() != prob.tree.first_leaf())
    throw DimensionMismatch("apply_H: point does not match the instance");
  DualVector z(prob.dual_dim);
  for (int i = 1; i < prob.num_nodes(); ++i) {
    const auto& blk = prob.con[static_cast<std::size_t>(i)];
    const int a = prob.tree.ancestor[static_cast<std::size_t>(i)];
    z.segment(prob.dual_offset[static_cast<std::size_t>(i)], blk.F.rows()) =
        blk.F * pt.x.col(a) + blk.G * pt.u.col(a);
  }
  for (int i = prob.tree.first_leaf(); i < prob.num_nodes(); ++i) {
    const int l = prob.leaf_ordinal(i);
    const auto& blk = prob.tcon[static_cast<std::size_t>(l)];
    z.segment(prob.tdual_offset[static_cast<std::size_t>(l)], blk.F.rows()) =
        blk.F * pt.x.col(i);
  }
  return z;
}

/// H' y over the full coordinate set. The root-state column is populated too
/// (with the stage-1 contributions), so <H x, y> == <x, H'y> holds with
/// PrimalPoint::dot over all columns; the dual algebra never reads that
/// column because the root state is fixed.
inline PrimalPoint apply_H_adjoint(const ProblemInstance& prob,
                                   const DualVector& y) {
  if (y.size() != prob.dual_dim)
    throw DimensionMismatch("apply_H_adjoint: dual vector has wrong length");
  PrimalPoint out = zero_primal(prob.nx, prob.nu, prob.tree);
  for (int i = 1; i < prob.num_nodes(); ++i) {
    const auto& blk = prob.con[static_cast<std::size_t>(i)];
    const int a = prob.tree.ancestor[static_cast<std::size_t>(i)];
    const auto yi =
        y.segment(prob.dual_offset[static_cast<std::size_t>(i)], blk.F.rows());
    out.x.col(a).noalias() += blk.F.transpose() * yi;
    out.u.col(a).noalias() += blk.G.transpose() * yi;
  }
  for (int i = prob.tree.first_leaf(); i < prob.num_nodes(); ++i) {
    const int l = prob.leaf_ordinal(i);
    const auto& blk = prob.tcon[static_cast<std::size_t>(l)];
    out.x.col(i).noalias() +=
        blk.F.transpose() *
        y.segment(prob.tdual_offset[static_cast<std::size_t>(l)], blk.F.rows());
  }
  return out;
}

/// Smooth cost f at a point: probability-weighted stage and terminal costs,
/// or +inf when the point violates x^0 = p or a dynamics equation by more
/// than 1e-8 in any component.
inline double eval_f(const ProblemInstance& prob, const PrimalPoint& pt,
                     double feas_tol = 1e-8) {
  constexpr double kInf = std::numeric_limits<double>::infinity();
  if ((pt.x.col(0) - prob.root_state).cwiseAbs().maxCoeff() > feas_tol)
    return kInf;
  for (int i = 1; i < prob.num_nodes(); ++i) {
    const auto& d = prob.dyn[static_cast<std::size_t>(i)];
    const int a = prob.tree.ancestor[static_cast<std::size_t>(i)];
    const Vec res = pt.x.col(i) - d.A * pt.x.col(a) - d.B * pt.u.col(a) - d.c;
    if (res.cwiseAbs().maxCoeff() > feas_tol) return kInf;
  }
  double total = 0.0;
  for (int i = 1; i < prob.num_nodes(); ++i) {
    const auto& c = prob.cost[static_cast<std::size_t>(i)];
    const int a = prob.tree.ancestor[static_cast<std::size_t>(i)];
    const double pi = prob.tree.probability[static_cast<std::size_t>(i)];
    const auto xa = pt.x.col(a);
    const auto ua = pt.u.col(a);
    total += pi * (xa.dot(c.Q * xa) + ua.dot(c.R * ua) + 2.0 * ua.dot(c.S * xa) +
                   c.q.dot(xa) + c.r.dot(ua));
  }
  for (int i = prob.tree.first_leaf(); i < prob.num_nodes(); ++i) {
    const auto& c = prob.tcost[static_cast<std::size_t>(prob.leaf_ordinal(i))];
    const double pi = prob.tree.probability[static_cast<std::size_t>(i)];
    const auto xi = pt.x.col(i);
    total += pi * (xi.dot(c.P * xi) + c.p.dot(xi));
  }
  return total;
}

namespace detail {
inline double min_eig(const Mat& sym) {
  Eigen::SelfAdjointEigenSolver<Mat> es(sym, Eigen::EigenvaluesOnly);
  return es.eigenvalues().minCoeff();
}
}  // namespace detail

/// Validates tree invariants plus every dimensional and convexity
/// requirement of the instance; returns one message per violation.
inline std::vector<std::string> validate(const ProblemInstance& prob) {
  std::vector<std::string> bad = validate(prob.tree);
  const auto complain = [&bad](const std::string& msg) { bad.push_back(msg); };
  const int n = prob.num_nodes();
  const int nx = prob.nx, nu = prob.nu;
  if (nx <= 0 || nu <= 0) complain("instance: nx and nu must be positive");
  if (prob.root_state.size() != nx)
    complain("instance: root_state must have length nx");
  if (static_cast<int>(prob.dyn.size()) != n ||
      static_cast<int>(prob.cost.size()) != n ||
      static_cast<int>(prob.con.size()) != n) {
    complain("instance: per-node containers must have one entry per node");
    return bad;
  }
  if (static_cast<int>(prob.tcost.size()) != prob.tree.num_leaves() ||
      static_cast<int>(prob.tcon.size()) != prob.tree.num_leaves()) {
    complain("instance: per-leaf containers must have one entry per leaf");
    return bad;
  }

  const auto check_spec = [&](const NonsmoothSpec& g, int rows,
                              const std::string& where) {
    switch (g.kind) {
      case NonsmoothKind::None:
        break;
      case NonsmoothKind::Box:
        if (g.zmin.size() != rows || g.zmax.size() != rows)
          complain(where + ": box bounds must match the block's row count");
        else if ((g.zmax - g.zmin).minCoeff() < 0.0)
          complain(where + ": box needs zmin <= zmax");
        break;
      case NonsmoothKind::ScaledL1:
        if (!(g.gamma > 0.0)) complain(where + ": scaled_l1 needs gamma > 0");
        break;
    }
  };

  for (int i = 1; i < n; ++i) {
    const auto si = static_cast<std::size_t>(i);
    const std::string where = "node " + std::to_string(i);
    const auto& d = prob.dyn[si];
    if (d.A.rows() != nx || d.A.cols() != nx || d.B.rows() != nx ||
        d.B.cols() != nu || d.c.size() != nx)
      complain(where + ": dynamics dimensions");
    const auto& c = prob.cost[si];
    if (c.Q.rows() != nx || c.Q.cols() != nx || c.R.rows() != nu ||
        c.R.cols() != nu || c.S.rows() != nu || c.S.cols() != nx ||
        c.q.size() != nx || c.r.size() != nu) {
      complain(where + ": cost dimensions");
    } else {
      if (detail::min_eig(c.R) < 1e-10) complain(where + ": R must be positive definite");
      Mat blk(nx + nu, nx + nu);
      blk.topLeftCorner(nx, nx) = c.Q;
      blk.topRightCorner(nx, nu) = c.S.transpose();
      blk.bottomLeftCorner(nu, nx) = c.S;
      blk.bottomRightCorner(nu, nu) = c.R;
      if (detail::min_eig(blk) < -1e-10)
        complain(where + ": cost block [[Q, S'], [S, R]] must be positive "
                         "semidefinite");
    }
    const auto& b = prob.con[si];
    if (b.F.cols() != nx || b.G.cols() != nu || b.F.rows() != b.G.rows())
      complain(where + ": constraint block dimensions");
    check_spec(b.g, static_cast<int>(b.F.rows()), where + " stage block");
  }
  for (int l = 0; l < prob.tree.num_leaves(); ++l) {
    const auto sl = static_cast<std::size_t>(l);
    const std::string where = "leaf " + std::to_string(l);
    const auto& c = prob.tcost[sl];
    if (c.P.rows() != nx || c.P.cols() != nx || c.p.size() != nx)
      complain(where + ": terminal cost dimensions");
    else if (detail::min_eig(c.P) < 1e-10)
      complain(where + ": P_N must be positive definite");
    const auto& b = prob.tcon[sl];
    if (b.F.cols() != nx) complain(where + ": terminal block dimensions");
    check_spec(b.g, static_cast<int>(b.F.rows()), where + " terminal block");
  }

  if (prob.dual_offset.size() != static_cast<std::size_t>(n))
    complain("instance: finalize_layout() has not been run");
  return bad;
}

}  // namespace scenopt
