#pragma once

// Shared test fixtures: deterministic random instances, a dense stacked-H
// builder, and a dense KKT solve of the parametric subproblem. The KKT path
// shares nothing with the library's Riccati factorization; it is the ground
// truth the tree oracles are checked against.

#include <Eigen/Dense>
#include <cstdint>
#include <random>
#include <vector>

#include "scenopt/problem_data.hpp"
#include "scenopt/prox.hpp"
#include "scenopt/riccati.hpp"
#include "scenopt/scenario_tree.hpp"
#include "scenopt/tree_oracles.hpp"

namespace testsup {

using scenopt::Mat;
using scenopt::Vec;

struct Rng {
  std::mt19937_64 gen;
  explicit Rng(std::uint64_t seed) : gen(seed) {}
  // Canonical [0, 1) double from the top 53 bits; keeps streams portable.
  double uniform() { return static_cast<double>(gen() >> 11) * 0x1.0p-53; }
  double uniform(double lo, double hi) { return lo + (hi - lo) * uniform(); }
  int integer(int lo, int hi) {  // inclusive bounds
    return lo + static_cast<int>(gen() % static_cast<std::uint64_t>(hi - lo + 1));
  }
  Mat matrix(int rows, int cols, double scale = 1.0) {
    Mat m(rows, cols);
    for (int j = 0; j < cols; ++j)
      for (int i = 0; i < rows; ++i) m(i, j) = scale * uniform(-1.0, 1.0);
    return m;
  }
  Vec vector(int size, double scale = 1.0) {
    Vec v(size);
    for (int i = 0; i < size; ++i) v(i) = scale * uniform(-1.0, 1.0);
    return v;
  }
};

// Random tree with every leaf at stage `stages`; keeps the node count at or
// under `max_nodes` by falling back to single children once the budget for
// full branching at the remaining stages runs out.
inline scenopt::ScenarioTree random_tree(Rng& rng, int stages, int max_nodes,
                                         int max_children = 3) {
  scenopt::ScenarioTree tree;
  tree.num_stages = stages;
  tree.node_stage = {0};
  tree.ancestor = {-1};
  tree.children = {{}};
  tree.probability = {1.0};
  tree.stage_offsets = {0, 1};
  int begin = 0, end = 1;
  for (int t = 0; t < stages; ++t) {
    const int stage_count = end - begin;
    // A stage-(t+1) node needs stages_left nodes for itself and a minimal
    // descendant chain; nodes already created this pass still owe the chain.
    const int stages_left = stages - t;
    for (int i = begin; i < end; ++i) {
      const int created = tree.num_nodes() - end;
      int budget = (max_nodes - tree.num_nodes() -
                    created * (stages_left - 1) - (end - i - 1) * stages_left) /
                   stages_left;
      int kids = std::min(max_children, std::max(1, budget));
      kids = rng.integer(1, kids);
      Vec w(kids);
      for (int k = 0; k < kids; ++k) w(k) = rng.uniform(0.2, 1.0);
      w *= tree.probability[static_cast<std::size_t>(i)] / w.sum();
      for (int k = 0; k < kids; ++k) {
        const int id = tree.num_nodes();
        tree.node_stage.push_back(t + 1);
        tree.ancestor.push_back(i);
        tree.children.emplace_back();
        tree.probability.push_back(w(k));
        tree.children[static_cast<std::size_t>(i)].push_back(id);
      }
    }
    begin = end;
    end = tree.num_nodes();
    tree.stage_offsets.push_back(end);
  }
  return tree;
}

struct InstanceOptions {
  bool with_box = true;
  bool with_l1 = false;
  bool with_none = false;
  bool affine = true;  // nonzero q, r, c, p_N
  int stage_rows_lo = 1, stage_rows_hi = 3;
  // Recenter box bounds around a dynamics-consistent rollout. Guarantees a
  // strict interior point, so the dual optimum is attained and solvers that
  // chase an unbounded dual cannot appear as spurious failures.
  bool feasible_boxes = false;
};

// Random well-posed instance: R and P_N strictly positive definite, the
// stage cost block PSD by construction (MM' plus a ridge on the R block).
inline scenopt::ProblemInstance random_instance(Rng& rng,
                                                scenopt::ScenarioTree tree,
                                                int nx, int nu,
                                                InstanceOptions opt = {}) {
  scenopt::ProblemInstance prob;
  prob.tree = std::move(tree);
  prob.nx = nx;
  prob.nu = nu;
  prob.root_state = rng.vector(nx);
  const int n = prob.num_nodes();
  prob.dyn.resize(static_cast<std::size_t>(n));
  prob.cost.resize(static_cast<std::size_t>(n));
  prob.con.resize(static_cast<std::size_t>(n));
  prob.tcost.resize(static_cast<std::size_t>(prob.tree.num_leaves()));
  prob.tcon.resize(static_cast<std::size_t>(prob.tree.num_leaves()));

  std::vector<scenopt::NonsmoothKind> kinds;
  if (opt.with_box) kinds.push_back(scenopt::NonsmoothKind::Box);
  if (opt.with_l1) kinds.push_back(scenopt::NonsmoothKind::ScaledL1);
  if (opt.with_none) kinds.push_back(scenopt::NonsmoothKind::None);
  if (kinds.empty()) kinds.push_back(scenopt::NonsmoothKind::Box);

  const auto spec_for = [&](int rows) {
    scenopt::NonsmoothSpec g;
    g.kind = kinds[static_cast<std::size_t>(rng.integer(0, static_cast<int>(kinds.size()) - 1))];
    if (g.kind == scenopt::NonsmoothKind::Box) {
      g.zmin = Vec(rows);
      g.zmax = Vec(rows);
      for (int j = 0; j < rows; ++j) {
        g.zmin(j) = rng.uniform(-2.0, -0.1);
        g.zmax(j) = rng.uniform(0.1, 2.0);
      }
    } else if (g.kind == scenopt::NonsmoothKind::ScaledL1) {
      g.gamma = rng.uniform(0.2, 2.0);
    }
    return g;
  };

  for (int i = 1; i < n; ++i) {
    const auto si = static_cast<std::size_t>(i);
    auto& d = prob.dyn[si];
    d.A = rng.matrix(nx, nx, 0.6);
    d.B = rng.matrix(nx, nu, 0.8);
    d.c = opt.affine ? rng.vector(nx, 0.3) : Vec::Zero(nx);

    auto& c = prob.cost[si];
    const Mat m = rng.matrix(nx + nu, nx + nu, 0.7);
    Mat blk = m * m.transpose();
    blk.bottomRightCorner(nu, nu) += 0.5 * Mat::Identity(nu, nu);
    c.Q = blk.topLeftCorner(nx, nx);
    c.R = blk.bottomRightCorner(nu, nu);
    c.S = blk.bottomLeftCorner(nu, nx);
    c.q = opt.affine ? rng.vector(nx, 0.5) : Vec::Zero(nx);
    c.r = opt.affine ? rng.vector(nu, 0.5) : Vec::Zero(nu);

    auto& b = prob.con[si];
    const int rows = rng.integer(opt.stage_rows_lo, opt.stage_rows_hi);
    b.F = rng.matrix(rows, nx);
    b.G = rng.matrix(rows, nu);
    b.g = spec_for(rows);
  }
  for (int l = 0; l < prob.tree.num_leaves(); ++l) {
    const auto sl = static_cast<std::size_t>(l);
    const Mat m = rng.matrix(nx, nx, 0.7);
    prob.tcost[sl].P = m * m.transpose() + 0.3 * Mat::Identity(nx, nx);
    prob.tcost[sl].p = opt.affine ? rng.vector(nx, 0.5) : Vec::Zero(nx);
    const int rows = rng.integer(opt.stage_rows_lo, opt.stage_rows_hi);
    prob.tcon[sl].F = rng.matrix(rows, nx);
    prob.tcon[sl].g = spec_for(rows);
  }
  prob.finalize_layout();

  if (opt.feasible_boxes) {
    scenopt::PrimalPoint pt;
    pt.u = rng.matrix(nu, prob.tree.first_leaf(), 0.5);
    pt.x = Mat::Zero(nx, n);
    pt.x.col(0) = prob.root_state;
    for (int i = 1; i < n; ++i) {
      const int a = prob.tree.ancestor[static_cast<std::size_t>(i)];
      const auto& d = prob.dyn[static_cast<std::size_t>(i)];
      pt.x.col(i) = d.A * pt.x.col(a) + d.B * pt.u.col(a) + d.c;
    }
    const scenopt::DualVector z = scenopt::apply_H(prob, pt);
    const auto recenter = [&](scenopt::NonsmoothSpec& g, int off, int rows) {
      if (g.kind != scenopt::NonsmoothKind::Box) return;
      for (int j = 0; j < rows; ++j) {
        g.zmin(j) = z(off + j) - rng.uniform(0.3, 1.2);
        g.zmax(j) = z(off + j) + rng.uniform(0.3, 1.2);
      }
    };
    for (int i = 1; i < n; ++i)
      recenter(prob.con[static_cast<std::size_t>(i)].g,
               prob.dual_offset[static_cast<std::size_t>(i)], prob.stage_rows(i));
    for (int l = 0; l < prob.tree.num_leaves(); ++l)
      recenter(prob.tcon[static_cast<std::size_t>(l)].g,
               prob.tdual_offset[static_cast<std::size_t>(l)],
               prob.terminal_rows(l));
  }
  return prob;
}

inline scenopt::ProblemInstance random_instance(Rng& rng, int stages,
                                                int max_nodes, int nx, int nu,
                                                InstanceOptions opt = {}) {
  return random_instance(rng, random_tree(rng, stages, max_nodes), nx, nu, opt);
}

// Dense H over the full coordinate vector [all u; all x including the root],
// matching PrimalPoint::flatten().
inline Mat dense_H(const scenopt::ProblemInstance& prob) {
  const int nu_cols = prob.tree.first_leaf() * prob.nu;
  const int cols = nu_cols + prob.num_nodes() * prob.nx;
  Mat H = Mat::Zero(prob.dual_dim, cols);
  const auto ucol = [&](int i) { return i * prob.nu; };
  const auto xcol = [&](int i) { return nu_cols + i * prob.nx; };
  for (int i = 1; i < prob.num_nodes(); ++i) {
    const auto si = static_cast<std::size_t>(i);
    const int a = prob.tree.ancestor[si];
    const auto& blk = prob.con[si];
    H.block(prob.dual_offset[si], xcol(a), blk.F.rows(), prob.nx) = blk.F;
    H.block(prob.dual_offset[si], ucol(a), blk.G.rows(), prob.nu) = blk.G;
  }
  for (int i = prob.tree.first_leaf(); i < prob.num_nodes(); ++i) {
    const int l = prob.leaf_ordinal(i);
    const auto& blk = prob.tcon[static_cast<std::size_t>(l)];
    H.block(prob.tdual_offset[static_cast<std::size_t>(l)], xcol(i),
            blk.F.rows(), prob.nx) = blk.F;
  }
  return H;
}

// Dense KKT solve of min <z, H'y> + f(z) subject to the tree dynamics, over
// the decision variables (u at non-leaf nodes, x at non-root nodes). The
// root state is substituted, not optimized.
inline scenopt::PrimalPoint kkt_dual_grad(const scenopt::ProblemInstance& prob,
                                          const Vec& y) {
  const int nx = prob.nx, nu = prob.nu;
  const int n = prob.num_nodes();
  const int nu_cols = prob.tree.first_leaf() * nu;
  const int dim = prob.primal_dim();
  const int neq = (n - 1) * nx;
  const auto uofs = [&](int i) { return i * nu; };
  const auto xofs = [&](int i) { return nu_cols + (i - 1) * nx; };

  Mat M = Mat::Zero(dim, dim);
  Vec lin = Vec::Zero(dim);
  const Vec& p = prob.root_state;

  for (int i = 1; i < n; ++i) {
    const auto si = static_cast<std::size_t>(i);
    const int a = prob.tree.ancestor[si];
    const double pi = prob.tree.probability[si];
    const auto& c = prob.cost[si];
    M.block(uofs(a), uofs(a), nu, nu) += pi * c.R;
    lin.segment(uofs(a), nu) += pi * c.r;
    if (a == 0) {
      lin.segment(uofs(a), nu) += 2.0 * pi * (c.S * p);
    } else {
      M.block(xofs(a), xofs(a), nx, nx) += pi * c.Q;
      M.block(uofs(a), xofs(a), nu, nx) += pi * c.S;
      M.block(xofs(a), uofs(a), nx, nu) += pi * c.S.transpose();
      lin.segment(xofs(a), nx) += pi * c.q;
    }
    const auto& blk = prob.con[si];
    const auto yi = y.segment(prob.dual_offset[si], blk.F.rows());
    lin.segment(uofs(a), nu) += blk.G.transpose() * yi;
    if (a != 0) lin.segment(xofs(a), nx) += blk.F.transpose() * yi;
  }
  for (int i = prob.tree.first_leaf(); i < n; ++i) {
    const int l = prob.leaf_ordinal(i);
    const double pi = prob.tree.probability[static_cast<std::size_t>(i)];
    const auto& tc = prob.tcost[static_cast<std::size_t>(l)];
    M.block(xofs(i), xofs(i), nx, nx) += pi * tc.P;
    lin.segment(xofs(i), nx) += pi * tc.p;
    const auto& blk = prob.tcon[static_cast<std::size_t>(l)];
    lin.segment(xofs(i), nx) +=
        blk.F.transpose() *
        y.segment(prob.tdual_offset[static_cast<std::size_t>(l)], blk.F.rows());
  }

  Mat E = Mat::Zero(neq, dim);
  Vec rhs = Vec::Zero(neq);
  for (int i = 1; i < n; ++i) {
    const auto si = static_cast<std::size_t>(i);
    const int a = prob.tree.ancestor[si];
    const int row = (i - 1) * nx;
    const auto& d = prob.dyn[si];
    E.block(row, xofs(i), nx, nx) = Mat::Identity(nx, nx);
    E.block(row, uofs(a), nx, nu) = -d.B;
    rhs.segment(row, nx) = d.c;
    if (a == 0)
      rhs.segment(row, nx) += d.A * p;
    else
      E.block(row, xofs(a), nx, nx) = -d.A;
  }

  Mat kkt = Mat::Zero(dim + neq, dim + neq);
  kkt.topLeftCorner(dim, dim) = 2.0 * M;
  kkt.topRightCorner(dim, neq) = E.transpose();
  kkt.bottomLeftCorner(neq, dim) = E;
  Vec b(dim + neq);
  b << -lin, rhs;
  Eigen::PartialPivLU<Mat> lu(kkt);
  Vec sol = lu.solve(b);
  if ((kkt * sol - b).cwiseAbs().maxCoeff() > 1e-8 * (1.0 + b.cwiseAbs().maxCoeff()))
    sol = Eigen::FullPivLU<Mat>(kkt).solve(b);

  scenopt::PrimalPoint out = scenopt::zero_primal(nx, nu, prob.tree);
  out.x.col(0) = p;
  for (int i = 0; i < prob.tree.first_leaf(); ++i)
    out.u.col(i) = sol.segment(uofs(i), nu);
  for (int i = 1; i < n; ++i) out.x.col(i) = sol.segment(xofs(i), nx);
  return out;
}

// Dense dual Hessian -H x0(.), column by column. Small instances only.
inline Mat dense_dual_hessian(const scenopt::FactorCache& cache,
                              const scenopt::ProblemInstance& prob) {
  const int m = prob.dual_dim;
  Mat hess(m, m);
  for (int j = 0; j < m; ++j) {
    Vec unit = Vec::Zero(m);
    unit(j) = 1.0;
    hess.col(j) =
        -scenopt::apply_H(prob, scenopt::hessian_vec(cache, prob, unit));
  }
  return 0.5 * (hess + hess.transpose());
}

inline double dual_lipschitz_dense(const scenopt::FactorCache& cache,
                                   const scenopt::ProblemInstance& prob) {
  Eigen::SelfAdjointEigenSolver<Mat> eig(dense_dual_hessian(cache, prob));
  return eig.eigenvalues().maxCoeff();
}

}  // namespace testsup
