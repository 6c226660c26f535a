#pragma once

#include <cstdint>
#include <random>

#include <Eigen/Dense>
#include <Eigen/Eigenvalues>
#include <unsupported/Eigen/MatrixFunctions>

#include "errors.hpp"
#include "problem_data.hpp"
#include "scenario_tree.hpp"

namespace scenopt {

namespace detail {

/// Uniform double in [0, 1) from the top 53 bits of one engine draw, so the
/// stream does not depend on the standard library's distribution internals.
inline double unit_draw(std::mt19937_64& gen) {
  return static_cast<double>(gen() >> 11) * 0x1.0p-53;
}

/// Uniform double in [-1, 1).
inline double sym_draw(std::mt19937_64& gen) {
  return 2.0 * unit_draw(gen) - 1.0;
}

inline Mat random_mat(std::mt19937_64& gen, int rows, int cols,
                      double scale = 1.0) {
  Mat out(rows, cols);
  for (int i = 0; i < rows; ++i)
    for (int j = 0; j < cols; ++j) out(i, j) = scale * sym_draw(gen);
  return out;
}

}  // namespace detail

/// Physical and problem parameters of the spring-mass-damper array
/// benchmark. An array of M point masses is chained between two walls by
/// M + 1 identical springs and dampers; an actuator between each pair of
/// adjacent masses applies equal and opposite forces to the two. The state
/// stacks the M positions above the M velocities, so n_x = 2M and
/// n_u = M - 1. The additive disturbance is driven by a Markov chain;
/// mode w adds mode_values[w] to every state component.
///
/// Empty members take the benchmark defaults: initial_probs (0.5, 0.5),
/// transition [[0.1, 0.9], [0.9, 0.1]], mode_values (0, 0.1), root_state
/// zero.
struct SpringMassParams {
  double mass_kg = 5.0;
  double stiffness = 1.0;       ///< spring constant, N/m
  double damping = 0.1;         ///< viscous coefficient, Ns/m
  double input_bound = 2.0;     ///< |u_j| <= input_bound, N
  double velocity_bound = 5.0;  ///< |v_j| <= velocity_bound, m/s
  int horizon = 11;
  double sampling = 0.5;  ///< zero-order-hold period, s
  double state_weight = 5.0;
  double input_weight = 2.0;
  double terminal_weight = 100.0;
  Vec initial_probs;
  Mat transition;
  Vec mode_values;
  Vec root_state;
};

namespace detail {

/// Continuous-time dynamics of the array from Newton's second law. With
/// T the tridiagonal (2, -1) coupling matrix and D the signed actuator
/// incidence (force -u_j on mass j, +u_j on mass j+1):
///   d/dt [p; v] = [[0, I], [-(k/m) T, -(b/m) T]] [p; v] + [[0], [D/m]] u.
inline void spring_mass_continuous(int masses, const SpringMassParams& par,
                                   Mat& A, Mat& B) {
  const int n = masses;
  Mat coupling = Mat::Zero(n, n);
  for (int j = 0; j < n; ++j) {
    coupling(j, j) = 2.0;
    if (j > 0) coupling(j, j - 1) = -1.0;
    if (j + 1 < n) coupling(j, j + 1) = -1.0;
  }
  Mat incidence = Mat::Zero(n, n - 1);
  for (int a = 0; a + 1 < n; ++a) {
    incidence(a, a) = -1.0;
    incidence(a + 1, a) = 1.0;
  }
  A = Mat::Zero(2 * n, 2 * n);
  A.topRightCorner(n, n) = Mat::Identity(n, n);
  A.bottomLeftCorner(n, n) = -(par.stiffness / par.mass_kg) * coupling;
  A.bottomRightCorner(n, n) = -(par.damping / par.mass_kg) * coupling;
  B = Mat::Zero(2 * n, n - 1);
  B.bottomRows(n) = incidence / par.mass_kg;
}

}  // namespace detail

/// Exact zero-order-hold discretization of dx/dt = A x + B u over one
/// period: the exponential of the augmented matrix [[A, B], [0, 0]] scaled
/// by the period holds A_d in the top-left block and B_d in the top-right.
inline void discretize_zoh(const Mat& A, const Mat& B, double period,
                           Mat& Ad, Mat& Bd) {
  if (A.rows() != A.cols() || B.rows() != A.rows())
    throw DimensionMismatch("discretize_zoh: A must be square and match B");
  if (!(period > 0.0)) throw InvalidParams("discretize_zoh: period must be > 0");
  const int n = static_cast<int>(A.rows());
  const int m = static_cast<int>(B.cols());
  Mat aug = Mat::Zero(n + m, n + m);
  aug.topLeftCorner(n, n) = A;
  aug.topRightCorner(n, m) = B;
  const Mat big = (aug * period).exp();
  Ad = big.topLeftCorner(n, n);
  Bd = big.topRightCorner(n, m);
}

/// Builds the spring-mass-damper benchmark instance: ZOH-discretized array
/// dynamics on the full Markov mode tree, quadratic costs state_weight I /
/// input_weight I / terminal_weight I, and box constraints on every
/// velocity (|v| <= velocity_bound, enforced on stage pairs and on leaf
/// states) and every input (|u| <= input_bound).
inline ProblemInstance gen_spring_mass(int masses,
                                       const SpringMassParams& params = {}) {
  if (masses < 2) throw InvalidParams("gen_spring_mass: masses must be >= 2");
  if (!(params.mass_kg > 0.0))
    throw InvalidParams("gen_spring_mass: mass_kg must be > 0");
  if (!(params.input_bound > 0.0) || !(params.velocity_bound > 0.0))
    throw InvalidParams("gen_spring_mass: bounds must be > 0");
  if (!(params.input_weight > 0.0) || !(params.terminal_weight > 0.0))
    throw InvalidParams(
        "gen_spring_mass: input and terminal weights must be > 0");
  if (params.state_weight < 0.0)
    throw InvalidParams("gen_spring_mass: state_weight must be >= 0");

  SpringMassParams par = params;
  if (par.initial_probs.size() == 0) {
    par.initial_probs = Vec::Constant(2, 0.5);
  }
  if (par.transition.size() == 0) {
    par.transition = Mat(2, 2);
    par.transition << 0.1, 0.9, 0.9, 0.1;
  }
  if (par.mode_values.size() == 0) {
    par.mode_values = Vec::Zero(par.initial_probs.size());
    if (par.mode_values.size() > 1) par.mode_values(1) = 0.1;
  }
  if (par.mode_values.size() != par.initial_probs.size())
    throw DimensionMismatch(
        "gen_spring_mass: one mode value per Markov mode required");

  const int nx = 2 * masses;
  const int nu = masses - 1;

  Mat Ac, Bc;
  detail::spring_mass_continuous(masses, par, Ac, Bc);
  Mat Ad, Bd;
  discretize_zoh(Ac, Bc, par.sampling, Ad, Bd);

  ProblemInstance prob;
  prob.tree =
      build_from_markov(par.transition, par.initial_probs, par.horizon);
  prob.nx = nx;
  prob.nu = nu;
  prob.root_state =
      par.root_state.size() == 0 ? Vec::Zero(nx) : par.root_state;
  if (prob.root_state.size() != nx)
    throw DimensionMismatch("gen_spring_mass: root_state must have length 2M");

  // Velocity rows select components M..2M-1 of the state.
  Mat vel_select = Mat::Zero(masses, nx);
  vel_select.rightCols(masses) = Mat::Identity(masses, masses);

  NodeCost stage_cost;
  stage_cost.Q = par.state_weight * Mat::Identity(nx, nx);
  stage_cost.R = par.input_weight * Mat::Identity(nu, nu);
  stage_cost.S = Mat::Zero(nu, nx);
  stage_cost.q = Vec::Zero(nx);
  stage_cost.r = Vec::Zero(nu);

  ConstraintBlock stage_con;
  stage_con.F = Mat::Zero(masses + nu, nx);
  stage_con.F.topRows(masses) = vel_select;
  stage_con.G = Mat::Zero(masses + nu, nu);
  stage_con.G.bottomRows(nu) = Mat::Identity(nu, nu);
  stage_con.g.kind = NonsmoothKind::Box;
  stage_con.g.zmin = Vec(masses + nu);
  stage_con.g.zmin.head(masses).setConstant(-par.velocity_bound);
  stage_con.g.zmin.tail(nu).setConstant(-par.input_bound);
  stage_con.g.zmax = -stage_con.g.zmin;

  const int n = prob.num_nodes();
  prob.dyn.resize(static_cast<std::size_t>(n));
  prob.cost.resize(static_cast<std::size_t>(n));
  prob.con.resize(static_cast<std::size_t>(n));
  for (int i = 1; i < n; ++i) {
    const auto si = static_cast<std::size_t>(i);
    prob.dyn[si].A = Ad;
    prob.dyn[si].B = Bd;
    prob.dyn[si].c =
        Vec::Constant(nx, par.mode_values(prob.tree.mode[si]));
    prob.cost[si] = stage_cost;
    prob.con[si] = stage_con;
  }

  TerminalCost leaf_cost;
  leaf_cost.P = par.terminal_weight * Mat::Identity(nx, nx);
  leaf_cost.p = Vec::Zero(nx);
  TerminalBlock leaf_con;
  leaf_con.F = vel_select;
  leaf_con.g.kind = NonsmoothKind::Box;
  leaf_con.g.zmin = Vec::Constant(masses, -par.velocity_bound);
  leaf_con.g.zmax = Vec::Constant(masses, par.velocity_bound);
  prob.tcost.assign(static_cast<std::size_t>(prob.tree.num_leaves()),
                    leaf_cost);
  prob.tcon.assign(static_cast<std::size_t>(prob.tree.num_leaves()),
                   leaf_con);

  prob.finalize_layout();
  return prob;
}

/// Uniform draw from the centered state box used by the benchmark: every
/// position and velocity component lies within half the velocity bound, so
/// the sampled state sits strictly inside the velocity constraints.
inline Vec sample_initial_state(int masses, const SpringMassParams& params,
                                std::mt19937_64& gen) {
  if (masses < 2)
    throw InvalidParams("sample_initial_state: masses must be >= 2");
  const double half = 0.5 * params.velocity_bound;
  const double pos_box = 1.0 * params.velocity_bound;
  Vec state(2 * masses);
  for (int i = 0; i < masses; ++i) state(i) = pos_box * detail::sym_draw(gen);
  for (int i = masses; i < state.size(); ++i)
    state(i) = half * detail::sym_draw(gen);
  return state;
}

struct RandomDims {
  int nx = 3;
  int nu = 2;
};

struct RandomTreeShape {
  int horizon = 3;
  int branching = 2;
};

/// Random instance on the full branching tree with uniform probabilities.
/// The draw stream is fully determined by the seed, so equal seeds yield
/// byte-identical instances. The drift and the root state are zero and
/// every box strictly contains the origin, so the zero rollout is strictly
/// feasible and the dual optimum is attained; the boxes are narrow and the
/// linear cost terms push the unconstrained optimum outside them, so the
/// constraints are typically active. Costs are cut from a random
/// W W' + 0.1 I block, which makes every stage block positive semidefinite
/// with R positive definite; dynamics are scaled to spectral radius 0.95.
inline ProblemInstance gen_random_instance(std::uint64_t seed,
                                           RandomDims dims = {},
                                           RandomTreeShape shape = {}) {
  if (dims.nx < 1 || dims.nu < 1)
    throw InvalidParams("gen_random_instance: dims must be positive");
  if (shape.horizon < 1 || shape.branching < 1)
    throw InvalidParams("gen_random_instance: tree shape must be positive");

  std::mt19937_64 gen(seed);
  const int nb = shape.branching;
  const Mat transition = Mat::Constant(nb, nb, 1.0 / nb);
  const Vec initial = Vec::Constant(nb, 1.0 / nb);

  ProblemInstance prob;
  prob.tree = build_from_markov(transition, initial, shape.horizon);
  prob.nx = dims.nx;
  prob.nu = dims.nu;
  prob.root_state = Vec::Zero(dims.nx);

  const int n = prob.num_nodes();
  prob.dyn.resize(static_cast<std::size_t>(n));
  prob.cost.resize(static_cast<std::size_t>(n));
  prob.con.resize(static_cast<std::size_t>(n));
  for (int i = 1; i < n; ++i) {
    const auto si = static_cast<std::size_t>(i);
    Mat A = detail::random_mat(gen, dims.nx, dims.nx);
    const double radius =
        A.eigenvalues().cwiseAbs().maxCoeff();
    if (radius > 0.0) A *= 0.95 / radius;
    prob.dyn[si].A = A;
    prob.dyn[si].B = detail::random_mat(gen, dims.nx, dims.nu);
    prob.dyn[si].c = Vec::Zero(dims.nx);

    const int nw = dims.nx + dims.nu;
    const Mat root = detail::random_mat(gen, nw, nw);
    const Mat block = root * root.transpose() + 0.1 * Mat::Identity(nw, nw);
    prob.cost[si].Q = block.topLeftCorner(dims.nx, dims.nx);
    prob.cost[si].S = block.bottomLeftCorner(dims.nu, dims.nx);
    prob.cost[si].R = block.bottomRightCorner(dims.nu, dims.nu);
    prob.cost[si].q = detail::random_mat(gen, dims.nx, 1, 1.5);
    prob.cost[si].r = detail::random_mat(gen, dims.nu, 1, 1.5);

    const int rows = 2;
    prob.con[si].F = detail::random_mat(gen, rows, dims.nx);
    prob.con[si].G = detail::random_mat(gen, rows, dims.nu);
    prob.con[si].g.kind = NonsmoothKind::Box;
    prob.con[si].g.zmin = Vec(rows);
    prob.con[si].g.zmax = Vec(rows);
    for (int k = 0; k < rows; ++k) {
      prob.con[si].g.zmin(k) = -(0.05 + 0.3 * detail::unit_draw(gen));
      prob.con[si].g.zmax(k) = 0.05 + 0.3 * detail::unit_draw(gen);
    }
  }

  const int leaves = prob.tree.num_leaves();
  prob.tcost.resize(static_cast<std::size_t>(leaves));
  prob.tcon.resize(static_cast<std::size_t>(leaves));
  for (int l = 0; l < leaves; ++l) {
    const auto sl = static_cast<std::size_t>(l);
    const Mat root = detail::random_mat(gen, dims.nx, dims.nx);
    prob.tcost[sl].P =
        root * root.transpose() + 0.1 * Mat::Identity(dims.nx, dims.nx);
    prob.tcost[sl].p = detail::random_mat(gen, dims.nx, 1, 1.5);
    prob.tcon[sl].F = detail::random_mat(gen, 1, dims.nx);
    prob.tcon[sl].g.kind = NonsmoothKind::Box;
    prob.tcon[sl].g.zmin =
        Vec::Constant(1, -(0.05 + 0.3 * detail::unit_draw(gen)));
    prob.tcon[sl].g.zmax =
        Vec::Constant(1, 0.05 + 0.3 * detail::unit_draw(gen));
  }

  prob.finalize_layout();
  return prob;
}

}  // namespace scenopt
