// Builds a small problem by hand and solves it: a double integrator whose
// drift jumps between two Markov modes, with a box on position and input.
// Demonstrates the data model, the layout call, and the solver report.

#include <cstdio>

#include <scenopt/problem_io.hpp>
#include <scenopt/solvers.hpp>

int main() {
  using scenopt::Mat;
  using scenopt::Vec;

  // Two equally likely modes that tend to stay where they are.
  Mat transition(2, 2);
  transition << 0.8, 0.2, 0.2, 0.8;
  const Vec initial = Vec::Constant(2, 0.5);

  scenopt::ProblemInstance prob;
  prob.tree = scenopt::build_from_markov(transition, initial, 3);
  prob.nx = 2;
  prob.nu = 1;
  prob.root_state = Vec(2);
  prob.root_state << 1.0, 0.0;

  const int n = prob.num_nodes();
  prob.dyn.resize(static_cast<std::size_t>(n));
  prob.cost.resize(static_cast<std::size_t>(n));
  prob.con.resize(static_cast<std::size_t>(n));
  for (int i = 1; i < n; ++i) {
    const auto si = static_cast<std::size_t>(i);
    auto& d = prob.dyn[si];
    d.A = Mat(2, 2);
    d.A << 1.0, 0.1, 0.0, 1.0;
    d.B = Mat(2, 1);
    d.B << 0.005, 0.1;
    // Mode 0 drifts the velocity up, mode 1 down.
    d.c = Vec(2);
    d.c << 0.0, (prob.tree.mode[si] == 0 ? 0.02 : -0.02);

    auto& c = prob.cost[si];
    c.Q = Mat(2, 2);
    c.Q << 1.0, 0.0, 0.0, 0.1;
    c.R = Mat::Constant(1, 1, 0.5);
    c.S = Mat::Zero(1, 2);
    c.q = Vec::Zero(2);
    c.r = Vec::Zero(1);

    // Rows constrain the ancestor pair: position in [-1, 1], input in
    // [-0.4, 0.4].
    auto& b = prob.con[si];
    b.F = Mat(2, 2);
    b.F << 1.0, 0.0, 0.0, 0.0;
    b.G = Mat(2, 1);
    b.G << 0.0, 1.0;
    b.g.kind = scenopt::NonsmoothKind::Box;
    b.g.zmin = Vec(2);
    b.g.zmin << -1.0, -0.4;
    b.g.zmax = Vec(2);
    b.g.zmax << 1.0, 0.4;
  }

  const int leaves = prob.tree.num_leaves();
  prob.tcost.resize(static_cast<std::size_t>(leaves));
  prob.tcon.resize(static_cast<std::size_t>(leaves));
  for (int l = 0; l < leaves; ++l) {
    const auto sl = static_cast<std::size_t>(l);
    prob.tcost[sl].P = 10.0 * Mat::Identity(2, 2);
    prob.tcost[sl].p = Vec::Zero(2);
    prob.tcon[sl].F = Mat(1, 2);
    prob.tcon[sl].F << 1.0, 0.0;
    prob.tcon[sl].g.kind = scenopt::NonsmoothKind::Box;
    prob.tcon[sl].g.zmin = Vec::Constant(1, -1.0);
    prob.tcon[sl].g.zmax = Vec::Constant(1, 1.0);
  }

  prob.finalize_layout();
  for (const auto& violation : scenopt::validate(prob))
    std::fprintf(stderr, "invalid problem: %s\n", violation.c_str());

  scenopt::SolverConfig cfg;
  cfg.eps = 1e-5;
  const auto rep = scenopt::solve(prob, cfg, scenopt::SolverKind::Nama);

  std::printf("%d nodes over %d stages, dual dimension %d\n", n,
              prob.tree.num_stages, prob.dual_dim);
  std::printf("solved in %d iterations, residual %.3e, verified %s\n",
              rep.iterations, rep.residual_inf,
              rep.verified ? "true" : "false");
  std::printf("root input %.6f, position at node 1 after one step %.6f\n",
              rep.x.u(0, 0), rep.x.x(0, 1));
  return rep.verified ? 0 : 1;
}
