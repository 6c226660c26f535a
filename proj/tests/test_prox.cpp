#include <catch2/catch_amalgamated.hpp>
#include <cmath>
#include <limits>

#include "scenopt/prox.hpp"
#include "support.hpp"

using scenopt::GBlock;
using scenopt::NonsmoothKind;
using scenopt::SeparableNonsmooth;
using scenopt::Vec;

namespace {

// One block of each kind: box on [-1, 2]^2, weighted l1 on two rows, and an
// unconstrained pair.
SeparableNonsmooth mixed_g() {
  SeparableNonsmooth g;
  g.dim = 6;
  GBlock box;
  box.offset = 0;
  box.size = 2;
  box.weight = 0.25;
  box.kind = NonsmoothKind::Box;
  box.zmin = -Vec::Ones(2);
  box.zmax = 2.0 * Vec::Ones(2);
  GBlock l1;
  l1.offset = 2;
  l1.size = 2;
  l1.weight = 0.5;
  l1.kind = NonsmoothKind::ScaledL1;
  l1.gamma = 0.8;
  GBlock none;
  none.offset = 4;
  none.size = 2;
  none.weight = 0.25;
  none.kind = NonsmoothKind::None;
  g.blocks = {box, l1, none};
  return g;
}

}  // namespace

TEST_CASE("prox: box clamps independently of the prox scale") {
  const auto g = mixed_g();
  Vec v(6);
  v << -3.0, 1.5, 0.0, 0.0, 7.0, -7.0;
  for (double scale : {0.3, 1.0, 10.0}) {
    const Vec out = scenopt::prox_g(g, v, scale);
    CHECK(out(0) == -1.0);
    CHECK(out(1) == 1.5);
    CHECK(out(4) == 7.0);
    CHECK(out(5) == -7.0);
  }
}

TEST_CASE("prox: l1 soft threshold at scale * weight * gamma") {
  const auto g = mixed_g();
  const double scale = 2.0;
  const double t = scale * 0.5 * 0.8;
  Vec v = Vec::Zero(6);
  v(2) = 1.3;
  v(3) = -t / 2.0;
  const Vec out = scenopt::prox_g(g, v, scale);
  CHECK(out(2) == Catch::Approx(1.3 - t));
  CHECK(out(3) == 0.0);
}

TEST_CASE("prox: optimality condition (v - z) / scale lies in the subdifferential") {
  const auto g = mixed_g();
  testsup::Rng rng(21);
  for (int trial = 0; trial < 40; ++trial) {
    const Vec v = rng.vector(6, 4.0);
    const double scale = rng.uniform(0.1, 3.0);
    const Vec z = scenopt::prox_g(g, v, scale);
    const Vec sub = (v - z) / scale;
    // None blocks have no constraint, so their subgradient is exactly zero.
    REQUIRE(scenopt::dist_subdiff_inf(g, sub, z) < 1e-12);
  }
}

TEST_CASE("conjugate values per kind") {
  const auto g = mixed_g();
  constexpr double kInf = std::numeric_limits<double>::infinity();

  Vec w = Vec::Zero(6);
  w(0) = -2.0;  // support of [-1, 2] at -2 is (-1) * (-2) = 2
  w(1) = 3.0;   // 3 * 2 = 6
  CHECK(scenopt::conj_value_g(g, w) == Catch::Approx(8.0));

  w(2) = 0.5 * 0.8;  // exactly on the l1 ball boundary
  CHECK(scenopt::conj_value_g(g, w) == Catch::Approx(8.0));
  w(2) = 0.5;  // outside the ball of radius 0.4
  CHECK(scenopt::conj_value_g(g, w) == kInf);
  w(2) = 0.0;

  w(4) = 1e-12;  // within the assembly slack of zero
  CHECK(std::isfinite(scenopt::conj_value_g(g, w)));
  w(4) = 0.1;
  CHECK(scenopt::conj_value_g(g, w) == kInf);
}

TEST_CASE("conjugate Fenchel inequality holds with equality at prox pairs") {
  const auto g = mixed_g();
  testsup::Rng rng(22);
  const auto g_value = [&](const Vec& z) {
    double total = 0.0;
    const auto& l1 = g.blocks[1];
    total += l1.weight * l1.gamma * z.segment(l1.offset, l1.size).cwiseAbs().sum();
    return total;  // box and none contribute zero at feasible z
  };
  for (int trial = 0; trial < 40; ++trial) {
    const Vec v = rng.vector(6, 3.0);
    const Vec z = scenopt::prox_g(g, v, 1.0);
    const Vec w = v - z;  // in the subdifferential of g at z
    const double conj = scenopt::conj_value_g(g, w);
    REQUIRE(std::isfinite(conj));
    // Fenchel equality <w, z> = g(z) + g*(w) characterizes w in dg(z).
    REQUIRE(w.dot(z) == Catch::Approx(g_value(z) + conj).margin(1e-12));
  }
}

TEST_CASE("prox of the conjugate via the Moreau identity") {
  const auto g = mixed_g();
  testsup::Rng rng(23);
  for (double lambda : {0.2, 1.0, 4.0}) {
    const Vec v = rng.vector(6, 3.0);
    const Vec w = scenopt::prox_g_conj(g, v, lambda);
    // Optimality of the conjugate prox: (v - w) / lambda is a point where w
    // is a subgradient of g, i.e. w in dg((v - w) / lambda).
    const Vec z = (v - w) / lambda;
    REQUIRE(scenopt::dist_subdiff_inf(g, w, z) < 1e-12);
  }
}

TEST_CASE("subdifferential distance: box activity and l1 zero handling") {
  const auto g = mixed_g();
  Vec z = Vec::Zero(6);
  Vec y = Vec::Zero(6);

  // Interior of the box: only zero is allowed.
  z(0) = 0.5;
  y(0) = 0.3;
  CHECK(scenopt::dist_subdiff_inf(g, y, z) == Catch::Approx(0.3));

  // Active upper bound admits any nonnegative multiplier.
  z(0) = 2.0;
  CHECK(scenopt::dist_subdiff_inf(g, y, z) == 0.0);
  y(0) = -0.2;
  CHECK(scenopt::dist_subdiff_inf(g, y, z) == Catch::Approx(0.2));
  y(0) = 0.0;
  z(0) = 0.0;

  // l1 at a strictly positive coordinate pins y to weight * gamma = 0.4.
  z(2) = 1.0;
  y(2) = 0.4;
  CHECK(scenopt::dist_subdiff_inf(g, y, z) == 0.0);
  y(2) = 0.1;
  CHECK(scenopt::dist_subdiff_inf(g, y, z) == Catch::Approx(0.3));
  z(2) = 0.0;
  CHECK(scenopt::dist_subdiff_inf(g, y, z) == 0.0);
  y(2) = -0.6;
  CHECK(scenopt::dist_subdiff_inf(g, y, z) == Catch::Approx(0.2));
}

TEST_CASE("make_nonsmooth mirrors the instance layout") {
  testsup::Rng rng(24);
  testsup::InstanceOptions opt;
  opt.with_l1 = true;
  opt.with_none = true;
  const auto prob = testsup::random_instance(rng, 3, 20, 2, 2, opt);
  const auto g = scenopt::make_nonsmooth(prob);

  REQUIRE(g.dim == prob.dual_dim);
  const std::size_t stage_blocks = static_cast<std::size_t>(prob.num_nodes() - 1);
  REQUIRE(g.blocks.size() ==
          stage_blocks + static_cast<std::size_t>(prob.tree.num_leaves()));
  for (int i = 1; i < prob.num_nodes(); ++i) {
    const auto& b = g.blocks[static_cast<std::size_t>(i - 1)];
    CHECK(b.offset == prob.dual_offset[static_cast<std::size_t>(i)]);
    CHECK(b.size == prob.stage_rows(i));
    CHECK(b.weight == prob.tree.probability[static_cast<std::size_t>(i)]);
    CHECK(b.kind == prob.con[static_cast<std::size_t>(i)].g.kind);
  }

  auto corrupted = prob;
  corrupted.tree.probability[1] = 0.0;
  CHECK_THROWS_AS(scenopt::make_nonsmooth(corrupted), scenopt::ZeroProbability);
}

TEST_CASE("prox argument validation") {
  const auto g = mixed_g();
  CHECK_THROWS_AS(scenopt::prox_g(g, Vec::Zero(5), 1.0),
                  scenopt::DimensionMismatch);
  CHECK_THROWS_AS(scenopt::prox_g(g, Vec::Zero(6), 0.0), scenopt::InvalidParams);
  CHECK_THROWS_AS(scenopt::prox_g_conj(g, Vec::Zero(6), -1.0),
                  scenopt::InvalidParams);
}
