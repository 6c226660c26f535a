#include <catch2/catch_amalgamated.hpp>

#include <vector>

#include "scenopt/lbfgs.hpp"
#include "support.hpp"

using scenopt::LbfgsBuffer;
using scenopt::Mat;
using scenopt::Vec;

namespace {

// Dense inverse-Hessian recursion the two-loop implementation must agree
// with: start from gamma0 * I and apply the BFGS inverse update for each
// pair from oldest to newest.
Mat dense_inverse(const std::vector<std::pair<Vec, Vec>>& pairs, int dim,
                  double gamma0) {
  Mat inv = gamma0 * Mat::Identity(dim, dim);
  const Mat eye = Mat::Identity(dim, dim);
  for (const auto& [step, change] : pairs) {
    const double rho = 1.0 / step.dot(change);
    const Mat left = eye - rho * step * change.transpose();
    inv = left * inv * left.transpose() + rho * step * step.transpose();
  }
  return inv;
}

}  // namespace

TEST_CASE("empty buffer returns the negative gradient") {
  testsup::Rng rng(81);
  LbfgsBuffer buf(5, 1e-12);
  CHECK(buf.size() == 0);
  CHECK(buf.gamma0() == 1.0);
  const Vec grad = rng.vector(7);
  CHECK((buf.apply_direction(grad) + grad).cwiseAbs().maxCoeff() < 1e-15);
}

TEST_CASE("a single pair with equal step and change acts as the identity") {
  testsup::Rng rng(82);
  LbfgsBuffer buf(5, 1e-12);
  const Vec step = rng.vector(6);
  REQUIRE(buf.push(step, step, 1.0));
  CHECK(buf.gamma0() == Catch::Approx(1.0).margin(1e-15));
  for (int trial = 0; trial < 5; ++trial) {
    const Vec grad = rng.vector(6);
    CHECK((buf.apply_direction(grad) + grad).cwiseAbs().maxCoeff() <
          1e-13 * (1.0 + grad.cwiseAbs().maxCoeff()));
  }
}

TEST_CASE("two-loop recursion matches the dense update") {
  testsup::Rng rng(83);
  for (int trial = 0; trial < 10; ++trial) {
    const int dim = rng.integer(4, 12);
    const int memory = rng.integer(2, 6);
    LbfgsBuffer buf(memory, 1e-12);

    // Pairs with guaranteed positive curvature: change = M step for a
    // random positive definite M.
    const Mat root = rng.matrix(dim, dim);
    const Mat spd = root * root.transpose() + 0.5 * Mat::Identity(dim, dim);
    std::vector<std::pair<Vec, Vec>> accepted;
    const int offered = memory + rng.integer(0, 3);
    for (int k = 0; k < offered; ++k) {
      const Vec step = rng.vector(dim);
      const Vec change = spd * step;
      REQUIRE(buf.push(step, change, 1.0));
      accepted.emplace_back(step, change);
      if (static_cast<int>(accepted.size()) > memory)
        accepted.erase(accepted.begin());
    }
    CHECK(buf.size() == static_cast<int>(accepted.size()));

    const auto& newest = accepted.back();
    const double gamma_ref =
        newest.first.dot(newest.second) / newest.second.squaredNorm();
    CHECK(buf.gamma0() == Catch::Approx(gamma_ref).margin(1e-14));

    const Mat inv = dense_inverse(accepted, dim, gamma_ref);
    for (int probe = 0; probe < 4; ++probe) {
      const Vec grad = rng.vector(dim);
      const Vec expected = -(inv * grad);
      CHECK((buf.apply_direction(grad) - expected).cwiseAbs().maxCoeff() <
            1e-11 * (1.0 + expected.cwiseAbs().maxCoeff()));
    }
  }
}

TEST_CASE("curvature gate is strict") {
  LbfgsBuffer buf(4, 1e-12);
  Vec step = Vec::Zero(5);
  step(0) = 1.0;

  SECTION("borderline equality is rejected") {
    const double scale_ref = 3.0;
    Vec change = Vec::Zero(5);
    change(0) = 1e-12 * scale_ref;  // <step, change> == eps ||step||^2 scale
    CHECK_FALSE(buf.push(step, change, scale_ref));
    CHECK(buf.size() == 0);
    CHECK(buf.gamma0() == 1.0);
  }

  SECTION("slightly above the gate is accepted") {
    Vec change = Vec::Zero(5);
    change(0) = 2e-12;
    CHECK(buf.push(step, change, 1.0));
    CHECK(buf.size() == 1);
  }

  SECTION("zero step is rejected") {
    CHECK_FALSE(buf.push(Vec::Zero(5), Vec::Ones(5), 1.0));
  }

  SECTION("negative curvature is rejected") {
    CHECK_FALSE(buf.push(step, -step, 1.0));
  }

  SECTION("rejection leaves the stored pairs untouched") {
    testsup::Rng rng(84);
    const Vec good = rng.vector(5);
    REQUIRE(buf.push(good, good, 1.0));
    const Vec before = buf.apply_direction(Vec::Ones(5));
    CHECK_FALSE(buf.push(step, -step, 1.0));
    CHECK(buf.size() == 1);
    CHECK((buf.apply_direction(Vec::Ones(5)) - before).cwiseAbs().maxCoeff() ==
          0.0);
  }
}

TEST_CASE("oldest pair is evicted at capacity") {
  testsup::Rng rng(85);
  const int dim = 6;
  LbfgsBuffer buf(3, 1e-12);
  const Mat root = rng.matrix(dim, dim);
  const Mat spd = root * root.transpose() + 0.5 * Mat::Identity(dim, dim);

  std::vector<std::pair<Vec, Vec>> all;
  for (int k = 0; k < 5; ++k) {
    const Vec step = rng.vector(dim);
    all.emplace_back(step, Vec(spd * step));
    REQUIRE(buf.push(all.back().first, all.back().second, 1.0));
  }
  CHECK(buf.size() == 3);

  // The surviving estimate is the one built from the last three pairs only.
  const std::vector<std::pair<Vec, Vec>> tail(all.end() - 3, all.end());
  const Mat inv = dense_inverse(tail, dim, buf.gamma0());
  const Vec grad = rng.vector(dim);
  const Vec expected = -(inv * grad);
  CHECK((buf.apply_direction(grad) - expected).cwiseAbs().maxCoeff() <
        1e-11 * (1.0 + expected.cwiseAbs().maxCoeff()));
}

TEST_CASE("directions are descent directions") {
  testsup::Rng rng(86);
  for (int trial = 0; trial < 10; ++trial) {
    const int dim = rng.integer(3, 10);
    LbfgsBuffer buf(4, 1e-12);
    const Mat root = rng.matrix(dim, dim);
    const Mat spd = root * root.transpose() + 0.5 * Mat::Identity(dim, dim);
    for (int k = 0; k < 6; ++k) {
      const Vec step = rng.vector(dim);
      buf.push(step, Vec(spd * step), 1.0);
    }
    // All stored curvatures are positive, so the estimate is positive
    // definite and -B g opposes g.
    for (int probe = 0; probe < 5; ++probe) {
      Vec grad = rng.vector(dim);
      if (grad.cwiseAbs().maxCoeff() < 1e-12) continue;
      CHECK(buf.apply_direction(grad).dot(grad) < 0.0);
    }
  }
}

TEST_CASE("clear resets scaling and contents") {
  testsup::Rng rng(87);
  LbfgsBuffer buf(4, 1e-12);
  for (int k = 0; k < 4; ++k) {
    const Vec step = rng.vector(5);
    buf.push(step, Vec(2.5 * step), 1.0);
  }
  REQUIRE(buf.size() > 0);
  CHECK(buf.gamma0() == Catch::Approx(0.4).margin(1e-14));

  buf.clear();
  CHECK(buf.size() == 0);
  CHECK(buf.gamma0() == 1.0);
  const Vec grad = rng.vector(5);
  CHECK((buf.apply_direction(grad) + grad).cwiseAbs().maxCoeff() < 1e-15);
}

TEST_CASE("constructor validates its parameters") {
  CHECK_THROWS_AS(LbfgsBuffer(0, 1e-12), scenopt::InvalidParams);
  CHECK_THROWS_AS(LbfgsBuffer(5, 0.0), scenopt::InvalidParams);
  CHECK_THROWS_AS(LbfgsBuffer(5, -1.0), scenopt::InvalidParams);
}
