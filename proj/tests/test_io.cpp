#include <catch2/catch_amalgamated.hpp>

#include <scenopt/generators.hpp>
#include <scenopt/problem_io.hpp>
#include <scenopt/solvers.hpp>

using scenopt::Mat;
using scenopt::Vec;

namespace {

const std::string kChainFile = R"json({
  "schema": "scenopt-problem-v1",
  "dims": {"nx": 2, "nu": 1},
  "root_state": [0.25, -0.5],
  "tree": {"stage": [0, 1, 2], "ancestor": [-1, 0, 1],
           "probability": [1.0, 1.0, 1.0]},
  "dynamics": {"A": [[0.9, 0.1], [0.0, 0.8]], "B": [[0.5], [1.0]],
               "c": [0.0, 0.0]},
  "cost": {"Q": [[1.0, 0.0], [0.0, 1.0]], "R": [[1.0]], "S": [[0.0, 0.0]],
           "q": [0.0, 0.0], "r": [0.0]},
  "constraints": {"F": [[1.0, 0.0]], "G": [[1.0]], "kind": "box",
                  "zmin": [[-1.0], [-2.0]], "zmax": [[1.0], [2.0]],
                  "gamma": 0.0},
  "terminal_cost": {"P": [[1.0, 0.0], [0.0, 1.0]], "p": [0.0, 0.0]},
  "terminal_constraints": {"F": [[0.0, 1.0]], "kind": "box",
                           "zmin": [-1.0], "zmax": [1.0], "gamma": 0.0}
})json";

template <typename A, typename B>
double max_abs_diff(const A& a, const B& b) {
  return (a - b).cwiseAbs().maxCoeff();
}

}  // namespace

TEST_CASE("serialization is canonical and round-trips byte-identically") {
  for (const auto& prob :
       {scenopt::gen_random_instance(7), scenopt::gen_spring_mass(3, [] {
          scenopt::SpringMassParams par;
          par.horizon = 3;
          return par;
        }())}) {
    const std::string first = scenopt::serialize_problem(prob);
    const auto reparsed = scenopt::parse_problem(first);
    CHECK(scenopt::serialize_problem(reparsed) == first);
  }
}

TEST_CASE("a parsed copy solves identically to the original") {
  const auto prob = scenopt::gen_random_instance(11);
  const auto copy = scenopt::parse_problem(scenopt::serialize_problem(prob));

  scenopt::SolverConfig cfg;
  cfg.eps = 1e-6;
  const auto a = scenopt::solve(prob, cfg, scenopt::SolverKind::Nama);
  const auto b = scenopt::solve(copy, cfg, scenopt::SolverKind::Nama);
  REQUIRE(a.status == scenopt::SolverStatus::Converged);
  REQUIRE(b.status == scenopt::SolverStatus::Converged);
  CHECK(max_abs_diff(a.x.flatten(), b.x.flatten()) <= 1e-10);
}

TEST_CASE("shared fields broadcast to every node") {
  const auto prob = scenopt::parse_problem(kChainFile);
  REQUIRE(prob.num_nodes() == 3);
  REQUIRE(prob.tree.num_leaves() == 1);
  CHECK(prob.root_state(0) == 0.25);
  CHECK(prob.root_state(1) == -0.5);

  // A is shared; the box bounds were given per node.
  CHECK(max_abs_diff(prob.dyn[1].A, prob.dyn[2].A) == 0.0);
  CHECK(prob.dyn[1].A(0, 0) == 0.9);
  CHECK(prob.con[1].g.zmin(0) == -1.0);
  CHECK(prob.con[2].g.zmin(0) == -2.0);
  CHECK(prob.con[2].g.zmax(0) == 2.0);
  CHECK(prob.tcon[0].g.kind == scenopt::NonsmoothKind::Box);
  CHECK(scenopt::validate(prob).empty());
}

TEST_CASE("a markov tree spec parses to the built tree") {
  scenopt::SpringMassParams par;
  par.horizon = 2;
  const auto prob = scenopt::gen_spring_mass(2, par);
  nlohmann::json j = scenopt::problem_to_json(prob);
  j["tree"] = {{"markov",
                {{"transition", {{0.1, 0.9}, {0.9, 0.1}}},
                 {"initial", {0.5, 0.5}},
                 {"horizon", 2}}}};
  const auto parsed = scenopt::problem_from_json(j);
  CHECK(scenopt::serialize_problem(parsed) ==
        scenopt::serialize_problem(prob));
}

TEST_CASE("malformed documents are rejected with messages") {
  CHECK_THROWS_AS(scenopt::parse_problem("not json at all"),
                  scenopt::ParseError);
  CHECK_THROWS_AS(scenopt::parse_problem("{}"), scenopt::ParseError);

  nlohmann::json j = nlohmann::json::parse(kChainFile);
  j["schema"] = "something-else";
  CHECK_THROWS_AS(scenopt::problem_from_json(j), scenopt::ParseError);

  j = nlohmann::json::parse(kChainFile);
  j.erase("dynamics");
  CHECK_THROWS_AS(scenopt::problem_from_json(j), scenopt::ParseError);

  // Ragged matrix rows.
  j = nlohmann::json::parse(kChainFile);
  j["dynamics"]["A"] = {{1.0, 0.0}, {0.0}};
  CHECK_THROWS_AS(scenopt::problem_from_json(j), scenopt::ParseError);

  // Well-formed JSON describing an invalid instance: B has too few rows.
  j = nlohmann::json::parse(kChainFile);
  j["dynamics"]["B"] = {{0.5}};
  try {
    scenopt::problem_from_json(j);
    FAIL("expected ParseError");
  } catch (const scenopt::ParseError& e) {
    CHECK(std::string(e.what()).find("node 1") != std::string::npos);
  }
}

TEST_CASE("document validation lists violations without throwing") {
  CHECK(scenopt::validate_problem_text(kChainFile).empty());
  const auto bad = scenopt::validate_problem_text("{\"schema\": 3}");
  REQUIRE(!bad.empty());
  const auto worse = scenopt::validate_problem_text("[1, 2");
  REQUIRE(!worse.empty());
}

TEST_CASE("content and factor hashes separate what the cache depends on") {
  const auto base = scenopt::gen_random_instance(5);

  auto moved = base;
  moved.root_state = Vec::Constant(base.nx, 0.01);
  CHECK(scenopt::content_hash(moved) != scenopt::content_hash(base));
  CHECK(scenopt::factor_hash(moved) == scenopt::factor_hash(base));

  auto loosened = base;
  loosened.con[1].g.zmax(0) += 1.0;
  CHECK(scenopt::content_hash(loosened) != scenopt::content_hash(base));
  CHECK(scenopt::factor_hash(loosened) == scenopt::factor_hash(base));

  auto redynamics = base;
  redynamics.dyn[1].A(0, 0) += 0.125;
  CHECK(scenopt::factor_hash(redynamics) != scenopt::factor_hash(base));

  CHECK(scenopt::content_hash(base) ==
        scenopt::content_hash(scenopt::gen_random_instance(5)));
}

TEST_CASE("problem files survive the filesystem round trip") {
  const auto prob = scenopt::gen_random_instance(13);
  const std::string path = "io_roundtrip_tmp.json";
  scenopt::save_problem(prob, path);
  const auto loaded = scenopt::load_problem(path);
  CHECK(scenopt::serialize_problem(loaded) ==
        scenopt::serialize_problem(prob));
  std::remove(path.c_str());
  CHECK_THROWS_AS(scenopt::load_problem("definitely_missing_dir/x.json"),
                  scenopt::ParseError);
}
