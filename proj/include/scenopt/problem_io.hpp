#pragma once

#include <algorithm>
#include <cstdint>
#include <fstream>
#include <sstream>
#include <string>
#include <vector>

#include "json.hpp"

#include "errors.hpp"
#include "problem_data.hpp"
#include "scenario_tree.hpp"

namespace scenopt {

/// Problem files are JSON documents with schema tag "scenopt-problem-v1".
/// The tree is stored as explicit stage/ancestor/probability arrays (a
/// {"markov": {...}} spec is accepted on input); per-node data fields hold
/// either one value shared by all nodes or a list with one entry per
/// non-root node (per leaf for terminal fields), told apart by nesting
/// depth. The serializer emits the shared form exactly when all entries
/// are equal, keys sorted, so serialization is canonical: equal instances
/// produce equal bytes and parse-then-serialize is the identity on its own
/// output.
inline constexpr const char* kProblemSchema = "scenopt-problem-v1";

namespace detail {

using nlohmann::json;

inline json mat_to_json(const Mat& m) {
  json rows = json::array();
  for (Eigen::Index i = 0; i < m.rows(); ++i) {
    json row = json::array();
    for (Eigen::Index j = 0; j < m.cols(); ++j) row.push_back(m(i, j));
    rows.push_back(std::move(row));
  }
  return rows;
}

inline json vec_to_json(const Vec& v) {
  json out = json::array();
  for (Eigen::Index i = 0; i < v.size(); ++i) out.push_back(v(i));
  return out;
}

inline Mat mat_from_json(const json& j, const std::string& where) {
  if (!j.is_array())
    throw ParseError(where + ": expected an array of rows");
  const auto rows = static_cast<Eigen::Index>(j.size());
  if (rows == 0) return Mat(0, 0);
  if (!j[0].is_array())
    throw ParseError(where + ": expected an array of rows");
  const auto cols = static_cast<Eigen::Index>(j[0].size());
  Mat m(rows, cols);
  for (Eigen::Index i = 0; i < rows; ++i) {
    const auto& row = j[static_cast<std::size_t>(i)];
    if (!row.is_array() || static_cast<Eigen::Index>(row.size()) != cols)
      throw ParseError(where + ": ragged matrix rows");
    for (Eigen::Index c = 0; c < cols; ++c) {
      const auto& cell = row[static_cast<std::size_t>(c)];
      if (!cell.is_number())
        throw ParseError(where + ": matrix entries must be numbers");
      m(i, c) = cell.get<double>();
    }
  }
  return m;
}

inline Vec vec_from_json(const json& j, const std::string& where) {
  if (!j.is_array()) throw ParseError(where + ": expected a number array");
  Vec v(static_cast<Eigen::Index>(j.size()));
  for (Eigen::Index i = 0; i < v.size(); ++i) {
    const auto& cell = j[static_cast<std::size_t>(i)];
    if (!cell.is_number())
      throw ParseError(where + ": vector entries must be numbers");
    v(i) = cell.get<double>();
  }
  return v;
}

template <typename T, typename Encode>
json field_to_json(const std::vector<T>& values, std::size_t first,
                   const Encode& encode) {
  bool all_equal = true;
  for (std::size_t i = first + 1; i < values.size() && all_equal; ++i)
    all_equal = encode(values[i]) == encode(values[first]);
  if (all_equal) return encode(values[first]);
  json list = json::array();
  for (std::size_t i = first; i < values.size(); ++i)
    list.push_back(encode(values[i]));
  return list;
}

/// A shared matrix is an array of number rows; a per-node list nests one
/// level deeper. An empty array is the shared empty matrix.
inline bool is_single_matrix(const json& j) {
  if (!j.is_array()) return false;
  if (j.empty()) return true;
  if (!j[0].is_array()) return false;
  return j[0].empty() || j[0][0].is_number();
}

inline bool is_single_vector(const json& j) {
  if (!j.is_array()) return false;
  return j.empty() || j[0].is_number();
}

template <typename T, typename Single, typename Decode>
std::vector<T> field_from_json(const json& j, std::size_t count,
                               const Single& is_single, const Decode& decode,
                               const std::string& where) {
  std::vector<T> out(count);
  if (is_single(j)) {
    const T value = decode(j, where);
    for (auto& slot : out) slot = value;
    return out;
  }
  if (!j.is_array() || j.size() != count)
    throw ParseError(where + ": expected one shared value or a list of " +
                     std::to_string(count));
  for (std::size_t i = 0; i < count; ++i)
    out[i] = decode(j[i], where + "[" + std::to_string(i) + "]");
  return out;
}

inline std::string kind_name(NonsmoothKind kind) {
  switch (kind) {
    case NonsmoothKind::None: return "none";
    case NonsmoothKind::Box: return "box";
    case NonsmoothKind::ScaledL1: return "scaled_l1";
  }
  throw InvalidParams("kind_name: unknown nonsmooth kind");
}

inline NonsmoothKind kind_from_name(const json& j, const std::string& where) {
  if (!j.is_string()) throw ParseError(where + ": kind must be a string");
  const std::string name = j.get<std::string>();
  if (name == "none") return NonsmoothKind::None;
  if (name == "box") return NonsmoothKind::Box;
  if (name == "scaled_l1") return NonsmoothKind::ScaledL1;
  throw ParseError(where + ": unknown kind \"" + name + "\"");
}

inline double number_from_json(const json& j, const std::string& where) {
  if (!j.is_number()) throw ParseError(where + ": expected a number");
  return j.get<double>();
}

inline const json& require_key(const json& j, const char* key,
                               const std::string& where) {
  const auto it = j.find(key);
  if (it == j.end())
    throw ParseError(where + ": missing key \"" + key + "\"");
  return *it;
}

/// Rebuilds the derived tree members from the stored arrays. Integrity
/// (stage ordering, contiguous children, probability flow) is checked by
/// the instance validation that follows parsing.
inline ScenarioTree tree_from_arrays(std::vector<int> stage,
                                     std::vector<int> ancestor,
                                     std::vector<double> probability,
                                     std::vector<int> mode) {
  const auto n = stage.size();
  if (n == 0 || ancestor.size() != n || probability.size() != n)
    throw ParseError(
        "tree: stage, ancestor, and probability must be equally sized and "
        "nonempty");
  if (!mode.empty() && mode.size() != n)
    throw ParseError("tree: mode must be empty or one entry per node");
  ScenarioTree tree;
  tree.node_stage = std::move(stage);
  tree.ancestor = std::move(ancestor);
  tree.probability = std::move(probability);
  tree.mode = std::move(mode);
  tree.children.assign(n, {});
  for (std::size_t i = 1; i < n; ++i) {
    const int a = tree.ancestor[i];
    if (a < 0 || static_cast<std::size_t>(a) >= n)
      throw ParseError("tree: ancestor of node " + std::to_string(i) +
                       " is out of range");
    tree.children[static_cast<std::size_t>(a)].push_back(static_cast<int>(i));
  }
  int num_stages = 0;
  for (const int s : tree.node_stage) {
    if (s < 0) throw ParseError("tree: negative stage");
    num_stages = std::max(num_stages, s);
  }
  tree.num_stages = num_stages;
  tree.stage_offsets.assign(static_cast<std::size_t>(num_stages) + 2, 0);
  for (std::size_t i = 0; i < n; ++i) {
    const int s = tree.node_stage[i];
    if (i > 0 && s < tree.node_stage[i - 1])
      throw ParseError("tree: nodes must be sorted by stage");
    ++tree.stage_offsets[static_cast<std::size_t>(s) + 1];
  }
  for (std::size_t s = 1; s < tree.stage_offsets.size(); ++s)
    tree.stage_offsets[s] += tree.stage_offsets[s - 1];
  return tree;
}

template <typename T>
std::vector<T> int_array_from_json(const json& j, const std::string& where) {
  if (!j.is_array()) throw ParseError(where + ": expected an array");
  std::vector<T> out;
  out.reserve(j.size());
  for (const auto& cell : j) {
    if (!cell.is_number_integer())
      throw ParseError(where + ": entries must be integers");
    out.push_back(cell.get<T>());
  }
  return out;
}

}  // namespace detail

inline nlohmann::json problem_to_json(const ProblemInstance& prob) {
  using detail::field_to_json;
  using detail::mat_to_json;
  using detail::vec_to_json;
  using nlohmann::json;

  json j;
  j["schema"] = kProblemSchema;
  j["dims"] = {{"nx", prob.nx}, {"nu", prob.nu}};
  j["root_state"] = vec_to_json(prob.root_state);

  json tree;
  tree["stage"] = prob.tree.node_stage;
  tree["ancestor"] = prob.tree.ancestor;
  tree["probability"] = prob.tree.probability;
  if (!prob.tree.mode.empty()) tree["mode"] = prob.tree.mode;
  j["tree"] = std::move(tree);

  const auto& dyn = prob.dyn;
  json dynamics;
  dynamics["A"] = field_to_json(dyn, 1, [](const NodeDynamics& d) {
    return mat_to_json(d.A);
  });
  dynamics["B"] = field_to_json(dyn, 1, [](const NodeDynamics& d) {
    return mat_to_json(d.B);
  });
  dynamics["c"] = field_to_json(dyn, 1, [](const NodeDynamics& d) {
    return vec_to_json(d.c);
  });
  j["dynamics"] = std::move(dynamics);

  const auto& cost = prob.cost;
  json costs;
  costs["Q"] = field_to_json(cost, 1, [](const NodeCost& c) {
    return mat_to_json(c.Q);
  });
  costs["R"] = field_to_json(cost, 1, [](const NodeCost& c) {
    return mat_to_json(c.R);
  });
  costs["S"] = field_to_json(cost, 1, [](const NodeCost& c) {
    return mat_to_json(c.S);
  });
  costs["q"] = field_to_json(cost, 1, [](const NodeCost& c) {
    return vec_to_json(c.q);
  });
  costs["r"] = field_to_json(cost, 1, [](const NodeCost& c) {
    return vec_to_json(c.r);
  });
  j["cost"] = std::move(costs);

  const auto& con = prob.con;
  json cons;
  cons["F"] = field_to_json(con, 1, [](const ConstraintBlock& b) {
    return mat_to_json(b.F);
  });
  cons["G"] = field_to_json(con, 1, [](const ConstraintBlock& b) {
    return mat_to_json(b.G);
  });
  cons["kind"] = field_to_json(con, 1, [](const ConstraintBlock& b) {
    return nlohmann::json(detail::kind_name(b.g.kind));
  });
  cons["zmin"] = field_to_json(con, 1, [](const ConstraintBlock& b) {
    return vec_to_json(b.g.zmin);
  });
  cons["zmax"] = field_to_json(con, 1, [](const ConstraintBlock& b) {
    return vec_to_json(b.g.zmax);
  });
  cons["gamma"] = field_to_json(con, 1, [](const ConstraintBlock& b) {
    return nlohmann::json(b.g.gamma);
  });
  j["constraints"] = std::move(cons);

  const auto& tcost = prob.tcost;
  json tcosts;
  tcosts["P"] = field_to_json(tcost, 0, [](const TerminalCost& c) {
    return mat_to_json(c.P);
  });
  tcosts["p"] = field_to_json(tcost, 0, [](const TerminalCost& c) {
    return vec_to_json(c.p);
  });
  j["terminal_cost"] = std::move(tcosts);

  const auto& tcon = prob.tcon;
  json tcons;
  tcons["F"] = field_to_json(tcon, 0, [](const TerminalBlock& b) {
    return mat_to_json(b.F);
  });
  tcons["kind"] = field_to_json(tcon, 0, [](const TerminalBlock& b) {
    return nlohmann::json(detail::kind_name(b.g.kind));
  });
  tcons["zmin"] = field_to_json(tcon, 0, [](const TerminalBlock& b) {
    return vec_to_json(b.g.zmin);
  });
  tcons["zmax"] = field_to_json(tcon, 0, [](const TerminalBlock& b) {
    return vec_to_json(b.g.zmax);
  });
  tcons["gamma"] = field_to_json(tcon, 0, [](const TerminalBlock& b) {
    return nlohmann::json(b.g.gamma);
  });
  j["terminal_constraints"] = std::move(tcons);
  return j;
}

inline ProblemInstance problem_from_json(const nlohmann::json& j) {
  using detail::field_from_json;
  using detail::is_single_matrix;
  using detail::is_single_vector;
  using detail::mat_from_json;
  using detail::require_key;
  using detail::vec_from_json;
  using nlohmann::json;

  if (!j.is_object()) throw ParseError("problem: expected a JSON object");
  const auto& schema = require_key(j, "schema", "problem");
  if (!schema.is_string() || schema.get<std::string>() != kProblemSchema)
    throw ParseError(std::string("problem: schema must be \"") +
                     kProblemSchema + "\"");

  ProblemInstance prob;
  const auto& dims = require_key(j, "dims", "problem");
  prob.nx = static_cast<int>(
      detail::number_from_json(require_key(dims, "nx", "dims"), "dims.nx"));
  prob.nu = static_cast<int>(
      detail::number_from_json(require_key(dims, "nu", "dims"), "dims.nu"));

  const auto& tree = require_key(j, "tree", "problem");
  if (tree.contains("markov")) {
    const auto& markov = tree["markov"];
    const Mat transition = mat_from_json(
        require_key(markov, "transition", "tree.markov"), "tree.markov.transition");
    const Vec initial = vec_from_json(
        require_key(markov, "initial", "tree.markov"), "tree.markov.initial");
    const int horizon = static_cast<int>(detail::number_from_json(
        require_key(markov, "horizon", "tree.markov"), "tree.markov.horizon"));
    try {
      prob.tree = build_from_markov(transition, initial, horizon);
    } catch (const Error& e) {
      throw ParseError(std::string("tree.markov: ") + e.what());
    }
  } else {
    auto stage = detail::int_array_from_json<int>(
        require_key(tree, "stage", "tree"), "tree.stage");
    auto ancestor = detail::int_array_from_json<int>(
        require_key(tree, "ancestor", "tree"), "tree.ancestor");
    Vec probability = vec_from_json(
        require_key(tree, "probability", "tree"), "tree.probability");
    std::vector<int> mode;
    if (tree.contains("mode"))
      mode = detail::int_array_from_json<int>(tree["mode"], "tree.mode");
    prob.tree = detail::tree_from_arrays(
        std::move(stage), std::move(ancestor),
        {probability.data(), probability.data() + probability.size()},
        std::move(mode));
  }

  prob.root_state =
      vec_from_json(require_key(j, "root_state", "problem"), "root_state");

  const auto n = static_cast<std::size_t>(prob.num_nodes());
  const auto leaves = static_cast<std::size_t>(prob.tree.num_leaves());
  const auto decode_mat = [](const json& v, const std::string& where) {
    return mat_from_json(v, where);
  };
  const auto decode_vec = [](const json& v, const std::string& where) {
    return vec_from_json(v, where);
  };
  const auto decode_kind = [](const json& v, const std::string& where) {
    return detail::kind_from_name(v, where);
  };
  const auto decode_num = [](const json& v, const std::string& where) {
    return detail::number_from_json(v, where);
  };
  const auto is_single_kind = [](const json& v) { return v.is_string(); };
  const auto is_single_num = [](const json& v) { return v.is_number(); };

  // Per-node fields are stored for nodes 1..n-1; slot 0 stays default.
  const auto stage_field = [&](const json& parent, const char* key,
                               const auto& single, const auto& decode) {
    return field_from_json<std::decay_t<decltype(decode(json{}, ""))>>(
        require_key(parent, key, "problem"), n - 1, single, decode,
        std::string(key));
  };
  const auto leaf_field = [&](const json& parent, const char* key,
                              const auto& single, const auto& decode) {
    return field_from_json<std::decay_t<decltype(decode(json{}, ""))>>(
        require_key(parent, key, "problem"), leaves, single, decode,
        std::string("terminal ") + key);
  };

  const auto& dynamics = require_key(j, "dynamics", "problem");
  const auto A = stage_field(dynamics, "A", is_single_matrix, decode_mat);
  const auto B = stage_field(dynamics, "B", is_single_matrix, decode_mat);
  const auto c = stage_field(dynamics, "c", is_single_vector, decode_vec);
  prob.dyn.resize(n);
  for (std::size_t i = 1; i < n; ++i)
    prob.dyn[i] = NodeDynamics{A[i - 1], B[i - 1], c[i - 1]};

  const auto& costs = require_key(j, "cost", "problem");
  const auto Q = stage_field(costs, "Q", is_single_matrix, decode_mat);
  const auto R = stage_field(costs, "R", is_single_matrix, decode_mat);
  const auto S = stage_field(costs, "S", is_single_matrix, decode_mat);
  const auto q = stage_field(costs, "q", is_single_vector, decode_vec);
  const auto r = stage_field(costs, "r", is_single_vector, decode_vec);
  prob.cost.resize(n);
  for (std::size_t i = 1; i < n; ++i)
    prob.cost[i] = NodeCost{Q[i - 1], R[i - 1], S[i - 1], q[i - 1], r[i - 1]};

  const auto& cons = require_key(j, "constraints", "problem");
  const auto F = stage_field(cons, "F", is_single_matrix, decode_mat);
  const auto G = stage_field(cons, "G", is_single_matrix, decode_mat);
  const auto kind = stage_field(cons, "kind", is_single_kind, decode_kind);
  const auto zmin = stage_field(cons, "zmin", is_single_vector, decode_vec);
  const auto zmax = stage_field(cons, "zmax", is_single_vector, decode_vec);
  const auto gamma = stage_field(cons, "gamma", is_single_num, decode_num);
  prob.con.resize(n);
  for (std::size_t i = 1; i < n; ++i) {
    prob.con[i].F = F[i - 1];
    prob.con[i].G = G[i - 1];
    prob.con[i].g =
        NonsmoothSpec{kind[i - 1], zmin[i - 1], zmax[i - 1], gamma[i - 1]};
  }

  const auto& tcosts = require_key(j, "terminal_cost", "problem");
  const auto P = leaf_field(tcosts, "P", is_single_matrix, decode_mat);
  const auto p = leaf_field(tcosts, "p", is_single_vector, decode_vec);
  prob.tcost.resize(leaves);
  for (std::size_t l = 0; l < leaves; ++l)
    prob.tcost[l] = TerminalCost{P[l], p[l]};

  const auto& tcons = require_key(j, "terminal_constraints", "problem");
  const auto tF = leaf_field(tcons, "F", is_single_matrix, decode_mat);
  const auto tkind = leaf_field(tcons, "kind", is_single_kind, decode_kind);
  const auto tzmin = leaf_field(tcons, "zmin", is_single_vector, decode_vec);
  const auto tzmax = leaf_field(tcons, "zmax", is_single_vector, decode_vec);
  const auto tgamma = leaf_field(tcons, "gamma", is_single_num, decode_num);
  prob.tcon.resize(leaves);
  for (std::size_t l = 0; l < leaves; ++l) {
    prob.tcon[l].F = tF[l];
    prob.tcon[l].g = NonsmoothSpec{tkind[l], tzmin[l], tzmax[l], tgamma[l]};
  }

  // Zero-row blocks parse as 0 x 0; restore the column counts so the
  // instance validation sees consistent shapes.
  for (std::size_t i = 1; i < n; ++i) {
    if (prob.con[i].F.rows() == 0) prob.con[i].F.resize(0, prob.nx);
    if (prob.con[i].G.rows() == 0) prob.con[i].G.resize(0, prob.nu);
  }
  for (std::size_t l = 0; l < leaves; ++l)
    if (prob.tcon[l].F.rows() == 0) prob.tcon[l].F.resize(0, prob.nx);

  prob.finalize_layout();
  const auto violations = validate(prob);
  if (!violations.empty()) {
    std::string joined = "instance validation failed";
    for (const auto& v : violations) joined += "\n" + v;
    throw ParseError(joined);
  }
  return prob;
}

inline std::string serialize_problem(const ProblemInstance& prob) {
  return problem_to_json(prob).dump(2) + "\n";
}

inline ProblemInstance parse_problem(const std::string& text) {
  nlohmann::json j;
  try {
    j = nlohmann::json::parse(text);
  } catch (const nlohmann::json::exception& e) {
    throw ParseError(std::string("problem: not valid JSON: ") + e.what());
  }
  return problem_from_json(j);
}

inline void save_problem(const ProblemInstance& prob,
                         const std::string& path) {
  std::ofstream out(path, std::ios::binary);
  if (!out) throw ParseError("save_problem: cannot open " + path);
  out << serialize_problem(prob);
  if (!out) throw ParseError("save_problem: write failed for " + path);
}

inline ProblemInstance load_problem(const std::string& path) {
  std::ifstream in(path, std::ios::binary);
  if (!in) throw ParseError("load_problem: cannot open " + path);
  std::ostringstream buf;
  buf << in.rdbuf();
  return parse_problem(buf.str());
}

/// Violation list of a problem document; empty means the file parses and
/// the instance passes validation.
inline std::vector<std::string> validate_problem_text(const std::string& text) {
  try {
    parse_problem(text);
  } catch (const ParseError& e) {
    std::vector<std::string> out;
    std::istringstream lines(e.what());
    for (std::string line; std::getline(lines, line);)
      if (!line.empty()) out.push_back(line);
    return out;
  }
  return {};
}

namespace detail {

inline std::uint64_t fnv1a(const std::string& bytes) {
  std::uint64_t h = 1469598103934665603ULL;
  for (const unsigned char b : bytes) {
    h ^= b;
    h *= 1099511628211ULL;
  }
  return h;
}

}  // namespace detail

/// Hash of the canonical serialization; equal instances hash equal.
inline std::uint64_t content_hash(const ProblemInstance& prob) {
  return detail::fnv1a(serialize_problem(prob));
}

/// Hash of the factorization-determining content: everything the factor
/// cache is built from. The root state and the nonsmooth specs are
/// excluded, so instances differing only in those share a cache key.
inline std::uint64_t factor_hash(const ProblemInstance& prob) {
  nlohmann::json j = problem_to_json(prob);
  j.erase("root_state");
  j["tree"].erase("mode");
  for (const char* block : {"constraints", "terminal_constraints"}) {
    j[block].erase("kind");
    j[block].erase("zmin");
    j[block].erase("zmax");
    j[block].erase("gamma");
  }
  return detail::fnv1a(j.dump());
}

}  // namespace scenopt
