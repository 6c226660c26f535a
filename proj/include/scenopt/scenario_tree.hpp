#pragma once

#include <Eigen/Dense>
#include <algorithm>
#include <cmath>
#include <string>
#include <vector>

#include "scenopt/errors.hpp"

namespace scenopt {

/// Scenario tree over stages 0..num_stages.
///
/// Node ids are dense and stage-ordered: the nodes of stage t occupy the
/// contiguous id range [stage_offsets[t], stage_offsets[t+1]), and every
/// node's id is strictly larger than its ancestor's. The root is node 0.
/// Probabilities are unconditional: probability[0] == 1, the probabilities
/// of each stage sum to one, and the children of a node sum to the node's
/// own probability.
struct ScenarioTree {
  int num_stages = 0;
  std::vector<int> node_stage;
  std::vector<int> ancestor;  ///< -1 at the root
  std::vector<std::vector<int>> children;
  std::vector<double> probability;
  std::vector<int> stage_offsets;  ///< size num_stages + 2
  /// Markov mode of each node when built from a chain (-1 at the root);
  /// empty for trees assembled by other means.
  std::vector<int> mode;

  int num_nodes() const { return static_cast<int>(node_stage.size()); }
  int num_leaves() const {
    return num_nodes() - stage_offsets[static_cast<std::size_t>(num_stages)];
  }
  bool is_leaf(int i) const {
    return node_stage[static_cast<std::size_t>(i)] == num_stages;
  }
  /// Leaves are exactly the stage-N nodes, so non-leaf ids are [0, first_leaf).
  int first_leaf() const {
    return stage_offsets[static_cast<std::size_t>(num_stages)];
  }
};

/// Half-open id range of the nodes whose stage lies in [t1, t2].
struct NodeRange {
  int first = 0;
  int past = 0;
  int size() const { return past - first; }
};

inline NodeRange nodes_at(const ScenarioTree& tree, int t1, int t2) {
  if (t1 < 0 || t2 > tree.num_stages || t1 > t2)
    throw StageOutOfRange("nodes_at: stage range [" + std::to_string(t1) +
                          ", " + std::to_string(t2) + "] outside [0, " +
                          std::to_string(tree.num_stages) + "]");
  return NodeRange{tree.stage_offsets[static_cast<std::size_t>(t1)],
                   tree.stage_offsets[static_cast<std::size_t>(t2) + 1]};
}

inline NodeRange nodes_at(const ScenarioTree& tree, int t) {
  return nodes_at(tree, t, t);
}

/// Builds the tree of all positive-probability mode paths of a Markov chain.
///
/// Stage-(t+1) nodes realize the chain state w_t: the root branches on the
/// initial distribution and every later node on its mode's transition row.
/// Zero-probability branches are pruned, so kept nodes have probability > 0.
/// Throws NonStochasticMatrix when a row of `transition` or `initial` has a
/// negative entry or fails to sum to one within 1e-9.
inline ScenarioTree build_from_markov(const Eigen::MatrixXd& transition,
                                      const Eigen::VectorXd& initial,
                                      int horizon) {
  const int num_modes = static_cast<int>(initial.size());
  if (horizon < 1) throw InvalidParams("build_from_markov: horizon must be >= 1");
  if (transition.rows() != num_modes || transition.cols() != num_modes)
    throw DimensionMismatch("build_from_markov: transition must be square and "
                            "match the initial distribution size");
  constexpr double kStochTol = 1e-9;
  if (initial.minCoeff() < 0.0 ||
      std::abs(initial.sum() - 1.0) > kStochTol)
    throw NonStochasticMatrix("build_from_markov: initial distribution");
  for (int w = 0; w < num_modes; ++w) {
    if (transition.row(w).minCoeff() < 0.0 ||
        std::abs(transition.row(w).sum() - 1.0) > kStochTol)
      throw NonStochasticMatrix("build_from_markov: transition row " +
                                std::to_string(w));
  }

  ScenarioTree tree;
  tree.num_stages = horizon;
  tree.node_stage = {0};
  tree.ancestor = {-1};
  tree.children = {{}};
  tree.probability = {1.0};
  tree.mode = {-1};
  tree.stage_offsets = {0, 1};

  int stage_begin = 0;
  int stage_end = 1;
  for (int t = 0; t < horizon; ++t) {
    for (int i = stage_begin; i < stage_end; ++i) {
      for (int w = 0; w < num_modes; ++w) {
        const double branch =
            (t == 0) ? initial(w)
                     : transition(tree.mode[static_cast<std::size_t>(i)], w);
        if (branch <= 0.0) continue;
        const int id = tree.num_nodes();
        tree.node_stage.push_back(t + 1);
        tree.ancestor.push_back(i);
        tree.children.emplace_back();
        tree.probability.push_back(tree.probability[static_cast<std::size_t>(i)] * branch);
        tree.mode.push_back(w);
        tree.children[static_cast<std::size_t>(i)].push_back(id);
      }
    }
    stage_begin = stage_end;
    stage_end = tree.num_nodes();
    tree.stage_offsets.push_back(stage_end);
  }
  return tree;
}

/// Checks every documented tree invariant and returns one message per
/// violation, each naming the offending node (or stage) and the rule.
/// An empty result means the tree is well formed.
inline std::vector<std::string> validate(const ScenarioTree& tree) {
  std::vector<std::string> bad;
  const auto complain = [&bad](const std::string& msg) { bad.push_back(msg); };
  constexpr double kTol = 1e-9;

  const int n = tree.num_nodes();
  if (tree.num_stages < 1) complain("tree: num_stages must be >= 1");
  if (n == 0) {
    complain("tree: empty");
    return bad;
  }
  if (static_cast<int>(tree.ancestor.size()) != n ||
      static_cast<int>(tree.children.size()) != n ||
      static_cast<int>(tree.probability.size()) != n) {
    complain("tree: per-node array sizes disagree");
    return bad;
  }
  if (static_cast<int>(tree.stage_offsets.size()) != tree.num_stages + 2) {
    complain("tree: stage_offsets must have num_stages + 2 entries");
    return bad;
  }
  if (!tree.mode.empty() && static_cast<int>(tree.mode.size()) != n)
    complain("tree: mode labels present but not one per node");

  if (tree.stage_offsets.front() != 0 || tree.stage_offsets.back() != n)
    complain("tree: stage_offsets must start at 0 and end at num_nodes");
  for (int t = 0; t <= tree.num_stages; ++t) {
    if (tree.stage_offsets[static_cast<std::size_t>(t)] >=
        tree.stage_offsets[static_cast<std::size_t>(t) + 1])
      complain("stage " + std::to_string(t) + ": empty stage");
  }

  if (tree.node_stage[0] != 0) complain("node 0: root must have stage 0");
  if (tree.ancestor[0] != -1) complain("node 0: root must have ancestor -1");
  if (std::abs(tree.probability[0] - 1.0) > kTol)
    complain("node 0: root probability must be 1");

  for (int i = 0; i < n; ++i) {
    const auto si = static_cast<std::size_t>(i);
    const int t = tree.node_stage[si];
    if (t < 0 || t > tree.num_stages) {
      complain("node " + std::to_string(i) + ": stage out of range");
      continue;
    }
    if (i < tree.stage_offsets[static_cast<std::size_t>(t)] ||
        i >= tree.stage_offsets[static_cast<std::size_t>(t) + 1])
      complain("node " + std::to_string(i) +
               ": id not inside its stage's offset range");
    if (!(tree.probability[si] > 0.0) || tree.probability[si] > 1.0 + kTol)
      complain("node " + std::to_string(i) + ": probability not in (0, 1]");
    if (i > 0) {
      const int a = tree.ancestor[si];
      if (a < 0 || a >= i) {
        complain("node " + std::to_string(i) +
                 ": ancestor id must be smaller than the node's own id");
      } else {
        if (tree.node_stage[static_cast<std::size_t>(a)] != t - 1)
          complain("node " + std::to_string(i) +
                   ": ancestor is not one stage earlier");
        const auto& sibs = tree.children[static_cast<std::size_t>(a)];
        if (std::find(sibs.begin(), sibs.end(), i) == sibs.end())
          complain("node " + std::to_string(i) +
                   ": missing from its ancestor's child list");
      }
    }
    if (t == tree.num_stages) {
      if (!tree.children[si].empty())
        complain("node " + std::to_string(i) + ": leaf with children");
    } else {
      if (tree.children[si].empty())
        complain("node " + std::to_string(i) +
                 ": interior node without children (leaves must sit at the "
                 "final stage)");
      double mass = 0.0;
      for (int c : tree.children[si]) {
        if (c <= i || c >= n) {
          complain("node " + std::to_string(i) + ": child id out of range");
          continue;
        }
        if (tree.ancestor[static_cast<std::size_t>(c)] != i)
          complain("node " + std::to_string(i) + ": child " +
                   std::to_string(c) + " does not point back");
        mass += tree.probability[static_cast<std::size_t>(c)];
      }
      if (std::abs(mass - tree.probability[si]) > kTol)
        complain("node " + std::to_string(i) +
                 ": children probabilities do not sum to the node's own");
    }
  }

  for (int t = 0; t <= tree.num_stages; ++t) {
    double mass = 0.0;
    for (int i = tree.stage_offsets[static_cast<std::size_t>(t)];
         i < tree.stage_offsets[static_cast<std::size_t>(t) + 1]; ++i)
      mass += tree.probability[static_cast<std::size_t>(i)];
    if (std::abs(mass - 1.0) > kTol)
      complain("stage " + std::to_string(t) +
               ": probabilities do not sum to 1");
  }

  // BFS order within a stage: ancestors nondecreasing, which makes each
  // node's children a contiguous id range.
  for (int i = 1; i + 1 < n; ++i) {
    if (tree.node_stage[static_cast<std::size_t>(i)] ==
            tree.node_stage[static_cast<std::size_t>(i) + 1] &&
        tree.ancestor[static_cast<std::size_t>(i)] >
            tree.ancestor[static_cast<std::size_t>(i) + 1])
      complain("node " + std::to_string(i + 1) +
               ": siblings out of BFS order (ancestor ids must be "
               "nondecreasing within a stage)");
  }
  return bad;
}

}  // namespace scenopt
