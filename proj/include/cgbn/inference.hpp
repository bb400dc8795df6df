#pragma once

#include <memory>
#include <set>
#include <variant>
#include <vector>

#include "cgbn/model.hpp"
#include "cgbn/potential.hpp"

namespace cgbn {

/// Strong junction tree of a CG network.
///
/// Built by eliminating every continuous variable before any discrete one,
/// so that every collect message towards the root is exact. The structure is
/// immutable; evidence lives in CalibratedTree.
class CliqueTree {
 public:
  std::shared_ptr<const Network> network() const { return net_; }

  std::size_t size() const { return cliques_.size(); }
  const std::vector<NodeId>& clique(std::size_t c) const { return cliques_[c]; }
  const std::vector<std::vector<NodeId>>& cliques() const { return cliques_; }

  int root() const { return root_; }
  /// Parent towards the root; -1 for the root.
  int parent(std::size_t c) const { return parent_[c]; }
  const std::vector<int>& children(std::size_t c) const { return children_[c]; }
  /// Variables shared with the parent clique (empty for the root).
  const std::vector<NodeId>& separator(std::size_t c) const { return separators_[c]; }

  /// Clique that received the conditional distribution of each node.
  int assignment(NodeId v) const { return assignment_[v]; }
  const std::vector<NodeId>& assigned(std::size_t c) const { return assigned_[c]; }

  const std::vector<NodeId>& elimination_order() const { return elimination_order_; }

  /// Parents before children (root first).
  std::vector<int> preorder() const;

  /// Cliques containing v, ascending.
  std::vector<int> cliques_containing(NodeId v) const;

  /// Smallest clique containing every listed variable, lowest index on ties; -1 if none.
  int smallest_clique_containing(const std::vector<NodeId>& vars) const;

  /// Structural self-check: running intersection, family coverage, elimination
  /// constraint and strong-root property. Returns a description of each failure.
  std::vector<std::string> check() const;

 private:
  friend CliqueTree build_clique_tree(std::shared_ptr<const Network>, const std::vector<std::vector<NodeId>>&);

  std::shared_ptr<const Network> net_;
  std::vector<std::vector<NodeId>> cliques_;
  std::vector<int> parent_;
  std::vector<std::vector<int>> children_;
  std::vector<std::vector<NodeId>> separators_;
  std::vector<int> assignment_;
  std::vector<std::vector<NodeId>> assigned_;
  std::vector<NodeId> elimination_order_;
  int root_ = 0;
};

/// Moralizes, triangulates with continuous-first min-fill elimination (ties by
/// node index) and picks the strong root. `together` lists variable sets that
/// must share a clique, e.g. the targets of a joint query.
CliqueTree build_clique_tree(std::shared_ptr<const Network> net,
                             const std::vector<std::vector<NodeId>>& together = {});
CliqueTree build_clique_tree(const Network& net, const std::vector<std::vector<NodeId>>& together = {});

/// True when every edge satisfies the strong condition with `root` as root.
bool is_strong_root(const CliqueTree& tree, int root);

/// A clique tree after evidence propagation. Clique potentials are normalized
/// posteriors (weak marginals where discrete variables were collapsed).
class CalibratedTree {
 public:
  using Slot = std::shared_ptr<const CGPotential>;

  const CliqueTree& tree() const { return *tree_; }
  std::shared_ptr<const CliqueTree> tree_ptr() const { return tree_; }
  const Evidence& evidence() const { return evidence_; }
  double log_likelihood() const { return log_likelihood_; }

  /// Posterior potential of clique c. Throws if c was left stale by a branch update.
  const CGPotential& belief(std::size_t c) const;
  bool is_current(std::size_t c) const { return current_[c]; }

 private:
  friend CalibratedTree propagate(std::shared_ptr<const CliqueTree>, const Evidence&);
  friend CalibratedTree branch_repropagate(const CalibratedTree&, const std::vector<int>&, const Evidence&);

  std::shared_ptr<const CliqueTree> tree_;
  Evidence evidence_;
  std::vector<Slot> initial_;   // product of assigned CPDs under the evidence
  std::vector<Slot> upward_;    // collect message from clique c to its parent
  std::vector<Slot> belief_;
  std::vector<char> current_;
  double log_likelihood_ = 0.0;
};

/// Collect to the strong root, then distribute. Throws InconsistentEvidence
/// when the evidence has zero likelihood.
CalibratedTree propagate(std::shared_ptr<const CliqueTree> tree, const Evidence& e);

/// Re-propagates additional evidence inside a connected branch that contains
/// the strong root. Messages from cliques outside the branch do not depend on
/// the new evidence and are reused. Branch beliefs equal those of a full
/// propagate with the merged evidence; cliques outside the branch become stale.
CalibratedTree branch_repropagate(const CalibratedTree& state, const std::vector<int>& branch, const Evidence& delta);

/// Smallest connected set of cliques containing the root and the given cliques.
std::vector<int> branch_spanning(const CliqueTree& tree, const std::vector<int>& cliques);

/// Discrete posterior (probabilities per state) or continuous weak posterior.
using NodeMarginal = std::variant<std::vector<double>, MomentSummary>;

NodeMarginal node_marginal(const CalibratedTree& t, NodeId x);

/// Weak joint posterior of continuous variables sharing a clique.
MomentSummary joint_moments(const CalibratedTree& t, const std::vector<NodeId>& vars);

/// CG potential for the conditional distribution of one node, over its family.
CGPotential cpd_potential(const Network& net, NodeId v);

}  // namespace cgbn
