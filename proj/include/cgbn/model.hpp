#pragma once

#include <cstddef>
#include <map>
#include <set>
#include <string>
#include <unordered_map>
#include <vector>

namespace cgbn {

/// Dense node index, contiguous from 0 within a network.
using NodeId = int;

inline constexpr NodeId kNoNode = -1;

/// Lower bound on every conditional variance (log-contamination units squared).
inline constexpr double kVarianceFloor = 1e-12;

/// Tolerance on CPT row sums.
inline constexpr double kCptTolerance = 1e-9;

enum class NodeKind { discrete, continuous };

/// Conditional linear Gaussian parameters for one discrete-parent configuration.
struct ClgBlock {
  double intercept = 0.0;
  std::vector<double> coefficients;  // one per continuous parent, declared order
  double variance = 1.0;
};

/// A node as declared. Parents are listed by label; the network resolves them.
struct NodeSpec {
  std::string label;
  NodeKind kind = NodeKind::discrete;
  std::vector<std::string> parents;

  // discrete
  std::vector<std::string> states;
  std::vector<std::vector<double>> cpt;  // [discrete parent configuration][state]

  // continuous
  std::vector<ClgBlock> clg;  // [discrete parent configuration]
};

struct Node {
  NodeSpec spec;
  std::vector<NodeId> parents;  // resolved, declared order; kNoNode when unresolved
  std::vector<NodeId> discrete_parents;
  std::vector<NodeId> continuous_parents;
  std::vector<NodeId> children;

  const std::string& label() const { return spec.label; }
  NodeKind kind() const { return spec.kind; }
  bool is_discrete() const { return spec.kind == NodeKind::discrete; }
  bool is_continuous() const { return spec.kind == NodeKind::continuous; }
};

/// Hybrid DAG of discrete (CPT) and continuous (CLG) nodes. Immutable once
/// constructed. Construction never fails on semantic problems; call validate().
class Network {
 public:
  Network() = default;
  explicit Network(std::vector<NodeSpec> specs);

  std::size_t size() const { return nodes_.size(); }
  const Node& node(NodeId id) const;
  const std::vector<Node>& nodes() const { return nodes_; }

  /// Throws ArgumentError for unknown labels.
  NodeId id(const std::string& label) const;
  bool contains(const std::string& label) const;
  const std::string& label(NodeId id) const { return node(id).label(); }

  /// Number of states of a discrete node.
  int cardinality(NodeId id) const;

  /// Number of configurations of the discrete parents of a node.
  std::size_t parent_config_count(NodeId id) const;

  /// Mixed-radix index (last parent fastest) of a discrete-parent configuration.
  std::size_t parent_config_index(NodeId id, const std::vector<int>& parent_states) const;

  std::vector<NodeId> discrete_nodes() const;
  std::vector<NodeId> continuous_nodes() const;

  /// Labels declared more than once (the later declarations are unreachable by label).
  const std::vector<std::string>& duplicate_labels() const { return duplicates_; }

 private:
  std::vector<Node> nodes_;
  std::unordered_map<std::string, NodeId> by_label_;
  std::vector<std::string> duplicates_;
};

/// Observations: discrete nodes to a state index, continuous nodes to a value.
struct Evidence {
  std::map<NodeId, int> discrete;
  std::map<NodeId, double> continuous;

  bool empty() const { return discrete.empty() && continuous.empty(); }
  bool observes(NodeId id) const { return discrete.count(id) > 0 || continuous.count(id) > 0; }
  std::set<NodeId> variables() const;

  /// Union of two evidence sets; a node observed in both is an ArgumentError.
  Evidence merged(const Evidence& other) const;

  bool operator==(const Evidence&) const = default;
};

/// Throws ArgumentError when a node is unknown, of the wrong kind, out of range,
/// or not finite.
void check_evidence(const Network& net, const Evidence& e);

struct Violation {
  std::string node;
  std::string rule;
  std::string message;
};

/// Every invariant breach in the network. Empty means the network is usable.
std::vector<Violation> validate(const Network& net);

/// Parents before children, ties broken by node index. Throws StructuralError
/// on a cycle or unresolved parent.
std::vector<NodeId> topo_sort(const Network& net);

/// Discrete ancestors of `x` reachable through paths whose interior nodes are
/// all continuous. These are the sources of the mixture for `x`.
std::set<NodeId> discrete_boundary(const Network& net, NodeId x);

/// Continuous ancestors of `x` lying between `x` and its discrete boundary.
std::set<NodeId> continuous_bridge(const Network& net, NodeId x, const std::set<NodeId>& boundary);

/// Discrete nodes that must be instantiated for the joint posterior of
/// `targets` given `e` to be a single Gaussian.
///
/// Without evidence this is the union of the targets' discrete boundaries.
/// Observed continuous nodes can couple the targets to further continuous
/// nodes (explaining away), whose discrete parents then join the set.
std::set<NodeId> mixture_sources(const Network& net, const std::vector<NodeId>& targets,
                                 const Evidence& e);

}  // namespace cgbn
