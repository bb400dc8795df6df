#include "cgbn/model.hpp"

#include <cmath>
#include <queue>

#include <fmt/format.h>

#include "cgbn/errors.hpp"

namespace cgbn {

Network::Network(std::vector<NodeSpec> specs) {
  nodes_.reserve(specs.size());
  for (auto& s : specs) {
    Node n;
    n.spec = std::move(s);
    const NodeId id = static_cast<NodeId>(nodes_.size());
    if (!by_label_.emplace(n.spec.label, id).second) duplicates_.push_back(n.spec.label);
    nodes_.push_back(std::move(n));
  }
  for (auto& n : nodes_) {
    for (const auto& p : n.spec.parents) {
      auto it = by_label_.find(p);
      n.parents.push_back(it == by_label_.end() ? kNoNode : it->second);
    }
  }
  for (std::size_t i = 0; i < nodes_.size(); ++i) {
    auto& n = nodes_[i];
    for (NodeId p : n.parents) {
      if (p == kNoNode) continue;
      if (nodes_[p].is_discrete())
        n.discrete_parents.push_back(p);
      else
        n.continuous_parents.push_back(p);
      nodes_[p].children.push_back(static_cast<NodeId>(i));
    }
  }
}

const Node& Network::node(NodeId id) const {
  if (id < 0 || static_cast<std::size_t>(id) >= nodes_.size())
    throw ArgumentError(fmt::format("unknown node index {}", id));
  return nodes_[id];
}

NodeId Network::id(const std::string& label) const {
  auto it = by_label_.find(label);
  if (it == by_label_.end()) throw ArgumentError(fmt::format("unknown node '{}'", label));
  return it->second;
}

bool Network::contains(const std::string& label) const { return by_label_.count(label) > 0; }

int Network::cardinality(NodeId id) const {
  const auto& n = node(id);
  if (!n.is_discrete()) throw ArgumentError(fmt::format("node '{}' is not discrete", n.label()));
  return static_cast<int>(n.spec.states.size());
}

std::size_t Network::parent_config_count(NodeId id) const {
  std::size_t count = 1;
  for (NodeId p : node(id).discrete_parents) count *= static_cast<std::size_t>(cardinality(p));
  return count;
}

std::size_t Network::parent_config_index(NodeId id, const std::vector<int>& parent_states) const {
  const auto& dp = node(id).discrete_parents;
  if (parent_states.size() != dp.size())
    throw ArgumentError(fmt::format("node '{}' expects {} discrete parent states", label(id), dp.size()));
  std::size_t index = 0;
  for (std::size_t i = 0; i < dp.size(); ++i) {
    const int card = cardinality(dp[i]);
    if (parent_states[i] < 0 || parent_states[i] >= card)
      throw ArgumentError(fmt::format("state {} out of range for '{}'", parent_states[i], label(dp[i])));
    index = index * static_cast<std::size_t>(card) + static_cast<std::size_t>(parent_states[i]);
  }
  return index;
}

std::vector<NodeId> Network::discrete_nodes() const {
  std::vector<NodeId> out;
  for (std::size_t i = 0; i < nodes_.size(); ++i)
    if (nodes_[i].is_discrete()) out.push_back(static_cast<NodeId>(i));
  return out;
}

std::vector<NodeId> Network::continuous_nodes() const {
  std::vector<NodeId> out;
  for (std::size_t i = 0; i < nodes_.size(); ++i)
    if (nodes_[i].is_continuous()) out.push_back(static_cast<NodeId>(i));
  return out;
}

std::set<NodeId> Evidence::variables() const {
  std::set<NodeId> out;
  for (const auto& [k, v] : discrete) out.insert(k);
  for (const auto& [k, v] : continuous) out.insert(k);
  return out;
}

Evidence Evidence::merged(const Evidence& other) const {
  Evidence out = *this;
  for (const auto& [k, v] : other.discrete) {
    if (out.observes(k)) throw ArgumentError(fmt::format("node {} observed twice", k));
    out.discrete.emplace(k, v);
  }
  for (const auto& [k, v] : other.continuous) {
    if (out.observes(k)) throw ArgumentError(fmt::format("node {} observed twice", k));
    out.continuous.emplace(k, v);
  }
  return out;
}

void check_evidence(const Network& net, const Evidence& e) {
  for (const auto& [id, state] : e.discrete) {
    const auto& n = net.node(id);
    if (!n.is_discrete()) throw ArgumentError(fmt::format("'{}' is continuous but given a state", n.label()));
    if (state < 0 || state >= net.cardinality(id))
      throw ArgumentError(fmt::format("state {} out of range for '{}'", state, n.label()));
  }
  for (const auto& [id, value] : e.continuous) {
    const auto& n = net.node(id);
    if (!n.is_continuous()) throw ArgumentError(fmt::format("'{}' is discrete but given a value", n.label()));
    if (e.discrete.count(id)) throw ArgumentError(fmt::format("'{}' observed twice", n.label()));
    if (!std::isfinite(value)) throw ArgumentError(fmt::format("non-finite observation for '{}'", n.label()));
  }
}

namespace {

bool has_cycle(const Network& net, std::vector<std::string>* members) {
  const std::size_t n = net.size();
  std::vector<int> indegree(n, 0);
  for (std::size_t i = 0; i < n; ++i)
    for (NodeId p : net.node(static_cast<NodeId>(i)).parents)
      if (p != kNoNode) ++indegree[i];
  std::queue<NodeId> ready;
  for (std::size_t i = 0; i < n; ++i)
    if (indegree[i] == 0) ready.push(static_cast<NodeId>(i));
  std::size_t seen = 0;
  while (!ready.empty()) {
    NodeId v = ready.front();
    ready.pop();
    ++seen;
    for (NodeId c : net.node(v).children)
      if (--indegree[c] == 0) ready.push(c);
  }
  if (seen == n) return false;
  if (members)
    for (std::size_t i = 0; i < n; ++i)
      if (indegree[i] > 0) members->push_back(net.label(static_cast<NodeId>(i)));
  return true;
}

}  // namespace

std::vector<Violation> validate(const Network& net) {
  std::vector<Violation> out;
  auto add = [&](const std::string& node, const char* rule, std::string msg) {
    out.push_back({node, rule, std::move(msg)});
  };

  for (const auto& d : net.duplicate_labels()) add(d, "unique-label", "label declared more than once");

  for (const auto& n : net.nodes()) {
    const auto& s = n.spec;
    if (s.label.empty()) add(s.label, "label", "empty label");

    bool resolved = true;
    std::set<NodeId> distinct;
    for (std::size_t i = 0; i < n.parents.size(); ++i) {
      if (n.parents[i] == kNoNode) {
        add(s.label, "parent-resolves", fmt::format("parent '{}' does not exist", s.parents[i]));
        resolved = false;
      } else if (!distinct.insert(n.parents[i]).second) {
        add(s.label, "parent-unique", fmt::format("parent '{}' listed twice", s.parents[i]));
      } else if (s.parents[i] == s.label) {
        add(s.label, "acyclic", "node is its own parent");
      }
    }
    if (!resolved) continue;

    std::size_t configs = 1;
    bool cards_ok = true;
    for (NodeId p : n.discrete_parents) {
      const auto states = net.node(p).spec.states.size();
      if (states < 2) cards_ok = false;
      configs *= std::max<std::size_t>(states, 1);
    }

    if (n.is_discrete()) {
      if (s.states.size() < 2) add(s.label, "states", "discrete node needs at least two states");
      for (NodeId p : n.continuous_parents)
        add(s.label, "clg-restriction", fmt::format("discrete node has continuous parent '{}'", net.label(p)));
      if (!cards_ok) continue;
      if (s.cpt.size() != configs) {
        add(s.label, "cpt-shape", fmt::format("expected {} CPT rows, found {}", configs, s.cpt.size()));
        continue;
      }
      for (std::size_t r = 0; r < s.cpt.size(); ++r) {
        const auto& row = s.cpt[r];
        if (row.size() != s.states.size()) {
          add(s.label, "cpt-shape", fmt::format("row {} has {} entries, expected {}", r, row.size(), s.states.size()));
          continue;
        }
        double sum = 0.0;
        bool negative = false;
        for (double p : row) {
          if (!(p >= 0.0) || !std::isfinite(p)) negative = true;
          sum += p;
        }
        if (negative) add(s.label, "cpt-nonnegative", fmt::format("row {} has a negative or non-finite entry", r));
        if (!(std::abs(sum - 1.0) <= kCptTolerance))
          add(s.label, "cpt-normalized", fmt::format("row {} sums to {:.12g}", r, sum));
      }
    } else {
      if (!cards_ok) continue;
      if (s.clg.size() != configs) {
        add(s.label, "clg-shape", fmt::format("expected {} CLG blocks, found {}", configs, s.clg.size()));
        continue;
      }
      for (std::size_t r = 0; r < s.clg.size(); ++r) {
        const auto& b = s.clg[r];
        if (b.coefficients.size() != n.continuous_parents.size())
          add(s.label, "clg-coefficients",
              fmt::format("block {} has {} coefficients, expected {}", r, b.coefficients.size(),
                          n.continuous_parents.size()));
        if (!(b.variance >= kVarianceFloor) || !std::isfinite(b.variance))
          add(s.label, "variance-floor", fmt::format("block {} variance {:.6g} below floor", r, b.variance));
        bool finite = std::isfinite(b.intercept);
        for (double c : b.coefficients) finite = finite && std::isfinite(c);
        if (!finite) add(s.label, "clg-finite", fmt::format("block {} has a non-finite parameter", r));
      }
    }
  }

  std::vector<std::string> members;
  if (has_cycle(net, &members))
    for (const auto& m : members) add(m, "acyclic", "node lies on or downstream of a directed cycle");

  return out;
}

std::vector<NodeId> topo_sort(const Network& net) {
  const std::size_t n = net.size();
  std::vector<int> indegree(n, 0);
  for (std::size_t i = 0; i < n; ++i) {
    for (NodeId p : net.node(static_cast<NodeId>(i)).parents) {
      if (p == kNoNode)
        throw StructuralError(fmt::format("node '{}' has an unresolved parent", net.label(static_cast<NodeId>(i))));
      ++indegree[i];
    }
  }
  std::priority_queue<NodeId, std::vector<NodeId>, std::greater<>> ready;
  for (std::size_t i = 0; i < n; ++i)
    if (indegree[i] == 0) ready.push(static_cast<NodeId>(i));
  std::vector<NodeId> order;
  order.reserve(n);
  while (!ready.empty()) {
    NodeId v = ready.top();
    ready.pop();
    order.push_back(v);
    for (NodeId c : net.node(v).children)
      if (--indegree[c] == 0) ready.push(c);
  }
  if (order.size() != n) throw StructuralError("network contains a directed cycle");
  return order;
}

namespace {

// Continuous nodes reachable backwards from x through continuous nodes only
// (x included), plus the discrete nodes where that walk stops.
void walk_continuous_ancestry(const Network& net, NodeId x, std::set<NodeId>& continuous,
                              std::set<NodeId>& discrete) {
  std::vector<NodeId> stack{x};
  continuous.insert(x);
  while (!stack.empty()) {
    NodeId v = stack.back();
    stack.pop_back();
    for (NodeId p : net.node(v).parents) {
      if (p == kNoNode) continue;
      if (net.node(p).is_discrete()) {
        discrete.insert(p);
      } else if (continuous.insert(p).second) {
        stack.push_back(p);
      }
    }
  }
}

}  // namespace

std::set<NodeId> discrete_boundary(const Network& net, NodeId x) {
  if (!net.node(x).is_continuous())
    throw ArgumentError(fmt::format("'{}' is not continuous", net.label(x)));
  std::set<NodeId> continuous, discrete;
  walk_continuous_ancestry(net, x, continuous, discrete);
  return discrete;
}

std::set<NodeId> continuous_bridge(const Network& net, NodeId x, const std::set<NodeId>& boundary) {
  if (!net.node(x).is_continuous())
    throw ArgumentError(fmt::format("'{}' is not continuous", net.label(x)));
  std::set<NodeId> continuous, discrete;
  walk_continuous_ancestry(net, x, continuous, discrete);
  if (discrete != boundary)
    throw ArgumentError(fmt::format("boundary given for '{}' is not its discrete boundary", net.label(x)));
  continuous.erase(x);
  return continuous;
}

std::set<NodeId> mixture_sources(const Network& net, const std::vector<NodeId>& targets, const Evidence& e) {
  for (NodeId t : targets) {
    if (!net.node(t).is_continuous())
      throw ArgumentError(fmt::format("'{}' is not continuous", net.label(t)));
    if (e.observes(t)) throw ArgumentError(fmt::format("target '{}' is observed", net.label(t)));
  }

  // Continuous nodes that are ancestors (through continuous edges) of a target
  // or of an observed continuous node. Everything else is barren.
  std::vector<char> relevant(net.size(), 0);
  std::vector<NodeId> stack;
  auto seed = [&](NodeId v) {
    if (!relevant[v]) {
      relevant[v] = 1;
      stack.push_back(v);
    }
  };
  for (NodeId t : targets) seed(t);
  for (const auto& [v, value] : e.continuous) seed(v);
  while (!stack.empty()) {
    NodeId v = stack.back();
    stack.pop_back();
    for (NodeId p : net.node(v).continuous_parents) seed(p);
  }

  // Each relevant continuous node contributes a factor over itself and its
  // continuous parents; observed nodes drop out of the factor scope. Grow the
  // component of unobserved continuous nodes that shares factors with a target.
  std::vector<char> in_component(net.size(), 0);
  std::vector<NodeId> frontier;
  for (NodeId t : targets) {
    if (!in_component[t]) {
      in_component[t] = 1;
      frontier.push_back(t);
    }
  }
  std::set<NodeId> sources;
  std::vector<char> factor_done(net.size(), 0);
  auto absorb_factor = [&](NodeId owner) {
    if (factor_done[owner]) return;
    factor_done[owner] = 1;
    const auto& n = net.node(owner);
    for (NodeId d : n.discrete_parents) sources.insert(d);
    auto touch = [&](NodeId v) {
      if (e.continuous.count(v) || in_component[v]) return;
      in_component[v] = 1;
      frontier.push_back(v);
    };
    touch(owner);
    for (NodeId p : n.continuous_parents) touch(p);
  };
  while (!frontier.empty()) {
    NodeId v = frontier.back();
    frontier.pop_back();
    absorb_factor(v);
    for (NodeId c : net.node(v).children)
      if (net.node(c).is_continuous() && relevant[c]) absorb_factor(c);
  }
  return sources;
}

}  // namespace cgbn
