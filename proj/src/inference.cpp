#include "cgbn/inference.hpp"

#include <algorithm>
#include <cmath>
#include <limits>
#include <numbers>
#include <queue>

#include <fmt/format.h>

#include "cgbn/errors.hpp"

namespace cgbn {

namespace {

bool subset(const std::vector<NodeId>& a, const std::vector<NodeId>& b) {
  return std::includes(b.begin(), b.end(), a.begin(), a.end());
}

std::vector<NodeId> intersect(const std::vector<NodeId>& a, const std::vector<NodeId>& b) {
  std::vector<NodeId> out;
  std::set_intersection(a.begin(), a.end(), b.begin(), b.end(), std::back_inserter(out));
  return out;
}

int discrete_count(const Network& net, const std::vector<NodeId>& vars) {
  int n = 0;
  for (NodeId v : vars) n += net.node(v).is_discrete() ? 1 : 0;
  return n;
}

// Strong condition on one edge: the child side adds only continuous variables,
// or the separator is purely discrete.
bool strong_edge(const Network& net, const std::vector<NodeId>& child, const std::vector<NodeId>& sep) {
  bool sep_discrete = true;
  for (NodeId v : sep) sep_discrete = sep_discrete && net.node(v).is_discrete();
  if (sep_discrete) return true;
  for (NodeId v : child)
    if (!std::binary_search(sep.begin(), sep.end(), v) && net.node(v).is_discrete()) return false;
  return true;
}

bool strong_rooted_at(const Network& net, const std::vector<std::vector<NodeId>>& cliques,
                      const std::vector<std::vector<int>>& adj, int root) {
  std::vector<int> parent(cliques.size(), -2);
  std::queue<int> q;
  q.push(root);
  parent[root] = -1;
  while (!q.empty()) {
    int c = q.front();
    q.pop();
    for (int k : adj[c]) {
      if (parent[k] != -2) continue;
      parent[k] = c;
      if (!strong_edge(net, cliques[k], intersect(cliques[k], cliques[c]))) return false;
      q.push(k);
    }
  }
  return true;
}

std::vector<DiscreteVar> discrete_domain(const Network& net, const std::vector<NodeId>& vars, const Evidence& e) {
  std::vector<DiscreteVar> out;
  for (NodeId v : vars)
    if (net.node(v).is_discrete() && !e.observes(v)) out.push_back({v, net.cardinality(v)});
  return out;
}

std::vector<NodeId> continuous_domain(const Network& net, const std::vector<NodeId>& vars, const Evidence& e) {
  std::vector<NodeId> out;
  for (NodeId v : vars)
    if (net.node(v).is_continuous() && !e.observes(v)) out.push_back(v);
  return out;
}

}  // namespace

std::vector<int> CliqueTree::preorder() const {
  std::vector<int> order;
  order.reserve(cliques_.size());
  std::vector<int> stack{root_};
  while (!stack.empty()) {
    int c = stack.back();
    stack.pop_back();
    order.push_back(c);
    for (auto it = children_[c].rbegin(); it != children_[c].rend(); ++it) stack.push_back(*it);
  }
  return order;
}

std::vector<int> CliqueTree::cliques_containing(NodeId v) const {
  std::vector<int> out;
  for (std::size_t c = 0; c < cliques_.size(); ++c)
    if (std::binary_search(cliques_[c].begin(), cliques_[c].end(), v)) out.push_back(static_cast<int>(c));
  return out;
}

int CliqueTree::smallest_clique_containing(const std::vector<NodeId>& vars) const {
  std::vector<NodeId> sorted = vars;
  std::sort(sorted.begin(), sorted.end());
  int best = -1;
  for (std::size_t c = 0; c < cliques_.size(); ++c) {
    if (!subset(sorted, cliques_[c])) continue;
    if (best < 0 || cliques_[c].size() < cliques_[best].size()) best = static_cast<int>(c);
  }
  return best;
}

std::vector<std::string> CliqueTree::check() const {
  std::vector<std::string> problems;
  const Network& net = *net_;

  for (NodeId v = 0; v < static_cast<NodeId>(net.size()); ++v) {
    const auto holders = cliques_containing(v);
    if (holders.empty()) {
      problems.push_back(fmt::format("variable '{}' is in no clique", net.label(v)));
      continue;
    }
    // holders must induce a connected subtree: exactly |holders|-1 internal edges
    std::size_t edges = 0;
    for (int c : holders)
      if (parent_[c] >= 0 && std::binary_search(holders.begin(), holders.end(), parent_[c])) ++edges;
    if (edges + 1 != holders.size())
      problems.push_back(fmt::format("running intersection fails for '{}'", net.label(v)));

    std::vector<NodeId> family = net.node(v).parents;
    family.push_back(v);
    std::sort(family.begin(), family.end());
    const int a = assignment_[v];
    if (a < 0 || !subset(family, cliques_[a]))
      problems.push_back(fmt::format("family of '{}' is not inside its assigned clique", net.label(v)));
  }

  bool seen_discrete = false;
  for (NodeId v : elimination_order_) {
    if (net.node(v).is_discrete()) seen_discrete = true;
    else if (seen_discrete)
      problems.push_back(fmt::format("continuous '{}' eliminated after a discrete variable", net.label(v)));
  }

  for (std::size_t c = 0; c < cliques_.size(); ++c) {
    if (parent_[c] < 0) continue;
    if (separators_[c] != intersect(cliques_[c], cliques_[parent_[c]]))
      problems.push_back(fmt::format("separator of clique {} is not the intersection with its parent", c));
    if (!strong_edge(net, cliques_[c], separators_[c]))
      problems.push_back(fmt::format("edge {}->{} violates the strong condition", c, parent_[c]));
  }
  return problems;
}

CliqueTree build_clique_tree(const Network& net, const std::vector<std::vector<NodeId>>& together) {
  return build_clique_tree(std::make_shared<const Network>(net), together);
}

CliqueTree build_clique_tree(std::shared_ptr<const Network> netp, const std::vector<std::vector<NodeId>>& together) {
  const Network& net = *netp;
  topo_sort(net);  // structural check
  const std::size_t n = net.size();

  std::vector<std::vector<char>> adj(n, std::vector<char>(n, 0));
  auto link = [&](NodeId a, NodeId b) {
    if (a != b) adj[a][b] = adj[b][a] = 1;
  };
  for (NodeId v = 0; v < static_cast<NodeId>(n); ++v) {
    const auto& ps = net.node(v).parents;
    for (std::size_t i = 0; i < ps.size(); ++i) {
      link(v, ps[i]);
      for (std::size_t j = i + 1; j < ps.size(); ++j) link(ps[i], ps[j]);
    }
  }
  for (const auto& group : together) {
    for (NodeId a : group) {
      net.node(a);
      for (NodeId b : group) link(a, b);
    }
  }

  // Constrained min-fill elimination.
  std::vector<char> alive(n, 1);
  std::vector<NodeId> order;
  std::vector<std::vector<NodeId>> elim_cliques;
  std::size_t continuous_left = net.continuous_nodes().size();
  for (std::size_t step = 0; step < n; ++step) {
    const bool want_continuous = continuous_left > 0;
    NodeId best = kNoNode;
    std::size_t best_fill = std::numeric_limits<std::size_t>::max();
    for (NodeId v = 0; v < static_cast<NodeId>(n); ++v) {
      if (!alive[v] || net.node(v).is_continuous() != want_continuous) continue;
      std::vector<NodeId> nb;
      for (NodeId u = 0; u < static_cast<NodeId>(n); ++u)
        if (alive[u] && adj[v][u]) nb.push_back(u);
      std::size_t fill = 0;
      for (std::size_t i = 0; i < nb.size(); ++i)
        for (std::size_t j = i + 1; j < nb.size(); ++j)
          if (!adj[nb[i]][nb[j]]) ++fill;
      if (fill < best_fill) {
        best_fill = fill;
        best = v;
      }
    }
    std::vector<NodeId> clique{best};
    for (NodeId u = 0; u < static_cast<NodeId>(n); ++u)
      if (alive[u] && adj[best][u]) clique.push_back(u);
    for (std::size_t i = 1; i < clique.size(); ++i)
      for (std::size_t j = i + 1; j < clique.size(); ++j) link(clique[i], clique[j]);
    std::sort(clique.begin(), clique.end());
    alive[best] = 0;
    if (net.node(best).is_continuous()) --continuous_left;
    order.push_back(best);
    elim_cliques.push_back(std::move(clique));
  }

  // Elimination tree: clique i hangs below the clique of the first-eliminated
  // variable among its other members.
  std::vector<int> position(n);
  for (std::size_t i = 0; i < n; ++i) position[order[i]] = static_cast<int>(i);
  std::vector<std::vector<int>> cadj(n);
  for (std::size_t i = 0; i < n; ++i) {
    int parent = -1;
    for (NodeId u : elim_cliques[i])
      if (u != order[i] && (parent < 0 || position[u] < parent)) parent = position[u];
    if (parent >= 0) {
      cadj[i].push_back(parent);
      cadj[parent].push_back(static_cast<int>(i));
    }
  }

  // Absorb non-maximal cliques into a containing neighbour.
  std::vector<char> live(n, 1);
  for (bool changed = true; changed;) {
    changed = false;
    for (std::size_t i = 0; i < n && !changed; ++i) {
      if (!live[i]) continue;
      for (int j : cadj[i]) {
        if (!subset(elim_cliques[i], elim_cliques[j])) continue;
        for (int k : cadj[i]) {
          if (k == j) continue;
          auto& ak = cadj[k];
          std::replace(ak.begin(), ak.end(), static_cast<int>(i), j);
          cadj[j].push_back(k);
        }
        auto& aj = cadj[j];
        aj.erase(std::remove(aj.begin(), aj.end(), static_cast<int>(i)), aj.end());
        cadj[i].clear();
        live[i] = 0;
        changed = true;
        break;
      }
    }
  }

  // Renumber surviving cliques in elimination order.
  std::vector<int> renum(n, -1);
  std::vector<std::vector<NodeId>> cliques;
  for (std::size_t i = 0; i < n; ++i)
    if (live[i]) {
      renum[i] = static_cast<int>(cliques.size());
      cliques.push_back(elim_cliques[i]);
    }
  const std::size_t m = cliques.size();
  std::vector<std::vector<int>> tadj(m);
  for (std::size_t i = 0; i < n; ++i) {
    if (!live[i]) continue;
    for (int k : cadj[i]) tadj[renum[i]].push_back(renum[k]);
  }
  for (auto& a : tadj) {
    std::sort(a.begin(), a.end());
    a.erase(std::unique(a.begin(), a.end()), a.end());
  }

  // Strong root per connected component; components are then linked to the
  // overall root through empty separators.
  std::vector<int> component(m, -1);
  std::vector<std::vector<int>> members;
  for (std::size_t c = 0; c < m; ++c) {
    if (component[c] >= 0) continue;
    const int id = static_cast<int>(members.size());
    members.emplace_back();
    std::vector<int> stack{static_cast<int>(c)};
    component[c] = id;
    while (!stack.empty()) {
      int x = stack.back();
      stack.pop_back();
      members[id].push_back(x);
      for (int k : tadj[x])
        if (component[k] < 0) {
          component[k] = id;
          stack.push_back(k);
        }
    }
    std::sort(members[id].begin(), members[id].end());
  }
  std::vector<int> comp_root;
  for (const auto& mem : members) {
    int best = -1;
    for (int c : mem) {
      if (!strong_rooted_at(net, cliques, tadj, c)) continue;
      if (best < 0 || discrete_count(net, cliques[c]) > discrete_count(net, cliques[best])) best = c;
    }
    if (best < 0) throw StructuralError("no strong root exists for the triangulation");
    comp_root.push_back(best);
  }
  int root = comp_root[0];
  for (int r : comp_root)
    if (discrete_count(net, cliques[r]) > discrete_count(net, cliques[root]) ||
        (discrete_count(net, cliques[r]) == discrete_count(net, cliques[root]) && r < root))
      root = r;
  for (int r : comp_root) {
    if (r == root) continue;
    tadj[r].push_back(root);
    tadj[root].push_back(r);
  }
  for (auto& a : tadj) std::sort(a.begin(), a.end());

  CliqueTree t;
  t.net_ = std::move(netp);
  t.cliques_ = std::move(cliques);
  t.root_ = root;
  t.parent_.assign(m, -1);
  t.children_.assign(m, {});
  t.separators_.assign(m, {});
  {
    std::vector<char> seen(m, 0);
    std::queue<int> q;
    q.push(root);
    seen[root] = 1;
    while (!q.empty()) {
      int c = q.front();
      q.pop();
      for (int k : tadj[c]) {
        if (seen[k]) continue;
        seen[k] = 1;
        t.parent_[k] = c;
        t.children_[c].push_back(k);
        t.separators_[k] = intersect(t.cliques_[k], t.cliques_[c]);
        q.push(k);
      }
    }
  }
  t.elimination_order_ = std::move(order);
  t.assignment_.assign(n, -1);
  t.assigned_.assign(m, {});
  for (NodeId v = 0; v < static_cast<NodeId>(n); ++v) {
    std::vector<NodeId> family = t.net_->node(v).parents;
    family.push_back(v);
    std::sort(family.begin(), family.end());
    for (std::size_t c = 0; c < m; ++c)
      if (subset(family, t.cliques_[c])) {
        t.assignment_[v] = static_cast<int>(c);
        t.assigned_[c].push_back(v);
        break;
      }
    if (t.assignment_[v] < 0)
      throw StructuralError(fmt::format("family of '{}' is not covered by any clique", t.net_->label(v)));
  }
  return t;
}

bool is_strong_root(const CliqueTree& tree, int root) {
  std::vector<std::vector<int>> adj(tree.size());
  for (std::size_t c = 0; c < tree.size(); ++c)
    if (tree.parent(c) >= 0) {
      adj[c].push_back(tree.parent(c));
      adj[tree.parent(c)].push_back(static_cast<int>(c));
    }
  return strong_rooted_at(*tree.network(), tree.cliques(), adj, root);
}

CGPotential cpd_potential(const Network& net, NodeId v) {
  const Node& node = net.node(v);
  std::vector<DiscreteVar> dvars;
  for (NodeId p : node.discrete_parents) dvars.push_back({p, net.cardinality(p)});
  if (node.is_discrete()) dvars.push_back({v, net.cardinality(v)});

  std::vector<NodeId> cvars;
  if (node.is_continuous()) {
    cvars = node.continuous_parents;
    cvars.push_back(v);
  }
  CGPotential pot(dvars, cvars);

  std::vector<int> parent_pos;
  for (NodeId p : node.discrete_parents) parent_pos.push_back(pot.discrete_position(p));

  for (std::size_t k = 0; k < pot.size(); ++k) {
    const auto cfg = pot.configuration(k);
    std::vector<int> parent_states;
    for (int pos : parent_pos) parent_states.push_back(cfg[pos]);
    const std::size_t row = net.parent_config_index(v, parent_states);
    if (node.is_discrete()) {
      const double prob = node.spec.cpt.at(row).at(cfg[pot.discrete_position(v)]);
      pot[k].g = prob > 0.0 ? std::log(prob) : kLogZero;
      continue;
    }
    const ClgBlock& b = node.spec.clg.at(row);
    const double var = std::max(b.variance, kVarianceFloor);
    Eigen::VectorXd c = Eigen::VectorXd::Zero(static_cast<Eigen::Index>(cvars.size()));
    c[pot.continuous_position(v)] = 1.0;
    for (std::size_t j = 0; j < node.continuous_parents.size(); ++j)
      c[pot.continuous_position(node.continuous_parents[j])] -= b.coefficients.at(j);
    pot[k].K = c * c.transpose() / var;
    pot[k].h = c * (b.intercept / var);
    pot[k].g = -0.5 * b.intercept * b.intercept / var - 0.5 * std::log(2.0 * std::numbers::pi * var);
  }
  return pot;
}

const CGPotential& CalibratedTree::belief(std::size_t c) const {
  if (!current_.at(c)) throw ArgumentError(fmt::format("clique {} is stale after a branch update", c));
  return *belief_[c];
}

namespace {

double normalize_root(CGPotential& root) {
  const double log_z = root.total_log_mass();
  if (!(log_z > kLogZero) || std::isnan(log_z)) throw InconsistentEvidence("evidence has zero likelihood under the model");
  root.shift_log(-log_z);
  return log_z;
}

}  // namespace

CalibratedTree propagate(std::shared_ptr<const CliqueTree> treep, const Evidence& e) {
  const CliqueTree& tree = *treep;
  const Network& net = *tree.network();
  check_evidence(net, e);
  const std::size_t m = tree.size();

  CalibratedTree out;
  out.tree_ = treep;
  out.evidence_ = e;
  out.initial_.resize(m);
  out.upward_.resize(m);
  out.belief_.resize(m);
  out.current_.assign(m, 1);

  std::vector<CGPotential> work(m);
  for (std::size_t c = 0; c < m; ++c) {
    CGPotential p(discrete_domain(net, tree.clique(c), e), continuous_domain(net, tree.clique(c), e));
    for (NodeId v : tree.assigned(c)) p = multiply(p, reduce_evidence(cpd_potential(net, v), e));
    out.initial_[c] = std::make_shared<const CGPotential>(p);
    work[c] = std::move(p);
  }

  const auto pre = tree.preorder();
  for (auto it = pre.rbegin(); it != pre.rend(); ++it) {
    const int c = *it;
    if (c == tree.root()) continue;
    CGPotential msg = marginalize_to(work[c], tree.separator(c));
    work[tree.parent(c)] = multiply(work[tree.parent(c)], msg);
    out.upward_[c] = std::make_shared<const CGPotential>(std::move(msg));
  }
  out.log_likelihood_ = normalize_root(work[tree.root()]);
  for (int c : pre) {
    if (c == tree.root()) continue;
    const CGPotential fresh = marginalize_to(work[tree.parent(c)], tree.separator(c));
    work[c] = multiply(work[c], divide(fresh, *out.upward_[c]));
  }
  for (std::size_t c = 0; c < m; ++c) out.belief_[c] = std::make_shared<const CGPotential>(std::move(work[c]));
  return out;
}

std::vector<int> branch_spanning(const CliqueTree& tree, const std::vector<int>& cliques) {
  std::vector<char> in(tree.size(), 0);
  in[tree.root()] = 1;
  for (int c : cliques) {
    for (int x = c; x >= 0 && !in[x]; x = tree.parent(x)) in[x] = 1;
  }
  std::vector<int> out;
  for (std::size_t c = 0; c < tree.size(); ++c)
    if (in[c]) out.push_back(static_cast<int>(c));
  return out;
}

CalibratedTree branch_repropagate(const CalibratedTree& state, const std::vector<int>& branch, const Evidence& delta) {
  const CliqueTree& tree = state.tree();
  const Network& net = *tree.network();
  const std::size_t m = tree.size();

  std::vector<char> in(m, 0);
  for (int c : branch) {
    if (c < 0 || static_cast<std::size_t>(c) >= m) throw ArgumentError(fmt::format("clique {} does not exist", c));
    in[c] = 1;
  }
  if (!in[tree.root()]) throw ArgumentError("branch must contain the strong root");
  for (int c : branch)
    if (c != tree.root() && !in[tree.parent(c)]) throw ArgumentError("branch is not connected to the root");

  const Evidence merged = state.evidence_.merged(delta);
  check_evidence(net, merged);
  for (const auto& [v, s] : delta.discrete) {
    bool covered = false;
    for (int c : tree.cliques_containing(v)) covered = covered || in[c];
    if (!covered) throw ArgumentError(fmt::format("branch does not cover evidence on '{}'", net.label(v)));
  }
  for (const auto& [v, x] : delta.continuous) {
    const auto holders = tree.cliques_containing(v);
    for (int c : holders)
      if (!in[c]) throw ArgumentError(fmt::format("continuous evidence on '{}' reaches outside the branch", net.label(v)));
  }

  CalibratedTree out = state;
  out.evidence_ = merged;
  std::vector<CGPotential> work(m);
  for (int c : branch) {
    CGPotential p = reduce_evidence(*state.initial_[c], merged);
    out.initial_[c] = std::make_shared<const CGPotential>(p);
    for (int k : tree.children(c))
      if (!in[k]) p = multiply(p, reduce_evidence(*state.upward_[k], merged));
    work[c] = std::move(p);
  }

  const auto pre = tree.preorder();
  std::vector<int> order;
  for (int c : pre)
    if (in[c]) order.push_back(c);
  for (auto it = order.rbegin(); it != order.rend(); ++it) {
    const int c = *it;
    if (c == tree.root()) continue;
    CGPotential msg = marginalize_to(work[c], tree.separator(c));
    work[tree.parent(c)] = multiply(work[tree.parent(c)], msg);
    out.upward_[c] = std::make_shared<const CGPotential>(std::move(msg));
  }
  out.log_likelihood_ = normalize_root(work[tree.root()]);
  for (int c : order) {
    if (c == tree.root()) continue;
    const CGPotential fresh = marginalize_to(work[tree.parent(c)], tree.separator(c));
    work[c] = multiply(work[c], divide(fresh, *out.upward_[c]));
  }
  for (std::size_t c = 0; c < m; ++c) {
    if (in[c]) {
      out.belief_[c] = std::make_shared<const CGPotential>(std::move(work[c]));
      out.current_[c] = 1;
    } else {
      out.current_[c] = 0;
    }
  }
  return out;
}

namespace {

int current_clique_for(const CalibratedTree& t, const std::vector<NodeId>& vars) {
  std::vector<NodeId> sorted = vars;
  std::sort(sorted.begin(), sorted.end());
  const auto& tree = t.tree();
  int best = -1;
  for (std::size_t c = 0; c < tree.size(); ++c) {
    if (!t.is_current(c) || !subset(sorted, tree.clique(c))) continue;
    if (best < 0 || tree.clique(c).size() < tree.clique(best).size()) best = static_cast<int>(c);
  }
  return best;
}

}  // namespace

NodeMarginal node_marginal(const CalibratedTree& t, NodeId x) {
  const Network& net = *t.tree().network();
  const Node& node = net.node(x);
  const Evidence& e = t.evidence();
  if (node.is_discrete()) {
    std::vector<double> probs(static_cast<std::size_t>(net.cardinality(x)), 0.0);
    if (auto it = e.discrete.find(x); it != e.discrete.end()) {
      probs[it->second] = 1.0;
      return probs;
    }
    const int c = current_clique_for(t, {x});
    if (c < 0) throw ArgumentError(fmt::format("no current clique holds '{}'", node.label()));
    const CGPotential m = marginalize_to(t.belief(c), {x});
    std::vector<double> logs(m.size());
    double max = kLogZero;
    for (std::size_t k = 0; k < m.size(); ++k) max = std::max(max, logs[k] = m[k].g);
    double sum = 0.0;
    for (std::size_t k = 0; k < m.size(); ++k) sum += (probs[k] = max == kLogZero ? 0.0 : std::exp(logs[k] - max));
    for (auto& p : probs) p /= sum;
    return probs;
  }
  if (auto it = e.continuous.find(x); it != e.continuous.end()) {
    MomentSummary s;
    s.weight = 1.0;
    s.mean = Eigen::VectorXd::Constant(1, it->second);
    s.covariance = Eigen::MatrixXd::Zero(1, 1);
    return s;
  }
  return joint_moments(t, {x});
}

MomentSummary joint_moments(const CalibratedTree& t, const std::vector<NodeId>& vars) {
  const Network& net = *t.tree().network();
  for (NodeId v : vars) {
    if (!net.node(v).is_continuous()) throw ArgumentError(fmt::format("'{}' is not continuous", net.label(v)));
    if (t.evidence().observes(v)) throw ArgumentError(fmt::format("'{}' is observed", net.label(v)));
  }
  const int c = current_clique_for(t, vars);
  if (c < 0) throw ArgumentError("no current clique holds all requested variables");
  const CGPotential m = marginalize_to(t.belief(c), vars);
  const MomentForm f = m.moments(0);
  // order the result as requested
  MomentSummary s;
  s.weight = std::exp(f.log_weight);
  const auto n = static_cast<Eigen::Index>(vars.size());
  s.mean.resize(n);
  s.covariance.resize(n, n);
  for (Eigen::Index i = 0; i < n; ++i) {
    const int pi = m.continuous_position(vars[i]);
    s.mean[i] = f.mean[pi];
    for (Eigen::Index j = 0; j < n; ++j) s.covariance(i, j) = f.covariance(pi, m.continuous_position(vars[j]));
  }
  return s;
}

}  // namespace cgbn
