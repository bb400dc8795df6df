#include "oracle.hpp"

#include <algorithm>
#include <cmath>
#include <map>
#include <numbers>
#include <string>

namespace oracle {

using namespace cgbn;

Network random_network(std::mt19937_64& rng, const RandomNetSpec& spec) {
  std::uniform_int_distribution<int> nd(spec.min_discrete, spec.max_discrete);
  std::uniform_int_distribution<int> nc(spec.min_continuous, spec.max_continuous);
  std::uniform_int_distribution<int> card(2, spec.max_states);
  std::uniform_real_distribution<double> u01(0.0, 1.0);
  const int n_disc = nd(rng);
  int n_cont = nc(rng);
  if (n_disc + n_cont == 0) n_cont = 1;

  std::vector<NodeSpec> specs;
  std::vector<int> cards;
  for (int i = 0; i < n_disc; ++i) {
    NodeSpec s;
    s.label = "D" + std::to_string(i);
    s.kind = NodeKind::discrete;
    const int k = card(rng);
    for (int j = 0; j < k; ++j) s.states.push_back("s" + std::to_string(j));
    int configs = 1;
    for (int p = 0; p < i; ++p)
      if (static_cast<int>(s.parents.size()) < spec.max_parents && u01(rng) < spec.edge_prob) {
        s.parents.push_back(specs[p].label);
        configs *= cards[p];
      }
    for (int c = 0; c < configs; ++c) {
      std::vector<double> row(k);
      double sum = 0.0;
      for (auto& x : row) sum += (x = 0.05 + 0.95 * u01(rng));
      for (auto& x : row) x /= sum;
      s.cpt.push_back(row);
    }
    cards.push_back(k);
    specs.push_back(std::move(s));
  }
  for (int i = 0; i < n_cont; ++i) {
    NodeSpec s;
    s.label = "X" + std::to_string(i);
    s.kind = NodeKind::continuous;
    int configs = 1, cont_parents = 0;
    for (int p = 0; p < n_disc; ++p)
      if (static_cast<int>(s.parents.size()) < spec.max_parents && u01(rng) < spec.edge_prob * 0.7) {
        s.parents.push_back(specs[p].label);
        configs *= cards[p];
      }
    for (int p = 0; p < i; ++p)
      if (static_cast<int>(s.parents.size()) < spec.max_parents && u01(rng) < spec.edge_prob) {
        s.parents.push_back("X" + std::to_string(p));
        ++cont_parents;
      }
    for (int c = 0; c < configs; ++c) {
      ClgBlock b;
      b.intercept = -3.0 + 6.0 * u01(rng);
      for (int k = 0; k < cont_parents; ++k) b.coefficients.push_back(-1.5 + 3.0 * u01(rng));
      b.variance = 0.2 + 1.8 * u01(rng);
      s.clg.push_back(b);
    }
    specs.push_back(std::move(s));
  }
  return Network(std::move(specs));
}

namespace {

std::size_t parent_config(const Network& net, NodeId v, const std::vector<int>& states) {
  std::size_t idx = 0;
  for (NodeId p : net.node(v).discrete_parents) idx = idx * net.node(p).spec.states.size() + states[p];
  return idx;
}

}  // namespace

Sample ancestral_sample(const Network& net, std::mt19937_64& rng) {
  Sample s;
  s.states.assign(net.size(), -1);
  s.values.assign(net.size(), 0.0);
  std::uniform_real_distribution<double> u01(0.0, 1.0);
  std::normal_distribution<double> n01(0.0, 1.0);
  // Labels are generated in topological order by random_network; the
  // fixture is also declared parents-first.
  for (NodeId v = 0; v < static_cast<NodeId>(net.size()); ++v) {
    const auto& n = net.node(v);
    const std::size_t cfg = parent_config(net, v, s.states);
    if (n.is_discrete()) {
      const auto& row = n.spec.cpt[cfg];
      double u = u01(rng), acc = 0.0;
      int st = static_cast<int>(row.size()) - 1;
      for (std::size_t k = 0; k < row.size(); ++k) {
        acc += row[k];
        if (u < acc) {
          st = static_cast<int>(k);
          break;
        }
      }
      s.states[v] = st;
    } else {
      const auto& b = n.spec.clg[cfg];
      double m = b.intercept;
      for (std::size_t k = 0; k < n.continuous_parents.size(); ++k) m += b.coefficients[k] * s.values[n.continuous_parents[k]];
      s.values[v] = m + std::sqrt(b.variance) * n01(rng);
    }
  }
  return s;
}

Evidence random_evidence(const Network& net, std::mt19937_64& rng, double p) {
  const Sample s = ancestral_sample(net, rng);
  std::bernoulli_distribution pick(p);
  Evidence e;
  for (NodeId v = 0; v < static_cast<NodeId>(net.size()); ++v) {
    if (!pick(rng)) continue;
    if (net.node(v).is_discrete())
      e.discrete[v] = s.states[v];
    else
      e.continuous[v] = s.values[v];
  }
  return e;
}

Moments joint_gaussian(const Network& net, const std::vector<int>& states) {
  // x = a + B x + noise over continuous nodes in declaration order
  std::vector<NodeId> cont;
  std::map<NodeId, int> pos;
  for (NodeId v = 0; v < static_cast<NodeId>(net.size()); ++v)
    if (net.node(v).is_continuous()) {
      pos[v] = static_cast<int>(cont.size());
      cont.push_back(v);
    }
  const auto n = static_cast<Eigen::Index>(cont.size());
  Eigen::MatrixXd B = Eigen::MatrixXd::Zero(n, n);
  Eigen::VectorXd a(n), d(n);
  for (Eigen::Index i = 0; i < n; ++i) {
    const auto& node = net.node(cont[i]);
    const auto& b = node.spec.clg[parent_config(net, cont[i], states)];
    a[i] = b.intercept;
    d[i] = b.variance;
    for (std::size_t k = 0; k < node.continuous_parents.size(); ++k) B(i, pos[node.continuous_parents[k]]) = b.coefficients[k];
  }
  const Eigen::MatrixXd A = (Eigen::MatrixXd::Identity(n, n) - B).inverse();
  return {A * a, A * d.asDiagonal() * A.transpose()};
}

Posterior enumerate(const Network& net, const Evidence& z) {
  std::vector<NodeId> disc, cont, obs, free;
  for (NodeId v = 0; v < static_cast<NodeId>(net.size()); ++v) {
    if (net.node(v).is_discrete()) {
      disc.push_back(v);
    } else {
      (z.continuous.count(v) ? obs : free).push_back(v);
      cont.push_back(v);
    }
  }
  auto cpos = [&](NodeId v) {
    return static_cast<Eigen::Index>(std::find(cont.begin(), cont.end(), v) - cont.begin());
  };

  Posterior post;
  std::vector<int> states(net.size(), -1);
  std::vector<double> logs;
  for (NodeId v : disc) states[v] = 0;
  while (true) {
    bool consistent = true;
    for (auto [v, s] : z.discrete) consistent = consistent && states[v] == s;
    if (consistent) {
      double lp = 0.0;
      for (NodeId v : disc) lp += std::log(net.node(v).spec.cpt[parent_config(net, v, states)][states[v]]);
      const Moments g = joint_gaussian(net, states);
      Config c;
      c.states = states;
      c.free = free;
      const auto no = static_cast<Eigen::Index>(obs.size()), nf = static_cast<Eigen::Index>(free.size());
      Eigen::VectorXd mo(no), xo(no), mf(nf);
      Eigen::MatrixXd Soo(no, no), Sfo(nf, no), Sff(nf, nf);
      for (Eigen::Index i = 0; i < no; ++i) {
        mo[i] = g.mean[cpos(obs[i])];
        xo[i] = z.continuous.at(obs[i]);
        for (Eigen::Index j = 0; j < no; ++j) Soo(i, j) = g.covariance(cpos(obs[i]), cpos(obs[j]));
      }
      for (Eigen::Index i = 0; i < nf; ++i) {
        mf[i] = g.mean[cpos(free[i])];
        for (Eigen::Index j = 0; j < no; ++j) Sfo(i, j) = g.covariance(cpos(free[i]), cpos(obs[j]));
        for (Eigen::Index j = 0; j < nf; ++j) Sff(i, j) = g.covariance(cpos(free[i]), cpos(free[j]));
      }
      if (no > 0) {
        const Eigen::LDLT<Eigen::MatrixXd> ldlt(Soo);
        const Eigen::VectorXd r = xo - mo;
        const double logdet = ldlt.vectorD().array().log().sum();
        lp += -0.5 * (static_cast<double>(no) * std::log(2.0 * std::numbers::pi) + logdet + r.dot(ldlt.solve(r)));
        c.mean = mf + Sfo * ldlt.solve(r);
        c.covariance = Sff - Sfo * ldlt.solve(Sfo.transpose());
      } else {
        c.mean = mf;
        c.covariance = Sff;
      }
      c.log_weight = lp;
      logs.push_back(lp);
      post.configs.push_back(std::move(c));
    }
    // odometer, last discrete node fastest
    int k = static_cast<int>(disc.size()) - 1;
    while (k >= 0 && ++states[disc[k]] == net.cardinality(disc[k])) states[disc[k--]] = 0;
    if (k < 0) break;
  }
  const double m = *std::max_element(logs.begin(), logs.end());
  double s = 0.0;
  for (double l : logs) s += std::exp(l - m);
  post.log_likelihood = m + std::log(s);
  for (auto& c : post.configs) c.log_weight -= post.log_likelihood;
  return post;
}

std::vector<double> discrete_marginal(const Network& net, const Posterior& post, NodeId d) {
  std::vector<double> p(static_cast<std::size_t>(net.cardinality(d)), 0.0);
  for (const auto& c : post.configs) p[c.states[d]] += std::exp(c.log_weight);
  return p;
}

Moments config_moments(const Config& c, const std::vector<NodeId>& vars) {
  const auto n = static_cast<Eigen::Index>(vars.size());
  Moments m{Eigen::VectorXd(n), Eigen::MatrixXd(n, n)};
  std::vector<Eigen::Index> idx;
  for (NodeId v : vars) idx.push_back(std::find(c.free.begin(), c.free.end(), v) - c.free.begin());
  for (Eigen::Index i = 0; i < n; ++i) {
    m.mean[i] = c.mean[idx[i]];
    for (Eigen::Index j = 0; j < n; ++j) m.covariance(i, j) = c.covariance(idx[i], idx[j]);
  }
  return m;
}

namespace {

Moments mix(const std::vector<std::pair<double, Moments>>& parts) {
  double total = 0.0;
  for (const auto& [w, m] : parts) total += w;
  const auto n = parts.front().second.mean.size();
  Moments out{Eigen::VectorXd::Zero(n), Eigen::MatrixXd::Zero(n, n)};
  for (const auto& [w, m] : parts) out.mean += (w / total) * m.mean;
  for (const auto& [w, m] : parts) {
    const Eigen::VectorXd d = m.mean - out.mean;
    out.covariance += (w / total) * (m.covariance + d * d.transpose());
  }
  return out;
}

}  // namespace

Moments posterior_moments(const Posterior& post, const std::vector<NodeId>& vars) {
  std::vector<std::pair<double, Moments>> parts;
  for (const auto& c : post.configs) parts.emplace_back(std::exp(c.log_weight), config_moments(c, vars));
  return mix(parts);
}

std::vector<Group> group_by(const Posterior& post, const std::vector<NodeId>& sources, const std::vector<NodeId>& vars) {
  std::map<std::vector<int>, std::vector<const Config*>> groups;
  for (const auto& c : post.configs) {
    std::vector<int> key;
    for (NodeId d : sources) key.push_back(c.states[d]);
    groups[key].push_back(&c);
  }
  std::vector<Group> out;
  double max_log = -INFINITY;
  std::vector<double> logs;
  for (const auto& [key, members] : groups) {
    double m = -INFINITY;
    for (const auto* c : members) m = std::max(m, c->log_weight);
    double s = 0.0;
    for (const auto* c : members) s += std::exp(c->log_weight - m);
    logs.push_back(m + std::log(s));
    max_log = std::max(max_log, logs.back());
  }
  double kept = 0.0;
  std::size_t i = 0;
  for (const auto& [key, members] : groups) {
    const double lw = logs[i++];
    if (lw < max_log - 70.0) continue;
    Group g;
    g.source = key;
    g.weight = std::exp(lw);
    std::vector<std::pair<double, Moments>> parts;
    for (const auto* c : members) parts.emplace_back(std::exp(c->log_weight - lw), config_moments(*c, vars));
    g.moments = mix(parts);
    for (const auto& [w, m] : parts) {
      if (w < 1e-300) continue;
      g.spread = std::max({g.spread, (m.mean - g.moments.mean).cwiseAbs().maxCoeff(),
                           (m.covariance - g.moments.covariance).cwiseAbs().maxCoeff()});
    }
    kept += g.weight;
    out.push_back(std::move(g));
  }
  for (auto& g : out) g.weight /= kept;
  return out;
}

}  // namespace oracle

namespace oracle {

std::string compare_mixture(const cgbn::GaussianMixture& m, const Posterior& post, double tol) {
  auto rel_w = [&](double a, double b) { return std::abs(a - b) <= tol * std::max(std::abs(a), std::abs(b)) + 1e-12; };
  auto rel_v = [&](double a, double b) { return std::abs(a - b) <= tol * std::max({1.0, std::abs(a), std::abs(b)}); };
  const auto groups = group_by(post, m.sources, m.variables);
  if (groups.size() != m.components.size())
    return "component count " + std::to_string(m.components.size()) + " vs oracle " + std::to_string(groups.size());
  for (std::size_t k = 0; k < groups.size(); ++k) {
    const auto& g = groups[k];
    const auto& c = m.components[k];
    if (c.source != g.source) return "component " + std::to_string(k) + " has a different source configuration";
    if (g.spread > 1e-8) return "sources do not determine the target Gaussian (spread " + std::to_string(g.spread) + ")";
    if (!rel_w(c.weight, g.weight))
      return "weight " + std::to_string(c.weight) + " vs " + std::to_string(g.weight) + " at component " + std::to_string(k);
    for (Eigen::Index i = 0; i < c.mean.size(); ++i) {
      if (!rel_v(c.mean[i], g.moments.mean[i]))
        return "mean " + std::to_string(c.mean[i]) + " vs " + std::to_string(g.moments.mean[i]);
      for (Eigen::Index j = 0; j < c.mean.size(); ++j)
        if (!rel_v(c.covariance(i, j), g.moments.covariance(i, j)))
          return "covariance " + std::to_string(c.covariance(i, j)) + " vs " + std::to_string(g.moments.covariance(i, j));
    }
  }
  return {};
}

}  // namespace oracle
