#include "cgbn/mixture.hpp"

#include <algorithm>
#include <cmath>
#include <functional>
#include <numbers>

#include <boost/math/quadrature/gauss_kronrod.hpp>
#include <fmt/format.h>

#include "cgbn/errors.hpp"

namespace cgbn {

double GaussianMixture::total_weight() const {
  double s = 0.0;
  for (const auto& c : components) s += c.weight;
  return s;
}

namespace {

struct Enumerator {
  const CliqueTree& tree;
  std::shared_ptr<const CliqueTree> tree_ptr;
  const std::vector<NodeId>& targets;
  const Evidence& base_evidence;
  const MixtureOptions& opt;
  std::vector<NodeId> recurse;  // unobserved sources, ascending
  std::vector<int> branch;
  double log_cut = 0.0;

  struct Leaf {
    double log_weight;
    std::vector<int> states;
    MomentSummary moments;
  };
  std::vector<Leaf> leaves;
  std::vector<int> states;

  void run(const CalibratedTree& state, std::size_t depth, double log_pi) {
    if (depth == recurse.size()) {
      leaves.push_back({log_pi, states, joint_moments(state, targets)});
      return;
    }
    const NodeId v = recurse[depth];
    const auto probs = std::get<std::vector<double>>(node_marginal(state, v));
    for (int s = 0; s < static_cast<int>(probs.size()); ++s) {
      if (!(probs[s] > 0.0)) continue;
      const double lp = log_pi + std::log(probs[s]);
      if (lp < log_cut) continue;
      Evidence step;
      step.discrete[v] = s;
      states.push_back(s);
      if (opt.use_branch) {
        run(branch_repropagate(state, branch, step), depth + 1, lp);
      } else {
        run(propagate(tree_ptr, state.evidence().merged(step)), depth + 1, lp);
      }
      states.pop_back();
    }
  }
};

GaussianMixture enumerate(std::shared_ptr<const CliqueTree> treep, const std::vector<NodeId>& xs, const Evidence& z,
                          const MixtureOptions& opt) {
  const CliqueTree& tree = *treep;
  const Network& net = *tree.network();
  if (xs.empty()) throw ArgumentError("no target variables");
  check_evidence(net, z);
  const std::set<NodeId> sources = mixture_sources(net, xs, z);

  Enumerator en{tree, treep, xs, z, opt, {}, {}, 0.0, {}, {}};
  double configs = 1.0;
  for (NodeId d : sources)
    if (!z.observes(d)) {
      en.recurse.push_back(d);
      configs *= net.cardinality(d);
    }
  if (configs > static_cast<double>(opt.capacity))
    throw CapacityError(fmt::format("{} source nodes give {:.0f} configurations, above the cap of {}", en.recurse.size(),
                                    configs, opt.capacity));

  const int target_clique = tree.smallest_clique_containing(xs);
  if (target_clique < 0) throw ArgumentError("targets do not share a clique; build the tree with them together");
  // Grow the root-to-target branch only for sources it does not already hold.
  std::vector<int> anchors{target_clique};
  en.branch = branch_spanning(tree, anchors);
  for (NodeId d : en.recurse) {
    const auto holders = tree.cliques_containing(d);
    const bool held = std::any_of(holders.begin(), holders.end(), [&](int c) {
      return std::find(en.branch.begin(), en.branch.end(), c) != en.branch.end();
    });
    if (held) continue;
    anchors.push_back(tree.smallest_clique_containing({d}));
    en.branch = branch_spanning(tree, anchors);
  }
  // Any partial product below this cannot survive the final void cut, since
  // the largest final weight is at least 1/configs.
  en.log_cut = -kVoidLogGap - std::log(configs);

  en.run(propagate(treep, z), 0, 0.0);

  GaussianMixture out;
  out.variables = xs;
  out.sources.assign(sources.begin(), sources.end());
  double max = kLogZero;
  for (const auto& l : en.leaves) max = std::max(max, l.log_weight);
  double total = 0.0;
  for (const auto& l : en.leaves)
    if (l.log_weight >= max - kVoidLogGap) total += std::exp(l.log_weight - max);
  for (const auto& l : en.leaves) {
    if (l.log_weight < max - kVoidLogGap) continue;
    MixtureComponent c;
    c.weight = std::exp(l.log_weight - max) / total;
    c.mean = l.moments.mean;
    c.covariance = l.moments.covariance;
    for (Eigen::Index i = 0; i < c.covariance.rows(); ++i)
      c.covariance(i, i) = std::max(c.covariance(i, i), kVarianceFloor);
    std::size_t r = 0;
    for (NodeId d : out.sources) {
      if (auto it = z.discrete.find(d); it != z.discrete.end())
        c.source.push_back(it->second);
      else
        c.source.push_back(l.states[r++]);
    }
    out.components.push_back(std::move(c));
  }
  return out;
}

}  // namespace

GaussianMixture exact_mixture(const Network& net, NodeId x, const Evidence& z, const MixtureOptions& opt) {
  return exact_mixture(std::make_shared<const CliqueTree>(build_clique_tree(net)), x, z, opt);
}

GaussianMixture exact_mixture(std::shared_ptr<const CliqueTree> tree, NodeId x, const Evidence& z,
                              const MixtureOptions& opt) {
  return enumerate(std::move(tree), {x}, z, opt);
}

GaussianMixture exact_joint_mixture(const Network& net, const std::vector<NodeId>& xs, const Evidence& z,
                                    const MixtureOptions& opt) {
  return exact_joint_mixture(std::make_shared<const CliqueTree>(build_clique_tree(net, {xs})), xs, z, opt);
}

GaussianMixture exact_joint_mixture(std::shared_ptr<const CliqueTree> tree, const std::vector<NodeId>& xs,
                                    const Evidence& z, const MixtureOptions& opt) {
  return enumerate(std::move(tree), xs, z, opt);
}

Gaussian moment_match(const GaussianMixture& m) {
  const auto n = static_cast<Eigen::Index>(m.dimension());
  Gaussian g{Eigen::VectorXd::Zero(n), Eigen::MatrixXd::Zero(n, n)};
  const double total = m.total_weight();
  for (const auto& c : m.components) g.mean += (c.weight / total) * c.mean;
  for (const auto& c : m.components) {
    const Eigen::VectorXd d = c.mean - g.mean;
    g.covariance += (c.weight / total) * (c.covariance + d * d.transpose());
  }
  return g;
}

namespace {

constexpr double kLog2Pi = 1.8378770664093454835606594728112;

double log_normal(const Eigen::VectorXd& mean, const Eigen::LLT<Eigen::MatrixXd>& llt, const Eigen::VectorXd& x) {
  const Eigen::VectorXd z = llt.matrixL().solve(x - mean);
  double log_det = 0.0;
  for (Eigen::Index i = 0; i < mean.size(); ++i) log_det += 2.0 * std::log(llt.matrixLLT()(i, i));
  return -0.5 * (static_cast<double>(mean.size()) * kLog2Pi + log_det + z.squaredNorm());
}

Eigen::LLT<Eigen::MatrixXd> checked_llt(const Eigen::MatrixXd& cov, const char* what) {
  Eigen::LLT<Eigen::MatrixXd> llt(cov);
  if (llt.info() != Eigen::Success) throw ArgumentError(fmt::format("{} covariance is not positive definite", what));
  return llt;
}

double log_sum_exp(const std::vector<double>& xs) {
  double m = kLogZero;
  for (double x : xs) m = std::max(m, x);
  if (m == kLogZero) return m;
  double s = 0.0;
  for (double x : xs) s += std::exp(x - m);
  return m + std::log(s);
}

}  // namespace

double gaussian_log_density(const Gaussian& g, const Eigen::VectorXd& x) {
  return log_normal(g.mean, checked_llt(g.covariance, "Gaussian"), x);
}

double mixture_log_density(const GaussianMixture& m, const Eigen::VectorXd& x) {
  std::vector<double> terms;
  for (const auto& c : m.components) terms.push_back(std::log(c.weight) + log_normal(c.mean, checked_llt(c.covariance, "component"), x));
  return log_sum_exp(terms);
}

namespace {

using boost::math::quadrature::gauss_kronrod;

// Integral over [lo, hi] split at the given breakpoints.
double integrate_split(const std::function<double(double)>& f, std::vector<double> cuts, double lo, double hi) {
  cuts.push_back(lo);
  cuts.push_back(hi);
  std::sort(cuts.begin(), cuts.end());
  double sum = 0.0;
  double prev = lo;
  for (double c : cuts) {
    if (c <= prev) continue;
    if (c > hi) break;
    sum += gauss_kronrod<double, 31>::integrate(f, prev, c, 12, 1e-10);
    prev = c;
  }
  return sum;
}

std::vector<double> breakpoints(const std::vector<std::pair<double, double>>& centers_sd) {
  std::vector<double> cuts;
  for (auto [mu, sd] : centers_sd)
    for (double k : {-8.0, -3.0, 0.0, 3.0, 8.0}) cuts.push_back(mu + k * sd);
  return cuts;
}

}  // namespace

double kl_mixture_to_gaussian(const GaussianMixture& m, const Gaussian& g) {
  const auto dim = m.dimension();
  if (dim != static_cast<std::size_t>(g.mean.size()) || g.covariance.rows() != g.mean.size())
    throw ArgumentError("mixture and Gaussian dimensions differ");
  if (dim != 1 && dim != 2) throw ArgumentError("KL quadrature supports 1-D and 2-D only");
  const auto g_llt = checked_llt(g.covariance, "Gaussian");
  std::vector<Eigen::LLT<Eigen::MatrixXd>> c_llt;
  std::vector<double> log_w;
  for (const auto& c : m.components) {
    c_llt.push_back(checked_llt(c.covariance, "component"));
    log_w.push_back(std::log(c.weight / m.total_weight()));
  }
  auto integrand = [&](const Eigen::VectorXd& x) {
    std::vector<double> terms(m.components.size());
    for (std::size_t k = 0; k < terms.size(); ++k) terms[k] = log_w[k] + log_normal(m.components[k].mean, c_llt[k], x);
    const double lp = log_sum_exp(terms);
    const double p = std::exp(lp);
    if (p == 0.0) return 0.0;
    return p * (lp - log_normal(g.mean, g_llt, x));
  };

  std::vector<std::pair<double, double>> xs;
  double lo = std::numeric_limits<double>::infinity(), hi = -lo;
  for (const auto& c : m.components) {
    const double sd = std::sqrt(c.covariance(0, 0));
    xs.emplace_back(c.mean[0], sd);
    lo = std::min(lo, c.mean[0] - 12.0 * sd);
    hi = std::max(hi, c.mean[0] + 12.0 * sd);
  }
  if (dim == 1) {
    Eigen::VectorXd x(1);
    return integrate_split([&](double t) { x[0] = t; return integrand(x); }, breakpoints(xs), lo, hi);
  }

  double ylo = std::numeric_limits<double>::infinity(), yhi = -ylo;
  for (const auto& c : m.components) {
    const double sd = std::sqrt(c.covariance(1, 1));
    ylo = std::min(ylo, c.mean[1] - 12.0 * sd);
    yhi = std::max(yhi, c.mean[1] + 12.0 * sd);
  }
  auto inner = [&](double u) {
    // components' conditional location in y at this x
    std::vector<std::pair<double, double>> ys;
    for (const auto& c : m.components) {
      const double sxx = c.covariance(0, 0), sxy = c.covariance(0, 1), syy = c.covariance(1, 1);
      ys.emplace_back(c.mean[1] + sxy / sxx * (u - c.mean[0]), std::sqrt(std::max(syy - sxy * sxy / sxx, kVarianceFloor)));
    }
    Eigen::VectorXd x(2);
    x[0] = u;
    return integrate_split([&](double t) { x[1] = t; return integrand(x); }, breakpoints(ys), ylo, yhi);
  };
  return integrate_split(inner, breakpoints(xs), lo, hi);
}

double chi_square2_quantile(double p) {
  if (!(p > 0.0 && p < 1.0)) throw ArgumentError("coverage must lie in (0, 1)");
  return -2.0 * std::log1p(-p);
}

Ellipse ellipse_params(const Eigen::Vector2d& mean, const Eigen::Matrix2d& cov, double coverage) {
  const double scale = std::max({std::abs(cov(0, 0)), std::abs(cov(1, 1)), 1e-300});
  if (std::abs(cov(0, 1) - cov(1, 0)) > 1e-12 * scale) throw ArgumentError("covariance is not symmetric");
  Eigen::SelfAdjointEigenSolver<Eigen::Matrix2d> es(cov);
  const Eigen::Vector2d lambda = es.eigenvalues();
  if (lambda[0] < -1e-12 * scale) throw ArgumentError("covariance is not positive semi-definite");
  const double q = chi_square2_quantile(coverage);
  Ellipse e;
  e.center = mean;
  e.major = std::sqrt(q * lambda[1]);
  e.minor = std::sqrt(q * std::max(lambda[0], 0.0));
  if (lambda[1] - lambda[0] <= 1e-12 * scale) {
    e.angle = 0.0;
    return e;
  }
  const Eigen::Vector2d v = es.eigenvectors().col(1);
  double a = std::atan2(v[1], v[0]);
  if (a <= -std::numbers::pi / 2) a += std::numbers::pi;
  if (a > std::numbers::pi / 2) a -= std::numbers::pi;
  e.angle = a;
  return e;
}

}  // namespace cgbn
