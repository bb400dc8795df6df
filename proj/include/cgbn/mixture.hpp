#pragma once

#include <cstddef>
#include <vector>

#include <Eigen/Dense>

#include "cgbn/inference.hpp"
#include "cgbn/model.hpp"

namespace cgbn {

struct MixtureComponent {
  double weight = 0.0;
  Eigen::VectorXd mean;
  Eigen::MatrixXd covariance;
  /// State of each source node (GaussianMixture::sources) that produced it.
  std::vector<int> source;
};

/// Weighted Gaussian components over `variables`. One variable gives the
/// univariate posterior of a node; two give the joint plotted as ellipses.
struct GaussianMixture {
  std::vector<NodeId> variables;
  std::vector<NodeId> sources;
  std::vector<MixtureComponent> components;

  std::size_t dimension() const { return variables.size(); }
  double total_weight() const;
};

struct Gaussian {
  Eigen::VectorXd mean;
  Eigen::MatrixXd covariance;
};

struct MixtureOptions {
  /// Maximum number of source configurations to enumerate.
  std::size_t capacity = 1'000'000;
  /// Re-propagate only the branch between the root and the sources (the
  /// default); false re-runs full propagation at every step for cross-checks.
  bool use_branch = true;
};

/// Exact posterior of continuous `x` given `z`: one component per non-void
/// configuration of its mixture sources, in lexicographic order.
GaussianMixture exact_mixture(const Network& net, NodeId x, const Evidence& z, const MixtureOptions& opt = {});
GaussianMixture exact_mixture(std::shared_ptr<const CliqueTree> tree, NodeId x, const Evidence& z,
                              const MixtureOptions& opt = {});

/// Exact joint posterior of several continuous nodes.
GaussianMixture exact_joint_mixture(const Network& net, const std::vector<NodeId>& xs, const Evidence& z,
                                    const MixtureOptions& opt = {});
/// `tree` must have been built with `xs` forced into one clique.
GaussianMixture exact_joint_mixture(std::shared_ptr<const CliqueTree> tree, const std::vector<NodeId>& xs,
                                    const Evidence& z, const MixtureOptions& opt = {});

/// Gaussian with the mixture's mean and covariance (law of total covariance).
Gaussian moment_match(const GaussianMixture& m);

/// Mixture density at a point.
double mixture_log_density(const GaussianMixture& m, const Eigen::VectorXd& x);
double gaussian_log_density(const Gaussian& g, const Eigen::VectorXd& x);

/// KL(m || g) by adaptive quadrature, 1-D or 2-D, absolute tolerance ~1e-4.
double kl_mixture_to_gaussian(const GaussianMixture& m, const Gaussian& g);

struct Ellipse {
  Eigen::Vector2d center;
  double major = 0.0;  // semi-axis lengths
  double minor = 0.0;
  double angle = 0.0;  // radians, major axis from the x axis, in (-pi/2, pi/2]
};

/// Probability-`coverage` ellipse of a bivariate Gaussian.
Ellipse ellipse_params(const Eigen::Vector2d& mean, const Eigen::Matrix2d& covariance, double coverage = 0.95);

/// Chi-square (2 degrees of freedom) quantile.
double chi_square2_quantile(double p);

}  // namespace cgbn
