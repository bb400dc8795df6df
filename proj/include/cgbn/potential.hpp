#pragma once

#include <cstddef>
#include <limits>
#include <vector>

#include <Eigen/Dense>

#include "cgbn/model.hpp"

namespace cgbn {

/// Configurations whose log-weight falls this far below the table maximum are void.
inline constexpr double kVoidLogGap = 70.0;

inline constexpr double kLogZero = -std::numeric_limits<double>::infinity();

struct DiscreteVar {
  NodeId id = kNoNode;
  int cardinality = 0;
  bool operator==(const DiscreteVar&) const = default;
};

/// exp(g + h'x - x'Kx/2) over the continuous variables of one configuration.
/// g = -inf marks a void (zero-weight) configuration.
struct CanonicalForm {
  double g = 0.0;
  Eigen::VectorXd h;
  Eigen::MatrixXd K;

  bool is_void() const { return g == kLogZero; }
};

/// Weight, mean and covariance of one configuration, weight kept in log space.
struct MomentForm {
  double log_weight = kLogZero;
  Eigen::VectorXd mean;
  Eigen::MatrixXd covariance;

  bool is_void() const { return log_weight == kLogZero; }
};

struct MomentSummary {
  double weight = 0.0;
  Eigen::VectorXd mean;
  Eigen::MatrixXd covariance;
};

/// Conditional Gaussian potential: one canonical form per configuration of the
/// discrete variables. Variables are kept sorted by node id; configurations are
/// indexed mixed-radix with the last discrete variable fastest.
class CGPotential {
 public:
  /// The scalar unit potential.
  CGPotential();

  /// Unit potential (g = 0, h = 0, K = 0) over the given domain.
  CGPotential(std::vector<DiscreteVar> discrete, std::vector<NodeId> continuous);

  static CGPotential from_moments(std::vector<DiscreteVar> discrete, std::vector<NodeId> continuous,
                                  const std::vector<MomentForm>& table);

  const std::vector<DiscreteVar>& discrete_vars() const { return discrete_; }
  const std::vector<NodeId>& continuous_vars() const { return continuous_; }
  std::size_t size() const { return table_.size(); }
  std::size_t dimension() const { return continuous_.size(); }

  const CanonicalForm& operator[](std::size_t i) const { return table_[i]; }
  CanonicalForm& operator[](std::size_t i) { return table_[i]; }

  std::vector<int> configuration(std::size_t index) const;
  std::size_t index_of(const std::vector<int>& configuration) const;

  int discrete_position(NodeId id) const;
  int continuous_position(NodeId id) const;
  bool has_discrete(NodeId id) const { return discrete_position(id) >= 0; }
  bool has_continuous(NodeId id) const { return continuous_position(id) >= 0; }

  /// Moment form of configuration i. Throws NumericalError when K is not
  /// positive definite even after adding the variance floor to its diagonal.
  MomentForm moments(std::size_t i) const;

  /// log of the integral of configuration i over the continuous variables.
  double log_mass(std::size_t i) const;

  /// log of the total mass (sum over configurations of log_mass).
  double total_log_mass() const;

  /// Adds `offset` to every non-void g.
  void shift_log(double offset);

 private:
  std::vector<DiscreteVar> discrete_;
  std::vector<NodeId> continuous_;
  std::vector<CanonicalForm> table_;
};

/// Re-expresses `p` over a larger domain. New continuous variables enter with
/// zero rows in h and K; new discrete variables replicate the table.
CGPotential extend(const CGPotential& p, const std::vector<DiscreteVar>& discrete,
                   const std::vector<NodeId>& continuous);

/// Canonical characteristics add. 0 * x = 0.
CGPotential multiply(const CGPotential& a, const CGPotential& b);

/// Canonical characteristics subtract. 0 / 0 = 0; x / 0 with x nonzero throws
/// UndefinedDivision.
CGPotential divide(const CGPotential& a, const CGPotential& b);

/// Slices observed discrete variables and substitutes observed continuous
/// values. Observations on variables outside the domain are ignored.
CGPotential reduce_evidence(const CGPotential& p, const Evidence& e);

/// Exact integral over the listed continuous variables.
CGPotential marginalize_continuous(const CGPotential& p, const std::vector<NodeId>& vars);

/// Sums the listed discrete variables out. With continuous variables present
/// the collapsed configurations are replaced by their moment-matched Gaussian.
CGPotential marginalize_discrete_weak(const CGPotential& p, const std::vector<NodeId>& vars);

/// Integrates every continuous variable not kept, then weakly sums every
/// discrete variable not kept.
CGPotential marginalize_to(const CGPotential& p, const std::vector<NodeId>& keep);

}  // namespace cgbn
