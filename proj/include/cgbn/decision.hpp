#pragma once

#include <string_view>

#include "cgbn/mixture.hpp"

namespace cgbn {

enum class Action { accept, divert };

std::string_view to_string(Action a);

/// Two-point loss: diverting costs lambda0 whatever the contamination;
/// accepting costs lambda1 when the true contamination exceeds c_hat.
struct Policy {
  double c_hat = 0.0;    // rejection threshold, log-contamination units
  double lambda0 = 1.0;  // divert cost
  double lambda1 = 1.0;  // cost of accepting contaminated soil

  /// Throws ArgumentError unless lambda0 >= 0, lambda1 > 0 and all are finite.
  void check() const;
  double threshold() const { return lambda0 / lambda1; }
  bool operator==(const Policy&) const = default;
};

/// Standard normal upper tail Q(z) = P(N(0,1) > z).
double normal_survival(double z);

/// P(c > c_hat) under a univariate mixture.
double tail_prob(const GaussianMixture& m, double c_hat);

double expected_loss(Action a, const GaussianMixture& m, const Policy& p);
double expected_loss(Action a, double tail, const Policy& p);

/// Divert iff the tail probability strictly exceeds lambda0 / lambda1.
Action decide(const GaussianMixture& m, const Policy& p);
Action decide(double tail, const Policy& p);

}  // namespace cgbn
