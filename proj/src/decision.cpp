#include "cgbn/decision.hpp"

#include <cmath>
#include <numbers>

#include "cgbn/errors.hpp"

namespace cgbn {

std::string_view to_string(Action a) { return a == Action::divert ? "divert" : "accept"; }

void Policy::check() const {
  if (!std::isfinite(c_hat) || !std::isfinite(lambda0) || !std::isfinite(lambda1))
    throw ArgumentError("policy values must be finite");
  if (lambda0 < 0.0) throw ArgumentError("lambda0 must be non-negative");
  if (lambda1 <= 0.0) throw ArgumentError("lambda1 must be positive");
}

namespace {

// phi(z)/z * (1 - 1/z^2 + 3/z^4 - 15/z^6 + ...), summed while terms shrink.
double survival_asymptotic(double z) {
  const double phi = std::exp(-0.5 * z * z) / std::sqrt(2.0 * std::numbers::pi);
  const double inv = 1.0 / (z * z);
  double term = 1.0, sum = 1.0;
  for (int k = 1; k < 60; ++k) {
    const double next = -term * (2 * k - 1) * inv;
    if (std::abs(next) >= std::abs(term)) break;
    term = next;
    sum += term;
    if (std::abs(term) < 1e-17 * std::abs(sum)) break;
  }
  return phi / z * sum;
}

}  // namespace

double normal_survival(double z) {
  if (std::isnan(z)) return z;
  if (z > 8.0) return survival_asymptotic(z);
  if (z < -8.0) return 1.0 - survival_asymptotic(-z);
  return 0.5 * std::erfc(z / std::numbers::sqrt2);
}

double tail_prob(const GaussianMixture& m, double c_hat) {
  if (m.dimension() != 1) throw ArgumentError("tail_prob needs a univariate mixture");
  double p = 0.0, total = 0.0;
  for (const auto& c : m.components) {
    const double sd = std::sqrt(c.covariance(0, 0));
    p += c.weight * normal_survival((c_hat - c.mean[0]) / sd);
    total += c.weight;
  }
  if (total <= 0.0) throw ArgumentError("mixture has no weight");
  return std::clamp(p / total, 0.0, 1.0);
}

double expected_loss(Action a, double tail, const Policy& p) {
  return a == Action::divert ? p.lambda0 : p.lambda1 * tail;
}

double expected_loss(Action a, const GaussianMixture& m, const Policy& p) {
  return a == Action::divert ? p.lambda0 : expected_loss(a, tail_prob(m, p.c_hat), p);
}

Action decide(double tail, const Policy& p) { return tail > p.lambda0 / p.lambda1 ? Action::divert : Action::accept; }

Action decide(const GaussianMixture& m, const Policy& p) { return decide(tail_prob(m, p.c_hat), p); }

}  // namespace cgbn
