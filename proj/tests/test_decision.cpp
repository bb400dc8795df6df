#include <random>

#include "doctest.h"

#include "cgbn/decision.hpp"
#include "cgbn/errors.hpp"

using namespace cgbn;

namespace {

GaussianMixture mixture1d(std::vector<std::array<double, 3>> comps) {
  GaussianMixture m;
  m.variables = {0};
  for (auto [w, mu, var] : comps) {
    MixtureComponent c;
    c.weight = w;
    c.mean = Eigen::VectorXd::Constant(1, mu);
    c.covariance = Eigen::MatrixXd::Constant(1, 1, var);
    m.components.push_back(c);
  }
  return m;
}

}  // namespace

TEST_CASE("normal survival function") {
  CHECK(normal_survival(0.0) == 0.5);
  CHECK(normal_survival(1.959963984540054) == doctest::Approx(0.025).epsilon(1e-13));
  CHECK(normal_survival(10.0) == doctest::Approx(7.619853024160527e-24).epsilon(1e-12));
  CHECK(normal_survival(30.0) == doctest::Approx(4.906713927148187e-198).epsilon(1e-10));
  CHECK(normal_survival(-3.0) == doctest::Approx(1.0 - normal_survival(3.0)).epsilon(1e-15));
  double prev = 1.0;
  for (double z = -10.0; z <= 37.0; z += 0.01) {
    const double q = normal_survival(z);
    CHECK(q <= prev);
    CHECK(q > 0.0);
    prev = q;
  }
}

TEST_CASE("tail probability under a mixture") {
  CHECK(tail_prob(mixture1d({{1.0, 0.0, 1.0}}), 0.0) == 0.5);
  const auto m = mixture1d({{0.25, -2.0, 1.0}, {0.75, 3.0, 4.0}});
  const double want = 0.25 * normal_survival(2.0) + 0.75 * normal_survival(-1.5);
  CHECK(tail_prob(m, 0.0) == doctest::Approx(want).epsilon(1e-15));
  CHECK(tail_prob(m, 1e6) == 0.0);

  GaussianMixture two;
  two.variables = {0, 1};
  CHECK_THROWS_AS(tail_prob(two, 0.0), ArgumentError);
}

TEST_CASE("policy checks") {
  CHECK_NOTHROW(Policy{0.0, 0.0, 1.0}.check());
  CHECK_THROWS_AS((Policy{0.0, -1.0, 1.0}.check()), ArgumentError);
  CHECK_THROWS_AS((Policy{0.0, 1.0, 0.0}.check()), ArgumentError);
  CHECK_THROWS_AS((Policy{std::nan(""), 1.0, 1.0}.check()), ArgumentError);
  CHECK_THROWS_AS((Policy{0.0, 1.0, INFINITY}.check()), ArgumentError);
}

TEST_CASE("expected losses and the decision") {
  const Policy p{0.0, 1.0, 2.0};
  CHECK(expected_loss(Action::divert, 0.3, p) == 1.0);
  CHECK(expected_loss(Action::accept, 0.3, p) == doctest::Approx(0.6));
  CHECK(decide(0.5, p) == Action::accept);  // tie goes to accept
  CHECK(decide(std::nextafter(0.5, 1.0), p) == Action::divert);
  CHECK(decide(0.0, Policy{0.0, 0.0, 1.0}) == Action::accept);
  CHECK(decide(1e-300, Policy{0.0, 0.0, 1.0}) == Action::divert);
  CHECK(decide(1.0, Policy{0.0, 1.0, 1.0}) == Action::accept);

  const auto m = mixture1d({{0.5, 1.0, 1.0}, {0.5, -1.0, 1.0}});
  CHECK(decide(m, p) == Action::accept);
  CHECK(expected_loss(Action::accept, m, p) == doctest::Approx(1.0).epsilon(1e-14));
  CHECK(to_string(Action::divert) == "divert");
  CHECK(to_string(Action::accept) == "accept");
}

TEST_CASE("the decision minimizes expected loss") {
  std::mt19937_64 rng(11);
  std::uniform_real_distribution<double> u(0.0, 1.0);
  for (int t = 0; t < 2000; ++t) {
    const Policy p{0.0, 3.0 * u(rng), 0.01 + 3.0 * u(rng)};
    const double tail = u(rng);
    const Action a = decide(tail, p);
    const Action other = a == Action::accept ? Action::divert : Action::accept;
    CHECK(expected_loss(a, tail, p) <= expected_loss(other, tail, p));
  }
}
