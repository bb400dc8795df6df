#include <numbers>
#include <random>

#include "doctest.h"

#include "cgbn/errors.hpp"
#include "cgbn/fixture.hpp"
#include "cgbn/mixture.hpp"
#include "oracle.hpp"
#include "support.hpp"

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

Gaussian gaussian1d(double mu, double var) {
  return {Eigen::VectorXd::Constant(1, mu), Eigen::MatrixXd::Constant(1, 1, var)};
}

// Composite Simpson rule over a wide interval.
double kl_simpson(const GaussianMixture& m, const Gaussian& g, double lo, double hi, int n) {
  const double h = (hi - lo) / n;
  double s = 0.0;
  for (int i = 0; i <= n; ++i) {
    Eigen::VectorXd x = Eigen::VectorXd::Constant(1, lo + i * h);
    const double lp = mixture_log_density(m, x);
    const double f = std::exp(lp) * (lp - gaussian_log_density(g, x));
    s += (i == 0 || i == n ? 1 : (i % 2 ? 4 : 2)) * f;
  }
  return s * h / 3.0;
}

}  // namespace

TEST_CASE("a discrete parent's mixture reads off the CPDs") {
  const Network net = testing::two_node(0.3, 0.0, 1.0, 5.0, 4.0);
  const auto m = exact_mixture(net, 1, {});
  REQUIRE(m.components.size() == 2);
  CHECK(m.sources == std::vector<NodeId>{0});
  CHECK(m.components[0].weight == doctest::Approx(0.3).epsilon(1e-14));
  CHECK(m.components[0].mean[0] == doctest::Approx(0.0));
  CHECK(m.components[0].covariance(0, 0) == doctest::Approx(1.0).epsilon(1e-14));
  CHECK(m.components[1].weight == doctest::Approx(0.7).epsilon(1e-14));
  CHECK(m.components[1].mean[0] == doctest::Approx(5.0).epsilon(1e-14));
  CHECK(m.components[1].covariance(0, 0) == doctest::Approx(4.0).epsilon(1e-14));
  CHECK(m.components[0].source == std::vector<int>{0});
  CHECK(m.components[1].source == std::vector<int>{1});
}

TEST_CASE("zero-probability configurations are pruned") {
  const Network net = testing::two_node(1.0, 0.0, 1.0, 5.0, 4.0);
  const auto m = exact_mixture(net, 1, {});
  REQUIRE(m.components.size() == 1);
  CHECK(m.components[0].weight == 1.0);
  CHECK(m.components[0].mean[0] == doctest::Approx(0.0));
  CHECK(m.components[0].covariance(0, 0) == doctest::Approx(1.0));
}

TEST_CASE("a continuous root without discrete ancestry gives one component") {
  NodeSpec x{"X", NodeKind::continuous, {}, {}, {}, {{2.0, {}, 3.0}}};
  const auto m = exact_mixture(Network({x}), 0, {});
  REQUIRE(m.components.size() == 1);
  CHECK(m.sources.empty());
  CHECK(m.components[0].mean[0] == doctest::Approx(2.0));
}

TEST_CASE("targets that are discrete or observed are rejected") {
  const Network net = testing::two_node(0.3, 0.0, 1.0, 5.0, 4.0);
  CHECK_THROWS_AS(exact_mixture(net, 0, {}), ArgumentError);
  Evidence z;
  z.continuous[1] = 1.0;
  CHECK_THROWS_AS(exact_mixture(net, 1, z), ArgumentError);
}

TEST_CASE("inconsistent evidence and capacity are reported") {
  const Network zero = testing::two_node(1.0, 0.0, 1.0, 5.0, 4.0);
  Evidence z;
  z.discrete[0] = 1;
  CHECK_THROWS_AS(exact_mixture(zero, 1, z), InconsistentEvidence);

  const Network net = reference_network();
  MixtureOptions tight;
  tight.capacity = 10;
  CHECK_THROWS_AS(exact_mixture(net, net.id("SCD"), {}, tight), CapacityError);
}

TEST_CASE("exact mixtures match enumeration on random networks, branch and full paths") {
  std::mt19937_64 rng(606);
  for (int trial = 0; trial < 60; ++trial) {
    const Network net = oracle::random_network(rng, {6, 3, 6, 1, 1, 0.5, 3});
    const Evidence z = oracle::random_evidence(net, rng, 0.3);
    const auto post = oracle::enumerate(net, z);
    for (NodeId x : post.configs[0].free) {
      for (bool use_branch : {true, false}) {
        MixtureOptions opt;
        opt.use_branch = use_branch;
        const auto m = exact_mixture(net, x, z, opt);
        const auto problem = oracle::compare_mixture(m, post, 1e-6);
        CHECK_MESSAGE(problem.empty(), "trial ", trial, " node ", net.label(x), ": ", problem);
        double total = 0.0;
        for (const auto& c : m.components) {
          total += c.weight;
          CHECK(c.weight > 0.0);
          CHECK(c.covariance(0, 0) >= kVarianceFloor);
        }
        CHECK(std::abs(total - 1.0) <= 1e-9);
      }
    }
  }
}

TEST_CASE("mixture moments equal the weak marginal") {
  std::mt19937_64 rng(707);
  for (int trial = 0; trial < 40; ++trial) {
    const Network net = oracle::random_network(rng, {});
    const Evidence z = oracle::random_evidence(net, rng, 0.3);
    auto tree = std::make_shared<const CliqueTree>(build_clique_tree(net));
    const auto state = propagate(tree, z);
    for (NodeId x : net.continuous_nodes()) {
      if (z.observes(x)) continue;
      const auto weak = std::get<MomentSummary>(node_marginal(state, x));
      const auto g = moment_match(exact_mixture(tree, x, z));
      CHECK(testing::close_value(g.mean[0], weak.mean[0], 1e-8));
      CHECK(testing::close_value(g.covariance(0, 0), weak.covariance(0, 0), 1e-8));
    }
  }
}

TEST_CASE("components come out in lexicographic source order") {
  const Network net = reference_network();
  const auto m = exact_mixture(net, net.id("SCD"), reference_slow_evidence(net));
  CHECK(m.components.size() == 40);
  for (std::size_t k = 1; k < m.components.size(); ++k) CHECK(m.components[k - 1].source < m.components[k].source);
}

TEST_CASE("joint mixtures") {
  SUBCASE("independent children of one discrete parent have block-diagonal covariances") {
    NodeSpec d{"D", NodeKind::discrete, {}, {"a", "b"}, {{0.4, 0.6}}, {}};
    NodeSpec x{"X", NodeKind::continuous, {"D"}, {}, {}, {{0.0, {}, 1.0}, {2.0, {}, 1.5}}};
    NodeSpec y{"Y", NodeKind::continuous, {"D"}, {}, {}, {{1.0, {}, 0.5}, {-1.0, {}, 2.0}}};
    const auto m = exact_joint_mixture(Network({d, x, y}), {1, 2}, {});
    REQUIRE(m.components.size() == 2);
    for (const auto& c : m.components) CHECK(std::abs(c.covariance(0, 1)) < 1e-12);
  }
  SUBCASE("a single configuration equals plain Gaussian conditioning") {
    NodeSpec x{"X", NodeKind::continuous, {}, {}, {}, {{1.0, {}, 2.0}}};
    NodeSpec y{"Y", NodeKind::continuous, {"X"}, {}, {}, {{0.5, {0.8}, 0.5}}};
    NodeSpec w{"W", NodeKind::continuous, {"Y"}, {}, {}, {{0.0, {1.0}, 0.3}}};
    const Network net({x, y, w});
    Evidence z;
    z.continuous[2] = 2.0;
    const auto m = exact_joint_mixture(net, {0, 1}, z);
    REQUIRE(m.components.size() == 1);
    const auto post = oracle::enumerate(net, z);
    const auto want = oracle::config_moments(post.configs[0], {0, 1});
    CHECK((m.components[0].mean - want.mean).cwiseAbs().maxCoeff() < 1e-10);
    CHECK((m.components[0].covariance - want.covariance).cwiseAbs().maxCoeff() < 1e-10);
  }
  SUBCASE("random joint queries match enumeration") {
    std::mt19937_64 rng(808);
    for (int trial = 0; trial < 40; ++trial) {
      const Network net = oracle::random_network(rng, {6, 3, 6, 1, 2, 0.5, 3});
      const Evidence z = oracle::random_evidence(net, rng, 0.25);
      const auto post = oracle::enumerate(net, z);
      const auto& free = post.configs[0].free;
      if (free.size() < 2) continue;
      const std::vector<NodeId> xs{free.front(), free.back()};
      const auto m = exact_joint_mixture(net, xs, z);
      const auto problem = oracle::compare_mixture(m, post, 1e-6);
      CHECK_MESSAGE(problem.empty(), "trial ", trial, ": ", problem);
    }
  }
}

TEST_CASE("fixture (SS, SCD) components correlate positively, their moment match negatively") {
  const Network net = reference_network();
  const auto m = exact_joint_mixture(net, {net.id("SS"), net.id("SCD")}, reference_slow_evidence(net));
  for (const auto& c : m.components) CHECK(c.covariance(0, 1) > 0.0);
  const auto g = moment_match(m);
  CHECK(g.covariance(0, 1) < 0.0);
}

TEST_CASE("moment_match follows the law of total covariance") {
  const auto g = moment_match(mixture1d({{0.5, -1.0, 1.0}, {0.5, 1.0, 1.0}}));
  CHECK(std::abs(g.mean[0]) < 1e-15);
  CHECK(g.covariance(0, 0) == doctest::Approx(2.0).epsilon(1e-15));
  const auto one = moment_match(mixture1d({{1.0, 3.0, 0.25}}));
  CHECK(one.mean[0] == 3.0);
  CHECK(one.covariance(0, 0) == 0.25);
}

TEST_CASE("KL divergence of a mixture to a Gaussian") {
  const auto single = mixture1d({{1.0, 0.5, 2.0}});
  CHECK(std::abs(kl_mixture_to_gaussian(single, gaussian1d(0.5, 2.0))) < 1e-4);

  const auto separated = mixture1d({{0.5, -5.0, 1.0}, {0.5, 5.0, 1.0}});
  const auto g = moment_match(separated);
  const double kl = kl_mixture_to_gaussian(separated, g);
  CHECK(kl >= 0.5);
  CHECK(std::abs(kl - kl_simpson(separated, g, -40.0, 40.0, 40000)) < 1e-4);

  // The moment-matched Gaussian minimizes KL(m || g) over Gaussians.
  const auto m = mixture1d({{0.3, 2.0, 0.25}, {0.7, -1.0, 1.0}});
  const auto best = moment_match(m);
  const double kl_best = kl_mixture_to_gaussian(m, best);
  for (double dm : {-0.3, -0.05, 0.05, 0.3})
    for (double sv : {0.8, 1.0, 1.25}) {
      if (dm == 0.0 && sv == 1.0) continue;
      const auto other = gaussian1d(best.mean[0] + dm, best.covariance(0, 0) * sv);
      CHECK(kl_best <= kl_mixture_to_gaussian(m, other) + 1e-9);
    }

  CHECK_THROWS_AS(kl_mixture_to_gaussian(m, gaussian1d(0.0, -1.0)), ArgumentError);
}

TEST_CASE("2-D KL agrees with the 1-D case on a product form") {
  GaussianMixture m;
  m.variables = {0, 1};
  for (auto [w, mu] : {std::pair{0.4, -2.0}, std::pair{0.6, 1.5}}) {
    MixtureComponent c;
    c.weight = w;
    c.mean = Eigen::Vector2d(mu, 0.0);
    c.covariance = Eigen::Matrix2d{{1.0, 0.0}, {0.0, 0.5}};
    m.components.push_back(c);
  }
  const auto g = moment_match(m);
  const auto m1 = mixture1d({{0.4, -2.0, 1.0}, {0.6, 1.5, 1.0}});
  // the second coordinate is identical under m and g, so it contributes nothing
  CHECK(std::abs(kl_mixture_to_gaussian(m, g) - kl_mixture_to_gaussian(m1, moment_match(m1))) < 1e-4);
}

TEST_CASE("ellipse parameters") {
  const double q = chi_square2_quantile(0.95);
  CHECK(q == doctest::Approx(5.991464547107979).epsilon(1e-14));
  const auto circle = ellipse_params(Eigen::Vector2d(1, 2), Eigen::Matrix2d::Identity());
  CHECK(circle.major * circle.major == doctest::Approx(q).epsilon(1e-14));
  CHECK(circle.minor == doctest::Approx(circle.major).epsilon(1e-14));
  CHECK(circle.angle == 0.0);

  const auto diag = ellipse_params(Eigen::Vector2d::Zero(), Eigen::Matrix2d{{4.0, 0.0}, {0.0, 1.0}});
  CHECK(diag.major / diag.minor == doctest::Approx(2.0).epsilon(1e-14));
  CHECK(std::abs(diag.angle) < 1e-15);

  std::mt19937_64 rng(909);
  std::normal_distribution<double> n01;
  for (int t = 0; t < 200; ++t) {
    Eigen::Matrix2d a;
    a << n01(rng), n01(rng), n01(rng), n01(rng);
    const Eigen::Matrix2d cov = a * a.transpose() + 1e-3 * Eigen::Matrix2d::Identity();
    const auto e = ellipse_params(Eigen::Vector2d::Zero(), cov);
    CHECK(e.angle > -std::numbers::pi / 2);
    CHECK(e.angle <= std::numbers::pi / 2);
    const Eigen::Vector2d u(std::cos(e.angle), std::sin(e.angle)), v(-std::sin(e.angle), std::cos(e.angle));
    const Eigen::Matrix2d back = (e.major * e.major / q) * u * u.transpose() + (e.minor * e.minor / q) * v * v.transpose();
    CHECK((back - cov).cwiseAbs().maxCoeff() < 1e-9 * std::max(1.0, cov.cwiseAbs().maxCoeff()));
  }

  CHECK_THROWS_AS(ellipse_params(Eigen::Vector2d::Zero(), Eigen::Matrix2d{{1.0, 2.0}, {2.0, 1.0}}), ArgumentError);
  CHECK_THROWS_AS(ellipse_params(Eigen::Vector2d::Zero(), Eigen::Matrix2d{{1.0, 0.5}, {0.0, 1.0}}), ArgumentError);
}
