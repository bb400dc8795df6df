#include <random>

#include "doctest.h"

#include "cgbn/compiler.hpp"
#include "cgbn/errors.hpp"
#include "cgbn/fixture.hpp"
#include "cgbn/log.hpp"
#include "oracle.hpp"
#include "support.hpp"

using namespace cgbn;

namespace {

struct Fixture {
  Network net = reference_network();
  Evidence slow = reference_slow_evidence(net);
  Policy policy = reference_policy();
  NodeId sensor = net.id(kReferenceSensor);
  NodeId target = net.id(kReferenceTarget);
  CompiledModel cm = compile(net, slow, sensor, target);
};

const Fixture& fixture() {
  static const Fixture f;
  return f;
}

// X ~ N(0, 1), S | X ~ N(X, noise).
Network sensor_pair(double noise) {
  NodeSpec x{"X", NodeKind::continuous, {}, {}, {}, {{0.0, {}, 1.0}}};
  NodeSpec s{"S", NodeKind::continuous, {"X"}, {}, {}, {{0.0, {1.0}, noise}}};
  return Network({x, s});
}

bool near_boundary(const DivertRule& r, double s, double eps) {
  for (const auto& i : r.intervals)
    if (std::abs(s - i.lower) < eps || std::abs(s - i.upper) < eps) return true;
  return false;
}

}  // namespace

TEST_CASE("sensor posterior equals brute-force conditioning on the reading") {
  const auto& f = fixture();
  const double lo = -10.0, hi = 25.0;
  for (int i = 0; i <= 100; ++i) {
    const double s = lo + (hi - lo) * i / 100.0;
    const auto m = sensor_posterior(f.cm, s);
    Evidence z = f.slow;
    z.continuous[f.sensor] = s;
    const auto post = oracle::enumerate(f.net, z);
    const auto problem = oracle::compare_mixture(m, post, 1e-6);
    CHECK_MESSAGE(problem.empty(), "s = ", s, ": ", problem);
    CHECK(std::abs(m.total_weight() - 1.0) < 1e-9);
    const double tail = sensor_tail(f.cm, s, f.policy.c_hat);
    CHECK(testing::close_weight(tail, tail_prob(m, f.policy.c_hat), 1e-10));
  }
}

TEST_CASE("sensor posterior agrees with the exact mixture at the reading") {
  const auto& f = fixture();
  for (double s : {-3.0, 0.0, 2.5, 6.0, 12.0}) {
    Evidence z = f.slow;
    z.continuous[f.sensor] = s;
    const auto exact = moment_match(exact_mixture(f.net, f.target, z));
    const auto fast = moment_match(sensor_posterior(f.cm, s));
    CHECK(testing::close_value(fast.mean[0], exact.mean[0], 1e-8));
    CHECK(testing::close_value(fast.covariance(0, 0), exact.covariance(0, 0), 1e-8));
  }
}

TEST_CASE("the fixture posterior mean falls as the sensor reading rises past the clean types") {
  const auto& f = fixture();
  const double low = moment_match(sensor_posterior(f.cm, 3.0)).mean[0];
  const double high = moment_match(sensor_posterior(f.cm, 8.0)).mean[0];
  CHECK(low > high);
}

TEST_CASE("the compiled rule reproduces the posterior decision") {
  const auto& f = fixture();
  const auto rule = compile_rule(f.cm, f.policy);
  REQUIRE(!rule.intervals.empty());
  CHECK(rule.model_hash == model_hash(f.cm));
  std::mt19937_64 rng(5);
  std::uniform_real_distribution<double> u(rule.scan_lower, rule.scan_upper);
  int disagreements = 0, checked = 0;
  for (int i = 0; i < 100000; ++i) {
    const double s = u(rng);
    if (near_boundary(rule, s, 1e-6)) continue;
    ++checked;
    if (rule_decide(rule, s) != decide(sensor_tail(f.cm, s, f.policy.c_hat), f.policy)) ++disagreements;
  }
  CHECK(disagreements == 0);
  CHECK(checked > 99000);
}

TEST_CASE("the fixture rule diverts a bounded interval") {
  const auto& f = fixture();
  const auto rule = compile_rule(f.cm, f.policy);
  REQUIRE(rule.intervals.size() == 1);
  const auto iv = rule.intervals[0];
  CHECK(std::isfinite(iv.lower));
  CHECK(std::isfinite(iv.upper));
  CHECK(rule_decide(rule, iv.upper + 1.0) == Action::accept);
  CHECK(rule_decide(rule, iv.lower - 1.0) == Action::accept);
  CHECK(rule_decide(rule, 0.5 * (iv.lower + iv.upper)) == Action::divert);
}

TEST_CASE("raising the divert cost never enlarges the divert set") {
  const auto& f = fixture();
  std::vector<DivertRule> rules;
  for (double l0 : {0.5, 1.0, 2.0, 4.0, 8.0})
    rules.push_back(compile_rule(f.cm, Policy{f.policy.c_hat, l0, f.policy.lambda1}));
  for (int i = 0; i <= 2000; ++i) {
    const double s = rules[0].scan_lower + (rules[0].scan_upper - rules[0].scan_lower) * i / 2000.0;
    for (std::size_t k = 1; k < rules.size(); ++k) {
      if (near_boundary(rules[k], s, 1e-6) || near_boundary(rules[k - 1], s, 1e-6)) continue;
      if (rule_decide(rules[k], s) == Action::divert) CHECK(rule_decide(rules[k - 1], s) == Action::divert);
    }
  }
}

TEST_CASE("degenerate policies") {
  const auto& f = fixture();
  SUBCASE("a threshold of one or more never diverts") {
    CHECK(compile_rule(f.cm, Policy{f.policy.c_hat, 10.0, 10.0}).intervals.empty());
    CHECK(compile_rule(f.cm, Policy{f.policy.c_hat, 20.0, 10.0}).intervals.empty());
  }
  SUBCASE("a free divert diverts wherever the tail is positive") {
    const auto rule = compile_rule(f.cm, Policy{f.policy.c_hat, 0.0, 1.0});
    for (int i = 0; i <= 500; ++i) {
      const double s = rule.scan_lower + (rule.scan_upper - rule.scan_lower) * i / 500.0;
      if (near_boundary(rule, s, 1e-6)) continue;
      CHECK((rule_decide(rule, s) == Action::divert) == (sensor_tail(f.cm, s, f.policy.c_hat) > 0.0));
    }
  }
  SUBCASE("invalid policies are rejected") {
    CHECK_THROWS_AS(compile_rule(f.cm, Policy{0.0, -1.0, 1.0}), ArgumentError);
    CHECK_THROWS_AS(compile_rule(f.cm, f.policy, 1), ArgumentError);
  }
}

TEST_CASE("a single Gaussian component has the closed-form threshold") {
  const double noise = 0.5, c_hat = 0.7;
  const Network net = sensor_pair(noise);
  const auto cm = compile(net, {}, 1, 0);
  REQUIRE(cm.rows().size() == 1);
  // tail > 1/2 iff the posterior mean s / (1 + noise) exceeds c_hat
  const auto rule = compile_rule(cm, Policy{c_hat, 1.0, 2.0});
  REQUIRE(rule.intervals.size() == 1);
  CHECK(std::abs(rule.intervals[0].lower - c_hat * (1.0 + noise)) < 1e-8);
  CHECK(rule.intervals[0].upper == std::numeric_limits<double>::infinity());
  const auto m = sensor_posterior(cm, 2.0);
  CHECK(m.components[0].mean[0] == doctest::Approx(2.0 / 1.5).epsilon(1e-12));
  CHECK(m.components[0].covariance(0, 0) == doctest::Approx(0.5 / 1.5).epsilon(1e-12));
}

TEST_CASE("compilation is deterministic and round-trips through JSON") {
  const auto& f = fixture();
  const auto again = compile(f.net, f.slow, f.sensor, f.target);
  CHECK(dump_json(again.to_json()) == dump_json(f.cm.to_json()));
  const auto rule = compile_rule(f.cm, f.policy);
  CHECK(dump_json(compile_rule(again, f.policy).to_json()) == dump_json(rule.to_json()));

  const auto back = CompiledModel::from_json(Json::parse(dump_json(f.cm.to_json())));
  CHECK(model_hash(back) == model_hash(f.cm));
  CHECK(back.sensor_label() == kReferenceSensor);
  CHECK(back.target_label() == kReferenceTarget);
  for (double s : {-2.0, 1.0, 4.5, 9.0}) CHECK(sensor_tail(back, s, 2.0) == sensor_tail(f.cm, s, 2.0));
  CHECK_NOTHROW(back.check_fresh(f.net, f.slow));

  const auto rule_back = DivertRule::from_json(Json::parse(dump_json(rule.to_json())));
  CHECK(rule_back.intervals == rule.intervals);
  CHECK(rule_back.policy == rule.policy);
  CHECK(rule_back.model_hash == rule.model_hash);

  CHECK_THROWS_AS(CompiledModel::from_json(Json::parse(R"({"kind":"divert_rule"})")), FormatError);
}

TEST_CASE("rule CSV lists one interval per row") {
  DivertRule r;
  r.intervals = {{1.0, 2.5}, {4.0, std::numeric_limits<double>::infinity()}};
  CHECK(r.to_csv() == "lower,upper\n1,2.5\n4,inf\n");
}

TEST_CASE("a model compiled for other evidence is stale") {
  const auto& f = fixture();
  Evidence other = f.slow;
  other.continuous[f.net.id(kReferenceAssay)] = 1.5;
  CHECK_THROWS_AS(f.cm.check_fresh(f.net, other), ConfigurationError);
  CHECK_THROWS_AS(compile(f.net, f.slow, f.sensor, f.sensor), ArgumentError);
  CHECK_THROWS_AS(compile(f.net, f.slow, f.net.id(kReferenceAssay), f.target), ArgumentError);
}

TEST_CASE("a reading that underflows every component falls back to the largest prior") {
  const auto& f = fixture();
  std::vector<std::string> warnings;
  set_warning_sink([&](std::string_view w) { warnings.emplace_back(w); });
  const auto m = sensor_posterior(f.cm, 1e300);
  set_warning_sink(nullptr);
  REQUIRE(m.components.size() == 1);
  CHECK(m.components[0].weight == 1.0);
  CHECK(warnings.size() == 1);
}
