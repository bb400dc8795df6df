#include "cgbn/simulator.hpp"

#include <algorithm>
#include <chrono>
#include <cmath>
#include <numeric>

#include <fmt/format.h>

#include "cgbn/errors.hpp"
#include "cgbn/log.hpp"

namespace cgbn {

namespace {
constexpr std::uint64_t kGolden = 0x9e3779b97f4a7c15ULL;
}

std::uint64_t CounterRng::mix(std::uint64_t z) {
  z = (z ^ (z >> 30)) * 0xbf58476d1ce4e5b9ULL;
  z = (z ^ (z >> 27)) * 0x94d049bb133111ebULL;
  return z ^ (z >> 31);
}

CounterRng::CounterRng(std::uint64_t seed, std::uint64_t stream) : key_(mix(seed) ^ mix(stream * kGolden + 1)) {}

CounterRng::result_type CounterRng::operator()() { return mix(key_ + ++counter_ * kGolden); }

double CounterRng::uniform() { return static_cast<double>((*this)() >> 11) * 0x1p-53; }

double CounterRng::normal() { return normal_(*this); }

std::uint64_t batch_seed(std::uint64_t seed, int b) { return CounterRng::mix(seed + static_cast<std::uint64_t>(b + 1) * kGolden); }

namespace {

int draw_state(const std::vector<double>& probs, double u) {
  double acc = 0.0;
  for (std::size_t s = 0; s < probs.size(); ++s) {
    acc += probs[s];
    if (u < acc) return static_cast<int>(s);
  }
  // u landed in the rounding gap above the cumulative sum
  for (std::size_t s = probs.size(); s-- > 0;)
    if (probs[s] > 0.0) return static_cast<int>(s);
  return 0;
}

std::size_t config_of(const Network& net, NodeId v, const std::vector<int>& states) {
  std::vector<int> cfg;
  for (NodeId p : net.node(v).discrete_parents) cfg.push_back(states[p]);
  return net.parent_config_index(v, cfg);
}

double clg_mean(const Network& net, NodeId v, const std::vector<int>& states, const std::vector<double>& values) {
  const auto& n = net.node(v);
  const auto& b = n.spec.clg[config_of(net, v, states)];
  double m = b.intercept;
  for (std::size_t i = 0; i < n.continuous_parents.size(); ++i) m += b.coefficients[i] * values[n.continuous_parents[i]];
  return m;
}

double draw_continuous(const Network& net, NodeId v, const std::vector<int>& states, const std::vector<double>& values,
                       CounterRng& rng) {
  const auto& b = net.node(v).spec.clg[config_of(net, v, states)];
  return clg_mean(net, v, states, values) + std::sqrt(b.variance) * rng.normal();
}

std::vector<char> per_sample_mask(const Network& net, const LineSpec& line) {
  std::vector<char> mask(net.size(), 0);
  std::vector<NodeId> stack{line.target, line.sensor};
  while (!stack.empty()) {
    const NodeId v = stack.back();
    stack.pop_back();
    if (mask[v]) continue;
    mask[v] = 1;
    for (NodeId c : net.node(v).children) stack.push_back(c);
  }
  return mask;
}

}  // namespace

BatchGroundTruth stage_batch(const Network& net, const LineSpec& line, std::uint64_t seed) {
  for (NodeId v : {line.sensor, line.target, line.assay})
    if (!net.node(v).is_continuous()) throw ArgumentError(fmt::format("'{}' must be continuous", net.label(v)));
  if (line.samples < 1) throw ArgumentError("a batch needs at least one sample");
  const auto mask = per_sample_mask(net, line);
  if (mask[line.assay]) throw ArgumentError("the assay node cannot depend on per-sample nodes");

  const auto order = topo_sort(net);
  BatchGroundTruth gt;
  gt.seed = seed;
  gt.discrete_states.assign(net.size(), -1);
  gt.batch_values.assign(net.size(), std::numeric_limits<double>::quiet_NaN());

  CounterRng rng(seed, 0);
  for (NodeId v : order) {
    if (mask[v]) {
      gt.per_sample_nodes.push_back(v);
      continue;
    }
    const auto& n = net.node(v);
    if (n.is_discrete())
      gt.discrete_states[v] = draw_state(n.spec.cpt[config_of(net, v, gt.discrete_states)], rng.uniform());
    else
      gt.batch_values[v] = draw_continuous(net, v, gt.discrete_states, gt.batch_values, rng);
  }
  gt.true_assay = clg_mean(net, line.assay, gt.discrete_states, gt.batch_values);
  gt.observed_assay = gt.batch_values[line.assay];
  gt.assay.continuous[line.assay] = gt.observed_assay;

  gt.truth.reserve(static_cast<std::size_t>(line.samples));
  gt.sensor.reserve(static_cast<std::size_t>(line.samples));
  std::vector<double> values;
  for (int i = 0; i < line.samples; ++i) {
    CounterRng sample_rng(seed, static_cast<std::uint64_t>(i) + 1);
    values = gt.batch_values;
    for (NodeId v : gt.per_sample_nodes) values[v] = draw_continuous(net, v, gt.discrete_states, values, sample_rng);
    gt.truth.push_back(values[line.target]);
    gt.sensor.push_back(values[line.sensor]);
  }
  return gt;
}

std::string_view to_string(ControllerKind k) {
  switch (k) {
    case ControllerKind::bayesian: return "bayesian";
    case ControllerKind::naive: return "naive";
    case ControllerKind::oracle: return "oracle";
  }
  return "?";
}

Controller Controller::bayesian(const CompiledModel& m, const DivertRule& r, bool use_posterior) {
  Controller c;
  c.kind = ControllerKind::bayesian;
  c.model = &m;
  c.rule = &r;
  c.use_posterior = use_posterior;
  return c;
}

Controller Controller::naive(double threshold) {
  Controller c;
  c.kind = ControllerKind::naive;
  c.threshold = threshold;
  return c;
}

Controller Controller::oracle() { return Controller{}; }

double realized_loss(Action a, double truth, const Policy& p) {
  if (a == Action::divert) return p.lambda0;
  return truth > p.c_hat ? p.lambda1 : 0.0;
}

namespace {

double percentile(std::vector<double> xs, double q) {
  if (xs.empty()) return 0.0;
  std::sort(xs.begin(), xs.end());
  const auto rank = static_cast<std::size_t>(std::ceil(q * static_cast<double>(xs.size())));
  return xs[std::clamp<std::size_t>(rank, 1, xs.size()) - 1];
}

}  // namespace

RunMetrics run_batch(const Network& net, const BatchGroundTruth& gt, const Controller& c, const Policy& p) {
  p.check();
  if (c.kind == ControllerKind::bayesian) {
    if (c.model == nullptr || c.rule == nullptr) throw ConfigurationError("Bayesian controller needs a model and a rule");
    c.model->check_fresh(net, gt.assay);
    if (c.rule->model_hash != model_hash(*c.model))
      throw ConfigurationError("divert rule was compiled from a different model");
    if (!(c.rule->policy == p)) throw ConfigurationError("divert rule was compiled for a different policy");
  }

  RunMetrics m;
  m.controller = c.kind;
  m.samples = static_cast<int>(gt.sensor.size());
  std::vector<double> latency;
  latency.reserve(gt.sensor.size());
  for (std::size_t i = 0; i < gt.sensor.size(); ++i) {
    const double s = gt.sensor[i];
    Action a = Action::accept;
    const auto t0 = std::chrono::steady_clock::now();
    switch (c.kind) {
      case ControllerKind::bayesian:
        a = c.use_posterior ? decide(sensor_posterior(*c.model, s), p) : rule_decide(*c.rule, s);
        break;
      case ControllerKind::naive:
        a = s > c.threshold ? Action::divert : Action::accept;
        break;
      case ControllerKind::oracle:
        a = gt.truth[i] > p.c_hat ? Action::divert : Action::accept;
        break;
    }
    const auto t1 = std::chrono::steady_clock::now();
    latency.push_back(std::chrono::duration<double, std::nano>(t1 - t0).count());
    if (c.kind == ControllerKind::bayesian && !c.rule->in_scan_range(s)) ++m.out_of_range;

    m.decisions.push_back(a);
    if (a == Action::divert) {
      ++m.diverted;
    } else {
      ++m.accepted;
      if (gt.truth[i] > p.c_hat) ++m.violations;
    }
    m.total_loss += realized_loss(a, gt.truth[i], p);
  }
  if (m.out_of_range > 0)
    log_warning(fmt::format("{} sensor readings fell outside the rule's scanned range [{}, {}]; nearest decision used",
                            m.out_of_range, c.rule->scan_lower, c.rule->scan_upper));
  m.slag_fraction = m.samples ? static_cast<double>(m.diverted) / m.samples : 0.0;
  m.violation_rate = m.accepted ? static_cast<double>(m.violations) / m.accepted : 0.0;
  m.mean_loss = m.samples ? m.total_loss / m.samples : 0.0;
  if (!latency.empty()) {
    m.latency_mean_ns = std::accumulate(latency.begin(), latency.end(), 0.0) / static_cast<double>(latency.size());
    m.latency_max_ns = *std::max_element(latency.begin(), latency.end());
    m.latency_p50_ns = percentile(latency, 0.50);
    m.latency_p99_ns = percentile(latency, 0.99);
  }
  return m;
}

double best_naive_threshold(const std::vector<double>& sensor, const std::vector<double>& truth, const Policy& p) {
  if (sensor.size() != truth.size()) throw ArgumentError("sensor and truth lengths differ");
  std::vector<std::size_t> idx(sensor.size());
  std::iota(idx.begin(), idx.end(), 0);
  std::sort(idx.begin(), idx.end(), [&](std::size_t a, std::size_t b) { return sensor[a] < sensor[b]; });

  // Threshold t diverts every reading above t. Start below all readings.
  const double n = static_cast<double>(sensor.size());
  double best_t = -std::numeric_limits<double>::infinity();
  double best = p.lambda0 * n;
  double accepted_bad = 0.0;
  for (std::size_t k = 0; k < idx.size(); ++k) {
    if (truth[idx[k]] > p.c_hat) accepted_bad += 1.0;
    // equal readings must fall on the same side
    if (k + 1 < idx.size() && sensor[idx[k + 1]] == sensor[idx[k]]) continue;
    const double diverted = n - static_cast<double>(k + 1);
    const double loss = p.lambda0 * diverted + p.lambda1 * accepted_bad;
    if (loss < best) {
      best = loss;
      best_t = sensor[idx[k]];
    }
  }
  return best_t;
}

RunMetrics ComparisonReport::total(ControllerKind k) const {
  RunMetrics t;
  t.controller = k;
  double latency_sum = 0.0;
  std::vector<double> p50, p99;
  for (const auto& b : batches)
    for (const auto& r : b.runs) {
      if (r.controller != k) continue;
      t.samples += r.samples;
      t.diverted += r.diverted;
      t.accepted += r.accepted;
      t.violations += r.violations;
      t.out_of_range += r.out_of_range;
      t.total_loss += r.total_loss;
      t.regret += r.regret;
      latency_sum += r.latency_mean_ns * r.samples;
      t.latency_max_ns = std::max(t.latency_max_ns, r.latency_max_ns);
      p50.push_back(r.latency_p50_ns);
      p99.push_back(r.latency_p99_ns);
    }
  if (t.samples > 0) {
    t.slag_fraction = static_cast<double>(t.diverted) / t.samples;
    t.mean_loss = t.total_loss / t.samples;
    t.latency_mean_ns = latency_sum / t.samples;
  }
  t.violation_rate = t.accepted ? static_cast<double>(t.violations) / t.accepted : 0.0;
  // batch-level percentiles summarized by their median and maximum
  t.latency_p50_ns = percentile(p50, 0.5);
  t.latency_p99_ns = p99.empty() ? 0.0 : *std::max_element(p99.begin(), p99.end());
  return t;
}

namespace {

std::string metrics_row(const std::string& batch, const RunMetrics& r) {
  return fmt::format("{},{},{},{},{},{},{},{},{},{}\n", batch, to_string(r.controller), r.samples, r.diverted,
                     format_double(r.slag_fraction), r.violations, format_double(r.violation_rate),
                     format_double(r.total_loss), format_double(r.mean_loss), format_double(r.regret));
}

std::string latency_row(const std::string& batch, const RunMetrics& r) {
  return fmt::format("{},{},{},{},{},{}\n", batch, to_string(r.controller), format_double(r.latency_mean_ns),
                     format_double(r.latency_max_ns), format_double(r.latency_p50_ns), format_double(r.latency_p99_ns));
}

constexpr ControllerKind kAll[] = {ControllerKind::bayesian, ControllerKind::naive, ControllerKind::oracle};

}  // namespace

std::string ComparisonReport::metrics_csv() const {
  std::string out = "batch,controller,samples,diverted,slag_fraction,violations,violation_rate,total_loss,mean_loss,regret\n";
  for (const auto& b : batches)
    for (const auto& r : b.runs) out += metrics_row(std::to_string(b.batch), r);
  for (auto k : kAll) out += metrics_row("all", total(k));
  return out;
}

std::string ComparisonReport::trace_csv() const {
  std::string out = "batch,sample,sensor,truth,bayesian,naive,oracle\n";
  for (const auto& b : batches) {
    for (std::size_t i = 0; i < b.truth.sensor.size(); ++i) {
      out += fmt::format("{},{},{},{}", b.batch, i, format_double(b.truth.sensor[i]), format_double(b.truth.truth[i]));
      for (const auto& r : b.runs) out += fmt::format(",{}", to_string(r.decisions[i]));
      out += '\n';
    }
  }
  return out;
}

std::string ComparisonReport::latency_csv() const {
  std::string out = "batch,controller,latency_mean_ns,latency_max_ns,latency_p50_ns,latency_p99_ns\n";
  for (const auto& b : batches)
    for (const auto& r : b.runs) out += latency_row(std::to_string(b.batch), r);
  for (auto k : kAll) out += latency_row("all", total(k));
  return out;
}

ComparisonReport compare_controllers(const Network& net, const Policy& p, const ComparisonOptions& opt) {
  p.check();
  if (opt.batches < 1) throw ArgumentError("need at least one batch");
  ComparisonReport report;
  report.policy = p;

  std::vector<double> all_sensor, all_truth;
  for (int b = 0; b < opt.batches; ++b) {
    BatchResult r;
    r.batch = b;
    r.truth = stage_batch(net, opt.line, batch_seed(opt.seed, b));
    all_sensor.insert(all_sensor.end(), r.truth.sensor.begin(), r.truth.sensor.end());
    all_truth.insert(all_truth.end(), r.truth.truth.begin(), r.truth.truth.end());
    report.batches.push_back(std::move(r));
  }
  report.naive_threshold = best_naive_threshold(all_sensor, all_truth, p);

  for (auto& b : report.batches) {
    const auto model = compile(net, b.truth.assay, opt.line.sensor, opt.line.target);
    const auto rule = compile_rule(model, p, opt.grid_points);
    b.components = model.joint().components.size();
    b.intervals = rule.intervals.size();
    b.runs.push_back(run_batch(net, b.truth, Controller::bayesian(model, rule), p));
    b.runs.push_back(run_batch(net, b.truth, Controller::naive(report.naive_threshold), p));
    b.runs.push_back(run_batch(net, b.truth, Controller::oracle(), p));
    const double oracle_loss = b.runs.back().total_loss;
    for (auto& run : b.runs) run.regret = run.total_loss - oracle_loss;
  }
  return report;
}

}  // namespace cgbn
