#include "cgbn/compiler.hpp"

#include <algorithm>
#include <cmath>
#include <numbers>

#include <fmt/format.h>

#include "cgbn/errors.hpp"
#include "cgbn/log.hpp"

namespace cgbn {

namespace {

Json matrix_json(const Eigen::MatrixXd& m) {
  Json rows = Json::array();
  for (Eigen::Index r = 0; r < m.rows(); ++r) {
    Json row = Json::array();
    for (Eigen::Index c = 0; c < m.cols(); ++c) row.push_back(m(r, c));
    rows.push_back(row);
  }
  return rows;
}

double number(const Json& j, const char* what) {
  if (j.is_string()) return parse_double(j.get<std::string>());
  if (!j.is_number()) throw FormatError(fmt::format("{}: expected a number", what));
  return j.get<double>();
}

const Json& at(const Json& j, const char* key) {
  auto it = j.find(key);
  if (it == j.end()) throw FormatError(fmt::format("missing field '{}'", key));
  return *it;
}

std::uint64_t parse_hash(const Json& j) {
  const auto s = j.get<std::string>();
  try {
    std::size_t used = 0;
    const auto h = std::stoull(s, &used, 16);
    if (used != s.size()) throw FormatError("bad hash");
    return h;
  } catch (const std::logic_error&) {
    throw FormatError(fmt::format("bad hash '{}'", s));
  }
}

int state_index(const std::vector<std::string>& states, const std::string& label) {
  auto it = std::find(states.begin(), states.end(), label);
  if (it == states.end()) throw FormatError(fmt::format("unknown state '{}'", label));
  return static_cast<int>(it - states.begin());
}

constexpr double kLogSqrt2Pi = 0.91893853320467274178032973640562;

}  // namespace

CompiledModel::CompiledModel(const Network& net, Evidence baked, GaussianMixture joint)
    : baked_(std::move(baked)), joint_(std::move(joint)) {
  if (joint_.dimension() != 2) throw ArgumentError("compiled model needs a (sensor, target) mixture");
  for (NodeId v : joint_.variables) labels_[v] = net.label(v);
  for (NodeId v : joint_.sources) {
    labels_[v] = net.label(v);
    states_[v] = net.node(v).spec.states;
  }
  for (NodeId v : baked_.variables()) {
    labels_[v] = net.label(v);
    if (net.node(v).is_discrete()) states_[v] = net.node(v).spec.states;
  }
  network_hash_ = cgbn::network_hash(net);
  evidence_hash_ = cgbn::evidence_hash(net, baked_);
  build_rows();
}

void CompiledModel::build_rows() {
  rows_.clear();
  const double total = joint_.total_weight();
  for (const auto& c : joint_.components) {
    Row r;
    r.log_prior = std::log(c.weight / total);
    r.sensor_mean = c.mean[0];
    r.sensor_var = std::max(c.covariance(0, 0), kVarianceFloor);
    r.log_norm = -kLogSqrt2Pi - 0.5 * std::log(r.sensor_var);
    r.target_mean = c.mean[1];
    r.slope = c.covariance(0, 1) / r.sensor_var;
    r.target_cond_var = std::max(c.covariance(1, 1) - r.slope * c.covariance(0, 1), kVarianceFloor);
    rows_.push_back(r);
  }
}

void CompiledModel::check_fresh(const Network& net, const Evidence& slow) const {
  if (cgbn::network_hash(net) != network_hash_)
    throw ConfigurationError(fmt::format("compiled model is stale: network hash {} does not match {}",
                                         hex64(network_hash_), hex64(cgbn::network_hash(net))));
  if (cgbn::evidence_hash(net, slow) != evidence_hash_)
    throw ConfigurationError(fmt::format("compiled model is stale: evidence hash {} does not match {}",
                                         hex64(evidence_hash_), hex64(cgbn::evidence_hash(net, slow))));
}

Json CompiledModel::to_json() const {
  auto node = [&](NodeId v) { return Json{{"label", labels_.at(v)}, {"id", v}}; };
  Json evidence = Json::array();
  for (auto [v, s] : baked_.discrete) {
    Json e = node(v);
    e["states"] = states_.at(v);
    e["state"] = states_.at(v).at(s);
    evidence.push_back(e);
  }
  for (auto [v, x] : baked_.continuous) {
    Json e = node(v);
    e["value"] = x;
    evidence.push_back(e);
  }
  Json sources = Json::array();
  for (NodeId d : joint_.sources) {
    Json s = node(d);
    s["states"] = states_.at(d);
    sources.push_back(s);
  }
  Json comps = Json::array();
  for (const auto& c : joint_.components) {
    Json src = Json::array();
    for (std::size_t i = 0; i < c.source.size(); ++i) src.push_back(states_.at(joint_.sources[i]).at(c.source[i]));
    comps.push_back({{"weight", c.weight},
                     {"mean", std::vector<double>(c.mean.data(), c.mean.data() + c.mean.size())},
                     {"covariance", matrix_json(c.covariance)},
                     {"source", src}});
  }
  return {{"schema_version", kSchemaVersion},
          {"kind", "compiled_model"},
          {"network_hash", hex64(network_hash_)},
          {"evidence_hash", hex64(evidence_hash_)},
          {"sensor", node(sensor())},
          {"target", node(target())},
          {"evidence", evidence},
          {"sources", sources},
          {"components", comps}};
}

CompiledModel CompiledModel::from_json(const Json& j) {
  try {
    if (at(j, "kind") != "compiled_model") throw FormatError("not a compiled model document");
    if (at(j, "schema_version").get<int>() != kSchemaVersion) throw FormatError("unsupported schema_version");
    CompiledModel cm;
    auto read_node = [&](const Json& n) {
      const NodeId v = at(n, "id").get<NodeId>();
      cm.labels_[v] = at(n, "label").get<std::string>();
      if (n.contains("states")) cm.states_[v] = n["states"].get<std::vector<std::string>>();
      return v;
    };
    cm.network_hash_ = parse_hash(at(j, "network_hash"));
    cm.evidence_hash_ = parse_hash(at(j, "evidence_hash"));
    cm.joint_.variables = {read_node(at(j, "sensor")), read_node(at(j, "target"))};
    for (const auto& e : at(j, "evidence")) {
      const NodeId v = read_node(e);
      if (e.contains("state"))
        cm.baked_.discrete[v] = state_index(cm.states_.at(v), e["state"].get<std::string>());
      else
        cm.baked_.continuous[v] = number(at(e, "value"), "evidence value");
    }
    for (const auto& s : at(j, "sources")) cm.joint_.sources.push_back(read_node(s));
    for (const auto& c : at(j, "components")) {
      MixtureComponent mc;
      mc.weight = number(at(c, "weight"), "weight");
      const auto mean = at(c, "mean").get<std::vector<double>>();
      const auto cov = at(c, "covariance").get<std::vector<std::vector<double>>>();
      if (mean.size() != 2 || cov.size() != 2 || cov[0].size() != 2 || cov[1].size() != 2)
        throw FormatError("components must be bivariate");
      mc.mean = Eigen::Vector2d(mean[0], mean[1]);
      mc.covariance.resize(2, 2);
      mc.covariance << cov[0][0], cov[0][1], cov[1][0], cov[1][1];
      const auto src = at(c, "source").get<std::vector<std::string>>();
      if (src.size() != cm.joint_.sources.size()) throw FormatError("component source length mismatch");
      for (std::size_t i = 0; i < src.size(); ++i)
        mc.source.push_back(state_index(cm.states_.at(cm.joint_.sources[i]), src[i]));
      cm.joint_.components.push_back(std::move(mc));
    }
    if (cm.joint_.components.empty()) throw FormatError("compiled model has no components");
    cm.build_rows();
    return cm;
  } catch (const nlohmann::json::exception& e) {
    throw FormatError(fmt::format("compiled model: {}", e.what()));
  }
}

CompiledModel compile(const Network& net, const Evidence& slow, NodeId sensor, NodeId target,
                      const MixtureOptions& opt) {
  if (sensor == target) throw ArgumentError("sensor and target must differ");
  for (NodeId v : {sensor, target}) {
    if (!net.node(v).is_continuous()) throw ArgumentError(fmt::format("'{}' is not continuous", net.label(v)));
    if (slow.observes(v)) throw ArgumentError(fmt::format("'{}' is part of the slow evidence", net.label(v)));
  }
  auto tree = std::make_shared<const CliqueTree>(build_clique_tree(net, {{sensor, target}}));
  return CompiledModel(net, slow, exact_joint_mixture(tree, {sensor, target}, slow, opt));
}

namespace {

// Log-weight of each component after seeing s; returns the maximum.
double posterior_log_weights(const CompiledModel& cm, double s, std::vector<double>& lw) {
  const auto& rows = cm.rows();
  lw.resize(rows.size());
  double max = kLogZero;
  for (std::size_t k = 0; k < rows.size(); ++k) {
    const auto& r = rows[k];
    const double d = s - r.sensor_mean;
    lw[k] = r.log_prior + r.log_norm - 0.5 * d * d / r.sensor_var;
    if (lw[k] > max) max = lw[k];
  }
  if (!std::isfinite(max)) {
    log_warning(fmt::format("sensor reading {} underflows every component; using the largest prior", s));
    std::size_t best = 0;
    for (std::size_t k = 1; k < rows.size(); ++k)
      if (rows[k].log_prior > rows[best].log_prior) best = k;
    std::fill(lw.begin(), lw.end(), kLogZero);
    lw[best] = 0.0;
    max = 0.0;
  }
  return max;
}

}  // namespace

GaussianMixture sensor_posterior(const CompiledModel& cm, double s) {
  std::vector<double> lw;
  const double max = posterior_log_weights(cm, s, lw);
  double total = 0.0;
  for (double l : lw)
    if (l >= max - kVoidLogGap) total += std::exp(l - max);
  GaussianMixture out;
  out.variables = {cm.target()};
  out.sources = cm.joint().sources;
  const auto& rows = cm.rows();
  for (std::size_t k = 0; k < rows.size(); ++k) {
    if (lw[k] < max - kVoidLogGap) continue;
    const auto& r = rows[k];
    MixtureComponent c;
    c.weight = std::exp(lw[k] - max) / total;
    c.mean = Eigen::VectorXd::Constant(1, r.target_mean + r.slope * (s - r.sensor_mean));
    c.covariance = Eigen::MatrixXd::Constant(1, 1, r.target_cond_var);
    c.source = cm.joint().components[k].source;
    out.components.push_back(std::move(c));
  }
  return out;
}

double sensor_tail(const CompiledModel& cm, double s, double c_hat) {
  thread_local std::vector<double> lw;
  const double max = posterior_log_weights(cm, s, lw);
  const auto& rows = cm.rows();
  double total = 0.0, tail = 0.0;
  for (std::size_t k = 0; k < rows.size(); ++k) {
    if (lw[k] < max - kVoidLogGap) continue;
    const auto& r = rows[k];
    const double w = std::exp(lw[k] - max);
    total += w;
    tail += w * normal_survival((c_hat - (r.target_mean + r.slope * (s - r.sensor_mean))) / std::sqrt(r.target_cond_var));
  }
  return std::clamp(tail / total, 0.0, 1.0);
}

Json DivertRule::to_json() const {
  Json iv = Json::array();
  for (const auto& i : intervals) iv.push_back(Json::array({i.lower, i.upper}));
  return {{"schema_version", kSchemaVersion},
          {"kind", "divert_rule"},
          {"policy", {{"c_hat", policy.c_hat}, {"lambda0", policy.lambda0}, {"lambda1", policy.lambda1}}},
          {"tolerance", tolerance},
          {"scan", Json::array({scan_lower, scan_upper})},
          {"grid_points", grid_points},
          {"model_hash", hex64(model_hash)},
          {"intervals", iv}};
}

DivertRule DivertRule::from_json(const Json& j) {
  try {
    if (at(j, "kind") != "divert_rule") throw FormatError("not a divert rule document");
    DivertRule r;
    const Json& p = at(j, "policy");
    r.policy = {number(at(p, "c_hat"), "c_hat"), number(at(p, "lambda0"), "lambda0"), number(at(p, "lambda1"), "lambda1")};
    r.tolerance = number(at(j, "tolerance"), "tolerance");
    r.scan_lower = number(at(j, "scan").at(0), "scan");
    r.scan_upper = number(at(j, "scan").at(1), "scan");
    r.grid_points = at(j, "grid_points").get<int>();
    r.model_hash = parse_hash(at(j, "model_hash"));
    for (const auto& i : at(j, "intervals")) r.intervals.push_back({number(i.at(0), "lower"), number(i.at(1), "upper")});
    for (std::size_t k = 0; k < r.intervals.size(); ++k) {
      if (!(r.intervals[k].lower <= r.intervals[k].upper)) throw FormatError("interval with lower > upper");
      if (k > 0 && !(r.intervals[k - 1].upper < r.intervals[k].lower)) throw FormatError("intervals overlap or are unsorted");
    }
    return r;
  } catch (const nlohmann::json::exception& e) {
    throw FormatError(fmt::format("divert rule: {}", e.what()));
  }
}

std::string DivertRule::to_csv() const {
  std::string out = "lower,upper\n";
  for (const auto& i : intervals) out += format_double(i.lower) + "," + format_double(i.upper) + "\n";
  return out;
}

std::uint64_t model_hash(const CompiledModel& cm) { return fnv1a64(dump_json(cm.to_json(), -1)); }

DivertRule compile_rule(const CompiledModel& cm, const Policy& p, int grid_points) {
  p.check();
  if (grid_points < 2) throw ArgumentError("grid needs at least two points");
  DivertRule rule;
  rule.policy = p;
  rule.grid_points = grid_points;
  rule.model_hash = model_hash(cm);
  double lo = std::numeric_limits<double>::infinity(), hi = -lo, sd_max = 0.0;
  for (const auto& r : cm.rows()) {
    lo = std::min(lo, r.sensor_mean);
    hi = std::max(hi, r.sensor_mean);
    sd_max = std::max(sd_max, std::sqrt(r.sensor_var));
  }
  rule.scan_lower = lo - 6.0 * sd_max;
  rule.scan_upper = hi + 6.0 * sd_max;
  const double threshold = p.threshold();
  if (threshold >= 1.0) return rule;

  auto divert = [&](double s) { return sensor_tail(cm, s, p.c_hat) > threshold; };
  auto boundary = [&](double a, double b) {
    const bool left = divert(a);
    while (b - a > rule.tolerance) {
      const double m = 0.5 * (a + b);
      if (m <= a || m >= b) break;
      (divert(m) == left ? a : b) = m;
    }
    return 0.5 * (a + b);
  };

  const double step = (rule.scan_upper - rule.scan_lower) / (grid_points - 1);
  auto grid = [&](int i) { return i == grid_points - 1 ? rule.scan_upper : rule.scan_lower + step * i; };
  bool state = divert(grid(0));
  double start = -std::numeric_limits<double>::infinity();
  for (int i = 1; i < grid_points; ++i) {
    const bool next = divert(grid(i));
    if (next == state) continue;
    const double b = boundary(grid(i - 1), grid(i));
    if (next)
      start = b;
    else
      rule.intervals.push_back({start, b});
    state = next;
  }
  if (state) rule.intervals.push_back({start, std::numeric_limits<double>::infinity()});
  return rule;
}

Action rule_decide(const DivertRule& rule, double s) {
  auto it = std::lower_bound(rule.intervals.begin(), rule.intervals.end(), s,
                             [](const Interval& i, double x) { return i.upper < x; });
  return it != rule.intervals.end() && it->lower <= s ? Action::divert : Action::accept;
}

}  // namespace cgbn
