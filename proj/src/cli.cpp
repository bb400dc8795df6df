#include "cgbn/cli.hpp"

#include <cmath>

#include <CLI11.hpp>
#include <fmt/format.h>
#include <fmt/ostream.h>

#include "cgbn/errors.hpp"
#include "cgbn/fixture.hpp"
#include "cgbn/inference.hpp"
#include "cgbn/io.hpp"
#include "cgbn/mixture.hpp"
#include "cgbn/simulator.hpp"

namespace cgbn {

namespace fs = std::filesystem;

namespace {

void apply(RunConfig& cfg, const Overrides& o) {
  if (o.network) cfg.network = *o.network;
  if (o.evidence) cfg.evidence = *o.evidence;
  if (o.out) cfg.out = *o.out;
  if (o.seed) cfg.seed = *o.seed;
}

template <class T>
void read_opt(const Json& j, const char* key, T& dst) {
  auto it = j.find(key);
  if (it == j.end()) return;
  try {
    dst = it->get<T>();
  } catch (const nlohmann::json::exception& e) {
    throw FormatError(fmt::format("config field '{}': {}", key, e.what()));
  }
}

// Runs a command body, mapping library errors onto exit codes.
template <class F>
int guarded(std::ostream& err, F&& body) {
  try {
    return body();
  } catch (const FormatError& e) {
    fmt::print(err, "error: {}\n", e.what());
    return kExitIo;
  } catch (const fs::filesystem_error& e) {
    fmt::print(err, "error: {}\n", e.what());
    return kExitIo;
  } catch (const Error& e) {
    fmt::print(err, "error: {}\n", e.what());
    return kExitDomain;
  }
}

Network load_valid_network(const RunConfig& cfg) {
  if (cfg.network.empty()) throw FormatError("no network file given");
  Network net = load_network(cfg.network);
  const auto violations = validate(net);
  if (!violations.empty())
    throw ArgumentError(fmt::format("network '{}' has {} violation(s); run validate", cfg.network.string(), violations.size()));
  return net;
}

Evidence load_optional_evidence(const RunConfig& cfg, const Network& net) {
  if (cfg.evidence.empty()) return {};
  return load_evidence(net, cfg.evidence);
}

NodeId continuous_node(const Network& net, const std::string& label) {
  if (!net.contains(label)) throw FormatError(fmt::format("config names unknown node '{}'", label));
  const NodeId v = net.id(label);
  if (!net.node(v).is_continuous()) throw FormatError(fmt::format("'{}' must be continuous", label));
  return v;
}

}  // namespace

RunConfig default_config(const Overrides& o) {
  RunConfig cfg;
  apply(cfg, o);
  return cfg;
}

RunConfig load_config(const fs::path& path, const Overrides& o) {
  const Json j = read_json_file(path);
  if (!j.is_object()) throw FormatError("config must be a JSON object");
  int version = 0;
  read_opt(j, "schema_version", version);
  if (version != kSchemaVersion) throw FormatError(fmt::format("config schema_version must be {}", kSchemaVersion));
  const fs::path base = path.parent_path();
  auto resolve = [&](const char* key, fs::path& dst) {
    std::string s;
    read_opt(j, key, s);
    if (!s.empty()) dst = fs::path(s).is_absolute() ? fs::path(s) : base / s;
  };
  RunConfig cfg;
  resolve("network", cfg.network);
  resolve("evidence", cfg.evidence);
  resolve("model", cfg.model);
  resolve("out", cfg.out);
  read_opt(j, "sensor", cfg.sensor);
  read_opt(j, "target", cfg.target);
  read_opt(j, "assay", cfg.assay);
  read_opt(j, "grid_points", cfg.grid_points);
  if (auto it = j.find("policy"); it != j.end()) {
    read_opt(*it, "c_hat", cfg.policy.c_hat);
    read_opt(*it, "lambda0", cfg.policy.lambda0);
    read_opt(*it, "lambda1", cfg.policy.lambda1);
  }
  if (auto it = j.find("infer"); it != j.end()) read_opt(*it, "targets", cfg.infer_targets);
  if (auto it = j.find("report"); it != j.end()) read_opt(*it, "curve_points", cfg.curve_points);
  if (auto it = j.find("simulate"); it != j.end()) {
    read_opt(*it, "batches", cfg.batches);
    read_opt(*it, "samples", cfg.samples);
    read_opt(*it, "seed", cfg.seed);
  }
  apply(cfg, o);
  try {
    cfg.policy.check();
  } catch (const ArgumentError& e) {
    throw FormatError(fmt::format("config policy: {}", e.what()));
  }
  if (cfg.grid_points < 2) throw FormatError("grid_points must be at least 2");
  if (cfg.curve_points < 2) throw FormatError("report.curve_points must be at least 2");
  if (cfg.batches < 1 || cfg.samples < 1) throw FormatError("simulate.batches and simulate.samples must be positive");
  return cfg;
}

int cmd_validate(const RunConfig& cfg, std::ostream& out, std::ostream& err) {
  return guarded(err, [&] {
    if (cfg.network.empty()) throw FormatError("no network file given");
    const Network net = load_network(cfg.network);
    const auto violations = validate(net);
    for (const auto& v : violations) fmt::print(out, "{}: {}: {}\n", v.node, v.rule, v.message);
    if (!violations.empty()) return static_cast<int>(kExitDomain);
    fmt::print(out, "ok: {} nodes ({} discrete, {} continuous)\n", net.size(), net.discrete_nodes().size(),
               net.continuous_nodes().size());
    return static_cast<int>(kExitOk);
  });
}

int cmd_infer(const RunConfig& cfg, std::ostream& out, std::ostream& err) {
  return guarded(err, [&] {
    const Network net = load_valid_network(cfg);
    const Evidence z = load_optional_evidence(cfg, net);
    auto tree = std::make_shared<const CliqueTree>(build_clique_tree(net));
    const auto state = propagate(tree, z);

    Json discrete = Json::object(), continuous = Json::object();
    for (NodeId v : net.discrete_nodes()) {
      const auto probs = std::get<std::vector<double>>(node_marginal(state, v));
      Json row = Json::object();
      for (std::size_t s = 0; s < probs.size(); ++s) row[net.node(v).spec.states[s]] = probs[s];
      discrete[net.label(v)] = row;
    }
    std::vector<NodeId> targets;
    if (cfg.infer_targets.empty()) {
      for (NodeId v : net.continuous_nodes())
        if (!z.observes(v)) targets.push_back(v);
    } else {
      for (const auto& l : cfg.infer_targets) {
        const NodeId v = continuous_node(net, l);
        if (z.observes(v)) throw ArgumentError(fmt::format("'{}' is observed", l));
        targets.push_back(v);
      }
    }
    for (NodeId v : targets) {
      const auto weak = std::get<MomentSummary>(node_marginal(state, v));
      Json o = mixture_to_json(net, exact_mixture(tree, v, z));
      o["mean"] = weak.mean[0];
      o["variance"] = weak.covariance(0, 0);
      continuous[net.label(v)] = o;
    }
    const Json doc = {{"evidence", evidence_to_json(net, z)},
                      {"log_likelihood", state.log_likelihood()},
                      {"discrete", discrete},
                      {"continuous", continuous}};
    const auto text = dump_json(doc);
    write_text_file(cfg.out / "posterior.json", text);
    out << text;
    return static_cast<int>(kExitOk);
  });
}

int cmd_compile(const RunConfig& cfg, std::ostream& out, std::ostream& err) {
  return guarded(err, [&] {
    const Network net = load_valid_network(cfg);
    const Evidence slow = load_optional_evidence(cfg, net);
    const auto model = compile(net, slow, continuous_node(net, cfg.sensor), continuous_node(net, cfg.target));
    const auto rule = compile_rule(model, cfg.policy, cfg.grid_points);
    write_text_file(cfg.out / "model.json", dump_json(model.to_json()));
    write_text_file(cfg.out / "rule.json", dump_json(rule.to_json()));
    write_text_file(cfg.out / "rule.csv", rule.to_csv());
    fmt::print(out, "components: {}\n", model.joint().components.size());
    fmt::print(out, "intervals: {}\n", rule.intervals.size());
    for (const auto& i : rule.intervals) fmt::print(out, "  [{}, {}]\n", format_double(i.lower), format_double(i.upper));
    return static_cast<int>(kExitOk);
  });
}

int cmd_simulate(const RunConfig& cfg, std::ostream& out, std::ostream& err) {
  return guarded(err, [&] {
    const Network net = load_valid_network(cfg);
    ComparisonOptions opt;
    opt.line.sensor = continuous_node(net, cfg.sensor);
    opt.line.target = continuous_node(net, cfg.target);
    opt.line.assay = continuous_node(net, cfg.assay);
    opt.line.samples = cfg.samples;
    opt.batches = cfg.batches;
    opt.seed = cfg.seed;
    opt.grid_points = cfg.grid_points;
    const auto report = compare_controllers(net, cfg.policy, opt);
    write_text_file(cfg.out / "metrics.csv", report.metrics_csv());
    write_text_file(cfg.out / "trace.csv", report.trace_csv());
    write_text_file(cfg.out / "latency.csv", report.latency_csv());
    fmt::print(out, "batches: {}  samples/batch: {}  seed: {}  naive threshold: {}\n", cfg.batches, cfg.samples, cfg.seed,
               format_double(report.naive_threshold));
    fmt::print(out, "{:<10} {:>12} {:>10} {:>10} {:>12}\n", "controller", "total_loss", "slag", "violations", "regret");
    for (auto k : {ControllerKind::bayesian, ControllerKind::naive, ControllerKind::oracle}) {
      const auto t = report.total(k);
      fmt::print(out, "{:<10} {:>12.1f} {:>10.4f} {:>10.4f} {:>12.1f}\n", to_string(k), t.total_loss, t.slag_fraction,
                 t.violation_rate, t.regret);
    }
    return static_cast<int>(kExitOk);
  });
}

std::string ellipses_csv(const CompiledModel& cm) {
  std::string csv = "center_x,center_y,axis1,axis2,angle_rad,weight,kind\n";
  auto row = [&](const Eigen::VectorXd& mean, const Eigen::MatrixXd& cov, double weight, const char* kind) {
    const Ellipse e = ellipse_params(Eigen::Vector2d(mean[0], mean[1]), Eigen::Matrix2d(cov));
    csv += fmt::format("{},{},{},{},{},{},{}\n", format_double(e.center[0]), format_double(e.center[1]),
                       format_double(e.major), format_double(e.minor), format_double(e.angle), format_double(weight), kind);
  };
  for (const auto& c : cm.joint().components) row(c.mean, c.covariance, c.weight, "component");
  const Gaussian g = moment_match(cm.joint());
  row(g.mean, g.covariance, 1.0, "approximation");
  return csv;
}

std::string decision_curve_csv(const CompiledModel& cm, const Policy& p, int points) {
  const auto rule = compile_rule(cm, p, 2);
  std::string csv = "s,tail_prob,threshold,action\n";
  for (int i = 0; i < points; ++i) {
    const double s = i == points - 1 ? rule.scan_upper
                                     : rule.scan_lower + (rule.scan_upper - rule.scan_lower) * i / (points - 1);
    const double tail = sensor_tail(cm, s, p.c_hat);
    csv += fmt::format("{},{},{},{}\n", format_double(s), format_double(tail), format_double(p.threshold()),
                       to_string(decide(tail, p)));
  }
  return csv;
}

int cmd_report(const RunConfig& cfg, std::ostream& out, std::ostream& err) {
  return guarded(err, [&] {
    const fs::path path = cfg.model.empty() ? cfg.out / "model.json" : cfg.model;
    if (!fs::exists(path)) throw FormatError(fmt::format("compiled model '{}' not found; run compile first", path.string()));
    const auto model = CompiledModel::from_json(read_json_file(path));
    write_text_file(cfg.out / "ellipses.csv", ellipses_csv(model));
    write_text_file(cfg.out / "decision_curve.csv", decision_curve_csv(model, cfg.policy, cfg.curve_points));
    fmt::print(out, "wrote {} and {}\n", (cfg.out / "ellipses.csv").string(), (cfg.out / "decision_curve.csv").string());
    return static_cast<int>(kExitOk);
  });
}

int cmd_fixture(const RunConfig& cfg, std::ostream& out, std::ostream& err) {
  return guarded(err, [&] {
    const Network net = reference_network();
    const Policy p = reference_policy();
    write_text_file(cfg.out / "fixture_network.json", dump_json(network_to_json(net)));
    write_text_file(cfg.out / "fixture_evidence.json", dump_json(evidence_to_json(net, reference_slow_evidence(net))));
    const Json config = {{"schema_version", kSchemaVersion},
                         {"network", "fixture_network.json"},
                         {"evidence", "fixture_evidence.json"},
                         {"out", "../out"},
                         {"sensor", kReferenceSensor},
                         {"target", kReferenceTarget},
                         {"assay", kReferenceAssay},
                         {"policy", {{"c_hat", p.c_hat}, {"lambda0", p.lambda0}, {"lambda1", p.lambda1}}},
                         {"grid_points", kDefaultGridPoints},
                         {"infer", {{"targets", Json::array({kReferenceTarget})}}},
                         {"report", {{"curve_points", 401}}},
                         {"simulate", {{"batches", 20}, {"samples", 1000}, {"seed", 1}}}};
    write_text_file(cfg.out / "fixture_config.json", dump_json(config));
    fmt::print(out, "wrote fixture files to {}\n", cfg.out.string());
    return static_cast<int>(kExitOk);
  });
}

int run_cli(int argc, char** argv, std::ostream& out, std::ostream& err) {
  CLI::App app{"Conditional-Gaussian network engine: inference, compilation and sorting-line simulation"};
  app.require_subcommand(1);
  app.fallthrough();
  std::string config;
  std::string network, evidence, outdir;
  std::uint64_t seed = 0;
  app.add_option("--config", config, "Run configuration JSON");
  auto* seed_opt = app.add_option("--seed", seed, "Simulation seed (overrides the config)");
  app.add_option("--out", outdir, "Output directory (overrides the config)");
  app.add_option("--network", network, "Network JSON (overrides the config)");
  app.add_option("--evidence", evidence, "Evidence JSON (overrides the config)");

  using Command = int (*)(const RunConfig&, std::ostream&, std::ostream&);
  const std::vector<std::tuple<const char*, const char*, Command>> commands{
      {"validate", "Check a network against every structural and numeric rule", cmd_validate},
      {"infer", "Posterior marginals and exact mixtures given the evidence", cmd_infer},
      {"compile", "Compile the runtime model and divert rule", cmd_compile},
      {"simulate", "Simulate batches and compare controllers", cmd_simulate},
      {"report", "Write ellipse and decision-curve plot data from a compiled model", cmd_report},
      {"fixture", "Write the reference network, evidence and config", cmd_fixture},
  };
  for (const auto& [name, help, fn] : commands) app.add_subcommand(name, help);

  try {
    app.parse(argc, argv);
  } catch (const CLI::ParseError& e) {
    const int code = app.exit(e, out, err);
    return code == 0 ? kExitOk : kExitIo;
  }

  Overrides o;
  if (!network.empty()) o.network = network;
  if (!evidence.empty()) o.evidence = evidence;
  if (!outdir.empty()) o.out = outdir;
  if (seed_opt->count() > 0) o.seed = seed;

  RunConfig cfg;
  const int loaded = guarded(err, [&] {
    cfg = config.empty() ? default_config(o) : load_config(config, o);
    return static_cast<int>(kExitOk);
  });
  if (loaded != kExitOk) return loaded;

  for (const auto& [name, help, fn] : commands)
    if (app.got_subcommand(name)) return fn(cfg, out, err);
  return kExitIo;
}

}  // namespace cgbn
