#include "cgbn/io.hpp"

#include <algorithm>
#include <charconv>
#include <cmath>
#include <fstream>
#include <sstream>

#include <fmt/format.h>

#include "cgbn/errors.hpp"

namespace cgbn {

namespace {

const Json& field(const Json& j, const char* key, const std::string& where) {
  auto it = j.find(key);
  if (it == j.end()) throw FormatError(fmt::format("{}: missing field '{}'", where, key));
  return *it;
}

template <class T>
T get_as(const Json& j, const std::string& where) {
  try {
    return j.get<T>();
  } catch (const nlohmann::json::exception& e) {
    throw FormatError(fmt::format("{}: {}", where, e.what()));
  }
}

std::vector<int> config_states(const Network& net, NodeId v, const Json& config, const std::string& where) {
  const auto& dp = net.node(v).discrete_parents;
  const auto labels = get_as<std::vector<std::string>>(config, where);
  if (labels.size() != dp.size())
    throw FormatError(fmt::format("{}: config has {} entries, node has {} discrete parents", where, labels.size(), dp.size()));
  std::vector<int> states;
  for (std::size_t i = 0; i < dp.size(); ++i) {
    const auto& st = net.node(dp[i]).spec.states;
    auto it = std::find(st.begin(), st.end(), labels[i]);
    if (it == st.end())
      throw FormatError(fmt::format("{}: '{}' is not a state of '{}'", where, labels[i], net.label(dp[i])));
    states.push_back(static_cast<int>(it - st.begin()));
  }
  return states;
}

bool parents_resolved(const Network& net, NodeId v) {
  for (NodeId p : net.node(v).parents)
    if (p == kNoNode) return false;
  return true;
}

// Puts row i of `rows` at the index of its declared configuration.
template <class Row>
std::vector<Row> order_rows(const Network& net, NodeId v, const Json& raw, std::vector<Row> rows, const std::string& where) {
  if (!parents_resolved(net, v) || rows.size() != net.parent_config_count(v)) return rows;
  bool any = false;
  for (const auto& r : raw) any = any || r.contains("config");
  if (!any) return rows;
  std::vector<Row> out(rows.size());
  std::vector<char> seen(rows.size(), 0);
  for (std::size_t i = 0; i < rows.size(); ++i) {
    const auto w = fmt::format("{} row {}", where, i);
    const std::size_t k = net.parent_config_index(v, config_states(net, v, field(raw[i], "config", w), w));
    if (seen[k]) throw FormatError(fmt::format("{}: configuration listed twice", w));
    seen[k] = 1;
    out[k] = std::move(rows[i]);
  }
  return out;
}

std::vector<std::string> config_labels(const Network& net, NodeId v, std::size_t index) {
  const auto& dp = net.node(v).discrete_parents;
  std::vector<std::string> labels(dp.size());
  for (std::size_t i = dp.size(); i-- > 0;) {
    const auto& st = net.node(dp[i]).spec.states;
    labels[i] = st[index % st.size()];
    index /= st.size();
  }
  return labels;
}

void dump_value(const Json& j, int indent, int depth, std::string& out) {
  const auto newline = [&](int d) {
    if (indent < 0) return;
    out += '\n';
    out.append(static_cast<std::size_t>(indent * d), ' ');
  };
  switch (j.type()) {
    case Json::value_t::object: {
      if (j.empty()) {
        out += "{}";
        return;
      }
      out += '{';
      bool first = true;
      for (auto it = j.begin(); it != j.end(); ++it) {
        if (!first) out += ',';
        first = false;
        newline(depth + 1);
        out += Json(it.key()).dump();
        out += indent < 0 ? ":" : ": ";
        dump_value(it.value(), indent, depth + 1, out);
      }
      newline(depth);
      out += '}';
      return;
    }
    case Json::value_t::array: {
      if (j.empty()) {
        out += "[]";
        return;
      }
      // numeric arrays stay on one line
      bool flat = true;
      for (const auto& e : j) flat = flat && e.is_number();
      out += '[';
      bool first = true;
      for (const auto& e : j) {
        if (!first) out += flat && indent >= 0 ? ", " : ",";
        first = false;
        if (!flat) newline(depth + 1);
        dump_value(e, indent, depth + 1, out);
      }
      if (!flat) newline(depth);
      out += ']';
      return;
    }
    case Json::value_t::number_float: {
      const double x = j.get<double>();
      if (!std::isfinite(x)) {
        out += Json(format_double(x)).dump();
        return;
      }
      out += format_double(x);
      return;
    }
    default:
      out += j.dump();
  }
}

}  // namespace

Network network_from_json(const Json& j) {
  if (!j.is_object()) throw FormatError("network document must be an object");
  const int version = get_as<int>(field(j, "schema_version", "network"), "schema_version");
  if (version != kSchemaVersion) throw FormatError(fmt::format("unsupported schema_version {}", version));
  const Json& nodes = field(j, "nodes", "network");
  if (!nodes.is_array()) throw FormatError("network: 'nodes' must be an array");

  std::vector<NodeSpec> specs;
  for (std::size_t i = 0; i < nodes.size(); ++i) {
    const Json& n = nodes[i];
    const auto where = fmt::format("node {}", i);
    NodeSpec s;
    s.label = get_as<std::string>(field(n, "label", where), where);
    const auto w = fmt::format("node '{}'", s.label);
    const auto kind = get_as<std::string>(field(n, "kind", w), w);
    if (n.contains("parents")) s.parents = get_as<std::vector<std::string>>(n["parents"], w + " parents");
    if (kind == "discrete") {
      s.kind = NodeKind::discrete;
      s.states = get_as<std::vector<std::string>>(field(n, "states", w), w + " states");
      for (const auto& row : field(n, "cpt", w)) s.cpt.push_back(get_as<std::vector<double>>(field(row, "probs", w), w + " probs"));
    } else if (kind == "continuous") {
      s.kind = NodeKind::continuous;
      for (const auto& row : field(n, "clg", w)) {
        ClgBlock b;
        b.intercept = get_as<double>(field(row, "intercept", w), w + " intercept");
        if (row.contains("coefficients")) b.coefficients = get_as<std::vector<double>>(row["coefficients"], w + " coefficients");
        b.variance = get_as<double>(field(row, "variance", w), w + " variance");
        s.clg.push_back(std::move(b));
      }
    } else {
      throw FormatError(fmt::format("{}: kind must be 'discrete' or 'continuous', got '{}'", w, kind));
    }
    specs.push_back(std::move(s));
  }

  // Row order can only be resolved once parents are known.
  const Network draft(specs);
  for (std::size_t i = 0; i < specs.size(); ++i) {
    const auto v = static_cast<NodeId>(i);
    if (!draft.duplicate_labels().empty() && draft.id(specs[i].label) != v) continue;
    const auto where = fmt::format("node '{}'", specs[i].label);
    if (specs[i].kind == NodeKind::discrete)
      specs[i].cpt = order_rows(draft, v, nodes[i]["cpt"], std::move(specs[i].cpt), where);
    else
      specs[i].clg = order_rows(draft, v, nodes[i]["clg"], std::move(specs[i].clg), where);
  }
  return Network(std::move(specs));
}

Json network_to_json(const Network& net) {
  Json nodes = Json::array();
  for (NodeId v = 0; v < static_cast<NodeId>(net.size()); ++v) {
    const auto& n = net.node(v);
    Json o;
    o["label"] = n.label();
    o["parents"] = n.spec.parents;
    if (n.is_discrete()) {
      o["kind"] = "discrete";
      o["states"] = n.spec.states;
      Json rows = Json::array();
      for (std::size_t k = 0; k < n.spec.cpt.size(); ++k)
        rows.push_back({{"config", config_labels(net, v, k)}, {"probs", n.spec.cpt[k]}});
      o["cpt"] = rows;
    } else {
      o["kind"] = "continuous";
      Json rows = Json::array();
      for (std::size_t k = 0; k < n.spec.clg.size(); ++k) {
        const auto& b = n.spec.clg[k];
        rows.push_back({{"config", config_labels(net, v, k)},
                        {"intercept", b.intercept},
                        {"coefficients", b.coefficients},
                        {"variance", b.variance}});
      }
      o["clg"] = rows;
    }
    nodes.push_back(std::move(o));
  }
  return {{"schema_version", kSchemaVersion}, {"nodes", nodes}};
}

Evidence evidence_from_json(const Network& net, const Json& j) {
  if (!j.is_object()) throw FormatError("evidence must be a flat object");
  Evidence e;
  for (auto it = j.begin(); it != j.end(); ++it) {
    if (it.key() == "schema_version") continue;
    const NodeId v = net.id(it.key());
    if (net.node(v).is_discrete()) {
      if (!it->is_string()) throw FormatError(fmt::format("evidence '{}': expected a state label", it.key()));
      const auto& st = net.node(v).spec.states;
      auto s = std::find(st.begin(), st.end(), it->get<std::string>());
      if (s == st.end())
        throw ArgumentError(fmt::format("evidence '{}': unknown state '{}'", it.key(), it->get<std::string>()));
      e.discrete[v] = static_cast<int>(s - st.begin());
    } else {
      if (!it->is_number()) throw FormatError(fmt::format("evidence '{}': expected a number", it.key()));
      e.continuous[v] = it->get<double>();
    }
  }
  check_evidence(net, e);
  return e;
}

Json evidence_to_json(const Network& net, const Evidence& e) {
  Json j = Json::object();
  for (auto [v, s] : e.discrete) j[net.label(v)] = net.node(v).spec.states.at(s);
  for (auto [v, x] : e.continuous) j[net.label(v)] = x;
  return j;
}

Json mixture_to_json(const Network& net, const GaussianMixture& m) {
  Json vars = Json::array(), sources = Json::array(), comps = Json::array();
  for (NodeId v : m.variables) vars.push_back(net.label(v));
  for (NodeId d : m.sources) sources.push_back(net.label(d));
  for (const auto& c : m.components) {
    Json src = Json::array();
    for (std::size_t i = 0; i < c.source.size(); ++i) src.push_back(net.node(m.sources[i]).spec.states.at(c.source[i]));
    Json cov = Json::array();
    for (Eigen::Index r = 0; r < c.covariance.rows(); ++r) {
      Json row = Json::array();
      for (Eigen::Index k = 0; k < c.covariance.cols(); ++k) row.push_back(c.covariance(r, k));
      cov.push_back(row);
    }
    comps.push_back({{"weight", c.weight},
                     {"mean", std::vector<double>(c.mean.data(), c.mean.data() + c.mean.size())},
                     {"covariance", cov},
                     {"source", src}});
  }
  return {{"variables", vars}, {"sources", sources}, {"components", comps}};
}

Json clique_tree_to_json(const CliqueTree& tree) {
  const Network& net = *tree.network();
  auto labels = [&](const std::vector<NodeId>& vs) {
    Json a = Json::array();
    for (NodeId v : vs) a.push_back(net.label(v));
    return a;
  };
  Json cliques = Json::array();
  for (std::size_t c = 0; c < tree.size(); ++c) {
    std::size_t configs = 1;
    for (NodeId v : tree.clique(c))
      if (net.node(v).is_discrete()) configs *= static_cast<std::size_t>(net.cardinality(v));
    cliques.push_back({{"index", c},
                       {"variables", labels(tree.clique(c))},
                       {"parent", tree.parent(c)},
                       {"separator", labels(tree.separator(c))},
                       {"configurations", configs}});
  }
  return {{"root", tree.root()}, {"cliques", cliques}, {"elimination_order", labels(tree.elimination_order())}};
}

std::string dump_json(const Json& j, int indent) {
  std::string out;
  dump_value(j, indent, 0, out);
  out += '\n';
  return out;
}

std::string format_double(double x) {
  if (std::isinf(x)) return x > 0 ? "inf" : "-inf";
  if (std::isnan(x)) return "nan";
  return fmt::format("{}", x);
}

double parse_double(std::string_view s) {
  if (s == "inf") return std::numeric_limits<double>::infinity();
  if (s == "-inf") return -std::numeric_limits<double>::infinity();
  double x = 0.0;
  const auto [end, ec] = std::from_chars(s.data(), s.data() + s.size(), x);
  if (ec != std::errc{} || end != s.data() + s.size())
    throw FormatError(fmt::format("not a number: '{}'", s));
  return x;
}

std::uint64_t fnv1a64(std::string_view bytes) {
  std::uint64_t h = 0xcbf29ce484222325ULL;
  for (unsigned char c : bytes) {
    h ^= c;
    h *= 0x100000001b3ULL;
  }
  return h;
}

std::string hex64(std::uint64_t h) { return fmt::format("{:016x}", h); }

std::uint64_t network_hash(const Network& net) { return fnv1a64(dump_json(network_to_json(net), -1)); }

std::uint64_t evidence_hash(const Network& net, const Evidence& e) {
  return fnv1a64(dump_json(evidence_to_json(net, e), -1));
}

std::string read_text_file(const std::filesystem::path& path) {
  std::ifstream in(path, std::ios::binary);
  if (!in) throw FormatError(fmt::format("cannot read '{}'", path.string()));
  std::ostringstream ss;
  ss << in.rdbuf();
  return ss.str();
}

Json read_json_file(const std::filesystem::path& path) {
  const auto text = read_text_file(path);
  try {
    return Json::parse(text);
  } catch (const nlohmann::json::parse_error& e) {
    throw FormatError(fmt::format("'{}': {}", path.string(), e.what()));
  }
}

void write_text_file(const std::filesystem::path& path, std::string_view text) {
  if (path.has_parent_path()) std::filesystem::create_directories(path.parent_path());
  std::ofstream out(path, std::ios::binary | std::ios::trunc);
  if (!out) throw FormatError(fmt::format("cannot write '{}'", path.string()));
  out.write(text.data(), static_cast<std::streamsize>(text.size()));
  if (!out) throw FormatError(fmt::format("failed writing '{}'", path.string()));
}

Network load_network(const std::filesystem::path& path) { return network_from_json(read_json_file(path)); }

Evidence load_evidence(const Network& net, const std::filesystem::path& path) {
  return evidence_from_json(net, read_json_file(path));
}

}  // namespace cgbn
