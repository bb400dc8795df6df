#pragma once

#include <cstdint>
#include <map>
#include <string>
#include <vector>

#include "cgbn/decision.hpp"
#include "cgbn/io.hpp"
#include "cgbn/mixture.hpp"

namespace cgbn {

inline constexpr int kDefaultGridPoints = 4096;
inline constexpr double kRuleTolerance = 1e-9;

/// Runtime model for one batch: the joint (sensor, target) mixture with the
/// slow evidence already absorbed and every other continuous node integrated out.
class CompiledModel {
 public:
  /// Per-component constants for the real-time path.
  struct Row {
    double log_prior;
    double sensor_mean;
    double sensor_var;
    double log_norm;  // -0.5 log(2 pi sensor_var)
    double target_mean;
    double slope;     // cov / sensor_var
    double target_cond_var;
  };

  CompiledModel() = default;
  /// Labels and state names of every node the model mentions are copied from
  /// `net` so the model can be serialized and read back without it.
  CompiledModel(const Network& net, Evidence baked, GaussianMixture joint);

  const Evidence& baked_evidence() const { return baked_; }
  NodeId sensor() const { return joint_.variables[0]; }
  NodeId target() const { return joint_.variables[1]; }
  const std::string& label(NodeId v) const { return labels_.at(v); }
  const std::string& sensor_label() const { return label(sensor()); }
  const std::string& target_label() const { return label(target()); }
  /// State names of a discrete source or observed node.
  const std::vector<std::string>& states(NodeId v) const { return states_.at(v); }
  const GaussianMixture& joint() const { return joint_; }
  const std::vector<Row>& rows() const { return rows_; }
  std::uint64_t network_hash() const { return network_hash_; }
  std::uint64_t evidence_hash() const { return evidence_hash_; }

  /// Throws ConfigurationError unless the model was compiled from exactly
  /// this network and slow evidence.
  void check_fresh(const Network& net, const Evidence& slow) const;

  Json to_json() const;
  static CompiledModel from_json(const Json& j);

 private:
  void build_rows();

  Evidence baked_;
  GaussianMixture joint_;
  std::map<NodeId, std::string> labels_;
  std::map<NodeId, std::vector<std::string>> states_;
  std::uint64_t network_hash_ = 0;
  std::uint64_t evidence_hash_ = 0;
  std::vector<Row> rows_;
};

CompiledModel compile(const Network& net, const Evidence& slow, NodeId sensor, NodeId target,
                      const MixtureOptions& opt = {});

/// Posterior mixture of the target given a sensor reading.
GaussianMixture sensor_posterior(const CompiledModel& cm, double s);

/// tail_prob(sensor_posterior(cm, s), c_hat) without building the mixture.
double sensor_tail(const CompiledModel& cm, double s, double c_hat);

struct Interval {
  double lower;
  double upper;
  bool operator==(const Interval&) const = default;
};

/// Sensor readings on which diverting is optimal. Intervals reaching the end
/// of the scanned range are stored unbounded on that side.
struct DivertRule {
  std::vector<Interval> intervals;
  Policy policy;
  double tolerance = kRuleTolerance;
  double scan_lower = 0.0;
  double scan_upper = 0.0;
  int grid_points = kDefaultGridPoints;
  std::uint64_t model_hash = 0;

  bool in_scan_range(double s) const { return s >= scan_lower && s <= scan_upper; }

  Json to_json() const;
  static DivertRule from_json(const Json& j);
  /// "lower,upper" per interval with a header row.
  std::string to_csv() const;
};

DivertRule compile_rule(const CompiledModel& cm, const Policy& p, int grid_points = kDefaultGridPoints);

Action rule_decide(const DivertRule& rule, double s);

/// Hash of the serialized model, stamped on rules compiled from it.
std::uint64_t model_hash(const CompiledModel& cm);

}  // namespace cgbn
