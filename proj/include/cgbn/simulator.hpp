#pragma once

#include <cstdint>
#include <limits>
#include <random>
#include <string>
#include <vector>

#include "cgbn/compiler.hpp"
#include "cgbn/decision.hpp"
#include "cgbn/model.hpp"

namespace cgbn {

/// SplitMix64 used as a counter-based generator: output n of stream s under
/// seed k is mix(key(k, s) + (n + 1) * 0x9e3779b97f4a7c15). Any draw can be
/// reproduced from (seed, stream, counter) alone.
class CounterRng {
 public:
  using result_type = std::uint64_t;

  CounterRng(std::uint64_t seed, std::uint64_t stream);

  static constexpr result_type min() { return 0; }
  static constexpr result_type max() { return std::numeric_limits<result_type>::max(); }
  result_type operator()();

  /// Uniform on [0, 1) with 53 random bits.
  double uniform();
  double normal();

  static std::uint64_t mix(std::uint64_t z);

 private:
  std::uint64_t key_;
  std::uint64_t counter_ = 0;
  std::normal_distribution<double> normal_;
};

/// Roles of the nodes in a sorting-line simulation.
struct LineSpec {
  NodeId sensor = kNoNode;  // fast per-sample reading
  NodeId target = kNoNode;  // per-sample contamination
  NodeId assay = kNoNode;   // slow batch observation
  int samples = 1000;       // 0.1 cu ft samples per 100 cu ft box
};

/// One staged batch. The target, the sensor and their continuous descendants
/// are drawn afresh per sample; every other node is drawn once per batch.
struct BatchGroundTruth {
  std::uint64_t seed = 0;
  std::vector<int> discrete_states;  // per node; -1 for continuous nodes
  std::vector<double> batch_values;  // per node; NaN for discrete and per-sample nodes
  std::vector<NodeId> per_sample_nodes;
  double true_assay = 0.0;      // noise-free mean of the assay node
  double observed_assay = 0.0;
  Evidence assay;               // the slow evidence handed to the compiler
  std::vector<double> truth;    // per-sample target value
  std::vector<double> sensor;   // per-sample sensor reading
};

BatchGroundTruth stage_batch(const Network& net, const LineSpec& line, std::uint64_t seed);

enum class ControllerKind { bayesian, naive, oracle };

std::string_view to_string(ControllerKind k);

struct Controller {
  ControllerKind kind = ControllerKind::oracle;
  /// Bayesian: model and rule compiled for this batch.
  const CompiledModel* model = nullptr;
  const DivertRule* rule = nullptr;
  /// Bayesian: decide through the posterior instead of the precompiled rule.
  bool use_posterior = false;
  /// Naive: divert iff the sensor reading exceeds this.
  double threshold = 0.0;

  static Controller bayesian(const CompiledModel& m, const DivertRule& r, bool use_posterior = false);
  static Controller naive(double threshold);
  static Controller oracle();
};

struct RunMetrics {
  ControllerKind controller = ControllerKind::oracle;
  int samples = 0;
  int diverted = 0;
  int accepted = 0;
  int violations = 0;          // accepted samples whose contamination exceeds c_hat
  int out_of_range = 0;        // sensor readings outside the rule's scanned range
  double slag_fraction = 0.0;
  double violation_rate = 0.0; // violations / accepted
  double total_loss = 0.0;
  double mean_loss = 0.0;
  double regret = 0.0;         // total_loss minus the oracle's on the same batch
  double latency_mean_ns = 0.0;
  double latency_max_ns = 0.0;
  double latency_p50_ns = 0.0;
  double latency_p99_ns = 0.0;
  std::vector<Action> decisions;
};

/// Runs one controller over a staged batch. A Bayesian controller whose model
/// was compiled from another network or assay, or whose rule was compiled
/// from another model or policy, raises ConfigurationError.
RunMetrics run_batch(const Network& net, const BatchGroundTruth& gt, const Controller& c, const Policy& p);

/// Loss of one decision under the two-point loss.
double realized_loss(Action a, double truth, const Policy& p);

/// Threshold minimizing the naive controller's total loss over the given
/// samples (hindsight sweep over every observed reading). Ties go to the
/// smallest threshold.
double best_naive_threshold(const std::vector<double>& sensor, const std::vector<double>& truth, const Policy& p);

struct ComparisonOptions {
  LineSpec line;
  int batches = 20;
  std::uint64_t seed = 1;
  int grid_points = kDefaultGridPoints;
};

struct BatchResult {
  int batch = 0;
  BatchGroundTruth truth;
  std::size_t components = 0;
  std::size_t intervals = 0;
  std::vector<RunMetrics> runs;  // bayesian, naive, oracle
};

struct ComparisonReport {
  Policy policy;
  double naive_threshold = 0.0;
  std::vector<BatchResult> batches;

  /// Sum over batches for one controller.
  RunMetrics total(ControllerKind k) const;

  /// Per-batch and total rows: loss, slag and violation columns.
  std::string metrics_csv() const;
  /// One row per sample with every controller's decision.
  std::string trace_csv() const;
  /// Decision latencies; kept apart because they vary between runs.
  std::string latency_csv() const;
};

/// Stages every batch from its own seed, compiles the Bayesian controller per
/// batch, sweeps the naive threshold over all batches, and runs the three
/// controllers on identical ground truth.
ComparisonReport compare_controllers(const Network& net, const Policy& p, const ComparisonOptions& opt);

/// Seed of batch b in a run seeded with `seed`.
std::uint64_t batch_seed(std::uint64_t seed, int b);

}  // namespace cgbn
