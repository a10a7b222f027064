#pragma once

#include "msd/config.hpp"
#include "msd/expr.hpp"
#include "msd/gp.hpp"
#include "msd/mlp.hpp"
#include "msd/ode.hpp"
#include "msd/training.hpp"

#include "json.hpp"

#include <cstddef>
#include <cstdint>
#include <filesystem>
#include <functional>
#include <map>
#include <optional>
#include <string>
#include <string_view>
#include <vector>

namespace msd {

inline constexpr int kReportSchemaVersion = 1;
inline constexpr std::string_view kToolVersion = "0.1.0";

struct TrajectoryComparison {
  /// ||candidate_d - reference_d||_2 / ||reference_d||_2 per component; the
  /// plain norm of the difference when the reference component is zero.
  std::vector<double> relative_l2;
  std::vector<double> max_abs_error;

  bool operator==(const TrajectoryComparison&) const = default;
};

/// Both trajectories must share t0, dt, length and dimension.
TrajectoryComparison compare_trajectories(const Trajectory& reference, const Trajectory& candidate);

struct TrainingSummary {
  std::size_t iterations_run = 0;
  double initial_loss = 0.0;
  double final_loss = 0.0;
  double best_loss = 0.0;
  std::size_t best_iteration = 0;

  bool operator==(const TrainingSummary&) const = default;
};

TrainingSummary summarize(const TrainResult& result);

struct FrontPoint {
  std::size_t complexity = 0;
  double loss = 0.0;
  std::string expression;

  bool operator==(const FrontPoint&) const = default;
};

struct ComponentResult {
  /// 1-based.
  int component = 0;
  std::uint64_t seed = 0;
  /// Simplified infix and prefix forms of the selected expression.
  std::string expression;
  std::string prefix;
  std::size_t complexity = 0;
  double loss = 0.0;
  double parsimony = 0.0;
  double fitness = 0.0;
  std::optional<std::string> known_term;
  std::optional<std::string> reference;
  std::optional<double> relative_error;
  std::vector<FrontPoint> front;

  bool operator==(const ComponentResult&) const = default;
};

struct RunSeeds {
  std::uint64_t noise = 0;
  std::uint64_t training = 0;
  std::uint64_t sr_base = 0;

  bool operator==(const RunSeeds&) const = default;
};

struct DiscoveryReport {
  int schema_version = kReportSchemaVersion;
  std::string tool_version{kToolVersion};
  std::string timestamp;
  std::map<std::string, std::string> config;
  RunSeeds seeds;
  std::optional<TrainingSummary> training;
  std::optional<TrajectoryComparison> trajectory;
  std::vector<ComponentResult> components;

  bool operator==(const DiscoveryReport&) const = default;
  /// Equality ignoring `timestamp`.
  bool same_results(const DiscoveryReport& other) const;
};

nlohmann::json report_to_json(const DiscoveryReport& report);
/// Throws InvalidInputError on a missing field or an unsupported schema
/// version.
DiscoveryReport report_from_json(const nlohmann::json& doc);
void save_report(const DiscoveryReport& report, const std::filesystem::path& path);
DiscoveryReport load_report(const std::filesystem::path& path);
/// Plain-text table of the discovered expressions and their errors.
std::string format_report(const DiscoveryReport& report);

OdeSystem make_system(const ExperimentConfig& config);
Trajectory simulate_truth(const ExperimentConfig& config);
/// The truth trajectory with the configured measurement noise added.
Trajectory make_training_data(const ExperimentConfig& config, const Trajectory& truth);

/// Ground-truth expression for a 1-based component: the configured
/// override if any, otherwise the system's own right-hand side, minus the
/// known term when one is configured.
ExprTree reference_expression(const ExperimentConfig& config, int component);
std::optional<ExprTree> known_term(const ExperimentConfig& config, int component);

/// Components to distill, 1-based; every component when none are configured.
std::vector<int> discovery_components(const ExperimentConfig& config);

/// Distills one network output with genetic programming. Targets are
/// f_NN(x) - known_term(x) on the columns of `data_states`; the relative
/// error against the reference is measured on `evaluation_states`.
ComponentResult discover_component(const Mlp& model, const Eigen::MatrixXd& data_states,
                                   const Eigen::MatrixXd& evaluation_states, const ExperimentConfig& config,
                                   int component);

/// Hex FNV-1a hash of every setting that influences training.
std::string training_cache_key(const ExperimentConfig& config);

struct TrainedModel {
  Mlp model;
  TrainingSummary summary;
  std::vector<double> loss_history;
  bool from_cache = false;
};

using LogSink = std::function<void(const std::string&)>;

/// Trains on `data`, or reuses the cached checkpoint for the same
/// training key when caching is enabled.
TrainedModel train_or_load(const ExperimentConfig& config, const Trajectory& data, const LogSink& log = {});

/// simulate, add noise, train, re-simulate, distill and score. Writes
/// truth.csv, data.csv, model.ckpt, loss_history.csv, resimulated.csv and
/// report.json into the output directory. Stage failures surface as
/// StageError.
DiscoveryReport run_experiment(const ExperimentConfig& config, const LogSink& log = {});

std::string loss_history_to_csv(const std::vector<double>& history);
std::string current_timestamp();

}  // namespace msd
