#pragma once

#include "msd/benchmarks.hpp"
#include "msd/gp.hpp"
#include "msd/key_value.hpp"
#include "msd/training.hpp"

#include <cstddef>
#include <cstdint>
#include <filesystem>
#include <map>
#include <string>
#include <string_view>
#include <vector>

namespace msd {

enum class SystemKind { Glycolytic, Linear };

/// Everything one experiment needs, resolved from a sectioned key/value
/// file. Component numbers in `sr_components`, `known_terms` and
/// `references` are 1-based, as written in config files and reports.
struct ExperimentConfig {
  SystemKind system = SystemKind::Glycolytic;
  /// Glycolytic parameter file; relative paths resolve against the config file.
  std::filesystem::path params_file;
  GlycolyticParams params;
  /// Linear systems only.
  Eigen::MatrixXd matrix;
  StateVector x0;

  double t0 = 0.0;
  double t1 = 10.0;
  double dt = 0.01;
  double noise_sigma = 0.0;
  std::uint64_t noise_seed = 0;

  SchemeFamily scheme_family = SchemeFamily::AdamsMoulton;
  int scheme_steps = 1;

  TrainConfig training;

  GpConfig sr;
  /// Parsimony weight per component is this ratio times the variance of
  /// that component's targets.
  double parsimony_ratio = 1e-3;
  std::vector<int> sr_components;
  std::map<int, std::string> known_terms;
  std::map<int, std::string> references;
  std::size_t sr_threads = 1;

  std::filesystem::path output_dir = "runs/default";
  std::filesystem::path cache_dir;
  bool use_cache = true;

  int dimension() const;
  /// Throws InvalidInputError naming the offending key.
  void validate() const;
  /// Canonical rendering of every resolved setting, keyed `section.key`.
  std::map<std::string, std::string> to_map() const;

  static ExperimentConfig from_key_values(const KeyValueFile& file,
                                          const std::filesystem::path& base_dir = {});
  static ExperimentConfig load(const std::filesystem::path& path);
};

/// Parses `key=value` and applies it to `file`; throws InvalidInputError
/// when there is no `=`.
void apply_override(KeyValueFile& file, const std::string& assignment);

std::string_view to_string(SystemKind kind);

}  // namespace msd
