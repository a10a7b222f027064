#pragma once

#include "msd/mlp.hpp"
#include "msd/ode.hpp"

#include "json.hpp"

#include <filesystem>
#include <string>

namespace msd {

/// Writes `content` to a sibling temporary file and renames it over `path`,
/// so readers never observe a truncated file.
void write_file_atomic(const std::filesystem::path& path, const std::string& content);
std::string read_file(const std::filesystem::path& path);

/// CSV with header `t,S1,...,SD`, one row per sample, shortest round-trip
/// decimal floats and LF line endings.
std::string trajectory_to_csv(const Trajectory& traj);
void save_trajectory(const Trajectory& traj, const std::filesystem::path& path);

/// Parses a trajectory CSV. The step is inferred from the time column,
/// which must be uniform; a single-row file gets dt = 1. Malformed input
/// raises ParseError with the offending line and column.
Trajectory trajectory_from_csv(const std::string& text);
Trajectory load_trajectory(const std::filesystem::path& path);

inline constexpr int kCheckpointVersion = 1;

nlohmann::json checkpoint_to_json(const Mlp& mlp, const nlohmann::json& metadata = nlohmann::json::object());
Mlp checkpoint_from_json(const nlohmann::json& doc);
void save_checkpoint(const Mlp& mlp, const std::filesystem::path& path,
                     const nlohmann::json& metadata = nlohmann::json::object());
Mlp load_checkpoint(const std::filesystem::path& path);
nlohmann::json load_checkpoint_metadata(const std::filesystem::path& path);

nlohmann::json load_json(const std::filesystem::path& path);

}  // namespace msd
