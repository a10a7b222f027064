#include "msd/io.hpp"

#include "msd/errors.hpp"
#include "msd/expr.hpp"

#include <charconv>
#include <cmath>
#include <fstream>
#include <sstream>
#include <vector>

namespace msd {

namespace fs = std::filesystem;
using nlohmann::json;

void write_file_atomic(const fs::path& path, const std::string& content) {
  if (path.has_parent_path()) fs::create_directories(path.parent_path());
  fs::path tmp = path;
  tmp += ".tmp";
  {
    std::ofstream out(tmp, std::ios::binary | std::ios::trunc);
    if (!out) throw InvalidInputError("cannot write '" + tmp.string() + "'");
    out << content;
    out.flush();
    if (!out) throw InvalidInputError("failed writing '" + tmp.string() + "'");
  }
  fs::rename(tmp, path);
}

std::string read_file(const fs::path& path) {
  std::ifstream in(path, std::ios::binary);
  if (!in) throw InvalidInputError("cannot open '" + path.string() + "'");
  std::ostringstream buffer;
  buffer << in.rdbuf();
  return buffer.str();
}

std::string trajectory_to_csv(const Trajectory& traj) {
  std::string out = "t";
  for (Eigen::Index d = 0; d < traj.dimension(); ++d) out += "," + variable_name(static_cast<int>(d));
  out += '\n';
  for (Eigen::Index n = 0; n < traj.size(); ++n) {
    out += format_double(traj.time(n));
    for (Eigen::Index d = 0; d < traj.dimension(); ++d) {
      out += ',';
      out += format_double(traj.states()(d, n));
    }
    out += '\n';
  }
  return out;
}

void save_trajectory(const Trajectory& traj, const fs::path& path) { write_file_atomic(path, trajectory_to_csv(traj)); }

Trajectory trajectory_from_csv(const std::string& text) {
  std::istringstream in(text);
  std::string line;
  std::size_t line_no = 0;
  std::size_t columns = 0;
  std::vector<double> times;
  std::vector<std::vector<double>> rows;
  while (std::getline(in, line)) {
    ++line_no;
    if (!line.empty() && line.back() == '\r') line.pop_back();
    if (line_no == 1) {
      if (line.rfind("t,", 0) != 0) throw ParseError("header must start with 't,'", 1, 1);
      columns = static_cast<std::size_t>(std::count(line.begin(), line.end(), ',')) + 1;
      continue;
    }
    if (line.empty()) continue;
    std::vector<double> values;
    std::size_t start = 0;
    while (true) {
      const std::size_t end = std::min(line.find(',', start), line.size());
      double v = 0.0;
      const char* first = line.data() + start;
      const char* last = line.data() + end;
      auto [ptr, ec] = std::from_chars(first, last, v);
      if (ec != std::errc() || ptr != last || first == last || !std::isfinite(v)) {
        throw ParseError("invalid number '" + line.substr(start, end - start) + "'", line_no, start + 1);
      }
      values.push_back(v);
      if (end == line.size()) break;
      start = end + 1;
    }
    if (values.size() != columns) {
      throw ParseError("expected " + std::to_string(columns) + " fields, found " + std::to_string(values.size()),
                       line_no, line.size());
    }
    times.push_back(values[0]);
    values.erase(values.begin());
    rows.push_back(std::move(values));
  }
  if (columns < 2) throw ParseError("missing header", 1, 1);
  if (rows.empty()) throw ParseError("trajectory has no samples", line_no + 1, 1);

  const auto count = static_cast<Eigen::Index>(rows.size());
  const auto dimension = static_cast<Eigen::Index>(columns - 1);
  Eigen::MatrixXd states(dimension, count);
  for (Eigen::Index n = 0; n < count; ++n) {
    for (Eigen::Index d = 0; d < dimension; ++d) states(d, n) = rows[static_cast<std::size_t>(n)][static_cast<std::size_t>(d)];
  }
  const double t0 = times.front();
  if (count == 1) return Trajectory(t0, 1.0, std::move(states));

  // Prefer the candidate step that regenerates the time column exactly.
  const double candidates[] = {(times.back() - t0) / static_cast<double>(count - 1), times[1] - t0};
  double dt = candidates[0];
  for (const double c : candidates) {
    bool exact = true;
    for (Eigen::Index n = 0; n < count && exact; ++n) exact = t0 + static_cast<double>(n) * c == times[static_cast<std::size_t>(n)];
    if (exact) {
      dt = c;
      break;
    }
  }
  if (!(dt > 0.0)) throw ParseError("time column must be strictly increasing", 3, 1);
  for (Eigen::Index n = 0; n < count; ++n) {
    const double expected = t0 + static_cast<double>(n) * dt;
    if (std::abs(times[static_cast<std::size_t>(n)] - expected) > 1e-9 * std::max(1.0, std::abs(expected))) {
      throw ParseError("time column is not uniformly spaced", static_cast<std::size_t>(n) + 2, 1);
    }
  }
  return Trajectory(t0, dt, std::move(states));
}

Trajectory load_trajectory(const fs::path& path) { return trajectory_from_csv(read_file(path)); }

json checkpoint_to_json(const Mlp& mlp, const json& metadata) {
  json layers = json::array();
  for (const auto& layer : mlp.layers()) {
    const Eigen::VectorXd w = layer.weight.reshaped();
    layers.push_back({{"rows", layer.weight.rows()},
                      {"cols", layer.weight.cols()},
                      {"weight", std::vector<double>(w.data(), w.data() + w.size())},
                      {"bias", std::vector<double>(layer.bias.data(), layer.bias.data() + layer.bias.size())}});
  }
  auto vec = [](const Eigen::VectorXd& v) { return std::vector<double>(v.data(), v.data() + v.size()); };
  const Normalization& n = mlp.normalization();
  return json{{"format", "msd-mlp-checkpoint"},
              {"version", kCheckpointVersion},
              {"activation", std::string(to_string(mlp.activation()))},
              {"input_dim", mlp.input_dim()},
              {"hidden_widths", mlp.hidden_widths()},
              {"normalization",
               {{"input_mean", vec(n.input_mean)}, {"input_scale", vec(n.input_scale)}, {"output_scale", vec(n.output_scale)}}},
              {"layers", std::move(layers)},
              {"metadata", metadata}};
}

Mlp checkpoint_from_json(const json& doc) {
  try {
    if (doc.at("format").get<std::string>() != "msd-mlp-checkpoint") {
      throw InvalidInputError("not a network checkpoint");
    }
    const int version = doc.at("version").get<int>();
    if (version != kCheckpointVersion) {
      throw InvalidInputError("unsupported checkpoint version " + std::to_string(version));
    }
    auto vec = [](const json& j) {
      const auto v = j.get<std::vector<double>>();
      return Eigen::VectorXd(Eigen::Map<const Eigen::VectorXd>(v.data(), static_cast<Eigen::Index>(v.size())));
    };
    LayerParameters layers;
    for (const auto& l : doc.at("layers")) {
      const auto rows = l.at("rows").get<Eigen::Index>();
      const auto cols = l.at("cols").get<Eigen::Index>();
      const Eigen::VectorXd w = vec(l.at("weight"));
      if (w.size() != rows * cols) throw InvalidInputError("checkpoint weight size does not match its shape");
      DenseLayer layer{Eigen::MatrixXd(rows, cols), vec(l.at("bias"))};
      layer.weight.reshaped() = w;
      layers.push_back(std::move(layer));
    }
    const json& n = doc.at("normalization");
    Normalization norm{vec(n.at("input_mean")), vec(n.at("input_scale")), vec(n.at("output_scale"))};
    return Mlp(std::move(layers), parse_activation(doc.at("activation").get<std::string>()), std::move(norm));
  } catch (const json::exception& e) {
    throw InvalidInputError(std::string("malformed checkpoint: ") + e.what());
  }
}

void save_checkpoint(const Mlp& mlp, const fs::path& path, const json& metadata) {
  write_file_atomic(path, checkpoint_to_json(mlp, metadata).dump(1) + "\n");
}

json load_json(const fs::path& path) {
  const std::string text = read_file(path);
  try {
    return json::parse(text);
  } catch (const json::parse_error& e) {
    // byte offset -> line/column
    std::size_t line = 1;
    std::size_t column = 1;
    for (std::size_t i = 0; i + 1 < e.byte && i < text.size(); ++i) {
      if (text[i] == '\n') {
        ++line;
        column = 1;
      } else {
        ++column;
      }
    }
    throw ParseError(std::string("invalid JSON in '") + path.string() + "'", line, column);
  }
}

Mlp load_checkpoint(const fs::path& path) { return checkpoint_from_json(load_json(path)); }

json load_checkpoint_metadata(const fs::path& path) {
  const json doc = load_json(path);
  return doc.contains("metadata") ? doc.at("metadata") : json::object();
}

}  // namespace msd
