#include "msd/experiment.hpp"

#include "msd/errors.hpp"
#include "msd/io.hpp"
#include "msd/simplify.hpp"
#include "msd/sr_metrics.hpp"

#include <algorithm>
#include <atomic>
#include <chrono>
#include <cmath>
#include <cstdio>
#include <ctime>
#include <exception>
#include <mutex>
#include <sstream>
#include <thread>

namespace msd {

namespace fs = std::filesystem;
using nlohmann::json;

namespace {

void emit(const LogSink& log, const std::string& message) {
  if (log) log(message);
}

template <typename F>
auto run_stage(const std::string& stage, F&& body) -> decltype(body()) {
  try {
    return body();
  } catch (const StageError&) {
    throw;
  } catch (const std::exception& e) {
    throw StageError(stage, e.what());
  }
}

json optional_json(const std::optional<std::string>& v) { return v ? json(*v) : json(nullptr); }

template <typename T>
T field(const json& doc, const char* key) {
  if (!doc.is_object() || !doc.contains(key)) throw InvalidInputError(std::string("report is missing '") + key + "'");
  try {
    return doc.at(key).get<T>();
  } catch (const json::exception&) {
    throw InvalidInputError(std::string("report field '") + key + "' has the wrong type");
  }
}

template <typename T>
std::optional<T> optional_field(const json& doc, const char* key) {
  if (!doc.contains(key) || doc.at(key).is_null()) return std::nullopt;
  return field<T>(doc, key);
}

std::string pad(std::string s, std::size_t width) {
  if (s.size() < width) s.append(width - s.size(), ' ');
  return s;
}

std::string scientific(double v) {
  char buf[32];
  std::snprintf(buf, sizeof buf, "%.3e", v);
  return buf;
}

}  // namespace

TrajectoryComparison compare_trajectories(const Trajectory& reference, const Trajectory& candidate) {
  if (reference.dimension() != candidate.dimension() || reference.size() != candidate.size()) {
    throw InvalidInputError("trajectories differ in dimension or length");
  }
  if (reference.dt() != candidate.dt() || reference.t0() != candidate.t0()) {
    throw InvalidInputError("trajectories differ in time grid");
  }
  TrajectoryComparison out;
  for (Eigen::Index d = 0; d < reference.dimension(); ++d) {
    const Eigen::VectorXd ref = reference.states().row(d).transpose();
    const Eigen::VectorXd diff = candidate.states().row(d).transpose() - ref;
    const double denom = ref.norm();
    out.relative_l2.push_back(denom > 0.0 ? diff.norm() / denom : diff.norm());
    out.max_abs_error.push_back(diff.cwiseAbs().maxCoeff());
  }
  return out;
}

TrainingSummary summarize(const TrainResult& result) {
  TrainingSummary s;
  s.iterations_run = result.loss_history.size();
  s.initial_loss = result.loss_history.empty() ? result.best_loss : result.loss_history.front();
  s.final_loss = result.loss_history.empty() ? result.best_loss : result.loss_history.back();
  s.best_loss = result.best_loss;
  s.best_iteration = result.best_iteration;
  return s;
}

bool DiscoveryReport::same_results(const DiscoveryReport& other) const {
  DiscoveryReport copy = other;
  copy.timestamp = timestamp;
  return *this == copy;
}

json report_to_json(const DiscoveryReport& r) {
  json doc;
  doc["schema_version"] = r.schema_version;
  doc["tool_version"] = r.tool_version;
  doc["timestamp"] = r.timestamp;
  doc["config"] = r.config;
  doc["seeds"] = {{"noise", r.seeds.noise}, {"training", r.seeds.training}, {"sr_base", r.seeds.sr_base}};
  if (r.training) {
    doc["training"] = {{"iterations_run", r.training->iterations_run},
                       {"initial_loss", r.training->initial_loss},
                       {"final_loss", r.training->final_loss},
                       {"best_loss", r.training->best_loss},
                       {"best_iteration", r.training->best_iteration}};
  } else {
    doc["training"] = nullptr;
  }
  if (r.trajectory) {
    doc["trajectory"] = {{"relative_l2", r.trajectory->relative_l2}, {"max_abs_error", r.trajectory->max_abs_error}};
  } else {
    doc["trajectory"] = nullptr;
  }
  json comps = json::array();
  for (const auto& c : r.components) {
    json front = json::array();
    for (const auto& p : c.front) {
      front.push_back({{"complexity", p.complexity}, {"loss", p.loss}, {"expression", p.expression}});
    }
    comps.push_back({{"component", c.component},
                     {"seed", c.seed},
                     {"expression", c.expression},
                     {"prefix", c.prefix},
                     {"complexity", c.complexity},
                     {"loss", c.loss},
                     {"parsimony", c.parsimony},
                     {"fitness", c.fitness},
                     {"known_term", optional_json(c.known_term)},
                     {"reference", optional_json(c.reference)},
                     {"relative_error", c.relative_error ? json(*c.relative_error) : json(nullptr)},
                     {"front", front}});
  }
  doc["components"] = comps;
  return doc;
}

DiscoveryReport report_from_json(const json& doc) {
  DiscoveryReport r;
  r.schema_version = field<int>(doc, "schema_version");
  if (r.schema_version != kReportSchemaVersion) {
    throw InvalidInputError("unsupported report schema version " + std::to_string(r.schema_version));
  }
  r.tool_version = field<std::string>(doc, "tool_version");
  r.timestamp = field<std::string>(doc, "timestamp");
  r.config = field<std::map<std::string, std::string>>(doc, "config");
  const json seeds = field<json>(doc, "seeds");
  r.seeds.noise = field<std::uint64_t>(seeds, "noise");
  r.seeds.training = field<std::uint64_t>(seeds, "training");
  r.seeds.sr_base = field<std::uint64_t>(seeds, "sr_base");
  if (const auto t = optional_field<json>(doc, "training")) {
    TrainingSummary s;
    s.iterations_run = field<std::size_t>(*t, "iterations_run");
    s.initial_loss = field<double>(*t, "initial_loss");
    s.final_loss = field<double>(*t, "final_loss");
    s.best_loss = field<double>(*t, "best_loss");
    s.best_iteration = field<std::size_t>(*t, "best_iteration");
    r.training = s;
  }
  if (const auto t = optional_field<json>(doc, "trajectory")) {
    TrajectoryComparison c;
    c.relative_l2 = field<std::vector<double>>(*t, "relative_l2");
    c.max_abs_error = field<std::vector<double>>(*t, "max_abs_error");
    r.trajectory = c;
  }
  for (const json& item : field<json>(doc, "components")) {
    ComponentResult c;
    c.component = field<int>(item, "component");
    c.seed = field<std::uint64_t>(item, "seed");
    c.expression = field<std::string>(item, "expression");
    c.prefix = field<std::string>(item, "prefix");
    c.complexity = field<std::size_t>(item, "complexity");
    c.loss = field<double>(item, "loss");
    c.parsimony = field<double>(item, "parsimony");
    c.fitness = field<double>(item, "fitness");
    c.known_term = optional_field<std::string>(item, "known_term");
    c.reference = optional_field<std::string>(item, "reference");
    c.relative_error = optional_field<double>(item, "relative_error");
    for (const json& p : field<json>(item, "front")) {
      c.front.push_back(
          {field<std::size_t>(p, "complexity"), field<double>(p, "loss"), field<std::string>(p, "expression")});
    }
    r.components.push_back(std::move(c));
  }
  return r;
}

void save_report(const DiscoveryReport& report, const fs::path& path) {
  write_file_atomic(path, report_to_json(report).dump(2) + "\n");
}

DiscoveryReport load_report(const fs::path& path) { return report_from_json(load_json(path)); }

std::string format_report(const DiscoveryReport& r) {
  std::ostringstream out;
  out << "system: " << (r.config.count("system.name") ? r.config.at("system.name") : "?") << "  scheme: "
      << (r.config.count("scheme.family") ? r.config.at("scheme.family") : "?") << "("
      << (r.config.count("scheme.steps") ? r.config.at("scheme.steps") : "?") << ")\n";
  if (r.training) {
    out << "training: " << r.training->iterations_run << " iterations, best loss " << scientific(r.training->best_loss)
        << " at iteration " << r.training->best_iteration << "\n";
  }
  if (r.trajectory) {
    out << "re-simulation relative L2:";
    for (std::size_t d = 0; d < r.trajectory->relative_l2.size(); ++d) {
      out << " S" << d + 1 << "=" << scientific(r.trajectory->relative_l2[d]);
    }
    out << "\n";
  }
  if (!r.components.empty()) {
    out << "\n" << pad("component", 11) << pad("relative error", 16) << "expression\n";
    for (const auto& c : r.components) {
      out << pad(std::to_string(c.component), 11)
          << pad(c.relative_error ? scientific(*c.relative_error) : std::string("n/a"), 16) << c.expression;
      if (c.known_term) out << "   (known term " << *c.known_term << " removed)";
      out << "\n";
      if (c.reference) out << pad("", 27) << "reference: " << *c.reference << "\n";
    }
  }
  return out.str();
}

OdeSystem make_system(const ExperimentConfig& config) {
  if (config.system == SystemKind::Glycolytic) return glycolytic_system(config.params);
  return linear_system(config.matrix);
}

Trajectory simulate_truth(const ExperimentConfig& config) {
  return simulate(make_system(config), config.x0, config.t0, config.t1, config.dt);
}

Trajectory make_training_data(const ExperimentConfig& config, const Trajectory& truth) {
  return add_noise(truth, config.noise_sigma, config.noise_seed);
}

std::optional<ExprTree> known_term(const ExperimentConfig& config, int component) {
  const auto it = config.known_terms.find(component);
  if (it == config.known_terms.end()) return std::nullopt;
  return parse_infix(it->second);
}

ExprTree reference_expression(const ExperimentConfig& config, int component) {
  if (component < 1 || component > config.dimension()) throw InvalidInputError("component out of range");
  if (const auto it = config.references.find(component); it != config.references.end()) {
    return parse_infix(it->second);
  }
  ExprTree full = config.system == SystemKind::Glycolytic ? glycolytic_reference(config.params, component - 1)
                                                          : linear_reference(config.matrix, component - 1);
  if (const auto known = known_term(config, component)) return ExprTree::binary(Op::Sub, full, *known);
  return full;
}

std::vector<int> discovery_components(const ExperimentConfig& config) {
  if (!config.sr_components.empty()) return config.sr_components;
  std::vector<int> all(static_cast<std::size_t>(config.dimension()));
  for (std::size_t i = 0; i < all.size(); ++i) all[i] = static_cast<int>(i) + 1;
  return all;
}

ComponentResult discover_component(const Mlp& model, const Eigen::MatrixXd& data_states,
                                   const Eigen::MatrixXd& evaluation_states, const ExperimentConfig& config,
                                   int component) {
  if (component < 1 || component > model.output_dim()) {
    throw InvalidInputError("component " + std::to_string(component) + " is not a network output");
  }
  const auto row = static_cast<Eigen::Index>(component - 1);
  SrDataset data{data_states, model.forward_batch(data_states).row(row).transpose()};
  const std::optional<ExprTree> known = known_term(config, component);
  if (known) {
    for (Eigen::Index n = 0; n < data.samples(); ++n) {
      const Evaluation e = evaluate(*known, data_states.col(n));
      if (!e.valid) throw InvalidInputError("known term for component " + std::to_string(component) + " is undefined");
      data.targets[n] -= e.value;
    }
  }
  const Eigen::ArrayXd t = data.targets.array();
  const double variance = (t - t.mean()).square().mean();

  GpConfig gp = config.sr;
  gp.seed = config.sr.seed + static_cast<std::uint64_t>(row);
  GpResult evolved = evolve(data, gp);

  ComponentResult out;
  out.component = component;
  out.seed = gp.seed;
  out.parsimony = config.parsimony_ratio * variance;
  const ParetoEntry& best = select_best(evolved.front, out.parsimony);
  const ExprTree shown = simplify(best.expr);
  out.expression = to_infix(shown);
  out.prefix = to_prefix(shown);
  out.complexity = best.complexity;
  out.loss = best.loss;
  out.fitness = best.loss + out.parsimony * static_cast<double>(best.complexity);
  for (const auto& e : evolved.front) out.front.push_back({e.complexity, e.loss, to_infix(simplify(e.expr))});
  if (known) out.known_term = to_infix(*known);

  bool has_reference = true;
  if (config.system == SystemKind::Glycolytic && !config.references.count(component)) {
    has_reference = config.params.q == std::round(config.params.q) && config.params.q >= kMinPowerExponent &&
                    config.params.q <= kMaxPowerExponent;
  }
  if (has_reference) {
    const ExprTree ref = reference_expression(config, component);
    out.reference = to_infix(simplify(ref));
    try {
      out.relative_error = relative_error(best.expr, ref, evaluation_states);
    } catch (const UndefinedReferenceError&) {
      out.relative_error.reset();
    }
  }
  return out;
}

std::string training_cache_key(const ExperimentConfig& config) {
  std::string canonical;
  for (const auto& [key, value] : config.to_map()) {
    if (key.rfind("system.", 0) == 0 || key.rfind("data.", 0) == 0 || key.rfind("scheme.", 0) == 0 ||
        key.rfind("network.", 0) == 0 || key.rfind("training.", 0) == 0) {
      if (key == "system.params") continue;
      canonical += key + "=" + value + "\n";
    }
  }
  std::uint64_t h = 1469598103934665603ULL;
  for (unsigned char c : canonical) {
    h ^= c;
    h *= 1099511628211ULL;
  }
  char buf[17];
  std::snprintf(buf, sizeof buf, "%016llx", static_cast<unsigned long long>(h));
  return buf;
}

std::string loss_history_to_csv(const std::vector<double>& history) {
  std::string out = "iteration,loss\n";
  for (std::size_t i = 0; i < history.size(); ++i) out += std::to_string(i) + "," + format_double(history[i]) + "\n";
  return out;
}

namespace {

std::vector<double> loss_history_from_csv(const std::string& text) {
  std::vector<double> out;
  std::istringstream in(text);
  std::string line;
  std::getline(in, line);
  while (std::getline(in, line)) {
    const auto comma = line.find(',');
    if (comma == std::string::npos) throw ParseError("malformed loss history row", out.size() + 2, 1);
    out.push_back(parse_double(line.substr(comma + 1)));
  }
  return out;
}

json summary_to_json(const TrainingSummary& s) {
  return {{"iterations_run", s.iterations_run},
          {"initial_loss", s.initial_loss},
          {"final_loss", s.final_loss},
          {"best_loss", s.best_loss},
          {"best_iteration", s.best_iteration}};
}

}  // namespace

TrainedModel train_or_load(const ExperimentConfig& config, const Trajectory& data, const LogSink& log) {
  const std::string key = training_cache_key(config);
  const fs::path ckpt = config.cache_dir / (key + ".ckpt");
  const fs::path history = config.cache_dir / (key + ".loss.csv");
  if (config.use_cache && fs::exists(ckpt) && fs::exists(history)) {
    try {
      const json meta = load_checkpoint_metadata(ckpt);
      if (meta.value("cache_key", std::string()) == key && meta.contains("training")) {
        const json& t = meta.at("training");
        TrainingSummary s{t.at("iterations_run").get<std::size_t>(), t.at("initial_loss").get<double>(),
                          t.at("final_loss").get<double>(), t.at("best_loss").get<double>(),
                          t.at("best_iteration").get<std::size_t>()};
        emit(log, "train: reusing cached model " + ckpt.string());
        return TrainedModel{load_checkpoint(ckpt), s, loss_history_from_csv(read_file(history)), true};
      }
    } catch (const Error& e) {
      emit(log, std::string("train: ignoring unreadable cache entry: ") + e.what());
    }
  }
  const std::size_t every = std::max<std::size_t>(1, config.training.iterations / 10);
  TrainResult result = train(data, config.training, [&](std::size_t it, double loss) {
    if (it % every == 0) emit(log, "train: iteration " + std::to_string(it) + " loss " + scientific(loss));
  });
  TrainingSummary summary = summarize(result);
  if (config.use_cache) {
    save_checkpoint(result.model, ckpt, {{"cache_key", key}, {"training", summary_to_json(summary)}});
    write_file_atomic(history, loss_history_to_csv(result.loss_history));
  }
  return TrainedModel{std::move(result.model), summary, std::move(result.loss_history), false};
}

std::string current_timestamp() {
  const std::time_t now = std::chrono::system_clock::to_time_t(std::chrono::system_clock::now());
  std::tm utc{};
  gmtime_r(&now, &utc);
  char buf[32];
  std::strftime(buf, sizeof buf, "%Y-%m-%dT%H:%M:%SZ", &utc);
  return buf;
}

DiscoveryReport run_experiment(const ExperimentConfig& config, const LogSink& log) {
  config.validate();
  const fs::path dir = config.output_dir;
  DiscoveryReport report;
  report.timestamp = current_timestamp();
  report.config = config.to_map();
  report.seeds = {config.noise_seed, config.training.seed, config.sr.seed};

  const Trajectory truth = run_stage("simulate", [&] {
    emit(log, "simulate: " + std::string(to_string(config.system)) + " system");
    Trajectory t = simulate_truth(config);
    save_trajectory(t, dir / "truth.csv");
    return t;
  });
  const Trajectory data = run_stage("noise", [&] {
    Trajectory d = make_training_data(config, truth);
    save_trajectory(d, dir / "data.csv");
    return d;
  });
  const TrainedModel trained = run_stage("train", [&] {
    TrainedModel m = train_or_load(config, data, log);
    save_checkpoint(m.model, dir / "model.ckpt", {{"training", summary_to_json(m.summary)}});
    write_file_atomic(dir / "loss_history.csv", loss_history_to_csv(m.loss_history));
    emit(log, "train: best loss " + scientific(m.summary.best_loss));
    return m;
  });
  report.training = trained.summary;
  report.trajectory = run_stage("resimulate", [&] {
    const Trajectory resim = resimulate(trained.model, config.x0, config.t0, config.t1, config.dt);
    save_trajectory(resim, dir / "resimulated.csv");
    return compare_trajectories(truth, resim);
  });

  const std::vector<int> components = discovery_components(config);
  report.components = run_stage("discover", [&] {
    std::vector<std::optional<ComponentResult>> results(components.size());
    std::vector<std::exception_ptr> errors(components.size());
    std::atomic<std::size_t> next{0};
    std::mutex log_mutex;
    auto worker = [&] {
      for (std::size_t i = next++; i < components.size(); i = next++) {
        try {
          results[i] = discover_component(trained.model, data.states(), truth.states(), config, components[i]);
          std::lock_guard<std::mutex> lock(log_mutex);
          emit(log, "discover: component " + std::to_string(components[i]) + " -> " + results[i]->expression);
        } catch (...) {
          errors[i] = std::current_exception();
        }
      }
    };
    const std::size_t threads = std::min(config.sr_threads, components.size());
    if (threads <= 1) {
      worker();
    } else {
      std::vector<std::thread> pool;
      for (std::size_t t = 0; t < threads; ++t) pool.emplace_back(worker);
      for (auto& th : pool) th.join();
    }
    for (const auto& e : errors) {
      if (e) std::rethrow_exception(e);
    }
    std::vector<ComponentResult> out;
    for (auto& r : results) out.push_back(std::move(*r));
    return out;
  });

  run_stage("report", [&] {
    save_report(report, dir / "report.json");
    return 0;
  });
  return report;
}

}  // namespace msd
