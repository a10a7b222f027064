#include "msd/config.hpp"

#include "msd/errors.hpp"
#include "msd/expr.hpp"

#include <algorithm>
#include <cctype>
#include <cmath>
#include <set>

namespace msd {

namespace {

const std::set<std::string>& known_keys() {
  static const std::set<std::string> keys = {
      "system.name", "system.params", "system.matrix", "system.x0",
      "data.t0", "data.t1", "data.dt", "data.noise_sigma", "data.noise_seed",
      "scheme.family", "scheme.steps",
      "network.hidden", "network.activation", "network.normalize",
      "training.iterations", "training.learning_rate", "training.final_learning_rate", "training.seed",
      "training.minibatch", "training.tolerance",
      "sr.population", "sr.generations", "sr.tournament", "sr.crossover", "sr.mutation",
      "sr.constant_mutation_scale", "sr.seed", "sr.early_stop", "sr.elite", "sr.max_depth", "sr.max_size",
      "sr.init_min_depth", "sr.init_max_depth", "sr.mutation_max_depth", "sr.constant_min", "sr.constant_max",
      "sr.variable_probability", "sr.max_power", "sr.refine", "sr.refine_evaluations", "sr.parsimony_ratio",
      "sr.components", "sr.threads",
      "output.dir", "output.cache", "output.cache_dir"};
  return keys;
}

// Component-indexed keys such as `sr.known_term.5`; returns 0 when `key`
// does not have the form prefix + positive integer.
int indexed_key(const std::string& key, const std::string& prefix) {
  if (key.rfind(prefix, 0) != 0 || key.size() == prefix.size()) return 0;
  const std::string tail = key.substr(prefix.size());
  if (!std::all_of(tail.begin(), tail.end(), [](unsigned char c) { return std::isdigit(c); })) return 0;
  if (tail.size() > 6) return 0;
  return std::stoi(tail);
}

// Field of a glycolytic rate constant by its config name, or nullptr.
double* glycolytic_param(GlycolyticParams& p, const std::string& name) {
  const std::pair<const char*, double*> fields[] = {
      {"J0", &p.J0}, {"k1", &p.k1}, {"k2", &p.k2}, {"k3", &p.k3}, {"k4", &p.k4}, {"k5", &p.k5}, {"k6", &p.k6},
      {"K1", &p.K1}, {"q", &p.q}, {"Npool", &p.Npool}, {"A", &p.A}, {"kappa", &p.kappa}, {"psi", &p.psi},
      {"k", &p.k}};
  for (const auto& [n, field] : fields) {
    if (name == n) return field;
  }
  return nullptr;
}

const std::string kParamPrefix = "system.param.";

bool is_param_key(const std::string& key) {
  GlycolyticParams scratch;
  return key.rfind(kParamPrefix, 0) == 0 && glycolytic_param(scratch, key.substr(kParamPrefix.size())) != nullptr;
}

bool parse_bool(const std::string& key, const std::string& text) {
  std::string v = text;
  std::transform(v.begin(), v.end(), v.begin(), [](unsigned char c) { return std::tolower(c); });
  if (v == "true" || v == "yes" || v == "on" || v == "1") return true;
  if (v == "false" || v == "no" || v == "off" || v == "0") return false;
  throw InvalidInputError(key + ": expected a boolean, got '" + text + "'");
}

long long integer(const KeyValueFile& file, const std::string& key, long long fallback, long long min_value) {
  const auto v = file.get_int(key);
  if (!v) return fallback;
  if (*v < min_value) throw InvalidInputError(key + " must be >= " + std::to_string(min_value));
  return *v;
}

double real(const KeyValueFile& file, const std::string& key, double fallback) {
  return file.get_double(key).value_or(fallback);
}

std::vector<long long> integer_list(const std::string& key, const std::string& text) {
  std::vector<long long> out;
  for (double v : parse_double_list(text)) {
    if (v != std::floor(v) || std::abs(v) > 1e9) throw InvalidInputError(key + ": expected integers");
    out.push_back(static_cast<long long>(v));
  }
  return out;
}

std::string join(const std::vector<std::string>& parts) {
  std::string out;
  for (std::size_t i = 0; i < parts.size(); ++i) {
    if (i) out += ", ";
    out += parts[i];
  }
  return out;
}

template <typename T>
std::string join_numbers(const T& values) {
  std::vector<std::string> parts;
  for (const auto& v : values) {
    if constexpr (std::is_floating_point_v<std::decay_t<decltype(v)>>) {
      parts.push_back(format_double(v));
    } else {
      parts.push_back(std::to_string(v));
    }
  }
  return join(parts);
}

}  // namespace

std::string_view to_string(SystemKind kind) {
  return kind == SystemKind::Glycolytic ? "glycolytic" : "linear";
}

int ExperimentConfig::dimension() const {
  return static_cast<int>(system == SystemKind::Glycolytic ? kGlycolyticDimension : matrix.rows());
}

void ExperimentConfig::validate() const {
  const int d = dimension();
  if (d <= 0) throw InvalidInputError("system.matrix must be a non-empty square matrix");
  if (system == SystemKind::Linear && !matrix.allFinite()) throw InvalidInputError("system.matrix must be finite");
  if (system == SystemKind::Glycolytic) params.validate();
  if (x0.size() != d) throw InvalidInputError("system.x0 must have " + std::to_string(d) + " entries");
  if (!x0.allFinite()) throw InvalidInputError("system.x0 must be finite");
  if (!std::isfinite(t0) || !std::isfinite(t1) || !(t1 > t0)) throw InvalidInputError("data.t1 must exceed data.t0");
  if (!(dt > 0.0) || !std::isfinite(dt)) throw InvalidInputError("data.dt must be positive");
  if (!(noise_sigma >= 0.0) || !std::isfinite(noise_sigma)) throw InvalidInputError("data.noise_sigma must be >= 0");
  if (scheme_steps < 1 || scheme_steps > kMaxSchemeSteps) {
    throw InvalidInputError("scheme.steps must be in [1, " + std::to_string(kMaxSchemeSteps) + "]");
  }
  training.validate();
  sr.validate();
  if (!(parsimony_ratio >= 0.0) || !std::isfinite(parsimony_ratio)) {
    throw InvalidInputError("sr.parsimony_ratio must be >= 0");
  }
  for (int c : sr_components) {
    if (c < 1 || c > d) throw InvalidInputError("sr.components entries must be in [1, " + std::to_string(d) + "]");
  }
  for (const auto& [c, text] : known_terms) {
    if (c < 1 || c > d) throw InvalidInputError("sr.known_term." + std::to_string(c) + ": no such component");
    if (parse_infix(text).max_variable() >= d) {
      throw InvalidInputError("sr.known_term." + std::to_string(c) + " uses a variable beyond the state dimension");
    }
  }
  for (const auto& [c, text] : references) {
    if (c < 1 || c > d) throw InvalidInputError("sr.reference." + std::to_string(c) + ": no such component");
    if (parse_infix(text).max_variable() >= d) {
      throw InvalidInputError("sr.reference." + std::to_string(c) + " uses a variable beyond the state dimension");
    }
  }
  if (sr_threads < 1) throw InvalidInputError("sr.threads must be >= 1");
  if (output_dir.empty()) throw InvalidInputError("output.dir must not be empty");
}

std::map<std::string, std::string> ExperimentConfig::to_map() const {
  std::map<std::string, std::string> m;
  m["system.name"] = std::string(to_string(system));
  if (system == SystemKind::Glycolytic) {
    if (!params_file.empty()) m["system.params"] = params_file.generic_string();
    const std::vector<std::pair<const char*, double>> p = {
        {"J0", params.J0}, {"k1", params.k1}, {"k2", params.k2}, {"k3", params.k3}, {"k4", params.k4},
        {"k5", params.k5}, {"k6", params.k6}, {"K1", params.K1}, {"q", params.q}, {"Npool", params.Npool},
        {"A", params.A}, {"kappa", params.kappa}, {"psi", params.psi}, {"k", params.k}};
    for (const auto& [name, value] : p) m[std::string("system.param.") + name] = format_double(value);
  } else {
    std::vector<double> values;
    for (Eigen::Index i = 0; i < matrix.rows(); ++i) {
      for (Eigen::Index j = 0; j < matrix.cols(); ++j) values.push_back(matrix(i, j));
    }
    m["system.matrix"] = join_numbers(values);
  }
  m["system.x0"] = join_numbers(std::vector<double>(x0.data(), x0.data() + x0.size()));
  m["data.t0"] = format_double(t0);
  m["data.t1"] = format_double(t1);
  m["data.dt"] = format_double(dt);
  m["data.noise_sigma"] = format_double(noise_sigma);
  m["data.noise_seed"] = std::to_string(noise_seed);
  m["scheme.family"] = std::string(to_string(scheme_family));
  m["scheme.steps"] = std::to_string(scheme_steps);
  m["network.hidden"] = join_numbers(training.hidden_widths);
  m["network.activation"] = std::string(to_string(training.activation));
  m["network.normalize"] = training.normalize ? "true" : "false";
  m["training.iterations"] = std::to_string(training.iterations);
  m["training.learning_rate"] = format_double(training.learning_rate);
  m["training.final_learning_rate"] = format_double(training.final_learning_rate);
  m["training.seed"] = std::to_string(training.seed);
  m["training.minibatch"] = std::to_string(training.minibatch_size);
  m["training.tolerance"] = format_double(training.tolerance);
  m["sr.population"] = std::to_string(sr.population_size);
  m["sr.generations"] = std::to_string(sr.generations);
  m["sr.tournament"] = std::to_string(sr.tournament_size);
  m["sr.crossover"] = format_double(sr.crossover_probability);
  m["sr.mutation"] = format_double(sr.mutation_probability);
  m["sr.constant_mutation_scale"] = format_double(sr.constant_mutation_scale);
  m["sr.seed"] = std::to_string(sr.seed);
  m["sr.early_stop"] = format_double(sr.early_stop_fitness);
  m["sr.elite"] = std::to_string(sr.elite_count);
  m["sr.max_depth"] = std::to_string(sr.max_depth);
  m["sr.max_size"] = std::to_string(sr.max_size);
  m["sr.init_min_depth"] = std::to_string(sr.init_min_depth);
  m["sr.init_max_depth"] = std::to_string(sr.init_max_depth);
  m["sr.mutation_max_depth"] = std::to_string(sr.mutation_max_depth);
  m["sr.constant_min"] = format_double(sr.constant_min);
  m["sr.constant_max"] = format_double(sr.constant_max);
  m["sr.variable_probability"] = format_double(sr.variable_probability);
  m["sr.max_power"] = std::to_string(sr.max_power);
  m["sr.refine"] = sr.refine_constants ? "true" : "false";
  m["sr.refine_evaluations"] = std::to_string(sr.refine_max_evaluations);
  m["sr.parsimony_ratio"] = format_double(parsimony_ratio);
  m["sr.components"] = join_numbers(sr_components);
  m["sr.threads"] = std::to_string(sr_threads);
  for (const auto& [c, text] : known_terms) m["sr.known_term." + std::to_string(c)] = text;
  for (const auto& [c, text] : references) m["sr.reference." + std::to_string(c)] = text;
  m["output.dir"] = output_dir.generic_string();
  m["output.cache"] = use_cache ? "true" : "false";
  m["output.cache_dir"] = cache_dir.generic_string();
  return m;
}

ExperimentConfig ExperimentConfig::from_key_values(const KeyValueFile& file, const std::filesystem::path& base_dir) {
  for (const auto& [key, entry] : file.entries()) {
    if (known_keys().count(key) || is_param_key(key) || indexed_key(key, "sr.known_term.") > 0 ||
        indexed_key(key, "sr.reference.") > 0) {
      continue;
    }
    throw InvalidInputError("unknown configuration key '" + key + "' (line " + std::to_string(entry.line) + ")");
  }
  auto resolve = [&](const std::string& text) {
    std::filesystem::path p(text);
    return p.is_relative() && !base_dir.empty() ? base_dir / p : p;
  };

  ExperimentConfig c;
  const std::string name = file.get("system.name").value_or("glycolytic");
  if (name == "glycolytic") {
    c.system = SystemKind::Glycolytic;
    if (const auto params = file.get("system.params")) {
      c.params_file = resolve(*params);
      const GlycolyticBenchmark bench = load_glycolytic_benchmark(c.params_file);
      c.params = bench.params;
      c.x0 = bench.x0;
    } else {
      c.x0 = StateVector(kGlycolyticDimension);
      c.x0 << 0.5, 1.9, 0.18, 0.15, 0.16, 0.1, 0.064;
    }
    // Individual constants override the parameter file.
    for (const auto& [key, entry] : file.entries()) {
      if (is_param_key(key)) *glycolytic_param(c.params, key.substr(kParamPrefix.size())) = file.require_double(key);
    }
  } else if (name == "linear") {
    c.system = SystemKind::Linear;
    const std::vector<double> values = file.require_doubles("system.matrix");
    const auto d = static_cast<Eigen::Index>(std::llround(std::sqrt(static_cast<double>(values.size()))));
    if (d == 0 || static_cast<std::size_t>(d * d) != values.size()) {
      throw InvalidInputError("system.matrix must list the entries of a square matrix row by row");
    }
    c.matrix.resize(d, d);
    for (Eigen::Index i = 0; i < d; ++i) {
      for (Eigen::Index j = 0; j < d; ++j) c.matrix(i, j) = values[static_cast<std::size_t>(i * d + j)];
    }
    if (!file.contains("system.x0")) throw InvalidInputError("system.x0 is required for linear systems");
  } else {
    throw InvalidInputError("system.name must be 'glycolytic' or 'linear', got '" + name + "'");
  }
  if (file.contains("system.x0")) {
    const std::vector<double> x0 = file.require_doubles("system.x0");
    c.x0 = Eigen::Map<const StateVector>(x0.data(), static_cast<Eigen::Index>(x0.size()));
  }

  c.t0 = real(file, "data.t0", c.t0);
  c.t1 = real(file, "data.t1", c.t1);
  c.dt = real(file, "data.dt", c.dt);
  c.noise_sigma = real(file, "data.noise_sigma", c.noise_sigma);
  c.noise_seed = static_cast<std::uint64_t>(integer(file, "data.noise_seed", 0, 0));

  if (const auto family = file.get("scheme.family")) c.scheme_family = parse_scheme_family(*family);
  c.scheme_steps = static_cast<int>(integer(file, "scheme.steps", c.scheme_steps, 1));
  if (c.scheme_steps > kMaxSchemeSteps) {
    throw InvalidInputError("scheme.steps must be in [1, " + std::to_string(kMaxSchemeSteps) + "]");
  }
  c.training.scheme = make_scheme(c.scheme_family, c.scheme_steps);

  if (const auto hidden = file.get("network.hidden")) {
    c.training.hidden_widths.clear();
    for (long long w : integer_list("network.hidden", *hidden)) c.training.hidden_widths.push_back(w);
  }
  if (const auto act = file.get("network.activation")) c.training.activation = parse_activation(*act);
  if (const auto norm = file.get("network.normalize")) c.training.normalize = parse_bool("network.normalize", *norm);

  c.training.iterations = static_cast<std::size_t>(integer(file, "training.iterations", 50000, 0));
  c.training.learning_rate = real(file, "training.learning_rate", c.training.learning_rate);
  c.training.final_learning_rate = real(file, "training.final_learning_rate", 1e-5);
  c.training.seed = static_cast<std::uint64_t>(integer(file, "training.seed", 0, 0));
  c.training.minibatch_size = static_cast<std::size_t>(integer(file, "training.minibatch", 0, 0));
  c.training.tolerance = real(file, "training.tolerance", c.training.tolerance);

  GpConfig& g = c.sr;
  g.population_size = static_cast<std::size_t>(integer(file, "sr.population", static_cast<long long>(g.population_size), 1));
  g.generations = static_cast<std::size_t>(integer(file, "sr.generations", static_cast<long long>(g.generations), 0));
  g.tournament_size = static_cast<std::size_t>(integer(file, "sr.tournament", static_cast<long long>(g.tournament_size), 1));
  g.crossover_probability = real(file, "sr.crossover", g.crossover_probability);
  g.mutation_probability = real(file, "sr.mutation", g.mutation_probability);
  g.constant_mutation_scale = real(file, "sr.constant_mutation_scale", g.constant_mutation_scale);
  g.seed = static_cast<std::uint64_t>(integer(file, "sr.seed", 0, 0));
  g.early_stop_fitness = real(file, "sr.early_stop", g.early_stop_fitness);
  g.elite_count = static_cast<std::size_t>(integer(file, "sr.elite", static_cast<long long>(g.elite_count), 0));
  g.max_depth = static_cast<int>(integer(file, "sr.max_depth", g.max_depth, 1));
  g.max_size = static_cast<std::size_t>(integer(file, "sr.max_size", static_cast<long long>(g.max_size), 1));
  g.init_min_depth = static_cast<int>(integer(file, "sr.init_min_depth", g.init_min_depth, 0));
  g.init_max_depth = static_cast<int>(integer(file, "sr.init_max_depth", g.init_max_depth, 0));
  g.mutation_max_depth = static_cast<int>(integer(file, "sr.mutation_max_depth", g.mutation_max_depth, 0));
  g.constant_min = real(file, "sr.constant_min", g.constant_min);
  g.constant_max = real(file, "sr.constant_max", g.constant_max);
  g.variable_probability = real(file, "sr.variable_probability", g.variable_probability);
  g.max_power = static_cast<int>(integer(file, "sr.max_power", g.max_power, kMinPowerExponent));
  if (const auto refine = file.get("sr.refine")) g.refine_constants = parse_bool("sr.refine", *refine);
  g.refine_max_evaluations =
      static_cast<std::size_t>(integer(file, "sr.refine_evaluations", static_cast<long long>(g.refine_max_evaluations), 0));
  c.parsimony_ratio = real(file, "sr.parsimony_ratio", c.parsimony_ratio);
  if (const auto comps = file.get("sr.components")) {
    for (long long v : integer_list("sr.components", *comps)) c.sr_components.push_back(static_cast<int>(v));
  }
  c.sr_threads = static_cast<std::size_t>(integer(file, "sr.threads", 1, 1));
  for (const auto& [key, entry] : file.entries()) {
    if (int k = indexed_key(key, "sr.known_term."); k > 0) c.known_terms[k] = entry.value;
    if (int k = indexed_key(key, "sr.reference."); k > 0) c.references[k] = entry.value;
  }

  if (const auto dir = file.get("output.dir")) c.output_dir = resolve(*dir);
  if (const auto cache = file.get("output.cache")) c.use_cache = parse_bool("output.cache", *cache);
  c.cache_dir = file.contains("output.cache_dir") ? resolve(*file.get("output.cache_dir")) : c.output_dir / "cache";

  c.validate();
  return c;
}

ExperimentConfig ExperimentConfig::load(const std::filesystem::path& path) {
  return from_key_values(KeyValueFile::load(path), path.parent_path());
}

void apply_override(KeyValueFile& file, const std::string& assignment) {
  const auto eq = assignment.find('=');
  if (eq == std::string::npos || eq == 0) {
    throw InvalidInputError("override '" + assignment + "' must have the form section.key=value");
  }
  auto trim = [](std::string s) {
    const auto b = s.find_first_not_of(" \t");
    const auto e = s.find_last_not_of(" \t");
    return b == std::string::npos ? std::string() : s.substr(b, e - b + 1);
  };
  file.set(trim(assignment.substr(0, eq)), trim(assignment.substr(eq + 1)));
}

}  // namespace msd
