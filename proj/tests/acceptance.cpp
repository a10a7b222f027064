// Acceptance checks A1-A8. Prints one PASS/FAIL line per criterion and
// exits non-zero when any fails. Optional arguments select criteria, e.g.
// `msd_acceptance A3 A4`. Artifacts (including the cached glycolytic
// models) go to the working directory.

#include "gradient_check.hpp"
#include "msd/experiment.hpp"
#include "msd/io.hpp"
#include "msd/sr_metrics.hpp"
#include "scheme_checks.hpp"
#include "test_support.hpp"

#include <chrono>
#include <cstdio>
#include <cstdlib>
#include <filesystem>
#include <functional>
#include <iostream>
#include <set>
#include <sstream>
#include <string>

namespace fs = std::filesystem;
using namespace msd;

namespace {

const fs::path kConfigs = fs::path(MSD_SOURCE_DIR) / "configs";
const int kSrSeeds = 5;

struct Outcome {
  bool pass = false;
  std::string detail;
};

std::string sci(double v) { return format_significant(v, 3); }

double seconds_since(std::chrono::steady_clock::time_point start) {
  return std::chrono::duration<double>(std::chrono::steady_clock::now() - start).count();
}

ExperimentConfig glycolytic_config(const fs::path& work, double noise_sigma) {
  KeyValueFile f = KeyValueFile::load(kConfigs / "glycolytic.cfg");
  f.set("data.noise_sigma", format_double(noise_sigma));
  f.set("output.dir", (work / (noise_sigma > 0.0 ? "glycolytic_noisy" : "glycolytic")).string());
  f.set("output.cache", "true");
  f.set("output.cache_dir", (work / "cache").string());
  return ExperimentConfig::from_key_values(f, kConfigs);
}

// Trained glycolytic model and the states SR works on, shared by A1, A2
// and A8.
struct GlycolyticRun {
  ExperimentConfig config;
  Trajectory truth;
  Trajectory data;
  Mlp model;
};

GlycolyticRun glycolytic_run(const fs::path& work, double noise_sigma) {
  ExperimentConfig config = glycolytic_config(work, noise_sigma);
  Trajectory truth = simulate_truth(config);
  Trajectory data = make_training_data(config, truth);
  const LogSink log = [](const std::string& line) { std::cerr << "  [train] " << line << std::endl; };
  TrainedModel trained = train_or_load(config, data, log);
  return {std::move(config), std::move(truth), std::move(data), std::move(trained.model)};
}

ComponentResult distill(const GlycolyticRun& run, int component, std::uint64_t seed) {
  ExperimentConfig c = run.config;
  c.sr.seed = seed;
  return discover_component(run.model, run.data.states(), run.truth.states(), c, component);
}

// Affine coefficients of a discovered expression on the benchmark states.
struct SeventhEquationFit {
  bool affine = false;
  double s4 = 0.0;
  double s7 = 0.0;
  double others = 0.0;
};

SeventhEquationFit fit_seventh(const ComponentResult& r, const Eigen::MatrixXd& states) {
  const AffineFit fit = affine_fit(parse_prefix(r.prefix), states);
  SeventhEquationFit out;
  out.affine = fit.relative_residual < 1e-6;
  out.s4 = fit.coefficients[3];
  out.s7 = fit.coefficients[6];
  out.others = std::abs(fit.intercept);
  for (Eigen::Index j = 0; j < fit.coefficients.size(); ++j) {
    if (j != 3 && j != 6) out.others = std::max(out.others, std::abs(fit.coefficients[j]));
  }
  return out;
}

// True when the expression is affine in S4 and S7 only, with both
// coefficients within `tolerance` (relative) of 1.3 and -3.1.
bool seventh_recovered(const SeventhEquationFit& f, double tolerance) {
  return f.affine && std::abs(f.s4 / 1.3 - 1.0) <= tolerance && std::abs(f.s7 / -3.1 - 1.0) <= tolerance &&
         f.others <= tolerance * 1.3;
}

Outcome a1(const GlycolyticRun& run) {
  const Trajectory resim = resimulate(run.model, run.config.x0, run.config.t0, run.config.t1, run.config.dt);
  const TrajectoryComparison cmp = compare_trajectories(run.truth, resim);
  std::ostringstream d;
  d << "per-component relative L2:";
  double worst = 0.0;
  for (double e : cmp.relative_l2) {
    d << " " << sci(e);
    worst = std::max(worst, e);
  }
  d << " (max " << sci(worst) << ", limit 0.1)";
  return {worst < 0.1, d.str()};
}

Outcome a2(const GlycolyticRun& run) {
  const Eigen::MatrixXd& states = run.truth.states();
  bool seventh = false;
  double best5 = std::numeric_limits<double>::infinity(), best1 = best5;
  std::string expr7, expr5, expr1;
  for (int seed = 0; seed < kSrSeeds; ++seed) {
    const ComponentResult r7 = distill(run, 7, static_cast<std::uint64_t>(seed));
    const SeventhEquationFit fit = fit_seventh(r7, states);
    const bool ok = seventh_recovered(fit, 0.05) && *r7.relative_error < 1e-2;
    if (ok && !seventh) {
      expr7 = r7.expression + " = " + format_significant(fit.s4, 4) + " S4 " + format_significant(fit.s7, 4) +
              " S7 (seed " + std::to_string(seed) + ", RE " + sci(*r7.relative_error) + ")";
    }
    seventh = seventh || ok;
    const ComponentResult r5 = distill(run, 5, static_cast<std::uint64_t>(seed));
    if (*r5.relative_error < best5) {
      best5 = *r5.relative_error;
      expr5 = r5.expression;
    }
    const ComponentResult r1 = distill(run, 1, static_cast<std::uint64_t>(seed));
    if (*r1.relative_error < best1) {
      best1 = *r1.relative_error;
      expr1 = r1.expression;
    }
    std::cerr << "  [sr] seed " << seed << ": f7 RE " << sci(*r7.relative_error) << ", f5 part RE "
              << sci(*r5.relative_error) << ", f1 RE " << sci(*r1.relative_error) << std::endl;
  }
  std::cout << "    f7 = " << (seventh ? expr7 : "not recovered") << "\n"
            << "    f5 part = " << expr5 << "\n"
            << "    f1 = " << expr1 << "\n";
  std::ostringstream d;
  d << "(i) 7th ODE affine within 5%: " << (seventh ? "yes" : "no") << "; (ii) S2/S5 part RE " << sci(best5)
    << " (limit 5e-2); (iii) 1st ODE RE " << sci(best1) << " (limit 2e-1); best of " << kSrSeeds << " seeds";
  return {seventh && best5 < 5e-2 && best1 < 2e-1, d.str()};
}

Outcome a3() {
  const auto start = std::chrono::steady_clock::now();
  double worst = 0.0;
  for (std::uint64_t seed = 0; seed < 20; ++seed) {
    worst = std::max(worst, msd::testing::check_gradients(msd::testing::random_gradient_case(seed)).max_relative_error);
  }
  const double elapsed = seconds_since(start);
  return {worst < 1e-6 && elapsed < 60.0,
          "max relative error " + sci(worst) + " over 20 networks (limit 1e-6), " + sci(elapsed) + " s"};
}

Outcome a4() {
  bool pass = true;
  std::string d;
  const std::vector<SchemeCoefficients> schemes{adams_moulton(1), adams_moulton(2), adams_bashforth(1), bdf(1),
                                                bdf(2)};
  for (const auto& c : schemes) {
    double exact = 0.0;
    for (int degree = 0; degree <= c.order; ++degree) {
      std::vector<double> coeffs(static_cast<std::size_t>(degree) + 1);
      for (std::size_t k = 0; k < coeffs.size(); ++k) coeffs[k] = 1.0 + 0.5 * static_cast<double>(k);
      const msd::testing::PolynomialCase pc = msd::testing::polynomial_case(coeffs, 0.3, 0.05, c.steps + 6);
      for (Eigen::Index n = c.steps; n <= pc.traj.last(); ++n) {
        exact = std::max(exact, residual(c, pc.traj, pc.f, n).norm());
      }
    }
    const std::vector<double> hs{0.08, 0.04, 0.02, 0.01, 0.005};
    std::vector<double> err;
    for (double h : hs) err.push_back(msd::testing::max_residual_on_decay(c, h));
    const double slope = msd::testing::loglog_slope(hs, err);
    const bool ok = exact < 1e-10 && std::abs(slope - (c.order + 1)) <= 0.2;
    pass = pass && ok;
    d += (d.empty() ? "" : "; ") + std::string(to_string(c.family)) + "(" + std::to_string(c.steps) + ") exact " +
         sci(exact) + " slope " + format_significant(slope, 4) + "/" + std::to_string(c.order + 1);
  }
  return {pass, d};
}

Outcome a5(const fs::path& work) {
  const auto start = std::chrono::steady_clock::now();
  KeyValueFile f = KeyValueFile::load(kConfigs / "linear2d.cfg");
  f.set("output.dir", (work / "linear2d").string());
  f.set("output.cache", "false");
  const ExperimentConfig config = ExperimentConfig::from_key_values(f, kConfigs);
  const DiscoveryReport report = run_experiment(config);
  const Trajectory truth = simulate_truth(config);
  bool pass = report.components.size() == 2;
  std::ostringstream d;
  for (const auto& r : report.components) {
    const AffineFit fit = affine_fit(parse_prefix(r.prefix), truth.states());
    const int row = r.component - 1;
    double coef_error = std::abs(fit.intercept);
    for (Eigen::Index j = 0; j < 2; ++j) {
      coef_error = std::max(coef_error, std::abs(fit.coefficients[j] - config.matrix(row, j)));
    }
    const bool ok = r.relative_error && *r.relative_error < 1e-2 && fit.relative_residual < 1e-6 && coef_error <= 0.05;
    pass = pass && ok;
    d << "f" << r.component << " = " << r.expression << " RE " << sci(r.relative_error.value_or(NAN))
      << " coefficient error " << sci(coef_error) << "; ";
  }
  const double elapsed = seconds_since(start);
  d << sci(elapsed) << " s";
  return {pass && elapsed < 300.0, d.str()};
}

Outcome a6() {
  const OdeSystem decay = msd::testing::scalar_system([](double x) { return -x; });
  std::vector<double> hs{0.2, 0.1, 0.05, 0.025, 0.0125}, err;
  for (double h : hs) {
    const Trajectory t = simulate(decay, StateVector::Ones(1), 0.0, 2.0, h);
    err.push_back(std::abs(t.state(t.last())[0] - std::exp(-2.0)));
  }
  const double order = msd::testing::loglog_slope(hs, err);
  return {order >= 3.9, "observed order " + format_significant(order, 4) + " (limit >= 3.9)"};
}

Outcome a7(const fs::path& work) {
  const fs::path out = work / "determinism";
  fs::remove_all(out);
  const std::string cmd = std::string("\"") + MSD_CLI_PATH + "\" run-all --quiet --no-cache --config \"" +
                          (kConfigs / "linear2d.cfg").string() + "\" --out-dir \"" + out.string() + "\" > \"" +
                          (work / "determinism.log").string() + "\" 2>&1";
  if (std::system(cmd.c_str()) != 0) return {false, "first run-all failed, see determinism.log"};
  fs::copy_file(out / "report.json", work / "determinism_first.json", fs::copy_options::overwrite_existing);
  if (std::system(cmd.c_str()) != 0) return {false, "second run-all failed, see determinism.log"};
  nlohmann::json first = load_json(work / "determinism_first.json");
  nlohmann::json second = load_json(out / "report.json");
  const bool timestamps_differ = first.at("timestamp") != second.at("timestamp");
  first.erase("timestamp");
  second.erase("timestamp");
  const bool same = first.dump() == second.dump();
  return {same, std::string(same ? "reports identical" : "reports differ") + " apart from the timestamp" +
                    (timestamps_differ ? " (timestamps differ)" : "")};
}

Outcome a8(const GlycolyticRun& run) {
  const Eigen::MatrixXd& states = run.truth.states();
  const Trajectory resim = resimulate(run.model, run.config.x0, run.config.t0, run.config.t1, run.config.dt);
  double tracking = 0.0;
  for (double e : compare_trajectories(run.truth, resim).relative_l2) tracking = std::max(tracking, e);
  bool pass = false;
  std::ostringstream d;
  d << "noise sigma 0.01; ";
  for (int seed = 0; seed < kSrSeeds && !pass; ++seed) {
    const ComponentResult r = distill(run, 7, static_cast<std::uint64_t>(seed));
    const SeventhEquationFit fit = fit_seventh(r, states);
    std::cerr << "  [sr] seed " << seed << ": f7 = " << r.expression << std::endl;
    if (seventh_recovered(fit, 0.15)) {
      pass = true;
      d << "f7 = " << r.expression << " (seed " << seed << ", S4 " << format_significant(fit.s4, 4) << ", S7 "
        << format_significant(fit.s7, 4) << ", within 15%)";
    }
  }
  if (!pass) d << "7th ODE not recovered within 15% by any of " << kSrSeeds << " seeds";
  d << "; tracking relative L2 max " << sci(tracking);
  return {pass, d.str()};
}

}  // namespace

int main(int argc, char** argv) {
  std::set<std::string> selected;
  for (int i = 1; i < argc; ++i) selected.insert(argv[i]);
  auto wanted = [&](const std::string& id) { return selected.empty() || selected.count(id) > 0; };
  const fs::path work = fs::current_path();

  std::optional<GlycolyticRun> clean;
  auto clean_run = [&]() -> const GlycolyticRun& {
    if (!clean) clean = glycolytic_run(work, 0.0);
    return *clean;
  };

  const std::vector<std::pair<std::string, std::function<Outcome()>>> criteria{
      {"A1", [&] { return a1(clean_run()); }},
      {"A2", [&] { return a2(clean_run()); }},
      {"A3", [] { return a3(); }},
      {"A4", [] { return a4(); }},
      {"A5", [&] { return a5(work); }},
      {"A6", [] { return a6(); }},
      {"A7", [&] { return a7(work); }},
      {"A8", [&] { return a8(glycolytic_run(work, 0.01)); }},
  };

  int failures = 0;
  for (const auto& [id, check] : criteria) {
    if (!wanted(id)) continue;
    Outcome o;
    const auto start = std::chrono::steady_clock::now();
    try {
      o = check();
    } catch (const std::exception& e) {
      o = {false, std::string("error: ") + e.what()};
    }
    std::cout << id << " " << (o.pass ? "PASS" : "FAIL") << "  " << o.detail << "  [" << sci(seconds_since(start))
              << " s]" << std::endl;
    failures += o.pass ? 0 : 1;
  }
  return failures == 0 ? 0 : 1;
}
