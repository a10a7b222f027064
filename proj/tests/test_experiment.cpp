#include "msd/errors.hpp"
#include "msd/experiment.hpp"
#include "msd/io.hpp"
#include "msd/sr_metrics.hpp"
#include "temp_dir.hpp"

#include <gtest/gtest.h>

using namespace msd;

namespace {

const std::filesystem::path kConfigs = std::filesystem::path(MSD_SOURCE_DIR) / "configs";

ExperimentConfig linear_config(const std::filesystem::path& out, bool cache = false) {
  KeyValueFile f = KeyValueFile::load(kConfigs / "linear2d.cfg");
  f.set("output.dir", out.string());
  f.set("output.cache", cache ? "true" : "false");
  return ExperimentConfig::from_key_values(f, kConfigs);
}

DiscoveryReport sample_report() {
  DiscoveryReport r;
  r.timestamp = "2026-01-01T00:00:00Z";
  r.config = {{"a.b", "1"}, {"c.d", "x y"}};
  r.seeds = {1, 2, 3};
  r.training = TrainingSummary{10, 1.5, 0.25, 0.125, 9};
  r.trajectory = TrajectoryComparison{{0.1, 1.0 / 3.0}, {0.2, 0.4}};
  ComponentResult c;
  c.component = 7;
  c.seed = 9;
  c.expression = "((1.3 * S4) - (3.1 * S7))";
  c.prefix = "sub mul 1.3 S4 mul 3.1 S7";
  c.complexity = 7;
  c.loss = 1e-7;
  c.parsimony = 2e-5;
  c.fitness = 1e-7 + 7 * 2e-5;
  c.reference = "((1.3 * S4) - (3.1 * S7))";
  c.relative_error = 5e-4;
  c.front = {{1, 0.5, "0.1"}, {7, 1e-7, c.expression}};
  r.components.push_back(c);
  ComponentResult bare;
  bare.component = 2;
  bare.expression = "S1";
  bare.prefix = "S1";
  bare.complexity = 1;
  bare.known_term = "(-1 * S1)";
  r.components.push_back(bare);
  return r;
}

}  // namespace

TEST(CompareTrajectories, IdenticalGivesZeros) {
  const Trajectory a(0.0, 0.1, Eigen::MatrixXd::Random(3, 20));
  const TrajectoryComparison c = compare_trajectories(a, a);
  EXPECT_EQ(c.relative_l2, std::vector<double>(3, 0.0));
  EXPECT_EQ(c.max_abs_error, std::vector<double>(3, 0.0));
}

TEST(CompareTrajectories, ConstantOffsetOnOneComponent) {
  const Eigen::MatrixXd s = Eigen::MatrixXd::Random(2, 20);
  Eigen::MatrixXd shifted = s;
  shifted.row(1).array() += 0.25;
  const TrajectoryComparison c = compare_trajectories(Trajectory(0.0, 0.1, s), Trajectory(0.0, 0.1, shifted));
  EXPECT_EQ(c.max_abs_error[0], 0.0);
  EXPECT_NEAR(c.max_abs_error[1], 0.25, 1e-15);
  EXPECT_NEAR(c.relative_l2[1], 0.25 * std::sqrt(20.0) / s.row(1).norm(), 1e-14);
}

TEST(CompareTrajectories, ShapeMismatchRejected) {
  const Trajectory a(0.0, 0.1, Eigen::MatrixXd::Zero(2, 5));
  EXPECT_THROW(compare_trajectories(a, Trajectory(0.0, 0.1, Eigen::MatrixXd::Zero(2, 6))), InvalidInputError);
  EXPECT_THROW(compare_trajectories(a, Trajectory(0.0, 0.2, Eigen::MatrixXd::Zero(2, 5))), InvalidInputError);
  EXPECT_THROW(compare_trajectories(a, Trajectory(0.0, 0.1, Eigen::MatrixXd::Zero(3, 5))), InvalidInputError);
}

TEST(Report, JsonRoundTripIsLossless) {
  const DiscoveryReport r = sample_report();
  EXPECT_EQ(report_from_json(report_to_json(r)), r);
  EXPECT_EQ(report_from_json(nlohmann::json::parse(report_to_json(r).dump())), r);
  msd::testing::TempDir dir;
  save_report(r, dir / "report.json");
  EXPECT_EQ(load_report(dir / "report.json"), r);
}

TEST(Report, SchemaVersionChecked) {
  nlohmann::json doc = report_to_json(sample_report());
  EXPECT_EQ(doc.at("schema_version"), kReportSchemaVersion);
  doc["schema_version"] = kReportSchemaVersion + 1;
  EXPECT_THROW(report_from_json(doc), InvalidInputError);
  doc.erase("schema_version");
  EXPECT_THROW(report_from_json(doc), InvalidInputError);
}

TEST(Report, SameResultsIgnoresOnlyTimestamp) {
  const DiscoveryReport a = sample_report();
  DiscoveryReport b = a;
  b.timestamp = "later";
  EXPECT_TRUE(a.same_results(b));
  EXPECT_FALSE(a == b);
  b.components[0].loss *= 2.0;
  EXPECT_FALSE(a.same_results(b));
}

TEST(Report, FormatListsComponents) {
  const std::string text = format_report(sample_report());
  EXPECT_NE(text.find("((1.3 * S4) - (3.1 * S7))"), std::string::npos);
  EXPECT_NE(text.find("5.000e-04"), std::string::npos) << text;
}

TEST(References, GlycolyticRowsAndKnownTerm) {
  const ExperimentConfig c = ExperimentConfig::load(kConfigs / "glycolytic.cfg");
  const Trajectory truth = simulate_truth(c);
  EXPECT_LT(relative_error(reference_expression(c, 7), parse_infix("1.3*S4 - 3.1*S7"), truth.states()), 1e-12);
  EXPECT_LT(relative_error(reference_expression(c, 5), parse_infix("6*S2 - 18*S2*S5"), truth.states()), 1e-12);
  ASSERT_TRUE(known_term(c, 5).has_value());
  EXPECT_FALSE(known_term(c, 1).has_value());
  // Reference plus known term is the full right-hand side.
  const ExprTree full = ExprTree::binary(Op::Add, reference_expression(c, 5), *known_term(c, 5));
  const OdeSystem sys = make_system(c);
  for (Eigen::Index n = 0; n < truth.size(); n += 50) {
    EXPECT_NEAR(evaluate(full, truth.state(n)).value, sys(truth.state(n))[4], 1e-12);
  }
}

TEST(References, LinearRows) {
  msd::testing::TempDir dir;
  const ExperimentConfig c = linear_config(dir.path());
  EXPECT_EQ(to_infix(reference_expression(c, 1)), "S2");
  EXPECT_EQ(discovery_components(c), (std::vector<int>{1, 2}));
}

TEST(TrainingData, NoiseFollowsConfig) {
  msd::testing::TempDir dir;
  ExperimentConfig c = linear_config(dir.path());
  const Trajectory truth = simulate_truth(c);
  EXPECT_EQ(make_training_data(c, truth), truth);
  c.noise_sigma = 0.01;
  c.noise_seed = 4;
  const Trajectory noisy = make_training_data(c, truth);
  EXPECT_FALSE(noisy == truth);
  EXPECT_EQ(noisy, make_training_data(c, truth));
}

TEST(CacheKey, TracksTrainingInputsOnly) {
  msd::testing::TempDir dir;
  const ExperimentConfig base = linear_config(dir.path());
  ExperimentConfig c = base;
  c.sr.seed = 99;
  c.output_dir = "elsewhere";
  EXPECT_EQ(training_cache_key(c), training_cache_key(base));
  c = base;
  c.training.seed = 1;
  EXPECT_NE(training_cache_key(c), training_cache_key(base));
  c = base;
  c.noise_sigma = 0.01;
  EXPECT_NE(training_cache_key(c), training_cache_key(base));
  c = base;
  c.training.hidden_widths = {32};
  EXPECT_NE(training_cache_key(c), training_cache_key(base));
}

TEST(RunExperiment, LinearSystemEndToEnd) {
  msd::testing::TempDir dir;
  const ExperimentConfig c = linear_config(dir / "run", true);
  const DiscoveryReport r = run_experiment(c);

  ASSERT_EQ(r.components.size(), 2u);
  for (const auto& comp : r.components) {
    ASSERT_TRUE(comp.relative_error.has_value());
    EXPECT_LT(*comp.relative_error, 1e-2) << comp.expression;
  }
  ASSERT_TRUE(r.trajectory.has_value());
  ASSERT_TRUE(r.training.has_value());
  EXPECT_EQ(r.config, c.to_map());

  // Every artifact reloads with the pipeline's own readers.
  EXPECT_EQ(load_trajectory(dir / "run" / "truth.csv"), simulate_truth(c));
  EXPECT_EQ(load_trajectory(dir / "run" / "data.csv").size(), 1001);
  EXPECT_EQ(load_trajectory(dir / "run" / "resimulated.csv").size(), 1001);
  EXPECT_EQ(load_checkpoint(dir / "run" / "model.ckpt").input_dim(), 2);
  EXPECT_EQ(load_report(dir / "run" / "report.json"), r);
  EXPECT_FALSE(read_file(dir / "run" / "loss_history.csv").empty());

  // Second run reuses the cached model and reproduces the report.
  const DiscoveryReport cached = run_experiment(c);
  EXPECT_TRUE(cached.same_results(r));

  // A fresh, uncached run is bit-identical too.
  const DiscoveryReport fresh = run_experiment(linear_config(dir / "fresh", false));
  EXPECT_EQ(fresh.components, r.components);
  EXPECT_EQ(fresh.training, r.training);
  EXPECT_EQ(fresh.trajectory, r.trajectory);
}

TEST(RunExperiment, FailingStageIsNamed) {
  msd::testing::TempDir dir;
  KeyValueFile f;
  f.set("system.name", "linear");
  f.set("system.matrix", "10, 0, 0, 10");
  f.set("system.x0", "1, 1");
  f.set("output.dir", (dir / "run").string());
  const ExperimentConfig c = ExperimentConfig::from_key_values(f);
  try {
    run_experiment(c);
    FAIL() << "expected the simulation to diverge";
  } catch (const StageError& e) {
    EXPECT_EQ(e.stage(), "simulate");
  }
}

TEST(RunExperiment, PersistsArtifactsOfCompletedStages) {
  msd::testing::TempDir dir;
  KeyValueFile f = KeyValueFile::load(kConfigs / "linear2d.cfg");
  f.set("output.dir", (dir / "run").string());
  f.set("output.cache", "false");
  f.set("training.iterations", "3");
  // A reference that cannot be evaluated on the data makes scoring fail.
  f.set("sr.reference.1", "1 / (S1 - S1)");
  f.set("sr.generations", "1");
  f.set("sr.population", "20");
  const ExperimentConfig c = ExperimentConfig::from_key_values(f, kConfigs);
  try {
    run_experiment(c);
    FAIL() << "expected discovery to fail";
  } catch (const StageError& e) {
    EXPECT_EQ(e.stage(), "discover");
  }
  EXPECT_TRUE(std::filesystem::exists(dir / "run" / "truth.csv"));
  EXPECT_TRUE(std::filesystem::exists(dir / "run" / "model.ckpt"));
  EXPECT_FALSE(std::filesystem::exists(dir / "run" / "report.json"));
}
