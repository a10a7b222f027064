#include "msd/config.hpp"
#include "msd/errors.hpp"
#include "msd/experiment.hpp"
#include "msd/io.hpp"

#include "CLI11.hpp"

#include <filesystem>
#include <iostream>
#include <optional>
#include <string>
#include <vector>

namespace fs = std::filesystem;
using namespace msd;

namespace {

struct CommonOptions {
  std::string config;
  std::optional<std::uint64_t> seed;
  std::string out_dir;
  std::vector<std::string> overrides;
  bool no_cache = false;
  bool quiet = false;
};

void add_common(CLI::App* cmd, CommonOptions& o) {
  cmd->add_option("--config", o.config, "Experiment config file")->check(CLI::ExistingFile);
  cmd->add_option("--seed", o.seed, "Seed override");
  cmd->add_option("--out-dir", o.out_dir, "Output directory override");
  cmd->add_option("--set", o.overrides, "Config override section.key=value (repeatable)");
  cmd->add_flag("--quiet", o.quiet, "Suppress progress messages");
}

LogSink make_log(const CommonOptions& o) {
  if (o.quiet) return {};
  return [](const std::string& line) { std::cerr << "[msd] " << line << std::endl; };
}

// Loads the config file (or built-in defaults), applies --set overrides,
// then the given key/value pairs, then --out-dir.
ExperimentConfig resolve(const CommonOptions& o, const std::vector<std::pair<std::string, std::string>>& extra) {
  KeyValueFile file = o.config.empty() ? KeyValueFile{} : KeyValueFile::load(o.config);
  for (const auto& assignment : o.overrides) apply_override(file, assignment);
  for (const auto& [key, value] : extra) file.set(key, value);
  if (!o.out_dir.empty()) file.set("output.dir", fs::absolute(o.out_dir).string());
  if (o.no_cache) file.set("output.cache", "false");
  const fs::path base = o.config.empty() ? fs::current_path() : fs::path(o.config).parent_path();
  return ExperimentConfig::from_key_values(file, base);
}

std::string join_widths(const std::vector<long long>& widths) {
  std::string out;
  for (std::size_t i = 0; i < widths.size(); ++i) out += (i ? "," : "") + std::to_string(widths[i]);
  return out;
}

fs::path loss_history_path(const fs::path& checkpoint) {
  fs::path p = checkpoint;
  p.replace_extension(".loss.csv");
  return p;
}

}  // namespace

int main(int argc, char** argv) {
  CLI::App app{"Learn ODE right-hand sides with multistep-trained networks and distill them symbolically"};
  app.require_subcommand(1);
  app.set_version_flag("--version", std::string(kToolVersion));

  CommonOptions sim_opts;
  auto* sim = app.add_subcommand("simulate", "Integrate the configured system and write truth.csv and data.csv");
  add_common(sim, sim_opts);

  CommonOptions train_opts;
  std::string train_data, train_out = "model.ckpt", scheme;
  std::optional<int> steps;
  std::vector<long long> hidden;
  std::optional<long long> iters;
  std::optional<double> lr, final_lr;
  auto* tr = app.add_subcommand("train", "Fit a network to a trajectory with the multistep loss");
  add_common(tr, train_opts);
  tr->add_option("--data", train_data, "Trajectory CSV (default: simulate from the config)")->check(CLI::ExistingFile);
  tr->add_option("--scheme", scheme, "am, ab or bdf");
  tr->add_option("--steps", steps, "Number of scheme steps M");
  tr->add_option("--hidden", hidden, "Hidden layer widths")->delimiter(',');
  tr->add_option("--iters", iters, "Optimizer iterations");
  tr->add_option("--lr", lr, "Initial learning rate");
  tr->add_option("--final-lr", final_lr, "Final learning rate of the exponential decay (0 keeps it constant)");
  tr->add_option("--out", train_out, "Checkpoint path");

  CommonOptions disc_opts;
  std::string disc_model, disc_data;
  std::vector<int> disc_components;
  std::optional<long long> pop, gens;
  std::optional<double> parsimony_ratio;
  auto* disc = app.add_subcommand("discover", "Distill network outputs into symbolic expressions");
  add_common(disc, disc_opts);
  disc->add_option("--model", disc_model, "Checkpoint")->required()->check(CLI::ExistingFile);
  disc->add_option("--data", disc_data, "Trajectory CSV whose states are the regression inputs")
      ->check(CLI::ExistingFile);
  disc->add_option("--component", disc_components, "1-based component(s)")->delimiter(',');
  disc->add_option("--pop", pop, "Population size");
  disc->add_option("--gens", gens, "Generations");
  disc->add_option("--parsimony-ratio", parsimony_ratio, "Parsimony weight relative to the target variance");

  CommonOptions eval_opts;
  std::string eval_model;
  auto* ev = app.add_subcommand("evaluate", "Re-simulate a trained network and compare with ground truth");
  add_common(ev, eval_opts);
  ev->add_option("--model", eval_model, "Checkpoint")->required()->check(CLI::ExistingFile);

  CommonOptions report_opts;
  std::string report_path;
  bool report_json = false;
  auto* rep = app.add_subcommand("report", "Summarize a report.json");
  add_common(rep, report_opts);
  rep->add_option("--report", report_path, "Report file (default: <out-dir>/report.json)");
  rep->add_flag("--json", report_json, "Print the normalized JSON instead of the table");

  CommonOptions all_opts;
  auto* all = app.add_subcommand("run-all", "simulate, train, re-simulate, discover and report");
  add_common(all, all_opts);
  all->add_flag("--no-cache", all_opts.no_cache, "Always retrain instead of reusing a cached model");

  CLI11_PARSE(app, argc, argv);

  try {
    if (sim->parsed()) {
      std::vector<std::pair<std::string, std::string>> extra;
      if (sim_opts.seed) extra.emplace_back("data.noise_seed", std::to_string(*sim_opts.seed));
      const ExperimentConfig config = resolve(sim_opts, extra);
      const Trajectory truth = simulate_truth(config);
      const Trajectory data = make_training_data(config, truth);
      save_trajectory(truth, config.output_dir / "truth.csv");
      save_trajectory(data, config.output_dir / "data.csv");
      std::cout << "wrote " << (config.output_dir / "truth.csv").string() << " and "
                << (config.output_dir / "data.csv").string() << " (" << truth.size() << " samples)\n";
    } else if (tr->parsed()) {
      std::vector<std::pair<std::string, std::string>> extra;
      if (train_opts.seed) extra.emplace_back("training.seed", std::to_string(*train_opts.seed));
      if (!scheme.empty()) extra.emplace_back("scheme.family", scheme);
      if (steps) extra.emplace_back("scheme.steps", std::to_string(*steps));
      if (!hidden.empty()) extra.emplace_back("network.hidden", join_widths(hidden));
      if (iters) extra.emplace_back("training.iterations", std::to_string(*iters));
      if (lr) extra.emplace_back("training.learning_rate", format_double(*lr));
      if (final_lr) extra.emplace_back("training.final_learning_rate", format_double(*final_lr));
      const ExperimentConfig config = resolve(train_opts, extra);
      const Trajectory data =
          train_data.empty() ? make_training_data(config, simulate_truth(config)) : load_trajectory(train_data);
      if (data.dimension() != config.dimension()) {
        throw InvalidInputError("trajectory dimension does not match the configured system");
      }
      const LogSink log = make_log(train_opts);
      const std::size_t every = std::max<std::size_t>(1, config.training.iterations / 10);
      const TrainResult result = train(data, config.training, [&](std::size_t it, double loss) {
        if (log && it % every == 0) log("iteration " + std::to_string(it) + " loss " + format_significant(loss, 4));
      });
      const TrainingSummary s = summarize(result);
      const fs::path out = fs::absolute(train_out);
      save_checkpoint(result.model, out,
                      {{"scheme", std::string(to_string(config.scheme_family))},
                       {"steps", config.scheme_steps},
                       {"seed", config.training.seed},
                       {"best_loss", s.best_loss},
                       {"iterations", s.iterations_run}});
      write_file_atomic(loss_history_path(out), loss_history_to_csv(result.loss_history));
      std::cout << "best loss " << format_significant(s.best_loss, 6) << " at iteration " << s.best_iteration
                << "; wrote " << out.string() << "\n";
    } else if (disc->parsed()) {
      std::vector<std::pair<std::string, std::string>> extra;
      if (disc_opts.seed) extra.emplace_back("sr.seed", std::to_string(*disc_opts.seed));
      if (pop) extra.emplace_back("sr.population", std::to_string(*pop));
      if (gens) extra.emplace_back("sr.generations", std::to_string(*gens));
      if (parsimony_ratio) extra.emplace_back("sr.parsimony_ratio", format_double(*parsimony_ratio));
      ExperimentConfig config = resolve(disc_opts, extra);
      if (!disc_components.empty()) config.sr_components = disc_components;
      config.validate();
      const Mlp model = load_checkpoint(disc_model);
      if (model.input_dim() != config.dimension()) {
        throw InvalidInputError("checkpoint dimension does not match the configured system");
      }
      const Trajectory truth = simulate_truth(config);
      const Eigen::MatrixXd states = disc_data.empty() ? truth.states() : load_trajectory(disc_data).states();
      if (states.rows() != config.dimension()) throw InvalidInputError("trajectory dimension does not match the model");
      const LogSink log = make_log(disc_opts);
      DiscoveryReport report;
      report.timestamp = current_timestamp();
      report.config = config.to_map();
      report.seeds = {config.noise_seed, config.training.seed, config.sr.seed};
      for (int c : discovery_components(config)) {
        if (log) log("component " + std::to_string(c));
        report.components.push_back(discover_component(model, states, truth.states(), config, c));
        const ComponentResult& r = report.components.back();
        std::cout << "f" << c << " = " << r.expression;
        if (r.relative_error) std::cout << "    relative error " << format_significant(*r.relative_error, 3);
        std::cout << "\n";
      }
      save_report(report, config.output_dir / "discovery.json");
    } else if (ev->parsed()) {
      const ExperimentConfig config = resolve(eval_opts, {});
      const Mlp model = load_checkpoint(eval_model);
      const Trajectory truth = simulate_truth(config);
      const Trajectory resim = resimulate(model, config.x0, config.t0, config.t1, config.dt);
      save_trajectory(resim, config.output_dir / "resimulated.csv");
      const TrajectoryComparison cmp = compare_trajectories(truth, resim);
      nlohmann::json doc = {{"relative_l2", cmp.relative_l2}, {"max_abs_error", cmp.max_abs_error}};
      write_file_atomic(config.output_dir / "evaluation.json", doc.dump(2) + "\n");
      for (std::size_t d = 0; d < cmp.relative_l2.size(); ++d) {
        std::cout << "S" << d + 1 << "  relative L2 " << format_significant(cmp.relative_l2[d], 4) << "  max error "
                  << format_significant(cmp.max_abs_error[d], 4) << "\n";
      }
    } else if (rep->parsed()) {
      fs::path path = report_path;
      if (path.empty()) path = resolve(report_opts, {}).output_dir / "report.json";
      const DiscoveryReport report = load_report(path);
      std::cout << (report_json ? report_to_json(report).dump(2) + "\n" : format_report(report));
    } else if (all->parsed()) {
      std::vector<std::pair<std::string, std::string>> extra;
      if (all_opts.seed) {
        for (const char* key : {"data.noise_seed", "training.seed", "sr.seed"}) {
          extra.emplace_back(key, std::to_string(*all_opts.seed));
        }
      }
      const ExperimentConfig config = resolve(all_opts, extra);
      const DiscoveryReport report = run_experiment(config, make_log(all_opts));
      std::cout << format_report(report) << "report: " << (config.output_dir / "report.json").string() << "\n";
    }
  } catch (const msd::Error& e) {
    std::cerr << "error: " << e.what() << "\n";
    return 1;
  } catch (const std::exception& e) {
    std::cerr << "error: " << e.what() << "\n";
    return 1;
  }
  return 0;
}
