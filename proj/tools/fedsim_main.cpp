// fedsim command-line front end.
//
//   fedsim partition --config spec.json --out dir     write manifest + EMD summary
//   fedsim sweep     --config sweep.json --out dir    write EMD heatmap CSVs
//   fedsim train     --config spec.json --out dir     run an experiment, stream round log
//   fedsim analyze   dir1 dir2 ... --out table.csv    cross-experiment comparison table
//
// Exit codes: 0 success, 1 runtime failure, 2 config/usage error.

#include <filesystem>
#include <fstream>
#include <iostream>
#include <optional>
#include <string>
#include <vector>

#include "CLI11.hpp"
#include "fedsim/config.hpp"
#include "fedsim/version.hpp"
#include "json.hpp"

namespace fs = std::filesystem;
using namespace fedsim;

namespace {

struct ConfigError : std::runtime_error {
  using std::runtime_error::runtime_error;
};

void ensure_fresh(const fs::path& path, bool overwrite) {
  if (fs::exists(path) && !overwrite)
    throw ConfigError(path.string() + " exists; pass --overwrite to replace it");
}

void write_text(const fs::path& path, const std::string& text) {
  std::ofstream out(path, std::ios::binary);
  if (!out) throw std::runtime_error(path.string() + ": cannot write");
  out << text;
}

std::string stamp_for(const std::string& config_hash) {
  return std::string("fedsim ") + kVersion + " config_hash=" + config_hash;
}

RunSpec load_spec_with_seed(const std::string& config_path, std::optional<std::uint64_t> seed) {
  RunSpec spec = load_run_spec(config_path);
  if (seed) spec.config.seed = *seed;
  return spec;
}

int cmd_partition(const std::string& config_path, const std::string& out_dir,
                  std::optional<std::uint64_t> seed, bool overwrite) {
  const RunSpec spec = load_spec_with_seed(config_path, seed);
  const std::string echo = run_spec_echo(spec);
  const std::string hash = config_hash_hex(echo);

  fs::create_directories(out_dir);
  const fs::path manifest_path = fs::path(out_dir) / "manifest.json";
  const fs::path summary_path = fs::path(out_dir) / "partition_summary.txt";
  ensure_fresh(manifest_path, overwrite);
  ensure_fresh(summary_path, overwrite);

  const LoadedData data = load_dataset(spec.dataset, spec.config.test_fraction, spec.config.seed);
  PartitionManifest manifest =
      build_partition(data.train, spec.config.labels_per_device, spec.config.devices,
                      spec.config.samples_per_device, spec.config.quantity_variance,
                      spec.config.seed);
  manifest.emd = system_emd(manifest.shards, data.train, data.train.num_classes);

  std::string iid = "n/a (thresholds cover 7 and 10 classes)";
  if (data.train.num_classes == 7 || data.train.num_classes == 10)
    iid = to_string(classify_iid(manifest.emd, data.train.num_classes));

  save_manifest(manifest, manifest_path.string(), hash);

  std::ostringstream summary;
  summary << stamp_for(hash) << "\n"
          << "dataset:            " << spec.dataset.kind << " (" << data.train.size()
          << " train samples, " << data.train.num_classes << " classes)\n"
          << "devices (D):        " << spec.config.devices << "\n"
          << "labels/device (k):  " << spec.config.labels_per_device << "\n"
          << "samples/device (s): " << spec.config.samples_per_device << "\n"
          << "quantity var:       " << spec.config.quantity_variance << "\n"
          << "seed:               " << spec.config.seed << "\n"
          << "system EMD:         " << manifest.emd << "\n"
          << "IID level:          " << iid << "\n";
  write_text(summary_path, summary.str());
  std::cout << summary.str();
  return 0;
}

int cmd_sweep(const std::string& config_path, const std::string& out_dir,
              std::optional<std::uint64_t> seed, bool overwrite) {
  SweepSpec spec = load_sweep_spec(config_path);
  if (seed) spec.seed = *seed;

  fs::create_directories(out_dir);
  const fs::path trials_path = fs::path(out_dir) / "emd_trials.csv";
  const fs::path cells_path = fs::path(out_dir) / "emd_mean.csv";
  ensure_fresh(trials_path, overwrite);
  ensure_fresh(cells_path, overwrite);

  // hash over the sweep grid so outputs are traceable to their spec
  std::ostringstream canonical;
  canonical << spec.dataset.kind << "|" << spec.devices << "|" << spec.samples_per_device << "|";
  for (int k : spec.ks) canonical << k << ",";
  canonical << "|";
  for (double v : spec.vars) canonical << v << ",";
  canonical << "|" << spec.trials << "|" << spec.seed;
  const std::string hash = config_hash_hex(canonical.str());

  const LoadedData data = load_dataset(spec.dataset, 0.2, spec.seed);
  const SweepResult result = emd_sweep(data.train, spec.ks, spec.vars, spec.devices,
                                       spec.samples_per_device, spec.trials, spec.seed);
  write_sweep_csv(result, trials_path.string(), cells_path.string(), stamp_for(hash));
  std::cout << "wrote " << result.trials.size() << " trial rows, " << result.cells.size()
            << " aggregate rows to " << out_dir << "\n";
  return 0;
}

int cmd_train(const std::string& config_path, const std::string& out_dir,
              std::optional<std::uint64_t> seed, int workers, bool overwrite) {
  const RunSpec spec = load_spec_with_seed(config_path, seed);
  const std::string echo = run_spec_echo(spec);
  const std::string hash = config_hash_hex(echo);

  fs::create_directories(out_dir);
  const fs::path config_echo_path = fs::path(out_dir) / "config.json";
  const fs::path manifest_path = fs::path(out_dir) / "manifest.json";
  const fs::path rounds_path = fs::path(out_dir) / "rounds.jsonl";
  const fs::path summary_path = fs::path(out_dir) / "summary.json";
  for (const fs::path& p : {config_echo_path, manifest_path, rounds_path, summary_path})
    ensure_fresh(p, overwrite);

  write_text(config_echo_path, echo);

  const LoadedData data = load_dataset(spec.dataset, spec.config.test_fraction, spec.config.seed);
  const Dataset* global_test = data.test ? &*data.test : nullptr;

  std::ofstream log(rounds_path, std::ios::binary);
  if (!log) throw std::runtime_error(rounds_path.string() + ": cannot write");
  log << round_log_header(hash) << "\n";
  log.flush();

  const ExperimentResult result = run_experiment(
      spec.config, data.train, global_test, workers, [&](const RoundRecord& record) {
        log << round_log_line(record) << "\n";
        log.flush();  // per-round flush: an interrupted run keeps complete lines
        std::cerr << "round " << record.round << "/" << spec.config.rounds
                  << "  f1=" << record.macro_f1 << "  loss=" << record.mean_train_loss
                  << "  (" << record.wall_ms << " ms)\n";
      });

  save_manifest(result.manifest, manifest_path.string(), hash);
  write_text(summary_path, summary_to_json(result, spec, hash));
  std::cout << "best f1 " << result.best_f1 << " at round " << result.best_round
            << "  (emd " << result.emd << ", iid "
            << (result.iid_level ? to_string(*result.iid_level) : std::string("n/a")) << ")\n";
  return 0;
}

int cmd_analyze(const std::vector<std::string>& inputs, const std::string& out_path,
                const std::string& param, double sigma, int window, bool overwrite) {
  if (inputs.empty()) throw ConfigError("analyze: no experiment directories given");
  if (!out_path.empty()) ensure_fresh(out_path, overwrite);

  std::vector<ResultSummary> results;
  results.reserve(inputs.size());
  for (const std::string& dir : inputs) results.push_back(read_experiment_dir(dir));

  std::string combined;
  for (const ResultSummary& r : results) combined += r.config_hash + ";";
  const std::vector<TableRow> rows = compare_table(results, param, sigma, window);
  const std::string csv = table_to_csv(rows, stamp_for(config_hash_hex(combined)));
  if (out_path.empty()) {
    std::cout << csv;
  } else {
    write_text(out_path, csv);
    std::cout << "wrote " << rows.size() << " rows to " << out_path << "\n";
  }
  return 0;
}

}  // namespace

int main(int argc, char** argv) {
  CLI::App app{"deterministic federated-learning simulator"};
  app.set_version_flag("--version", std::string(kVersion));
  app.require_subcommand(1);

  std::string config_path;
  std::string out_path;
  std::optional<std::uint64_t> seed;
  int workers = 1;
  bool overwrite = false;

  auto add_common = [&](CLI::App* cmd, bool needs_config) {
    if (needs_config)
      cmd->add_option("--config", config_path, "spec file (JSON)")->required();
    cmd->add_option("--out", out_path, "output directory / file")->required();
    cmd->add_option("--seed", seed, "override the spec seed");
    cmd->add_flag("--overwrite", overwrite, "replace existing outputs");
  };

  CLI::App* partition = app.add_subcommand("partition", "build and persist a partition manifest");
  add_common(partition, true);

  CLI::App* sweep = app.add_subcommand("sweep", "EMD grid over (k, var) cells");
  add_common(sweep, true);

  CLI::App* train = app.add_subcommand("train", "run a federated experiment");
  add_common(train, true);
  train->add_option("--workers", workers, "parallel local-training threads")
      ->check(CLI::PositiveNumber);

  std::vector<std::string> analyze_inputs;
  std::string analyze_param = "active";
  double sigma = 3.0;
  int smooth_window = 3;
  CLI::App* analyze = app.add_subcommand("analyze", "comparison table from experiment dirs");
  analyze->add_option("dirs", analyze_inputs, "experiment directories")->required();
  analyze->add_option("--out", out_path, "output CSV (stdout when omitted)");
  analyze->add_option("--param", analyze_param, "config field to group rows by");
  analyze->add_option("--sigma", sigma, "outlier threshold in standard deviations");
  analyze->add_option("--smooth-window", smooth_window, "moving-average window")
      ->check(CLI::PositiveNumber);
  analyze->add_flag("--overwrite", overwrite, "replace existing outputs");

  CLI11_PARSE(app, argc, argv);

  try {
    if (partition->parsed()) return cmd_partition(config_path, out_path, seed, overwrite);
    if (sweep->parsed()) return cmd_sweep(config_path, out_path, seed, overwrite);
    if (train->parsed()) return cmd_train(config_path, out_path, seed, workers, overwrite);
    if (analyze->parsed())
      return cmd_analyze(analyze_inputs, out_path, analyze_param, sigma, smooth_window,
                         overwrite);
  } catch (const ConfigError& e) {
    std::cerr << "error: " << e.what() << "\n";
    return 2;
  } catch (const std::invalid_argument& e) {
    std::cerr << "error: " << e.what() << "\n";
    return 2;
  } catch (const nlohmann::json::exception& e) {
    std::cerr << "error: " << e.what() << "\n";
    return 2;
  } catch (const std::exception& e) {
    std::cerr << "error: " << e.what() << "\n";
    return 1;
  }
  return 2;
}
