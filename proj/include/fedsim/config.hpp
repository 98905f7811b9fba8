// Run-spec files (strict JSON: unknown fields are rejected), dataset
// loading, and the on-disk experiment artifacts (config echo, manifest,
// round log, summary) that make one output directory a reproducibility unit.

#pragma once

#include <cstdint>
#include <optional>
#include <string>
#include <vector>

#include "fedsim/analysis.hpp"
#include "fedsim/dataset.hpp"
#include "fedsim/federation.hpp"

namespace fedsim {

struct DatasetSpec {
  std::string kind;  // "mnist" | "synth" | "csv"
  std::string dir;   // mnist: directory holding the four IDX files
  std::string path;  // csv
  std::string label_column;
  int classes = 7;   // synth
  int samples = 2100;
  int features = 16;
};

struct RunSpec {
  DatasetSpec dataset;
  ExperimentConfig config;
};

struct SweepSpec {
  DatasetSpec dataset;
  int devices = 30;
  int samples_per_device = 400;
  std::vector<int> ks;
  std::vector<double> vars;
  int trials = 1;
  std::uint64_t seed = 1;
};

RunSpec parse_run_spec(const std::string& json_text);
RunSpec load_run_spec(const std::string& path);
SweepSpec parse_sweep_spec(const std::string& json_text);
SweepSpec load_sweep_spec(const std::string& path);

struct LoadedData {
  Dataset train;
  std::optional<Dataset> test;  // held-out global test set
};

// mnist: official train/test files from spec.dir; synth/csv: deterministic
// stratified global split at test_fraction.
LoadedData load_dataset(const DatasetSpec& spec, double test_fraction, std::uint64_t seed);

// Canonical config echo (field order fixed) and its hash; two spec files
// describing the same effective config hash identically.
std::string run_spec_echo(const RunSpec& spec);
std::string config_hash_hex(const std::string& canonical_text);

// Round-log line: {"round":..,"f1":..,"loss":..,"selected":[..]}. Wall time
// deliberately stays out so reruns are byte-identical.
std::string round_log_line(const RoundRecord& record);
std::string round_log_header(const std::string& config_hash);

std::string summary_to_json(const ExperimentResult& result, const RunSpec& spec,
                            const std::string& config_hash);

// Reads summary.json + rounds.jsonl from an experiment directory.
ResultSummary read_experiment_dir(const std::string& dir);

}  // namespace fedsim
