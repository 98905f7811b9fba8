// Communication-round orchestration: client selection, local training,
// aggregation, evaluation, and per-round metric records.
//
// Determinism contract: the full experiment result is a pure function of the
// config. All randomness comes from streams derived from (seed, phase,
// device, round), and updates are merged at a barrier in device-id order, so
// results are bit-identical for any worker count.

#pragma once

#include <cstdint>
#include <functional>
#include <optional>
#include <span>
#include <string>
#include <vector>

#include "fedsim/aggregators.hpp"
#include "fedsim/heterogeneity.hpp"

namespace fedsim {

enum class SelectionMode { Uniform, LossBiased };
enum class EvalMode { UnionShards, GlobalTest };

struct ExperimentConfig {
  std::string dataset_name;
  std::vector<int> hidden_dims{128};
  double dropout = 0.0;
  AggregatorKind aggregator = AggregatorKind::FedAvg;
  int devices = 30;            // D
  int active_count = 6;        // devices trained per round
  int rounds = 10;
  int labels_per_device = 1;   // k
  int samples_per_device = 100;  // s
  double quantity_variance = 0.0;  // var
  LocalConfig local;
  SelectionMode selection = SelectionMode::Uniform;
  EvalMode eval = EvalMode::UnionShards;
  double test_fraction = 0.2;  // global split fraction (non-MNIST datasets)
  std::uint64_t seed = 1;
};

struct RoundRecord {
  int round = 0;  // 1-based
  std::vector<int> selected;
  double macro_f1 = 0.0;
  double mean_train_loss = 0.0;
  double wall_ms = 0.0;
};

struct ExperimentResult {
  ExperimentConfig config;
  PartitionManifest manifest;
  std::vector<RoundRecord> curve;
  double best_f1 = 0.0;
  int best_round = 0;  // earliest round achieving best_f1, 1-based
  double emd = 0.0;
  std::optional<IidLevel> iid_level;  // empty when K is not 7 or 10
  double total_wall_ms = 0.0;
};

// Uniform sample without replacement; the stream depends only on (seed,
// round) so selection is independent of training numerics.
std::vector<int> select_active(int devices, int active_count, int round, std::uint64_t seed);

// Unweighted mean over classes of per-class F1. Classes absent from the
// label vector are skipped (they do not enter the mean's denominator).
double macro_f1(std::span<const int> predictions, std::span<const int> labels, int num_classes);

// Macro F1 of the current global model on the union of all device test
// shards. FedPer predicts each device's shard with that device's stored
// head and pools the predictions first.
double evaluate(const AggregatorState& state, const std::vector<ClientShard>& shards,
                const Dataset& dataset);

// Same, against a held-out global test set.
double evaluate_global(const AggregatorState& state, const Dataset& test_set);

Model build_model(int feature_dim, int num_classes, const std::vector<int>& hidden_dims,
                  double dropout);

// One communication round: select, train selected devices (optionally on
// `workers` threads), aggregate, evaluate. `last_losses` feeds the optional
// loss-biased selection and is updated with each trained client's mean loss.
RoundRecord run_round(AggregatorState& state, const PartitionManifest& manifest,
                      const Dataset& dataset, const ExperimentConfig& cfg, int round,
                      int workers, std::vector<double>& last_losses,
                      const Dataset* global_test = nullptr);

using RoundCallback = std::function<void(const RoundRecord&)>;

// Full pipeline: partition, heterogeneity metrics, `rounds` rounds.
// `global_test` is only consulted when cfg.eval = GlobalTest.
ExperimentResult run_experiment(const ExperimentConfig& cfg, const Dataset& train,
                                const Dataset* global_test = nullptr, int workers = 1,
                                const RoundCallback& on_round = nullptr);

}  // namespace fedsim
