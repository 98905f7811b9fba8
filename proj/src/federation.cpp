#include "fedsim/federation.hpp"

#include <algorithm>
#include <atomic>
#include <chrono>
#include <cmath>
#include <limits>
#include <stdexcept>
#include <thread>

namespace fedsim {

std::vector<int> select_active(int devices, int active_count, int round, std::uint64_t seed) {
  if (active_count < 1 || active_count > devices)
    throw std::invalid_argument("select_active: active_count must lie in [1, devices]");
  RngStream rng(derive_seed(seed, "select", static_cast<std::uint64_t>(round)));
  std::vector<int> ids(devices);
  for (int i = 0; i < devices; ++i) ids[i] = i;
  for (int i = 0; i < active_count; ++i) {
    const int j = i + static_cast<int>(rng.next_below(devices - i));
    std::swap(ids[i], ids[j]);
  }
  ids.resize(active_count);
  std::sort(ids.begin(), ids.end());
  return ids;
}

namespace {

// Highest last-known-loss clients first; untouched clients rank highest.
std::vector<int> select_loss_biased(int devices, int active_count,
                                    const std::vector<double>& last_losses) {
  std::vector<int> ids(devices);
  for (int i = 0; i < devices; ++i) ids[i] = i;
  std::stable_sort(ids.begin(), ids.end(), [&](int a, int b) {
    if (last_losses[a] != last_losses[b]) return last_losses[a] > last_losses[b];
    return a < b;
  });
  ids.resize(active_count);
  std::sort(ids.begin(), ids.end());
  return ids;
}

}  // namespace

double macro_f1(std::span<const int> predictions, std::span<const int> labels, int num_classes) {
  if (predictions.empty() || predictions.size() != labels.size())
    throw std::invalid_argument("macro_f1: empty or mismatched inputs");

  std::vector<long long> tp(num_classes, 0), fp(num_classes, 0), fn(num_classes, 0);
  std::vector<char> present(num_classes, 0);
  for (std::size_t i = 0; i < labels.size(); ++i) {
    const int y = labels[i];
    const int p = predictions[i];
    if (y < 0 || y >= num_classes || p < 0 || p >= num_classes)
      throw std::invalid_argument("macro_f1: class index out of range");
    present[y] = 1;
    if (p == y) {
      tp[y]++;
    } else {
      fp[p]++;
      fn[y]++;
    }
  }

  double sum = 0.0;
  int counted = 0;
  for (int c = 0; c < num_classes; ++c) {
    if (!present[c]) continue;  // class absent from labels: skipped entirely
    const double precision = tp[c] + fp[c] > 0 ? double(tp[c]) / (tp[c] + fp[c]) : 0.0;
    const double recall = tp[c] + fn[c] > 0 ? double(tp[c]) / (tp[c] + fn[c]) : 0.0;
    const double f1 =
        precision + recall > 0.0 ? 2.0 * precision * recall / (precision + recall) : 0.0;
    sum += f1;
    ++counted;
  }
  return sum / counted;
}

namespace {

constexpr int kPredictChunk = 512;

void predict_indices(const Model& model, const ParamVector& params, const Dataset& dataset,
                     std::span<const int> indices, std::vector<int>& out_preds,
                     std::vector<int>& out_labels) {
  for (std::size_t start = 0; start < indices.size(); start += kPredictChunk) {
    const std::size_t stop = std::min(indices.size(), start + kPredictChunk);
    const Batch batch =
        gather_batch(dataset, std::span<const int>(indices.data() + start, stop - start));
    const std::vector<int> preds = model.predict(params, batch.features, batch.batch_size);
    out_preds.insert(out_preds.end(), preds.begin(), preds.end());
    out_labels.insert(out_labels.end(), batch.labels.begin(), batch.labels.end());
  }
}

ParamVector with_client_head(const AggregatorState& state, int device_id) {
  ParamVector params = state.global_params;
  const auto it = state.client_heads.find(device_id);
  if (it != state.client_heads.end())
    for (const auto& [tag, values] : it->second) params.replace_segment(tag, values);
  return params;
}

}  // namespace

double evaluate(const AggregatorState& state, const std::vector<ClientShard>& shards,
                const Dataset& dataset) {
  std::vector<int> preds, labels;
  if (state.kind == AggregatorKind::FedPer) {
    for (const ClientShard& shard : shards) {
      if (shard.test_idx.empty()) continue;
      const ParamVector params = with_client_head(state, shard.device_id);
      predict_indices(state.model, params, dataset, shard.test_idx, preds, labels);
    }
  } else {
    std::vector<int> all;
    for (const ClientShard& shard : shards)
      all.insert(all.end(), shard.test_idx.begin(), shard.test_idx.end());
    predict_indices(state.model, state.global_params, dataset, all, preds, labels);
  }
  if (labels.empty()) throw std::runtime_error("evaluate: no test samples across shards");
  return macro_f1(preds, labels, dataset.num_classes);
}

double evaluate_global(const AggregatorState& state, const Dataset& test_set) {
  if (test_set.size() == 0) throw std::runtime_error("evaluate_global: empty test set");
  std::vector<int> all(test_set.size());
  for (int i = 0; i < test_set.size(); ++i) all[i] = i;
  std::vector<int> preds, labels;
  if (state.kind == AggregatorKind::FedPer) {
    // every device predicts the whole set with its own head; pooled
    for (const auto& [device_id, heads] : state.client_heads) {
      const ParamVector params = with_client_head(state, device_id);
      predict_indices(state.model, params, test_set, all, preds, labels);
    }
  } else {
    predict_indices(state.model, state.global_params, test_set, all, preds, labels);
  }
  return macro_f1(preds, labels, test_set.num_classes);
}

Model build_model(int feature_dim, int num_classes, const std::vector<int>& hidden_dims,
                  double dropout) {
  std::vector<LayerSpec> layers;
  int dim = feature_dim;
  for (int h : hidden_dims) {
    layers.push_back(LayerSpec::dense(dim, h));
    layers.push_back(LayerSpec::relu(h));
    if (dropout > 0.0) layers.push_back(LayerSpec::dropout(h, dropout));
    dim = h;
  }
  layers.push_back(LayerSpec::dense(dim, num_classes));
  layers.push_back(LayerSpec::softmax_output(num_classes));
  return Model(std::move(layers));
}

RoundRecord run_round(AggregatorState& state, const PartitionManifest& manifest,
                      const Dataset& dataset, const ExperimentConfig& cfg, int round,
                      int workers, std::vector<double>& last_losses,
                      const Dataset* global_test) {
  const auto t0 = std::chrono::steady_clock::now();

  const std::vector<int> selected =
      cfg.selection == SelectionMode::LossBiased
          ? select_loss_biased(cfg.devices, cfg.active_count, last_losses)
          : select_active(cfg.devices, cfg.active_count, round, cfg.seed);

  std::vector<ClientUpdate> updates(selected.size());
  auto train_one = [&](std::size_t i) {
    const int device = selected[i];
    RngStream rng(derive_seed(cfg.seed, "train", static_cast<std::uint64_t>(device),
                              static_cast<std::uint64_t>(round)));
    updates[i] = local_train(state, device, manifest.shards[device], dataset, cfg.local, rng);
  };

  if (workers <= 1 || selected.size() <= 1) {
    for (std::size_t i = 0; i < selected.size(); ++i) train_one(i);
  } else {
    std::atomic<std::size_t> next{0};
    const int n_threads = std::min<std::size_t>(workers, selected.size());
    std::vector<std::thread> pool;
    pool.reserve(n_threads);
    for (int t = 0; t < n_threads; ++t)
      pool.emplace_back([&] {
        for (std::size_t i = next.fetch_add(1); i < selected.size(); i = next.fetch_add(1))
          train_one(i);
      });
    for (auto& th : pool) th.join();
  }

  double loss_sum = 0.0;
  for (const ClientUpdate& u : updates) {
    loss_sum += u.mean_loss;
    last_losses[u.device_id] = u.mean_loss;
  }

  aggregate(state, updates, cfg.local);

  RoundRecord record;
  record.round = round;
  record.selected = selected;
  record.mean_train_loss = loss_sum / static_cast<double>(updates.size());
  record.macro_f1 = cfg.eval == EvalMode::GlobalTest
                        ? evaluate_global(state, *global_test)
                        : evaluate(state, manifest.shards, dataset);
  record.wall_ms = std::chrono::duration<double, std::milli>(
                       std::chrono::steady_clock::now() - t0).count();
  return record;
}

ExperimentResult run_experiment(const ExperimentConfig& cfg, const Dataset& train,
                                const Dataset* global_test, int workers,
                                const RoundCallback& on_round) {
  if (cfg.rounds < 1) throw std::invalid_argument("run_experiment: rounds must be positive");
  if (cfg.active_count < 1 || cfg.active_count > cfg.devices)
    throw std::invalid_argument("run_experiment: active_count must lie in [1, devices]");
  if (cfg.eval == EvalMode::GlobalTest && !global_test)
    throw std::invalid_argument("run_experiment: global evaluation needs a test set");

  const auto t0 = std::chrono::steady_clock::now();

  ExperimentResult result;
  result.config = cfg;
  result.manifest = build_partition(train, cfg.labels_per_device, cfg.devices,
                                    cfg.samples_per_device, cfg.quantity_variance, cfg.seed);
  result.emd = system_emd(result.manifest.shards, train, train.num_classes);
  result.manifest.emd = result.emd;
  if (train.num_classes == 7 || train.num_classes == 10)
    result.iid_level = classify_iid(result.emd, train.num_classes);

  const Model model = build_model(train.feature_dim, train.num_classes, cfg.hidden_dims,
                                  cfg.dropout);
  AggregatorState state = init_aggregator(cfg.aggregator, model, cfg.devices,
                                          derive_seed(cfg.seed, "model"), cfg.local);

  std::vector<double> last_losses(cfg.devices, std::numeric_limits<double>::infinity());
  result.curve.reserve(cfg.rounds);
  for (int round = 1; round <= cfg.rounds; ++round) {
    RoundRecord record = run_round(state, result.manifest, train, cfg, round, workers,
                                   last_losses, global_test);
    if (on_round) on_round(record);
    result.curve.push_back(std::move(record));
  }

  result.best_f1 = result.curve.front().macro_f1;
  result.best_round = 1;
  for (const RoundRecord& r : result.curve)
    if (r.macro_f1 > result.best_f1) {
      result.best_f1 = r.macro_f1;
      result.best_round = r.round;
    }
  result.total_wall_ms = std::chrono::duration<double, std::milli>(
                             std::chrono::steady_clock::now() - t0).count();
  return result;
}

}  // namespace fedsim
