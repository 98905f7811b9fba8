#include "fedsim/partition.hpp"

#include <algorithm>
#include <fstream>
#include <stdexcept>

#include "fedsim/version.hpp"
#include "json.hpp"

namespace fedsim {

bool LabelAllocation::device_has_label(int device, int label) const {
  const auto& labs = per_device_labels.at(device);
  return std::binary_search(labs.begin(), labs.end(), label);
}

LabelAllocation allocate_labels(int k, int num_classes, int devices, RngStream& rng) {
  if (k < 1 || k > num_classes)
    throw std::invalid_argument("allocate_labels: k must lie in [1, K]");
  if (devices < 1) throw std::invalid_argument("allocate_labels: need at least one device");

  LabelAllocation alloc;
  alloc.labels_per_device = k;
  alloc.num_classes = num_classes;
  alloc.devices = devices;
  alloc.per_device_labels.resize(devices);

  std::vector<int> pool(num_classes);
  for (int d = 0; d < devices; ++d) {
    for (int i = 0; i < num_classes; ++i) pool[i] = i;
    // partial Fisher-Yates: first k entries are a uniform k-subset
    for (int i = 0; i < k; ++i) {
      const int j = i + static_cast<int>(rng.next_below(num_classes - i));
      std::swap(pool[i], pool[j]);
    }
    std::vector<int> labs(pool.begin(), pool.begin() + k);
    std::sort(labs.begin(), labs.end());
    alloc.per_device_labels[d] = std::move(labs);
  }
  return alloc;
}

std::vector<std::vector<int>> assign_label_chunks(const Dataset& train,
                                                  const LabelAllocation& allocation,
                                                  RngStream& rng) {
  const int K = allocation.num_classes;
  if (train.num_classes != K)
    throw std::invalid_argument("assign_label_chunks: class count mismatch");

  std::vector<std::vector<int>> by_label(K);
  for (int i = 0; i < train.size(); ++i) by_label[train.labels[i]].push_back(i);

  std::vector<std::vector<int>> holders(K);
  for (int d = 0; d < allocation.devices; ++d)
    for (int lab : allocation.per_device_labels[d]) holders[lab].push_back(d);

  std::vector<std::vector<int>> pools(allocation.devices);
  for (int lab = 0; lab < K; ++lab) {
    if (holders[lab].empty()) continue;
    if (by_label[lab].empty())
      throw std::runtime_error("distribute_samples: allocated label " + std::to_string(lab) +
                               " has no samples in the dataset");
    rng.shuffle(by_label[lab]);
    const std::size_t chunk = by_label[lab].size() / holders[lab].size();
    std::size_t pos = 0;
    for (int d : holders[lab]) {
      pools[d].insert(pools[d].end(), by_label[lab].begin() + pos,
                      by_label[lab].begin() + pos + chunk);
      pos += chunk;
    }
    // leftover samples (floor division remainder) stay unassigned
  }
  return pools;
}

std::vector<ClientShard> distribute_samples(const Dataset& train,
                                            const LabelAllocation& allocation, int s,
                                            RngStream& rng) {
  if (s < 1) throw std::invalid_argument("distribute_samples: s must be positive");

  std::vector<std::vector<int>> pools = assign_label_chunks(train, allocation, rng);

  std::vector<ClientShard> shards(allocation.devices);
  for (int d = 0; d < allocation.devices; ++d) {
    ClientShard& shard = shards[d];
    shard.device_id = d;
    std::vector<int>& pool = pools[d];
    rng.shuffle(pool);
    const std::size_t n = pool.size();
    const std::size_t n_val = n / 10;
    const std::size_t n_test = n / 10;
    const std::size_t n_train = n - n_val - n_test;  // remainder goes to train
    shard.train_idx.assign(pool.begin(), pool.begin() + n_train);
    shard.val_idx.assign(pool.begin() + n_train, pool.begin() + n_train + n_val);
    shard.test_idx.assign(pool.begin() + n_train + n_val, pool.end());
  }

  // Enforce the per-device sample cap / floor.
  for (int d = 0; d < allocation.devices; ++d) {
    ClientShard& shard = shards[d];
    const std::size_t target = static_cast<std::size_t>(s);
    if (shard.train_idx.size() > target) {
      rng.shuffle(shard.train_idx);
      shard.train_idx.resize(target);
    } else if (shard.train_idx.size() < target) {
      // Candidates: every train-set sample of an allocated label, minus this
      // device's own val/test indices (keeps the within-device shards
      // disjoint). Cross-device repetition is allowed here.
      std::vector<char> own_eval(train.size(), 0);
      for (int i : shard.val_idx) own_eval[i] = 1;
      for (int i : shard.test_idx) own_eval[i] = 1;
      std::vector<int> candidates;
      for (int i = 0; i < train.size(); ++i)
        if (!own_eval[i] && allocation.device_has_label(d, train.labels[i]))
          candidates.push_back(i);
      if (candidates.empty())
        throw std::runtime_error("distribute_samples: no candidates to top up device " +
                                 std::to_string(d));
      while (shard.train_idx.size() < target) {
        shard.train_idx.push_back(candidates[rng.next_below(candidates.size())]);
        shard.resampled_count++;
      }
    }
  }
  return shards;
}

void apply_quantity_skew(std::vector<ClientShard>& shards, double var, RngStream& rng) {
  if (var < 0.0 || var > 1.0)
    throw std::invalid_argument("apply_quantity_skew: var must lie in [0, 1]");
  if (var == 0.0) return;  // exact identity
  for (ClientShard& shard : shards) {
    if (shard.train_idx.empty())
      throw std::invalid_argument("apply_quantity_skew: empty train shard");
    const double keep = rng.uniform(1.0 - var, 1.0);
    const std::size_t retained = static_cast<std::size_t>(
        std::ceil(keep * static_cast<double>(shard.train_idx.size())));
    rng.shuffle(shard.train_idx);
    if (retained < shard.train_idx.size()) shard.train_idx.resize(retained);
  }
}

PartitionManifest build_partition(const Dataset& train, int k, int devices, int s, double var,
                                  std::uint64_t seed) {
  PartitionManifest manifest;
  manifest.max_samples_per_device = s;
  manifest.quantity_variance = var;
  manifest.seed = seed;
  manifest.label_names = train.label_names;

  RngStream alloc_rng(derive_seed(seed, "partition/alloc"));
  RngStream dist_rng(derive_seed(seed, "partition/dist"));
  RngStream skew_rng(derive_seed(seed, "partition/skew"));

  manifest.allocation = allocate_labels(k, train.num_classes, devices, alloc_rng);
  manifest.shards = distribute_samples(train, manifest.allocation, s, dist_rng);
  apply_quantity_skew(manifest.shards, var, skew_rng);
  return manifest;
}

namespace {
using ordered_json = nlohmann::ordered_json;

ordered_json manifest_json(const PartitionManifest& m, const std::string& config_hash) {
  ordered_json j;
  j["version"] = kVersion;
  if (!config_hash.empty()) j["config_hash"] = config_hash;
  j["seed"] = m.seed;
  j["labels_per_device"] = m.allocation.labels_per_device;
  j["num_classes"] = m.allocation.num_classes;
  j["devices"] = m.allocation.devices;
  j["max_samples_per_device"] = m.max_samples_per_device;
  j["quantity_variance"] = m.quantity_variance;
  j["emd"] = m.emd;
  if (!m.label_names.empty()) j["label_names"] = m.label_names;
  j["allocation"] = m.allocation.per_device_labels;
  ordered_json shards = ordered_json::array();
  for (const ClientShard& s : m.shards) {
    ordered_json sj;
    sj["device"] = s.device_id;
    sj["resampled"] = s.resampled_count;
    sj["train"] = s.train_idx;
    sj["val"] = s.val_idx;
    sj["test"] = s.test_idx;
    shards.push_back(std::move(sj));
  }
  j["shards"] = std::move(shards);
  return j;
}
}  // namespace

std::string manifest_to_json(const PartitionManifest& manifest) {
  return manifest_json(manifest, "").dump(2) + "\n";
}

PartitionManifest manifest_from_json(const std::string& text) {
  const auto j = nlohmann::json::parse(text);
  PartitionManifest m;
  m.seed = j.at("seed").get<std::uint64_t>();
  m.allocation.labels_per_device = j.at("labels_per_device").get<int>();
  m.allocation.num_classes = j.at("num_classes").get<int>();
  m.allocation.devices = j.at("devices").get<int>();
  m.max_samples_per_device = j.at("max_samples_per_device").get<int>();
  m.quantity_variance = j.at("quantity_variance").get<double>();
  m.emd = j.at("emd").get<double>();
  if (j.contains("label_names")) m.label_names = j["label_names"].get<std::vector<std::string>>();
  m.allocation.per_device_labels = j.at("allocation").get<std::vector<std::vector<int>>>();
  for (const auto& sj : j.at("shards")) {
    ClientShard s;
    s.device_id = sj.at("device").get<int>();
    s.resampled_count = sj.at("resampled").get<int>();
    s.train_idx = sj.at("train").get<std::vector<int>>();
    s.val_idx = sj.at("val").get<std::vector<int>>();
    s.test_idx = sj.at("test").get<std::vector<int>>();
    m.shards.push_back(std::move(s));
  }
  return m;
}

void save_manifest(const PartitionManifest& manifest, const std::string& path,
                   const std::string& config_hash) {
  std::ofstream out(path, std::ios::binary);
  if (!out) throw std::runtime_error(path + ": cannot write");
  out << manifest_json(manifest, config_hash).dump(2) << "\n";
}

PartitionManifest load_manifest(const std::string& path) {
  std::ifstream in(path, std::ios::binary);
  if (!in) throw std::runtime_error(path + ": cannot open");
  std::string text((std::istreambuf_iterator<char>(in)), std::istreambuf_iterator<char>());
  return manifest_from_json(text);
}

}  // namespace fedsim
