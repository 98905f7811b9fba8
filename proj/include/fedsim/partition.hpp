// Label allocation, sample distribution with replacement, and data quantity
// skew: the three-stage partitioning pipeline that hands each simulated
// device its shard of the global training set.

#pragma once

#include <cstdint>
#include <string>
#include <vector>

#include "fedsim/dataset.hpp"
#include "fedsim/rng.hpp"

namespace fedsim {

struct LabelAllocation {
  int labels_per_device = 0;  // k
  int num_classes = 0;        // K
  int devices = 0;            // D
  std::vector<std::vector<int>> per_device_labels;  // sorted, k distinct labels each

  bool device_has_label(int device, int label) const;
};

struct ClientShard {
  int device_id = 0;
  std::vector<int> train_idx;  // indices into the global train dataset
  std::vector<int> val_idx;
  std::vector<int> test_idx;
  int resampled_count = 0;  // samples added with replacement during top-up
};

struct PartitionManifest {
  LabelAllocation allocation;
  std::vector<ClientShard> shards;
  int max_samples_per_device = 0;  // s
  double quantity_variance = 0.0;  // var
  std::uint64_t seed = 0;
  double emd = 0.0;  // filled by the heterogeneity pass
  std::vector<std::string> label_names;
};

// Each device independently receives k distinct uniform-random labels.
LabelAllocation allocate_labels(int k, int num_classes, int devices, RngStream& rng);

// Phase one of the distribution step: every label's samples are split evenly
// (floor division) among the devices holding that label, with no sample
// appearing on two devices. Exposed separately so the pre-top-up
// disjointness property can be checked directly.
std::vector<std::vector<int>> assign_label_chunks(const Dataset& train,
                                                  const LabelAllocation& allocation,
                                                  RngStream& rng);

// Full distribution step: label chunks, per-device shuffle and 80/10/10
// split, then the train shard is trimmed to s or topped up to s by sampling
// with replacement from the device's allowed labels.
std::vector<ClientShard> distribute_samples(const Dataset& train,
                                            const LabelAllocation& allocation, int s,
                                            RngStream& rng);

// Per device, keep a uniform [1-var, 1] fraction of the train shard
// (rounded up). Validation and test shards are untouched; var = 0 is the
// identity.
void apply_quantity_skew(std::vector<ClientShard>& shards, double var, RngStream& rng);

// Composes the three stages with per-phase substreams derived from the seed,
// so e.g. changing var never perturbs the label allocation.
PartitionManifest build_partition(const Dataset& train, int k, int devices, int s, double var,
                                  std::uint64_t seed);

std::string manifest_to_json(const PartitionManifest& manifest);
PartitionManifest manifest_from_json(const std::string& text);
void save_manifest(const PartitionManifest& manifest, const std::string& path,
                   const std::string& config_hash = "");
PartitionManifest load_manifest(const std::string& path);

}  // namespace fedsim
