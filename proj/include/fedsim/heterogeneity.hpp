// Quantifies data skew as the mean pairwise earth mover's distance between
// client label distributions, and maps that score to an IID level.
//
// The ground metric is |i - j| on label indices: a pair of one-hot
// distributions at labels 0 and 9 is distance 9 apart, and the K-class
// single-label expectation reproduces the reference score table (about 3.3
// for K = 10, 16/7 for K = 7). On the ordered label line the distance
// reduces to the sum of absolute CDF differences.

#pragma once

#include <cstdint>
#include <string>
#include <vector>

#include "fedsim/partition.hpp"

namespace fedsim {

using LabelDistribution = std::vector<double>;

enum class IidLevel { Low, Moderate, High };

std::string to_string(IidLevel level);

// Normalized label counts over the device's train shard.
LabelDistribution label_histogram(const ClientShard& shard, const Dataset& dataset,
                                  int num_classes);

// 1-Wasserstein distance with ground metric |i - j|.
double pairwise_emd(const LabelDistribution& p, const LabelDistribution& q);

// Mean pairwise EMD over all unordered shard pairs.
double system_emd(const std::vector<ClientShard>& shards, const Dataset& dataset,
                  int num_classes);

// Threshold table calibrated for 10-class and 7-class datasets; boundary
// values fall into Moderate on both ends. Other class counts are an error.
IidLevel classify_iid(double emd, int num_classes);

struct SweepTrial {
  int k = 0;
  double var = 0.0;
  int trial = 0;
  double emd = 0.0;
};

struct SweepCell {
  int k = 0;
  double var = 0.0;
  double mean_emd = 0.0;
};

struct SweepResult {
  std::vector<SweepTrial> trials;
  std::vector<SweepCell> cells;
};

// Builds `trials` partitions per (k, var) cell with seeds derived from
// (seed, cell, trial) and records the per-trial and mean system EMD.
SweepResult emd_sweep(const Dataset& train, const std::vector<int>& ks,
                      const std::vector<double>& vars, int devices, int s, int trials,
                      std::uint64_t seed);

// Plot-ready CSVs: per-trial rows (k,var,trial,emd) and the aggregated
// heatmap (k,var,mean_emd). `stamp` goes into a leading comment line.
void write_sweep_csv(const SweepResult& result, const std::string& trials_path,
                     const std::string& cells_path, const std::string& stamp);

}  // namespace fedsim
