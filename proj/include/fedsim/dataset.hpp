#pragma once

#include <cstdint>
#include <span>
#include <string>
#include <vector>

#include "fedsim/nn.hpp"

namespace fedsim {

// Immutable after construction; shared freely across workers.
struct Dataset {
  std::string name;
  int num_classes = 0;
  int feature_dim = 0;
  std::vector<double> features;  // n x feature_dim, row-major
  std::vector<int> labels;
  std::vector<std::string> label_names;  // filled by the CSV loader (first-appearance order)

  int size() const { return static_cast<int>(labels.size()); }
  std::span<const double> row(int i) const {
    return {features.data() + static_cast<std::size_t>(i) * feature_dim,
            static_cast<std::size_t>(feature_dim)};
  }
  std::vector<int> class_counts() const;
};

// IDX binary format (big-endian, magic 0x803 images / 0x801 labels); pixel
// values scaled to [0, 1].
Dataset load_mnist_idx(const std::string& images_path, const std::string& labels_path);

// CSV with header row. Numeric columns are z-scored (std-0 columns become all
// zeros), categorical columns one-hot encoded, labels mapped to [0, K) in
// first-appearance order. A column is numeric iff every non-empty cell parses
// as a real number.
Dataset load_tabular_csv(const std::string& path, const std::string& label_column);

// Deterministic stand-in for the tabular task: K unit-covariance Gaussian
// blobs with means on a scaled simplex, class-balanced to within one sample.
Dataset synth_tabular(int num_classes, int num_samples, int feature_dim, std::uint64_t seed);

struct GlobalSplit {
  Dataset train;
  Dataset test;
  bool stratified = true;  // false when some class had < 2 samples
};

GlobalSplit global_split(const Dataset& dataset, double test_fraction, std::uint64_t seed);

Batch gather_batch(const Dataset& dataset, std::span<const int> indices);

}  // namespace fedsim
