#include "fedsim/dataset.hpp"

#include <algorithm>
#include <cmath>
#include <cstdio>
#include <fstream>
#include <map>
#include <sstream>
#include <stdexcept>

namespace fedsim {

namespace {

std::uint32_t read_be_u32(std::istream& in, const std::string& path) {
  unsigned char buf[4];
  if (!in.read(reinterpret_cast<char*>(buf), 4))
    throw std::runtime_error(path + ": truncated header");
  return (std::uint32_t(buf[0]) << 24) | (std::uint32_t(buf[1]) << 16) |
         (std::uint32_t(buf[2]) << 8) | std::uint32_t(buf[3]);
}

void validate(const Dataset& ds) {
  if (ds.size() < ds.num_classes)
    throw std::runtime_error(ds.name + ": fewer samples than classes");
  for (int y : ds.labels)
    if (y < 0 || y >= ds.num_classes)
      throw std::runtime_error(ds.name + ": label out of range");
  for (double x : ds.features)
    if (!std::isfinite(x)) throw std::runtime_error(ds.name + ": non-finite feature");
}

bool parse_double(const std::string& s, double& out) {
  if (s.empty()) return false;
  char* end = nullptr;
  out = std::strtod(s.c_str(), &end);
  return end == s.c_str() + s.size() && std::isfinite(out);
}

std::vector<std::string> split_csv_line(const std::string& line) {
  std::vector<std::string> cells;
  std::string cur;
  for (char c : line) {
    if (c == ',') {
      cells.push_back(cur);
      cur.clear();
    } else if (c != '\r') {
      cur += c;
    }
  }
  cells.push_back(cur);
  return cells;
}

}  // namespace

std::vector<int> Dataset::class_counts() const {
  std::vector<int> counts(num_classes, 0);
  for (int y : labels) counts[y]++;
  return counts;
}

Dataset load_mnist_idx(const std::string& images_path, const std::string& labels_path) {
  std::ifstream img(images_path, std::ios::binary);
  if (!img) throw std::runtime_error(images_path + ": cannot open");
  std::ifstream lab(labels_path, std::ios::binary);
  if (!lab) throw std::runtime_error(labels_path + ": cannot open");

  const std::uint32_t img_magic = read_be_u32(img, images_path);
  if (img_magic != 0x00000803u)
    throw std::runtime_error(images_path + ": bad magic (expected 0x00000803)");
  const std::uint32_t n_img = read_be_u32(img, images_path);
  const std::uint32_t rows = read_be_u32(img, images_path);
  const std::uint32_t cols = read_be_u32(img, images_path);

  const std::uint32_t lab_magic = read_be_u32(lab, labels_path);
  if (lab_magic != 0x00000801u)
    throw std::runtime_error(labels_path + ": bad magic (expected 0x00000801)");
  const std::uint32_t n_lab = read_be_u32(lab, labels_path);
  if (n_img != n_lab)
    throw std::runtime_error(images_path + ": image/label count mismatch (" +
                             std::to_string(n_img) + " vs " + std::to_string(n_lab) + ")");

  const std::size_t dim = static_cast<std::size_t>(rows) * cols;
  Dataset ds;
  ds.name = "mnist";
  ds.num_classes = 10;
  ds.feature_dim = static_cast<int>(dim);
  ds.features.resize(static_cast<std::size_t>(n_img) * dim);
  ds.labels.resize(n_img);

  std::vector<unsigned char> buf(dim);
  for (std::uint32_t i = 0; i < n_img; ++i) {
    if (!img.read(reinterpret_cast<char*>(buf.data()), static_cast<std::streamsize>(dim)))
      throw std::runtime_error(images_path + ": truncated image data");
    double* dst = ds.features.data() + static_cast<std::size_t>(i) * dim;
    for (std::size_t j = 0; j < dim; ++j) dst[j] = buf[j] / 255.0;
    unsigned char y;
    if (!lab.read(reinterpret_cast<char*>(&y), 1))
      throw std::runtime_error(labels_path + ": truncated label data");
    if (y > 9) throw std::runtime_error(labels_path + ": label byte out of range");
    ds.labels[i] = y;
  }
  validate(ds);
  return ds;
}

Dataset load_tabular_csv(const std::string& path, const std::string& label_column) {
  std::ifstream in(path);
  if (!in) throw std::runtime_error(path + ": cannot open");
  std::string line;
  if (!std::getline(in, line) || line.empty()) throw std::runtime_error(path + ": empty file");

  const std::vector<std::string> header = split_csv_line(line);
  int label_col = -1;
  for (std::size_t i = 0; i < header.size(); ++i)
    if (header[i] == label_column) label_col = static_cast<int>(i);
  if (label_col < 0)
    throw std::runtime_error(path + ": label column '" + label_column + "' not found");

  std::vector<std::vector<std::string>> rows;
  while (std::getline(in, line)) {
    if (line.empty()) continue;
    std::vector<std::string> cells = split_csv_line(line);
    if (cells.size() != header.size())
      throw std::runtime_error(path + ": row " + std::to_string(rows.size() + 2) + " has " +
                               std::to_string(cells.size()) + " cells, expected " +
                               std::to_string(header.size()));
    rows.push_back(std::move(cells));
  }
  if (rows.empty()) throw std::runtime_error(path + ": no data rows");

  const int n = static_cast<int>(rows.size());
  const int n_cols = static_cast<int>(header.size());

  // A feature column is numeric iff every cell parses as a real number.
  std::vector<bool> numeric(n_cols, true);
  for (int c = 0; c < n_cols; ++c) {
    if (c == label_col) continue;
    double v;
    for (const auto& row : rows)
      if (!parse_double(row[c], v)) {
        numeric[c] = false;
        break;
      }
  }

  // Category vocabularies in first-appearance order.
  std::vector<std::vector<std::string>> vocab(n_cols);
  for (int c = 0; c < n_cols; ++c) {
    if (c == label_col || numeric[c]) continue;
    for (const auto& row : rows)
      if (std::find(vocab[c].begin(), vocab[c].end(), row[c]) == vocab[c].end())
        vocab[c].push_back(row[c]);
  }

  Dataset ds;
  ds.name = "tabular";
  for (const auto& row : rows) {
    const std::string& y = row[label_col];
    if (std::find(ds.label_names.begin(), ds.label_names.end(), y) == ds.label_names.end())
      ds.label_names.push_back(y);
  }
  ds.num_classes = static_cast<int>(ds.label_names.size());

  int dim = 0;
  for (int c = 0; c < n_cols; ++c) {
    if (c == label_col) continue;
    dim += numeric[c] ? 1 : static_cast<int>(vocab[c].size());
  }
  ds.feature_dim = dim;
  ds.features.assign(static_cast<std::size_t>(n) * dim, 0.0);
  ds.labels.resize(n);

  for (int r = 0; r < n; ++r) {
    double* dst = ds.features.data() + static_cast<std::size_t>(r) * dim;
    int f = 0;
    for (int c = 0; c < n_cols; ++c) {
      if (c == label_col) continue;
      if (numeric[c]) {
        double v;
        if (!parse_double(rows[r][c], v))
          throw std::runtime_error(path + ": non-numeric value '" + rows[r][c] +
                                   "' in numeric column '" + header[c] + "'");
        dst[f++] = v;
      } else {
        const auto it = std::find(vocab[c].begin(), vocab[c].end(), rows[r][c]);
        dst[f + (it - vocab[c].begin())] = 1.0;
        f += static_cast<int>(vocab[c].size());
      }
    }
    const auto it = std::find(ds.label_names.begin(), ds.label_names.end(), rows[r][label_col]);
    ds.labels[r] = static_cast<int>(it - ds.label_names.begin());
  }

  // z-score the numeric columns; constant columns map to all zeros.
  int f = 0;
  for (int c = 0; c < n_cols; ++c) {
    if (c == label_col) continue;
    if (!numeric[c]) {
      f += static_cast<int>(vocab[c].size());
      continue;
    }
    double mean = 0.0;
    for (int r = 0; r < n; ++r) mean += ds.features[static_cast<std::size_t>(r) * dim + f];
    mean /= n;
    double var = 0.0;
    for (int r = 0; r < n; ++r) {
      const double d = ds.features[static_cast<std::size_t>(r) * dim + f] - mean;
      var += d * d;
    }
    const double std_dev = std::sqrt(var / n);
    const double scale = std_dev > 0.0 ? 1.0 / std_dev : 1.0;
    for (int r = 0; r < n; ++r) {
      double& x = ds.features[static_cast<std::size_t>(r) * dim + f];
      x = (x - mean) * scale;
    }
    ++f;
  }

  validate(ds);
  return ds;
}

Dataset synth_tabular(int num_classes, int num_samples, int feature_dim, std::uint64_t seed) {
  if (num_classes < 2) throw std::invalid_argument("synth_tabular: need at least 2 classes");
  if (num_samples < num_classes * 10)
    throw std::invalid_argument("synth_tabular: need at least 10 samples per class");
  if (feature_dim < num_classes)
    throw std::invalid_argument("synth_tabular: feature_dim must be >= num_classes");

  // Class means at scale * e_c: a regular simplex with pairwise separation
  // scale * sqrt(2), comfortably linearly separable under unit covariance.
  const double scale = 4.0;
  Dataset ds;
  ds.name = "synth";
  ds.num_classes = num_classes;
  ds.feature_dim = feature_dim;
  ds.features.resize(static_cast<std::size_t>(num_samples) * feature_dim);
  ds.labels.resize(num_samples);

  RngStream rng(derive_seed(seed, "synth"));
  for (int i = 0; i < num_samples; ++i) {
    const int y = i % num_classes;  // balanced to within one sample
    ds.labels[i] = y;
    double* x = ds.features.data() + static_cast<std::size_t>(i) * feature_dim;
    for (int j = 0; j < feature_dim; ++j) x[j] = rng.normal();
    x[y] += scale;
  }
  validate(ds);
  return ds;
}

GlobalSplit global_split(const Dataset& dataset, double test_fraction, std::uint64_t seed) {
  if (test_fraction <= 0.0 || test_fraction >= 1.0)
    throw std::invalid_argument("global_split: test_fraction must lie in (0, 1)");

  const std::vector<int> counts = dataset.class_counts();
  const bool stratified =
      *std::min_element(counts.begin(), counts.end()) >= 2;

  RngStream rng(derive_seed(seed, "split"));
  std::vector<int> test_marks(dataset.size(), 0);
  if (stratified) {
    std::vector<std::vector<int>> by_class(dataset.num_classes);
    for (int i = 0; i < dataset.size(); ++i) by_class[dataset.labels[i]].push_back(i);
    for (auto& idx : by_class) {
      rng.shuffle(idx);
      const int take = static_cast<int>(std::llround(test_fraction * idx.size()));
      for (int j = 0; j < take; ++j) test_marks[idx[j]] = 1;
    }
  } else {
    std::vector<int> idx(dataset.size());
    for (int i = 0; i < dataset.size(); ++i) idx[i] = i;
    rng.shuffle(idx);
    const int take = static_cast<int>(std::llround(test_fraction * idx.size()));
    for (int j = 0; j < take; ++j) test_marks[idx[j]] = 1;
  }

  GlobalSplit out;
  out.stratified = stratified;
  for (Dataset* part : {&out.train, &out.test}) {
    part->name = dataset.name;
    part->num_classes = dataset.num_classes;
    part->feature_dim = dataset.feature_dim;
    part->label_names = dataset.label_names;
  }
  for (int i = 0; i < dataset.size(); ++i) {
    Dataset& part = test_marks[i] ? out.test : out.train;
    const auto row = dataset.row(i);
    part.features.insert(part.features.end(), row.begin(), row.end());
    part.labels.push_back(dataset.labels[i]);
  }
  out.train.name += "/train";
  out.test.name += "/test";
  return out;
}

Batch gather_batch(const Dataset& dataset, std::span<const int> indices) {
  Batch batch;
  batch.batch_size = static_cast<int>(indices.size());
  batch.feature_dim = dataset.feature_dim;
  batch.features.resize(indices.size() * static_cast<std::size_t>(dataset.feature_dim));
  batch.labels.resize(indices.size());
  for (std::size_t i = 0; i < indices.size(); ++i) {
    const auto row = dataset.row(indices[i]);
    std::copy(row.begin(), row.end(),
              batch.features.begin() + i * static_cast<std::size_t>(dataset.feature_dim));
    batch.labels[i] = dataset.labels[indices[i]];
  }
  return batch;
}

}  // namespace fedsim
