// Shared helpers for the unit and acceptance suites.

#pragma once

#include <sys/wait.h>

#include <chrono>
#include <cstdint>
#include <cstdlib>
#include <filesystem>
#include <fstream>
#include <string>
#include <vector>

#include "fedsim/dataset.hpp"
#include "fedsim/rng.hpp"

namespace fedsim::testing {

namespace fs = std::filesystem;

// Path of the fedsim CLI binary: FEDSIM_CLI env var, else resolved relative
// to this test binary (build/tests/... -> build/tools/fedsim).
inline std::string cli_path() {
  if (const char* env = std::getenv("FEDSIM_CLI")) return env;
  std::error_code ec;
  const fs::path self = fs::read_symlink("/proc/self/exe", ec);
  if (!ec) {
    const fs::path candidate = self.parent_path().parent_path() / "tools" / "fedsim";
    if (fs::exists(candidate)) return candidate.string();
  }
  return "fedsim";
}

struct TempDir {
  fs::path path;
  explicit TempDir(const std::string& tag) {
    RngStream rng(static_cast<std::uint64_t>(
        std::chrono::steady_clock::now().time_since_epoch().count()));
    path = fs::temp_directory_path() /
           ("fedsim_" + tag + "_" + std::to_string(rng.next_u64() & 0xffffff));
    fs::create_directories(path);
  }
  ~TempDir() {
    std::error_code ec;
    fs::remove_all(path, ec);
  }
  std::string str(const std::string& leaf = "") const {
    return leaf.empty() ? path.string() : (path / leaf).string();
  }
};

// Features are irrelevant to partitioning and EMD; this builds a dataset
// with an exact per-class label count and placeholder features.
inline Dataset dataset_with_label_counts(const std::vector<int>& counts, int feature_dim = 1) {
  Dataset ds;
  ds.name = "labels-only";
  ds.num_classes = static_cast<int>(counts.size());
  ds.feature_dim = feature_dim;
  for (int c = 0; c < ds.num_classes; ++c)
    for (int i = 0; i < counts[c]; ++i) ds.labels.push_back(c);
  ds.features.assign(static_cast<std::size_t>(ds.labels.size()) * feature_dim, 0.0);
  return ds;
}

// Official MNIST training-set label counts (sum 60000); a sufficient
// statistic for every partition/EMD computation, which never reads pixels.
inline std::vector<int> mnist_train_label_counts() {
  return {5923, 6742, 5958, 6131, 5842, 5421, 5918, 6265, 5851, 5949};
}

inline void write_be_u32(std::ofstream& out, std::uint32_t v) {
  const unsigned char buf[4] = {static_cast<unsigned char>(v >> 24),
                                static_cast<unsigned char>(v >> 16),
                                static_cast<unsigned char>(v >> 8),
                                static_cast<unsigned char>(v)};
  out.write(reinterpret_cast<const char*>(buf), 4);
}

// Writes a valid IDX image/label file pair.
inline void write_idx_pair(const std::string& images_path, const std::string& labels_path,
                           const std::vector<std::vector<unsigned char>>& images,
                           const std::vector<unsigned char>& labels, int rows, int cols,
                           std::uint32_t image_magic = 0x00000803u,
                           std::uint32_t label_magic = 0x00000801u,
                           int label_count_override = -1) {
  std::ofstream img(images_path, std::ios::binary);
  write_be_u32(img, image_magic);
  write_be_u32(img, static_cast<std::uint32_t>(images.size()));
  write_be_u32(img, static_cast<std::uint32_t>(rows));
  write_be_u32(img, static_cast<std::uint32_t>(cols));
  for (const auto& im : images)
    img.write(reinterpret_cast<const char*>(im.data()), static_cast<std::streamsize>(im.size()));

  std::ofstream lab(labels_path, std::ios::binary);
  write_be_u32(lab, label_magic);
  write_be_u32(lab, label_count_override >= 0 ? static_cast<std::uint32_t>(label_count_override)
                                              : static_cast<std::uint32_t>(labels.size()));
  lab.write(reinterpret_cast<const char*>(labels.data()),
            static_cast<std::streamsize>(labels.size()));
}

inline int run_cli(const std::string& args) {
  const std::string cmd = cli_path() + " " + args + " >/dev/null 2>/dev/null";
  const int status = std::system(cmd.c_str());
  return WEXITSTATUS(status);
}

inline std::string slurp(const std::string& path) {
  std::ifstream in(path, std::ios::binary);
  return {std::istreambuf_iterator<char>(in), std::istreambuf_iterator<char>()};
}

}  // namespace fedsim::testing
