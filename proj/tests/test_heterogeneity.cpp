#include <cmath>

#include "doctest.h"
#include "emd_oracle.hpp"
#include "fedsim/heterogeneity.hpp"
#include "test_support.hpp"

using namespace fedsim;
using namespace fedsim::testing;

namespace {

ClientShard shard_with_labels(const std::vector<int>& train_labels, Dataset& ds) {
  // appends the labels to ds and returns a shard pointing at them
  ClientShard shard;
  shard.device_id = 0;
  for (int y : train_labels) {
    shard.train_idx.push_back(ds.size());
    ds.labels.push_back(y);
    ds.features.push_back(0.0);
  }
  return shard;
}

LabelDistribution one_hot(int k, int at) {
  LabelDistribution d(k, 0.0);
  d[at] = 1.0;
  return d;
}

}  // namespace

TEST_CASE("label histogram normalizes counts") {
  Dataset ds;
  ds.name = "t";
  ds.num_classes = 10;
  ds.feature_dim = 1;

  SUBCASE("two balanced labels") {
    ds.num_classes = 2;
    const ClientShard s = shard_with_labels({0, 0, 1, 1}, ds);
    const LabelDistribution h = label_histogram(s, ds, 2);
    CHECK(h[0] == 0.5);
    CHECK(h[1] == 0.5);
  }
  SUBCASE("single label is one-hot") {
    const ClientShard s = shard_with_labels({4, 4, 4}, ds);
    const LabelDistribution h = label_histogram(s, ds, 10);
    CHECK(h[4] == 1.0);
    for (int c = 0; c < 10; ++c)
      if (c != 4) CHECK(h[c] == 0.0);
  }
  SUBCASE("three-to-one split") {
    const ClientShard s = shard_with_labels({0, 0, 0, 9}, ds);
    const LabelDistribution h = label_histogram(s, ds, 10);
    CHECK(h[0] == 0.75);
    CHECK(h[9] == 0.25);
  }
  SUBCASE("empty shard throws") {
    ClientShard empty;
    CHECK_THROWS(label_histogram(empty, ds, 10));
  }
}

TEST_CASE("pairwise emd basics") {
  const LabelDistribution p{0.25, 0.5, 0.25};
  CHECK(pairwise_emd(p, p) == 0.0);
  CHECK(pairwise_emd(one_hot(10, 0), one_hot(10, 9)) == doctest::Approx(9.0).epsilon(1e-12));
  CHECK_THROWS(pairwise_emd(p, one_hot(4, 0)));
}

TEST_CASE("mean distance between 7-class one-hot pairs is 16/7") {
  double sum = 0.0;
  for (int i = 0; i < 7; ++i)
    for (int j = 0; j < 7; ++j) sum += pairwise_emd(one_hot(7, i), one_hot(7, j));
  CHECK(sum / 49.0 == doctest::Approx(16.0 / 7.0).epsilon(1e-12));
}

TEST_CASE("emd satisfies the metric axioms on the quarter grid") {
  const auto grid = distribution_grid(3);
  for (const auto& p : grid)
    for (const auto& q : grid) {
      const double d = pairwise_emd(p, q);
      CHECK(d >= 0.0);
      CHECK(d == doctest::Approx(pairwise_emd(q, p)).epsilon(1e-12));
      if (p == q) CHECK(d == 0.0);
      if (d == 0.0) CHECK(p == q);
    }
  // triangle inequality over all triples
  for (const auto& p : grid)
    for (const auto& q : grid)
      for (const auto& r : grid)
        CHECK(pairwise_emd(p, r) <= pairwise_emd(p, q) + pairwise_emd(q, r) + 1e-12);
}

TEST_CASE("emd equals the brute-force transport optimum (K=3 grid)") {
  const auto grid = distribution_grid(3);
  for (const auto& p : grid)
    for (const auto& q : grid)
      CHECK(pairwise_emd(p, q) == doctest::Approx(emd_bruteforce(p, q)).epsilon(1e-9));
}

TEST_CASE("system emd of identical shards is zero") {
  Dataset ds;
  ds.name = "t";
  ds.num_classes = 3;
  ds.feature_dim = 1;
  std::vector<ClientShard> shards;
  for (int d = 0; d < 4; ++d) shards.push_back(shard_with_labels({0, 1, 2}, ds));
  CHECK(system_emd(shards, ds, 3) == 0.0);
  shards.resize(1);
  CHECK_THROWS(system_emd(shards, ds, 3));
}

TEST_CASE("single-label partitions land near the expected mean distance") {
  // k=1, D=30, K=10: expectation over uniform pairs is 3.3 (reference 3.2)
  const Dataset ds = dataset_with_label_counts(mnist_train_label_counts());
  double mean = 0.0;
  const int seeds = 10;
  for (int s = 0; s < seeds; ++s) {
    const PartitionManifest m = build_partition(ds, 1, 30, 400, 0.7, 1000 + s);
    mean += system_emd(m.shards, ds, 10);
  }
  mean /= seeds;
  CHECK(mean > 2.9);
  CHECK(mean < 3.6);
}

TEST_CASE("full-label partitions score near zero") {
  const Dataset ds = dataset_with_label_counts(mnist_train_label_counts());
  double mean = 0.0;
  const int seeds = 5;
  for (int s = 0; s < seeds; ++s) {
    const PartitionManifest m = build_partition(ds, 10, 30, 400, 0.7, 2000 + s);
    mean += system_emd(m.shards, ds, 10);
  }
  CHECK(mean / seeds <= 0.4);
}

TEST_CASE("iid classification thresholds") {
  CHECK(classify_iid(2.8, 10) == IidLevel::Low);
  CHECK(classify_iid(1.6, 10) == IidLevel::Moderate);
  CHECK(classify_iid(0.2, 10) == IidLevel::High);
  CHECK(classify_iid(1.2, 10) == IidLevel::Moderate);  // boundaries inclusive
  CHECK(classify_iid(2.2, 10) == IidLevel::Moderate);
  CHECK(classify_iid(2.0, 7) == IidLevel::Low);
  CHECK(classify_iid(1.0, 7) == IidLevel::Moderate);
  CHECK(classify_iid(1.7, 7) == IidLevel::Moderate);
  CHECK(classify_iid(0.9, 7) == IidLevel::High);
  CHECK_THROWS(classify_iid(1.0, 5));
  CHECK(to_string(IidLevel::Low) == "low");
}

TEST_CASE("sweep covers the grid and is monotone in k") {
  // balanced counts and s at the natural train size, so the k = K, var = 0
  // cell has no trim/top-up noise and devices hold near-identical marginals
  const Dataset ds = dataset_with_label_counts(std::vector<int>(10, 12000));
  const std::vector<int> ks{1, 2, 5, 10};
  const std::vector<double> vars{0.0, 0.7};
  const SweepResult sweep = emd_sweep(ds, ks, vars, 30, 3200, 2, 3);

  CHECK(sweep.cells.size() == ks.size() * vars.size());
  CHECK(sweep.trials.size() == ks.size() * vars.size() * 2);

  // k = K, var = 0 cell: identical-marginal shards, essentially zero
  for (const SweepCell& cell : sweep.cells)
    if (cell.k == 10 && cell.var == 0.0) CHECK(cell.mean_emd < 0.05);

  // fixing var, mean EMD never increases as k grows
  for (double var : vars) {
    double prev = 1e9;
    for (int k : ks)
      for (const SweepCell& cell : sweep.cells)
        if (cell.k == k && cell.var == var) {
          CHECK(cell.mean_emd <= prev + 1e-9);
          prev = cell.mean_emd;
        }
  }
}

TEST_CASE("sweep csv files") {
  TempDir tmp("sweep");
  const Dataset ds = dataset_with_label_counts({200, 200, 200, 200, 200, 200, 200, 200, 200, 200});
  const SweepResult sweep = emd_sweep(ds, {1, 10}, {0.0}, 10, 50, 2, 1);
  write_sweep_csv(sweep, tmp.str("trials.csv"), tmp.str("mean.csv"), "stamp");

  const std::string trials = slurp(tmp.str("trials.csv"));
  CHECK(trials.find("# stamp\n") == 0);
  CHECK(trials.find("k,var,trial,emd\n") != std::string::npos);
  int lines = 0;
  for (char c : trials) lines += c == '\n';
  CHECK(lines == 2 + 4);  // comment + header + 2 cells * 2 trials

  const std::string mean = slurp(tmp.str("mean.csv"));
  CHECK(mean.find("k,var,mean_emd\n") != std::string::npos);
}
