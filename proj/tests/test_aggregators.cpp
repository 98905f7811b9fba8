#include <algorithm>

#include "doctest.h"
#include "fedsim/aggregators.hpp"
#include "test_support.hpp"

using namespace fedsim;
using namespace fedsim::testing;

namespace {

struct Fixture {
  Dataset ds;
  Model model;
  LabelAllocation alloc;
  std::vector<ClientShard> shards;

  explicit Fixture(int devices = 3, int s = 24)
      : ds(synth_tabular(4, 400, 6, 77)),
        model({LayerSpec::dense(6, 5), LayerSpec::relu(5), LayerSpec::dense(5, 4),
               LayerSpec::softmax_output(4)}) {
    RngStream arng(1), drng(2);
    alloc = allocate_labels(4, 4, devices, arng);
    shards = distribute_samples(ds, alloc, s, drng);
  }
};

ClientUpdate train_device(const AggregatorState& state, const Fixture& fx, int device,
                          const LocalConfig& cfg, std::uint64_t seed) {
  RngStream rng(derive_seed(seed, "train", device, 1));
  return local_train(state, device, fx.shards[device], fx.ds, cfg, rng);
}

}  // namespace

TEST_CASE("init per kind") {
  const Fixture fx;
  LocalConfig cfg;

  SUBCASE("scaffold controls start at zero") {
    const AggregatorState st = init_aggregator(AggregatorKind::Scaffold, fx.model, 3, 5, cfg);
    REQUIRE(st.server_control);
    for (double v : st.server_control->values()) CHECK(v == 0.0);
    REQUIRE(st.client_controls.size() == 3);
    for (const auto& [id, ci] : st.client_controls)
      for (double v : ci.values()) CHECK(v == 0.0);
  }
  SUBCASE("fedper heads start as copies of the global head") {
    const AggregatorState st = init_aggregator(AggregatorKind::FedPer, fx.model, 3, 5, cfg);
    REQUIRE(st.client_heads.size() == 3);
    const auto head = st.global_params.segment("head");
    for (const auto& [id, tags] : st.client_heads) {
      const auto& stored = tags.at("head");
      REQUIRE(stored.size() == head.size());
      for (std::size_t i = 0; i < head.size(); ++i) CHECK(stored[i] == head[i]);
    }
  }
  SUBCASE("same seed, same state") {
    const AggregatorState a = init_aggregator(AggregatorKind::FedAvg, fx.model, 3, 5, cfg);
    const AggregatorState b = init_aggregator(AggregatorKind::FedAvg, fx.model, 3, 5, cfg);
    CHECK(a.global_params.values() == b.global_params.values());
  }
  SUBCASE("unknown personal tag rejected") {
    LocalConfig bad;
    bad.personal_tags = {"nonexistent"};
    CHECK_THROWS(init_aggregator(AggregatorKind::FedPer, fx.model, 3, 5, bad));
  }
}

TEST_CASE("fedprox with mu = 0 follows the fedavg trajectory bit for bit") {
  const Fixture fx;
  LocalConfig cfg;
  cfg.epochs = 2;
  cfg.batch_size = 8;
  cfg.lr = 0.05;
  cfg.mu = 0.0;

  const AggregatorState avg = init_aggregator(AggregatorKind::FedAvg, fx.model, 3, 9, cfg);
  const AggregatorState prox = init_aggregator(AggregatorKind::FedProx, fx.model, 3, 9, cfg);
  const ClientUpdate ua = train_device(avg, fx, 1, cfg, 33);
  const ClientUpdate up = train_device(prox, fx, 1, cfg, 33);
  CHECK(ua.params_after.values() == up.params_after.values());
  CHECK(ua.local_steps == up.local_steps);
  CHECK(ua.mean_loss == up.mean_loss);
}

TEST_CASE("scaffold with zero controls and one full-batch step matches fedavg") {
  const Fixture fx;
  LocalConfig cfg;
  cfg.epochs = 1;
  cfg.batch_size = 1000;  // larger than any shard: one step
  cfg.lr = 0.1;

  const AggregatorState avg = init_aggregator(AggregatorKind::FedAvg, fx.model, 3, 4, cfg);
  const AggregatorState sca = init_aggregator(AggregatorKind::Scaffold, fx.model, 3, 4, cfg);
  const ClientUpdate ua = train_device(avg, fx, 0, cfg, 91);
  const ClientUpdate us = train_device(sca, fx, 0, cfg, 91);

  REQUIRE(us.local_steps == 1);
  for (std::size_t i = 0; i < ua.params_after.size(); ++i)
    CHECK(us.params_after[i] == ua.params_after[i]);

  // c_i+ = (w_global - w_local) / lr when c = c_i = 0 and one step
  REQUIRE(us.control_delta);
  for (std::size_t i = 0; i < us.params_after.size(); ++i) {
    const double expected = (sca.global_params[i] - us.params_after[i]) / cfg.lr;
    CHECK((*us.control_delta)[i] == doctest::Approx(expected).epsilon(1e-12));
  }
}

TEST_CASE("aggregate weights by sample count") {
  const Fixture fx;
  LocalConfig cfg;
  AggregatorState st = init_aggregator(AggregatorKind::FedAvg, fx.model, 3, 2, cfg);

  const auto layout = st.global_params.layout();
  const std::size_t n = st.global_params.size();

  SUBCASE("single client is the identity") {
    ClientUpdate u;
    u.device_id = 0;
    u.n_train = 7;
    u.params_after = ParamVector(std::vector<double>(n, 2.5), layout);
    aggregate(st, {u}, cfg);
    for (double v : st.global_params.values()) CHECK(v == 2.5);
  }
  SUBCASE("1:3 weighting of values 0 and 4 gives 3") {
    ClientUpdate a, b;
    a.device_id = 0;
    a.n_train = 1;
    a.params_after = ParamVector(std::vector<double>(n, 0.0), layout);
    b.device_id = 1;
    b.n_train = 3;
    b.params_after = ParamVector(std::vector<double>(n, 4.0), layout);
    aggregate(st, {a, b}, cfg);
    for (double v : st.global_params.values()) CHECK(v == 3.0);
  }
  SUBCASE("empty update list throws") {
    CHECK_THROWS(aggregate(st, {}, cfg));
  }
}

TEST_CASE("aggregation is permutation invariant and convex") {
  const Fixture fx;
  LocalConfig cfg;
  cfg.epochs = 1;
  cfg.batch_size = 6;
  cfg.lr = 0.05;

  AggregatorState st1 = init_aggregator(AggregatorKind::FedAvg, fx.model, 3, 6, cfg);
  AggregatorState st2 = init_aggregator(AggregatorKind::FedAvg, fx.model, 3, 6, cfg);
  std::vector<ClientUpdate> updates;
  for (int d = 0; d < 3; ++d) updates.push_back(train_device(st1, fx, d, cfg, 13));

  std::vector<ClientUpdate> reversed(updates.rbegin(), updates.rend());
  aggregate(st1, updates, cfg);
  aggregate(st2, reversed, cfg);
  CHECK(st1.global_params.values() == st2.global_params.values());

  for (std::size_t i = 0; i < st1.global_params.size(); ++i) {
    double lo = updates[0].params_after[i], hi = lo;
    for (const auto& u : updates) {
      lo = std::min(lo, u.params_after[i]);
      hi = std::max(hi, u.params_after[i]);
    }
    CHECK(st1.global_params[i] >= lo - 1e-15);
    CHECK(st1.global_params[i] <= hi + 1e-15);
  }
}

TEST_CASE("fedper restores stored heads and never averages them") {
  const Fixture fx;
  LocalConfig cfg;
  cfg.epochs = 1;
  cfg.batch_size = 8;
  cfg.lr = 0.05;
  cfg.personal_tags = {"head"};

  AggregatorState st = init_aggregator(AggregatorKind::FedPer, fx.model, 3, 8, cfg);

  // seed device 2 with a recognizable head, then train devices 0 and 1 only
  std::vector<double> marker(st.global_params.segment("head").size(), 42.0);
  st.client_heads[2]["head"] = marker;
  const std::vector<double> global_head_before(st.global_params.segment("head").begin(),
                                               st.global_params.segment("head").end());

  std::vector<ClientUpdate> updates;
  for (int d : {0, 1}) updates.push_back(train_device(st, fx, d, cfg, 21));
  aggregate(st, updates, cfg);

  // non-participant head untouched, bit for bit
  CHECK(st.client_heads.at(2).at("head") == marker);

  // the global model's head segment is never written by aggregation
  const auto head_now = st.global_params.segment("head");
  for (std::size_t i = 0; i < head_now.size(); ++i)
    CHECK(head_now[i] == global_head_before[i]);

  // participants' stored heads are exactly their trained bits, not a blend
  for (const auto& u : updates) {
    const auto trained = u.params_after.segment("head");
    const auto& stored = st.client_heads.at(u.device_id).at("head");
    REQUIRE(stored.size() == trained.size());
    for (std::size_t i = 0; i < trained.size(); ++i) CHECK(stored[i] == trained[i]);
  }

  // base segments did move (aggregation really happened)
  bool base_changed = false;
  const AggregatorState fresh = init_aggregator(AggregatorKind::FedPer, fx.model, 3, 8, cfg);
  const auto base_before = fresh.global_params.segment("dense0");
  const auto base_after = st.global_params.segment("dense0");
  for (std::size_t i = 0; i < base_after.size(); ++i)
    base_changed |= base_after[i] != base_before[i];
  CHECK(base_changed);

  // next round, local_train starts from the stored head: with a vanishing
  // learning rate the returned head is (almost exactly) the stored one
  LocalConfig frozen = cfg;
  frozen.lr = 1e-300;
  RngStream rng(derive_seed(5, "again", 2, 2));
  st.client_heads[2]["head"] = marker;
  const ClientUpdate u2 = local_train(st, 2, fx.shards[2], fx.ds, frozen, rng);
  const auto head2 = u2.params_after.segment("head");
  for (std::size_t i = 0; i < head2.size(); ++i)
    CHECK(head2[i] == doctest::Approx(marker[i]).epsilon(1e-12));
}

TEST_CASE("scaffold bookkeeping is exact") {
  const Fixture fx;
  LocalConfig cfg;
  cfg.epochs = 1;
  cfg.batch_size = 8;
  cfg.lr = 0.05;
  cfg.global_lr = 1.0;

  AggregatorState st = init_aggregator(AggregatorKind::Scaffold, fx.model, 3, 14, cfg);
  std::vector<ClientUpdate> updates;
  for (int d : {0, 2}) updates.push_back(train_device(st, fx, d, cfg, 55));

  const std::vector<double> c_before = st.server_control->values();
  aggregate(st, updates, cfg);

  // c <- c + (|S|/D) * mean(control_delta), |S| = 2, D = 3
  for (std::size_t i = 0; i < c_before.size(); ++i) {
    const double mean_dc = ((*updates[0].control_delta)[i] + (*updates[1].control_delta)[i]) / 2.0;
    const double expected = c_before[i] + (2.0 / 3.0) * mean_dc;
    CHECK(st.server_control->values()[i] == doctest::Approx(expected).epsilon(1e-15));
  }

  // client controls advanced by their deltas; absent client unchanged
  for (const auto& u : updates)
    for (std::size_t i = 0; i < c_before.size(); ++i)
      CHECK(st.client_controls.at(u.device_id)[i] == (*u.control_delta)[i]);
  for (double v : st.client_controls.at(1).values()) CHECK(v == 0.0);
}

TEST_CASE("aggregator name round trip") {
  for (const auto kind : {AggregatorKind::FedAvg, AggregatorKind::FedProx,
                          AggregatorKind::FedPer, AggregatorKind::Scaffold})
    CHECK(aggregator_from_string(to_string(kind)) == kind);
  CHECK_THROWS(aggregator_from_string("fedsgd"));
}
