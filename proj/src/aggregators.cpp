#include "fedsim/aggregators.hpp"

#include <algorithm>
#include <stdexcept>

namespace fedsim {

std::string to_string(AggregatorKind kind) {
  switch (kind) {
    case AggregatorKind::FedAvg: return "fedavg";
    case AggregatorKind::FedProx: return "fedprox";
    case AggregatorKind::FedPer: return "fedper";
    case AggregatorKind::Scaffold: return "scaffold";
  }
  return "?";
}

AggregatorKind aggregator_from_string(const std::string& name) {
  if (name == "fedavg") return AggregatorKind::FedAvg;
  if (name == "fedprox") return AggregatorKind::FedProx;
  if (name == "fedper") return AggregatorKind::FedPer;
  if (name == "scaffold") return AggregatorKind::Scaffold;
  throw std::invalid_argument("unknown aggregator '" + name + "'");
}

AggregatorState init_aggregator(AggregatorKind kind, const Model& model, int devices,
                                std::uint64_t seed, const LocalConfig& cfg) {
  if (devices < 1) throw std::invalid_argument("init_aggregator: need at least one device");

  AggregatorState state{kind, model, devices, model.init_params(seed), {}, {}, {}};

  if (kind == AggregatorKind::Scaffold) {
    ParamVector zeros(std::vector<double>(state.global_params.size(), 0.0),
                      state.global_params.layout());
    state.server_control = zeros;
    for (int d = 0; d < devices; ++d) state.client_controls.emplace(d, zeros);
  }
  if (kind == AggregatorKind::FedPer) {
    std::set<std::string> tags = cfg.personal_tags.empty()
                                     ? std::set<std::string>{"head"}
                                     : cfg.personal_tags;
    for (const std::string& tag : tags)
      state.global_params.segment(tag);  // throws on unknown tag
    for (int d = 0; d < devices; ++d) {
      auto& heads = state.client_heads[d];
      for (const std::string& tag : tags) {
        const auto seg = state.global_params.segment(tag);
        heads[tag].assign(seg.begin(), seg.end());
      }
    }
  }
  return state;
}

namespace {

std::set<std::string> effective_personal_tags(const LocalConfig& cfg) {
  return cfg.personal_tags.empty() ? std::set<std::string>{"head"} : cfg.personal_tags;
}

}  // namespace

ClientUpdate local_train(const AggregatorState& state, int device_id, const ClientShard& shard,
                         const Dataset& dataset, const LocalConfig& cfg, RngStream& rng) {
  if (shard.train_idx.empty()) throw std::invalid_argument("local_train: empty train shard");
  if (cfg.epochs < 1 || cfg.batch_size < 1 || cfg.lr <= 0.0)
    throw std::invalid_argument("local_train: invalid local config");

  ParamVector w = state.global_params;
  if (state.kind == AggregatorKind::FedPer) {
    const auto it = state.client_heads.find(device_id);
    if (it != state.client_heads.end())
      for (const auto& [tag, values] : it->second) w.replace_segment(tag, values);
  }

  // SCAFFOLD's per-step correction c - c_i is constant over local training.
  std::optional<ParamVector> correction;
  if (state.kind == AggregatorKind::Scaffold) {
    const ParamVector& c = *state.server_control;
    const ParamVector& ci = state.client_controls.at(device_id);
    std::vector<double> diff(c.size());
    for (std::size_t i = 0; i < diff.size(); ++i) diff[i] = c[i] - ci[i];
    correction = ParamVector(std::move(diff), c.layout());
  }

  std::vector<int> order = shard.train_idx;
  int steps = 0;
  double loss_sum = 0.0;
  for (int epoch = 0; epoch < cfg.epochs; ++epoch) {
    rng.shuffle(order);
    for (std::size_t start = 0; start < order.size(); start += cfg.batch_size) {
      const std::size_t stop = std::min(order.size(), start + cfg.batch_size);
      const Batch batch = gather_batch(
          dataset, std::span<const int>(order.data() + start, stop - start));
      const ForwardResult fr = state.model.loss_and_grad(w, batch, Mode::Train, &rng);
      loss_sum += fr.loss;
      ++steps;
      switch (state.kind) {
        case AggregatorKind::FedAvg:
        case AggregatorKind::FedPer:
          w = sgd_step(w, fr.grad, cfg.lr);
          break;
        case AggregatorKind::FedProx: {
          std::vector<double> prox(w.size());
          for (std::size_t i = 0; i < prox.size(); ++i)
            prox[i] = cfg.mu * (w[i] - state.global_params[i]);
          const ParamVector extra(std::move(prox), w.layout());
          w = sgd_step(w, fr.grad, cfg.lr, &extra);
          break;
        }
        case AggregatorKind::Scaffold:
          w = sgd_step(w, fr.grad, cfg.lr, &*correction);
          break;
      }
    }
  }

  ClientUpdate update;
  update.device_id = device_id;
  update.n_train = static_cast<int>(shard.train_idx.size());
  update.local_steps = steps;
  update.mean_loss = loss_sum / steps;

  if (state.kind == AggregatorKind::Scaffold) {
    // c_i+ = c_i - c + (w_global - w_local) / (steps * lr); report the delta.
    const ParamVector& c = *state.server_control;
    const double inv = 1.0 / (static_cast<double>(steps) * cfg.lr);
    std::vector<double> delta(w.size());
    for (std::size_t i = 0; i < delta.size(); ++i)
      delta[i] = -c[i] + (state.global_params[i] - w[i]) * inv;
    update.control_delta = ParamVector(std::move(delta), w.layout());
  }

  update.params_after = std::move(w);
  return update;
}

void aggregate(AggregatorState& state, const std::vector<ClientUpdate>& updates,
               const LocalConfig& cfg) {
  if (updates.empty()) throw std::invalid_argument("aggregate: empty update list");
  for (const ClientUpdate& u : updates) {
    if (!u.params_after.same_layout(state.global_params))
      throw std::invalid_argument("aggregate: mixed parameter layouts");
    if (u.n_train < 1) throw std::invalid_argument("aggregate: update with no samples");
  }

  // Device-id order makes aggregation exactly permutation invariant.
  std::vector<const ClientUpdate*> ordered;
  ordered.reserve(updates.size());
  for (const ClientUpdate& u : updates) ordered.push_back(&u);
  std::sort(ordered.begin(), ordered.end(),
            [](const ClientUpdate* a, const ClientUpdate* b) { return a->device_id < b->device_id; });

  const std::size_t n_params = state.global_params.size();

  switch (state.kind) {
    case AggregatorKind::FedAvg:
    case AggregatorKind::FedProx:
    case AggregatorKind::FedPer: {
      double total = 0.0;
      for (const ClientUpdate* u : ordered) total += u->n_train;
      std::vector<double> avg(n_params, 0.0);
      for (const ClientUpdate* u : ordered) {
        const double weight = u->n_train / total;
        const auto& p = u->params_after.values();
        for (std::size_t i = 0; i < n_params; ++i) avg[i] += weight * p[i];
      }
      ParamVector next(std::move(avg), state.global_params.layout());
      if (state.kind == AggregatorKind::FedPer) {
        // Personal segments never leave the client: the global copies stay
        // as they were, and each client's trained head is stored back.
        const std::set<std::string> tags = effective_personal_tags(cfg);
        for (const std::string& tag : tags)
          next.replace_segment(tag, state.global_params.segment(tag));
        for (const ClientUpdate* u : ordered) {
          auto& heads = state.client_heads[u->device_id];
          for (const std::string& tag : tags) {
            const auto seg = u->params_after.segment(tag);
            heads[tag].assign(seg.begin(), seg.end());
          }
        }
      }
      state.global_params = std::move(next);
      break;
    }
    case AggregatorKind::Scaffold: {
      const double inv_s = 1.0 / static_cast<double>(ordered.size());
      std::vector<double> mean_dw(n_params, 0.0);
      std::vector<double> mean_dc(n_params, 0.0);
      for (const ClientUpdate* u : ordered) {
        if (!u->control_delta)
          throw std::invalid_argument("aggregate: SCAFFOLD update without control delta");
        const auto& p = u->params_after.values();
        const auto& dc = u->control_delta->values();
        for (std::size_t i = 0; i < n_params; ++i) {
          mean_dw[i] += (p[i] - state.global_params[i]) * inv_s;
          mean_dc[i] += dc[i] * inv_s;
        }
      }
      for (std::size_t i = 0; i < n_params; ++i)
        state.global_params[i] += cfg.global_lr * mean_dw[i];
      const double participation =
          static_cast<double>(ordered.size()) / static_cast<double>(state.total_devices);
      ParamVector& c = *state.server_control;
      for (std::size_t i = 0; i < n_params; ++i) c[i] += participation * mean_dc[i];
      for (const ClientUpdate* u : ordered) {
        ParamVector& ci = state.client_controls.at(u->device_id);
        const auto& dc = u->control_delta->values();
        for (std::size_t i = 0; i < n_params; ++i) ci[i] += dc[i];
      }
      break;
    }
  }
}

}  // namespace fedsim
