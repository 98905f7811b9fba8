// The four aggregation protocols over flat parameter vectors.
//
//   FedAvg    sample-count-weighted average of client parameters.
//   FedProx   FedAvg plus a per-step proximal gradient mu * (w - w_global).
//   FedPer    FedAvg over base segments; per-client personal segments are
//             restored before local training and never aggregated.
//   SCAFFOLD  server/client control variates correct client drift; the
//             server applies a global learning rate to the mean update.

#pragma once

#include <cstdint>
#include <map>
#include <optional>
#include <set>
#include <string>
#include <vector>

#include "fedsim/dataset.hpp"
#include "fedsim/nn.hpp"
#include "fedsim/partition.hpp"
#include "fedsim/rng.hpp"

namespace fedsim {

enum class AggregatorKind { FedAvg, FedProx, FedPer, Scaffold };

std::string to_string(AggregatorKind kind);
AggregatorKind aggregator_from_string(const std::string& name);

struct LocalConfig {
  int epochs = 1;
  int batch_size = 32;
  double lr = 0.01;
  double mu = 0.0;                       // FedProx proximal coefficient
  std::set<std::string> personal_tags;   // FedPer; defaults to {"head"} at init
  double global_lr = 1.0;                // SCAFFOLD server step size
};

struct ClientUpdate {
  int device_id = 0;
  ParamVector params_after;
  int n_train = 0;
  std::optional<ParamVector> control_delta;  // SCAFFOLD only
  int local_steps = 0;
  double mean_loss = 0.0;
};

struct AggregatorState {
  AggregatorKind kind = AggregatorKind::FedAvg;
  Model model;
  int total_devices = 0;
  ParamVector global_params;
  std::optional<ParamVector> server_control;                          // SCAFFOLD c
  std::map<int, ParamVector> client_controls;                        // SCAFFOLD c_i
  std::map<int, std::map<std::string, std::vector<double>>> client_heads;  // FedPer
};

AggregatorState init_aggregator(AggregatorKind kind, const Model& model, int devices,
                                std::uint64_t seed, const LocalConfig& cfg);

// Runs `epochs` passes of shuffled mini-batch SGD from the current global
// model (with the device's stored personal segments restored first under
// FedPer). Pure: persistent client state is only written back by aggregate().
ClientUpdate local_train(const AggregatorState& state, int device_id, const ClientShard& shard,
                         const Dataset& dataset, const LocalConfig& cfg, RngStream& rng);

// Merges updates into the state at the round barrier. Deterministic: updates
// are processed in device-id order regardless of arrival order.
void aggregate(AggregatorState& state, const std::vector<ClientUpdate>& updates,
               const LocalConfig& cfg);

}  // namespace fedsim
