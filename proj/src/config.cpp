#include "fedsim/config.hpp"

#include <cstdio>
#include <fstream>
#include <functional>
#include <set>
#include <sstream>
#include <stdexcept>

#include "fedsim/version.hpp"
#include "json.hpp"

namespace fedsim {

namespace {

using nlohmann::json;
using nlohmann::ordered_json;

void reject_unknown(const json& obj, const std::string& where,
                    const std::set<std::string>& allowed) {
  for (const auto& [key, value] : obj.items())
    if (!allowed.count(key))
      throw std::invalid_argument("config: unknown field '" + key + "' in " + where);
}

std::string read_file(const std::string& path) {
  std::ifstream in(path, std::ios::binary);
  if (!in) throw std::runtime_error(path + ": cannot open");
  std::ostringstream buf;
  buf << in.rdbuf();
  return buf.str();
}

DatasetSpec parse_dataset(const json& j) {
  reject_unknown(j, "dataset",
                 {"kind", "dir", "path", "label_column", "classes", "samples", "features"});
  DatasetSpec spec;
  spec.kind = j.at("kind").get<std::string>();
  if (spec.kind == "mnist") {
    spec.dir = j.value("dir", "data/mnist");
  } else if (spec.kind == "csv") {
    spec.path = j.at("path").get<std::string>();
    spec.label_column = j.at("label_column").get<std::string>();
  } else if (spec.kind == "synth") {
    spec.classes = j.value("classes", 7);
    spec.samples = j.value("samples", 2100);
    spec.features = j.value("features", 16);
  } else {
    throw std::invalid_argument("config: dataset.kind must be mnist, synth, or csv");
  }
  return spec;
}

std::set<std::string> personal_tags_for(int personal_layers, const std::vector<int>& hidden) {
  const int dense_count = static_cast<int>(hidden.size()) + 1;
  if (personal_layers < 1 || personal_layers > dense_count)
    throw std::invalid_argument("config: personal_layers must lie in [1, dense layer count]");
  std::set<std::string> tags{"head"};
  for (int i = 1; i < personal_layers; ++i)
    tags.insert("dense" + std::to_string(dense_count - 1 - i));
  return tags;
}

}  // namespace

RunSpec parse_run_spec(const std::string& json_text) {
  const json j = json::parse(json_text);
  reject_unknown(j, "run spec",
                 {"dataset", "model", "aggregator", "devices", "active", "rounds",
                  "labels_per_device", "samples_per_device", "quantity_variance", "local",
                  "selection", "evaluation", "test_fraction", "seed"});

  RunSpec spec;
  spec.dataset = parse_dataset(j.at("dataset"));
  ExperimentConfig& cfg = spec.config;
  cfg.dataset_name = spec.dataset.kind;

  if (j.contains("model")) {
    const json& m = j["model"];
    reject_unknown(m, "model", {"hidden", "dropout"});
    cfg.hidden_dims = m.value("hidden", std::vector<int>{128});
    cfg.dropout = m.value("dropout", 0.0);
  }
  cfg.aggregator = aggregator_from_string(j.value("aggregator", std::string("fedavg")));
  cfg.devices = j.value("devices", 30);
  cfg.active_count = j.value("active", 6);
  cfg.rounds = j.value("rounds", 10);
  cfg.labels_per_device = j.value("labels_per_device", 1);
  cfg.samples_per_device = j.value("samples_per_device", 100);
  cfg.quantity_variance = j.value("quantity_variance", 0.0);
  cfg.test_fraction = j.value("test_fraction", 0.2);
  cfg.seed = j.value("seed", std::uint64_t{1});

  int personal_layers = 1;
  if (j.contains("local")) {
    const json& l = j["local"];
    reject_unknown(l, "local",
                   {"epochs", "batch_size", "lr", "mu", "global_lr", "personal_layers"});
    cfg.local.epochs = l.value("epochs", 1);
    cfg.local.batch_size = l.value("batch_size", 32);
    cfg.local.lr = l.value("lr", 0.01);
    cfg.local.mu = l.value("mu", 0.0);
    cfg.local.global_lr = l.value("global_lr", 1.0);
    personal_layers = l.value("personal_layers", 1);
  }
  cfg.local.personal_tags = personal_tags_for(personal_layers, cfg.hidden_dims);

  const std::string selection = j.value("selection", std::string("uniform"));
  if (selection == "uniform") {
    cfg.selection = SelectionMode::Uniform;
  } else if (selection == "loss_biased") {
    cfg.selection = SelectionMode::LossBiased;
  } else {
    throw std::invalid_argument("config: selection must be uniform or loss_biased");
  }

  const std::string evaluation = j.value("evaluation", std::string("union"));
  if (evaluation == "union") {
    cfg.eval = EvalMode::UnionShards;
  } else if (evaluation == "global") {
    cfg.eval = EvalMode::GlobalTest;
  } else {
    throw std::invalid_argument("config: evaluation must be union or global");
  }
  return spec;
}

RunSpec load_run_spec(const std::string& path) { return parse_run_spec(read_file(path)); }

SweepSpec parse_sweep_spec(const std::string& json_text) {
  const json j = json::parse(json_text);
  reject_unknown(j, "sweep spec",
                 {"dataset", "devices", "samples_per_device", "ks", "vars", "trials", "seed"});
  SweepSpec spec;
  spec.dataset = parse_dataset(j.at("dataset"));
  spec.devices = j.value("devices", 30);
  spec.samples_per_device = j.value("samples_per_device", 400);
  spec.ks = j.at("ks").get<std::vector<int>>();
  spec.vars = j.at("vars").get<std::vector<double>>();
  spec.trials = j.value("trials", 1);
  spec.seed = j.value("seed", std::uint64_t{1});
  return spec;
}

SweepSpec load_sweep_spec(const std::string& path) { return parse_sweep_spec(read_file(path)); }

LoadedData load_dataset(const DatasetSpec& spec, double test_fraction, std::uint64_t seed) {
  LoadedData data;
  if (spec.kind == "mnist") {
    data.train = load_mnist_idx(spec.dir + "/train-images-idx3-ubyte",
                                spec.dir + "/train-labels-idx1-ubyte");
    data.test = load_mnist_idx(spec.dir + "/t10k-images-idx3-ubyte",
                               spec.dir + "/t10k-labels-idx1-ubyte");
  } else {
    Dataset full = spec.kind == "synth"
                       ? synth_tabular(spec.classes, spec.samples, spec.features, seed)
                       : load_tabular_csv(spec.path, spec.label_column);
    GlobalSplit split = global_split(full, test_fraction, seed);
    data.train = std::move(split.train);
    data.test = std::move(split.test);
  }
  return data;
}

namespace {

ordered_json dataset_echo(const DatasetSpec& spec) {
  ordered_json d;
  d["kind"] = spec.kind;
  if (spec.kind == "mnist") d["dir"] = spec.dir;
  if (spec.kind == "csv") {
    d["path"] = spec.path;
    d["label_column"] = spec.label_column;
  }
  if (spec.kind == "synth") {
    d["classes"] = spec.classes;
    d["samples"] = spec.samples;
    d["features"] = spec.features;
  }
  return d;
}

ordered_json config_echo(const RunSpec& spec) {
  const ExperimentConfig& cfg = spec.config;
  ordered_json j;
  j["dataset"] = dataset_echo(spec.dataset);
  j["model"] = {{"hidden", cfg.hidden_dims}, {"dropout", cfg.dropout}};
  j["aggregator"] = to_string(cfg.aggregator);
  j["devices"] = cfg.devices;
  j["active"] = cfg.active_count;
  j["rounds"] = cfg.rounds;
  j["labels_per_device"] = cfg.labels_per_device;
  j["samples_per_device"] = cfg.samples_per_device;
  j["quantity_variance"] = cfg.quantity_variance;
  j["local"] = {{"epochs", cfg.local.epochs},
                {"batch_size", cfg.local.batch_size},
                {"lr", cfg.local.lr},
                {"mu", cfg.local.mu},
                {"global_lr", cfg.local.global_lr},
                {"personal_layers",
                 static_cast<int>(cfg.local.personal_tags.empty()
                                      ? 1
                                      : cfg.local.personal_tags.size())}};
  j["selection"] = cfg.selection == SelectionMode::LossBiased ? "loss_biased" : "uniform";
  j["evaluation"] = cfg.eval == EvalMode::GlobalTest ? "global" : "union";
  j["test_fraction"] = cfg.test_fraction;
  j["seed"] = cfg.seed;
  return j;
}

}  // namespace

std::string run_spec_echo(const RunSpec& spec) { return config_echo(spec).dump(2) + "\n"; }

std::string config_hash_hex(const std::string& canonical_text) {
  std::uint64_t h = 0xcbf29ce484222325ULL;
  for (char c : canonical_text) {
    h ^= static_cast<unsigned char>(c);
    h *= 0x100000001b3ULL;
  }
  char buf[17];
  std::snprintf(buf, sizeof buf, "%016llx", static_cast<unsigned long long>(h));
  return buf;
}

std::string round_log_line(const RoundRecord& record) {
  ordered_json j;
  j["round"] = record.round;
  j["f1"] = record.macro_f1;
  j["loss"] = record.mean_train_loss;
  j["selected"] = record.selected;
  return j.dump();
}

std::string round_log_header(const std::string& config_hash) {
  ordered_json j;
  j["version"] = kVersion;
  j["schema_version"] = kSchemaVersion;
  j["config_hash"] = config_hash;
  return j.dump();
}

std::string summary_to_json(const ExperimentResult& result, const RunSpec& spec,
                            const std::string& config_hash) {
  ordered_json j;
  j["version"] = kVersion;
  j["schema_version"] = kSchemaVersion;
  j["config_hash"] = config_hash;
  j["config"] = config_echo(spec);
  j["emd"] = result.emd;
  if (result.iid_level) {
    j["iid_level"] = to_string(*result.iid_level);
  } else {
    j["iid_level"] = nullptr;
  }
  j["best_f1"] = result.best_f1;
  j["best_round"] = result.best_round;
  j["rounds"] = static_cast<int>(result.curve.size());
  j["total_wall_ms"] = result.total_wall_ms;
  return j.dump(2) + "\n";
}

ResultSummary read_experiment_dir(const std::string& dir) {
  const json summary = json::parse(read_file(dir + "/summary.json"));
  if (summary.value("schema_version", -1) != kSchemaVersion)
    throw std::runtime_error(dir + ": unsupported result schema version");

  ResultSummary out;
  out.config_hash = summary.value("config_hash", "");
  const json& iid = summary.at("iid_level");
  out.iid_level = iid.is_null() ? "n/a" : iid.get<std::string>();
  const json& cfg = summary.at("config");
  out.dataset = cfg.at("dataset").at("kind").get<std::string>();
  out.aggregator = cfg.at("aggregator").get<std::string>();

  // flattened config echo for table grouping
  std::function<void(const json&, const std::string&)> flatten =
      [&](const json& node, const std::string& prefix) {
        for (const auto& [key, value] : node.items()) {
          const std::string name = prefix.empty() ? key : prefix + "." + key;
          if (value.is_object()) {
            flatten(value, name);
          } else if (value.is_number_integer()) {
            out.params[name] = std::to_string(value.get<long long>());
          } else if (value.is_number()) {
            std::ostringstream num;
            num << value.get<double>();
            out.params[name] = num.str();
          } else if (value.is_string()) {
            out.params[name] = value.get<std::string>();
          } else {
            out.params[name] = value.dump();
          }
        }
      };
  flatten(cfg, "");
  // convenience aliases so --param epochs works without the nesting prefix
  if (cfg.contains("local"))
    for (const auto& [key, value] : cfg["local"].items())
      out.params[key] = out.params["local." + key];

  std::ifstream rounds(dir + "/rounds.jsonl");
  if (!rounds) throw std::runtime_error(dir + "/rounds.jsonl: cannot open");
  std::string line;
  while (std::getline(rounds, line)) {
    if (line.empty()) continue;
    const json rec = json::parse(line);
    if (!rec.contains("round")) continue;  // metadata header line
    out.curve.push_back(rec.at("f1").get<double>());
  }
  if (out.curve.empty()) throw std::runtime_error(dir + ": empty round log");
  return out;
}

}  // namespace fedsim
