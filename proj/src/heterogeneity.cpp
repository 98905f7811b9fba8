#include "fedsim/heterogeneity.hpp"

#include <cmath>
#include <fstream>
#include <stdexcept>

namespace fedsim {

std::string to_string(IidLevel level) {
  switch (level) {
    case IidLevel::Low: return "low";
    case IidLevel::Moderate: return "moderate";
    case IidLevel::High: return "high";
  }
  return "?";
}

LabelDistribution label_histogram(const ClientShard& shard, const Dataset& dataset,
                                  int num_classes) {
  if (shard.train_idx.empty())
    throw std::invalid_argument("label_histogram: empty train shard");
  LabelDistribution probs(num_classes, 0.0);
  for (int i : shard.train_idx) probs[dataset.labels[i]] += 1.0;
  for (double& p : probs) p /= static_cast<double>(shard.train_idx.size());
  return probs;
}

double pairwise_emd(const LabelDistribution& p, const LabelDistribution& q) {
  if (p.size() != q.size())
    throw std::invalid_argument("pairwise_emd: distribution size mismatch");
  double cdf_gap = 0.0;
  double total = 0.0;
  for (std::size_t i = 0; i + 1 < p.size(); ++i) {
    cdf_gap += p[i] - q[i];
    total += std::abs(cdf_gap);
  }
  return total;
}

double system_emd(const std::vector<ClientShard>& shards, const Dataset& dataset,
                  int num_classes) {
  if (shards.size() < 2) throw std::invalid_argument("system_emd: need at least two shards");
  std::vector<LabelDistribution> hists;
  hists.reserve(shards.size());
  for (const ClientShard& s : shards) hists.push_back(label_histogram(s, dataset, num_classes));
  double sum = 0.0;
  std::size_t pairs = 0;
  for (std::size_t a = 0; a < hists.size(); ++a)
    for (std::size_t b = a + 1; b < hists.size(); ++b) {
      sum += pairwise_emd(hists[a], hists[b]);
      ++pairs;
    }
  return sum / static_cast<double>(pairs);
}

IidLevel classify_iid(double emd, int num_classes) {
  if (num_classes == 10) {
    if (emd > 2.2) return IidLevel::Low;
    if (emd >= 1.2) return IidLevel::Moderate;
    return IidLevel::High;
  }
  if (num_classes == 7) {
    if (emd > 1.7) return IidLevel::Low;
    if (emd >= 1.0) return IidLevel::Moderate;
    return IidLevel::High;
  }
  throw std::invalid_argument("classify_iid: thresholds are calibrated for 7 or 10 classes only");
}

SweepResult emd_sweep(const Dataset& train, const std::vector<int>& ks,
                      const std::vector<double>& vars, int devices, int s, int trials,
                      std::uint64_t seed) {
  if (ks.empty() || vars.empty()) throw std::invalid_argument("emd_sweep: empty grid");
  if (trials < 1) throw std::invalid_argument("emd_sweep: need at least one trial");

  SweepResult result;
  for (std::size_t ki = 0; ki < ks.size(); ++ki) {
    for (std::size_t vi = 0; vi < vars.size(); ++vi) {
      double sum = 0.0;
      for (int t = 0; t < trials; ++t) {
        const std::uint64_t cell_seed =
            derive_seed(seed, "sweep", ki * vars.size() + vi, static_cast<std::uint64_t>(t));
        const PartitionManifest manifest =
            build_partition(train, ks[ki], devices, s, vars[vi], cell_seed);
        const double emd = system_emd(manifest.shards, train, train.num_classes);
        result.trials.push_back({ks[ki], vars[vi], t, emd});
        sum += emd;
      }
      result.cells.push_back({ks[ki], vars[vi], sum / trials});
    }
  }
  return result;
}

void write_sweep_csv(const SweepResult& result, const std::string& trials_path,
                     const std::string& cells_path, const std::string& stamp) {
  std::ofstream trials(trials_path, std::ios::binary);
  if (!trials) throw std::runtime_error(trials_path + ": cannot write");
  if (!stamp.empty()) trials << "# " << stamp << "\n";
  trials << "k,var,trial,emd\n";
  for (const SweepTrial& t : result.trials)
    trials << t.k << "," << t.var << "," << t.trial << "," << t.emd << "\n";

  std::ofstream cells(cells_path, std::ios::binary);
  if (!cells) throw std::runtime_error(cells_path + ": cannot write");
  if (!stamp.empty()) cells << "# " << stamp << "\n";
  cells << "k,var,mean_emd\n";
  for (const SweepCell& c : result.cells)
    cells << c.k << "," << c.var << "," << c.mean_emd << "\n";
}

}  // namespace fedsim
