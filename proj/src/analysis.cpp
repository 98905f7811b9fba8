#include "fedsim/analysis.hpp"

#include <algorithm>
#include <cmath>
#include <sstream>
#include <stdexcept>
#include <tuple>

namespace fedsim {

OutlierResult remove_outliers(const std::vector<double>& curve, double sigma_mult) {
  if (curve.size() < 3)
    throw std::invalid_argument("remove_outliers: need at least 3 points");

  double mean = 0.0;
  for (double x : curve) mean += x;
  mean /= static_cast<double>(curve.size());
  double var = 0.0;
  for (double x : curve) var += (x - mean) * (x - mean);
  const double std_dev = std::sqrt(var / static_cast<double>(curve.size()));
  const double limit = sigma_mult * std_dev;

  std::vector<char> keep(curve.size());
  bool any_kept = false;
  for (std::size_t i = 0; i < curve.size(); ++i) {
    keep[i] = std::abs(curve[i] - mean) <= limit;
    any_kept |= keep[i] != 0;
  }
  if (!any_kept) return {curve, true};

  OutlierResult out;
  out.values = curve;
  for (std::size_t i = 0; i < curve.size(); ++i) {
    if (keep[i]) continue;
    // previous retained value, or the next one for a leading outlier
    bool filled = false;
    for (std::size_t j = i; j-- > 0;)
      if (keep[j]) {
        out.values[i] = curve[j];
        filled = true;
        break;
      }
    if (!filled)
      for (std::size_t j = i + 1; j < curve.size(); ++j)
        if (keep[j]) {
          out.values[i] = curve[j];
          break;
        }
  }
  return out;
}

std::vector<double> moving_average(const std::vector<double>& curve, int window) {
  if (window < 1) throw std::invalid_argument("moving_average: window must be positive");
  std::vector<double> out(curve.size());
  // fresh sum per point: a running sum would drift by an ulp and break the
  // window-1 identity
  for (std::size_t i = 0; i < curve.size(); ++i) {
    const std::size_t begin = i + 1 >= static_cast<std::size_t>(window) ? i + 1 - window : 0;
    double sum = 0.0;
    for (std::size_t j = begin; j <= i; ++j) sum += curve[j];
    out[i] = sum / static_cast<double>(i - begin + 1);
  }
  return out;
}

BestPoint best_f1(const std::vector<double>& curve) {
  if (curve.empty()) throw std::invalid_argument("best_f1: empty curve");
  BestPoint best{1, curve[0]};
  for (std::size_t i = 1; i < curve.size(); ++i)
    if (curve[i] > best.value) {
      best.value = curve[i];
      best.round = static_cast<int>(i) + 1;
    }
  return best;
}

std::vector<TableRow> compare_table(const std::vector<ResultSummary>& results,
                                    const std::string& param, double sigma_mult, int window) {
  if (results.empty()) throw std::invalid_argument("compare_table: no results");

  std::vector<TableRow> rows;
  rows.reserve(results.size());
  for (const ResultSummary& r : results) {
    TableRow row;
    row.dataset = r.dataset;
    row.iid_level = r.iid_level;
    row.param = param;
    const auto it = r.params.find(param);
    row.param_value = it != r.params.end() ? it->second : "";
    row.aggregator = r.aggregator;

    const BestPoint raw = best_f1(r.curve);
    row.raw_best_f1 = raw.value;
    row.raw_best_round = raw.round;

    std::vector<double> processed = r.curve;
    if (processed.size() >= 3) processed = remove_outliers(processed, sigma_mult).values;
    processed = moving_average(processed, window);
    const BestPoint proc = best_f1(processed);
    row.best_f1 = proc.value;
    row.best_round = proc.round;
    rows.push_back(std::move(row));
  }

  std::sort(rows.begin(), rows.end(), [](const TableRow& a, const TableRow& b) {
    return std::tie(a.dataset, a.iid_level, a.param_value, a.aggregator) <
           std::tie(b.dataset, b.iid_level, b.param_value, b.aggregator);
  });

  for (std::size_t i = 0; i < rows.size();) {
    std::size_t j = i;
    double group_max = rows[i].best_f1;
    while (j < rows.size() && rows[j].dataset == rows[i].dataset &&
           rows[j].iid_level == rows[i].iid_level && rows[j].param_value == rows[i].param_value) {
      group_max = std::max(group_max, rows[j].best_f1);
      ++j;
    }
    for (std::size_t g = i; g < j; ++g) rows[g].is_best = rows[g].best_f1 == group_max;
    i = j;
  }
  return rows;
}

std::string table_to_csv(const std::vector<TableRow>& rows, const std::string& stamp) {
  std::ostringstream out;
  out.precision(17);
  if (!stamp.empty()) out << "# " << stamp << "\n";
  out << "dataset,iid_level,param,param_value,aggregator,best_f1,best_round,is_best,"
         "raw_best_f1,raw_best_round\n";
  for (const TableRow& r : rows)
    out << r.dataset << "," << r.iid_level << "," << r.param << "," << r.param_value << ","
        << r.aggregator << "," << r.best_f1 << "," << r.best_round << ","
        << (r.is_best ? 1 : 0) << "," << r.raw_best_f1 << "," << r.raw_best_round << "\n";
  return out.str();
}

}  // namespace fedsim
