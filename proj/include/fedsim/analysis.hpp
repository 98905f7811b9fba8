// Learning-curve post-processing: outlier removal, trailing moving average,
// best-score extraction, and cross-experiment comparison tables.

#pragma once

#include <map>
#include <string>
#include <vector>

namespace fedsim {

struct OutlierResult {
  std::vector<double> values;
  bool degenerate = false;  // set when every point was flagged (input returned unchanged)
};

// Points farther than sigma_mult population standard deviations from the
// curve mean are backfilled with the previous retained value; a leading
// outlier takes the next retained value.
OutlierResult remove_outliers(const std::vector<double>& curve, double sigma_mult = 3.0);

// Trailing moving average; the first window-1 points average the available
// prefix, so output length equals input length.
std::vector<double> moving_average(const std::vector<double>& curve, int window = 3);

struct BestPoint {
  int round = 0;  // 1-based, earliest maximum
  double value = 0.0;
};

BestPoint best_f1(const std::vector<double>& curve);

// One experiment's worth of data as the analyze command sees it.
struct ResultSummary {
  std::string dataset;
  std::string iid_level;
  std::string aggregator;
  std::map<std::string, std::string> params;  // config echo (flat, stringly)
  std::vector<double> curve;
  std::string config_hash;
};

struct TableRow {
  std::string dataset;
  std::string iid_level;
  std::string param;
  std::string param_value;
  std::string aggregator;
  double best_f1 = 0.0;      // after outlier removal + smoothing
  int best_round = 0;
  bool is_best = false;      // max processed best within (dataset, iid, param value)
  double raw_best_f1 = 0.0;  // no post-processing
  int raw_best_round = 0;
};

// Rows sorted by (dataset, iid, param value, aggregator); the per-group
// maximum processed best is flagged, ties included.
std::vector<TableRow> compare_table(const std::vector<ResultSummary>& results,
                                    const std::string& param, double sigma_mult, int window);

std::string table_to_csv(const std::vector<TableRow>& rows, const std::string& stamp);

}  // namespace fedsim
