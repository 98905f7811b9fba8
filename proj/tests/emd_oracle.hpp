// Test-only transport oracle: exhaustive minimum-cost search over all
// integral transport plans between two distributions whose masses are
// multiples of 1/units. Independent of the CDF-based implementation it
// cross-checks.

#pragma once

#include <cmath>
#include <limits>
#include <vector>

namespace fedsim::testing {

namespace detail {

inline double cheapest_plan(std::vector<int>& supply, std::vector<int>& demand) {
  int src = -1;
  for (std::size_t i = 0; i < supply.size(); ++i)
    if (supply[i] > 0) {
      src = static_cast<int>(i);
      break;
    }
  if (src < 0) return 0.0;

  double best = std::numeric_limits<double>::infinity();
  for (std::size_t j = 0; j < demand.size(); ++j) {
    if (demand[j] <= 0) continue;
    supply[src]--;
    demand[j]--;
    const double cost = std::abs(src - static_cast<int>(j)) + cheapest_plan(supply, demand);
    supply[src]++;
    demand[j]++;
    best = std::min(best, cost);
  }
  return best;
}

}  // namespace detail

inline double emd_bruteforce(const std::vector<double>& p, const std::vector<double>& q,
                             int units = 4) {
  std::vector<int> supply(p.size()), demand(q.size());
  for (std::size_t i = 0; i < p.size(); ++i)
    supply[i] = static_cast<int>(std::lround(p[i] * units));
  for (std::size_t j = 0; j < q.size(); ++j)
    demand[j] = static_cast<int>(std::lround(q[j] * units));
  return detail::cheapest_plan(supply, demand) / static_cast<double>(units);
}

// All distributions over `bins` bins with masses in units of 1/units.
inline std::vector<std::vector<double>> distribution_grid(int bins, int units = 4) {
  std::vector<std::vector<double>> grid;
  std::vector<int> cur(bins, 0);
  const auto recurse = [&](auto&& self, int bin, int left) -> void {
    if (bin == bins - 1) {
      cur[bin] = left;
      std::vector<double> dist(bins);
      for (int i = 0; i < bins; ++i) dist[i] = static_cast<double>(cur[i]) / units;
      grid.push_back(std::move(dist));
      return;
    }
    for (int take = 0; take <= left; ++take) {
      cur[bin] = take;
      self(self, bin + 1, left - take);
    }
  };
  recurse(recurse, 0, units);
  return grid;
}

}  // namespace fedsim::testing
