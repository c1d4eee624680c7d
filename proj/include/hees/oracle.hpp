#pragma once

#include <algorithm>
#include <cmath>
#include <cstdint>
#include <functional>
#include <random>
#include <stdexcept>
#include <vector>

#include "hees/harvest.hpp"
#include "hees/model.hpp"
#include "hees/rate.hpp"
#include "hees/solver.hpp"
#include "hees/types.hpp"

namespace hees {

struct BudgetExceeded : std::runtime_error {
  using std::runtime_error::runtime_error;
};

/// Enumeration grid for the brute-force reference solver.
struct GridSpec {
  int power_levels = 25;                                  // per free power variable
  std::vector<int> antenna_candidates = {1, 10, 25, 50, 75, 100};
  std::uint64_t max_points = 100'000'000;
  int max_epochs = 3;

  /// Default grid that respects the enumeration budget at the given epoch
  /// count (the full 25-level grid blows past it at three epochs).
  static GridSpec fitted(std::size_t epochs) {
    GridSpec g;
    if (epochs >= 3) g.power_levels = 8;
    return g;
  }

  std::uint64_t points(std::size_t epochs) const {
    const std::uint64_t per_epoch = static_cast<std::uint64_t>(antenna_candidates.size()) *
                                    power_levels * power_levels;
    std::uint64_t total = 1;
    for (std::size_t i = 0; i < epochs; ++i) {
      if (total > max_points / std::max<std::uint64_t>(per_epoch, 1) + 1)
        return max_points + 1;
      total *= per_epoch;
    }
    return total;
  }
};

struct OracleResult {
  bool found = false;
  Schedule schedule;
  double ee = 0.0;
  double se = 0.0;
  double energy = 0.0;
  std::uint64_t leaves = 0;  // fully expanded candidate schedules
};

namespace detail {

struct OracleSearch {
  const SystemParams& p;
  const EpochTimeline& tl;
  const GridSpec& grid;
  FeasibilityOptions fopt;
  std::vector<double> tx_renewable_grid;
  std::vector<double> tx_grid_grid;
  OracleResult result;
  Schedule current;

  OracleSearch(const SystemParams& p_, const EpochTimeline& tl_, const GridSpec& g,
               FeasibilityOptions f)
      : p(p_), tl(tl_), grid(g), fopt(f) {
    const int k = std::max(grid.power_levels, 2);
    const double tx_grid_cap = std::min(p.p_tx_max, p.pa_efficiency * p.p_grid_max);
    tx_renewable_grid.resize(k);
    tx_grid_grid.resize(k);
    for (int i = 0; i < k; ++i) {
      tx_renewable_grid[i] = p.p_tx_max * i / (k - 1);
      tx_grid_grid[i] = tx_grid_cap * i / (k - 1);
    }
    current.epochs.resize(tl.epochs());
  }

  // level: battery content just after this epoch's credit; cum_se so far.
  void expand(std::size_t i, double level, double se, double energy) {
    const double t = tl.lengths[i];
    const double eta = p.pa_efficiency;
    const double energy_tol = 1e-9 * (1.0 + p.battery_capacity + tl.total_harvest() +
                                      tl.initial_energy);
    for (int m : grid.antenna_candidates) {
      if (m < 1 || m > p.total_antennas) continue;
      for (double tx_e : tx_renewable_grid) {
        if (tx_e / eta * t > level + energy_tol) break;  // C1 prune, grid is ascending
        // circuit then RF take what the battery still holds
        const double after_tx = std::max(level - tx_e / eta * t, 0.0);
        const double c_e = std::min(p.p_c, after_tx / t);
        const double rf_e = std::max(std::min(p.p_rf, (after_tx / t - c_e) / m), 0.0);
        const double grid_mandatory = (p.p_c - c_e) + m * (p.p_rf - rf_e);
        if (grid_mandatory > p.p_grid_max + 1e-12) continue;
        for (double tx_g : tx_grid_grid) {
          if (tx_e + tx_g > p.p_tx_max + 1e-12) break;
          if (grid_mandatory + tx_g / eta > p.p_grid_max + 1e-12) break;
          EpochDecision d{m, PowerSplit::hybrid(p, tx_e, tx_g, c_e, rf_e)};
          const double drain = renewable_draw(p, d) * t;
          if (drain > level + energy_tol) continue;
          current[i] = d;
          const double se2 = se + mean_rate(m, tx_e + tx_g, p.total_antennas) * t;
          const double energy2 = energy + weighted_power(p, d) * t;
          double next_level = level - drain;
          if (i + 1 == tl.epochs()) {
            ++result.leaves;
            if (se2 + 1e-12 < p.qos_min) continue;
            const double ee = energy2 > 0.0 ? se2 / energy2 : 0.0;
            if (!result.found || ee > result.ee) {
              result.found = true;
              result.ee = ee;
              result.se = se2;
              result.energy = energy2;
              result.schedule = current;
            }
          } else {
            const double credited = next_level + tl.harvested[i + 1];
            if (fopt.enforce_overflow) {
              if (credited > p.battery_capacity + energy_tol) continue;  // C2 prune
              expand(i + 1, credited, se2, energy2);
            } else {
              expand(i + 1, std::min(credited, p.battery_capacity), se2, energy2);
            }
          }
        }
      }
    }
  }
};

}  // namespace detail

/// Exhaustive reference optimum of the EE problem on the grid: per-epoch
/// (M, renewable transmit, grid transmit) combinations, circuit/RF splits by
/// the renewable-first rule, C1-C9 filtering, max weighted EE. Validation
/// only; never part of the solve path.
inline OracleResult brute_force_solve(const SystemParams& p, const EpochTimeline& tl,
                                      const GridSpec& grid,
                                      const FeasibilityOptions& fopt = {}) {
  p.validate();
  tl.validate();
  if (tl.epochs() > static_cast<std::size_t>(grid.max_epochs))
    throw BudgetExceeded("epoch count exceeds the oracle cap");
  if (grid.points(tl.epochs()) > grid.max_points)
    throw BudgetExceeded("enumeration grid exceeds the point budget");

  detail::OracleSearch search(p, tl, grid, fopt);
  const double first_level =
      std::min(std::min(tl.initial_energy, p.battery_capacity) + tl.harvested[0],
               p.battery_capacity);
  if (fopt.enforce_overflow &&
      tl.initial_energy + tl.harvested[0] >
          p.battery_capacity + 1e-9 * (1.0 + p.battery_capacity))
    return search.result;  // first credit already overflows: nothing is feasible
  search.expand(0, first_level, 0.0, 0.0);
  if (search.result.found) {
    const auto rep = check_feasibility(search.result.schedule, tl, p, fopt);
    if (!rep.feasible())
      throw std::logic_error("oracle produced an infeasible argmax");
  }
  return search.result;
}

/// One draw of N unit-mean exponential channel power gains.
struct ChannelDraw {
  std::vector<double> gains;
};

struct MonteCarloRate {
  double mean = 0.0;
  double variance = 0.0;
  double mean_stderr = 0.0;
  std::uint64_t draws = 0;
};

/// Samples the exact selection rate log2(1 + p * sum of the M largest of N
/// unit-mean exponential gains); the reference the closed-form moments are
/// validated against.
inline MonteCarloRate monte_carlo_rate(int m, double p_tx, int n, std::uint64_t draws,
                                       std::uint64_t seed) {
  detail::check_rate_args(m, p_tx, n);
  if (draws < 10'000) throw std::invalid_argument("need at least 1e4 draws");
  std::mt19937_64 gen(seed);
  std::vector<double> g(n);
  double mean = 0.0, m2 = 0.0;
  for (std::uint64_t k = 0; k < draws; ++k) {
    for (int j = 0; j < n; ++j) g[j] = -std::log1p(-detail::canonical_u01(gen));
    std::nth_element(g.begin(), g.begin() + (m - 1), g.end(), std::greater<>());
    double top = 0.0;
    for (int j = 0; j < m; ++j) top += g[j];
    const double rate = std::log2(1.0 + p_tx * top);
    const double delta = rate - mean;
    mean += delta / static_cast<double>(k + 1);
    m2 += delta * (rate - mean);
  }
  MonteCarloRate out;
  out.draws = draws;
  out.mean = mean;
  out.variance = m2 / static_cast<double>(draws - 1);
  out.mean_stderr = std::sqrt(out.variance / static_cast<double>(draws));
  return out;
}

/// Worst (largest) second central difference of M -> mean_rate(M) over the
/// interior antenna counts; strictly negative under the hardened rate model.
/// N = 2 has no interior integer, so it falls back to one half-step central
/// difference of the continuous relaxation.
inline double numeric_concavity_probe(double p_tx, int n) {
  if (!(p_tx > 0.0)) throw std::domain_error("transmit power must be > 0");
  if (n < 2) throw std::domain_error("need at least two antennas");
  auto relaxed = [&](double m) {
    return std::log2(1.0 + (1.0 + std::log(n / m)) * p_tx * m);
  };
  if (n == 2) return relaxed(2.0) - 2.0 * relaxed(1.5) + relaxed(1.0);
  double worst = -std::numeric_limits<double>::infinity();
  for (int m = 2; m <= n - 1; ++m) {
    const double d2 = mean_rate(m + 1, p_tx, n) - 2.0 * mean_rate(m, p_tx, n) +
                      mean_rate(m - 1, p_tx, n);
    worst = std::max(worst, d2);
  }
  return worst;
}

}  // namespace hees
