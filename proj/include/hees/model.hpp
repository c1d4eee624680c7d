#pragma once

#include <algorithm>
#include <cmath>
#include <limits>
#include <stdexcept>
#include <vector>

#include "hees/rate.hpp"
#include "hees/types.hpp"

namespace hees {

namespace detail {
inline void check_lengths(const Schedule& s, const EpochTimeline& tl) {
  if (s.size() != tl.epochs())
    throw std::invalid_argument("schedule and timeline epoch counts differ");
}
}  // namespace detail

/// Total spectral efficiency over the horizon, bits/Hz: sum of the per-epoch
/// mean rates weighted by epoch length.
inline double spectral_efficiency(const Schedule& s, const EpochTimeline& tl,
                                  const SystemParams& p) {
  detail::check_lengths(s, tl);
  double total = 0.0;
  for (std::size_t i = 0; i < s.size(); ++i)
    total += mean_rate(s[i].antennas, s[i].power.tx_total(), p.total_antennas) * tl.lengths[i];
  return total;
}

/// w-weighted total energy consumption over the horizon, J.
inline double weighted_energy(const Schedule& s, const EpochTimeline& tl,
                              const SystemParams& p) {
  detail::check_lengths(s, tl);
  double total = 0.0;
  for (std::size_t i = 0; i < s.size(); ++i) total += weighted_power(p, s[i]) * tl.lengths[i];
  return total;
}

/// Weighted energy efficiency U_EE, bits/Hz/J.
inline double weighted_ee(const Schedule& s, const EpochTimeline& tl, const SystemParams& p) {
  const double energy = weighted_energy(s, tl, p);
  if (!(energy > 0.0)) throw std::domain_error("weighted energy is zero");
  return spectral_efficiency(s, tl, p) / energy;
}

struct FeasibilityOptions {
  bool enforce_overflow = true;   // when false, arrivals clip at capacity instead
  double tol_energy_rel = 1e-9;   // relative, against the energy scale of the instance
  double tol_power_rel = 1e-9;
  double tol_rate_abs = 1e-9;
};

/// Battery energy available through the end of epoch e (cumulative credits
/// minus nothing): strict variant ignores capacity clipping, the clipped
/// variant replays the physical ledger for the given drains.
namespace detail {
inline std::vector<double> cumulative_available_strict(const EpochTimeline& tl,
                                                       const SystemParams& p) {
  std::vector<double> avail(tl.epochs());
  double acc = std::min(tl.initial_energy, p.battery_capacity);
  for (std::size_t i = 0; i < tl.epochs(); ++i) {
    acc += tl.harvested[i];
    avail[i] = acc;
  }
  return avail;
}

inline std::vector<double> cumulative_available_clipped(const EpochTimeline& tl,
                                                        const SystemParams& p,
                                                        const std::vector<double>& drain) {
  std::vector<double> avail(tl.epochs());
  double level = std::min(tl.initial_energy, p.battery_capacity);
  double spent = 0.0;
  for (std::size_t i = 0; i < tl.epochs(); ++i) {
    level = std::min(level + tl.harvested[i], p.battery_capacity);
    avail[i] = spent + level;
    level -= drain[i];       // may go negative for infeasible schedules
    spent += drain[i];
  }
  return avail;
}
}  // namespace detail

/// Evaluates C1..C9 for a candidate schedule and reports worst-case margins.
/// Violations are reported, never thrown.
inline FeasibilityReport check_feasibility(const Schedule& s, const EpochTimeline& tl,
                                           const SystemParams& p,
                                           const FeasibilityOptions& opt = {}) {
  detail::check_lengths(s, tl);
  const std::size_t n = s.size();
  FeasibilityReport rep;

  const double energy_scale =
      1.0 + p.battery_capacity + tl.initial_energy + tl.total_harvest();
  const double power_scale = 1.0 + p.p_c + p.p_tx_max + p.p_grid_max;
  const double tol_energy = opt.tol_energy_rel * energy_scale;
  const double tol_power = opt.tol_power_rel * power_scale;

  for (auto& c : rep.checks) c.margin = -std::numeric_limits<double>::infinity();
  auto worst = [](ConstraintCheck& c, double margin, int epoch) {
    if (margin > c.margin) {
      c.margin = margin;
      c.epoch = epoch;
    }
  };

  std::vector<double> drain(n);
  for (std::size_t i = 0; i < n; ++i) drain[i] = renewable_draw(p, s[i]) * tl.lengths[i];

  // C1 causality: cumulative drain may never outrun cumulative availability.
  const std::vector<double> avail =
      opt.enforce_overflow ? detail::cumulative_available_strict(tl, p)
                           : detail::cumulative_available_clipped(tl, p, drain);
  double cum_drain = 0.0;
  for (std::size_t i = 0; i < n; ++i) {
    cum_drain += drain[i];
    worst(rep.checks[0], cum_drain - avail[i], static_cast<int>(i));
  }

  // C2 overflow: battery level right after each credit stays within capacity.
  if (opt.enforce_overflow) {
    double level = std::min(tl.initial_energy, p.battery_capacity);
    for (std::size_t i = 0; i < n; ++i) {
      level += tl.harvested[i];
      worst(rep.checks[1], level - p.battery_capacity, static_cast<int>(i));
      level -= drain[i];
    }
  } else {
    rep.checks[1].checked = false;
    rep.checks[1].margin = 0.0;
  }

  for (std::size_t i = 0; i < n; ++i) {
    const auto& d = s[i];
    const int e = static_cast<int>(i);
    worst(rep.checks[2], std::abs(d.power.circuit_renewable + d.power.circuit_grid - p.p_c), e);
    worst(rep.checks[3], std::abs(d.power.rf_renewable + d.power.rf_grid - p.p_rf), e);
    worst(rep.checks[4], d.power.tx_total() - p.p_tx_max, e);
    worst(rep.checks[5], grid_draw(p, d) - p.p_grid_max, e);
    worst(rep.checks[7], std::max<double>(1 - d.antennas, d.antennas - p.total_antennas), e);
    const double least = std::min({d.power.tx_renewable, d.power.tx_grid,
                                   d.power.circuit_renewable, d.power.circuit_grid,
                                   d.power.rf_renewable, d.power.rf_grid});
    worst(rep.checks[8], -least, e);
  }

  worst(rep.checks[6], p.qos_min - spectral_efficiency(s, tl, p), -1);

  const double tols[9] = {tol_energy, tol_energy, tol_power,        tol_power, tol_power,
                          tol_power,  opt.tol_rate_abs, 0.0, tol_power};
  for (int k = 0; k < 9; ++k)
    rep.checks[k].satisfied = !rep.checks[k].checked || rep.checks[k].margin <= tols[k];
  return rep;
}

}  // namespace hees
