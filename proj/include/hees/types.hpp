#pragma once

#include <algorithm>
#include <array>
#include <cmath>
#include <cstddef>
#include <stdexcept>
#include <string>
#include <utility>
#include <vector>

namespace hees {

/// Scalar model constants of the base station and its energy supplies.
///
/// Power figures are watts, energies joules, rates bits/s/Hz. The grid
/// weight w makes a renewable joule cost w and a grid joule cost 1 in the
/// weighted-energy objective; 0 < w < 1 steers consumption toward the
/// battery.
struct SystemParams {
  int total_antennas = 100;          // N
  double p_tx_max = 39.81071705534972;  // cap on total transmit power, W
  double p_c = 160.8;                // constant circuit power, W
  double p_rf = 0.16;                // per-RF-chain power, W
  double pa_efficiency = 0.35;       // PA efficiency, in (0,1)
  double grid_weight = 0.01;         // w, in (0,1)
  double p_grid_max = 300.0;         // cap on instantaneous grid draw, W
  double battery_capacity = 1500.0;  // J
  double qos_min = 0.0;              // minimum total spectral efficiency, bits/Hz
  double arrival_rate = 1.0;         // energy arrivals per second
  double t_total = 7.0;              // horizon, s

  void validate() const {
    if (total_antennas < 1) throw std::invalid_argument("total_antennas must be >= 1");
    auto nonneg = [](double v, const char* what) {
      if (!(v >= 0.0)) throw std::invalid_argument(std::string(what) + " must be >= 0");
    };
    nonneg(p_tx_max, "p_tx_max");
    nonneg(p_c, "p_c");
    nonneg(p_rf, "p_rf");
    nonneg(p_grid_max, "p_grid_max");
    nonneg(battery_capacity, "battery_capacity");
    nonneg(qos_min, "qos_min");
    if (!(pa_efficiency > 0.0 && pa_efficiency < 1.0))
      throw std::invalid_argument("pa_efficiency must be in (0,1)");
    if (!(grid_weight > 0.0 && grid_weight < 1.0))
      throw std::invalid_argument("grid_weight must be in (0,1)");
    if (!(arrival_rate > 0.0)) throw std::invalid_argument("arrival_rate must be > 0");
    if (!(t_total > 0.0)) throw std::invalid_argument("t_total must be > 0");
  }
};

/// Energy-arrival timeline split into epochs.
///
/// Epoch i (0-based) spans [end_times[i-1], end_times[i]) with an implicit
/// start at t = 0. harvested[i] is credited to the battery at the opening
/// instant of epoch i, so it is spendable throughout that epoch;
/// initial_energy is in the battery at t = 0 before epoch 0's credit.
struct EpochTimeline {
  double initial_energy = 0.0;     // E_0, J
  std::vector<double> end_times;   // s, strictly increasing; back() is the horizon
  std::vector<double> lengths;     // s
  std::vector<double> harvested;   // J, credited at epoch starts

  std::size_t epochs() const { return lengths.size(); }
  double horizon() const { return end_times.empty() ? 0.0 : end_times.back(); }

  double total_harvest() const {
    double s = 0.0;
    for (double e : harvested) s += e;
    return s;
  }

  void validate() const {
    const std::size_t n = lengths.size();
    if (n < 1) throw std::invalid_argument("timeline needs at least one epoch");
    if (end_times.size() != n || harvested.size() != n)
      throw std::invalid_argument("timeline field lengths disagree");
    if (!(initial_energy >= 0.0)) throw std::invalid_argument("initial_energy must be >= 0");
    double prev = 0.0;
    for (std::size_t i = 0; i < n; ++i) {
      if (!(lengths[i] > 0.0)) throw std::invalid_argument("epoch lengths must be > 0");
      if (!(end_times[i] > prev)) throw std::invalid_argument("end_times must be strictly increasing");
      if (std::abs((end_times[i] - prev) - lengths[i]) > 1e-9 * std::max(1.0, end_times[i]))
        throw std::invalid_argument("epoch length disagrees with end_times");
      if (!(harvested[i] >= 0.0)) throw std::invalid_argument("harvested energy must be >= 0");
      prev = end_times[i];
    }
  }

  /// One epoch covering [0, t_total) with a single credit at t = 0.
  static EpochTimeline single_epoch(double t_total, double credit, double e0 = 0.0) {
    EpochTimeline tl;
    tl.initial_energy = e0;
    tl.end_times = {t_total};
    tl.lengths = {t_total};
    tl.harvested = {credit};
    tl.validate();
    return tl;
  }

  /// Builds epochs from explicit (time, amount) arrivals inside [0, t_total).
  /// An arrival at exactly t = 0 is credited to the first epoch; arrivals at
  /// or beyond t_total are dropped.
  static EpochTimeline from_arrivals(double t_total,
                                     std::vector<std::pair<double, double>> arrivals,
                                     double e0 = 0.0) {
    std::sort(arrivals.begin(), arrivals.end());
    EpochTimeline tl;
    tl.initial_energy = e0;
    double at_zero = 0.0;
    std::vector<std::pair<double, double>> interior;
    for (const auto& [t, amount] : arrivals) {
      if (t < 0.0) throw std::invalid_argument("arrival time before 0");
      if (t == 0.0) {
        at_zero += amount;
      } else if (t < t_total) {
        if (!interior.empty() && interior.back().first == t)
          interior.back().second += amount;
        else
          interior.emplace_back(t, amount);
      }
    }
    tl.harvested.push_back(at_zero);
    double prev = 0.0;
    for (const auto& [t, amount] : interior) {
      tl.end_times.push_back(t);
      tl.lengths.push_back(t - prev);
      tl.harvested.push_back(amount);
      prev = t;
    }
    tl.end_times.push_back(t_total);
    tl.lengths.push_back(t_total - prev);
    tl.validate();
    return tl;
  }
};

/// Six-way split of one epoch's power draw between the renewable battery
/// and the grid. Circuit and RF totals are equalities of the model, so the
/// factory derives the grid complements from the renewable side.
struct PowerSplit {
  double tx_renewable = 0.0;
  double tx_grid = 0.0;
  double circuit_renewable = 0.0;
  double circuit_grid = 0.0;
  double rf_renewable = 0.0;   // per chain
  double rf_grid = 0.0;        // per chain

  double tx_total() const { return tx_renewable + tx_grid; }

  friend bool operator==(const PowerSplit&, const PowerSplit&) = default;

  static PowerSplit hybrid(const SystemParams& p, double tx_e, double tx_g,
                           double circuit_e, double rf_e) {
    PowerSplit s;
    s.tx_renewable = tx_e;
    s.tx_grid = tx_g;
    s.circuit_renewable = circuit_e;
    s.circuit_grid = p.p_c - circuit_e;
    s.rf_renewable = rf_e;
    s.rf_grid = p.p_rf - rf_e;
    return s;
  }

  static PowerSplit grid_only(const SystemParams& p, double tx_g) {
    return hybrid(p, 0.0, tx_g, 0.0, 0.0);
  }
};

/// The decision variable: per-epoch antenna count and power split.
struct EpochDecision {
  int antennas = 1;   // M, selected antennas / active RF chains
  PowerSplit power;

  friend bool operator==(const EpochDecision&, const EpochDecision&) = default;
};

struct Schedule {
  std::vector<EpochDecision> epochs;

  std::size_t size() const { return epochs.size(); }
  EpochDecision& operator[](std::size_t i) { return epochs[i]; }
  const EpochDecision& operator[](std::size_t i) const { return epochs[i]; }

  friend bool operator==(const Schedule&, const Schedule&) = default;
};

/// Battery drain rate of one epoch decision, W.
inline double renewable_draw(const SystemParams& p, const EpochDecision& d) {
  return d.power.circuit_renewable + d.power.tx_renewable / p.pa_efficiency +
         d.antennas * d.power.rf_renewable;
}

/// Grid draw rate of one epoch decision, W.
inline double grid_draw(const SystemParams& p, const EpochDecision& d) {
  return d.power.circuit_grid + d.power.tx_grid / p.pa_efficiency +
         d.antennas * d.power.rf_grid;
}

/// w-weighted total power, W (renewable joules count w, grid joules count 1).
inline double weighted_power(const SystemParams& p, const EpochDecision& d) {
  return p.grid_weight * renewable_draw(p, d) + grid_draw(p, d);
}

/// Outcome of one constraint check: margin > 0 means violated by that much
/// (J for the battery constraints, W for power caps, bits/Hz for QoS).
struct ConstraintCheck {
  double margin = 0.0;
  int epoch = -1;          // worst offending epoch, -1 when horizon-level
  bool satisfied = true;
  bool checked = true;     // false when the constraint is disabled for a run
};

/// Per-constraint evaluation of a schedule; indices 0..8 are C1..C9.
struct FeasibilityReport {
  std::array<ConstraintCheck, 9> checks{};

  const ConstraintCheck& causality() const { return checks[0]; }
  const ConstraintCheck& overflow() const { return checks[1]; }
  const ConstraintCheck& circuit_split() const { return checks[2]; }
  const ConstraintCheck& rf_split() const { return checks[3]; }
  const ConstraintCheck& tx_cap() const { return checks[4]; }
  const ConstraintCheck& grid_cap() const { return checks[5]; }
  const ConstraintCheck& qos() const { return checks[6]; }
  const ConstraintCheck& antenna_range() const { return checks[7]; }
  const ConstraintCheck& nonnegativity() const { return checks[8]; }

  bool feasible() const {
    for (const auto& c : checks)
      if (c.checked && !c.satisfied) return false;
    return true;
  }
};

}  // namespace hees
