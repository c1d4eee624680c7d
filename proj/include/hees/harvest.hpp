#pragma once

#include <cmath>
#include <cstdint>
#include <optional>
#include <random>
#include <sstream>
#include <stdexcept>
#include <string>
#include <utility>
#include <vector>

#include "hees/types.hpp"

namespace hees {

namespace detail {
// Uniform double in [0, 1) built from the top 53 bits of the generator so
// that streams are identical across standard-library implementations.
inline double canonical_u01(std::mt19937_64& gen) {
  return static_cast<double>(gen() >> 11) * 0x1.0p-53;
}
}  // namespace detail

/// Distribution of the per-arrival harvested amount.
struct AmountModel {
  enum class Kind { Constant, Uniform, Exponential };
  Kind kind = Kind::Constant;
  double a = 0.0;   // constant value / uniform lo / exponential mean
  double b = 0.0;   // uniform hi

  static AmountModel constant(double joules) { return {Kind::Constant, joules, 0.0}; }
  static AmountModel uniform(double lo, double hi) { return {Kind::Uniform, lo, hi}; }
  static AmountModel exponential(double mean) { return {Kind::Exponential, mean, 0.0}; }

  double sample(std::mt19937_64& gen) const {
    switch (kind) {
      case Kind::Constant: return a;
      case Kind::Uniform: return a + (b - a) * detail::canonical_u01(gen);
      case Kind::Exponential: return -a * std::log1p(-detail::canonical_u01(gen));
    }
    return a;
  }

  void validate() const {
    if (kind == Kind::Uniform && !(0.0 <= a && a <= b))
      throw std::invalid_argument("uniform amount bounds must satisfy 0 <= lo <= hi");
    if (kind != Kind::Uniform && !(a >= 0.0))
      throw std::invalid_argument("harvest amounts must be >= 0");
  }
};

/// Poisson energy-arrival process over a finite horizon, or an explicit
/// deterministic arrival list that bypasses the randomness entirely.
struct ArrivalModel {
  double rate = 1.0;            // events/s
  AmountModel amounts = AmountModel::constant(0.0);
  double initial_energy = 0.0;  // J at t = 0
  double horizon = 1.0;         // s
  std::uint64_t seed = 0;
  std::optional<std::vector<std::pair<double, double>>> explicit_arrivals;

  void validate() const {
    if (!(rate > 0.0)) throw std::invalid_argument("arrival rate must be > 0");
    if (!(horizon > 0.0)) throw std::invalid_argument("horizon must be > 0");
    if (!(initial_energy >= 0.0)) throw std::invalid_argument("initial energy must be >= 0");
    amounts.validate();
  }
};

/// Draws a timeline from the model: exponential inter-arrival gaps with mean
/// 1/rate, arrivals past the horizon truncated, the final epoch closed at the
/// horizon. Identical seeds give bit-identical timelines. In explicit mode
/// the supplied list is echoed exactly.
inline EpochTimeline generate_timeline(const ArrivalModel& model) {
  model.validate();
  if (model.explicit_arrivals)
    return EpochTimeline::from_arrivals(model.horizon, *model.explicit_arrivals,
                                        model.initial_energy);
  std::mt19937_64 gen(model.seed);
  std::vector<std::pair<double, double>> arrivals;
  double t = 0.0;
  for (;;) {
    t += -std::log1p(-detail::canonical_u01(gen)) / model.rate;
    if (t >= model.horizon) break;
    arrivals.emplace_back(t, model.amounts.sample(gen));
  }
  return EpochTimeline::from_arrivals(model.horizon, std::move(arrivals),
                                      model.initial_energy);
}

/// Physical battery ledger for a schedule. Arrivals clip at capacity (the
/// excess is recorded as overflow, never consumed); a drain outrunning the
/// stored level is recorded as a causality violation rather than raised.
struct BatteryTrajectory {
  std::vector<double> pre_arrival;       // level just before each epoch's credit, J
  std::vector<double> post_arrival;      // level just after the credit, J
  std::vector<double> drain;             // renewable energy consumed in the epoch, J
  std::vector<double> overflow;          // energy lost to clipping at the credit, J
  std::vector<double> circuit_residual;  // level left for circuit use after transmit, J
  std::vector<double> rf_residual;       // level left for RF chains after circuit, J
  double final_level = 0.0;
  bool causality_violation = false;
  int first_violation_epoch = -1;

  double total_overflow() const {
    double s = 0.0;
    for (double v : overflow) s += v;
    return s;
  }
  double total_drain() const {
    double s = 0.0;
    for (double v : drain) s += v;
    return s;
  }
};

inline BatteryTrajectory battery_trajectory(const Schedule& s, const EpochTimeline& tl,
                                            const SystemParams& p) {
  if (s.size() != tl.epochs())
    throw std::invalid_argument("schedule and timeline epoch counts differ");
  const std::size_t n = s.size();
  BatteryTrajectory traj;
  traj.pre_arrival.resize(n);
  traj.post_arrival.resize(n);
  traj.drain.resize(n);
  traj.overflow.resize(n);
  traj.circuit_residual.resize(n);
  traj.rf_residual.resize(n);

  const double tol = 1e-9 * (1.0 + p.battery_capacity + tl.initial_energy + tl.total_harvest());
  double level = std::min(tl.initial_energy, p.battery_capacity);
  double spilled_at_start = tl.initial_energy - level;
  for (std::size_t i = 0; i < n; ++i) {
    traj.pre_arrival[i] = level;
    const double unclipped = level + tl.harvested[i];
    level = std::min(unclipped, p.battery_capacity);
    traj.post_arrival[i] = level;
    traj.overflow[i] = (unclipped - level) + spilled_at_start;
    spilled_at_start = 0.0;

    const double t = tl.lengths[i];
    traj.circuit_residual[i] = level - s[i].power.tx_renewable / p.pa_efficiency * t;
    traj.rf_residual[i] = traj.circuit_residual[i] - s[i].power.circuit_renewable * t;

    const double d = renewable_draw(p, s[i]) * t;
    traj.drain[i] = d;
    level -= d;
    if (level < -tol && !traj.causality_violation) {
      traj.causality_violation = true;
      traj.first_violation_epoch = static_cast<int>(i);
    }
  }
  traj.final_level = level;
  return traj;
}

/// One record per epoch: `index, t_start_s, t_end_s, E_in_J`, 1-based index,
/// header line included.
inline std::string timeline_to_csv(const EpochTimeline& tl) {
  std::ostringstream out;
  out.precision(12);
  out << "index, t_start_s, t_end_s, E_in_J\n";
  double start = 0.0;
  for (std::size_t i = 0; i < tl.epochs(); ++i) {
    out << (i + 1) << ", " << start << ", " << tl.end_times[i] << ", " << tl.harvested[i]
        << "\n";
    start = tl.end_times[i];
  }
  return out.str();
}

}  // namespace hees
