#pragma once

#include <algorithm>
#include <cmath>
#include <cstddef>
#include <limits>
#include <optional>
#include <span>
#include <stdexcept>
#include <string>
#include <tuple>
#include <vector>

#include "hees/harvest.hpp"
#include "hees/model.hpp"
#include "hees/rate.hpp"
#include "hees/types.hpp"

namespace hees {

/// Lagrange multipliers for the dualized coupling constraints. The circuit
/// and RF split equalities hold by construction (grid complements), so they
/// carry no multipliers; the box constraints C5/C6/C9 are enforced primally
/// during the water-filling step, which keeps their multipliers at zero but
/// the update machinery still carries them.
struct Multipliers {
  std::vector<double> causality;  // one per epoch, prices over-drained battery energy
  std::vector<double> overflow;   // one per arrival, prices battery headroom
  std::vector<double> tx_cap;     // per epoch, transmit power cap
  std::vector<double> grid_cap;   // per epoch, grid draw cap
  double qos = 0.0;               // minimum-rate constraint

  static Multipliers zeros(std::size_t epochs) {
    Multipliers m;
    m.causality.assign(epochs, 0.0);
    m.overflow.assign(epochs, 0.0);
    m.tx_cap.assign(epochs, 0.0);
    m.grid_cap.assign(epochs, 0.0);
    return m;
  }
};

/// Signed constraint violations of a primal iterate (positive = violated).
struct ConstraintResiduals {
  std::vector<double> causality;  // J
  std::vector<double> overflow;   // J
  std::vector<double> tx_cap;     // W
  std::vector<double> grid_cap;   // W
  double qos = 0.0;               // bits/Hz
};

struct StepSizes {
  double causality = 0.0;
  double overflow = 0.0;
  double tx_cap = 0.0;
  double grid_cap = 0.0;
  double qos = 0.0;
};

/// Projected subgradient step m <- [m + (s0/sqrt(k)) * residual]+ .
inline Multipliers update_multipliers(const Multipliers& m, const ConstraintResiduals& r,
                                      const StepSizes& s0, int iteration) {
  const double damp = 1.0 / std::sqrt(static_cast<double>(std::max(iteration, 1)));
  Multipliers out = m;
  auto step = [damp](std::vector<double>& dst, const std::vector<double>& res, double s) {
    for (std::size_t i = 0; i < dst.size() && i < res.size(); ++i)
      dst[i] = std::max(0.0, dst[i] + s * damp * res[i]);
  };
  step(out.causality, r.causality, s0.causality);
  step(out.overflow, r.overflow, s0.overflow);
  step(out.tx_cap, r.tx_cap, s0.tx_cap);
  step(out.grid_cap, r.grid_cap, s0.grid_cap);
  out.qos = std::max(0.0, out.qos + s0.qos * damp * r.qos);
  return out;
}

enum class SolveStatus { Converged, NotConverged, Infeasible };

struct IterationRecord {
  double q = 0.0;        // energy price of the iteration, bits/Hz/J
  double surplus = 0.0;  // F(q) = U_SE - q * E_W of the iterate, bits/Hz
};

struct SolveOptions {
  int max_outer = 10;          // Dinkelbach iteration cap
  double tol = 1e-3;           // surplus tolerance, bits/Hz
  int inner_iters = 500;       // dual subgradient budget per outer iteration
  double rel_gap_exit = 1e-3;  // early exit on relative dual gap
  bool enforce_overflow = true;
  int polish_sweeps = 6;
  double step_scale = 0.5;
  std::optional<int> pin_antennas;  // constant-M mode (sweeps, full-array baseline)
  double qos_rel_tol = 1e-4;        // bisection tolerance on achieved SE
};

struct SolveReport {
  SolveStatus status = SolveStatus::Infeasible;
  double q_star = 0.0;  // bits/Hz/J
  Schedule schedule;
  FeasibilityReport feasibility;
  double dual_gap = 0.0;  // bits/Hz, estimate from the last inner solve
  std::vector<IterationRecord> trace;
  BatteryTrajectory battery;
  double spectral_efficiency = 0.0;  // bits/Hz
  double weighted_energy = 0.0;      // J
  double qos_multiplier = 0.0;
  std::string message;
};

namespace detail {

inline constexpr double kTinyDenominator = 1e-14;

/// Objective max se*U_SE - energy*E_W. Dinkelbach iterations use
/// {1 + mu, q}; the fixed-SE tradeoff solve uses {mu, 1}; the max-SE probe
/// uses {1, 0}.
struct ObjectiveWeights {
  double se = 1.0;
  double energy = 0.0;
};

/// Per-solve cached tables (selection gain is log-heavy).
struct SolverTables {
  std::vector<double> gain;  // 1 + ln(N/m), index m
  std::vector<double> phi;   // 1 / (gain * m)

  explicit SolverTables(int n) : gain(n + 1), phi(n + 1) {
    for (int m = 1; m <= n; ++m) {
      gain[m] = selection_gain(n, m);
      phi[m] = 1.0 / (gain[m] * m);
    }
  }
};

inline double clamp(double v, double lo, double hi) { return std::min(std::max(v, lo), hi); }

/// Structural feasibility (C1-C6, C8, C9). The rate floor C7 is a property
/// of the whole solve (the QoS multiplier drives it), not of one candidate.
inline bool feasible_ignoring_qos(const Schedule& s, const EpochTimeline& tl,
                                  const SystemParams& p, const FeasibilityOptions& fopt) {
  SystemParams relaxed = p;
  relaxed.qos_min = 0.0;
  return check_feasibility(s, tl, relaxed, fopt).feasible();
}

/// Canonical split of one epoch's demand: the transmit chain takes renewable
/// first (it is the only component whose water level prices battery energy),
/// then circuit, then the RF chains; everything uncovered falls to the grid.
inline PowerSplit split_greedy(const SystemParams& p, int m, double p_total,
                               double renewable_rate) {
  const double eta = p.pa_efficiency;
  double rem = std::max(renewable_rate, 0.0);
  const double tx_e = std::min(p_total, eta * rem);
  rem -= tx_e / eta;
  const double c_e = std::min(p.p_c, rem);
  rem -= c_e;
  const double rf_e = std::min(p.p_rf, rem / m);
  return PowerSplit::hybrid(p, tx_e, p_total - tx_e, c_e, rf_e);
}

struct Evaluation {
  double se = 0.0;
  double energy = 0.0;
  double value = -std::numeric_limits<double>::infinity();
};

inline Evaluation evaluate(const ObjectiveWeights& w, const Schedule& s,
                           const EpochTimeline& tl, const SystemParams& p) {
  Evaluation e;
  e.se = spectral_efficiency(s, tl, p);
  e.energy = weighted_energy(s, tl, p);
  e.value = w.se * e.se - w.energy * e.energy;
  return e;
}

/// Battery level just after each epoch's credit given fixed drains, with the
/// physical clip at capacity; `clip` false keeps the algebraic ledger.
inline std::vector<double> credit_levels(const EpochTimeline& tl, const SystemParams& p,
                                         const std::vector<double>& drain, bool clip) {
  std::vector<double> lv(tl.epochs());
  double level = clip ? std::min(tl.initial_energy, p.battery_capacity) : tl.initial_energy;
  for (std::size_t i = 0; i < tl.epochs(); ++i) {
    level += tl.harvested[i];
    if (clip) level = std::min(level, p.battery_capacity);
    lv[i] = level;
    level -= drain[i];
  }
  return lv;
}

inline std::vector<double> schedule_drains(const Schedule& s, const EpochTimeline& tl,
                                           const SystemParams& p) {
  std::vector<double> d(s.size());
  for (std::size_t i = 0; i < s.size(); ++i) d[i] = renewable_draw(p, s[i]) * tl.lengths[i];
  return d;
}

/// Largest renewable energy (J) epoch `i` may drain with every other epoch's
/// drain held fixed, such that no epoch outruns the (mode-aware) battery.
inline double max_drain_budget(const EpochTimeline& tl, const SystemParams& p,
                               std::vector<double> drains, std::size_t i, bool clip_mode) {
  const double total = tl.initial_energy + tl.total_harvest();
  auto feasible = [&](double x) {
    drains[i] = x;
    double level = std::min(tl.initial_energy, p.battery_capacity);
    const double tol = 1e-9 * (1.0 + total);
    for (std::size_t e = 0; e < tl.epochs(); ++e) {
      level += tl.harvested[e];
      if (clip_mode) level = std::min(level, p.battery_capacity);
      if (drains[e] > level + tol) return false;
      level -= drains[e];
    }
    return true;
  };
  double lo = 0.0, hi = total + 1.0;
  if (feasible(hi)) return hi;
  for (int it = 0; it < 60; ++it) {
    const double mid = 0.5 * (lo + hi);
    (feasible(mid) ? lo : hi) = mid;
  }
  return lo;
}

struct KktEpoch {
  PowerSplit split;
  bool water_capped = false;
};

/// Closed-form KKT powers of one epoch at fixed antennas and multipliers.
/// suffix_causality / suffix_overflow are the multiplier sums over the
/// battery constraints that contain this epoch's drain; `level` is the
/// battery content right after the epoch's credit given prior commitments.
inline KktEpoch kkt_epoch(const ObjectiveWeights& w, const SystemParams& p,
                          const SolverTables& tables, int m, double t_len, double level,
                          double suffix_causality, double suffix_overflow, double zeta,
                          double theta) {
  const double eta = p.pa_efficiency;
  const double phi = tables.phi[m];
  KktEpoch out;

  const double denom_renewable = w.energy * p.grid_weight + suffix_causality -
                                 suffix_overflow + eta * zeta;
  double tx_e;
  if (denom_renewable > kTinyDenominator) {
    tx_e = clamp(w.se * eta * kLog2E / denom_renewable - phi, 0.0, p.p_tx_max);
  } else {
    tx_e = p.p_tx_max;  // infinite (or negative-cost) water level: box bound
    out.water_capped = true;
  }

  const double denom_grid = w.energy + eta * zeta + theta;
  double tx_g;
  if (denom_grid > kTinyDenominator) {
    tx_g = clamp(w.se * eta * kLog2E / denom_grid - phi - tx_e, 0.0, p.p_tx_max - tx_e);
  } else {
    tx_g = p.p_tx_max - tx_e;
    out.water_capped = true;
  }

  // Residual battery ledger: transmit drain precedes the circuit and RF
  // splits (the running `level` already folds in all earlier epochs).
  const double residual_circuit = level - tx_e / eta * t_len;
  const double c_e = clamp(residual_circuit / t_len, 0.0, p.p_c);
  const double residual_rf = residual_circuit - c_e * t_len;
  const double rf_e = clamp(residual_rf / (m * t_len), 0.0, p.p_rf);

  // Grid box: the grid-financed transmit share yields to the mandatory
  // circuit/RF grid draw.
  const double grid_mandatory = (p.p_c - c_e) + m * (p.p_rf - rf_e);
  tx_g = std::min(tx_g, std::max(0.0, eta * (p.p_grid_max - grid_mandatory)));

  out.split = PowerSplit::hybrid(p, tx_e, tx_g, c_e, rf_e);
  return out;
}

/// Per-epoch Lagrangian contribution of a candidate decision (terms constant
/// in the decision are dropped; fine for the argmax, added back for the dual
/// value).
inline double epoch_term(const ObjectiveWeights& w, const SystemParams& p, double t_len,
                         const EpochDecision& d, double suffix_causality,
                         double suffix_overflow, double zeta, double theta) {
  const double drain = renewable_draw(p, d);
  const double grid = grid_draw(p, d);
  const double rate = mean_rate(d.antennas, d.power.tx_total(), p.total_antennas);
  return t_len * (w.se * rate - w.energy * (p.grid_weight * drain + grid) -
                  (suffix_causality - suffix_overflow) * drain - zeta * d.power.tx_total() -
                  theta * grid);
}

struct EpochChoice {
  EpochDecision decision;
  double term = -std::numeric_limits<double>::infinity();
  bool water_capped = false;
};

inline EpochChoice scan_antennas(const ObjectiveWeights& w, const SystemParams& p,
                                 const SolverTables& tables, double t_len, double level,
                                 double suffix_causality, double suffix_overflow, double zeta,
                                 double theta, int m_lo, int m_hi) {
  EpochChoice best;
  for (int m = m_lo; m <= m_hi; ++m) {
    const KktEpoch k =
        kkt_epoch(w, p, tables, m, t_len, level, suffix_causality, suffix_overflow, zeta, theta);
    EpochDecision d{m, k.split};
    const double term = epoch_term(w, p, t_len, d, suffix_causality, suffix_overflow, zeta, theta);
    if (term > best.term) best = {d, term, k.water_capped};
  }
  return best;
}

/// Rebuilds a schedule into a feasible one: boxes clamped, splits rebuilt
/// against the forward battery ledger, grid-financed transmit trimmed to the
/// grid cap, and (overflow mode) surplus energy burned ahead of an arrival
/// that would overflow. Returns nothing when the shape cannot be repaired.
inline std::optional<Schedule> restore_feasible(Schedule s, const EpochTimeline& tl,
                                                const SystemParams& p,
                                                const FeasibilityOptions& fopt) {
  const std::size_t n = tl.epochs();
  if (s.size() != n) return std::nullopt;
  const bool clip_mode = !fopt.enforce_overflow;
  const double eta = p.pa_efficiency;

  // Pass 1: clamp boxes and rebuild canonical splits forward.
  double level = std::min(tl.initial_energy, p.battery_capacity);
  for (std::size_t i = 0; i < n; ++i) {
    level = std::min(level + tl.harvested[i], p.battery_capacity);
    auto& d = s[i];
    d.antennas = static_cast<int>(clamp(d.antennas, 1, p.total_antennas));
    double p_tot = clamp(d.power.tx_total(), 0.0, p.p_tx_max);
    const double t = tl.lengths[i];
    const double r_avail = std::max(level, 0.0) / t;
    PowerSplit split = split_greedy(p, d.antennas, p_tot, r_avail);
    for (int rounds = 0; rounds < 4; ++rounds) {
      EpochDecision cand{d.antennas, split};
      const double g = grid_draw(p, cand);
      if (g <= p.p_grid_max + 1e-12 * (1.0 + p.p_grid_max)) break;
      const double grid_mandatory = g - split.tx_grid / eta;
      if (grid_mandatory > p.p_grid_max + 1e-9) return std::nullopt;
      p_tot = split.tx_renewable + eta * (p.p_grid_max - grid_mandatory);
      split = split_greedy(p, d.antennas, p_tot, r_avail);
    }
    d.power = split;
    level -= renewable_draw(p, d) * t;
  }

  // Pass 2 (overflow enforced): burn surplus before any arrival that would
  // exceed capacity, by converting grid draw to renewable draw and, failing
  // that, raising renewable transmit power.
  if (!clip_mode) {
    for (std::size_t e = 1; e < n; ++e) {
      auto drains = schedule_drains(s, tl, p);
      std::vector<double> lv = credit_levels(tl, p, drains, /*clip=*/false);
      double excess = lv[e] - p.battery_capacity;
      if (excess <= 1e-12 * (1.0 + p.battery_capacity)) continue;
      for (std::size_t jj = e; jj-- > 0 && excess > 0.0;) {
        drains = schedule_drains(s, tl, p);
        const double budget = max_drain_budget(tl, p, drains, jj, false);
        const double t = tl.lengths[jj];
        double extra = std::min(excess, budget - drains[jj]);
        if (extra <= 0.0) continue;
        auto& d = s[jj];
        const double demand =
            p.p_c + d.antennas * p.p_rf + d.power.tx_total() / eta;
        const double substitutable = std::max(0.0, demand * t - drains[jj]);
        const double by_substitution = std::min(extra, substitutable);
        double p_tot = d.power.tx_total();
        double still = extra - by_substitution;
        if (still > 0.0) {
          const double raise = std::min(p.p_tx_max - p_tot, eta * still / t);
          p_tot += std::max(raise, 0.0);
        }
        const double r_new = (drains[jj] + extra) / t;
        d.power = split_greedy(p, d.antennas, p_tot, r_new);
        const double burned = renewable_draw(p, d) * t - drains[jj];
        excess -= std::max(burned, 0.0);
      }
      const auto lv2 = credit_levels(tl, p, schedule_drains(s, tl, p), false);
      if (lv2[e] > p.battery_capacity + 1e-9 * (1.0 + p.battery_capacity))
        return std::nullopt;
    }
  }

  if (!feasible_ignoring_qos(s, tl, p, fopt)) return std::nullopt;
  return s;
}

/// Max renewable use for the given antenna/power profile (weakly lowers the
/// weighted energy, never breaks feasibility of a feasible input).
inline Schedule canonicalize(Schedule s, const EpochTimeline& tl, const SystemParams& p) {
  double level = std::min(tl.initial_energy, p.battery_capacity);
  for (std::size_t i = 0; i < s.size(); ++i) {
    level = std::min(level + tl.harvested[i], p.battery_capacity);
    auto& d = s[i];
    d.power = split_greedy(p, d.antennas, d.power.tx_total(),
                           std::max(level, 0.0) / tl.lengths[i]);
    level -= renewable_draw(p, d) * tl.lengths[i];
  }
  return s;
}

/// Exact re-optimization of one epoch at a renewable-energy budget (J). The
/// transmit power optimum is closed-form on each of the two cost pieces
/// (battery-financed, then grid-financed).
inline std::optional<EpochChoice> optimize_epoch_at_budget(
    const ObjectiveWeights& w, const SystemParams& p, const SolverTables& tables,
    double t_len, double budget_j, int m_lo, int m_hi) {
  const double eta = p.pa_efficiency;
  const double r_avail = std::max(budget_j, 0.0) / t_len;
  EpochChoice best;
  bool found = false;
  for (int m = m_lo; m <= m_hi; ++m) {
    const double mandatory = p.p_c + m * p.p_rf;
    const double grid_mandatory = std::max(0.0, mandatory - r_avail);
    if (grid_mandatory > p.p_grid_max + 1e-12 * (1.0 + p.p_grid_max)) continue;
    const double rem_tx = std::max(0.0, r_avail - mandatory);
    const double headroom = p.p_grid_max - grid_mandatory;
    const double cap_renewable = std::min(p.p_tx_max, eta * rem_tx);
    const double cap_total = std::min(p.p_tx_max, eta * (rem_tx + headroom));
    const double phi = tables.phi[m];

    double candidates[2];
    candidates[0] = (w.energy * p.grid_weight > kTinyDenominator)
                        ? clamp(w.se * eta * kLog2E / (w.energy * p.grid_weight) - phi, 0.0,
                                cap_renewable)
                        : cap_renewable;
    candidates[1] = (w.energy > kTinyDenominator)
                        ? clamp(w.se * eta * kLog2E / w.energy - phi, cap_renewable, cap_total)
                        : cap_total;
    for (double p_tot : candidates) {
      const double drain = std::min(r_avail, mandatory + p_tot / eta);
      const double grid = mandatory + p_tot / eta - drain;
      const double val =
          t_len * (w.se * mean_rate(m, p_tot, p.total_antennas) -
                   w.energy * (p.grid_weight * drain + grid));
      if (!found || val > best.term) {
        best.term = val;
        best.decision = EpochDecision{m, split_greedy(p, m, p_tot, r_avail)};
        found = true;
      }
    }
  }
  if (!found) return std::nullopt;
  return best;
}

inline double local_term(const ObjectiveWeights& w, const SystemParams& p, double t_len,
                         const EpochDecision& d) {
  return t_len * (w.se * mean_rate(d.antennas, d.power.tx_total(), p.total_antennas) -
                  w.energy * weighted_power(p, d));
}

/// Deterministic block-coordinate polish: per-epoch exact re-optimization at
/// the battery budget, plus pairwise budget shifts from earlier to later
/// epochs. Only verified-feasible improvements are kept.
inline Schedule polish(Schedule s, const ObjectiveWeights& w, const SystemParams& p,
                       const SolverTables& tables, const EpochTimeline& tl,
                       const FeasibilityOptions& fopt, int sweeps, int m_lo, int m_hi) {
  const std::size_t n = s.size();
  const bool clip_mode = !fopt.enforce_overflow;
  double value = evaluate(w, s, tl, p).value;
  for (int sweep = 0; sweep < sweeps; ++sweep) {
    bool improved = false;

    for (std::size_t i = 0; i < n; ++i) {
      const double budget = max_drain_budget(tl, p, schedule_drains(s, tl, p), i, clip_mode);
      auto cand = optimize_epoch_at_budget(w, p, tables, tl.lengths[i], budget, m_lo, m_hi);
      if (!cand) continue;
      if (cand->term <= local_term(w, p, tl.lengths[i], s[i]) + 1e-12) continue;
      Schedule trial = s;
      trial[i] = cand->decision;
      trial = canonicalize(std::move(trial), tl, p);
      if (!feasible_ignoring_qos(trial, tl, p, fopt)) continue;
      const double tv = evaluate(w, trial, tl, p).value;
      if (tv > value + 1e-12) {
        s = std::move(trial);
        value = tv;
        improved = true;
      }
    }

    if (n > 1) {
      for (std::size_t i = 0; i + 1 < n; ++i) {
        for (std::size_t j = i + 1; j < n; ++j) {
          const double d_i = renewable_draw(p, s[i]) * tl.lengths[i];
          if (d_i <= 0.0) continue;
          for (double frac : {1.0, 0.5, 0.25}) {
            Schedule trial = s;
            auto ci = optimize_epoch_at_budget(w, p, tables, tl.lengths[i], d_i * (1.0 - frac),
                                               m_lo, m_hi);
            if (!ci) continue;
            trial[i] = ci->decision;
            const double bj =
                max_drain_budget(tl, p, schedule_drains(trial, tl, p), j, clip_mode);
            auto cj = optimize_epoch_at_budget(w, p, tables, tl.lengths[j], bj, m_lo, m_hi);
            if (!cj) continue;
            trial[j] = cj->decision;
            trial = canonicalize(std::move(trial), tl, p);
            if (!feasible_ignoring_qos(trial, tl, p, fopt)) continue;
            const double tv = evaluate(w, trial, tl, p).value;
            if (tv > value + 1e-12) {
              s = std::move(trial);
              value = tv;
              improved = true;
              break;
            }
          }
        }
      }
    }

    if (!improved) break;
  }
  return s;
}

/// Zero-transmit, smallest-array schedule (plus an overflow burn pass when
/// needed); the canonical feasibility witness.
inline std::optional<Schedule> probe_schedule(const SystemParams& p, const EpochTimeline& tl,
                                              const FeasibilityOptions& fopt) {
  Schedule s;
  s.epochs.assign(tl.epochs(), EpochDecision{1, PowerSplit::grid_only(p, 0.0)});
  return restore_feasible(std::move(s), tl, p, fopt);
}

struct InnerOutcome {
  Schedule schedule;
  Multipliers multipliers;
  double best_value = -std::numeric_limits<double>::infinity();
  double dual_value = std::numeric_limits<double>::infinity();
  double dual_gap = 0.0;
  double se = 0.0;
  double energy = 0.0;
  bool feasible = false;
};

/// Dual subgradient ascent with primal restoration, then the polish.
inline InnerOutcome inner_solve(const ObjectiveWeights& w, const SystemParams& p,
                                const SolverTables& tables, const EpochTimeline& tl,
                                const SolveOptions& opt,
                                std::span<const Schedule* const> seeds) {
  const std::size_t n = tl.epochs();
  const bool clip_mode = !opt.enforce_overflow;
  const FeasibilityOptions fopt{opt.enforce_overflow};
  const int m_lo = opt.pin_antennas.value_or(1);
  const int m_hi = opt.pin_antennas.value_or(p.total_antennas);

  InnerOutcome out;
  auto consider = [&](Schedule s) {
    s = canonicalize(std::move(s), tl, p);
    const Evaluation e = evaluate(w, s, tl, p);
    if (e.value > out.best_value) {
      out.best_value = e.value;
      out.schedule = std::move(s);
      out.se = e.se;
      out.energy = e.energy;
      out.feasible = true;
    }
  };
  for (const Schedule* seed : seeds) {
    if (!seed || seed->size() != n) continue;
    if (auto r = restore_feasible(*seed, tl, p, fopt)) consider(*r);
  }
  if (auto r = probe_schedule(p, tl, fopt)) consider(*r);

  Multipliers mult = Multipliers::zeros(n);
  StepSizes s0;
  bool steps_ready = false;

  std::vector<double> avail_strict(n);
  {
    double acc = tl.initial_energy;
    for (std::size_t i = 0; i < n; ++i) avail_strict[i] = (acc += tl.harvested[i]);
  }

  for (int t = 1; t <= opt.inner_iters; ++t) {
    std::vector<double> suffix_causality(n + 1, 0.0), suffix_overflow(n + 1, 0.0);
    for (std::size_t i = n; i-- > 0;) {
      suffix_causality[i] = suffix_causality[i + 1] + mult.causality[i];
      // overflow checks at arrivals strictly after epoch i contain its drain
      suffix_overflow[i] = suffix_overflow[i + 1] + (i + 1 < n ? mult.overflow[i + 1] : 0.0);
    }

    Schedule iterate;
    iterate.epochs.resize(n);
    double lagrangian = 0.0;
    double level = std::min(tl.initial_energy, p.battery_capacity);
    for (std::size_t i = 0; i < n; ++i) {
      level = std::min(level + tl.harvested[i], p.battery_capacity);
      const EpochChoice pick =
          scan_antennas(w, p, tables, tl.lengths[i], level, suffix_causality[i],
                        suffix_overflow[i], mult.tx_cap[i], mult.grid_cap[i], m_lo, m_hi);
      iterate[i] = pick.decision;
      lagrangian += pick.term;
      level -= renewable_draw(p, iterate[i]) * tl.lengths[i];
    }

    const auto drains = schedule_drains(iterate, tl, p);
    ConstraintResiduals res;
    res.causality.resize(n);
    res.overflow.assign(n, 0.0);
    res.tx_cap.resize(n);
    res.grid_cap.resize(n);
    {
      const auto avail = clip_mode
                             ? [&] {
                                 std::vector<double> a(n);
                                 const auto lv = credit_levels(tl, p, drains, true);
                                 double spent = 0.0;
                                 for (std::size_t i = 0; i < n; ++i) {
                                   a[i] = spent + lv[i];
                                   spent += drains[i];
                                 }
                                 return a;
                               }()
                             : avail_strict;
      double cum = 0.0;
      for (std::size_t i = 0; i < n; ++i) {
        cum += drains[i];
        res.causality[i] = cum - avail[i];
        res.tx_cap[i] = iterate[i].power.tx_total() - p.p_tx_max;
        res.grid_cap[i] = grid_draw(p, iterate[i]) - p.p_grid_max;
      }
      if (!clip_mode) {
        const auto lv = credit_levels(tl, p, drains, false);
        for (std::size_t i = 0; i < n; ++i) res.overflow[i] = lv[i] - p.battery_capacity;
      }
    }

    // Dual value: the scanned Lagrangian terms plus the multiplier constants.
    double dual = lagrangian;
    for (std::size_t i = 0; i < n; ++i) {
      dual += mult.causality[i] * avail_strict[i];
      dual += mult.tx_cap[i] * p.p_tx_max * tl.lengths[i];
      dual += mult.grid_cap[i] * p.p_grid_max * tl.lengths[i];
      double credited = tl.initial_energy;
      for (std::size_t k = 0; k <= i; ++k) credited += tl.harvested[k];
      dual += mult.overflow[i] * (p.battery_capacity - credited);
    }
    out.dual_value = std::min(out.dual_value, dual);

    if (auto r = restore_feasible(iterate, tl, p, fopt)) consider(*r);

    if (!steps_ready) {
      auto rms = [](const std::vector<double>& v) {
        double s = 0.0;
        for (double x : v) s += x * x;
        return std::sqrt(s / std::max<std::size_t>(v.size(), 1));
      };
      const double price_scale = w.se * 0.1 + w.energy * p.grid_weight;
      s0.causality = opt.step_scale * price_scale / std::max(rms(res.causality), 1e-3);
      s0.overflow = opt.step_scale * price_scale / std::max(rms(res.overflow), 1e-3);
      s0.tx_cap = opt.step_scale * (w.energy + w.se * 0.1) / std::max(rms(res.tx_cap), 1e-3);
      s0.grid_cap = s0.tx_cap;
      steps_ready = true;
    }
    mult = update_multipliers(mult, res, s0, t);

    if (t >= 30 && out.feasible) {
      const double gap = out.dual_value - out.best_value;
      if (gap <= opt.rel_gap_exit * std::max(1.0, std::abs(out.best_value))) break;
    }
  }

  if (out.feasible) {
    Schedule polished = polish(out.schedule, w, p, tables, tl, fopt, opt.polish_sweeps,
                               m_lo, m_hi);
    consider(canonicalize(std::move(polished), tl, p));
  }
  out.multipliers = mult;
  out.dual_gap = out.dual_value - out.best_value;
  return out;
}

}  // namespace detail

/// Closed-form KKT power split for one epoch at the given energy price and
/// multipliers. `battery_level` is the stored energy right after the epoch's
/// credit; `water_capped` (optional) reports a degenerate infinite water
/// level that was cut at the box bound.
inline PowerSplit kkt_power_update(double q, const Multipliers& mult, int m,
                                   std::size_t epoch, const SystemParams& p,
                                   const EpochTimeline& tl, double battery_level,
                                   bool* water_capped = nullptr) {
  if (m < 1 || m > p.total_antennas) throw std::domain_error("antenna count out of range");
  if (epoch >= tl.epochs()) throw std::domain_error("epoch index out of range");
  detail::SolverTables tables(p.total_antennas);
  double suffix_causality = 0.0, suffix_overflow = 0.0;
  for (std::size_t k = epoch; k < mult.causality.size(); ++k)
    suffix_causality += mult.causality[k];
  for (std::size_t e = epoch + 1; e < mult.overflow.size(); ++e)
    suffix_overflow += mult.overflow[e];
  const double zeta = epoch < mult.tx_cap.size() ? mult.tx_cap[epoch] : 0.0;
  const double theta = epoch < mult.grid_cap.size() ? mult.grid_cap[epoch] : 0.0;
  const auto r = detail::kkt_epoch({1.0 + mult.qos, q}, p, tables, m, tl.lengths[epoch],
                                   battery_level, suffix_causality, suffix_overflow, zeta,
                                   theta);
  if (water_capped) *water_capped = r.water_capped;
  return r.split;
}

/// Argmax antenna count of the per-epoch Lagrangian term, ties to fewer RF
/// chains.
inline int select_antennas(double q, const Multipliers& mult, std::size_t epoch,
                           const SystemParams& p, const EpochTimeline& tl,
                           double battery_level) {
  if (epoch >= tl.epochs()) throw std::domain_error("epoch index out of range");
  detail::SolverTables tables(p.total_antennas);
  double suffix_causality = 0.0, suffix_overflow = 0.0;
  for (std::size_t k = epoch; k < mult.causality.size(); ++k)
    suffix_causality += mult.causality[k];
  for (std::size_t e = epoch + 1; e < mult.overflow.size(); ++e)
    suffix_overflow += mult.overflow[e];
  const double zeta = epoch < mult.tx_cap.size() ? mult.tx_cap[epoch] : 0.0;
  const double theta = epoch < mult.grid_cap.size() ? mult.grid_cap[epoch] : 0.0;
  const auto pick = detail::scan_antennas({1.0 + mult.qos, q}, p, tables, tl.lengths[epoch],
                                          battery_level, suffix_causality, suffix_overflow,
                                          zeta, theta, 1, p.total_antennas);
  return pick.decision.antennas;
}

/// Dual resource allocation at a fixed energy price q: subgradient ascent on
/// the multipliers with per-iterate primal restoration; returns the best
/// feasible schedule, the multipliers, and the dual gap estimate.
inline std::tuple<Schedule, Multipliers, double> inner_solve(double q, const SystemParams& p,
                                                             const EpochTimeline& tl,
                                                             const SolveOptions& opt) {
  p.validate();
  tl.validate();
  detail::SolverTables tables(p.total_antennas);
  const auto out = detail::inner_solve({1.0, q}, p, tables, tl, opt, {});
  if (!out.feasible) throw std::runtime_error("infeasible instance: no schedule satisfies C1-C9");
  return {out.schedule, out.multipliers, out.dual_gap};
}

namespace detail {

struct QosSolve {
  InnerOutcome inner;
  double mu = 0.0;
};

/// Runs the inner solve at price q, raising the rate multiplier by bisection
/// only when the unconstrained allocation misses the QoS floor.
inline QosSolve solve_with_qos(double q, const SystemParams& p, const SolverTables& tables,
                               const EpochTimeline& tl, const SolveOptions& opt,
                               std::span<const Schedule* const> seeds) {
  QosSolve best;
  best.inner = inner_solve({1.0, q}, p, tables, tl, opt, seeds);
  const double tol = opt.qos_rel_tol * std::max(1.0, p.qos_min);
  if (p.qos_min <= 0.0 || best.inner.se >= p.qos_min - 1e-12) return best;

  double lo = 0.0, hi = 1.0;
  InnerOutcome hi_out;
  bool hi_ok = false;
  for (int grow = 0; grow < 40; ++grow) {
    hi_out = inner_solve({1.0 + hi, q}, p, tables, tl, opt, seeds);
    if (hi_out.se >= p.qos_min - 1e-12) {
      hi_ok = true;
      break;
    }
    lo = hi;
    hi *= 4.0;
  }
  if (!hi_ok) {
    best.inner.feasible = false;
    return best;
  }
  for (int it = 0; it < 50 && (hi - lo) > 1e-9 * (1.0 + hi); ++it) {
    const double mid = 0.5 * (lo + hi);
    const auto mid_out = inner_solve({1.0 + mid, q}, p, tables, tl, opt, seeds);
    if (mid_out.se >= p.qos_min - 1e-12) {
      hi = mid;
      hi_out = mid_out;
      if (mid_out.se <= p.qos_min + tol) break;
    } else {
      lo = mid;
    }
  }
  best.inner = hi_out;
  best.mu = hi;
  return best;
}

}  // namespace detail

/// Smallest rate multiplier whose allocation meets the QoS floor at price q
/// (zero when the unconstrained allocation already does).
inline double qos_bisection(double q, const SystemParams& p, const EpochTimeline& tl,
                            const SolveOptions& opt) {
  p.validate();
  tl.validate();
  detail::SolverTables tables(p.total_antennas);
  const auto r = detail::solve_with_qos(q, p, tables, tl, opt, {});
  if (!r.inner.feasible) throw std::runtime_error("QoS floor unreachable");
  return r.mu;
}

/// Iterative ratio maximization: at each step the subtractive problem
/// max U_SE - q E_W is solved by the dual allocator, q moves to the achieved
/// ratio, and the loop stops once the surplus drops within tolerance.
inline SolveReport dinkelbach_solve(const SystemParams& p, const EpochTimeline& tl,
                                    const SolveOptions& opt = {}) {
  p.validate();
  tl.validate();
  if (opt.pin_antennas && (*opt.pin_antennas < 1 || *opt.pin_antennas > p.total_antennas))
    throw std::invalid_argument("pinned antenna count out of range");

  detail::SolverTables tables(p.total_antennas);
  const FeasibilityOptions fopt{opt.enforce_overflow};
  SolveReport rep;

  const auto witness = detail::probe_schedule(p, tl, fopt);
  if (!witness) {
    rep.status = SolveStatus::Infeasible;
    rep.message = "no schedule satisfies the battery and grid constraints";
    return rep;
  }

  // Upfront QoS attainability: maximize pure spectral efficiency.
  double se_max = 0.0;
  Schedule se_max_schedule;
  {
    const Schedule* seeds[] = {&*witness};
    const auto probe = detail::inner_solve({1.0, 0.0}, p, tables, tl, opt, seeds);
    se_max = probe.se;
    se_max_schedule = probe.schedule;
  }
  if (p.qos_min > 0.0 && se_max < p.qos_min - 1e-9) {
    rep.status = SolveStatus::Infeasible;
    rep.message = "QoS floor exceeds the maximum attainable spectral efficiency";
    rep.schedule = se_max_schedule;
    rep.spectral_efficiency = se_max;
    return rep;
  }

  double q = 0.0;
  Schedule current = (p.qos_min > 0.0 && spectral_efficiency(se_max_schedule, tl, p) >=
                                              p.qos_min)
                         ? se_max_schedule
                         : *witness;
  detail::QosSolve last;
  bool converged = false;
  for (int iter = 1; iter <= opt.max_outer; ++iter) {
    const Schedule* seeds[] = {&current, &se_max_schedule};
    last = detail::solve_with_qos(q, p, tables, tl, opt, seeds);
    if (!last.inner.feasible) {
      rep.status = SolveStatus::Infeasible;
      rep.message = "inner allocation found no feasible schedule";
      return rep;
    }
    // Keep the outer surplus monotone even when the QoS multiplier reweighs
    // the inner objective.
    const double seed_surplus =
        spectral_efficiency(current, tl, p) - q * weighted_energy(current, tl, p);
    double surplus = last.inner.se - q * last.inner.energy;
    if (iter > 1 && seed_surplus > surplus &&
        spectral_efficiency(current, tl, p) >= p.qos_min - 1e-12) {
      last.inner.schedule = current;
      last.inner.se = spectral_efficiency(current, tl, p);
      last.inner.energy = weighted_energy(current, tl, p);
      surplus = seed_surplus;
    }
    rep.trace.push_back({q, surplus});
    current = last.inner.schedule;
    if (surplus <= opt.tol) {
      q = last.inner.se / last.inner.energy;
      converged = true;
      break;
    }
    q = last.inner.se / last.inner.energy;
  }

  rep.status = converged ? SolveStatus::Converged : SolveStatus::NotConverged;
  rep.q_star = spectral_efficiency(current, tl, p) / weighted_energy(current, tl, p);
  rep.schedule = current;
  rep.spectral_efficiency = spectral_efficiency(current, tl, p);
  rep.weighted_energy = weighted_energy(current, tl, p);
  rep.feasibility = check_feasibility(current, tl, p, fopt);
  rep.battery = battery_trajectory(current, tl, p);
  rep.dual_gap = last.inner.dual_gap;
  rep.qos_multiplier = last.mu;
  if (!converged) rep.message = "iteration cap reached; report carries the best iterate";
  return rep;
}

/// The all-antennas comparison strategy: the identical pipeline with the
/// antenna count pinned to the full array.
inline SolveReport baseline_full_array(const SystemParams& p, const EpochTimeline& tl,
                                       SolveOptions opt = {}) {
  opt.pin_antennas = p.total_antennas;
  return dinkelbach_solve(p, tl, opt);
}

/// Result of the fixed-SE tradeoff solve (weighted-energy minimization with
/// the rate constraint pinned to an equality).
struct SeTargetResult {
  bool feasible = false;
  Schedule schedule;
  double se = 0.0;      // achieved, bits/Hz
  double energy = 0.0;  // J
  double ee = 0.0;      // bits/Hz/J
};

/// Minimizes weighted energy subject to U_SE == target (bits/Hz over the
/// horizon): bisection on the rate price, then a transmit trim to land on
/// the equality.
inline SeTargetResult min_energy_at_se(const SystemParams& p, const EpochTimeline& tl,
                                       double target_se, const SolveOptions& opt = {}) {
  p.validate();
  tl.validate();
  detail::SolverTables tables(p.total_antennas);
  const FeasibilityOptions fopt{opt.enforce_overflow};
  SeTargetResult out;

  const auto witness = detail::probe_schedule(p, tl, fopt);
  if (!witness) return out;
  const Schedule* seeds[] = {&*witness};
  const auto se_probe = detail::inner_solve({1.0, 0.0}, p, tables, tl, opt, seeds);
  const double tol = 1e-6 * std::max(1.0, target_se);
  if (target_se > se_probe.se + tol) return out;  // beyond the attainable frontier

  Schedule sched;
  if (target_se <= tol) {
    sched = *witness;  // zero transmit
  } else {
    double lo = 0.0, hi = 1.0;
    detail::InnerOutcome hi_out;
    bool ok = false;
    for (int grow = 0; grow < 48; ++grow) {
      hi_out = detail::inner_solve({hi, 1.0}, p, tables, tl, opt, seeds);
      if (hi_out.se >= target_se - tol) {
        ok = true;
        break;
      }
      lo = hi;
      hi *= 4.0;
    }
    if (!ok) return out;
    for (int it = 0; it < 60 && (hi - lo) > 1e-10 * (1.0 + hi); ++it) {
      const double mid = 0.5 * (lo + hi);
      const auto mid_out = detail::inner_solve({mid, 1.0}, p, tables, tl, opt, seeds);
      if (mid_out.se >= target_se - tol) {
        hi = mid;
        hi_out = mid_out;
        if (mid_out.se <= target_se + 10 * tol) break;
      } else {
        lo = mid;
      }
    }
    sched = hi_out.schedule;

    // Trim transmit power down to the exact equality, largest-rate epoch
    // first.
    for (int pass = 0; pass < 2 * static_cast<int>(sched.size()) + 1; ++pass) {
      const double se_now = spectral_efficiency(sched, tl, p);
      double excess = se_now - target_se;
      if (excess <= tol) break;
      std::size_t pick = 0;
      double best_rate = -1.0;
      for (std::size_t i = 0; i < sched.size(); ++i) {
        const double r = mean_rate(sched[i].antennas, sched[i].power.tx_total(),
                                   p.total_antennas);
        if (r > best_rate) {
          best_rate = r;
          pick = i;
        }
      }
      const double r_new = std::max(0.0, best_rate - excess / tl.lengths[pick]);
      const int m = sched[pick].antennas;
      const double p_new =
          (std::exp2(r_new) - 1.0) / (selection_gain(p.total_antennas, m) * m);
      sched[pick].power = PowerSplit::hybrid(p, 0.0, p_new, 0.0, 0.0);
      sched = detail::canonicalize(std::move(sched), tl, p);
    }
  }

  sched = detail::canonicalize(std::move(sched), tl, p);
  if (!check_feasibility(sched, tl, p, fopt).feasible()) return out;
  out.feasible = true;
  out.schedule = sched;
  out.se = spectral_efficiency(sched, tl, p);
  out.energy = weighted_energy(sched, tl, p);
  out.ee = out.energy > 0.0 ? out.se / out.energy : 0.0;
  return out;
}

}  // namespace hees
