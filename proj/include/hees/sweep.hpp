#pragma once

#include <atomic>
#include <cstdio>
#include <functional>
#include <sstream>
#include <string>
#include <thread>
#include <vector>

#include "hees/config.hpp"
#include "hees/harvest.hpp"
#include "hees/model.hpp"
#include "hees/solver.hpp"
#include "hees/types.hpp"

namespace hees {

namespace detail {

inline std::string fmt(double v) {
  char buf[40];
  std::snprintf(buf, sizeof buf, "%.10g", v);
  return buf;
}

/// Runs fn(0..n-1) on a small worker pool; results land in input order, so
/// output bytes do not depend on the worker count.
template <typename T>
std::vector<T> parallel_map(std::size_t n, int workers,
                            const std::function<T(std::size_t)>& fn) {
  std::vector<T> out(n);
  const int pool = std::max(1, std::min<int>(workers, static_cast<int>(n)));
  if (pool == 1) {
    for (std::size_t i = 0; i < n; ++i) out[i] = fn(i);
    return out;
  }
  std::atomic<std::size_t> next{0};
  std::vector<std::thread> threads;
  threads.reserve(pool);
  for (int t = 0; t < pool; ++t) {
    threads.emplace_back([&] {
      for (;;) {
        const std::size_t i = next.fetch_add(1);
        if (i >= n) return;
        out[i] = fn(i);
      }
    });
  }
  for (auto& th : threads) th.join();
  return out;
}

inline const char* status_label(SolveStatus s) {
  switch (s) {
    case SolveStatus::Converged: return "ok";
    case SolveStatus::NotConverged: return "not_converged";
    case SolveStatus::Infeasible: return "infeasible";
  }
  return "unknown";
}

}  // namespace detail

struct SweepResult {
  std::string csv;   // UTF-8, LF line endings, '.' decimal separator
  std::string meta;  // axis and series names for plotting
  bool all_ok = true;
};

/// Fig. 1 style sweep: EE against a constant antenna count, powers optimized
/// per point, one pass per configured RF power.
inline SweepResult run_ee_vs_m(const ScenarioConfig& cfg, int workers = 1) {
  cfg.validate();
  const EpochTimeline tl = cfg.make_timeline();
  std::vector<double> rf_values = cfg.rf_values;
  if (rf_values.empty()) rf_values.push_back(cfg.system.p_rf);

  struct Point {
    double rf;
    int m;
    double ee = 0.0;
    SolveStatus status = SolveStatus::Infeasible;
  };
  std::vector<Point> points;
  for (double rf : rf_values)
    for (int m = cfg.m_from; m <= cfg.m_to; ++m) points.push_back({rf, m});

  const auto rows = detail::parallel_map<Point>(
      points.size(), workers, [&](std::size_t i) {
        Point pt = points[i];
        SystemParams sys = cfg.system;
        sys.p_rf = pt.rf;
        SolveOptions opt = cfg.solve;
        opt.pin_antennas = pt.m;
        const SolveReport rep = dinkelbach_solve(sys, tl, opt);
        pt.status = rep.status;
        pt.ee = rep.q_star;
        return pt;
      });

  SweepResult out;
  std::ostringstream csv;
  csv << "p_rf_w,m,u_ee_bits_per_hz_per_j,status\n";
  for (const auto& r : rows) {
    csv << detail::fmt(r.rf) << ',' << r.m << ',' << detail::fmt(r.ee) << ','
        << detail::status_label(r.status) << '\n';
    if (r.status == SolveStatus::Infeasible) out.all_ok = false;
  }
  out.csv = csv.str();
  std::ostringstream meta;
  meta << "x_axis = m\n"
          "y_axis = u_ee_bits_per_hz_per_j\n"
          "series_key = p_rf_w\n";
  out.meta = meta.str();
  return out;
}

/// Fig. 2 style sweep: optimal EE against battery capacity, proposed against
/// the full-array strategy, overflow constraint disabled for the sweep.
inline SweepResult run_ee_vs_capacity(const ScenarioConfig& cfg, int workers = 1) {
  cfg.validate();
  const EpochTimeline tl = cfg.make_timeline();
  std::vector<double> capacities;
  for (double b = cfg.capacity_from; b <= cfg.capacity_to + 1e-9; b += cfg.capacity_step)
    capacities.push_back(b);

  struct Point {
    double b;
    double proposed = 0.0;
    double baseline = 0.0;
    SolveStatus status = SolveStatus::Infeasible;
  };
  const auto rows = detail::parallel_map<Point>(
      capacities.size(), workers, [&](std::size_t i) {
        Point pt{capacities[i]};
        SystemParams sys = cfg.system;
        sys.battery_capacity = pt.b;
        SolveOptions opt = cfg.solve;
        opt.enforce_overflow = false;  // the capacity sweep removes C2
        const SolveReport prop = dinkelbach_solve(sys, tl, opt);
        const SolveReport base = baseline_full_array(sys, tl, opt);
        pt.proposed = prop.q_star;
        pt.baseline = base.q_star;
        pt.status = prop.status == SolveStatus::Infeasible ? prop.status : base.status;
        return pt;
      });

  SweepResult out;
  std::ostringstream csv;
  csv << "b_max_j,u_ee_proposed,u_ee_full_array,status\n";
  for (const auto& r : rows) {
    csv << detail::fmt(r.b) << ',' << detail::fmt(r.proposed) << ','
        << detail::fmt(r.baseline) << ',' << detail::status_label(r.status) << '\n';
    if (r.status == SolveStatus::Infeasible) out.all_ok = false;
  }
  out.csv = csv.str();
  out.meta =
      "x_axis = b_max_j\n"
      "y_axis = u_ee_bits_per_hz_per_j\n"
      "series = u_ee_proposed, u_ee_full_array\n"
      "note = overflow constraint disabled for this sweep\n";
  return out;
}

/// Fig. 3 style sweep: EE against a pinned spectral-efficiency target
/// (horizon-average bits/s/Hz), one series per battery capacity; infeasible
/// targets are marked, not fatal.
inline SweepResult run_ee_se_tradeoff(const ScenarioConfig& cfg, int workers = 1) {
  cfg.validate();
  const EpochTimeline tl = cfg.make_timeline();
  struct Point {
    double b;
    double target;  // bits/s/Hz
    SeTargetResult r;
  };
  std::vector<Point> points;
  for (double b : cfg.battery_values)
    for (double se = cfg.se_from; se <= cfg.se_to + 1e-9; se += cfg.se_step)
      points.push_back({b, se, {}});

  const auto rows = detail::parallel_map<Point>(
      points.size(), workers, [&](std::size_t i) {
        Point pt = points[i];
        SystemParams sys = cfg.system;
        sys.battery_capacity = pt.b;
        pt.r = min_energy_at_se(sys, tl, pt.target * sys.t_total, cfg.solve);
        return pt;
      });

  SweepResult out;
  std::ostringstream csv;
  csv << "b_max_j,se_target_bits_per_s_per_hz,status,u_ee_bits_per_hz_per_j,"
         "weighted_energy_j\n";
  for (const auto& r : rows) {
    csv << detail::fmt(r.b) << ',' << detail::fmt(r.target) << ',';
    if (r.r.feasible)
      csv << "ok," << detail::fmt(r.r.ee) << ',' << detail::fmt(r.r.energy) << '\n';
    else
      csv << "infeasible,,\n";
  }
  out.csv = csv.str();
  out.meta =
      "x_axis = se_target_bits_per_s_per_hz\n"
      "y_axis = u_ee_bits_per_hz_per_j\n"
      "series_key = b_max_j\n";
  return out;
}

/// Full report of one solve: key/value header plus a per-epoch table.
inline std::string solve_report_text(const SolveReport& rep, const SystemParams& p,
                                     const EpochTimeline& tl) {
  std::ostringstream out;
  out << "status: " << detail::status_label(rep.status) << '\n'
      << "q_star_bits_per_hz_per_j: " << detail::fmt(rep.q_star) << '\n'
      << "spectral_efficiency_bits_per_hz: " << detail::fmt(rep.spectral_efficiency) << '\n'
      << "weighted_energy_j: " << detail::fmt(rep.weighted_energy) << '\n'
      << "dual_gap_bits_per_hz: " << detail::fmt(rep.dual_gap) << '\n'
      << "qos_multiplier: " << detail::fmt(rep.qos_multiplier) << '\n'
      << "outer_iterations: " << rep.trace.size() << '\n'
      << "feasible: " << (rep.feasibility.feasible() ? "yes" : "no") << '\n';
  if (!rep.message.empty()) out << "message: " << rep.message << '\n';
  out << "trace:\n";
  for (std::size_t i = 0; i < rep.trace.size(); ++i)
    out << "  iter " << (i + 1) << ": q = " << detail::fmt(rep.trace[i].q)
        << ", surplus = " << detail::fmt(rep.trace[i].surplus) << '\n';
  if (rep.schedule.size() == tl.epochs() && rep.schedule.size() > 0) {
    out << "epochs:\n"
           "  index, t_start_s, t_end_s, m, p_tx_e_w, p_tx_g_w, p_c_e_w, p_c_g_w, "
           "p_rf_e_w, p_rf_g_w, battery_pre_j, battery_post_j, overflow_j\n";
    double start = 0.0;
    for (std::size_t i = 0; i < rep.schedule.size(); ++i) {
      const auto& d = rep.schedule[i];
      out << "  " << (i + 1) << ", " << detail::fmt(start) << ", "
          << detail::fmt(tl.end_times[i]) << ", " << d.antennas << ", "
          << detail::fmt(d.power.tx_renewable) << ", " << detail::fmt(d.power.tx_grid)
          << ", " << detail::fmt(d.power.circuit_renewable) << ", "
          << detail::fmt(d.power.circuit_grid) << ", " << detail::fmt(d.power.rf_renewable)
          << ", " << detail::fmt(d.power.rf_grid) << ", "
          << detail::fmt(rep.battery.pre_arrival.size() > i ? rep.battery.pre_arrival[i] : 0.0)
          << ", "
          << detail::fmt(rep.battery.post_arrival.size() > i ? rep.battery.post_arrival[i]
                                                             : 0.0)
          << ", "
          << detail::fmt(rep.battery.overflow.size() > i ? rep.battery.overflow[i] : 0.0)
          << '\n';
      start = tl.end_times[i];
    }
  }
  (void)p;
  return out.str();
}

}  // namespace hees
