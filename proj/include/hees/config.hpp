#pragma once

#include <cmath>
#include <cstdint>
#include <istream>
#include <sstream>
#include <stdexcept>
#include <string>
#include <string_view>
#include <utility>
#include <vector>

#include "hees/harvest.hpp"
#include "hees/solver.hpp"
#include "hees/types.hpp"

namespace hees {

inline double dbm_to_watts(double dbm) { return std::pow(10.0, (dbm - 30.0) / 10.0); }

enum class SweepMode { SingleSolve, EeVsM, EeVsCapacity, EeSeTradeoff };

/// One experiment scenario: system constants, an arrival model (random or
/// explicit), solver options, and exactly one sweep directive.
struct ScenarioConfig {
  SystemParams system;
  ArrivalModel arrivals;
  SolveOptions solve;
  SweepMode sweep = SweepMode::SingleSolve;

  // ee_vs_m
  int m_from = 1;
  int m_to = 100;
  std::vector<double> rf_values;  // W; empty = the system's p_rf only

  // ee_vs_capacity
  double capacity_from = 0.0;
  double capacity_to = 1000.0;
  double capacity_step = 100.0;

  // ee_se_tradeoff (targets are horizon-average rates, bits/s/Hz)
  double se_from = 0.0;
  double se_to = 12.0;
  double se_step = 0.5;
  std::vector<double> battery_values;  // J; one output series per value

  std::string output_path = "out.csv";
  std::uint64_t seed = 1;

  EpochTimeline make_timeline() const {
    ArrivalModel m = arrivals;
    m.horizon = system.t_total;
    if (!m.explicit_arrivals) m.rate = system.arrival_rate;
    return generate_timeline(m);
  }

  void validate() const {
    system.validate();
    if (sweep == SweepMode::EeVsM) {
      if (m_from < 1 || m_to > system.total_antennas || m_from > m_to)
        throw std::invalid_argument("antenna sweep range is empty or out of bounds");
    }
    if (sweep == SweepMode::EeVsCapacity) {
      if (!(capacity_step > 0.0) || capacity_to < capacity_from)
        throw std::invalid_argument("capacity sweep range is empty");
    }
    if (sweep == SweepMode::EeSeTradeoff) {
      if (!(se_step > 0.0) || se_to < se_from)
        throw std::invalid_argument("SE sweep range is empty");
      if (battery_values.empty())
        throw std::invalid_argument("SE tradeoff sweep needs battery_values");
    }
  }
};

namespace detail {

inline std::string_view trim(std::string_view s) {
  while (!s.empty() && (s.front() == ' ' || s.front() == '\t')) s.remove_prefix(1);
  while (!s.empty() && (s.back() == ' ' || s.back() == '\t' || s.back() == '\r'))
    s.remove_suffix(1);
  return s;
}

struct ConfigError : std::runtime_error {
  using std::runtime_error::runtime_error;
};

inline double parse_number(std::string_view v, int line) {
  try {
    std::size_t used = 0;
    const std::string s{v};
    const double x = std::stod(s, &used);
    if (used != s.size()) throw std::invalid_argument("trailing characters");
    return x;
  } catch (const std::exception&) {
    throw ConfigError("line " + std::to_string(line) + ": expected a number, got '" +
                      std::string(v) + "'");
  }
}

inline bool parse_bool(std::string_view v, int line) {
  if (v == "true" || v == "1" || v == "yes") return true;
  if (v == "false" || v == "0" || v == "no") return false;
  throw ConfigError("line " + std::to_string(line) + ": expected a boolean, got '" +
                    std::string(v) + "'");
}

inline std::vector<std::string_view> split(std::string_view v, char sep) {
  std::vector<std::string_view> out;
  while (true) {
    const auto pos = v.find(sep);
    out.push_back(trim(v.substr(0, pos)));
    if (pos == std::string_view::npos) break;
    v.remove_prefix(pos + 1);
  }
  return out;
}

}  // namespace detail

/// Parses the `key = value` scenario format: `[section]` headers, `#`
/// comments, unknown keys and sections are hard errors.
inline ScenarioConfig parse_config(std::istream& in) {
  ScenarioConfig cfg;
  std::string section;
  std::string line;
  int lineno = 0;
  bool explicit_mode = false;
  std::vector<std::pair<double, double>> arrivals;
  bool have_arrivals = false;

  while (std::getline(in, line)) {
    ++lineno;
    std::string_view v = detail::trim(line);
    if (const auto hash = v.find('#'); hash != std::string_view::npos)
      v = detail::trim(v.substr(0, hash));
    if (v.empty()) continue;
    if (v.front() == '[') {
      if (v.back() != ']')
        throw detail::ConfigError("line " + std::to_string(lineno) + ": unterminated section");
      section = std::string(detail::trim(v.substr(1, v.size() - 2)));
      if (section != "system" && section != "timeline" && section != "solve" &&
          section != "sweep" && section != "output")
        throw detail::ConfigError("line " + std::to_string(lineno) + ": unknown section [" +
                                  section + "]");
      continue;
    }
    const auto eq = v.find('=');
    if (eq == std::string_view::npos)
      throw detail::ConfigError("line " + std::to_string(lineno) + ": expected key = value");
    const std::string key{detail::trim(v.substr(0, eq))};
    const std::string_view val = detail::trim(v.substr(eq + 1));
    auto num = [&] { return detail::parse_number(val, lineno); };
    auto flag = [&] { return detail::parse_bool(val, lineno); };
    auto numbers = [&] {
      std::vector<double> out;
      for (auto piece : detail::split(val, ','))
        out.push_back(detail::parse_number(piece, lineno));
      return out;
    };

    bool known = true;
    if (section == "system") {
      auto& s = cfg.system;
      if (key == "antennas") s.total_antennas = static_cast<int>(num());
      else if (key == "p_tx_max_w") s.p_tx_max = num();
      else if (key == "p_tx_max_dbm") s.p_tx_max = dbm_to_watts(num());
      else if (key == "p_c_w") s.p_c = num();
      else if (key == "p_rf_w") s.p_rf = num();
      else if (key == "pa_efficiency") s.pa_efficiency = num();
      else if (key == "grid_weight") s.grid_weight = num();
      else if (key == "p_grid_max_w") s.p_grid_max = num();
      else if (key == "battery_capacity_j") s.battery_capacity = num();
      else if (key == "qos_min_bits_per_hz") s.qos_min = num();
      else if (key == "arrival_rate_per_s") s.arrival_rate = num();
      else if (key == "t_total_s") s.t_total = num();
      else known = false;
    } else if (section == "timeline") {
      if (key == "mode") {
        if (val == "explicit") explicit_mode = true;
        else if (val == "poisson") explicit_mode = false;
        else throw detail::ConfigError("line " + std::to_string(lineno) +
                                       ": timeline mode must be explicit or poisson");
      } else if (key == "initial_energy_j") {
        cfg.arrivals.initial_energy = num();
      } else if (key == "arrivals") {
        have_arrivals = true;
        for (auto piece : detail::split(val, ';')) {
          if (piece.empty()) continue;
          const auto colon = piece.find(':');
          if (colon == std::string_view::npos)
            throw detail::ConfigError("line " + std::to_string(lineno) +
                                      ": arrivals entries are t:amount");
          arrivals.emplace_back(detail::parse_number(piece.substr(0, colon), lineno),
                                detail::parse_number(piece.substr(colon + 1), lineno));
        }
      } else if (key == "amount") {
        const auto parts = detail::split(val, ':');
        if (parts.size() != 2)
          throw detail::ConfigError("line " + std::to_string(lineno) +
                                    ": amount is model:values");
        if (parts[0] == "constant")
          cfg.arrivals.amounts = AmountModel::constant(detail::parse_number(parts[1], lineno));
        else if (parts[0] == "uniform") {
          const auto range = detail::split(parts[1], ',');
          if (range.size() != 2)
            throw detail::ConfigError("line " + std::to_string(lineno) +
                                      ": uniform amount needs lo,hi");
          cfg.arrivals.amounts = AmountModel::uniform(detail::parse_number(range[0], lineno),
                                                      detail::parse_number(range[1], lineno));
        } else if (parts[0] == "exponential")
          cfg.arrivals.amounts =
              AmountModel::exponential(detail::parse_number(parts[1], lineno));
        else
          throw detail::ConfigError("line " + std::to_string(lineno) +
                                    ": amount model must be constant, uniform or exponential");
      } else if (key == "seed") {
        cfg.arrivals.seed = static_cast<std::uint64_t>(num());
      } else {
        known = false;
      }
    } else if (section == "solve") {
      auto& o = cfg.solve;
      if (key == "enforce_overflow") o.enforce_overflow = flag();
      else if (key == "max_outer") o.max_outer = static_cast<int>(num());
      else if (key == "tolerance") o.tol = num();
      else if (key == "inner_iters") o.inner_iters = static_cast<int>(num());
      else if (key == "polish_sweeps") o.polish_sweeps = static_cast<int>(num());
      else if (key == "step_scale") o.step_scale = num();
      else if (key == "rel_gap_exit") o.rel_gap_exit = num();
      else if (key == "pin_antennas") o.pin_antennas = static_cast<int>(num());
      else known = false;
    } else if (section == "sweep") {
      if (key == "mode") {
        if (val == "single_solve") cfg.sweep = SweepMode::SingleSolve;
        else if (val == "ee_vs_m") cfg.sweep = SweepMode::EeVsM;
        else if (val == "ee_vs_capacity") cfg.sweep = SweepMode::EeVsCapacity;
        else if (val == "ee_se_tradeoff") cfg.sweep = SweepMode::EeSeTradeoff;
        else throw detail::ConfigError("line " + std::to_string(lineno) +
                                       ": unknown sweep mode '" + std::string(val) + "'");
      } else if (key == "m_from") cfg.m_from = static_cast<int>(num());
      else if (key == "m_to") cfg.m_to = static_cast<int>(num());
      else if (key == "rf_values_w") cfg.rf_values = numbers();
      else if (key == "capacity_from_j") cfg.capacity_from = num();
      else if (key == "capacity_to_j") cfg.capacity_to = num();
      else if (key == "capacity_step_j") cfg.capacity_step = num();
      else if (key == "se_from") cfg.se_from = num();
      else if (key == "se_to") cfg.se_to = num();
      else if (key == "se_step") cfg.se_step = num();
      else if (key == "battery_values_j") cfg.battery_values = numbers();
      else known = false;
    } else if (section == "output") {
      if (key == "path") cfg.output_path = std::string(val);
      else known = false;
    } else {
      throw detail::ConfigError("line " + std::to_string(lineno) +
                                ": key outside of any section");
    }
    if (!known)
      throw detail::ConfigError("line " + std::to_string(lineno) + ": unknown key '" + key +
                                "' in section [" + section + "]");
  }

  if (explicit_mode || have_arrivals) {
    cfg.arrivals.explicit_arrivals = std::move(arrivals);
    if (!explicit_mode && have_arrivals)
      throw detail::ConfigError("arrivals list given but timeline mode is poisson");
  }
  cfg.arrivals.horizon = cfg.system.t_total;
  cfg.arrivals.rate = cfg.system.arrival_rate;
  cfg.validate();
  return cfg;
}

inline ScenarioConfig parse_config_string(const std::string& text) {
  std::istringstream in(text);
  return parse_config(in);
}

}  // namespace hees
