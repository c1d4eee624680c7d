#include <catch2/catch_amalgamated.hpp>

#include <cmath>
#include <random>

#include "hees/config.hpp"
#include "hees/model.hpp"
#include "hees/types.hpp"

using namespace hees;

namespace {

SystemParams table_params() {
  SystemParams p;
  p.total_antennas = 100;
  p.p_tx_max = dbm_to_watts(46.0);
  p.p_c = 160.8;
  p.p_rf = 0.16;
  p.pa_efficiency = 0.35;
  p.grid_weight = 0.01;
  p.p_grid_max = 300.0;
  p.battery_capacity = 1500.0;
  p.qos_min = 0.0;
  p.t_total = 7.0;
  return p;
}

Schedule one_epoch(const SystemParams& p, int m, PowerSplit split) {
  Schedule s;
  s.epochs.push_back({m, split});
  return s;
}

}  // namespace

TEST_CASE("spectral efficiency sums hand-evaluated epoch terms") {
  SystemParams p = table_params();
  EpochTimeline tl = EpochTimeline::from_arrivals(2.0, {{1.5, 0.0}}, 0.0);
  REQUIRE(tl.epochs() == 2);
  Schedule s;
  s.epochs.push_back({10, PowerSplit::grid_only(p, 2.0)});
  s.epochs.push_back({40, PowerSplit::grid_only(p, 5.0)});
  // log2(1 + (1+ln 10) * 2 * 10) * 1.5 and log2(1 + (1+ln 2.5) * 5 * 40) * 0.5
  REQUIRE(spectral_efficiency(s, tl, p) ==
          Catch::Approx(9.100803067452990 + 4.292966017766646).epsilon(1e-12));
}

TEST_CASE("spectral efficiency is zero without transmit power") {
  SystemParams p = table_params();
  EpochTimeline tl = EpochTimeline::single_epoch(7.0, 100.0);
  REQUIRE(spectral_efficiency(one_epoch(p, 50, PowerSplit::grid_only(p, 0.0)), tl, p) == 0.0);
}

TEST_CASE("weighted energy reproduces the all-grid textbook arithmetic") {
  SystemParams p = table_params();
  EpochTimeline tl = EpochTimeline::single_epoch(1.0, 0.0);
  // P_C + P_Tx/eta + 61 * P_RF at 46 dBm, one second, everything from the grid
  const auto s = one_epoch(p, 61, PowerSplit::grid_only(p, dbm_to_watts(46.0)));
  REQUIRE(weighted_energy(s, tl, p) == Catch::Approx(284.3049058724278).epsilon(1e-12));
}

TEST_CASE("weighted energy scales renewable consumption by the grid weight") {
  SystemParams p = table_params();
  EpochTimeline tl = EpochTimeline::single_epoch(1.0, 1e6);
  const double tx = 10.0;
  const auto renewable = one_epoch(p, 1, PowerSplit::hybrid(p, tx, 0.0, p.p_c, p.p_rf));
  const double raw = p.p_c + tx / p.pa_efficiency + p.p_rf;
  REQUIRE(weighted_energy(renewable, tl, p) == Catch::Approx(p.grid_weight * raw));
  const auto grid = one_epoch(p, 1, PowerSplit::grid_only(p, tx));
  REQUIRE(weighted_energy(grid, tl, p) == Catch::Approx(raw));
}

TEST_CASE("moving transmit supply from grid to battery strictly improves EE") {
  SystemParams p = table_params();
  EpochTimeline tl = EpochTimeline::single_epoch(1.0, 1000.0);
  const double tx = 20.0;
  for (double shift : {5.0, 10.0, 20.0}) {
    const auto before = one_epoch(p, 61, PowerSplit::hybrid(p, tx - shift, shift, p.p_c, p.p_rf));
    const auto after = one_epoch(p, 61, PowerSplit::hybrid(p, tx, 0.0, p.p_c, p.p_rf));
    REQUIRE(weighted_energy(after, tl, p) < weighted_energy(before, tl, p));
    REQUIRE(weighted_ee(after, tl, p) > weighted_ee(before, tl, p));
    REQUIRE(spectral_efficiency(after, tl, p) ==
            Catch::Approx(spectral_efficiency(before, tl, p)));
  }
}

TEST_CASE("weighted EE is invariant to uniform epoch-length scaling") {
  SystemParams p = table_params();
  Schedule s;
  s.epochs.push_back({61, PowerSplit::grid_only(p, 5.0)});
  s.epochs.push_back({30, PowerSplit::grid_only(p, 1.0)});
  const auto tl1 = EpochTimeline::from_arrivals(3.0, {{1.0, 50.0}}, 10.0);
  const auto tl2 = EpochTimeline::from_arrivals(6.0, {{2.0, 50.0}}, 10.0);
  REQUIRE(weighted_ee(s, tl1, p) == Catch::Approx(weighted_ee(s, tl2, p)).epsilon(1e-12));
}

TEST_CASE("weighted EE raises a domain error when nothing is consumed") {
  SystemParams p = table_params();
  p.p_c = 0.0;
  p.p_rf = 0.0;
  EpochTimeline tl = EpochTimeline::single_epoch(1.0, 0.0);
  REQUIRE_THROWS_AS(weighted_ee(one_epoch(p, 1, PowerSplit::grid_only(p, 0.0)), tl, p),
                    std::domain_error);
}

TEST_CASE("spectral efficiency and weighted energy are additive over epochs") {
  SystemParams p = table_params();
  std::mt19937_64 gen(11);
  auto u = [&] { return (gen() >> 11) * 0x1.0p-53; };
  for (int trial = 0; trial < 20; ++trial) {
    const double t1 = 0.5 + 2.0 * u();
    const double t2 = 0.5 + 2.0 * u();
    Schedule a, b, joint;
    a.epochs.push_back({1 + static_cast<int>(99 * u()), PowerSplit::grid_only(p, 30.0 * u())});
    b.epochs.push_back({1 + static_cast<int>(99 * u()), PowerSplit::grid_only(p, 30.0 * u())});
    joint.epochs = {a.epochs[0], b.epochs[0]};
    const auto tla = EpochTimeline::single_epoch(t1, 0.0);
    const auto tlb = EpochTimeline::single_epoch(t2, 0.0);
    const auto tlj = EpochTimeline::from_arrivals(t1 + t2, {{t1, 0.0}}, 0.0);
    REQUIRE(spectral_efficiency(joint, tlj, p) ==
            Catch::Approx(spectral_efficiency(a, tla, p) + spectral_efficiency(b, tlb, p)));
    REQUIRE(weighted_energy(joint, tlj, p) ==
            Catch::Approx(weighted_energy(a, tla, p) + weighted_energy(b, tlb, p)));
  }
}

TEST_CASE("length mismatch between schedule and timeline is an error") {
  SystemParams p = table_params();
  EpochTimeline tl = EpochTimeline::single_epoch(1.0, 0.0);
  Schedule s;
  s.epochs.assign(2, {1, PowerSplit::grid_only(p, 0.0)});
  REQUIRE_THROWS_AS(spectral_efficiency(s, tl, p), std::invalid_argument);
  REQUIRE_THROWS_AS(weighted_energy(s, tl, p), std::invalid_argument);
  REQUIRE_THROWS_AS(check_feasibility(s, tl, p), std::invalid_argument);
}

TEST_CASE("zero-power schedule is feasible exactly when the splits hold") {
  SystemParams p = table_params();
  p.qos_min = 0.0;
  EpochTimeline tl = EpochTimeline::single_epoch(1.0, 0.0);
  const auto good = one_epoch(p, 1, PowerSplit::grid_only(p, 0.0));
  REQUIRE(check_feasibility(good, tl, p).feasible());

  auto bad = good;
  bad[0].power.circuit_grid = p.p_c / 2.0;  // breaks the circuit equality
  const auto rep = check_feasibility(bad, tl, p);
  REQUIRE_FALSE(rep.feasible());
  REQUIRE_FALSE(rep.circuit_split().satisfied);
  REQUIRE(rep.circuit_split().margin == Catch::Approx(p.p_c / 2.0));
}

TEST_CASE("drawing renewable energy before any arrival violates causality") {
  SystemParams p = table_params();
  auto tl = EpochTimeline::from_arrivals(2.0, {{1.0, 500.0}}, 0.0);
  Schedule s;
  s.epochs.push_back({1, PowerSplit::hybrid(p, 3.5, 0.0, 0.0, 0.0)});  // 10 J drained
  s.epochs.push_back({1, PowerSplit::grid_only(p, 0.0)});
  const auto rep = check_feasibility(s, tl, p);
  REQUIRE_FALSE(rep.causality().satisfied);
  REQUIRE(rep.causality().epoch == 0);
  REQUIRE(rep.causality().margin == Catch::Approx(10.0));
}

TEST_CASE("hand-built two-epoch instance overflows a one-joule battery") {
  SystemParams p = table_params();
  p.battery_capacity = 1.0;
  auto tl = EpochTimeline::from_arrivals(2.0, {{1.0, 3.0}}, 0.5);
  Schedule s;
  // epoch 1 drains 0.25 J renewable, then 3 J arrive on top of 0.25 J
  s.epochs.push_back({1, PowerSplit::hybrid(p, 0.25 * p.pa_efficiency, 0.0, 0.0, 0.0)});
  s.epochs.push_back({1, PowerSplit::grid_only(p, 0.0)});
  const auto rep = check_feasibility(s, tl, p);
  REQUIRE_FALSE(rep.overflow().satisfied);
  REQUIRE(rep.overflow().epoch == 1);
  REQUIRE(rep.overflow().margin == Catch::Approx(0.5 + 3.0 - 0.25 - 1.0));

  const auto relaxed = check_feasibility(s, tl, p, {.enforce_overflow = false});
  REQUIRE(relaxed.feasible());
  REQUIRE_FALSE(relaxed.overflow().checked);
}

TEST_CASE("scaling renewable components down never breaks causality") {
  SystemParams p = table_params();
  std::mt19937_64 gen(5);
  auto u = [&] { return (gen() >> 11) * 0x1.0p-53; };
  for (int trial = 0; trial < 40; ++trial) {
    auto tl = EpochTimeline::from_arrivals(3.0, {{1.0, 400.0 * u()}, {2.0, 400.0 * u()}},
                                           300.0 * u());
    Schedule s;
    double level = tl.initial_energy;
    for (std::size_t i = 0; i < 3; ++i) {
      level += tl.harvested[i];
      const double tx_e = std::min(p.p_tx_max, p.pa_efficiency * level * u());
      s.epochs.push_back({1 + static_cast<int>(99 * u()),
                          PowerSplit::hybrid(p, tx_e, 0.0, 0.0, 0.0)});
      level -= tx_e / p.pa_efficiency;
    }
    if (!check_feasibility(s, tl, p).causality().satisfied) continue;
    const double kappa = u();
    Schedule scaled = s;
    for (auto& d : scaled.epochs) {
      d.power.tx_renewable *= kappa;
      d.power.tx_grid += 0.0;
      d.power.circuit_renewable *= kappa;
      d.power.circuit_grid = p.p_c - d.power.circuit_renewable;
      d.power.rf_renewable *= kappa;
      d.power.rf_grid = p.p_rf - d.power.rf_renewable;
    }
    REQUIRE(check_feasibility(scaled, tl, p).causality().satisfied);
  }
}

TEST_CASE("QoS margin reports the shortfall") {
  SystemParams p = table_params();
  p.qos_min = 5.0;
  EpochTimeline tl = EpochTimeline::single_epoch(1.0, 0.0);
  const auto s = one_epoch(p, 100, PowerSplit::grid_only(p, 0.1));
  const auto rep = check_feasibility(s, tl, p);
  const double se = spectral_efficiency(s, tl, p);
  REQUIRE_FALSE(rep.qos().satisfied);
  REQUIRE(rep.qos().margin == Catch::Approx(5.0 - se));
}
