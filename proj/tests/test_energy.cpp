#include "opp/energy.hpp"

#include "test_util.hpp"

#include <doctest.h>

#include <cmath>

using namespace opp;
using namespace opp::energy;

namespace {

// Direct exponential grouping of the tau > 0 per-interval pulse energy,
// (E_d1 + E_d2 - E_0) / (2 tau^3) with the level active on the interval.
double printed_mixed_pulse_segment(double ia, double u, double d, double tau) {
  const double e0 = (u - tau * ia) * (3.0 * u + tau * ia);
  const double ed1 = 2.0 * u * u * tau * d;
  const double ed2 = std::exp(-2.0 * tau * d) * (u - tau * ia) *
                     (tau * ia + u * (4.0 * std::exp(tau * d) - 1.0));
  return (ed1 + ed2 - e0) / (2.0 * tau * tau * tau);
}

}  // namespace

TEST_CASE("periodic initial current") {
  LevelSet L = testutil::five_levels();
  SUBCASE("constant zero pattern") {
    CHECK(periodic_initial_current(PulsePattern(3), L,
                                   LoadModel::normalized(1.0)) ==
          doctest::Approx(0.0));
  }
  SUBCASE("square wave zero-mean triangle") {
    LevelSet L2{-1.0, 1.0};
    Eigen::VectorXi n(3);
    n << 2, 1, 2;
    Eigen::VectorXd a(2);
    a << kPi, kTwoPi - 1e-13;
    // u = +1 on [0, pi), -1 after: I0 = -pi/2 for the zero-mean triangle.
    PulsePattern p(n, a);
    const double i0 = periodic_initial_current(p, L2, LoadModel::normalized(0.0));
    CHECK(i0 == doctest::Approx(-kPi / 2.0).epsilon(1e-9));
  }
  SUBCASE("reference candidate roll-out closes the period") {
    PulsePattern p = testutil::reference_k24_pattern();
    LoadModel load = LoadModel::normalized(0.5);
    const double i0 = periodic_initial_current(p, L, load);
    auto traj = make_trajectory(p, L, load, i0);
    CHECK(std::abs(traj.nodes[traj.nodes.size() - 1] - i0) < 1e-10);
  }
  SUBCASE("nonzero dc with tau = 0 fails") {
    Eigen::VectorXi n(3);
    n << 4, 5, 4;
    Eigen::VectorXd a(2);
    a << 1.0, 2.0;
    PulsePattern p(n, a);
    CHECK_THROWS_AS(
        periodic_initial_current(p, L, LoadModel::normalized(0.0)),
        std::domain_error);
  }
}

TEST_CASE("closed-form energy vs quadrature oracle") {
  LevelSet L = testutil::five_levels();
  SUBCASE("constant zero pattern") {
    PulsePattern p(3);
    auto traj = make_trajectory(p, L, LoadModel::normalized(0.0), 0.0);
    CHECK(energy_pure_reactance(traj, L, External{}).total() ==
          doctest::Approx(0.0));
    auto traj2 = make_trajectory(p, L, LoadModel::normalized(1.0), 0.0);
    CHECK(energy_mixed(traj2, L, External{}).total() == doctest::Approx(0.0));
  }
  SUBCASE("flat branch: constant zero level with offset current") {
    PulsePattern p(3);
    auto traj = make_trajectory(p, L, LoadModel::normalized(0.0), 0.7);
    CHECK(energy_pure_reactance(traj, L, External{}).pulse ==
          doctest::Approx(kTwoPi * 0.49).epsilon(1e-14));
  }
  SUBCASE("square wave energy pi^3/6") {
    LevelSet L2{-1.0, 1.0};
    Eigen::VectorXi n(3);
    n << 2, 1, 2;
    Eigen::VectorXd a(2);
    a << kPi, kTwoPi - 1e-13;
    PulsePattern p(n, a);
    const double e = energy_numeric_oracle(p, L2, LoadModel::normalized(0.0),
                                           -kPi / 2.0, External{}, 1e-12);
    CHECK(e == doctest::Approx(kPi * kPi * kPi / 6.0).epsilon(1e-8));
  }
  SUBCASE("reference candidate value") {
    PulsePattern p = testutil::reference_k24_pattern();
    LoadModel load = LoadModel::normalized(0.5);
    auto e = signal_energy(p, L, load);
    const double i0 = periodic_initial_current(p, L, load);
    const double num = energy_numeric_oracle(p, L, load, i0, External{}, 1e-12);
    CHECK(e.total() == doctest::Approx(num).epsilon(1e-12));
    // The four-decimal recorded angles give 1.6078; the exact-fundamental
    // candidate reaches 1.6092 (acceptance restores it).
    CHECK(e.total() == doctest::Approx(1.6092).epsilon(1.2e-3));
  }
  SUBCASE("random patterns, both regimes, external source") {
    auto gfw = graph::build_graph(5, 8, Symmetry::FW, false);
    auto ghw = graph::build_graph(5, 8, Symmetry::HW, false);
    int idx = 0;
    for (double tau : {0.0, 0.5, 5.0}) {
      for (double A : {0.0, 0.8}) {
        const LoadModel load = LoadModel::normalized(tau, A, 0.3);
        for (std::uint64_t seed : {100ull, 101ull}) {
          const bool hw = tau == 0.0 || (idx % 2 == 0);
          PulsePattern p = testutil::random_feasible_pattern(
              hw ? ghw : gfw, L, 0.03, seed + 10 * idx);
          ++idx;
          const double i0 = periodic_initial_current(p, L, load);
          auto traj = make_trajectory(p, L, load, i0);
          const External ext{A, 0.3};
          const double closed = tau == 0.0
                                    ? energy_pure_reactance(traj, L, ext).total()
                                    : energy_mixed(traj, L, ext).total();
          const double num =
              energy_numeric_oracle(p, L, load, i0, ext, 1e-12);
          CHECK(closed ==
                doctest::Approx(num).epsilon(std::max(1e-9, 1e-9 * num)));
        }
      }
    }
  }
  SUBCASE("printed tau > 0 grouping matches the stable form") {
    auto g = graph::build_graph(5, 8, Symmetry::FW, false);
    PulsePattern p = testutil::random_feasible_pattern(g, L, 0.03, 7);
    const LoadModel load = LoadModel::normalized(1.3);
    const double i0 = periodic_initial_current(p, L, load);
    auto traj = make_trajectory(p, L, load, i0);
    const Eigen::VectorXd u = p.level_values(L);
    double printed = 0.0;
    double lo = 0.0;
    for (int i = 0; i <= p.switch_count(); ++i) {
      const double hi = i == p.switch_count() ? kTwoPi : p.angle(i + 1);
      printed += printed_mixed_pulse_segment(traj.nodes[i], u[i], hi - lo,
                                             load.tau);
      lo = hi;
    }
    CHECK(energy_mixed(traj, L, External{}).pulse ==
          doctest::Approx(printed).epsilon(1e-11));
  }
  SUBCASE("regime continuity at tiny tau") {
    auto g = graph::build_graph(5, 12, Symmetry::HW, false);
    for (std::uint64_t seed : {3ull, 4ull, 5ull}) {
      PulsePattern p = testutil::random_feasible_pattern(g, L, 0.03, seed);
      auto e0 = signal_energy(p, L, LoadModel::normalized(0.0));
      auto e1 = signal_energy(p, L, LoadModel::normalized(1e-8));
      CHECK(e1.total() == doctest::Approx(e0.total()).epsilon(1e-4));
    }
  }
  SUBCASE("external energy closed form") {
    for (double tau : {0.0, 0.7, 3.0}) {
      const double A = 0.8, phi = 0.4;
      PulsePattern p(3);
      const LoadModel load = LoadModel::normalized(tau, A, phi);
      auto e = signal_energy(p, L, load);
      CHECK(e.ext == doctest::Approx(kPi * A * A / (tau * tau + 1.0))
                         .epsilon(1e-14));
      const double num = energy_numeric_oracle(p, L, load, 0.0,
                                               External{A, phi}, 1e-12);
      CHECK(e.total() == doctest::Approx(num).epsilon(1e-10));
    }
  }
  SUBCASE("doubling levels quadruples the pulse energy") {
    auto g = graph::build_graph(3, 8, Symmetry::HW, false);
    LevelSet L1{-1.0, 0.0, 1.0};
    LevelSet L2{-2.0, 0.0, 2.0};
    PulsePattern p = testutil::random_feasible_pattern(g, L1, 0.03, 77);
    auto e1 = signal_energy(p, L1, LoadModel::normalized(0.0));
    auto e2 = signal_energy(p, L2, LoadModel::normalized(0.0));
    CHECK(e2.pulse == doctest::Approx(4.0 * e1.pulse).epsilon(1e-12));
  }
}

TEST_CASE("wrong regime errors") {
  LevelSet L = testutil::five_levels();
  PulsePattern p(3);
  auto t0 = make_trajectory(p, L, LoadModel::normalized(0.0), 0.0);
  auto t1 = make_trajectory(p, L, LoadModel::normalized(1.0), 0.0);
  CHECK_THROWS_AS(energy_mixed(t0, L, External{}), std::domain_error);
  CHECK_THROWS_AS(energy_pure_reactance(t1, L, External{}), std::domain_error);
}

TEST_CASE("analytic gradient matches finite differences") {
  LevelSet L = testutil::five_levels();
  auto gfw = graph::build_graph(5, 10, Symmetry::FW, false);
  auto ghw = graph::build_graph(5, 12, Symmetry::HW, false);
  for (double tau : {0.0, 1.0}) {
    const LoadModel load = LoadModel::normalized(tau, 0.6, 0.2);
    const External ext{0.6, 0.2};
    for (std::uint64_t seed : {41ull, 42ull}) {
      // tau = 0 needs a zero-mean waveform; HW patterns guarantee it.
      PulsePattern p = testutil::random_feasible_pattern(
          tau == 0.0 ? ghw : gfw, L, 0.05, seed);
      Eigen::VectorXd grad;
      grad = energy_gradient(p, L, load, ext);
      for (int j = 1; j <= p.switch_count(); ++j) {
        const double h = 1e-6;
        auto shifted = [&](double delta) {
          Eigen::VectorXd a = p.angles();
          a[j - 1] += delta;
          if (tau == 0.0) {
            // restore the dc balance by moving a same-step angle opposite
            const Eigen::VectorXd u = p.level_values(L);
            const double duj = u[j] - u[j - 1];
            for (int r = 1; r <= p.switch_count(); ++r) {
              if (r == j) continue;
              const double dur = u[r] - u[r - 1];
              if (dur == duj) {
                a[r - 1] -= delta;
                return std::pair<PulsePattern, int>(
                    PulsePattern(p.level_indices(), a), r);
              }
            }
          }
          return std::pair<PulsePattern, int>(
              PulsePattern(p.level_indices(), a), 0);
        };
        auto [pp, partner] = shifted(h);
        auto [pm, partner2] = shifted(-h);
        const double ep = signal_energy(pp, L, load, ext).total();
        const double em = signal_energy(pm, L, load, ext).total();
        double expect = (ep - em) / (2.0 * h);
        double got = grad[j - 1];
        if (partner) got -= grad[partner - 1];
        CHECK(got == doctest::Approx(expect)
                         .epsilon(2e-5 * std::max(1.0, std::abs(expect))));
      }
    }
  }
}
