#include "opp/she.hpp"

#include "opp/energy.hpp"
#include "test_util.hpp"

#include <doctest.h>

#include <cmath>

using namespace opp;
using namespace opp::she;

TEST_CASE("single-angle closed form") {
  LevelSet L3 = testutil::three_levels();
  Eigen::VectorXi nq(2);
  nq << 2, 3;
  SheSpec spec = make_standard_spec(nq, 0.9, 4, L3, kPi / 100.0);
  CHECK(spec.eliminated_orders.empty());
  auto sols = solve_she(spec, 16);
  REQUIRE(sols.size() == 1);
  // (4/pi) cos(a) = 0.9
  CHECK(sols[0].alpha_quarter[0] ==
        doctest::Approx(std::acos(0.9 * kPi / 4.0)).epsilon(1e-10));
  CHECK(sols[0].residual <= 1e-10);
  CHECK(sols[0].theta_feasible);
}

TEST_CASE("k=28 reference instance") {
  LevelSet L = testutil::five_levels();
  Eigen::VectorXi nq(8);
  nq << 3, 4, 3, 4, 5, 4, 5, 4;
  SheSpec spec = make_standard_spec(nq, 0.8, 28, L, kPi / 100.0);
  CHECK(spec.eliminated_orders ==
        std::vector<int>{3, 5, 7, 9, 11, 13});
  auto sols = solve_she(spec, 400);
  REQUIRE_FALSE(sols.empty());
  Eigen::VectorXd target(7);
  target << 0.1963, 0.2993, 0.4225, 0.9551, 1.0809, 1.2748, 1.4914;
  const SheSolution* hit = nullptr;
  for (const auto& s : sols)
    if ((s.alpha_quarter - target).cwiseAbs().maxCoeff() < 1e-3) hit = &s;
  REQUIRE(hit != nullptr);
  CHECK(hit->residual <= 1e-10);

  // residuals re-evaluated through the Fourier pipeline
  PulsePattern p = she_pattern(spec, *hit);
  auto s = fourier_coefficients(p, L, 13);
  CHECK(s.b[0] == doctest::Approx(0.8).epsilon(1e-9));
  for (int q : spec.eliminated_orders)
    CHECK(std::abs(s.b[q - 1]) < 1e-9);

  // reference energy of this root, evaluated at tau = 1
  const double e =
      energy::signal_energy(p, L, LoadModel::normalized(1.0)).total();
  CHECK(std::abs(e - (1.0 + 5.950e-3)) < 1e-4);

  // quadratic tail convergence on the logged residuals
  const auto& hist = hit->residual_history;
  REQUIRE(hist.size() >= 3);
  double rate = 0.0;
  for (size_t i = 2; i + 1 < hist.size(); ++i) {
    if (hist[i + 1] < 1e-15 || hist[i - 1] > 5e-2) continue;
    rate = std::max(rate, std::log(hist[i + 1] / hist[i]) /
                              std::log(hist[i] / hist[i - 1]));
  }
  CHECK(rate >= 1.8);
}

namespace {

// SHE over every admissible quarter path, as the pipeline runs it.
std::vector<SheSolution> solve_all_paths(int k, double M,
                                         const LevelSet& levels, double theta,
                                         int starts) {
  auto g = graph::build_graph(levels.size(), k, Symmetry::QW, true);
  std::vector<SheSolution> all;
  for (const auto& path : graph::enumerate_paths(g, 100000)) {
    if (path[0] != g.designated_start) continue;
    Eigen::VectorXi nq(static_cast<long>(path.size()));
    for (size_t i = 0; i < path.size(); ++i)
      nq[static_cast<long>(i)] = path[i];
    auto spec = make_standard_spec(nq, M, k, levels, theta);
    for (auto& s : solve_she(spec, starts)) all.push_back(std::move(s));
  }
  return all;
}

}  // namespace

TEST_CASE("known success and failure pattern over k") {
  LevelSet L = testutil::five_levels();
  const double theta = kPi / 100.0;
  CHECK(solve_all_paths(20, 0.8, L, theta, 150).empty());
  CHECK(solve_all_paths(24, 0.8, L, theta, 150).empty());
  auto ok = solve_all_paths(12, 0.8, L, theta, 150);
  REQUIRE(ok.size() == 1);
  CHECK(ok[0].theta_feasible);
}

TEST_CASE("k=40 low-modulation root violates interlocking") {
  LevelSet L = testutil::five_levels();
  Eigen::VectorXi nq(11);
  nq << 3, 4, 3, 4, 3, 4, 3, 4, 3, 4, 3;
  SheSpec spec = make_standard_spec(nq, 0.05, 40, L, kPi / 100.0);
  auto sols = solve_she(spec, 120);
  REQUIRE_FALSE(sols.empty());
  double min_gap = 1e9;
  for (const auto& s : sols) min_gap = std::min(min_gap, s.min_gap);
  CHECK(min_gap == doctest::Approx(0.0080).epsilon(0.08));
  for (const auto& s : sols)
    if (s.min_gap == min_gap) {
      CHECK_FALSE(s.theta_feasible);
      DeviceSpec dev = DeviceSpec::make(50.0, 100e-6, L);
      DesignSpec des;
      des.k = 40;
      des.symmetry = Symmetry::QW;
      des.unipolar = true;
      auto rep = check_constraints(she_pattern(spec, s), dev, des);
      const auto* c = rep.find("interlocking");
      REQUIRE(c != nullptr);
      CHECK_FALSE(c->pass);
    }
}

TEST_CASE("square-system validation") {
  LevelSet L = testutil::five_levels();
  Eigen::VectorXi nq(3);
  nq << 3, 4, 5;
  SheSpec bad = make_standard_spec(nq, 0.8, 8, L, kPi / 100.0);
  bad.eliminated_orders.push_back(5);  // now overdetermined
  CHECK_THROWS_AS(solve_she(bad, 4), std::invalid_argument);
}
