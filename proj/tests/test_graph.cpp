#include "opp/graph.hpp"

#include "test_util.hpp"

#include <doctest.h>

#include <functional>
#include <set>

using namespace opp;
using namespace opp::graph;

TEST_CASE("graph counts") {
  SUBCASE("FW closed forms") {
    auto g = build_graph(3, 4, Symmetry::FW, false);
    CHECK(g.vertex_count() == 15);
    CHECK(g.edge_count() == 16);
    auto g2 = build_graph(2, 2, Symmetry::FW, false);
    CHECK(g2.vertex_count() == 6);
    CHECK(g2.edge_count() == 4);
    for (int N = 2; N <= 7; ++N)
      for (int k = 2; k <= 12; k += 2) {
        auto gg = build_graph(N, k, Symmetry::FW, false);
        CHECK(gg.vertex_count() == N * (k + 1));
        CHECK(gg.edge_count() == 2 * (N - 1) * k);
      }
  }
  SUBCASE("reference QW unipolar path count") {
    auto g = build_graph(5, 24, Symmetry::QW, true);
    CHECK(count_paths(g) == 16);
    auto paths = enumerate_paths(g);
    CHECK(paths.size() == 16);
    std::vector<int> target{3, 4, 5, 4, 5, 4, 5};
    bool found = false;
    for (const auto& p : paths) found |= p == target;
    CHECK(found);
  }
  SUBCASE("QW needs odd N") {
    CHECK_THROWS_AS(build_graph(4, 8, Symmetry::QW, false),
                    std::invalid_argument);
  }
}

TEST_CASE("path enumeration") {
  SUBCASE("N=2 k=2 FW periodic paths") {
    auto g = build_graph(2, 2, Symmetry::FW, false);
    auto paths = enumerate_paths(g);
    REQUIRE(paths.size() == 2);
    CHECK(paths[0] == std::vector<int>{1, 2, 1});
    CHECK(paths[1] == std::vector<int>{2, 1, 2});
  }
  SUBCASE("unipolar HW keeps the nonnegative half") {
    auto g = build_graph(3, 4, Symmetry::HW, true);
    auto paths = enumerate_paths(g);
    CHECK_FALSE(paths.empty());
    for (const auto& p : paths)
      for (int n : p) CHECK(n >= 2);
  }
  SUBCASE("FW enumeration matches a brute-force walker") {
    for (int N : {2, 3, 4})
      for (int k : {2, 4, 6, 8}) {
        auto g = build_graph(N, k, Symmetry::FW, false);
        // brute force: depth-first over raw steps
        std::uint64_t count = 0;
        std::function<void(int, int, int)> walk = [&](int n0, int n, int i) {
          if (i == k) {
            count += n == n0;
            return;
          }
          if (n > 1) walk(n0, n - 1, i + 1);
          if (n < N) walk(n0, n + 1, i + 1);
        };
        for (int n0 = 1; n0 <= N; ++n0) walk(n0, n0, 0);
        CHECK(count_paths(g) == count);
        CHECK(enumerate_paths(g).size() == count);
      }
  }
}

TEST_CASE("dwell tables") {
  LevelSet L3 = testutil::three_levels();
  SUBCASE("constant pattern has a single full dwell") {
    auto g = build_graph(3, 0, Symmetry::FW, false);
    auto t = pattern_to_dwell(PulsePattern(2), L3, g);
    CHECK(t.at(2, 0) == doctest::Approx(kTwoPi));
    CHECK(t.mass() == doctest::Approx(kTwoPi));
  }
  SUBCASE("figure pattern occupies exactly its path") {
    auto g = build_graph(3, 4, Symmetry::FW, false);
    Eigen::VectorXi n(5);
    n << 2, 3, 2, 1, 2;
    Eigen::VectorXd a(4);
    a << 1.0, 2.0, 4.0, 5.5;
    PulsePattern p(n, a);
    auto t = pattern_to_dwell(p, L3, g);
    CHECK(t.at(2, 0) == doctest::Approx(1.0));
    CHECK(t.at(3, 1) == doctest::Approx(1.0));
    CHECK(t.at(2, 2) == doctest::Approx(2.0));
    CHECK(t.at(1, 3) == doctest::Approx(1.5));
    CHECK(t.at(2, 4) == doctest::Approx(kTwoPi - 5.5));
    int positive = 0;
    for (int i = 0; i <= 4; ++i)
      for (int lev = 1; lev <= 3; ++lev) positive += t.at(lev, i) > 0.0;
    CHECK(positive == 5);
    // pure-table support properties
    for (int i = 0; i <= 4; ++i) {
      int per_stage = 0;
      for (int lev = 1; lev <= 3; ++lev) per_stage += t.at(lev, i) > 0.0;
      CHECK(per_stage == 1);
    }
  }
  SUBCASE("mix is the convex combination") {
    auto g = build_graph(3, 4, Symmetry::FW, false);
    Eigen::VectorXi n1(5), n2(5);
    n1 << 2, 3, 2, 1, 2;
    n2 << 1, 2, 3, 2, 1;
    Eigen::VectorXd a1(4), a2(4);
    a1 << 1.0, 2.0, 4.0, 5.5;
    a2 << 0.5, 1.5, 3.0, 4.5;
    auto t1 = pattern_to_dwell(PulsePattern(n1, a1), L3, g);
    auto t2 = pattern_to_dwell(PulsePattern(n2, a2), L3, g);
    Eigen::VectorXd w(2);
    w << 0.6, 0.4;
    auto mix = mix_dwell({t1, t2}, w);
    CHECK(mix.mass() == doctest::Approx(kTwoPi));
    CHECK(mix.at(2, 0) == doctest::Approx(0.6 * 1.0));
    CHECK(mix.at(1, 0) == doctest::Approx(0.4 * 0.5));
    Eigen::VectorXd w1(2);
    w1 << 1.0, 0.0;
    auto only = mix_dwell({t1, t2}, w1);
    CHECK((only.xi - t1.xi).cwiseAbs().maxCoeff() == 0.0);
    Eigen::VectorXd bad(2);
    bad << 0.6, 0.6;
    CHECK_THROWS_AS(mix_dwell({t1, t2}, bad), std::invalid_argument);
    // extraction from the mixture yields a valid pattern
    auto rec = extract_pattern(mix, g);
    CHECK(rec.switch_count() == 4);
  }
}

TEST_CASE("extraction") {
  LevelSet L = testutil::five_levels();
  SUBCASE("pure tables round-trip exactly") {
    for (auto sym : {Symmetry::FW, Symmetry::HW, Symmetry::QW}) {
      auto g = build_graph(5, 16, sym, false);
      for (std::uint64_t seed = 1; seed <= 40; ++seed) {
        PulsePattern p = testutil::random_feasible_pattern(g, L, 0.02, seed);
        auto t = pattern_to_dwell(p, L, g);
        // pure-table support: one vertex per stage, adjacent stages step by 1
        int prev_level = 0;
        for (int i = 0; i <= g.horizon; ++i) {
          int count = 0, level = 0;
          for (int n = 1; n <= 5; ++n)
            if (t.at(n, i) > 0.0) {
              ++count;
              level = n;
            }
          CHECK(count == 1);
          if (i > 0) CHECK(std::abs(level - prev_level) == 1);
          prev_level = level;
        }
        PulsePattern rec = extract_pattern(t, g);
        CHECK(rec.level_indices() == p.level_indices());
        CHECK((rec.angles() - p.angles()).cwiseAbs().maxCoeff() <= 1e-15);
      }
    }
  }
  SUBCASE("deterministic tie-breaking toward the smaller level") {
    auto g = build_graph(3, 2, Symmetry::FW, false);
    DwellTable t;
    t.xi = Eigen::MatrixXd::Zero(3, 3);
    t.at(1, 0) = 2.0;
    t.at(3, 0) = 2.0;  // tie at stage 0
    t.at(2, 1) = 1.0;
    t.at(1, 2) = 1.0;
    t.at(3, 2) = 1.0;  // tie at the terminal stage, resolved by periodicity
    PulsePattern rec = extract_pattern(t, g);
    CHECK(rec.level_index(0) == 1);
    CHECK(rec.level_index(2) == 1);
  }
  SUBCASE("all-zero table fails") {
    auto g = build_graph(3, 2, Symmetry::FW, false);
    DwellTable t;
    t.xi = Eigen::MatrixXd::Zero(3, 3);
    CHECK_THROWS(extract_pattern(t, g));
  }
}

TEST_CASE("dwell validation") {
  LevelSet L = testutil::five_levels();
  const double theta = kPi / 100.0;
  auto g = build_graph(5, 12, Symmetry::FW, false);
  SUBCASE("feasible pattern passes") {
    PulsePattern p = testutil::random_feasible_pattern(g, L, theta, 5);
    auto rep = validate_dwell(pattern_to_dwell(p, L, g), g, theta);
    CHECK(rep.nonnegative);
    CHECK(rep.mass_ok);
    CHECK(rep.interlocking_ok);
  }
  SUBCASE("starved stage is reported") {
    PulsePattern p = testutil::random_feasible_pattern(g, L, theta, 6);
    auto t = pattern_to_dwell(p, L, g);
    // shrink stage 3 below theta, dumping the mass on stage 4
    for (int lev = 1; lev <= 5; ++lev) {
      if (t.at(lev, 3) > 0.0) {
        const double excess = t.at(lev, 3) - theta / 2.0;
        t.at(lev, 3) = theta / 2.0;
        t.at(p.level_index(4), 4) += excess;
        break;
      }
    }
    auto rep = validate_dwell(t, g, theta);
    CHECK_FALSE(rep.interlocking_ok);
    REQUIRE_FALSE(rep.failing_stages.empty());
    CHECK(rep.failing_stages[0] == 3);
  }
  SUBCASE("mixtures of feasible tables stay feasible") {
    PulsePattern p1 = testutil::random_feasible_pattern(g, L, theta, 7);
    PulsePattern p2 = testutil::random_feasible_pattern(g, L, theta, 8);
    Eigen::VectorXd w(2);
    w << 0.3, 0.7;
    auto mix = mix_dwell(
        {pattern_to_dwell(p1, L, g), pattern_to_dwell(p2, L, g)}, w);
    auto rep = validate_dwell(mix, g, theta);
    CHECK(rep.nonnegative);
    CHECK(rep.mass_ok);
    CHECK(rep.interlocking_ok);
  }
}

TEST_CASE("qw half extension") {
  auto q = build_graph(5, 24, Symmetry::QW, true);
  auto g = extend_qw_to_half(q);
  CHECK(g.horizon == 12);
  CHECK(g.span == doctest::Approx(kPi));
  CHECK(g.qw_as_half);
  LevelSet L = testutil::five_levels();
  PulsePattern p = testutil::reference_k24_pattern();
  auto t = pattern_to_dwell(p, L, g);
  CHECK(t.mass() == doctest::Approx(kPi));
  PulsePattern rec = extract_pattern(t, g);
  CHECK(rec.level_indices() == p.level_indices());
  CHECK((rec.angles() - p.angles()).cwiseAbs().maxCoeff() <= 1e-15);
}
