#pragma once

#include "opp/converter.hpp"
#include "opp/graph.hpp"

#include <cmath>
#include <functional>
#include <random>
#include <vector>

namespace opp::testutil {

inline LevelSet five_levels() { return LevelSet{-1.0, -0.5, 0.0, 0.5, 1.0}; }
inline LevelSet three_levels() { return LevelSet{-1.0, 0.0, 1.0}; }

/// Recorded reference candidate: k = 24, QW, five levels.
inline PulsePattern reference_k24_pattern() {
  Eigen::VectorXi nq(7);
  nq << 3, 4, 5, 4, 5, 4, 5;
  Eigen::VectorXd aq(6);
  aq << 0.3302, 0.9898, 1.0951, 1.2351, 1.3797, 1.4910;
  return expand_quarter_to_full(nq, aq, 5);
}

/// Uniformly sampled path through the graph followed by dwell angles that
/// respect the interlocking limits (interior stages >= theta, segment ends
/// >= theta/2 each). Deterministic in the seed.
inline PulsePattern random_feasible_pattern(const graph::TransitionGraph& g,
                                            const LevelSet& levels,
                                            double theta, std::uint64_t seed) {
  if (g.qw_as_half) {
    // Half-period graphs admit non-palindromic walks; genuine QW patterns
    // come from the quarter graph.
    return random_feasible_pattern(
        graph::build_graph(g.num_levels, g.k, Symmetry::QW, g.unipolar),
        levels, theta, seed);
  }
  std::mt19937_64 rng(seed);
  const int h = g.horizon;
  const int N = g.num_levels;

  // Path counts for uniform backward sampling. Quarter patterns must start
  // at the middle level even though the graph keeps the parity siblings.
  std::vector<int> starts = g.start_levels();
  if (g.symmetry == Symmetry::QW && g.designated_start > 0)
    starts = {g.designated_start};
  std::vector<std::vector<std::vector<double>>> ways;  // [start][stage][level]
  std::vector<double> totals;
  for (int n0 : starts) {
    std::vector<std::vector<double>> w(h + 1, std::vector<double>(N, 0.0));
    w[0][n0 - 1] = 1.0;
    for (int i = 1; i <= h; ++i)
      for (int n = 1; n <= N; ++n) {
        if (!g.has_vertex(n, i)) continue;
        double acc = 0.0;
        if (n > 1) acc += w[i - 1][n - 2];
        if (n < N) acc += w[i - 1][n];
        w[i][n - 1] = acc;
      }
    double total = 0.0;
    for (int n = 1; n <= N; ++n)
      if (g.terminal_admissible(n0, n)) total += w[h][n - 1];
    ways.push_back(std::move(w));
    totals.push_back(total);
  }
  double grand = 0.0;
  for (double t : totals) grand += t;
  if (!(grand > 0.0)) throw std::runtime_error("graph admits no paths");
  std::uniform_real_distribution<double> unif(0.0, 1.0);
  double pick = unif(rng) * grand;
  size_t si = 0;
  while (si + 1 < starts.size() && pick > totals[si]) pick -= totals[si++];
  const auto& w = ways[si];
  const int n0 = starts[si];

  std::vector<int> path(h + 1);
  {
    // terminal level proportional to path counts
    double r = unif(rng) * totals[si];
    int chosen = -1;
    for (int n = 1; n <= N; ++n) {
      if (!g.terminal_admissible(n0, n) || w[h][n - 1] <= 0.0) continue;
      chosen = n;
      if (r <= w[h][n - 1]) break;
      r -= w[h][n - 1];
    }
    if (chosen < 0) throw std::runtime_error("terminal sampling failed");
    path[h] = chosen;
  }
  for (int i = h; i >= 1; --i) {
    const int n = path[i];
    const double below = n > 1 ? w[i - 1][n - 2] : 0.0;
    const double above = n < N ? w[i - 1][n] : 0.0;
    path[i - 1] = unif(rng) * (below + above) <= below ? n - 1 : n + 1;
  }

  // Dwells: minimum gaps plus exponential leftovers scaled to the span. End
  // stages keep theta/2 each, which covers both the wrap-around rule and the
  // mirrored-segment rules.
  std::vector<double> mins(h + 1, theta);
  mins[0] = theta / 2.0;
  mins[h] = theta / 2.0;
  if (h == 0) mins[0] = 0.0;
  double reserved = 0.0;
  for (double m : mins) reserved += m;
  if (reserved >= g.span)
    throw std::runtime_error("interlocking leaves no room");
  std::exponential_distribution<double> expo(1.0);
  std::vector<double> extra(h + 1);
  double esum = 0.0;
  for (int i = 0; i <= h; ++i) esum += extra[i] = expo(rng) + 0.02;
  const double scale = (g.span - reserved) / esum;

  Eigen::VectorXd alpha(h);
  double acc = 0.0;
  for (int i = 0; i < h; ++i) {
    acc += mins[i] + scale * extra[i];
    alpha[i] = acc;
  }
  Eigen::VectorXi n(h + 1);
  for (int i = 0; i <= h; ++i) n[i] = path[i];

  switch (g.symmetry) {
    case Symmetry::FW:
      return PulsePattern(n, alpha);
    case Symmetry::HW:
      return expand_half_to_full(n, alpha, N);
    case Symmetry::QW:
      return g.qw_as_half ? expand_half_to_full(n, alpha, N)
                          : expand_quarter_to_full(n, alpha, N);
  }
  throw std::logic_error("unreachable");
}

/// Adaptive Simpson quadrature, independent of any library integration path.
/// The interval is pre-split at irrational ratios so symmetric integrands
/// cannot zero out every probe.
inline double quad(const std::function<double(double)>& f, double a, double b,
                   double tol = 1e-12) {
  std::function<double(double, double, double, double, double, double, int)>
      rec = [&](double lo, double hi, double flo, double fmid, double fhi,
                double whole, int depth) -> double {
    const double mid = 0.5 * (lo + hi);
    const double lmid = 0.5 * (lo + mid), rmid = 0.5 * (mid + hi);
    const double flm = f(lmid), frm = f(rmid);
    const double left = (mid - lo) / 6.0 * (flo + 4.0 * flm + fmid);
    const double right = (hi - mid) / 6.0 * (fmid + 4.0 * frm + fhi);
    const double delta = left + right - whole;
    if (depth <= 0 || std::abs(delta) <= 15.0 * tol)
      return left + right + delta / 15.0;
    return rec(lo, mid, flo, flm, fmid, left, depth - 1) +
           rec(mid, hi, fmid, frm, fhi, right, depth - 1);
  };
  if (b <= a) return 0.0;
  const double cuts[] = {0.0, 0.2763, 0.5417, 0.7841, 1.0};
  double acc = 0.0;
  for (int c = 0; c + 1 < 5; ++c) {
    const double lo = a + (b - a) * cuts[c];
    const double hi = a + (b - a) * cuts[c + 1];
    const double m = 0.5 * (lo + hi);
    const double fa = f(lo), fm = f(m), fb = f(hi);
    acc += rec(lo, hi, fa, fm, fb, (hi - lo) / 6.0 * (fa + 4.0 * fm + fb), 44);
  }
  return acc;
}

/// Piecewise quadrature that splits at the switching angles.
inline double quad_pattern(const PulsePattern& p,
                           const std::function<double(double)>& f,
                           double tol = 1e-12) {
  double acc = 0.0;
  double lo = 0.0;
  for (int i = 1; i <= p.switch_count(); ++i) {
    acc += quad(f, lo, p.angle(i), tol);
    lo = p.angle(i);
  }
  acc += quad(f, lo, kTwoPi, tol);
  return acc;
}

}  // namespace opp::testutil
