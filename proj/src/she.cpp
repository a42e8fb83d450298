#include "opp/she.hpp"

#include <algorithm>
#include <cmath>
#include <stdexcept>

namespace opp::she {

namespace {

std::uint64_t splitmix(std::uint64_t z) {
  z += 0x9e3779b97f4a7c15ull;
  z = (z ^ (z >> 30)) * 0xbf58476d1ce4e5b9ull;
  z = (z ^ (z >> 27)) * 0x94d049bb133111ebull;
  return z ^ (z >> 31);
}

double unit_double(std::uint64_t r) { return (r >> 11) * 0x1.0p-53; }

// For odd orders, b_q of the QW pattern reduces to a quarter sum:
// b_q = (4 / (q pi)) sum_i (u^i - u^{i-1}) cos(q a^i).
double quarter_b(const Eigen::VectorXd& du, const Eigen::VectorXd& alpha,
                 int q) {
  double acc = 0.0;
  for (int i = 0; i < alpha.size(); ++i)
    acc += du[i] * std::cos(q * alpha[i]);
  return 4.0 * acc / (q * kPi);
}

Eigen::MatrixXd she_jacobian(const SheSpec& spec, const Eigen::VectorXd& du,
                             const Eigen::VectorXd& alpha) {
  const int m = static_cast<int>(alpha.size());
  Eigen::MatrixXd J(m, m);
  auto fill_row = [&](int row, int q) {
    for (int i = 0; i < m; ++i)
      J(row, i) = -4.0 * du[i] * std::sin(q * alpha[i]) / kPi;
  };
  fill_row(0, 1);
  for (size_t e = 0; e < spec.eliminated_orders.size(); ++e)
    fill_row(static_cast<int>(e) + 1, spec.eliminated_orders[e]);
  return J;
}

bool ordered_interior(const Eigen::VectorXd& alpha) {
  for (int i = 0; i < alpha.size(); ++i) {
    if (!(alpha[i] > 0.0 && alpha[i] < kPi / 2.0)) return false;
    if (i > 0 && !(alpha[i] > alpha[i - 1])) return false;
  }
  return true;
}

}  // namespace

SheSpec make_standard_spec(const Eigen::VectorXi& quarter_levels, double M,
                           int k, const LevelSet& levels, double theta_lock) {
  SheSpec spec;
  spec.quarter_levels = quarter_levels;
  spec.b1_target = M;
  spec.k = k;
  spec.levels = levels;
  spec.theta_lock = theta_lock;
  const int m = k / 4;
  for (int q = 3, count = 0; count < m - 1; q += 2, ++count)
    spec.eliminated_orders.push_back(q);
  return spec;
}

Eigen::VectorXd she_residual(const SheSpec& spec,
                             const Eigen::VectorXd& alpha) {
  const int m = static_cast<int>(alpha.size());
  Eigen::VectorXd du(m);
  for (int i = 0; i < m; ++i)
    du[i] = spec.levels.value(spec.quarter_levels[i + 1]) -
            spec.levels.value(spec.quarter_levels[i]);
  Eigen::VectorXd r(m);
  r[0] = quarter_b(du, alpha, 1) - spec.b1_target;
  for (size_t e = 0; e < spec.eliminated_orders.size(); ++e)
    r[static_cast<long>(e) + 1] =
        quarter_b(du, alpha, spec.eliminated_orders[e]);
  return r;
}

PulsePattern she_pattern(const SheSpec& spec, const SheSolution& sol) {
  return expand_quarter_to_full(spec.quarter_levels, sol.alpha_quarter,
                                spec.levels.size());
}

std::vector<SheSolution> solve_she(const SheSpec& spec, int starts) {
  if (starts < 1) throw std::invalid_argument("starts must be >= 1");
  const int m = spec.k / 4;
  if (spec.quarter_levels.size() != m + 1)
    throw std::invalid_argument("quarter level count must be k/4 + 1");
  if (static_cast<int>(spec.eliminated_orders.size()) != m - 1)
    throw std::invalid_argument(
        "system must be square: k/4 - 1 eliminated orders");
  if (spec.levels.size() % 2 == 0 ||
      spec.quarter_levels[0] != (spec.levels.size() + 1) / 2)
    throw std::invalid_argument("quarter sequence must start at the middle");

  Eigen::VectorXd du(m);
  for (int i = 0; i < m; ++i)
    du[i] = spec.levels.value(spec.quarter_levels[i + 1]) -
            spec.levels.value(spec.quarter_levels[i]);

  std::vector<SheSolution> roots;
  const double hi = kPi / 2.0;
  for (int s = 0; s < starts; ++s) {
    // Stratified ordered start: sorted uniforms in (0, pi/2).
    Eigen::VectorXd alpha(m);
    {
      std::vector<double> draw(m);
      for (int i = 0; i < m; ++i)
        draw[i] = unit_double(splitmix(0xC0FFEEull + 131ull * s + i));
      std::sort(draw.begin(), draw.end());
      for (int i = 0; i < m; ++i)
        alpha[i] = hi * (0.02 + 0.96 * draw[i]);
      for (int i = 1; i < m; ++i)
        alpha[i] = std::max(alpha[i], alpha[i - 1] + 1e-4);
      if (alpha[m - 1] >= hi) continue;
    }

    std::vector<double> history;
    double lm = 1e-10;
    for (int it = 0; it < 200; ++it) {
      const Eigen::VectorXd r = she_residual(spec, alpha);
      const double rn = r.norm();
      history.push_back(rn);
      if (rn < 1e-12) break;
      Eigen::MatrixXd J = she_jacobian(spec, du, alpha);
      Eigen::VectorXd step;
      if (rn < 1e-4) {
        // Pure Newton on the square system near a root.
        step = J.fullPivLu().solve(-r);
      } else {
        // Levenberg-Marquardt damping keeps steps sane far from a root.
        Eigen::MatrixXd JtJ = J.transpose() * J;
        JtJ.diagonal().array() += lm;
        step = JtJ.ldlt().solve(-J.transpose() * r);
      }
      // Fraction-to-boundary: stay strictly inside the ordered cone.
      double t = 1.0;
      for (int bt = 0; bt < 60; ++bt) {
        Eigen::VectorXd cand = alpha + t * step;
        if (ordered_interior(cand)) {
          const double cn = she_residual(spec, cand).norm();
          if (cn < rn || t < 1e-6) {
            alpha = cand;
            lm = std::max(1e-12, lm * 0.3);
            break;
          }
        }
        t *= 0.5;
        if (bt == 59) lm = std::min(1e2, lm * 10.0);
      }
      if (history.size() > 3 && rn < 1e-12) break;
    }
    const Eigen::VectorXd r = she_residual(spec, alpha);
    if (!(r.norm() <= 1e-10) || !ordered_interior(alpha)) continue;

    bool duplicate = false;
    for (const SheSolution& known : roots)
      if ((known.alpha_quarter - alpha).cwiseAbs().maxCoeff() < 1e-8)
        duplicate = true;
    if (duplicate) continue;

    SheSolution sol;
    sol.alpha_quarter = alpha;
    sol.residual = r.norm();
    sol.residual_history = std::move(history);
    // Interlocking over the full pattern: interior quarter gaps plus the
    // mirror gaps at 0 and pi/2.
    double gap = 2.0 * alpha[0];
    for (int i = 1; i < m; ++i) gap = std::min(gap, alpha[i] - alpha[i - 1]);
    gap = std::min(gap, 2.0 * (hi - alpha[m - 1]));
    sol.min_gap = gap;
    sol.theta_feasible = gap >= spec.theta_lock - 1e-12;
    roots.push_back(std::move(sol));
  }

  std::sort(roots.begin(), roots.end(),
            [](const SheSolution& a, const SheSolution& b) {
              return a.alpha_quarter[0] < b.alpha_quarter[0];
            });
  return roots;
}

}  // namespace opp::she
