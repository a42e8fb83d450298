#include "opp/localsearch.hpp"

#include "opp/energy.hpp"

#include <algorithm>
#include <cmath>
#include <cstdint>
#include <deque>
#include <stdexcept>

namespace opp::localsearch {

namespace {

constexpr double kEdgeEps = 1e-12;

std::uint64_t splitmix(std::uint64_t z) {
  z += 0x9e3779b97f4a7c15ull;
  z = (z ^ (z >> 30)) * 0xbf58476d1ce4e5b9ull;
  z = (z ^ (z >> 27)) * 0x94d049bb133111ebull;
  return z ^ (z >> 31);
}


struct Workspace {
  Symmetry sym = Symmetry::FW;
  int h = 0;          // free angles
  int k = 0;          // full switch count
  Eigen::VectorXi n_full;
  Eigen::VectorXi n_seg;
  LevelSet levels;
  LoadModel load;
  double theta = 0.0;
  bool pin_dc = false;  // FW with tau = 0 needs a0 = 0 as a hard equality

  // Hard linear constraints G x >= b and E x = e.
  Eigen::MatrixXd G;
  Eigen::VectorXd b;
  Eigen::MatrixXd Eq;
  Eigen::VectorXd eq_rhs;

  struct Harmonic {
    HarmonicsSpec::Entry entry;
    bool equality = false;
  };
  std::vector<Harmonic> harmonics;
};

Eigen::VectorXd expand_angles(const Workspace& ws, const Eigen::VectorXd& x) {
  switch (ws.sym) {
    case Symmetry::FW:
      return x;
    case Symmetry::HW: {
      Eigen::VectorXd a(2 * ws.h);
      a.head(ws.h) = x;
      a.tail(ws.h) = x.array() + kPi;
      return a;
    }
    case Symmetry::QW: {
      const int q = ws.h;
      Eigen::VectorXd a(4 * q);
      for (int i = 0; i < q; ++i) {
        a[i] = x[i];
        a[2 * q - 1 - i] = kPi - x[i];
        a[2 * q + i] = kPi + x[i];
        a[4 * q - 1 - i] = kTwoPi - x[i];
      }
      return a;
    }
  }
  throw std::logic_error("unreachable");
}

Eigen::VectorXd pullback_gradient(const Workspace& ws,
                                  const Eigen::VectorXd& g_full) {
  switch (ws.sym) {
    case Symmetry::FW:
      return g_full;
    case Symmetry::HW: {
      Eigen::VectorXd g(ws.h);
      for (int i = 0; i < ws.h; ++i) g[i] = g_full[i] + g_full[ws.h + i];
      return g;
    }
    case Symmetry::QW: {
      const int q = ws.h;
      Eigen::VectorXd g(q);
      for (int i = 0; i < q; ++i)
        g[i] = g_full[i] - g_full[2 * q - 1 - i] + g_full[2 * q + i] -
               g_full[4 * q - 1 - i];
      return g;
    }
  }
  throw std::logic_error("unreachable");
}

PulsePattern make_pattern(const Workspace& ws, const Eigen::VectorXd& x) {
  switch (ws.sym) {
    case Symmetry::FW:
      return PulsePattern(ws.n_full, x);
    case Symmetry::HW:
      return expand_half_to_full(ws.n_seg, x, ws.levels.size());
    case Symmetry::QW:
      return expand_quarter_to_full(ws.n_seg, x, ws.levels.size());
  }
  throw std::logic_error("unreachable");
}

Workspace make_workspace(const PulsePattern& seed, const DeviceSpec& dev,
                         const DesignSpec& des, const LoadModel& load,
                         bool with_energy) {
  Workspace ws;
  ws.sym = des.symmetry;
  ws.k = seed.switch_count();
  ws.levels = dev.levels;
  ws.load = load;
  ws.theta = dev.theta_lock;
  ws.n_full = seed.level_indices();
  if (des.k != ws.k)
    throw std::invalid_argument("seed switch count differs from design");
  const PatternSegment seg = segment_of(seed, dev.levels, des.symmetry);
  ws.h = static_cast<int>(seg.alpha.size());
  ws.n_seg = seg.n;
  // The pure-reactance energy needs a zero-mean waveform to admit a periodic
  // current, so the dc row becomes a hard equality.
  ws.pin_dc =
      with_energy && des.symmetry == Symmetry::FW && load.tau == 0.0;

  const int h = ws.h;
  std::vector<Eigen::VectorXd> rows;
  std::vector<double> rhs;
  auto row = [&](std::initializer_list<std::pair<int, double>> terms,
                 double r) {
    Eigen::VectorXd v = Eigen::VectorXd::Zero(h);
    for (auto [i, c] : terms) v[i] = c;
    rows.push_back(v);
    rhs.push_back(r);
  };
  if (h > 0) {
    for (int i = 0; i + 1 < h; ++i)
      row({{i + 1, 1.0}, {i, -1.0}}, ws.theta);  // interlocking gaps
    switch (ws.sym) {
      case Symmetry::FW:
        row({{0, 1.0}}, 0.0);
        row({{h - 1, -1.0}}, -kTwoPi);
        if (h > 1) row({{0, 1.0}, {h - 1, -1.0}}, ws.theta - kTwoPi);
        break;
      case Symmetry::HW:
        row({{0, 1.0}}, kEdgeEps);
        row({{h - 1, -1.0}}, -(kPi - kEdgeEps));
        if (h > 1) row({{0, 1.0}, {h - 1, -1.0}}, ws.theta - kPi);
        break;
      case Symmetry::QW:
        row({{0, 1.0}}, ws.theta / 2.0);
        row({{h - 1, -1.0}}, -(kPi / 2.0 - ws.theta / 2.0));
        break;
    }
    if (ws.sym == Symmetry::FW && h == 1) row({{0, 1.0}}, 0.0);
  }
  ws.G.resize(static_cast<long>(rows.size()), h);
  ws.b.resize(static_cast<long>(rows.size()));
  for (size_t i = 0; i < rows.size(); ++i) {
    ws.G.row(static_cast<long>(i)) = rows[i].transpose();
    ws.b[static_cast<long>(i)] = rhs[i];
  }

  if (ws.pin_dc && h > 0) {
    // a0 = 2 u^0 - (1/pi) sum du_i alpha_i = 0, linear in the angles.
    const Eigen::VectorXd u = seed.level_values(dev.levels);
    ws.Eq.resize(1, h);
    for (int i = 0; i < h; ++i) ws.Eq(0, i) = u[i + 1] - u[i];
    ws.eq_rhs.resize(1);
    ws.eq_rhs[0] = kTwoPi * u[0];
  } else {
    ws.Eq.resize(0, h);
    ws.eq_rhs.resize(0);
  }

  for (const auto& e : des.harmonics.entries)
    ws.harmonics.push_back({e, e.is_equality(1e-15)});
  return ws;
}

bool feasible(const Workspace& ws, const Eigen::VectorXd& x, double tol) {
  for (int i = 0; i < ws.G.rows(); ++i)
    if (ws.G.row(i).dot(x) - ws.b[i] < -tol) return false;
  for (int i = 0; i < ws.Eq.rows(); ++i)
    if (std::abs(ws.Eq.row(i).dot(x) - ws.eq_rhs[i]) > std::max(tol, 1e-10))
      return false;
  return true;
}

// Chain structure of the constraints (lower bound, gaps, upper bound, wrap):
// enforce them exactly with monotone clamps. Idempotent on feasible points.
Eigen::VectorXd chain_repair(const Workspace& ws, Eigen::VectorXd x) {
  const int h = ws.h;
  if (h == 0) return x;
  double lo0 = 0.0, hi_last = kTwoPi;
  bool wrap = false;
  double span = kTwoPi;
  switch (ws.sym) {
    case Symmetry::FW:
      lo0 = 0.0;
      hi_last = kTwoPi;
      wrap = h > 1;
      span = kTwoPi;
      break;
    case Symmetry::HW:
      lo0 = kEdgeEps;
      hi_last = kPi - kEdgeEps;
      wrap = h > 1;
      span = kPi;
      break;
    case Symmetry::QW:
      lo0 = ws.theta / 2.0;
      hi_last = kPi / 2.0 - ws.theta / 2.0;
      wrap = false;
      span = kPi / 2.0;
      break;
  }
  auto sweep = [&](Eigen::VectorXd& v) {
    v[0] = std::max(v[0], lo0);
    for (int i = 1; i < h; ++i) v[i] = std::max(v[i], v[i - 1] + ws.theta);
    v[h - 1] = std::min(v[h - 1], hi_last);
    for (int i = h - 2; i >= 0; --i)
      v[i] = std::min(v[i], v[i + 1] - ws.theta);
    v[0] = std::max(v[0], lo0);
    for (int i = 1; i < h; ++i) v[i] = std::max(v[i], v[i - 1] + ws.theta);
  };
  sweep(x);
  if (wrap) {
    for (int pass = 0; pass < h + 2; ++pass) {
      const double slack = x[0] + span - x[h - 1] - ws.theta;
      if (slack >= 0.0) break;
      // Pull the ends together without breaking the interior gaps.
      const double up = std::min(-slack, x[1 % h] - x[0] - ws.theta);
      x[0] += h > 1 ? std::max(0.0, up) : 0.0;
      const double still = ws.theta - (x[0] + span - x[h - 1]);
      if (still > 0.0 && h > 1)
        x[h - 1] = std::max(x[h - 2] + ws.theta, x[h - 1] - still);
      sweep(x);
    }
  }
  return x;
}

// Dykstra's alternating projections onto the half-spaces and hyperplanes;
// exact in the limit and immune to degenerate active sets.
Eigen::VectorXd project_dykstra(const Workspace& ws, const Eigen::VectorXd& z) {
  const int m = static_cast<int>(ws.G.rows());
  const int me = static_cast<int>(ws.Eq.rows());
  Eigen::VectorXd x = z;
  Eigen::MatrixXd corr = Eigen::MatrixXd::Zero(m, ws.G.cols());
  for (int sweep = 0; sweep < 4000; ++sweep) {
    double moved = 0.0;
    for (int i = 0; i < m; ++i) {
      const Eigen::VectorXd y = x + corr.row(i).transpose();
      const double nn = ws.G.row(i).squaredNorm();
      const double slack = ws.G.row(i).dot(y) - ws.b[i];
      Eigen::VectorXd px = y;
      if (slack < 0.0) px -= (slack / nn) * ws.G.row(i).transpose();
      corr.row(i) = (y - px).transpose();
      moved = std::max(moved, (px - x).cwiseAbs().maxCoeff());
      x = px;
    }
    for (int i = 0; i < me; ++i) {
      const double nn = ws.Eq.row(i).squaredNorm();
      const double r = ws.Eq.row(i).dot(x) - ws.eq_rhs[i];
      x -= (r / nn) * ws.Eq.row(i).transpose();
    }
    double viol = 0.0;
    for (int i = 0; i < m; ++i)
      viol = std::max(viol, ws.b[i] - ws.G.row(i).dot(x));
    if (viol <= 1e-13 && moved <= 1e-14) break;
  }
  return x;
}

// Euclidean projection onto {x : G x >= b, Eq x = eq_rhs}: a small active-set
// loop with a Dykstra fallback when the active set degenerates.
Eigen::VectorXd project(const Workspace& ws, const Eigen::VectorXd& z) {
  const int m = static_cast<int>(ws.G.rows());
  const int me = static_cast<int>(ws.Eq.rows());
  std::vector<char> active(m, 0);
  Eigen::VectorXd x = z;
  for (int pass = 0; pass < 40 * (m + 1); ++pass) {
    std::vector<int> act;
    for (int i = 0; i < m; ++i)
      if (active[i]) act.push_back(i);
    const int na = static_cast<int>(act.size()) + me;
    if (na == 0) {
      x = z;
    } else {
      Eigen::MatrixXd A(na, ws.G.cols());
      Eigen::VectorXd c(na);
      for (size_t i = 0; i < act.size(); ++i) {
        A.row(static_cast<long>(i)) = ws.G.row(act[i]);
        c[static_cast<long>(i)] = ws.b[act[i]];
      }
      for (int i = 0; i < me; ++i) {
        A.row(static_cast<long>(act.size()) + i) = ws.Eq.row(i);
        c[static_cast<long>(act.size()) + i] = ws.eq_rhs[i];
      }
      Eigen::MatrixXd K = A * A.transpose();
      K.diagonal().array() += 1e-12;
      const Eigen::VectorXd lambda = K.ldlt().solve(c - A * z);
      x = z + A.transpose() * lambda;
      // Drop the most negative inequality multiplier, if any.
      int drop = -1;
      double worst = -1e-10;
      for (size_t i = 0; i < act.size(); ++i)
        if (lambda[static_cast<long>(i)] < worst) {
          worst = lambda[static_cast<long>(i)];
          drop = act[i];
        }
      if (drop >= 0) {
        active[drop] = 0;
        continue;
      }
    }
    // Add the most violated constraint.
    int add = -1;
    double worst = -1e-12;
    for (int i = 0; i < m; ++i) {
      if (active[i]) continue;
      const double slack = ws.G.row(i).dot(x) - ws.b[i];
      if (slack < worst) {
        worst = slack;
        add = i;
      }
    }
    if (add < 0) {
      bool eq_ok = true;
      for (int i = 0; i < me; ++i)
        eq_ok &= std::abs(ws.Eq.row(i).dot(x) - ws.eq_rhs[i]) <= 1e-10;
      if (eq_ok) break;
      x = project_dykstra(ws, z);
      break;
    }
    active[add] = 1;
    if (pass + 1 == 40 * (m + 1)) x = project_dykstra(ws, z);
  }
  // Whatever route produced x, leave with a certified point: tiny numerical
  // overshoots get clamped and the equality row re-imposed.
  x = chain_repair(ws, x);
  for (int rep = 0; rep < 4 && ws.Eq.rows() > 0; ++rep) {
    for (int i = 0; i < ws.Eq.rows(); ++i) {
      const double nn = ws.Eq.row(i).squaredNorm();
      if (nn <= 0.0) continue;
      const double r = ws.Eq.row(i).dot(x) - ws.eq_rhs[i];
      x -= (r / nn) * ws.Eq.row(i).transpose();
    }
    x = chain_repair(ws, x);
    if (feasible(ws, x, 1e-12)) break;
  }
  return x;
}

struct Residuals {
  Eigen::VectorXd eq;       // harmonic equalities
  Eigen::MatrixXd eq_jac;   // rows per equality
  Eigen::VectorXd lo;       // g = value - lo >= 0 per box
  Eigen::VectorXd hi;       // g = hi - value >= 0 per box
  Eigen::MatrixXd box_jac;  // d(value)/dx per box
};

Residuals harmonic_residuals(const Workspace& ws, const Eigen::VectorXd& x) {
  Residuals r;
  const Eigen::VectorXd alpha = expand_angles(ws, x);
  const Eigen::VectorXd u = [&] {
    Eigen::VectorXd v(ws.n_full.size());
    for (int i = 0; i < ws.n_full.size(); ++i)
      v[i] = ws.levels.value(ws.n_full[i]);
    return v;
  }();
  int neq = 0, nbox = 0;
  for (const auto& hsp : ws.harmonics) (hsp.equality ? neq : nbox) += 1;
  r.eq.resize(neq);
  r.eq_jac.resize(neq, ws.h);
  r.lo.resize(nbox);
  r.hi.resize(nbox);
  r.box_jac.resize(nbox, ws.h);
  int ie = 0, ib = 0;
  for (const auto& hsp : ws.harmonics) {
    const int q = hsp.entry.order;
    double value = 0.0;
    Eigen::VectorXd jac_full = Eigen::VectorXd::Zero(ws.k);
    if (hsp.entry.kind == HarmonicsSpec::Kind::Cosine && q == 0) {
      value = 2.0 * u[0];
      for (int i = 1; i <= ws.k; ++i) {
        value -= (u[i] - u[i - 1]) * alpha[i - 1] / kPi;
        jac_full[i - 1] = -(u[i] - u[i - 1]) / kPi;
      }
    } else if (hsp.entry.kind == HarmonicsSpec::Kind::Cosine) {
      for (int i = 1; i <= ws.k; ++i) {
        const double du = u[i] - u[i - 1];
        value -= du * std::sin(q * alpha[i - 1]) / (q * kPi);
        jac_full[i - 1] = -du * std::cos(q * alpha[i - 1]) / kPi;
      }
    } else if (q >= 1) {
      for (int i = 1; i <= ws.k; ++i) {
        const double du = u[i] - u[i - 1];
        value += du * std::cos(q * alpha[i - 1]) / (q * kPi);
        jac_full[i - 1] = -du * std::sin(q * alpha[i - 1]) / kPi;
      }
    }
    const Eigen::VectorXd jac = pullback_gradient(ws, jac_full);
    if (hsp.equality) {
      r.eq[ie] = value - hsp.entry.lo;
      r.eq_jac.row(ie) = jac.transpose();
      ++ie;
    } else {
      r.lo[ib] = value - hsp.entry.lo;
      r.hi[ib] = hsp.entry.hi - value;
      r.box_jac.row(ib) = jac.transpose();
      ++ib;
    }
  }
  return r;
}

double max_violation(const Residuals& r) {
  double v = 0.0;
  for (int i = 0; i < r.eq.size(); ++i) v = std::max(v, std::abs(r.eq[i]));
  for (int i = 0; i < r.lo.size(); ++i) {
    v = std::max(v, std::max(0.0, -r.lo[i]));
    v = std::max(v, std::max(0.0, -r.hi[i]));
  }
  return v;
}

struct Multipliers {
  Eigen::VectorXd nu;        // equalities
  Eigen::VectorXd lam_lo;    // box lower sides, >= 0
  Eigen::VectorXd lam_hi;    // box upper sides, >= 0
};

struct Objective {
  const Workspace& ws;
  const Multipliers& mult;
  double rho;
  bool with_energy;

  double value_grad(const Eigen::VectorXd& x, Eigen::VectorXd& grad) const {
    double f = 0.0;
    grad = Eigen::VectorXd::Zero(ws.h);
    if (with_energy) {
      const PulsePattern p = make_pattern(ws, x);
      f += energy::signal_energy(p, ws.levels, ws.load,
                                 energy::External{ws.load.A, ws.load.phi})
               .total();
      grad += pullback_gradient(
          ws, energy::energy_gradient(p, ws.levels, ws.load,
                                      energy::External{ws.load.A, ws.load.phi}));
    }
    const Residuals r = harmonic_residuals(ws, x);
    for (int i = 0; i < r.eq.size(); ++i) {
      f += mult.nu[i] * r.eq[i] + 0.5 * rho * r.eq[i] * r.eq[i];
      grad += (mult.nu[i] + rho * r.eq[i]) * r.eq_jac.row(i).transpose();
    }
    for (int i = 0; i < r.lo.size(); ++i) {
      const double tlo = std::max(0.0, mult.lam_lo[i] / rho - r.lo[i]);
      f += 0.5 * rho * tlo * tlo;
      grad -= rho * tlo * r.box_jac.row(i).transpose();
      const double thi = std::max(0.0, mult.lam_hi[i] / rho - r.hi[i]);
      f += 0.5 * rho * thi * thi;
      grad += rho * thi * r.box_jac.row(i).transpose();
    }
    return f;
  }
};

// Spectral projected gradient with a short nonmonotone memory.
double spg(const Objective& obj, const Workspace& ws, Eigen::VectorXd& x,
           int max_iter, double tol) {
  Eigen::VectorXd g, gnew;
  double f = obj.value_grad(x, g);
  std::deque<double> mem{f};
  double step = 1.0;
  Eigen::VectorXd x_prev = x, g_prev = g;
  double pg = std::numeric_limits<double>::infinity();
  for (int it = 0; it < max_iter; ++it) {
    const Eigen::VectorXd xp = project(ws, x - g);
    pg = (x - xp).norm();
    if (pg <= tol) break;
    Eigen::VectorXd d = project(ws, x - step * g) - x;
    if (d.norm() < 1e-16) break;
    const double fmax = *std::max_element(mem.begin(), mem.end());
    const double slope = g.dot(d);
    double t = 1.0;
    Eigen::VectorXd xt;
    double ft = 0.0;
    for (int ls = 0; ls < 40; ++ls) {
      xt = x + t * d;
      ft = obj.value_grad(xt, gnew);
      if (ft <= fmax + 1e-4 * t * slope) break;
      t *= 0.5;
    }
    x_prev = x;
    g_prev = g;
    x = xt;
    f = ft;
    g = gnew;
    mem.push_back(f);
    if (mem.size() > 8) mem.pop_front();
    const Eigen::VectorXd sx = x - x_prev;
    const Eigen::VectorXd sy = g - g_prev;
    const double sts = sx.dot(sx), sty = sx.dot(sy);
    step = sty > 1e-14 ? std::min(1e6, std::max(1e-8, sts / sty)) : 1.0;
  }
  return pg;
}

RefineResult solve(const PulsePattern& seed, const DeviceSpec& dev,
                   const DesignSpec& des, const LoadModel& load,
                   const RefineConfig& cfg, bool with_energy) {
  const Workspace ws = make_workspace(seed, dev, des, load, with_energy);
  const PatternSegment seg = segment_of(seed, dev.levels, des.symmetry);
  Eigen::VectorXd x = project(ws, seg.alpha);

  Multipliers mult;
  {
    int neq = 0, nbox = 0;
    for (const auto& hsp : ws.harmonics) (hsp.equality ? neq : nbox) += 1;
    mult.nu = Eigen::VectorXd::Zero(neq);
    mult.lam_lo = Eigen::VectorXd::Zero(nbox);
    mult.lam_hi = Eigen::VectorXd::Zero(nbox);
  }

  if (with_energy) {
    // Phase one: pull the seed onto the harmonic constraint set so the
    // energy descent starts feasible rather than trading feasibility away.
    // Nonconvex residuals can jam in a polytope corner, so a deterministic
    // ladder of spread-out restarts backs up the seeded attempt.
    auto restore = [&](Eigen::VectorXd start) {
      Multipliers feas = mult;
      double rho_f = cfg.penalty0;
      double prev = std::numeric_limits<double>::infinity();
      for (int outer = 0; outer < 40; ++outer) {
        Objective obj{ws, feas, rho_f, false};
        spg(obj, ws, start, cfg.max_inner, std::max(1e-10, cfg.feas_tol * 1e-2));
        const Residuals r = harmonic_residuals(ws, start);
        const double viol = max_violation(r);
        if (viol <= 0.1 * cfg.feas_tol) break;
        for (int i = 0; i < r.eq.size(); ++i) feas.nu[i] += rho_f * r.eq[i];
        for (int i = 0; i < r.lo.size(); ++i) {
          feas.lam_lo[i] = std::max(0.0, feas.lam_lo[i] - rho_f * r.lo[i]);
          feas.lam_hi[i] = std::max(0.0, feas.lam_hi[i] - rho_f * r.hi[i]);
        }
        if (viol > 0.25 * prev) rho_f = std::min(rho_f * 10.0, 1e10);
        prev = viol;
      }
      return start;
    };
    x = restore(x);
    if (max_violation(harmonic_residuals(ws, x)) > cfg.feas_tol &&
        ws.h > 0) {
      const double span = ws.sym == Symmetry::FW   ? kTwoPi
                          : ws.sym == Symmetry::HW ? kPi
                                                   : kPi / 2.0;
      for (int attempt = 0; attempt < 4; ++attempt) {
        Eigen::VectorXd spread(ws.h);
        for (int i = 0; i < ws.h; ++i) {
          double t = (i + 1.0) / (ws.h + 1.0);
          if (attempt > 0) {
            const std::uint64_t rnd = splitmix(0xFEEDull + 31 * attempt + i);
            t += 0.25 * (2.0 * (rnd >> 11) * 0x1.0p-53 - 1.0) / (ws.h + 1.0);
          }
          spread[i] = t * span;
        }
        Eigen::VectorXd cand = restore(project(ws, spread));
        if (max_violation(harmonic_residuals(ws, cand)) <= cfg.feas_tol) {
          x = cand;
          break;
        }
      }
    }
    // Warm start the equality multipliers: least-squares fit of the energy
    // gradient onto the active constraint normals.
    const Residuals r = harmonic_residuals(ws, x);
    if (r.eq.size() > 0) {
      const PulsePattern p = make_pattern(ws, x);
      const Eigen::VectorXd ge = pullback_gradient(
          ws, energy::energy_gradient(p, ws.levels, ws.load,
                                      energy::External{ws.load.A, ws.load.phi}));
      Eigen::MatrixXd R = r.eq_jac;
      Eigen::MatrixXd K = R * R.transpose();
      K.diagonal().array() += 1e-10;
      mult.nu = K.ldlt().solve(-R * ge);
    }
  }

  RefineResult res;
  double rho = cfg.penalty0;
  double prev_viol = std::numeric_limits<double>::infinity();
  double best_energy = std::numeric_limits<double>::infinity();
  Eigen::VectorXd best_x;
  double last_pg = 0.0;

  for (int outer = 0; outer < cfg.max_outer; ++outer) {
    Objective obj{ws, mult, rho, with_energy};
    const double inner_tol =
        std::max(cfg.grad_tol, 1e-2 * std::pow(0.25, outer));
    last_pg = spg(obj, ws, x, cfg.max_inner, inner_tol);

    const Residuals r = harmonic_residuals(ws, x);
    const double viol = max_violation(r);
    double e_now = 0.0;
    if (viol <= cfg.feas_tol) {
      if (with_energy) {
        const PulsePattern p = make_pattern(ws, x);
        e_now = energy::signal_energy(p, ws.levels, ws.load,
                                      energy::External{ws.load.A, ws.load.phi})
                    .total();
      }
      if (best_x.size() == 0 || e_now < best_energy) {
        best_energy = e_now;
        best_x = x;
      }
    }
    res.log.push_back({outer, e_now, viol});
    if (viol <= cfg.feas_tol && best_x.size() > 0 &&
        (!with_energy || last_pg <= cfg.grad_tol))
      break;

    for (int i = 0; i < r.eq.size(); ++i) mult.nu[i] += rho * r.eq[i];
    for (int i = 0; i < r.lo.size(); ++i) {
      mult.lam_lo[i] = std::max(0.0, mult.lam_lo[i] - rho * r.lo[i]);
      mult.lam_hi[i] = std::max(0.0, mult.lam_hi[i] - rho * r.hi[i]);
    }
    if (viol > 0.25 * prev_viol) rho = std::min(rho * 4.0, 1e12);
    prev_viol = viol;
  }

  if (best_x.size() == 0) {
    res.status = RefineStatus::Infeasible;
    const Residuals r = harmonic_residuals(ws, x);
    res.max_violation = max_violation(r);
    return res;
  }
  const PulsePattern p = make_pattern(ws, best_x);
  res.status = RefineStatus::Feasible;
  res.pattern = p;
  res.energy = best_energy;
  res.max_violation = max_violation(harmonic_residuals(ws, best_x));
  res.projected_gradient = last_pg;
  return res;
}

}  // namespace

RefineResult refine(const PulsePattern& seed, const DeviceSpec& dev,
                    const DesignSpec& des, const LoadModel& load,
                    const RefineConfig& cfg) {
  RefineResult best = solve(seed, dev, des, load, cfg, true);
  if (cfg.multi_start > 0) {
    const double scale =
        cfg.jitter >= 0.0 ? cfg.jitter : dev.theta_lock / 2.0;
    const PatternSegment seg = segment_of(seed, dev.levels, des.symmetry);
    for (int s = 0; s < cfg.multi_start; ++s) {
      Eigen::VectorXd x = seg.alpha;
      for (int i = 0; i < x.size(); ++i) {
        const std::uint64_t r = splitmix(1234567ull + 97ull * s + i);
        x[i] += scale * (2.0 * (r >> 11) * 0x1.0p-53 - 1.0);
      }
      try {
        const PulsePattern jittered = [&] {
          switch (des.symmetry) {
            case Symmetry::FW: return PulsePattern(seed.level_indices(), x);
            case Symmetry::HW:
              return expand_half_to_full(seg.n, x, dev.levels.size());
            case Symmetry::QW:
              return expand_quarter_to_full(seg.n, x, dev.levels.size());
          }
          throw std::logic_error("unreachable");
        }();
        RefineResult cand = solve(jittered, dev, des, load, cfg, true);
        if (cand.status == RefineStatus::Feasible &&
            (best.status != RefineStatus::Feasible ||
             cand.energy < best.energy))
          best = std::move(cand);
      } catch (const std::invalid_argument&) {
        // jitter produced an out-of-range seed; skip it
      }
    }
  }
  return best;
}

RefineResult restore_feasibility(const PulsePattern& seed,
                                 const DeviceSpec& dev, const DesignSpec& des,
                                 const RefineConfig& cfg) {
  return solve(seed, dev, des, LoadModel::normalized(0.0), cfg, false);
}

}  // namespace opp::localsearch
