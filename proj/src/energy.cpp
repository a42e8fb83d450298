#include "opp/energy.hpp"

#include <algorithm>
#include <cmath>
#include <functional>
#include <stdexcept>

namespace opp::energy {

namespace {

// (1 - exp(-x))/x, continuous at 0.
double phi1(double x) {
  if (x == 0.0) return 1.0;
  return -std::expm1(-x) / x;
}

// (phi1(x) - phi1(2x))/x, limit 1/2 at 0. Series below 0.25 to avoid
// cancellation; coefficients (-1)^m (2^{m+1}-1)/(m+2)!.
double seg_g1(double x) {
  if (x < 0.25) {
    double fact = 2.0;  // (m+2)! running
    double pw2 = 2.0;   // 2^{m+1}
    double xp = 1.0;
    double acc = 0.0;
    double sign = 1.0;
    for (int m = 0; m <= 14; ++m) {
      acc += sign * (pw2 - 1.0) / fact * xp;
      sign = -sign;
      xp *= x;
      pw2 *= 2.0;
      fact *= static_cast<double>(m + 3);
    }
    return acc;
  }
  return (phi1(x) - phi1(2.0 * x)) / x;
}

// (1 - 2 phi1(x) + phi1(2x))/x^2, limit 1/3 at 0; coefficients
// (-1)^m (2^{m+2}-2)/(m+3)!.
double seg_g2(double x) {
  if (x < 0.25) {
    double fact = 6.0;  // (m+3)!
    double pw2 = 4.0;   // 2^{m+2}
    double xp = 1.0;
    double acc = 0.0;
    double sign = 1.0;
    for (int m = 0; m <= 14; ++m) {
      acc += sign * (pw2 - 2.0) / fact * xp;
      sign = -sign;
      xp *= x;
      pw2 *= 2.0;
      fact *= static_cast<double>(m + 4);
    }
    return acc;
  }
  return (1.0 - 2.0 * phi1(x) + phi1(2.0 * x)) / (x * x);
}

// Current after a dwell of width d at level u starting from ia.
double flow(double ia, double u, double d, double tau) {
  const double x = tau * d;
  return ia * std::exp(-x) + u * d * phi1(x);
}

struct Segments {
  Eigen::VectorXd a;   // m left endpoints, a[0] = 0
  Eigen::VectorXd b;   // m right endpoints, b[m-1] = 2*pi
  Eigen::VectorXd u;   // m active levels
  int m = 0;
};

Segments make_segments(const PulsePattern& p, const LevelSet& levels) {
  const int k = p.switch_count();
  Segments s;
  s.m = k + 1;
  s.a.resize(s.m);
  s.b.resize(s.m);
  s.u.resize(s.m);
  const Eigen::VectorXd uv = p.level_values(levels);
  for (int i = 0; i < s.m; ++i) {
    s.a[i] = i == 0 ? 0.0 : p.angle(i);
    s.b[i] = i == k ? kTwoPi : p.angle(i + 1);
    s.u[i] = uv[i];
  }
  return s;
}

// Integral of e^{-tau (theta-a)} sin(theta + c) over [a, b].
double kernel_exp_sin(double a, double b, double c, double tau) {
  const double ap = a + c, bp = b + c;
  const double ex = std::exp(-tau * (b - a));
  return (tau * std::sin(ap) + std::cos(ap) -
          ex * (tau * std::sin(bp) + std::cos(bp))) /
         (1.0 + tau * tau);
}

// Integral of (1 - e^{-tau (theta-a)})/tau * sin(theta + c) over [a, b],
// continuous at tau = 0 where it equals the (theta-a)-weighted integral.
double kernel_ramp_sin(double a, double b, double c, double tau) {
  const double ap = a + c, bp = b + c;
  const double d = b - a;
  const double x = tau * d;
  const double ex = std::exp(-x);
  return (tau * std::cos(ap) - std::sin(ap) + ex * std::sin(bp) -
          std::cos(bp) * (tau + d * phi1(x))) /
         (1.0 + tau * tau);
}

double external_gain(double A, double tau) {
  return A / std::sqrt(tau * tau + 1.0);
}

// Mixed-energy contribution of one segment, I_ext = -gamma0 sin(theta+phi+psi).
double segment_mix(double ia, double u, double a, double b, double tau,
                   double gamma0, double phase) {
  if (gamma0 == 0.0) return 0.0;
  return -gamma0 * (ia * kernel_exp_sin(a, b, phase, tau) +
                    u * kernel_ramp_sin(a, b, phase, tau));
}

// Integral of I_p^2 over one segment, stable across both regimes.
double segment_pulse(double ia, double u, double d, double tau) {
  const double x = tau * d;
  return ia * ia * d * phi1(2.0 * x) + 2.0 * ia * u * d * d * seg_g1(x) +
         u * u * d * d * d * seg_g2(x);
}

double dc_component(const Segments& s) {
  double acc = 0.0;
  for (int i = 0; i < s.m; ++i) acc += s.u[i] * (s.b[i] - s.a[i]);
  return acc / kPi;  // a0 of the waveform
}

double adaptive_simpson(const std::function<double(double)>& f, double a,
                        double b, double fa, double fm, double fb, double whole,
                        double tol, int depth) {
  const double m = 0.5 * (a + b);
  const double lm = 0.5 * (a + m), rm = 0.5 * (m + b);
  const double flm = f(lm), frm = f(rm);
  const double left = (m - a) / 6.0 * (fa + 4.0 * flm + fm);
  const double right = (b - m) / 6.0 * (fm + 4.0 * frm + fb);
  const double delta = left + right - whole;
  if (depth <= 0 || std::abs(delta) <= 15.0 * tol)
    return left + right + delta / 15.0;
  return adaptive_simpson(f, a, m, fa, flm, fm, left, 0.5 * tol, depth - 1) +
         adaptive_simpson(f, m, b, fm, frm, fb, right, 0.5 * tol, depth - 1);
}

double integrate(const std::function<double(double)>& f, double a, double b,
                 double tol) {
  if (b <= a) return 0.0;
  const double m = 0.5 * (a + b);
  const double fa = f(a), fm = f(m), fb = f(b);
  const double whole = (b - a) / 6.0 * (fa + 4.0 * fm + fb);
  return adaptive_simpson(f, a, b, fa, fm, fb, whole, tol, 48);
}

}  // namespace

CurrentTrajectory make_trajectory(const PulsePattern& p, const LevelSet& levels,
                                  const LoadModel& load, double I0) {
  const Segments s = make_segments(p, levels);
  CurrentTrajectory traj{p, load, I0, Eigen::VectorXd(s.m + 1)};
  traj.nodes[0] = I0;
  for (int i = 0; i < s.m; ++i)
    traj.nodes[i + 1] =
        flow(traj.nodes[i], s.u[i], s.b[i] - s.a[i], load.tau);
  return traj;
}

double periodic_initial_current(const PulsePattern& p, const LevelSet& levels,
                                const LoadModel& load) {
  const Segments s = make_segments(p, levels);
  if (load.tau > 0.0) {
    double c = 0.0;
    for (int i = 0; i < s.m; ++i)
      c = flow(c, s.u[i], s.b[i] - s.a[i], load.tau);
    return c / (-std::expm1(-kTwoPi * load.tau));
  }
  const double a0 = dc_component(s);
  const double scale = std::max(1.0, s.u.cwiseAbs().maxCoeff());
  if (std::abs(a0) > 1e-9 * scale)
    throw std::domain_error(
        "no periodic solution: tau = 0 with nonzero dc component");
  // Shift the piecewise-linear current to zero mean.
  double node = 0.0;
  double acc = 0.0;
  for (int i = 0; i < s.m; ++i) {
    const double d = s.b[i] - s.a[i];
    acc += node * d + 0.5 * s.u[i] * d * d;
    node += s.u[i] * d;
  }
  return -acc / kTwoPi;
}

EnergyBreakdown energy_pure_reactance(const CurrentTrajectory& traj,
                                      const LevelSet& levels,
                                      const External& ext) {
  if (traj.load.tau != 0.0)
    throw std::domain_error("energy_pure_reactance requires tau = 0");
  const Segments s = make_segments(traj.pattern, levels);
  EnergyBreakdown e;
  const double gamma0 = ext.A;
  e.ext = kPi * gamma0 * gamma0;
  for (int i = 0; i < s.m; ++i) {
    const double ia = traj.nodes[i];
    const double ib = traj.nodes[i + 1];
    const double d = s.b[i] - s.a[i];
    e.pulse += s.u[i] == 0.0
                   ? ia * ia * d
                   : (ib * ib * ib - ia * ia * ia) / (3.0 * s.u[i]);
    e.mix += segment_mix(ia, s.u[i], s.a[i], s.b[i], 0.0, gamma0, ext.phi);
  }
  return e;
}

EnergyBreakdown energy_mixed(const CurrentTrajectory& traj,
                             const LevelSet& levels, const External& ext) {
  const double tau = traj.load.tau;
  if (!(tau > 0.0)) throw std::domain_error("energy_mixed requires tau > 0");
  const Segments s = make_segments(traj.pattern, levels);
  EnergyBreakdown e;
  const double gamma0 = external_gain(ext.A, tau);
  const double psi = std::atan(tau);
  e.ext = kPi * gamma0 * gamma0;
  for (int i = 0; i < s.m; ++i) {
    const double ia = traj.nodes[i];
    const double d = s.b[i] - s.a[i];
    e.pulse += segment_pulse(ia, s.u[i], d, tau);
    e.mix += segment_mix(ia, s.u[i], s.a[i], s.b[i], tau, gamma0,
                         ext.phi + psi);
  }
  return e;
}

EnergyBreakdown signal_energy(const PulsePattern& p, const LevelSet& levels,
                              const LoadModel& load, const External& ext) {
  const double I0 = periodic_initial_current(p, levels, load);
  const CurrentTrajectory traj = make_trajectory(p, levels, load, I0);
  return load.tau > 0.0 ? energy_mixed(traj, levels, ext)
                        : energy_pure_reactance(traj, levels, ext);
}

EnergyBreakdown signal_energy(const PulsePattern& p, const LevelSet& levels,
                              const LoadModel& load) {
  return signal_energy(p, levels, load, External{load.A, load.phi});
}

double energy_numeric_oracle(const PulsePattern& p, const LevelSet& levels,
                             const LoadModel& load, double I0,
                             const External& ext, double tol) {
  if (!(tol > 0.0)) throw std::invalid_argument("tol must be positive");
  const Segments s = make_segments(p, levels);
  const double tau = load.tau;
  const double gamma0 = external_gain(ext.A, tau);
  const double psi = std::atan(tau);
  double node = I0;
  double total = 0.0;
  const double seg_tol = tol / static_cast<double>(s.m);
  for (int i = 0; i < s.m; ++i) {
    const double a = s.a[i], u = s.u[i];
    const double entry = node;
    auto f = [&](double theta) {
      const double t = theta - a;
      double v = entry * std::exp(-tau * t) + u * t * phi1(tau * t);
      if (gamma0 != 0.0) v -= gamma0 * std::sin(theta + ext.phi + psi);
      return v * v;
    };
    total += integrate(f, a, s.b[i], seg_tol);
    node = flow(node, u, s.b[i] - a, tau);
  }
  return total;
}

Eigen::VectorXd energy_gradient(const PulsePattern& p, const LevelSet& levels,
                                const LoadModel& load, const External& ext) {
  const int k = p.switch_count();
  Eigen::VectorXd grad = Eigen::VectorXd::Zero(k);
  if (k == 0) return grad;
  const Segments s = make_segments(p, levels);
  const double tau = load.tau;
  const double I0 = periodic_initial_current(p, levels, load);
  const CurrentTrajectory traj = make_trajectory(p, levels, load, I0);
  const double gamma0 = external_gain(ext.A, tau);
  const double psi = std::atan(tau);
  const int m = s.m;

  if (tau > 0.0) {
    // Periodic Green's function response to moving switch j:
    // dE/da^j = 2 (u^{j-1} - u^j) W_j / (1 - e^{-2 pi tau}).
    Eigen::VectorXd J(m);
    for (int i = 0; i < m; ++i) {
      const double d = s.b[i] - s.a[i];
      const double x = tau * d;
      J[i] = traj.nodes[i] * d * phi1(2.0 * x) +
             s.u[i] * d * d * seg_g1(x) -
             gamma0 * kernel_exp_sin(s.a[i], s.b[i], ext.phi + psi, tau);
    }
    // Suffix sums T_j = sum_{i>=j} e^{-tau (a_i - alpha^j)} J_i over the
    // 0-based segments (segment j has left endpoint alpha^j).
    Eigen::VectorXd T(m);
    T[m - 1] = J[m - 1];
    for (int i = m - 2; i >= 1; --i)
      T[i] = J[i] + std::exp(-tau * (s.b[i] - s.a[i])) * T[i + 1];
    const double denom = -std::expm1(-kTwoPi * tau);
    for (int j = 1; j <= k; ++j) {
      // Wrapped part: segments already passed decay through the next period.
      double wrapped = 0.0;
      for (int i = 0; i < j; ++i)
        wrapped += std::exp(-tau * (s.a[i] + kTwoPi - s.a[j])) * J[i];
      const double du = s.u[j - 1] - s.u[j];
      grad[j - 1] = 2.0 * du * (T[j] + wrapped) / denom;
    }
    return grad;
  }

  // tau = 0 with the zero-mean convention: the shifted response integrates
  // against a current of zero mean, leaving only the suffix integral.
  Eigen::VectorXd P(m);
  for (int i = 0; i < m; ++i) {
    const double d = s.b[i] - s.a[i];
    P[i] = traj.nodes[i] * d + 0.5 * s.u[i] * d * d +
           gamma0 * (std::cos(s.b[i] + ext.phi) - std::cos(s.a[i] + ext.phi));
  }
  Eigen::VectorXd suffix(m + 1);
  suffix[m] = 0.0;
  for (int i = m - 1; i >= 0; --i) suffix[i] = suffix[i + 1] + P[i];
  for (int j = 1; j <= k; ++j) {
    const double du = s.u[j - 1] - s.u[j];
    grad[j - 1] = 2.0 * du * suffix[j];
  }
  return grad;
}

}  // namespace opp::energy
