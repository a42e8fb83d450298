#include "opp/converter.hpp"

#include <algorithm>
#include <cmath>
#include <complex>
#include <sstream>
#include <stdexcept>

namespace opp {

std::string to_string(Symmetry s) {
  switch (s) {
    case Symmetry::FW: return "FW";
    case Symmetry::HW: return "HW";
    case Symmetry::QW: return "QW";
  }
  return "FW";
}

Symmetry symmetry_from_string(const std::string& s) {
  if (s == "FW") return Symmetry::FW;
  if (s == "HW") return Symmetry::HW;
  if (s == "QW") return Symmetry::QW;
  throw std::invalid_argument("unknown symmetry: " + s);
}

LevelSet::LevelSet(Eigen::VectorXd levels) : levels_(std::move(levels)) {
  if (levels_.size() < 2) throw std::invalid_argument("LevelSet needs N >= 2");
  for (int i = 0; i < levels_.size(); ++i) {
    if (!std::isfinite(levels_[i]))
      throw std::invalid_argument("LevelSet values must be finite");
    if (i > 0 && levels_[i] <= levels_[i - 1])
      throw std::invalid_argument("LevelSet must be strictly increasing");
  }
}

LevelSet::LevelSet(std::initializer_list<double> levels)
    : LevelSet(Eigen::Map<const Eigen::VectorXd>(levels.begin(),
                                                 static_cast<long>(levels.size()))
                   .eval()) {}

int LevelSet::middle_index() const {
  if (size() % 2 == 0)
    throw std::invalid_argument("middle level requires odd N");
  return (size() + 1) / 2;
}

bool LevelSet::has_middle_zero(double tol) const {
  return size() % 2 == 1 && std::abs(value((size() + 1) / 2)) <= tol;
}

bool LevelSet::sign_symmetric(double tol) const {
  const int N = size();
  for (int n = 1; n <= N; ++n)
    if (std::abs(value(N + 1 - n) + value(n)) > tol) return false;
  return true;
}

DeviceSpec DeviceSpec::make(double f1, double Ts, LevelSet levels) {
  if (f1 <= 0 || Ts <= 0)
    throw std::invalid_argument("f1 and Ts must be positive");
  DeviceSpec d{f1, Ts, kTwoPi * f1 * Ts, std::move(levels)};
  return d;
}

DeviceSpec DeviceSpec::with_lock_angle(double theta_lock, LevelSet levels) {
  if (theta_lock <= 0)
    throw std::invalid_argument("interlocking angle must be positive");
  DeviceSpec d{50.0, theta_lock / (kTwoPi * 50.0), theta_lock,
               std::move(levels)};
  return d;
}

LoadModel LoadModel::make(double R, double L, double A, double phi, double Vdc,
                          double I_nominal, double f1) {
  if (L <= 0) throw std::invalid_argument("L_load must be positive");
  if (R < 0) throw std::invalid_argument("R_load must be nonnegative");
  LoadModel m;
  m.R_load = R;
  m.L_load = L;
  m.tau = R / L;
  m.A = A;
  m.phi = phi;
  m.Vdc = Vdc;
  m.I_nominal = I_nominal;
  m.omega1 = kTwoPi * f1;
  return m;
}

LoadModel LoadModel::normalized(double tau, double A, double phi) {
  if (tau < 0) throw std::invalid_argument("tau must be nonnegative");
  LoadModel m;
  m.R_load = tau;
  m.L_load = 1.0;
  m.tau = tau;
  m.A = A;
  m.phi = phi;
  m.Vdc = 2.0;
  m.I_nominal = 1.0;
  m.omega1 = 1.0;
  return m;
}

double LoadModel::proportionality() const {
  const double denom = std::sqrt(2.0) * I_nominal * omega1 *
                       std::sqrt(R_load * R_load + L_load * L_load);
  if (!(denom > 0)) throw std::domain_error("C_p is not finite and positive");
  return (Vdc / 2.0) / denom;
}

PulsePattern::PulsePattern(Eigen::VectorXi n, Eigen::VectorXd alpha)
    : n_(std::move(n)), alpha_(std::move(alpha)) {
  const int k = static_cast<int>(alpha_.size());
  if (n_.size() != k + 1)
    throw std::invalid_argument("level sequence must have k+1 entries");
  if (k % 2 != 0) throw std::invalid_argument("switch count must be even");
  if (k > 0 && n_[0] != n_[k])
    throw std::invalid_argument("pattern must be periodic (n^0 = n^k)");
  for (int i = 0; i < k; ++i) {
    if (std::abs(n_[i + 1] - n_[i]) != 1)
      throw std::invalid_argument("adjacent levels must differ by one step");
    if (!(alpha_[i] >= 0.0 && alpha_[i] <= kTwoPi))
      throw std::invalid_argument("angles must lie in [0, 2*pi]");
    if (i > 0 && !(alpha_[i] > alpha_[i - 1]))
      throw std::invalid_argument("angles must be strictly increasing");
  }
  for (int i = 0; i <= k; ++i)
    if (n_[i] < 1) throw std::invalid_argument("level indices are 1-based");
}

PulsePattern::PulsePattern(int level_index)
    : n_(Eigen::VectorXi::Constant(1, level_index)), alpha_(0) {
  if (level_index < 1)
    throw std::invalid_argument("level indices are 1-based");
}

Eigen::VectorXd PulsePattern::level_values(const LevelSet& levels) const {
  Eigen::VectorXd u(n_.size());
  for (int i = 0; i < n_.size(); ++i) {
    if (n_[i] > levels.size())
      throw std::invalid_argument("level index out of range for level set");
    u[i] = levels.value(n_[i]);
  }
  return u;
}

int HarmonicsSpec::max_order() const {
  int m = 0;
  for (const auto& e : entries) m = std::max(m, e.order);
  return m;
}

HarmonicsSpec& HarmonicsSpec::equality(Kind kind, int order, double value) {
  entries.push_back({kind, order, value, value});
  return *this;
}

HarmonicsSpec& HarmonicsSpec::box(Kind kind, int order, double lo, double hi) {
  if (lo > hi) throw std::invalid_argument("harmonics box has lo > hi");
  entries.push_back({kind, order, lo, hi});
  return *this;
}

DesignSpec& DesignSpec::with_modulation_index(double M) {
  harmonics.equality(HarmonicsSpec::Kind::Sine, 1, M);
  return *this;
}

// -- Waveform and spectrum ---------------------------------------------------

double sample_waveform(const Eigen::VectorXd& u, const Eigen::VectorXd& alpha,
                       double theta) {
  if (!(theta >= 0.0 && theta <= kTwoPi))
    throw std::invalid_argument("theta outside [0, 2*pi]");
  // Right continuity: theta = alpha^i selects u^i.
  const double* begin = alpha.data();
  const double* end = begin + alpha.size();
  const long idx = std::upper_bound(begin, end, theta) - begin;
  return u[idx];
}

double sample_waveform(const PulsePattern& p, const LevelSet& levels,
                       double theta) {
  return sample_waveform(p.level_values(levels), p.angles(), theta);
}

FourierSpectrum fourier_of_sequence(const Eigen::VectorXd& u,
                                    const Eigen::VectorXd& alpha, int lmax) {
  if (lmax < 1) throw std::invalid_argument("lmax must be >= 1");
  const int k = static_cast<int>(alpha.size());
  FourierSpectrum s;
  s.a = Eigen::VectorXd::Zero(lmax);
  s.b = Eigen::VectorXd::Zero(lmax);
  s.a0 = 2.0 * u[0];
  for (int i = 1; i <= k; ++i) {
    const double du = u[i] - u[i - 1];
    s.a0 -= du * alpha[i - 1] / kPi;
    for (int l = 1; l <= lmax; ++l) {
      s.a[l - 1] -= du * std::sin(l * alpha[i - 1]) / (l * kPi);
      s.b[l - 1] += du * std::cos(l * alpha[i - 1]) / (l * kPi);
    }
  }
  return s;
}

FourierSpectrum fourier_coefficients(const PulsePattern& p,
                                     const LevelSet& levels, int lmax) {
  return fourier_of_sequence(p.level_values(levels), p.angles(), lmax);
}

FourierSpectrum load_spectrum(const FourierSpectrum& s, const LoadModel& load) {
  if (s.lmax() < 1) throw std::invalid_argument("spectrum must have lmax >= 1");
  if (load.R_load == 0.0 && load.L_load == 0.0)
    throw std::domain_error("degenerate load: R_load = L_load = 0");
  FourierSpectrum out;
  out.a = Eigen::VectorXd::Zero(s.lmax());
  out.b = Eigen::VectorXd::Zero(s.lmax());
  if (std::abs(s.a0) > 0.0) {
    if (load.R_load == 0.0)
      throw std::domain_error("dc component with zero load resistance");
    out.a0 = s.a0 / load.R_load;
  }
  for (int l = 1; l <= s.lmax(); ++l) {
    std::complex<double> num(s.a[l - 1], s.b[l - 1]);
    if (l == 1) num += load.A * std::exp(std::complex<double>(0.0, load.phi));
    const std::complex<double> den(load.R_load, l * load.omega1 * load.L_load);
    const std::complex<double> v = num / den;
    out.a[l - 1] = v.real();
    out.b[l - 1] = v.imag();
  }
  return out;
}

std::pair<double, double> current_fundamental(const FourierSpectrum& s,
                                              const LoadModel& load) {
  // dI/dtheta = u - A cos(theta+phi) - tau I, steady state at l = 1:
  // a cos + b sin maps to ((a tau - b)/(tau^2+1), (a + b tau)/(tau^2+1)).
  const double tau = load.tau;
  const double a = s.a[0] - load.A * std::cos(load.phi);
  const double b = s.b[0] + load.A * std::sin(load.phi);
  const double d = tau * tau + 1.0;
  return {(a * tau - b) / d, (a + b * tau) / d};
}

double tdd_from_spectrum(const FourierSpectrum& s_load, double C_p) {
  double acc = 0.5 * s_load.a0 * s_load.a0;
  for (int l = 2; l <= s_load.lmax(); ++l)
    acc += s_load.a[l - 1] * s_load.a[l - 1] + s_load.b[l - 1] * s_load.b[l - 1];
  return C_p * std::sqrt(acc);
}

double tdd_time_domain(double energy, double a1_tilde, double b1_tilde,
                       double C_p) {
  double rad = energy / kPi - a1_tilde * a1_tilde - b1_tilde * b1_tilde;
  if (rad < -1e-10)
    throw std::domain_error("inconsistent inputs: negative TDD radicand");
  if (rad < 0.0) rad = 0.0;
  return C_p * std::sqrt(rad);
}

// -- Symmetry ----------------------------------------------------------------

namespace {

void require_level_count(const PulsePattern& p, const LevelSet& levels) {
  if (p.level_indices().maxCoeff() > levels.size())
    throw std::invalid_argument("pattern level index exceeds level set");
}

SymmetryReport check_half_wave(const PulsePattern& p, const LevelSet& levels,
                               double tol) {
  SymmetryReport rep;
  const int N = levels.size();
  const int k = p.switch_count();
  if (!levels.sign_symmetric()) {
    rep.holds = false;
    rep.violations.push_back("levels not symmetric about zero");
    return rep;
  }
  if (k % 2 != 0) {
    rep.holds = false;
    rep.violations.push_back("odd switch count");
    return rep;
  }
  const int h = k / 2;
  for (int i = 0; i <= h; ++i) {
    if (p.level_index(i + h) != N + 1 - p.level_index(i)) {
      rep.holds = false;
      std::ostringstream os;
      os << "level " << i + h << " is not the mirror of level " << i;
      rep.violations.push_back(os.str());
    }
  }
  for (int i = 1; i <= h; ++i) {
    const double d = p.angle(i + h) - p.angle(i) - kPi;
    if (std::abs(d) > tol) {
      std::ostringstream os;
      os << "angle pair (" << i << ", " << i + h << ") offset from pi by " << d;
      rep.holds = false;
      rep.violations.push_back(os.str());
    }
  }
  return rep;
}

SymmetryReport check_quarter_wave(const PulsePattern& p,
                                  const LevelSet& levels, double tol) {
  SymmetryReport rep = check_half_wave(p, levels, tol);
  const int k = p.switch_count();
  if (k % 4 != 0) {
    rep.holds = false;
    rep.violations.push_back("switch count not divisible by four");
    return rep;
  }
  const int q = k / 4;
  const int h = k / 2;
  for (int i = 0; i <= h; ++i) {
    if (p.level_index(h - i) != p.level_index(i)) {
      rep.holds = false;
      std::ostringstream os;
      os << "half-period level sequence not palindromic at stage " << i;
      rep.violations.push_back(os.str());
    }
  }
  for (int i = 1; i <= q; ++i) {
    const double d = p.angle(h + 1 - i) + p.angle(i) - kPi;
    if (std::abs(d) > tol) {
      rep.holds = false;
      std::ostringstream os;
      os << "mirror pair (" << i << ", " << h + 1 - i
         << ") misses pi - alpha by " << d;
      rep.violations.push_back(os.str());
    }
  }
  return rep;
}

}  // namespace

SymmetryReport check_symmetry(const PulsePattern& p, const LevelSet& levels,
                              Symmetry sym, double tol) {
  require_level_count(p, levels);
  switch (sym) {
    case Symmetry::FW: return SymmetryReport{};
    case Symmetry::HW: return check_half_wave(p, levels, tol);
    case Symmetry::QW: return check_quarter_wave(p, levels, tol);
  }
  return SymmetryReport{};
}

PulsePattern expand_half_to_full(const Eigen::VectorXi& n_half,
                                 const Eigen::VectorXd& alpha_half, int N) {
  const int h = static_cast<int>(alpha_half.size());
  if (n_half.size() != h + 1)
    throw std::invalid_argument("half sequence must have k/2+1 levels");
  if (n_half[h] != N + 1 - n_half[0])
    throw std::invalid_argument("half pattern must end at the mirror level");
  for (int i = 0; i < h; ++i)
    if (!(alpha_half[i] > 0.0 && alpha_half[i] < kPi))
      throw std::invalid_argument("half-period angles must lie in (0, pi)");
  Eigen::VectorXi n(2 * h + 1);
  Eigen::VectorXd alpha(2 * h);
  for (int i = 0; i <= h; ++i) n[i] = n_half[i];
  for (int i = 1; i <= h; ++i) n[h + i] = N + 1 - n_half[i];
  for (int i = 0; i < h; ++i) {
    alpha[i] = alpha_half[i];
    alpha[h + i] = alpha_half[i] + kPi;
  }
  return PulsePattern(std::move(n), std::move(alpha));
}

PulsePattern expand_quarter_to_full(const Eigen::VectorXi& n_quarter,
                                    const Eigen::VectorXd& alpha_quarter,
                                    int N) {
  const int q = static_cast<int>(alpha_quarter.size());
  if (n_quarter.size() != q + 1)
    throw std::invalid_argument("quarter sequence must have k/4+1 levels");
  if (N % 2 == 0) throw std::invalid_argument("quarter symmetry needs odd N");
  if (n_quarter[0] != (N + 1) / 2)
    throw std::invalid_argument("quarter pattern must start at the middle level");
  for (int i = 0; i < q; ++i)
    if (!(alpha_quarter[i] > 0.0 && alpha_quarter[i] < kPi / 2.0))
      throw std::invalid_argument("quarter angles must lie in (0, pi/2)");
  Eigen::VectorXi n_half(2 * q + 1);
  Eigen::VectorXd alpha_half(2 * q);
  for (int i = 0; i <= q; ++i) n_half[i] = n_quarter[i];
  for (int i = 1; i <= q; ++i) n_half[q + i] = n_quarter[q - i];
  for (int i = 0; i < q; ++i) {
    alpha_half[i] = alpha_quarter[i];
    alpha_half[q + i] = kPi - alpha_quarter[q - 1 - i];
  }
  return expand_half_to_full(n_half, alpha_half, N);
}

PatternSegment segment_of(const PulsePattern& p, const LevelSet& levels,
                          Symmetry sym) {
  PatternSegment seg;
  if (sym == Symmetry::FW) {
    seg.n = p.level_indices();
    seg.alpha = p.angles();
    seg.span = kTwoPi;
    return seg;
  }
  auto rep = check_symmetry(p, levels, sym);
  if (!rep.holds)
    throw std::invalid_argument("pattern lacks the requested symmetry: " +
                                (rep.violations.empty() ? std::string()
                                                        : rep.violations[0]));
  const int k = p.switch_count();
  const int h = sym == Symmetry::HW ? k / 2 : k / 4;
  seg.n = p.level_indices().head(h + 1);
  seg.alpha = p.angles().head(h);
  seg.span = sym == Symmetry::HW ? kPi : kPi / 2.0;
  return seg;
}

// -- Constraint report -------------------------------------------------------

bool ConstraintReport::all_pass() const {
  for (const auto& c : checks)
    if (!c.pass) return false;
  return true;
}

const ConstraintCheck* ConstraintReport::find(const std::string& name) const {
  for (const auto& c : checks)
    if (c.name == name) return &c;
  return nullptr;
}

ConstraintReport check_constraints(const PulsePattern& p, const DeviceSpec& dev,
                                   const DesignSpec& des) {
  constexpr double kEqTol = 1e-9;
  ConstraintReport rep;
  const int k = p.switch_count();
  const int N = dev.levels.size();
  const double theta = dev.theta_lock;

  {
    ConstraintCheck c{"adjacency", true, ""};
    for (int i = 0; i < k; ++i)
      if (std::abs(p.level_index(i + 1) - p.level_index(i)) != 1) {
        c.pass = false;
        c.detail = "step violation at index " + std::to_string(i);
        break;
      }
    rep.checks.push_back(c);
  }
  {
    ConstraintCheck c{"periodicity", p.level_index(0) == p.level_index(k), ""};
    rep.checks.push_back(c);
  }
  {
    ConstraintCheck c{"level_range", true, ""};
    for (int i = 0; i <= k; ++i)
      if (p.level_index(i) < 1 || p.level_index(i) > N) {
        c.pass = false;
        c.detail = "index " + std::to_string(p.level_index(i)) +
                   " outside 1.." + std::to_string(N);
        break;
      }
    rep.checks.push_back(c);
  }
  {
    ConstraintCheck c{"interlocking", true, ""};
    for (int i = 1; i < k; ++i) {
      const double gap = p.angle(i + 1) - p.angle(i);
      if (gap < theta - 1e-12) {
        c.pass = false;
        std::ostringstream os;
        os << "gap " << gap << " below " << theta << " at index " << i;
        c.detail = os.str();
        break;
      }
    }
    if (c.pass && k > 0) {
      const double wrap = p.angle(1) + kTwoPi - p.angle(k);
      if (wrap < theta - 1e-12) {
        c.pass = false;
        std::ostringstream os;
        os << "wrap-around gap " << wrap << " below " << theta;
        c.detail = os.str();
      }
    }
    rep.checks.push_back(c);
  }
  {
    ConstraintCheck c{"switch_count", k == des.k, ""};
    if (!c.pass)
      c.detail = "pattern has " + std::to_string(k) + ", design wants " +
                 std::to_string(des.k);
    rep.checks.push_back(c);
  }
  {
    ConstraintCheck c{"symmetry", true, ""};
    if (des.symmetry != Symmetry::FW) {
      auto s = check_symmetry(p, dev.levels, des.symmetry);
      c.pass = s.holds;
      if (!s.holds && !s.violations.empty()) c.detail = s.violations[0];
    }
    rep.checks.push_back(c);
  }
  {
    ConstraintCheck c{"unipolarity", true, ""};
    if (des.unipolar) {
      const Eigen::VectorXd u = p.level_values(dev.levels);
      // u(theta) >= 0 over [0, pi): every dwell intersecting the first half.
      for (int i = 0; i <= k; ++i) {
        const double lo = i == 0 ? 0.0 : p.angle(i);
        if (lo < kPi - 1e-15 && u[i] < -1e-12) {
          c.pass = false;
          c.detail = "negative level on the first half-period at stage " +
                     std::to_string(i);
          break;
        }
      }
    }
    rep.checks.push_back(c);
  }
  {
    const int lmax = std::max(1, des.harmonics.max_order());
    const FourierSpectrum s = fourier_coefficients(p, dev.levels, lmax);
    for (const auto& e : des.harmonics.entries) {
      double v;
      if (e.kind == HarmonicsSpec::Kind::Cosine)
        v = e.order == 0 ? s.a0 : s.a[e.order - 1];
      else if (e.order == 0)
        v = 0.0;
      else
        v = s.b[e.order - 1];
      ConstraintCheck c;
      std::ostringstream name;
      name << "harmonic_" << (e.kind == HarmonicsSpec::Kind::Cosine ? "a" : "b")
           << e.order;
      c.name = name.str();
      c.pass = v >= e.lo - kEqTol && v <= e.hi + kEqTol;
      std::ostringstream os;
      os << "value " << v << " box [" << e.lo << ", " << e.hi << "]";
      c.detail = os.str();
      rep.checks.push_back(c);
    }
  }
  return rep;
}

// -- Chebyshev ---------------------------------------------------------------

double chebyshev_T(int l, double c) {
  if (l < 0) throw std::invalid_argument("order must be nonnegative");
  if (l == 0) return 1.0;
  double prev = 1.0, cur = c;
  for (int i = 2; i <= l; ++i) {
    const double next = 2.0 * c * cur - prev;
    prev = cur;
    cur = next;
  }
  return cur;
}

double chebyshev_U(int l, double c) {
  if (l < 0) throw std::invalid_argument("order must be nonnegative");
  if (l == 0) return 1.0;
  double prev = 1.0, cur = 2.0 * c;
  for (int i = 2; i <= l; ++i) {
    const double next = 2.0 * c * cur - prev;
    prev = cur;
    cur = next;
  }
  return cur;
}

}  // namespace opp
