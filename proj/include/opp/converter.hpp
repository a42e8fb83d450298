#pragma once

#include <Eigen/Dense>

#include <optional>
#include <string>
#include <vector>

namespace opp {

inline constexpr double kTwoPi = 6.283185307179586476925286766559;
inline constexpr double kPi = 3.1415926535897932384626433832795;

enum class Symmetry { FW, HW, QW };

std::string to_string(Symmetry s);
Symmetry symmetry_from_string(const std::string& s);

/// Ordered per-unit voltage levels u_1..u_N of the converter.
class LevelSet {
 public:
  LevelSet() = default;  // empty placeholder, assign before use
  explicit LevelSet(Eigen::VectorXd levels);
  LevelSet(std::initializer_list<double> levels);

  int size() const { return static_cast<int>(levels_.size()); }
  /// Level value for a 1-based index.
  double value(int n) const { return levels_[n - 1]; }
  const Eigen::VectorXd& values() const { return levels_; }

  /// 1-based index of the zero-centered middle level; requires odd N.
  int middle_index() const;
  bool has_middle_zero(double tol = 1e-12) const;
  /// u_{N+1-n} = -u_n for all n.
  bool sign_symmetric(double tol = 1e-12) const;

 private:
  Eigen::VectorXd levels_;
};

/// Fixed device parameters; theta_lock = 2*pi*f1*Ts.
struct DeviceSpec {
  double f1 = 50.0;
  double Ts = 0.0;
  double theta_lock = 0.0;
  LevelSet levels;

  static DeviceSpec make(double f1, double Ts, LevelSet levels);
  static DeviceSpec with_lock_angle(double theta_lock, LevelSet levels);
};

/// R-L load with external source, all waveform math in the angle domain.
struct LoadModel {
  double R_load = 0.0;
  double L_load = 1.0;
  double tau = 0.0;  // R_load / L_load
  double A = 0.0;    // external amplitude (per-unit)
  double phi = 0.0;  // external phase (rad)
  double Vdc = 2.0;
  double I_nominal = 1.0;
  double omega1 = 1.0;

  static LoadModel make(double R, double L, double A, double phi, double Vdc,
                        double I_nominal, double f1);
  /// Per-unit load with R = tau, L = 1, omega1 = 1.
  static LoadModel normalized(double tau, double A = 0.0, double phi = 0.0);

  double proportionality() const;  // C_p
};

/// Level-index sequence n^0..n^k plus switching angles a^1..a^k.
class PulsePattern {
 public:
  PulsePattern(Eigen::VectorXi n, Eigen::VectorXd alpha);
  /// Constant pattern with no switching.
  explicit PulsePattern(int level_index);

  int switch_count() const { return static_cast<int>(alpha_.size()); }
  const Eigen::VectorXi& level_indices() const { return n_; }
  const Eigen::VectorXd& angles() const { return alpha_; }
  int level_index(int i) const { return n_[i]; }
  double angle(int i) const { return alpha_[i - 1]; }  // 1-based switch index

  /// Level values u^0..u^k under the given level set.
  Eigen::VectorXd level_values(const LevelSet& levels) const;

 private:
  Eigen::VectorXi n_;
  Eigen::VectorXd alpha_;
};

/// Truncated Fourier data a0, a_1..a_lmax, b_1..b_lmax.
struct FourierSpectrum {
  double a0 = 0.0;
  Eigen::VectorXd a;
  Eigen::VectorXd b;

  int lmax() const { return static_cast<int>(a.size()); }
};

struct HarmonicsSpec {
  enum class Kind { Cosine, Sine };
  struct Entry {
    Kind kind = Kind::Sine;
    int order = 1;
    double lo = 0.0;
    double hi = 0.0;
    bool is_equality(double tol = 1e-15) const { return hi - lo <= tol; }
  };
  std::vector<Entry> entries;

  int max_order() const;
  HarmonicsSpec& equality(Kind kind, int order, double value);
  HarmonicsSpec& box(Kind kind, int order, double lo, double hi);
};

struct DesignSpec {
  int k = 0;
  Symmetry symmetry = Symmetry::FW;
  bool unipolar = false;
  HarmonicsSpec harmonics;

  /// Adds the sine-order-1 equality b_1 = M.
  DesignSpec& with_modulation_index(double M);
};

// -- Waveform and spectrum ---------------------------------------------------

/// Right-continuous piecewise-constant waveform value at theta in [0, 2*pi].
double sample_waveform(const PulsePattern& p, const LevelSet& levels,
                       double theta);
/// Same on a raw value sequence (u^0..u^k against angles), no adjacency checks.
double sample_waveform(const Eigen::VectorXd& u, const Eigen::VectorXd& alpha,
                       double theta);

FourierSpectrum fourier_coefficients(const PulsePattern& p,
                                     const LevelSet& levels, int lmax);
FourierSpectrum fourier_of_sequence(const Eigen::VectorXd& u,
                                    const Eigen::VectorXd& alpha, int lmax);

/// Per-harmonic filtering (a_l + j b_l) / (R + j l w1 L); the external
/// contribution A exp(j phi) enters at l = 1 only.
FourierSpectrum load_spectrum(const FourierSpectrum& s, const LoadModel& load);

/// Fundamental (a~_1, b~_1) of the normalized load current as driven by the
/// dynamics dI/dtheta = u - A cos(theta+phi) - tau I in steady state.
std::pair<double, double> current_fundamental(const FourierSpectrum& s,
                                              const LoadModel& load);

double tdd_from_spectrum(const FourierSpectrum& s_load, double C_p);
double tdd_time_domain(double energy, double a1_tilde, double b1_tilde,
                       double C_p);

// -- Symmetry ----------------------------------------------------------------

struct SymmetryReport {
  bool holds = true;
  std::vector<std::string> violations;
};

SymmetryReport check_symmetry(const PulsePattern& p, const LevelSet& levels,
                              Symmetry sym, double tol = 1e-9);

/// Builds the full 2*pi pattern from the half-period data (k/2 switches).
PulsePattern expand_half_to_full(const Eigen::VectorXi& n_half,
                                 const Eigen::VectorXd& alpha_half, int N);
/// Builds the full pattern from the first-quarter data (k/4 switches).
PulsePattern expand_quarter_to_full(const Eigen::VectorXi& n_quarter,
                                    const Eigen::VectorXd& alpha_quarter,
                                    int N);
/// Restriction of a symmetric pattern to its analyzed segment.
struct PatternSegment {
  Eigen::VectorXi n;
  Eigen::VectorXd alpha;
  double span = kTwoPi;
};
PatternSegment segment_of(const PulsePattern& p, const LevelSet& levels,
                          Symmetry sym);

// -- Constraint report -------------------------------------------------------

struct ConstraintCheck {
  std::string name;
  bool pass = true;
  std::string detail;
};

struct ConstraintReport {
  std::vector<ConstraintCheck> checks;
  bool all_pass() const;
  const ConstraintCheck* find(const std::string& name) const;
};

ConstraintReport check_constraints(const PulsePattern& p, const DeviceSpec& dev,
                                   const DesignSpec& des);

// -- Chebyshev ---------------------------------------------------------------

double chebyshev_T(int l, double c);
double chebyshev_U(int l, double c);

}  // namespace opp
