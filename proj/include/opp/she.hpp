#pragma once

#include "opp/converter.hpp"

namespace opp::she {

/// Square selective-harmonic-elimination system on the first quarter of a
/// QW-symmetric pattern: b_1 pinned, listed odd orders zeroed.
struct SheSpec {
  Eigen::VectorXi quarter_levels;  // k/4 + 1 level indices, middle first
  double b1_target = 0.8;
  std::vector<int> eliminated_orders;  // k/4 - 1 odd orders
  int k = 0;
  LevelSet levels;
  double theta_lock = 0.0;
};

/// Standard spec: odd orders 3, 5, ... sized to make the system square.
SheSpec make_standard_spec(const Eigen::VectorXi& quarter_levels, double M,
                           int k, const LevelSet& levels, double theta_lock);

struct SheSolution {
  Eigen::VectorXd alpha_quarter;
  double residual = 0.0;
  bool theta_feasible = false;
  double min_gap = 0.0;  // smallest full-pattern interlocking gap
  std::vector<double> residual_history;
};

/// Multi-start damped Newton on the trigonometric residual system. Solutions
/// are deduplicated, sorted by first angle, and annotated with interlocking
/// feasibility (roots may violate the device limit).
std::vector<SheSolution> solve_she(const SheSpec& spec, int starts);

/// Residual vector of the system at the given quarter angles.
Eigen::VectorXd she_residual(const SheSpec& spec, const Eigen::VectorXd& alpha);

PulsePattern she_pattern(const SheSpec& spec, const SheSolution& sol);

}  // namespace opp::she
