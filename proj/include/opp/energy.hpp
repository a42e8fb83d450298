#pragma once

#include "opp/converter.hpp"

namespace opp::energy {

/// External source term of the normalized dynamics, u_ext = A cos(theta+phi).
struct External {
  double A = 0.0;
  double phi = 0.0;
};

/// Pulse-driven current trajectory: node currents at the extended angles
/// alpha^0 = 0, alpha^1..alpha^k, alpha^{k+1} = 2*pi.
struct CurrentTrajectory {
  PulsePattern pattern;
  LoadModel load;
  double I0 = 0.0;
  Eigen::VectorXd nodes;  // k + 2 values, nodes[0] = I0, nodes[k+1] = I(2*pi)
};

CurrentTrajectory make_trajectory(const PulsePattern& p, const LevelSet& levels,
                                  const LoadModel& load, double I0);

/// Initial current yielding the periodic (tau > 0) or zero-mean (tau = 0)
/// steady-state pulse response. Throws for tau = 0 with nonzero dc component.
double periodic_initial_current(const PulsePattern& p, const LevelSet& levels,
                                const LoadModel& load);

struct EnergyBreakdown {
  double ext = 0.0;
  double mix = 0.0;
  double pulse = 0.0;
  double total() const { return ext + 2.0 * mix + pulse; }
};

/// Closed-form energy for tau = 0.
EnergyBreakdown energy_pure_reactance(const CurrentTrajectory& traj,
                                      const LevelSet& levels,
                                      const External& ext);
/// Closed-form energy for tau > 0.
EnergyBreakdown energy_mixed(const CurrentTrajectory& traj,
                             const LevelSet& levels, const External& ext);
/// Regime dispatch with the steady-state initial current.
EnergyBreakdown signal_energy(const PulsePattern& p, const LevelSet& levels,
                              const LoadModel& load, const External& ext);
EnergyBreakdown signal_energy(const PulsePattern& p, const LevelSet& levels,
                              const LoadModel& load);

/// Independent check: exact per-segment flow plus adaptive quadrature of I^2.
double energy_numeric_oracle(const PulsePattern& p, const LevelSet& levels,
                             const LoadModel& load, double I0,
                             const External& ext, double tol);

/// d||I||^2 / d alpha with the steady-state initial current tracking alpha.
Eigen::VectorXd energy_gradient(const PulsePattern& p, const LevelSet& levels,
                                const LoadModel& load, const External& ext);

}  // namespace opp::energy
