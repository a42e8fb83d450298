#pragma once

#include "opp/converter.hpp"

#include <optional>

namespace opp::localsearch {

struct RefineConfig {
  int max_outer = 60;
  int max_inner = 600;
  double feas_tol = 1e-9;
  double grad_tol = 1e-6;
  double penalty0 = 10.0;
  int multi_start = 0;   // additional jittered seeds (deterministic)
  double jitter = -1.0;  // seed perturbation scale; < 0 means theta_lock / 2
};

struct IterateLog {
  int iter = 0;
  double energy = 0.0;
  double max_violation = 0.0;
};

enum class RefineStatus { Feasible, Infeasible };

struct RefineResult {
  RefineStatus status = RefineStatus::Infeasible;
  std::optional<PulsePattern> pattern;
  double energy = 0.0;
  double max_violation = 0.0;
  double projected_gradient = 0.0;
  std::vector<IterateLog> log;
};

/// Minimizes the signal energy over switching angles with the level sequence
/// frozen, honoring interlocking limits as hard linear constraints and the
/// harmonics specification through an augmented Lagrangian.
RefineResult refine(const PulsePattern& seed, const DeviceSpec& dev,
                    const DesignSpec& des, const LoadModel& load,
                    const RefineConfig& cfg = {});

/// Phase one alone: drive the constraint violation below tolerance, energy
/// ignored.
RefineResult restore_feasibility(const PulsePattern& seed,
                                 const DeviceSpec& dev, const DesignSpec& des,
                                 const RefineConfig& cfg = {});

}  // namespace opp::localsearch
