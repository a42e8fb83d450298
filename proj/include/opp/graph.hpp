#pragma once

#include "opp/converter.hpp"

#include <cstdint>

namespace opp::graph {

/// Doubly indexed (level n, elapsed switches i) transition structure. The
/// analyzed horizon is k, k/2, or k/4 switches depending on symmetry; a
/// quarter-wave pattern with a lossy load is tracked over the half period
/// (qw_as_half) with the mirror structure enforced downstream.
class TransitionGraph {
 public:
  int num_levels = 0;
  int k = 0;  // full-period switch count
  Symmetry symmetry = Symmetry::FW;
  bool unipolar = false;
  bool qw_as_half = false;
  int horizon = 0;        // analyzed switch count
  double span = kTwoPi;   // analyzed angle span, 2*pi / segment_fraction
  int segment_fraction = 1;  // 1 (FW), 2 (HW), 4 (QW quarter)
  int designated_start = -1;  // middle level for QW, -1 otherwise

  bool has_vertex(int n, int i) const;
  int vertex_count() const;
  int edge_count() const;
  /// Stage-0 vertices admissible as path starts.
  std::vector<int> start_levels() const;
  /// True when a path from start level n0 may terminate at (n, horizon).
  bool terminal_admissible(int n0, int n) const;
  int mirror_level(int n) const { return num_levels + 1 - n; }

  std::vector<std::vector<char>> present;  // [stage][level-1]
};

/// QW requires odd N; counts obey |V| = N(k+1) and |E| = 2(N-1)k for FW.
TransitionGraph build_graph(int N, int k, Symmetry sym, bool unipolar);

/// Half-period tracking of a QW pattern (required once tau > 0).
TransitionGraph extend_qw_to_half(const TransitionGraph& quarter);

/// All admissible level sequences over the analyzed horizon, lexicographic.
std::vector<std::vector<int>> enumerate_paths(const TransitionGraph& g,
                                              std::uint64_t cap = 10000000);
std::uint64_t count_paths(const TransitionGraph& g);

/// Nonnegative dwell angles per vertex; masses sum to the analyzed span.
struct DwellTable {
  Eigen::MatrixXd xi;  // (horizon+1) x N, stage-major

  double mass() const { return xi.sum(); }
  double& at(int n, int i) { return xi(i, n - 1); }
  double at(int n, int i) const { return xi(i, n - 1); }
};

/// Restriction of a pattern to the graph's analyzed segment (half period for
/// qw_as_half graphs, after verifying QW structure).
PatternSegment analyzed_segment(const PulsePattern& p, const LevelSet& levels,
                                const TransitionGraph& g);

DwellTable pattern_to_dwell(const PulsePattern& p, const LevelSet& levels,
                            const TransitionGraph& g);
DwellTable mix_dwell(const std::vector<DwellTable>& tables,
                     const Eigen::VectorXd& weights);
/// Greedy extraction (argmax start, argmax neighbor per stage, prefix-sum
/// angles); ties break toward the smaller level. Returns the full pattern.
PulsePattern extract_pattern(const DwellTable& xi, const TransitionGraph& g);

struct DwellReport {
  bool nonnegative = true;
  bool mass_ok = true;
  bool interlocking_ok = true;
  std::vector<int> failing_stages;
  double mass = 0.0;
};
DwellReport validate_dwell(const DwellTable& xi, const TransitionGraph& g,
                           double theta_lock, double tol = 1e-9);

}  // namespace opp::graph
