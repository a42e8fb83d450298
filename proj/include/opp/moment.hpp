#pragma once

#include "opp/converter.hpp"
#include "opp/graph.hpp"

#include <array>
#include <cstdint>
#include <string>
#include <vector>

namespace opp::moment {

/// Exponents of c, s, phi, I. Circle-reduced indices keep c-degree below two.
struct MomentIndex {
  std::array<int, 4> e{0, 0, 0, 0};

  int degree() const { return e[0] + e[1] + e[2] + e[3]; }
  int c() const { return e[0]; }
  int s() const { return e[1]; }
  int phi() const { return e[2]; }
  int I() const { return e[3]; }
  bool operator==(const MomentIndex& o) const { return e == o.e; }
  /// Graded ordering, then lexicographic in (c, s, phi, I).
  bool operator<(const MomentIndex& o) const;
};

MomentIndex operator+(const MomentIndex& a, const MomentIndex& b);

/// Reduced polynomial: list of (monomial, coefficient), sorted, consolidated.
using Poly = std::vector<std::pair<MomentIndex, double>>;

/// Graded-lex monomial basis of total degree <= degree_cap. num_states = 2
/// keeps only (phi, I); circle_constrained applies the c^2 = 1 - s^2 quotient.
std::vector<MomentIndex> moment_basis(int degree_cap, int num_states,
                                      bool circle_constrained);

/// Count for the degree-2*beta reduced basis over (c, s, phi, I).
std::int64_t reduced_basis_size(int beta);

/// Rewrites any c-degree >= 2 via c^2 = 1 - s^2.
Poly reduce_monomial(const MomentIndex& idx);
Poly reduce_poly(const Poly& p);

/// (-s d_c + c d_s + d_phi + (u - tau I) d_I) applied to a monomial, reduced.
Poly lie_derivative(const MomentIndex& w, double u_level, double tau);

/// Closed-form integral of cos^d1 sin^d2 over [0, upper].
double trig_moment(int d1, int d2, double upper);

enum class SlotKind { Initial, Terminal, Occupation, EdgeUp, EdgeDown };

struct Slot {
  SlotKind kind = SlotKind::Occupation;
  int n = 0;       // level (destination level for edges)
  int i = 0;       // stage (destination stage for edges)
  int src_n = 0;   // edge source level
  bool four_state = true;
  int var_offset = -1;   // -1 for variable-shared terminal slots
  int basis_count = 0;
  int shared_with = -1;  // slot index whose variables this one reads
  bool flip_I_sign = false;
};

struct BlockEntry {
  int row = 0, col = 0;  // row <= col
  int var = 0;
  double coeff = 0.0;
};

struct Block {
  std::string name;
  int size = 0;
  int slot = -1;
  std::vector<BlockEntry> entries;
};

struct LinearRow {
  std::string name;
  std::vector<std::pair<int, double>> terms;
  double rhs = 0.0;
};

struct BoxRow {
  std::string name;
  std::vector<std::pair<int, double>> terms;
  double lo = 0.0;
  double hi = 0.0;
};

/// Degree-beta relaxation: PSD blocks over pseudomoments plus linear rows.
struct SdpProblem {
  int beta = 1;
  double c_sym = 1.0;
  double i_bound = 0.0;
  double theta_lock = 0.0;
  graph::TransitionGraph g;
  LevelSet levels;

  std::vector<Slot> slots;
  int num_vars = 0;
  std::vector<Block> blocks;
  std::vector<LinearRow> equalities;
  std::vector<BoxRow> boxes;
  std::vector<std::pair<int, double>> objective;

  const std::vector<MomentIndex>& basis2(int cap) const;  // (phi, I)
  const std::vector<MomentIndex>& basis4(int cap) const;  // (c, s, phi, I)
  int find_slot(SlotKind kind, int n, int i, int src_n = 0) const;
  /// Variable index and sign multiplier realizing L[y_slot](x^idx).
  std::pair<int, double> term_of(int slot, const MomentIndex& idx) const;

  mutable std::vector<std::vector<MomentIndex>> basis_cache2, basis_cache4;
};

SdpProblem build_moment_problem(const graph::TransitionGraph& g,
                                const DeviceSpec& dev, const DesignSpec& des,
                                const LoadModel& load, int beta,
                                double i_bound = 0.0);

double default_current_bound(const LevelSet& levels);

enum class SolverStatus { Constructed, Imported, Infeasible, Error };

struct PseudoMomentSolution {
  Eigen::VectorXd y;
  SolverStatus status = SolverStatus::Error;
  double objective = 0.0;
  double duality_gap = 0.0;
};

/// Trajectory moments of a feasible pattern; satisfies every row and block of
/// the matching problem up to quadrature accuracy.
PseudoMomentSolution construct_moments_from_pattern(const SdpProblem& prob,
                                                    const PulsePattern& p,
                                                    const LoadModel& load);

Eigen::VectorXd equality_residuals(const SdpProblem& prob,
                                   const Eigen::VectorXd& y);
Eigen::VectorXd box_violations(const SdpProblem& prob,
                               const Eigen::VectorXd& y);
Eigen::MatrixXd assemble_block(const SdpProblem& prob, const Block& blk,
                               const Eigen::VectorXd& y);
/// Smallest eigenvalue across all PSD blocks.
double min_block_eigenvalue(const SdpProblem& prob, const Eigen::VectorXd& y);
double evaluate_objective(const SdpProblem& prob, const Eigen::VectorXd& y);

/// Sparse block-diagonal interchange writer (SDPA .dat-s layout) plus a JSON
/// sidecar mapping file variables back to (slot, monomial).
void export_interchange(const SdpProblem& prob, const std::string& path,
                        const std::string& sidecar_path = "");
PseudoMomentSolution import_solution(const std::string& path,
                                     const SdpProblem& prob);
/// Writes a solution file in the layout import_solution reads.
void write_solution_file(const std::string& path, const SdpProblem& prob,
                         const Eigen::VectorXd& y);

/// Parsed interchange file, for round-trip verification.
struct InterchangeData {
  int num_constraints = 0;
  std::vector<int> block_sizes;
  Eigen::VectorXd rhs;
  struct Entry {
    int mat, blk, row, col;
    double value;
  };
  std::vector<Entry> entries;
};
InterchangeData read_interchange(const std::string& path);

graph::DwellTable dwell_from_solution(const PseudoMomentSolution& sol,
                                      const SdpProblem& prob);

}  // namespace opp::moment
