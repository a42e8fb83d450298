#include "opp/graph.hpp"

#include <algorithm>
#include <cmath>
#include <stdexcept>

namespace opp::graph {

bool TransitionGraph::has_vertex(int n, int i) const {
  if (n < 1 || n > num_levels || i < 0 || i > horizon) return false;
  return present[i][n - 1] != 0;
}

int TransitionGraph::vertex_count() const {
  int c = 0;
  for (const auto& stage : present)
    for (char v : stage) c += v != 0;
  return c;
}

int TransitionGraph::edge_count() const {
  int c = 0;
  for (int i = 0; i < horizon; ++i)
    for (int n = 1; n <= num_levels; ++n) {
      if (!has_vertex(n, i)) continue;
      c += has_vertex(n - 1, i + 1);
      c += has_vertex(n + 1, i + 1);
    }
  return c;
}

std::vector<int> TransitionGraph::start_levels() const {
  std::vector<int> out;
  if (qw_as_half) {
    if (designated_start > 0) out.push_back(designated_start);
    return out;
  }
  for (int n = 1; n <= num_levels; ++n)
    if (has_vertex(n, 0)) out.push_back(n);
  return out;
}

bool TransitionGraph::terminal_admissible(int n0, int n) const {
  if (!has_vertex(n, horizon)) return false;
  switch (symmetry) {
    case Symmetry::FW: return n == n0;
    case Symmetry::HW: return n == mirror_level(n0);
    case Symmetry::QW:
      return qw_as_half ? n == mirror_level(n0) : true;
  }
  return false;
}

TransitionGraph build_graph(int N, int k, Symmetry sym, bool unipolar) {
  if (N < 2) throw std::invalid_argument("need at least two levels");
  if (k < 0 || k % 2 != 0)
    throw std::invalid_argument("switch count must be a nonnegative even");
  if (sym == Symmetry::QW && N % 2 == 0)
    throw std::invalid_argument("quarter-wave symmetry requires odd N");
  if (sym == Symmetry::QW && k % 4 != 0)
    throw std::invalid_argument("quarter-wave symmetry requires 4 | k");
  if (unipolar && sym == Symmetry::FW)
    throw std::invalid_argument("unipolarity applies only with HW or QW");

  TransitionGraph g;
  g.num_levels = N;
  g.k = k;
  g.symmetry = sym;
  g.unipolar = unipolar;
  switch (sym) {
    case Symmetry::FW:
      g.horizon = k;
      g.segment_fraction = 1;
      break;
    case Symmetry::HW:
      g.horizon = k / 2;
      g.segment_fraction = 2;
      break;
    case Symmetry::QW:
      g.horizon = k / 4;
      g.segment_fraction = 4;
      g.designated_start = (N + 1) / 2;
      break;
  }
  g.span = kTwoPi / g.segment_fraction;
  g.present.assign(g.horizon + 1, std::vector<char>(N, 1));

  const int mid2 = N + 1;  // 2n >= N+1 keeps the nonnegative half
  for (int i = 0; i <= g.horizon; ++i)
    for (int n = 1; n <= N; ++n) {
      bool keep = true;
      if (unipolar && 2 * n < mid2) keep = false;
      if (sym == Symmetry::QW && ((n - g.designated_start + i) % 2 + 2) % 2 != 0)
        keep = false;
      g.present[i][n - 1] = keep ? 1 : 0;
    }
  return g;
}

TransitionGraph extend_qw_to_half(const TransitionGraph& quarter) {
  if (quarter.symmetry != Symmetry::QW || quarter.qw_as_half)
    throw std::invalid_argument("expected a quarter-horizon QW graph");
  TransitionGraph g;
  g.num_levels = quarter.num_levels;
  g.k = quarter.k;
  g.symmetry = Symmetry::QW;
  g.unipolar = quarter.unipolar;
  g.qw_as_half = true;
  g.horizon = quarter.k / 2;
  g.segment_fraction = 2;
  g.span = kPi;
  g.designated_start = quarter.designated_start;
  g.present.assign(g.horizon + 1, std::vector<char>(g.num_levels, 1));
  for (int i = 0; i <= g.horizon; ++i)
    for (int n = 1; n <= g.num_levels; ++n) {
      bool keep = true;
      if (quarter.unipolar && 2 * n < g.num_levels + 1) keep = false;
      if (((n - g.designated_start + i) % 2 + 2) % 2 != 0) keep = false;
      g.present[i][n - 1] = keep ? 1 : 0;
    }
  return g;
}

namespace {

// Path counts into stage `horizon` from one start level, then summed over
// admissible terminals.
std::uint64_t count_from(const TransitionGraph& g, int n0) {
  std::vector<std::uint64_t> cur(g.num_levels, 0), next(g.num_levels, 0);
  if (!g.has_vertex(n0, 0)) return 0;
  cur[n0 - 1] = 1;
  for (int i = 1; i <= g.horizon; ++i) {
    std::fill(next.begin(), next.end(), 0);
    for (int n = 1; n <= g.num_levels; ++n) {
      if (!g.has_vertex(n, i)) continue;
      std::uint64_t ways = 0;
      if (n > 1 && g.has_vertex(n - 1, i - 1)) ways += cur[n - 2];
      if (n < g.num_levels && g.has_vertex(n + 1, i - 1)) ways += cur[n];
      next[n - 1] = ways;
    }
    cur.swap(next);
  }
  std::uint64_t total = 0;
  for (int n = 1; n <= g.num_levels; ++n)
    if (g.terminal_admissible(n0, n)) total += cur[n - 1];
  return total;
}

void dfs_paths(const TransitionGraph& g, int n0, std::vector<int>& path,
               std::vector<std::vector<int>>& out) {
  const int i = static_cast<int>(path.size()) - 1;
  if (i == g.horizon) {
    if (g.terminal_admissible(n0, path.back())) out.push_back(path);
    return;
  }
  const int n = path.back();
  for (int step : {-1, +1}) {
    const int m = n + step;
    if (m >= 1 && m <= g.num_levels && g.has_vertex(m, i + 1)) {
      path.push_back(m);
      dfs_paths(g, n0, path, out);
      path.pop_back();
    }
  }
}

}  // namespace

std::uint64_t count_paths(const TransitionGraph& g) {
  std::uint64_t total = 0;
  for (int n0 : g.start_levels()) total += count_from(g, n0);
  return total;
}

std::vector<std::vector<int>> enumerate_paths(const TransitionGraph& g,
                                              std::uint64_t cap) {
  const std::uint64_t n = count_paths(g);
  if (n > cap)
    throw std::length_error("path count " + std::to_string(n) +
                            " exceeds enumeration cap; use count_paths");
  std::vector<std::vector<int>> out;
  out.reserve(static_cast<size_t>(n));
  for (int n0 : g.start_levels()) {
    std::vector<int> path{n0};
    dfs_paths(g, n0, path, out);
  }
  return out;
}

PatternSegment analyzed_segment(const PulsePattern& p, const LevelSet& levels,
                                const TransitionGraph& g) {
  if (g.qw_as_half) {
    auto rep = check_symmetry(p, levels, Symmetry::QW);
    if (!rep.holds)
      throw std::invalid_argument("pattern is not QW symmetric");
    PatternSegment seg;
    const int h = p.switch_count() / 2;
    seg.n = p.level_indices().head(h + 1);
    seg.alpha = p.angles().head(h);
    seg.span = kPi;
    return seg;
  }
  return segment_of(p, levels, g.symmetry);
}

DwellTable pattern_to_dwell(const PulsePattern& p, const LevelSet& levels,
                            const TransitionGraph& g) {
  if (p.switch_count() != g.k)
    throw std::invalid_argument("pattern switch count does not match graph");
  if (levels.size() != g.num_levels)
    throw std::invalid_argument("level set does not match graph");
  const PatternSegment seg = analyzed_segment(p, levels, g);
  const int h = g.horizon;
  if (static_cast<int>(seg.alpha.size()) != h)
    throw std::invalid_argument("segment length does not match graph horizon");
  DwellTable t;
  t.xi = Eigen::MatrixXd::Zero(h + 1, g.num_levels);
  for (int i = 0; i <= h; ++i) {
    const int n = seg.n[i];
    if (!g.has_vertex(n, i))
      throw std::invalid_argument("pattern visits a vertex absent from graph");
    const double lo = i == 0 ? 0.0 : seg.alpha[i - 1];
    const double hi = i == h ? seg.span : seg.alpha[i];
    t.at(n, i) = hi - lo;
  }
  return t;
}

DwellTable mix_dwell(const std::vector<DwellTable>& tables,
                     const Eigen::VectorXd& weights) {
  if (tables.empty() || weights.size() != static_cast<long>(tables.size()))
    throw std::invalid_argument("tables and weights must align");
  if (weights.minCoeff() < 0.0)
    throw std::invalid_argument("weights must be nonnegative");
  if (std::abs(weights.sum() - 1.0) > 1e-12)
    throw std::invalid_argument("weights must sum to one");
  DwellTable out;
  out.xi = Eigen::MatrixXd::Zero(tables[0].xi.rows(), tables[0].xi.cols());
  for (size_t t = 0; t < tables.size(); ++t) {
    if (tables[t].xi.rows() != out.xi.rows() ||
        tables[t].xi.cols() != out.xi.cols())
      throw std::invalid_argument("dwell tables are over different graphs");
    out.xi += weights[static_cast<long>(t)] * tables[t].xi;
  }
  return out;
}

PulsePattern extract_pattern(const DwellTable& xi, const TransitionGraph& g) {
  const int h = g.horizon;
  if (xi.xi.rows() != h + 1 || xi.xi.cols() != g.num_levels)
    throw std::invalid_argument("dwell table does not match graph");
  if (!(xi.xi.sum() > 0.0))
    throw std::invalid_argument("all-zero dwell table");

  std::vector<int> path(h + 1);
  {
    int best = -1;
    double best_val = -1.0;
    for (int n = 1; n <= g.num_levels; ++n) {
      if (!g.has_vertex(n, 0)) continue;
      if (xi.at(n, 0) > best_val) {
        best_val = xi.at(n, 0);
        best = n;
      }
    }
    if (best < 0) throw std::invalid_argument("graph has no stage-0 vertex");
    path[0] = best;
  }
  for (int i = 1; i <= h; ++i) {
    int best = -1;
    double best_val = -1.0;
    for (int m : {path[i - 1] - 1, path[i - 1] + 1}) {
      if (m < 1 || m > g.num_levels || !g.has_vertex(m, i)) continue;
      if (i == h && !g.terminal_admissible(path[0], m)) continue;
      if (xi.at(m, i) > best_val) {
        best_val = xi.at(m, i);
        best = m;
      }
    }
    if (best < 0)
      throw std::runtime_error("extraction reached a dead end at stage " +
                               std::to_string(i));
    path[i] = best;
  }

  long double total = 0.0L;
  for (int i = 0; i <= h; ++i) total += xi.at(path[i], i);
  if (!(total > 0.0L))
    throw std::runtime_error("selected path carries no dwell mass");
  long double scale = static_cast<long double>(g.span) / total;
  if (std::abs(static_cast<double>(scale) - 1.0) < 1e-14) scale = 1.0L;

  Eigen::VectorXd alpha(h);
  long double prefix = 0.0L;
  for (int i = 1; i <= h; ++i) {
    prefix += xi.at(path[i - 1], i - 1);
    alpha[i - 1] = static_cast<double>(prefix * scale);
  }
  Eigen::VectorXi n(h + 1);
  for (int i = 0; i <= h; ++i) n[i] = path[i];

  switch (g.symmetry) {
    case Symmetry::FW:
      return PulsePattern(n, alpha);
    case Symmetry::HW:
      return expand_half_to_full(n, alpha, g.num_levels);
    case Symmetry::QW:
      if (g.qw_as_half) return expand_half_to_full(n, alpha, g.num_levels);
      if (path[0] != g.designated_start)
        throw std::runtime_error(
            "extracted quarter path does not start at the middle level");
      return expand_quarter_to_full(n, alpha, g.num_levels);
  }
  throw std::logic_error("unreachable");
}

DwellReport validate_dwell(const DwellTable& xi, const TransitionGraph& g,
                           double theta_lock, double tol) {
  const double kTol = tol;
  DwellReport rep;
  rep.mass = xi.xi.sum();
  rep.nonnegative = xi.xi.minCoeff() >= -kTol;
  rep.mass_ok = std::abs(rep.mass - g.span) <= kTol * std::max(1.0, g.span);
  const int h = g.horizon;
  Eigen::VectorXd col = xi.xi.rowwise().sum();
  for (int i = 1; i < h; ++i) {
    if (col[i] < theta_lock - kTol) {
      rep.interlocking_ok = false;
      rep.failing_stages.push_back(i);
    }
  }
  const bool quarter = g.symmetry == Symmetry::QW && !g.qw_as_half;
  const bool half_of_qw = g.qw_as_half;
  if (h >= 1) {
    if (quarter || half_of_qw) {
      // Mirror images across the segment ends supply the other half of each
      // interlocking gap.
      if (col[0] < theta_lock / 2.0 - kTol) {
        rep.interlocking_ok = false;
        rep.failing_stages.push_back(0);
      }
      if (col[h] < theta_lock / 2.0 - kTol) {
        rep.interlocking_ok = false;
        rep.failing_stages.push_back(h);
      }
    } else if (col[0] + col[h] < theta_lock - kTol) {
      rep.interlocking_ok = false;
      rep.failing_stages.push_back(0);
      rep.failing_stages.push_back(h);
    }
  }
  return rep;
}

}  // namespace opp::graph
