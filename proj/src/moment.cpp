#include "opp/moment.hpp"

#include "opp/energy.hpp"

#include <algorithm>
#include <cmath>
#include <map>
#include <sstream>
#include <stdexcept>

namespace opp::moment {

bool MomentIndex::operator<(const MomentIndex& o) const {
  if (degree() != o.degree()) return degree() < o.degree();
  return e < o.e;
}

MomentIndex operator+(const MomentIndex& a, const MomentIndex& b) {
  return MomentIndex{{a.e[0] + b.e[0], a.e[1] + b.e[1], a.e[2] + b.e[2],
                      a.e[3] + b.e[3]}};
}

std::vector<MomentIndex> moment_basis(int degree_cap, int num_states,
                                      bool circle_constrained) {
  if (degree_cap < 0) throw std::invalid_argument("degree cap must be >= 0");
  if (num_states != 2 && num_states != 4)
    throw std::invalid_argument("slots carry two or four states");
  std::vector<MomentIndex> out;
  if (num_states == 2) {
    for (int p = 0; p <= degree_cap; ++p)
      for (int q = 0; p + q <= degree_cap; ++q)
        out.push_back(MomentIndex{{0, 0, p, q}});
  } else {
    const int cmax = circle_constrained ? 1 : degree_cap;
    for (int c = 0; c <= cmax; ++c)
      for (int s = 0; c + s <= degree_cap; ++s)
        for (int p = 0; c + s + p <= degree_cap; ++p)
          for (int q = 0; c + s + p + q <= degree_cap; ++q)
            out.push_back(MomentIndex{{c, s, p, q}});
  }
  std::sort(out.begin(), out.end());
  return out;
}

std::int64_t reduced_basis_size(int beta) {
  auto choose = [](std::int64_t n, std::int64_t r) {
    if (r < 0 || r > n) return static_cast<std::int64_t>(0);
    std::int64_t v = 1;
    for (std::int64_t i = 1; i <= r; ++i) v = v * (n - r + i) / i;
    return v;
  };
  return choose(3 + 2 * beta, 3) + choose(3 + 2 * beta - 1, 2 * beta - 1);
}

namespace {

void accumulate_reduced(const MomentIndex& idx, double coeff,
                        std::map<MomentIndex, double>& acc) {
  if (idx.c() < 2) {
    acc[idx] += coeff;
    return;
  }
  // c^2 = 1 - s^2
  MomentIndex base = idx;
  base.e[0] -= 2;
  accumulate_reduced(base, coeff, acc);
  MomentIndex s2 = base;
  s2.e[1] += 2;
  accumulate_reduced(s2, -coeff, acc);
}

Poly flatten(const std::map<MomentIndex, double>& acc) {
  Poly out;
  for (const auto& [idx, c] : acc)
    if (c != 0.0) out.emplace_back(idx, c);
  return out;
}

}  // namespace

Poly reduce_monomial(const MomentIndex& idx) {
  std::map<MomentIndex, double> acc;
  accumulate_reduced(idx, 1.0, acc);
  return flatten(acc);
}

Poly reduce_poly(const Poly& p) {
  std::map<MomentIndex, double> acc;
  for (const auto& [idx, c] : p) accumulate_reduced(idx, c, acc);
  return flatten(acc);
}

Poly lie_derivative(const MomentIndex& w, double u_level, double tau) {
  std::map<MomentIndex, double> acc;
  if (w.c() >= 1) {  // -s d_c
    MomentIndex t = w;
    t.e[0] -= 1;
    t.e[1] += 1;
    accumulate_reduced(t, -static_cast<double>(w.c()), acc);
  }
  if (w.s() >= 1) {  // c d_s
    MomentIndex t = w;
    t.e[1] -= 1;
    t.e[0] += 1;
    accumulate_reduced(t, static_cast<double>(w.s()), acc);
  }
  if (w.phi() >= 1) {  // d_phi
    MomentIndex t = w;
    t.e[2] -= 1;
    accumulate_reduced(t, static_cast<double>(w.phi()), acc);
  }
  if (w.I() >= 1) {  // (u - tau I) d_I
    MomentIndex t = w;
    t.e[3] -= 1;
    accumulate_reduced(t, u_level * static_cast<double>(w.I()), acc);
    if (tau != 0.0) accumulate_reduced(w, -tau * static_cast<double>(w.I()), acc);
  }
  return flatten(acc);
}

double trig_moment(int d1, int d2, double upper) {
  if (d1 < 0 || d2 < 0) throw std::invalid_argument("negative trig exponent");
  const double T = upper;
  if (d1 == 0 && d2 == 0) return T;
  const double cT = std::cos(T), sT = std::sin(T);
  if (d1 == 1 && d2 == 0) return sT;
  if (d1 == 0 && d2 == 1) return 1.0 - cT;
  if (d1 == 1 && d2 == 1) return 0.5 * sT * sT;
  if (d1 >= 2) {
    // int c^p s^q = [c^{p-1} s^{q+1}]/(p+q) + (p-1)/(p+q) int c^{p-2} s^q,
    // the boundary term vanishing at zero since q+1 >= 1.
    const double boundary = std::pow(cT, d1 - 1) * std::pow(sT, d2 + 1);
    return boundary / (d1 + d2) +
           (d1 - 1.0) / (d1 + d2) * trig_moment(d1 - 2, d2, upper);
  }
  // d2 >= 2: int c^p s^q = [-c^{p+1} s^{q-1}]/(p+q) + (q-1)/(p+q) int c^p
  // s^{q-2}; again no contribution at zero.
  const double boundary = -std::pow(cT, d1 + 1) * std::pow(sT, d2 - 1);
  return boundary / (d1 + d2) +
         (d2 - 1.0) / (d1 + d2) * trig_moment(d1, d2 - 2, upper);
}

// -- Problem assembly ----------------------------------------------------------

const std::vector<MomentIndex>& SdpProblem::basis2(int cap) const {
  if (basis_cache2.size() <= static_cast<size_t>(cap))
    basis_cache2.resize(cap + 1);
  if (basis_cache2[cap].empty() && cap >= 0)
    basis_cache2[cap] = moment_basis(cap, 2, false);
  return basis_cache2[cap];
}

const std::vector<MomentIndex>& SdpProblem::basis4(int cap) const {
  if (basis_cache4.size() <= static_cast<size_t>(cap))
    basis_cache4.resize(cap + 1);
  if (basis_cache4[cap].empty() && cap >= 0)
    basis_cache4[cap] = moment_basis(cap, 4, true);
  return basis_cache4[cap];
}

int SdpProblem::find_slot(SlotKind kind, int n, int i, int src_n) const {
  for (size_t s = 0; s < slots.size(); ++s) {
    const Slot& sl = slots[s];
    if (sl.kind == kind && sl.n == n && sl.i == i &&
        (kind != SlotKind::EdgeUp && kind != SlotKind::EdgeDown
             ? true
             : sl.src_n == src_n))
      return static_cast<int>(s);
  }
  return -1;
}

std::pair<int, double> SdpProblem::term_of(int slot,
                                           const MomentIndex& idx) const {
  const Slot& sl = slots[slot];
  double sign = 1.0;
  int target = slot;
  if (sl.shared_with >= 0) {
    target = sl.shared_with;
    if (sl.flip_I_sign && idx.I() % 2 == 1) sign = -sign;
  }
  const Slot& base = slots[target];
  const auto& basis =
      base.four_state ? basis4(2 * beta) : basis2(2 * beta);
  const auto it = std::lower_bound(basis.begin(), basis.end(), idx);
  if (it == basis.end() || !(*it == idx))
    throw std::logic_error("monomial outside slot basis");
  return {base.var_offset + static_cast<int>(it - basis.begin()), sign};
}

namespace {

using graph::TransitionGraph;

struct SupportBounds {
  double span = kTwoPi;
  int horizon = 0;
  double theta = 0.0;
  bool wrap_each_side = false;
  double max_dwell = 0.0;
  double stage0_clock_hi = 0.0;
  double init_phi_lo = 0.0;
  double init_phi_hi = 0.0;

  double occ_arc_lo(int i) const {
    if (i == 0) return 0.0;
    return (i - 1) * theta + (wrap_each_side ? theta / 2.0 : 0.0);
  }
  double occ_arc_hi(int i) const {
    if (i == horizon) return span;
    return span - (horizon - i - 1) * theta -
           (wrap_each_side ? theta / 2.0 : 0.0);
  }
  double guard_arc_lo(int i) const {
    return (i - 1) * theta + (wrap_each_side ? theta / 2.0 : 0.0);
  }
  double guard_arc_hi(int i) const {
    return span - (horizon - i) * theta -
           (wrap_each_side ? theta / 2.0 : 0.0);
  }
  double clock_hi(int i) const { return i == 0 ? stage0_clock_hi : max_dwell; }
  double guard_clock_hi() const { return std::max(stage0_clock_hi, max_dwell); }
};

SupportBounds support_bounds(const TransitionGraph& g, double theta) {
  SupportBounds b;
  b.span = g.span;
  b.horizon = g.horizon;
  b.theta = theta;
  b.wrap_each_side =
      g.qw_as_half || (g.symmetry == Symmetry::QW && !g.qw_as_half);
  const int h = g.horizon;
  b.max_dwell = h >= 1 ? g.span - (h - 1) * theta : g.span;
  if (b.max_dwell <= 0)
    throw std::invalid_argument(
        "interlocking angle leaves no room for the requested switch count");
  if (h == 0) {
    b.stage0_clock_hi = g.span;
    b.init_phi_lo = 0.0;
    b.init_phi_hi = 0.0;
    return b;
  }
  if (b.wrap_each_side) {
    b.init_phi_lo = theta / 2.0;
    b.init_phi_hi = b.max_dwell - theta / 2.0;
    b.stage0_clock_hi = 2.0 * b.init_phi_hi;
  } else {
    b.init_phi_lo = 0.0;
    b.init_phi_hi = b.max_dwell;
    b.stage0_clock_hi = b.max_dwell;
  }
  if (b.init_phi_hi <= b.init_phi_lo)
    throw std::invalid_argument(
        "interlocking angle leaves no admissible first switching angle");
  return b;
}

// Affine support constraint over (c, s, phi, I): c0 + a.x >= 0.
struct Affine {
  double c0 = 0.0;
  std::array<double, 4> a{0.0, 0.0, 0.0, 0.0};
  std::string tag;
};

std::vector<Affine> box_constraints(double phi_lo, double phi_hi, double ib) {
  std::vector<Affine> out;
  out.push_back({-phi_lo, {0, 0, 1, 0}, "phi_lo"});
  out.push_back({phi_hi, {0, 0, -1, 0}, "phi_hi"});
  out.push_back({ib, {0, 0, 0, 1}, "I_lo"});
  out.push_back({ib, {0, 0, 0, -1}, "I_hi"});
  return out;
}

std::vector<Affine> arc_constraint(double lo, double hi) {
  std::vector<Affine> out;
  const double width = hi - lo;
  if (width >= kTwoPi - 1e-15) return out;
  const double mid = 0.5 * (lo + hi);
  out.push_back(
      {-std::cos(width / 2.0), {std::cos(mid), std::sin(mid), 0, 0}, "arc"});
  return out;
}

struct Usefulness {
  // useful[i][n-1]: vertex lies on an admissible start-to-terminal path.
  std::vector<std::vector<char>> useful;
  bool is(int n, int i) const { return useful[i][n - 1] != 0; }
};

Usefulness compute_useful(const TransitionGraph& g,
                          const std::vector<int>& starts) {
  const int N = g.num_levels, h = g.horizon;
  Usefulness u;
  u.useful.assign(h + 1, std::vector<char>(N, 0));
  for (int n0 : starts) {
    if (!g.has_vertex(n0, 0)) continue;
    std::vector<std::vector<char>> fwd(h + 1, std::vector<char>(N, 0));
    fwd[0][n0 - 1] = 1;
    for (int i = 1; i <= h; ++i)
      for (int n = 1; n <= N; ++n) {
        if (!g.has_vertex(n, i)) continue;
        const bool from_below = n > 1 && fwd[i - 1][n - 2];
        const bool from_above = n < N && fwd[i - 1][n];
        fwd[i][n - 1] = from_below || from_above;
      }
    std::vector<std::vector<char>> bwd(h + 1, std::vector<char>(N, 0));
    for (int n = 1; n <= N; ++n)
      if (g.terminal_admissible(n0, n) && fwd[h][n - 1]) bwd[h][n - 1] = 1;
    for (int i = h - 1; i >= 0; --i)
      for (int n = 1; n <= N; ++n) {
        if (!g.has_vertex(n, i)) continue;
        const bool to_below = n > 1 && bwd[i + 1][n - 2];
        const bool to_above = n < N && bwd[i + 1][n];
        bwd[i][n - 1] = to_below || to_above;
      }
    for (int i = 0; i <= h; ++i)
      for (int n = 1; n <= N; ++n)
        if (fwd[i][n - 1] && bwd[i][n - 1]) u.useful[i][n - 1] = 1;
  }
  return u;
}

bool harmonic_annihilated(const TransitionGraph& g, HarmonicsSpec::Kind kind,
                          int q) {
  const bool quarter = g.symmetry == Symmetry::QW && !g.qw_as_half;
  switch (g.symmetry) {
    case Symmetry::FW: return false;
    case Symmetry::HW: return q % 2 == 0;
    case Symmetry::QW:
      if (quarter)
        return kind == HarmonicsSpec::Kind::Cosine || q % 2 == 0;
      return q % 2 == 0;
  }
  return false;
}

// Chebyshev polynomial in c as exponent/coefficient pairs.
std::vector<std::pair<int, double>> cheb_poly(int l, bool second_kind) {
  std::vector<double> prev{1.0};
  if (l == 0) return {{0, 1.0}};
  std::vector<double> cur = second_kind ? std::vector<double>{0.0, 2.0}
                                        : std::vector<double>{0.0, 1.0};
  for (int i = 2; i <= l; ++i) {
    std::vector<double> next(i + 1, 0.0);
    for (size_t d = 0; d < cur.size(); ++d)
      if (cur[d] != 0.0) next[d + 1] += 2.0 * cur[d];
    for (size_t d = 0; d < prev.size(); ++d)
      if (prev[d] != 0.0) next[d] -= prev[d];
    prev = std::move(cur);
    cur = std::move(next);
  }
  std::vector<std::pair<int, double>> out;
  for (size_t d = 0; d < cur.size(); ++d)
    if (cur[d] != 0.0) out.emplace_back(static_cast<int>(d), cur[d]);
  return out;
}

// cos(q theta) -> T_q(c); sin(q theta) -> s U_{q-1}(c); reduced.
Poly harmonic_polynomial(HarmonicsSpec::Kind kind, int q) {
  Poly p;
  if (kind == HarmonicsSpec::Kind::Cosine) {
    for (auto [d, coef] : cheb_poly(q, false))
      p.emplace_back(MomentIndex{{d, 0, 0, 0}}, coef);
  } else {
    if (q == 0) return {};
    for (auto [d, coef] : cheb_poly(q - 1, true))
      p.emplace_back(MomentIndex{{d, 1, 0, 0}}, coef);
  }
  return reduce_poly(p);
}

class RowBuilder {
 public:
  explicit RowBuilder(const SdpProblem& prob) : prob_(prob) {}
  void add(int slot, const MomentIndex& idx, double coeff) {
    if (coeff == 0.0) return;
    auto [var, sign] = prob_.term_of(slot, idx);
    acc_[var] += sign * coeff;
  }
  void add_poly(int slot, const Poly& p, double scale) {
    for (const auto& [idx, c] : p) add(slot, idx, scale * c);
  }
  std::vector<std::pair<int, double>> take() {
    std::vector<std::pair<int, double>> out;
    for (const auto& [v, c] : acc_)
      if (c != 0.0) out.emplace_back(v, c);
    acc_.clear();
    return out;
  }

 private:
  const SdpProblem& prob_;
  std::map<int, double> acc_;
};

void add_moment_matrix_block(SdpProblem& prob, int slot_id,
                             const std::string& name) {
  const Slot& slot = prob.slots[slot_id];
  const auto& rows =
      slot.four_state ? prob.basis4(prob.beta) : prob.basis2(prob.beta);
  Block blk;
  blk.name = name;
  blk.slot = slot_id;
  blk.size = static_cast<int>(rows.size());
  for (int r = 0; r < blk.size; ++r)
    for (int c = r; c < blk.size; ++c) {
      const Poly p = reduce_monomial(rows[r] + rows[c]);
      for (const auto& [idx, coef] : p) {
        auto [var, sign] = prob.term_of(slot_id, idx);
        blk.entries.push_back({r, c, var, sign * coef});
      }
    }
  prob.blocks.push_back(std::move(blk));
}

void add_localizing_block(SdpProblem& prob, int slot_id, const Affine& g,
                          const std::string& name) {
  const Slot& slot = prob.slots[slot_id];
  const int cap = prob.beta - 1;  // affine constraints: ceil(1/2) = 1
  if (cap < 0) return;
  const auto& rows = slot.four_state ? prob.basis4(cap) : prob.basis2(cap);
  Block blk;
  blk.name = name;
  blk.slot = slot_id;
  blk.size = static_cast<int>(rows.size());
  for (int r = 0; r < blk.size; ++r)
    for (int c = r; c < blk.size; ++c) {
      const MomentIndex base = rows[r] + rows[c];
      Poly p;
      if (g.c0 != 0.0) p.emplace_back(base, g.c0);
      for (int d = 0; d < 4; ++d) {
        if (g.a[d] == 0.0) continue;
        MomentIndex t = base;
        t.e[d] += 1;
        p.emplace_back(t, g.a[d]);
      }
      p = reduce_poly(p);
      for (const auto& [idx, coef] : p) {
        auto [var, sign] = prob.term_of(slot_id, idx);
        blk.entries.push_back({r, c, var, sign * coef});
      }
    }
  prob.blocks.push_back(std::move(blk));
}

std::string vertex_tag(const char* base, int n, int i) {
  std::ostringstream os;
  os << base << "_" << n << "_" << i;
  return os.str();
}

}  // namespace

double default_current_bound(const LevelSet& levels) {
  const double umax = std::max(std::abs(levels.values()[0]),
                               std::abs(levels.values()[levels.size() - 1]));
  return 1.0 + kTwoPi * umax;
}

SdpProblem build_moment_problem(const TransitionGraph& g, const DeviceSpec& dev,
                                const DesignSpec& des, const LoadModel& load,
                                int beta, double i_bound) {
  if (beta < 1) throw std::invalid_argument("beta must be >= 1");
  if (g.num_levels != dev.levels.size())
    throw std::invalid_argument("graph and device level counts differ");
  if (g.symmetry == Symmetry::QW && !g.qw_as_half && load.tau > 0.0)
    throw std::invalid_argument(
        "QW with tau > 0 requires the half-period construction "
        "(extend_qw_to_half)");
  if (g.symmetry != Symmetry::FW && !dev.levels.sign_symmetric(1e-12))
    throw std::invalid_argument(
        "HW/QW constructions require levels symmetric about zero");
  if (des.k != g.k || des.symmetry != g.symmetry || des.unipolar != g.unipolar)
    throw std::invalid_argument("design spec does not match the graph");
  if (g.horizon < 1)
    throw std::invalid_argument(
        "relaxation needs at least one analyzed switch; a constant pattern "
        "has nothing to optimize");

  SdpProblem prob;
  prob.beta = beta;
  prob.g = g;
  prob.levels = dev.levels;
  prob.theta_lock = dev.theta_lock;
  prob.i_bound = i_bound > 0.0 ? i_bound : default_current_bound(dev.levels);
  switch (g.symmetry) {
    case Symmetry::FW: prob.c_sym = 1.0; break;
    case Symmetry::HW: prob.c_sym = 2.0; break;
    case Symmetry::QW: prob.c_sym = g.qw_as_half ? 2.0 : 4.0; break;
  }

  const SupportBounds sb = support_bounds(g, dev.theta_lock);
  const bool quarter = g.symmetry == Symmetry::QW && !g.qw_as_half;

  // Start levels carrying initial measures: QW pins the middle level.
  std::vector<int> starts;
  if (g.symmetry == Symmetry::QW)
    starts.push_back(g.designated_start);
  else
    for (int n = 1; n <= g.num_levels; ++n)
      if (g.has_vertex(n, 0)) starts.push_back(n);
  const Usefulness useful = compute_useful(g, starts);

  const int h = g.horizon;
  const int N = g.num_levels;

  // Slot layout: initial, terminal, occupation, step-up, step-down.
  for (int n : starts)
    if (useful.is(n, 0))
      prob.slots.push_back({SlotKind::Initial, n, 0, 0, false, -1, 0, -1, false});
  const size_t first_terminal = prob.slots.size();
  for (int n = 1; n <= N; ++n) {
    if (!useful.is(n, h)) continue;
    bool admissible = false;
    for (int n0 : starts) admissible |= g.terminal_admissible(n0, n);
    if (!admissible) continue;
    prob.slots.push_back({SlotKind::Terminal, n, h, 0, false, -1, 0, -1, false});
  }
  const size_t first_occ = prob.slots.size();
  for (int i = 0; i <= h; ++i)
    for (int n = 1; n <= N; ++n)
      if (useful.is(n, i))
        prob.slots.push_back(
            {SlotKind::Occupation, n, i, 0, true, -1, 0, -1, false});
  for (int i = 1; i <= h; ++i)
    for (int n = 2; n <= N; ++n)  // step up arrives at n from n-1
      if (useful.is(n - 1, i - 1) && useful.is(n, i))
        prob.slots.push_back(
            {SlotKind::EdgeUp, n, i, n - 1, true, -1, 0, -1, false});
  for (int i = 1; i <= h; ++i)
    for (int n = 1; n <= N - 1; ++n)  // step down arrives at n from n+1
      if (useful.is(n + 1, i - 1) && useful.is(n, i))
        prob.slots.push_back(
            {SlotKind::EdgeDown, n, i, n + 1, true, -1, 0, -1, false});

  // Variable layout; FW/HW terminals read the matching initial slot.
  const auto b2 = static_cast<int>(prob.basis2(2 * beta).size());
  const auto b4 = static_cast<int>(prob.basis4(2 * beta).size());
  int offset = 0;
  for (size_t sidx = 0; sidx < prob.slots.size(); ++sidx) {
    Slot& slot = prob.slots[sidx];
    slot.basis_count = slot.four_state ? b4 : b2;
    if (slot.kind == SlotKind::Terminal && !quarter) {
      const int src_level = g.symmetry == Symmetry::FW
                                ? slot.n
                                : g.mirror_level(slot.n);
      const int init = prob.find_slot(SlotKind::Initial, src_level, 0);
      if (init < 0) throw std::logic_error("terminal without matching initial");
      slot.shared_with = init;
      slot.flip_I_sign = g.symmetry != Symmetry::FW;
      continue;
    }
    slot.var_offset = offset;
    offset += slot.basis_count;
  }
  // Shared slots resolve their variable offsets through the base slot.
  for (Slot& slot : prob.slots)
    if (slot.shared_with >= 0)
      slot.var_offset = prob.slots[slot.shared_with].var_offset;
  prob.num_vars = offset;

  // PSD blocks: main moment matrix plus localizing blocks per constraint.
  for (size_t sidx = 0; sidx < prob.slots.size(); ++sidx) {
    const Slot& slot = prob.slots[sidx];
    std::string base;
    switch (slot.kind) {
      case SlotKind::Initial: base = vertex_tag("init", slot.n, 0); break;
      case SlotKind::Terminal: base = vertex_tag("term", slot.n, slot.i); break;
      case SlotKind::Occupation: base = vertex_tag("occ", slot.n, slot.i); break;
      case SlotKind::EdgeUp:
        base = vertex_tag("up", slot.n, slot.i);
        break;
      case SlotKind::EdgeDown:
        base = vertex_tag("down", slot.n, slot.i);
        break;
    }
    add_moment_matrix_block(prob, static_cast<int>(sidx), base + "_M");
    std::vector<Affine> gs;
    switch (slot.kind) {
      case SlotKind::Initial:
        gs = box_constraints(sb.init_phi_lo, sb.init_phi_hi, prob.i_bound);
        break;
      case SlotKind::Terminal:
        // Explicit terminal slots exist only for the quarter construction;
        // phi_T = span - alpha^{k'} obeys the mirrored initial ranges.
        gs = box_constraints(sb.init_phi_lo, sb.init_phi_hi, prob.i_bound);
        break;
      case SlotKind::Occupation: {
        gs = box_constraints(0.0, sb.clock_hi(slot.i), prob.i_bound);
        auto arc = arc_constraint(sb.occ_arc_lo(slot.i), sb.occ_arc_hi(slot.i));
        gs.insert(gs.end(), arc.begin(), arc.end());
        break;
      }
      case SlotKind::EdgeUp:
      case SlotKind::EdgeDown: {
        gs = box_constraints(dev.theta_lock, sb.guard_clock_hi(), prob.i_bound);
        auto arc =
            arc_constraint(sb.guard_arc_lo(slot.i), sb.guard_arc_hi(slot.i));
        gs.insert(gs.end(), arc.begin(), arc.end());
        break;
      }
    }
    if (slot.shared_with >= 0) continue;  // views add no new localizing facts
    for (const Affine& a : gs)
      add_localizing_block(prob, static_cast<int>(sidx),
                           a, base + "_loc_" + a.tag);
  }

  RowBuilder rb(prob);

  // Probability row over the admissible starts.
  {
    for (size_t sidx = 0; sidx < first_terminal; ++sidx)
      rb.add(static_cast<int>(sidx), MomentIndex{}, 1.0);
    prob.equalities.push_back({"probability", rb.take(), 1.0});
  }

  // Harmonics rows (Fourier-coefficient values): (C/pi) sum u_n L(poly).
  for (const auto& entry : des.harmonics.entries) {
    const bool structurally_zero =
        harmonic_annihilated(g, entry.kind, entry.order) ||
        (entry.kind == HarmonicsSpec::Kind::Sine && entry.order == 0);
    if (structurally_zero) {
      if (entry.lo > 1e-12 || entry.hi < -1e-12)
        throw std::invalid_argument(
            "harmonic identically zero by symmetry but box excludes zero");
      continue;
    }
    const int deg = std::max(entry.order, 1);
    if (deg > 2 * beta)
      throw std::invalid_argument(
          "harmonic order exceeds 2*beta; raise the relaxation degree");
    const Poly poly = harmonic_polynomial(entry.kind, entry.order);
    for (size_t sidx = first_occ; sidx < prob.slots.size(); ++sidx) {
      const Slot& slot = prob.slots[sidx];
      if (slot.kind != SlotKind::Occupation) continue;
      rb.add_poly(static_cast<int>(sidx), poly,
                  prob.c_sym / kPi * dev.levels.value(slot.n));
    }
    std::ostringstream name;
    name << "harmonic_"
         << (entry.kind == HarmonicsSpec::Kind::Cosine ? "a" : "b")
         << entry.order;
    if (entry.is_equality(1e-15))
      prob.equalities.push_back({name.str(), rb.take(), entry.lo});
    else
      prob.boxes.push_back({name.str(), rb.take(), entry.lo, entry.hi});
  }

  // Continuity rows: one per useful vertex and reduced test monomial.
  const auto& test_basis = prob.basis4(2 * beta);
  for (int i = 0; i <= h; ++i)
    for (int n = 1; n <= N; ++n) {
      if (!useful.is(n, i)) continue;
      const int occ = prob.find_slot(SlotKind::Occupation, n, i);
      const double u_n = dev.levels.value(n);
      for (const MomentIndex& w : test_basis) {
        // Flow accumulation.
        rb.add_poly(occ, lie_derivative(w, u_n, load.tau), 1.0);
        // Inflow: initial injection at stage 0, otherwise reset edges.
        if (i == 0) {
          const int init = prob.find_slot(SlotKind::Initial, n, 0);
          if (init >= 0 && w.s() == 0)
            rb.add(init, MomentIndex{{0, 0, w.phi(), w.I()}}, 1.0);
        } else {
          for (SlotKind kind : {SlotKind::EdgeUp, SlotKind::EdgeDown}) {
            const int src = kind == SlotKind::EdgeUp ? n - 1 : n + 1;
            const int e = prob.find_slot(kind, n, i, src);
            if (e >= 0 && w.phi() == 0) rb.add(e, w, 1.0);
          }
        }
        // Outflow: edges out, or terminal evaluation at the segment end.
        if (i < h) {
          for (SlotKind kind : {SlotKind::EdgeUp, SlotKind::EdgeDown}) {
            const int dst = kind == SlotKind::EdgeUp ? n + 1 : n - 1;
            if (dst < 1 || dst > N) continue;
            const int e = prob.find_slot(kind, dst, i + 1, n);
            if (e >= 0) rb.add(e, w, -1.0);
          }
        }
        if (i == h) {
          const int term = prob.find_slot(SlotKind::Terminal, n, h);
          if (term >= 0) {
            double coeff = 0.0;
            if (g.symmetry == Symmetry::FW) {
              coeff = w.s() == 0 ? 1.0 : 0.0;  // (c, s) = (1, 0)
            } else if (quarter) {
              coeff = w.c() == 0 ? 1.0 : 0.0;  // (c, s) = (0, 1)
            } else {
              coeff = w.s() == 0 ? (w.c() % 2 == 0 ? 1.0 : -1.0) : 0.0;
            }
            if (coeff != 0.0)
              rb.add(term, MomentIndex{{0, 0, w.phi(), w.I()}}, -coeff);
          }
        }
        auto terms = rb.take();
        if (terms.empty()) continue;
        std::ostringstream name;
        name << "continuity_" << n << "_" << i << "_" << w.c() << w.s()
             << w.phi() << w.I();
        prob.equalities.push_back({name.str(), std::move(terms), 0.0});
      }
    }

  // Uniformity rows over reduced (c, s) monomials.
  for (const MomentIndex& w : test_basis) {
    if (w.phi() != 0 || w.I() != 0) continue;
    for (size_t sidx = first_occ; sidx < prob.slots.size(); ++sidx) {
      const Slot& slot = prob.slots[sidx];
      if (slot.kind != SlotKind::Occupation) continue;
      rb.add(static_cast<int>(sidx), w, 1.0);
    }
    std::ostringstream name;
    name << "uniformity_" << w.c() << "_" << w.s();
    prob.equalities.push_back(
        {name.str(), rb.take(), trig_moment(w.c(), w.s(), g.span)});
  }

  // Quarter-matching rows over (c, s) monomials for mirrored edge pairs.
  if (g.qw_as_half) {
    for (size_t sidx = 0; sidx < prob.slots.size(); ++sidx) {
      const Slot& e = prob.slots[sidx];
      if (e.kind != SlotKind::EdgeUp && e.kind != SlotKind::EdgeDown) continue;
      // Edge (src_n, i-1) -> (n, i); mirror: (n, h-i) -> (src_n, h-i+1).
      const int mi = h - e.i + 1;
      const SlotKind mkind = e.kind == SlotKind::EdgeUp ? SlotKind::EdgeDown
                                                        : SlotKind::EdgeUp;
      const int msidx = prob.find_slot(mkind, e.src_n, mi, e.n);
      if (msidx < 0)
        throw std::logic_error("mirror edge missing for quarter matching");
      const bool self = msidx == static_cast<int>(sidx);
      if (!self && msidx < static_cast<int>(sidx)) continue;  // pair once
      for (const MomentIndex& w : test_basis) {
        if (w.phi() != 0 || w.I() != 0) continue;
        const double mirror_sign = w.c() % 2 == 0 ? 1.0 : -1.0;
        if (self && mirror_sign > 0.0) continue;
        rb.add(static_cast<int>(sidx), w, 1.0);
        if (!self) rb.add(msidx, w, -mirror_sign);
        auto terms = rb.take();
        if (terms.empty()) continue;
        std::ostringstream name;
        name << "quarter_match_" << e.src_n << "_" << e.n << "_" << e.i << "_"
             << w.c() << w.s();
        prob.equalities.push_back({name.str(), std::move(terms), 0.0});
      }
    }
  }

  // Objective: C_sym * sum of I^2 over occupation slots.
  {
    std::map<int, double> acc;
    const MomentIndex i2{{0, 0, 0, 2}};
    for (size_t sidx = first_occ; sidx < prob.slots.size(); ++sidx) {
      const Slot& slot = prob.slots[sidx];
      if (slot.kind != SlotKind::Occupation) continue;
      auto [var, sign] = prob.term_of(static_cast<int>(sidx), i2);
      acc[var] += sign * prob.c_sym;
    }
    prob.objective.assign(acc.begin(), acc.end());
  }

  return prob;
}

// -- Construction from a pattern ----------------------------------------------

namespace {

struct GaussRule {
  Eigen::VectorXd x;  // nodes on [-1, 1]
  Eigen::VectorXd w;
};

const GaussRule& gauss_rule() {
  static const GaussRule rule = [] {
    constexpr int n = 24;
    GaussRule r;
    r.x.resize(n);
    r.w.resize(n);
    for (int i = 0; i < (n + 1) / 2; ++i) {
      double x = std::cos(kPi * (i + 0.75) / (n + 0.5));
      double pp = 0.0;
      for (int it = 0; it < 100; ++it) {
        double p0 = 1.0, p1 = x;
        for (int j = 2; j <= n; ++j) {
          const double p2 = ((2.0 * j - 1.0) * x * p1 - (j - 1.0) * p0) / j;
          p0 = p1;
          p1 = p2;
        }
        pp = n * (x * p1 - p0) / (x * x - 1.0);
        const double dx = p1 / pp;
        x -= dx;
        if (std::abs(dx) < 1e-16) break;
      }
      r.x[i] = -x;
      r.x[n - 1 - i] = x;
      const double w = 2.0 / ((1.0 - x * x) * pp * pp);
      r.w[i] = w;
      r.w[n - 1 - i] = w;
    }
    return r;
  }();
  return rule;
}

double phi1m(double x) { return x == 0.0 ? 1.0 : -std::expm1(-x) / x; }

}  // namespace

PseudoMomentSolution construct_moments_from_pattern(const SdpProblem& prob,
                                                    const PulsePattern& p,
                                                    const LoadModel& load) {
  const TransitionGraph& g = prob.g;
  if (p.switch_count() != g.k)
    throw std::invalid_argument("pattern switch count does not match problem");
  const PatternSegment seg = graph::analyzed_segment(p, prob.levels, g);
  const int h = g.horizon;
  if (static_cast<int>(seg.alpha.size()) != h)
    throw std::logic_error("segment horizon mismatch");

  LoadModel pulse_load = load;
  pulse_load.A = 0.0;
  pulse_load.phi = 0.0;
  const double tau = load.tau;
  const double I0 = energy::periodic_initial_current(p, prob.levels, pulse_load);
  const energy::CurrentTrajectory traj =
      energy::make_trajectory(p, prob.levels, pulse_load, I0);

  double phi0 = 0.0;
  if (h >= 1) {
    switch (g.symmetry) {
      case Symmetry::FW:
      case Symmetry::HW:
        phi0 = seg.span - seg.alpha[h - 1];
        break;
      case Symmetry::QW:
        phi0 = seg.alpha[0];
        break;
    }
  }

  Eigen::VectorXd y = Eigen::VectorXd::Zero(prob.num_vars);
  const auto& basis2 = prob.basis2(2 * prob.beta);
  const auto& basis4 = prob.basis4(2 * prob.beta);
  const int two_beta = 2 * prob.beta;

  auto fill_dirac2 = [&](const Slot& slot, double phiv, double iv) {
    for (size_t b = 0; b < basis2.size(); ++b)
      y[slot.var_offset + static_cast<int>(b)] =
          std::pow(phiv, basis2[b].phi()) * std::pow(iv, basis2[b].I());
  };
  auto fill_dirac4 = [&](const Slot& slot, double theta, double phiv,
                         double iv) {
    const double c = std::cos(theta), s = std::sin(theta);
    for (size_t b = 0; b < basis4.size(); ++b) {
      const MomentIndex& m = basis4[b];
      y[slot.var_offset + static_cast<int>(b)] =
          std::pow(c, m.c()) * std::pow(s, m.s()) *
          std::pow(phiv, m.phi()) * std::pow(iv, m.I());
    }
  };

  for (const Slot& slot : prob.slots) {
    if (slot.shared_with >= 0) continue;
    switch (slot.kind) {
      case SlotKind::Initial:
        if (slot.n == seg.n[0]) fill_dirac2(slot, phi0, I0);
        break;
      case SlotKind::Terminal: {
        if (slot.n != seg.n[h]) break;
        const double a = h == 0 ? 0.0 : seg.alpha[h - 1];
        const double d = seg.span - a;
        const double i_end =
            traj.nodes[h] * std::exp(-tau * d) +
            prob.levels.value(seg.n[h]) * d * phi1m(tau * d);
        fill_dirac2(slot, d, i_end);
        break;
      }
      case SlotKind::EdgeUp:
      case SlotKind::EdgeDown: {
        const int i = slot.i;
        if (i < 1 || i > h) break;
        if (seg.n[i] != slot.n || seg.n[i - 1] != slot.src_n) break;
        const double angle = seg.alpha[i - 1];
        const double phip =
            i == 1 ? phi0 + seg.alpha[0] : seg.alpha[i - 1] - seg.alpha[i - 2];
        fill_dirac4(slot, angle, phip, traj.nodes[i]);
        break;
      }
      case SlotKind::Occupation: {
        const int i = slot.i;
        if (seg.n[i] != slot.n) break;
        const double a = i == 0 ? 0.0 : seg.alpha[i - 1];
        const double b = i == h ? seg.span : seg.alpha[i];
        const double entry = traj.nodes[i];
        const double u = prob.levels.value(slot.n);
        const GaussRule& rule = gauss_rule();
        const int chunks =
            std::max(1, static_cast<int>(std::ceil((b - a) / 0.4)));
        std::vector<double> cp(2), sp(two_beta + 1), pp(two_beta + 1),
            ip(two_beta + 1);
        for (int ch = 0; ch < chunks; ++ch) {
          const double lo = a + (b - a) * ch / chunks;
          const double hi = a + (b - a) * (ch + 1) / chunks;
          const double mid = 0.5 * (lo + hi), half = 0.5 * (hi - lo);
          for (int q = 0; q < rule.x.size(); ++q) {
            const double theta = mid + half * rule.x[q];
            const double wq = half * rule.w[q];
            const double t = theta - a;
            const double iv = entry * std::exp(-tau * t) + u * t * phi1m(tau * t);
            const double phiv = i == 0 ? phi0 + theta : t;
            cp[0] = 1.0;
            cp[1] = std::cos(theta);
            sp[0] = pp[0] = ip[0] = 1.0;
            const double sv = std::sin(theta);
            for (int d = 1; d <= two_beta; ++d) {
              sp[d] = sp[d - 1] * sv;
              pp[d] = pp[d - 1] * phiv;
              ip[d] = ip[d - 1] * iv;
            }
            for (size_t bi = 0; bi < basis4.size(); ++bi) {
              const MomentIndex& m = basis4[bi];
              y[slot.var_offset + static_cast<int>(bi)] +=
                  wq * cp[m.c()] * sp[m.s()] * pp[m.phi()] * ip[m.I()];
            }
          }
        }
        break;
      }
    }
  }

  PseudoMomentSolution sol;
  sol.y = std::move(y);
  sol.status = SolverStatus::Constructed;
  sol.objective = evaluate_objective(prob, sol.y);
  return sol;
}

// -- Evaluation ----------------------------------------------------------------

Eigen::VectorXd equality_residuals(const SdpProblem& prob,
                                   const Eigen::VectorXd& y) {
  Eigen::VectorXd r(prob.equalities.size());
  for (size_t i = 0; i < prob.equalities.size(); ++i) {
    double acc = -prob.equalities[i].rhs;
    for (const auto& [var, c] : prob.equalities[i].terms) acc += c * y[var];
    r[static_cast<long>(i)] = acc;
  }
  return r;
}

Eigen::VectorXd box_violations(const SdpProblem& prob,
                               const Eigen::VectorXd& y) {
  Eigen::VectorXd r(prob.boxes.size());
  for (size_t i = 0; i < prob.boxes.size(); ++i) {
    double acc = 0.0;
    for (const auto& [var, c] : prob.boxes[i].terms) acc += c * y[var];
    r[static_cast<long>(i)] =
        std::max({0.0, prob.boxes[i].lo - acc, acc - prob.boxes[i].hi});
  }
  return r;
}

Eigen::MatrixXd assemble_block(const SdpProblem&, const Block& blk,
                               const Eigen::VectorXd& y) {
  Eigen::MatrixXd M = Eigen::MatrixXd::Zero(blk.size, blk.size);
  for (const BlockEntry& e : blk.entries) {
    M(e.row, e.col) += e.coeff * y[e.var];
    if (e.row != e.col) M(e.col, e.row) += e.coeff * y[e.var];
  }
  return M;
}

double min_block_eigenvalue(const SdpProblem& prob, const Eigen::VectorXd& y) {
  double lo = std::numeric_limits<double>::infinity();
  for (const Block& blk : prob.blocks) {
    const Eigen::MatrixXd M = assemble_block(prob, blk, y);
    Eigen::SelfAdjointEigenSolver<Eigen::MatrixXd> es(M,
                                                      Eigen::EigenvaluesOnly);
    lo = std::min(lo, es.eigenvalues().minCoeff());
  }
  return lo;
}

double evaluate_objective(const SdpProblem& prob, const Eigen::VectorXd& y) {
  double acc = 0.0;
  for (const auto& [var, c] : prob.objective) acc += c * y[var];
  return acc;
}

graph::DwellTable dwell_from_solution(const PseudoMomentSolution& sol,
                                      const SdpProblem& prob) {
  if (sol.status == SolverStatus::Infeasible ||
      sol.status == SolverStatus::Error)
    throw std::invalid_argument("solution is not feasible");
  graph::DwellTable t;
  t.xi = Eigen::MatrixXd::Zero(prob.g.horizon + 1, prob.g.num_levels);
  for (const Slot& slot : prob.slots) {
    if (slot.kind != SlotKind::Occupation) continue;
    t.at(slot.n, slot.i) = sol.y[slot.var_offset];  // zeroth moment
  }
  return t;
}

}  // namespace opp::moment
