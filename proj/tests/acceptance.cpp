// Acceptance suite: every criterion prints one pass/fail line and the binary
// exits nonzero when any criterion fails. The solver-backed criterion skips
// cleanly when no SDP solver is configured.

#include "opp/converter.hpp"
#include "opp/energy.hpp"
#include "opp/graph.hpp"
#include "opp/localsearch.hpp"
#include "opp/moment.hpp"
#include "opp/pattern_io.hpp"
#include "opp/she.hpp"

#include "test_util.hpp"

#include <chrono>
#include <cstdio>
#include <cstdlib>
#include <filesystem>
#include <fstream>
#include <functional>
#include <iostream>
#include <sstream>

using namespace opp;

namespace {

struct Outcome {
  enum Kind { Pass, Fail, Skip } kind = Fail;
  std::string detail;
};

Outcome pass(std::string d) { return {Outcome::Pass, std::move(d)}; }
Outcome fail(std::string d) { return {Outcome::Fail, std::move(d)}; }
Outcome skip(std::string d) { return {Outcome::Skip, std::move(d)}; }

double elapsed_s(std::chrono::steady_clock::time_point t0) {
  return std::chrono::duration<double>(std::chrono::steady_clock::now() - t0)
      .count();
}

std::string fmt(double v) {
  char buf[64];
  std::snprintf(buf, sizeof(buf), "%.6g", v);
  return buf;
}

// -- A1: closed-form energy vs quadrature oracle ------------------------------

Outcome energy_oracle_equivalence() {
  const auto t0 = std::chrono::steady_clock::now();
  LevelSet L = testutil::five_levels();
  auto ghw = graph::build_graph(5, 12, Symmetry::HW, false);
  auto gfw = graph::build_graph(5, 10, Symmetry::FW, false);
  auto gqw = graph::build_graph(5, 16, Symmetry::QW, false);
  int count = 0;
  double worst = 0.0;
  for (double tau : {0.0, 0.5, 1.0, 5.0}) {
    for (double A : {0.0, 0.8}) {
      const LoadModel load = LoadModel::normalized(tau, A, 0.3);
      const energy::External ext{A, 0.3};
      for (std::uint64_t seed = 1; seed <= 26; ++seed) {
        const graph::TransitionGraph& g =
            tau == 0.0 ? (seed % 2 ? ghw : gqw) : (seed % 2 ? gfw : ghw);
        PulsePattern p = testutil::random_feasible_pattern(g, L, 0.02, seed);
        const double i0 = energy::periodic_initial_current(p, L, load);
        auto traj = energy::make_trajectory(p, L, load, i0);
        const double closed =
            tau == 0.0 ? energy::energy_pure_reactance(traj, L, ext).total()
                       : energy::energy_mixed(traj, L, ext).total();
        const double oracle =
            energy::energy_numeric_oracle(p, L, load, i0, ext, 1e-12);
        const double rel =
            std::abs(closed - oracle) / std::max(1e-12, std::abs(oracle));
        worst = std::max(worst, rel);
        ++count;
        if (rel > 1e-8)
          return fail("pattern seed " + std::to_string(seed) + " tau " +
                      fmt(tau) + " A " + fmt(A) + " rel err " + fmt(rel));
      }
    }
  }
  const double secs = elapsed_s(t0);
  if (secs >= 30.0) return fail("runtime " + fmt(secs) + " s exceeds 30 s");
  return pass(std::to_string(count) + " patterns, worst rel err " +
              fmt(worst) + ", " + fmt(secs) + " s");
}

// -- A2: single-pattern reproduction ------------------------------------------

Outcome reference_candidate_energy() {
  LevelSet L = testutil::five_levels();
  PulsePattern printed = testutil::reference_k24_pattern();
  LoadModel load = LoadModel::normalized(0.5);
  const double raw = energy::signal_energy(printed, L, load).total();
  // The four-decimal recorded angles miss the b1 = 0.8 equality by ~3.5e-4;
  // restore the stated constraint before comparing to the reference value.
  DeviceSpec dev = DeviceSpec::make(50.0, 100e-6, L);
  DesignSpec des;
  des.k = 24;
  des.symmetry = Symmetry::QW;
  des.unipolar = true;
  des.with_modulation_index(0.8);
  auto res = localsearch::refine(printed, dev, des, load);
  if (res.status != localsearch::RefineStatus::Feasible)
    return fail("refinement infeasible");
  const double moved =
      (res.pattern->angles() - printed.angles()).cwiseAbs().maxCoeff();
  if (moved > 2e-3)
    return fail("candidate drifted " + fmt(moved) + " rad from the record");
  if (std::abs(res.energy - 1.6092) > 5e-4)
    return fail("restored energy " + fmt(res.energy) + " outside 1.6092 +- 5e-4");
  return pass("restored candidate energy " + fmt(res.energy) +
              " (recorded-angle value " + fmt(raw) + ")");
}

// -- A3: Parseval consistency --------------------------------------------------

Outcome parseval_consistency() {
  LevelSet L = testutil::five_levels();
  const LoadModel load = LoadModel::normalized(0.5);
  auto check_one = [&](const PulsePattern& p) -> double {
    const auto s = fourier_coefficients(p, L, 2000);
    const double tdd_s = tdd_from_spectrum(load_spectrum(s, load), 1.0);
    const auto [a1t, b1t] = current_fundamental(s, load);
    const double e = energy::signal_energy(p, L, load).total();
    const double tdd_t = tdd_time_domain(e, a1t, b1t, 1.0);
    return std::abs(tdd_s - tdd_t) / std::max(1e-12, tdd_t);
  };
  double worst = check_one(testutil::reference_k24_pattern());
  auto gfw = graph::build_graph(5, 10, Symmetry::FW, false);
  auto ghw = graph::build_graph(5, 12, Symmetry::HW, false);
  for (std::uint64_t seed = 1; seed <= 50; ++seed) {
    PulsePattern p =
        testutil::random_feasible_pattern(seed % 2 ? gfw : ghw, L, 0.02, seed);
    worst = std::max(worst, check_one(p));
    if (worst > 1e-4)
      return fail("seed " + std::to_string(seed) + " rel gap " + fmt(worst));
  }
  return pass("51 patterns, worst route gap " + fmt(worst));
}

// -- A4: graph structure --------------------------------------------------------

Outcome graph_structure() {
  for (int N = 2; N <= 7; ++N)
    for (int k = 2; k <= 12; k += 2) {
      auto g = graph::build_graph(N, k, Symmetry::FW, false);
      if (g.vertex_count() != N * (k + 1))
        return fail("vertex count mismatch at N=" + std::to_string(N));
      if (g.edge_count() != 2 * (N - 1) * k)
        return fail("edge count mismatch at N=" + std::to_string(N));
    }
  auto g = graph::build_graph(5, 24, Symmetry::QW, true);
  const auto paths = graph::count_paths(g);
  if (paths != 16)
    return fail("QW unipolar path count " + std::to_string(paths));
  return pass("FW counts over {2..7}x{2..12}, 16 QW+unipolar paths");
}

// -- A5: extraction round trip ---------------------------------------------------

Outcome extraction_round_trip() {
  LevelSet L = testutil::five_levels();
  double worst = 0.0;
  int count = 0;
  for (auto sym : {Symmetry::FW, Symmetry::HW, Symmetry::QW}) {
    auto g = graph::build_graph(5, 16, sym, false);
    for (std::uint64_t seed = 1; seed <= 167; ++seed) {
      PulsePattern p = testutil::random_feasible_pattern(g, L, 0.015, seed);
      auto t = graph::pattern_to_dwell(p, L, g);
      PulsePattern rec = graph::extract_pattern(t, g);
      if (rec.level_indices() != p.level_indices())
        return fail("level sequence changed, seed " + std::to_string(seed));
      const double err = (rec.angles() - p.angles()).cwiseAbs().maxCoeff();
      worst = std::max(worst, err);
      ++count;
      if (err > 1e-15)
        return fail("angle error " + fmt(err) + " at seed " +
                    std::to_string(seed));
    }
  }
  // deterministic tie break toward the smaller level
  auto g = graph::build_graph(3, 2, Symmetry::FW, false);
  graph::DwellTable tie;
  tie.xi = Eigen::MatrixXd::Zero(3, 3);
  tie.at(1, 0) = 2.0;
  tie.at(3, 0) = 2.0;
  tie.at(2, 1) = 1.0;
  tie.at(1, 2) = 1.0;
  tie.at(3, 2) = 1.0;
  for (int rep = 0; rep < 3; ++rep) {
    PulsePattern r = graph::extract_pattern(tie, g);
    if (r.level_index(0) != 1) return fail("tie not broken toward smaller n");
  }
  return pass(std::to_string(count) + " round trips, worst angle err " +
              fmt(worst));
}

// -- A6: moment feasibility oracle ----------------------------------------------

Outcome moment_feasibility_oracle() {
  const auto t0 = std::chrono::steady_clock::now();
  LevelSet L = testutil::five_levels();
  DeviceSpec dev = DeviceSpec::with_lock_angle(kPi / 100.0, L);
  struct Setup {
    Symmetry sym;
    bool unipolar;
    int k;
    double tau;
    bool half;
  };
  const Setup setups[] = {
      {Symmetry::FW, false, 8, 0.5, false},
      {Symmetry::HW, false, 16, 1.0, false},
      {Symmetry::HW, true, 12, 0.5, false},
      {Symmetry::QW, false, 16, 0.0, false},
      {Symmetry::QW, true, 16, 0.5, true},
  };
  int count = 0;
  double worst_row = 0.0, worst_eig = 0.0, worst_obj = 0.0;
  for (const Setup& su : setups) {
    auto g = graph::build_graph(5, su.k, su.sym, su.unipolar);
    if (su.half) g = graph::extend_qw_to_half(g);
    LoadModel load = LoadModel::normalized(su.tau);
    for (int beta : {1, 2}) {
      DesignSpec des;
      des.k = g.k;
      des.symmetry = g.symmetry;
      des.unipolar = g.unipolar;
      auto prob = moment::build_moment_problem(g, dev, des, load, beta);
      for (std::uint64_t seed = 1; seed <= 5; ++seed) {
        PulsePattern p =
            testutil::random_feasible_pattern(g, L, dev.theta_lock, seed);
        auto sol = moment::construct_moments_from_pattern(prob, p, load);
        const double row =
            moment::equality_residuals(prob, sol.y).cwiseAbs().maxCoeff();
        const double eig = moment::min_block_eigenvalue(prob, sol.y);
        const double e = energy::signal_energy(p, L, load).total();
        const double obj = std::abs(sol.objective - e) / std::max(1.0, e);
        worst_row = std::max(worst_row, row);
        worst_eig = std::min(worst_eig, eig);
        worst_obj = std::max(worst_obj, obj);
        ++count;
        if (row > 1e-8 || eig < -1e-8 || obj > 1e-8)
          return fail("seed " + std::to_string(seed) + " beta " +
                      std::to_string(beta) + ": row " + fmt(row) + ", eig " +
                      fmt(eig) + ", obj gap " + fmt(obj));
      }
    }
  }
  const double secs = elapsed_s(t0);
  if (secs >= 300.0) return fail("runtime " + fmt(secs) + " s exceeds 5 min");
  return pass(std::to_string(count) + " constructions, worst row " +
              fmt(worst_row) + ", min eig " + fmt(worst_eig) + ", obj gap " +
              fmt(worst_obj) + ", " + fmt(secs) + " s");
}

// -- A7: basis sizes --------------------------------------------------------------

Outcome basis_size_formula() {
  for (int beta = 1; beta <= 6; ++beta) {
    const auto n =
        static_cast<std::int64_t>(moment::moment_basis(2 * beta, 4, true).size());
    if (n != moment::reduced_basis_size(beta))
      return fail("beta " + std::to_string(beta) + ": enumerated " +
                  std::to_string(n));
  }
  return pass("beta 1..6 match the binomial count");
}

// -- A8: local search vs SHE at k = 28 ---------------------------------------------

Outcome localsearch_vs_she() {
  // Reference targets (tau = 1): the lone feasible SHE root carries energy
  // 1 + 5.950e-3, and angle refinement with the same frozen levels beats it
  // by 7.7491e-5, i.e. reaches 1 + 5.8725e-3.
  LevelSet L = testutil::five_levels();
  DeviceSpec dev = DeviceSpec::make(50.0, 100e-6, L);
  LoadModel load = LoadModel::normalized(1.0);
  Eigen::VectorXi nq(8);
  nq << 3, 4, 3, 4, 5, 4, 5, 4;

  DesignSpec des;
  des.k = 28;
  des.symmetry = Symmetry::QW;
  des.unipolar = true;
  des.with_modulation_index(0.8);
  Eigen::VectorXd aq(7);
  for (int i = 0; i < 7; ++i) aq[i] = (i + 1) * (kPi / 2.0) / 8.0;
  PulsePattern seed = expand_quarter_to_full(nq, aq, 5);
  auto res = localsearch::refine(seed, dev, des, load);
  if (res.status != localsearch::RefineStatus::Feasible)
    return fail("refinement infeasible");

  she::SheSpec spec =
      she::make_standard_spec(nq, 0.8, 28, L, dev.theta_lock);
  auto sols = she::solve_she(spec, 400);
  if (sols.empty()) return fail("SHE found no roots at k = 28");
  double she_energy = std::numeric_limits<double>::infinity();
  for (const auto& s : sols) {
    PulsePattern p = she::she_pattern(spec, s);
    she_energy =
        std::min(she_energy, energy::signal_energy(p, L, load).total());
  }
  if (std::abs(she_energy - (1.0 + 5.950e-3)) > 1e-4)
    return fail("SHE energy " + fmt(she_energy) +
                " outside 1 + 5.950e-3 +- 1e-4");
  if (std::abs(res.energy - (1.0 + 5.8725e-3)) > 1e-4)
    return fail("refined energy " + fmt(res.energy) +
                " away from the reference 1 + 5.8725e-3");
  if (res.energy >= she_energy - 0.5 * 7.7491e-5)
    return fail("refined " + fmt(res.energy) +
                " does not beat SHE by the reference margin (SHE " +
                fmt(she_energy) + ")");
  return pass("refined " + fmt(res.energy) + " < SHE " + fmt(she_energy) +
              ", gap " + fmt(she_energy - res.energy) +
              " vs reference 7.7491e-5");
}

// -- A9: bound reproduction (needs an external solver) -----------------------------

std::string solver_template() {
  if (const char* env = std::getenv("OPP_SDP_SOLVER")) return env;
  if (std::system("command -v csdp > /dev/null 2>&1") == 0)
    return "csdp {in} {out} > /dev/null";
  return "";
}

Outcome bound_reproduction() {
  const std::string tmpl = solver_template();
  if (tmpl.empty())
    return skip("no SDP solver on PATH (set OPP_SDP_SOLVER to enable)");
  LevelSet L = testutil::five_levels();
  DeviceSpec dev = DeviceSpec::make(50.0, 100e-6, L);
  auto run_point = [&](const graph::TransitionGraph& g, const DesignSpec& des,
                       const LoadModel& load, int beta, double& out) -> bool {
    auto prob = moment::build_moment_problem(g, dev, des, load, beta);
    const auto dir = std::filesystem::temp_directory_path();
    const std::string in = (dir / "opp_acc_bound.dat-s").string();
    const std::string sol = (dir / "opp_acc_bound.sol").string();
    moment::export_interchange(prob, in, "");
    std::string cmd = tmpl;
    for (const auto& [key, value] :
         {std::pair<std::string, std::string>{"{in}", in}, {"{out}", sol}})
      for (size_t pos = cmd.find(key); pos != std::string::npos;
           pos = cmd.find(key))
        cmd.replace(pos, key.size(), value);
    if (std::system(cmd.c_str()) != 0) return false;
    out = moment::import_solution(sol, prob).objective;
    return true;
  };

  // Monotonicity on an N=5, k=8 HW instance.
  auto g8 = graph::build_graph(5, 8, Symmetry::HW, false);
  DesignSpec des8;
  des8.k = 8;
  des8.symmetry = Symmetry::HW;
  des8.with_modulation_index(0.8);
  LoadModel load1 = LoadModel::normalized(1.0);
  double p1, p2, p3;
  if (!run_point(g8, des8, load1, 1, p1) ||
      !run_point(g8, des8, load1, 2, p2) ||
      !run_point(g8, des8, load1, 3, p3))
    return fail("solver failed on the k=8 monotonicity instance");
  if (p2 < p1 - 1e-7 || p3 < p2 - 1e-7)
    return fail("bounds not monotone: " + fmt(p1) + ", " + fmt(p2) + ", " +
                fmt(p3));

  // Single-pattern bound at beta = 3.
  auto gq = graph::extend_qw_to_half(
      graph::build_graph(5, 24, Symmetry::QW, true));
  DesignSpec desq;
  desq.k = 24;
  desq.symmetry = Symmetry::QW;
  desq.unipolar = true;
  desq.with_modulation_index(0.8);
  LoadModel load5 = LoadModel::normalized(0.5);
  double p3q;
  if (!run_point(gq, desq, load5, 3, p3q))
    return fail("solver failed on the single-pattern instance");
  if (!(p3q >= 1.60 && p3q <= 1.61))
    return fail("p*_3 = " + fmt(p3q) + " outside [1.60, 1.61]");
  PulsePattern printed = testutil::reference_k24_pattern();
  auto res = localsearch::refine(printed, dev, desq, load5);
  if (res.status != localsearch::RefineStatus::Feasible)
    return fail("candidate refinement infeasible");
  if (p3q > res.energy + 1e-9)
    return fail("bound " + fmt(p3q) + " exceeds candidate " +
                fmt(res.energy));
  return pass("p1<=p2<=p3 (" + fmt(p1) + ", " + fmt(p2) + ", " + fmt(p3) +
              "), p*_3 = " + fmt(p3q) + " <= candidate " + fmt(res.energy));
}

// -- A10: gradient check -------------------------------------------------------------

Outcome gradient_check() {
  LevelSet L = testutil::five_levels();
  auto gfw = graph::build_graph(5, 10, Symmetry::FW, false);
  auto ghw = graph::build_graph(5, 12, Symmetry::HW, false);
  int count = 0;
  double worst = 0.0;
  for (double tau : {0.0, 1.0}) {
    const LoadModel load = LoadModel::normalized(tau, 0.5, 0.2);
    const energy::External ext{0.5, 0.2};
    for (std::uint64_t seed = 1; seed <= 50; ++seed) {
      PulsePattern p = testutil::random_feasible_pattern(
          tau == 0.0 ? ghw : gfw, L, 0.05, seed);
      const Eigen::VectorXd grad = energy::energy_gradient(p, L, load, ext);
      const Eigen::VectorXd u = p.level_values(L);
      for (int j = 1; j <= p.switch_count(); ++j) {
        const double h = 1e-6;
        int partner = 0;
        if (tau == 0.0) {
          // move a matching step oppositely to stay zero-mean
          const double duj = u[j] - u[j - 1];
          for (int r = 1; r <= p.switch_count(); ++r)
            if (r != j && u[r] - u[r - 1] == duj) {
              partner = r;
              break;
            }
          if (partner == 0) continue;
        }
        auto shifted = [&](double delta) {
          Eigen::VectorXd a = p.angles();
          a[j - 1] += delta;
          if (partner) a[partner - 1] -= delta;
          return PulsePattern(p.level_indices(), a);
        };
        const double ep =
            energy::signal_energy(shifted(h), L, load, ext).total();
        const double em =
            energy::signal_energy(shifted(-h), L, load, ext).total();
        const double expect = (ep - em) / (2.0 * h);
        double got = grad[j - 1];
        if (partner) got -= grad[partner - 1];
        const double rel =
            std::abs(got - expect) / std::max(1e-3, std::abs(expect));
        worst = std::max(worst, rel);
        ++count;
        if (rel > 1e-5)
          return fail("seed " + std::to_string(seed) + " tau " + fmt(tau) +
                      " component " + std::to_string(j) + " rel " + fmt(rel));
      }
    }
  }
  return pass(std::to_string(count) + " components, worst rel err " +
              fmt(worst));
}

// -- A11: CLI determinism and exit codes ----------------------------------------------

std::string cli_path() {
  const char* env = std::getenv("OPP_CLI");
  return env ? env : "";
}

std::string source_dir() {
  const char* env = std::getenv("OPP_SOURCE_DIR");
  return env ? env : ".";
}

int run_cli(const std::string& args, const std::string& stdout_path = "") {
  std::string cmd = cli_path() + " " + args;
  cmd += " > " + (stdout_path.empty() ? std::string("/dev/null") : stdout_path);
  cmd += " 2> /dev/null";
  return WEXITSTATUS(std::system(cmd.c_str()));
}

std::string slurp(const std::string& path) {
  std::ifstream in(path);
  std::stringstream ss;
  ss << in.rdbuf();
  return ss.str();
}

std::string strip_timing(const std::string& text) {
  std::istringstream in(text);
  std::string ln, acc;
  while (std::getline(in, ln)) {
    size_t cut = ln.size();
    for (int commas = 0; cut > 0; --cut) {
      if (ln[cut - 1] == ',') ++commas;
      if (commas == 2) break;
    }
    acc += ln.substr(0, cut) + "\n";
  }
  return acc;
}

Outcome cli_contract() {
  if (cli_path().empty()) return skip("OPP_CLI not set");
  const auto dir = std::filesystem::temp_directory_path();
  const std::string golden = source_dir() + "/tests/golden";
  const std::string pattern = source_dir() + "/tests/data/reference_k24.json";

  const std::string a1 = (dir / "acc_analyze.json").string();
  if (run_cli("analyze " + pattern + " --tau 0.5 --out " + a1) != 0)
    return fail("analyze exit code");
  if (slurp(a1) != slurp(golden + "/analyze_reference.json"))
    return fail("analyze output differs from the golden file");

  const std::string g1 = (dir / "acc_graph.json").string();
  if (run_cli("graph --k 24 --symmetry QW --unipolar --tau 0 --paths --out " +
              g1) != 0)
    return fail("graph exit code");
  if (slurp(g1) != slurp(golden + "/graph_qw24.json"))
    return fail("graph output differs from the golden file");

  const std::string sdir = (dir / "acc_sweep").string();
  std::filesystem::create_directories(sdir);
  const std::string s1 = (dir / "acc_sweep.csv").string();
  if (run_cli("sweep --k-grid 4,6 --beta-grid 1 --tau-grid 0.5 --m-grid 0.4 "
              "--symmetry HW --dir " +
              sdir + " --out " + s1) != 0)
    return fail("sweep exit code");
  if (strip_timing(slurp(s1)) != slurp(golden + "/sweep_hw.csv"))
    return fail("sweep output differs from the golden file");

  // exit code contract: 0 covered above
  const std::string bad = (dir / "acc_bad.json").string();
  std::ofstream(bad) << "{ nope";
  if (run_cli("analyze " + bad) != 2) return fail("parse error must exit 2");
  const std::string refined = (dir / "acc_ref.json").string();
  if (run_cli("refine " + pattern + " --tau 0.5 --m 3.9 --out " + refined) !=
      3)
    return fail("infeasible refinement must exit 3");
  if (run_cli("bound --k 4 --symmetry HW --tau 0.5 --beta 1 --solve "
              "--solver 'false' --out " +
              (dir / "acc_nosolve.dat-s").string()) != 4)
    return fail("failing solver must exit 4");
  return pass("golden analyze/graph/sweep, exit codes 0/2/3/4");
}

}  // namespace

int main() {
  struct Criterion {
    const char* name;
    std::function<Outcome()> run;
  };
  const Criterion criteria[] = {
      {"energy-oracle-equivalence", energy_oracle_equivalence},
      {"single-pattern-energy", reference_candidate_energy},
      {"parseval-consistency", parseval_consistency},
      {"graph-structure", graph_structure},
      {"extraction-round-trip", extraction_round_trip},
      {"moment-feasibility-oracle", moment_feasibility_oracle},
      {"basis-size-formula", basis_size_formula},
      {"localsearch-vs-she", localsearch_vs_she},
      {"bound-reproduction", bound_reproduction},
      {"gradient-check", gradient_check},
      {"cli-contract", cli_contract},
  };
  int failures = 0;
  for (const auto& c : criteria) {
    Outcome o;
    try {
      o = c.run();
    } catch (const std::exception& e) {
      o = fail(std::string("exception: ") + e.what());
    }
    const char* tag = o.kind == Outcome::Pass   ? "PASS"
                      : o.kind == Outcome::Skip ? "SKIP"
                                                : "FAIL";
    std::printf("[%s] %s: %s\n", tag, c.name, o.detail.c_str());
    failures += o.kind == Outcome::Fail;
  }
  return failures == 0 ? 0 : 1;
}
