// Command-line front end: synthesis, analysis, relaxation export, and
// benchmark commands over the pattern/graph/moment libraries.

#include "opp/converter.hpp"
#include "opp/energy.hpp"
#include "opp/graph.hpp"
#include "opp/localsearch.hpp"
#include "opp/moment.hpp"
#include "opp/pattern_io.hpp"
#include "opp/she.hpp"

#include <CLI11.hpp>
#include <json.hpp>

#include <atomic>
#include <chrono>
#include <cstdlib>
#include <fstream>
#include <iostream>
#include <sstream>
#include <thread>

namespace {

using namespace opp;

constexpr int kExitOk = 0;
constexpr int kExitInput = 2;
constexpr int kExitInfeasible = 3;
constexpr int kExitSolver = 4;

struct RunConfig {
  std::vector<double> levels{-1.0, -0.5, 0.0, 0.5, 1.0};
  double f1 = 50.0;
  double ts = 100e-6;
  int k = 24;
  std::string symmetry = "QW";
  bool unipolar = false;
  double modulation = std::numeric_limits<double>::quiet_NaN();
  std::vector<std::string> harmonics;  // kind:order:lo:hi
  double tau = 0.5;
  double A = 0.0;
  double phi = 0.0;
  double vdc = 2.0;
  double inom = 1.0;
  int beta = 2;
  double ibound = 0.0;
  int lmax = 2000;
  std::string solver;  // command template with {in} {out}
  int jobs = 1;
};

void apply_config_file(RunConfig& rc, const std::string& path) {
  std::ifstream in(path);
  if (!in) throw std::runtime_error("cannot open config file: " + path);
  nlohmann::json j;
  in >> j;
  auto get = [&](const char* key, auto& field) {
    if (j.contains(key)) field = j[key].get<std::decay_t<decltype(field)>>();
  };
  get("levels", rc.levels);
  get("f1", rc.f1);
  get("ts", rc.ts);
  get("k", rc.k);
  get("symmetry", rc.symmetry);
  get("unipolar", rc.unipolar);
  get("modulation", rc.modulation);
  get("harmonics", rc.harmonics);
  get("tau", rc.tau);
  get("A", rc.A);
  get("phi", rc.phi);
  get("vdc", rc.vdc);
  get("inom", rc.inom);
  get("beta", rc.beta);
  get("ibound", rc.ibound);
  get("lmax", rc.lmax);
  get("solver", rc.solver);
  get("jobs", rc.jobs);
}

LevelSet make_levels(const RunConfig& rc) {
  Eigen::VectorXd v(static_cast<long>(rc.levels.size()));
  for (size_t i = 0; i < rc.levels.size(); ++i)
    v[static_cast<long>(i)] = rc.levels[i];
  return LevelSet(v);
}

DeviceSpec make_device(const RunConfig& rc) {
  return DeviceSpec::make(rc.f1, rc.ts, make_levels(rc));
}

LoadModel make_load(const RunConfig& rc) {
  // All waveform analysis runs in per-unit angle-domain coordinates
  // (R = tau, L = 1, omega1 = 1); Vdc and I_nominal only scale the
  // reported distortion through the proportionality constant.
  LoadModel m = LoadModel::normalized(rc.tau, rc.A, rc.phi);
  m.Vdc = rc.vdc;
  m.I_nominal = rc.inom;
  return m;
}

HarmonicsSpec::Entry parse_harmonic(const std::string& text) {
  std::istringstream ss(text);
  std::string kind, order, lo, hi;
  if (!std::getline(ss, kind, ':') || !std::getline(ss, order, ':') ||
      !std::getline(ss, lo, ':') || !std::getline(ss, hi))
    throw std::runtime_error("harmonic spec must be kind:order:lo:hi");
  HarmonicsSpec::Entry e;
  if (kind == "a" || kind == "cosine")
    e.kind = HarmonicsSpec::Kind::Cosine;
  else if (kind == "b" || kind == "sine")
    e.kind = HarmonicsSpec::Kind::Sine;
  else
    throw std::runtime_error("harmonic kind must be a or b");
  e.order = std::stoi(order);
  e.lo = std::stod(lo);
  e.hi = std::stod(hi);
  if (e.lo > e.hi) throw std::runtime_error("harmonic box has lo > hi");
  return e;
}

DesignSpec make_design(const RunConfig& rc) {
  DesignSpec des;
  des.k = rc.k;
  des.symmetry = symmetry_from_string(rc.symmetry);
  des.unipolar = rc.unipolar;
  if (!std::isnan(rc.modulation)) des.with_modulation_index(rc.modulation);
  for (const auto& h : rc.harmonics)
    des.harmonics.entries.push_back(parse_harmonic(h));
  return des;
}

graph::TransitionGraph make_analysis_graph(const RunConfig& rc) {
  auto g = graph::build_graph(static_cast<int>(rc.levels.size()), rc.k,
                              symmetry_from_string(rc.symmetry), rc.unipolar);
  if (g.symmetry == Symmetry::QW && rc.tau > 0.0)
    return graph::extend_qw_to_half(g);
  return g;
}

std::string json_checks(const ConstraintReport& rep) {
  std::ostringstream os;
  os << "[";
  for (size_t i = 0; i < rep.checks.size(); ++i) {
    const auto& c = rep.checks[i];
    os << (i ? ", " : "") << "{\"name\": \"" << c.name << "\", \"pass\": "
       << (c.pass ? "true" : "false") << ", \"detail\": \"" << c.detail
       << "\"}";
  }
  os << "]";
  return os.str();
}

std::string resolve_solver(const RunConfig& rc) {
  if (!rc.solver.empty()) return rc.solver;
  if (const char* env = std::getenv("OPP_SDP_SOLVER")) return env;
  return "";
}

int run_solver(const std::string& tmpl, const std::string& in,
               const std::string& out) {
  std::string cmd = tmpl;
  auto subst = [&](const std::string& key, const std::string& value) {
    for (size_t pos = cmd.find(key); pos != std::string::npos;
         pos = cmd.find(key))
      cmd.replace(pos, key.size(), value);
  };
  subst("{in}", in);
  subst("{out}", out);
  std::cerr << "running solver: " << cmd << "\n";
  return std::system(cmd.c_str());
}

void write_dwell_csv(const std::string& path, const graph::DwellTable& t,
                     const LevelSet& levels) {
  std::ofstream out(path);
  if (!out) throw std::runtime_error("cannot write dwell csv: " + path);
  out << "# opp dwell v1: rows are stages, columns are levels\nstage";
  for (int n = 1; n <= levels.size(); ++n)
    out << ",u=" << io::format_double(levels.value(n));
  out << "\n";
  for (int i = 0; i < t.xi.rows(); ++i) {
    out << i;
    for (int n = 1; n <= levels.size(); ++n)
      out << "," << io::format_double(t.at(n, i));
    out << "\n";
  }
}

// ---------------------------------------------------------------------------

int cmd_analyze(const RunConfig& rc, const std::string& pattern_path,
                const std::string& out_path, bool degrees) {
  io::PatternRecord rec = io::read_pattern_file(pattern_path);
  DeviceSpec dev = DeviceSpec::make(rc.f1, rc.ts, rec.levels);
  DesignSpec des;
  des.k = rec.pattern.switch_count();
  des.symmetry = rec.symmetry;
  des.unipolar = rec.unipolar;
  if (!std::isnan(rc.modulation)) des.with_modulation_index(rc.modulation);
  for (const auto& h : rc.harmonics)
    des.harmonics.entries.push_back(parse_harmonic(h));
  LoadModel load = make_load(rc);

  const auto spectrum = fourier_coefficients(rec.pattern, rec.levels, rc.lmax);
  const auto sload = load_spectrum(spectrum, load);
  const double cp = load.proportionality();
  const double tdd_s = tdd_from_spectrum(sload, cp);
  const auto energy = energy::signal_energy(rec.pattern, rec.levels, load);
  const auto [a1t, b1t] = current_fundamental(spectrum, load);
  const double tdd_t = tdd_time_domain(energy.total(), a1t, b1t, cp);
  const auto report = check_constraints(rec.pattern, dev, des);

  const double scale = degrees ? 180.0 / kPi : 1.0;
  std::ostringstream os;
  os << "{\n  \"k\": " << rec.pattern.switch_count();
  os << ",\n  \"angles\": [";
  for (int i = 1; i <= rec.pattern.switch_count(); ++i)
    os << (i > 1 ? ", " : "") << io::format_double(rec.pattern.angle(i) * scale);
  os << "],\n  \"a0\": " << io::format_double(spectrum.a0);
  os << ",\n  \"a\": [";
  for (int l = 1; l <= std::min(16, spectrum.lmax()); ++l)
    os << (l > 1 ? ", " : "") << io::format_double(spectrum.a[l - 1]);
  os << "],\n  \"b\": [";
  for (int l = 1; l <= std::min(16, spectrum.lmax()); ++l)
    os << (l > 1 ? ", " : "") << io::format_double(spectrum.b[l - 1]);
  os << "],\n  \"tdd_spectrum\": " << io::format_double(tdd_s);
  os << ",\n  \"tdd_time_domain\": " << io::format_double(tdd_t);
  os << ",\n  \"energy\": {\"ext\": " << io::format_double(energy.ext)
     << ", \"mix\": " << io::format_double(energy.mix)
     << ", \"pulse\": " << io::format_double(energy.pulse)
     << ", \"total\": " << io::format_double(energy.total()) << "}";
  os << ",\n  \"constraints\": " << json_checks(report);
  os << ",\n  \"feasible\": " << (report.all_pass() ? "true" : "false");
  os << "\n}\n";
  if (out_path.empty() || out_path == "-") {
    std::cout << os.str();
  } else {
    std::ofstream out(out_path);
    if (!out) throw std::runtime_error("cannot write " + out_path);
    out << os.str();
  }
  return report.all_pass() ? kExitOk : kExitInfeasible;
}

int cmd_graph(const RunConfig& rc, const std::string& out_path,
              bool list_paths, const std::string& pattern_path,
              const std::string& dwell_csv) {
  auto g = make_analysis_graph(rc);
  if (!dwell_csv.empty()) {
    if (pattern_path.empty())
      throw std::runtime_error("--dwell-csv needs --pattern");
    io::PatternRecord rec = io::read_pattern_file(pattern_path);
    write_dwell_csv(dwell_csv,
                    graph::pattern_to_dwell(rec.pattern, rec.levels, g),
                    rec.levels);
  }
  std::ostringstream os;
  os << "{\n  \"levels\": " << g.num_levels << ",\n  \"k\": " << g.k
     << ",\n  \"symmetry\": \"" << to_string(g.symmetry) << "\""
     << ",\n  \"unipolar\": " << (g.unipolar ? "true" : "false")
     << ",\n  \"half_period\": " << (g.qw_as_half ? "true" : "false")
     << ",\n  \"horizon\": " << g.horizon
     << ",\n  \"vertices\": " << g.vertex_count()
     << ",\n  \"edges\": " << g.edge_count()
     << ",\n  \"paths\": " << graph::count_paths(g);
  if (list_paths) {
    os << ",\n  \"path_list\": [";
    const auto paths = graph::enumerate_paths(g, 100000);
    for (size_t p = 0; p < paths.size(); ++p) {
      os << (p ? ", " : "") << "[";
      for (size_t i = 0; i < paths[p].size(); ++i)
        os << (i ? ", " : "") << paths[p][i];
      os << "]";
    }
    os << "]";
  }
  os << "\n}\n";
  if (out_path.empty() || out_path == "-") {
    std::cout << os.str();
  } else {
    std::ofstream out(out_path);
    if (!out) throw std::runtime_error("cannot write " + out_path);
    out << os.str();
  }
  return kExitOk;
}

struct BoundArtifacts {
  moment::SdpProblem prob;
  std::string problem_path;
  std::string solution_path;
};

BoundArtifacts build_and_export(const RunConfig& rc, const std::string& out) {
  auto g = make_analysis_graph(rc);
  DeviceSpec dev = make_device(rc);
  DesignSpec des = make_design(rc);
  LoadModel load = make_load(rc);
  BoundArtifacts art{
      moment::build_moment_problem(g, dev, des, load, rc.beta, rc.ibound), out,
      out + ".sol"};
  moment::export_interchange(art.prob, out, out + ".json");
  return art;
}

int cmd_bound(const RunConfig& rc, const std::string& out, bool solve,
              const std::string& dwell_csv) {
  BoundArtifacts art = build_and_export(rc, out);
  std::cout << "exported " << out << " (" << art.prob.blocks.size()
            << " blocks, " << art.prob.num_vars << " pseudomoments)\n";
  if (!solve) return kExitOk;
  const std::string tmpl = resolve_solver(rc);
  if (tmpl.empty()) {
    std::cerr << "no SDP solver configured: pass --solver 'cmd {in} {out}' or "
                 "set OPP_SDP_SOLVER\n";
    return kExitInput;
  }
  const int code = run_solver(tmpl, art.problem_path, art.solution_path);
  if (code != 0) {
    std::cerr << "solver exited with status " << code << "\n";
    return kExitSolver;
  }
  auto sol = moment::import_solution(art.solution_path, art.prob);
  std::cout << "p_beta = " << io::format_double(sol.objective)
            << " (duality gap " << io::format_double(sol.duality_gap) << ")\n";
  if (!dwell_csv.empty())
    write_dwell_csv(dwell_csv, moment::dwell_from_solution(sol, art.prob),
                    art.prob.levels);
  return kExitOk;
}

int cmd_extract(const RunConfig& rc, const std::string& solution_path,
                const std::string& out_pattern, bool do_refine,
                const std::string& log_path) {
  auto g = make_analysis_graph(rc);
  DeviceSpec dev = make_device(rc);
  DesignSpec des = make_design(rc);
  LoadModel load = make_load(rc);
  auto prob = moment::build_moment_problem(g, dev, des, load, rc.beta,
                                           rc.ibound);
  auto sol = moment::import_solution(solution_path, prob);
  auto dwell = moment::dwell_from_solution(sol, prob);
  PulsePattern candidate = graph::extract_pattern(dwell, g);
  double energy = 0.0;
  if (do_refine) {
    auto res = localsearch::refine(candidate, dev, des, load);
    if (res.status != localsearch::RefineStatus::Feasible) {
      std::cerr << "refinement infeasible (max violation "
                << res.max_violation << ")\n";
      return kExitInfeasible;
    }
    candidate = *res.pattern;
    energy = res.energy;
    if (!log_path.empty()) {
      std::ofstream log(log_path);
      log << "[";
      for (size_t i = 0; i < res.log.size(); ++i)
        log << (i ? ", " : "") << "{\"iter\": " << res.log[i].iter
            << ", \"energy\": " << io::format_double(res.log[i].energy)
            << ", \"max_violation\": "
            << io::format_double(res.log[i].max_violation) << "}";
      log << "]\n";
    }
  } else {
    energy = energy::signal_energy(candidate, prob.levels, load).total();
  }
  io::PatternRecord rec{prob.levels, candidate, des.symmetry, des.unipolar};
  io::write_pattern_file(out_pattern, rec);
  std::cout << "candidate_energy = " << io::format_double(energy)
            << "\nbound = " << io::format_double(sol.objective)
            << "\ngap = " << io::format_double(energy - sol.objective) << "\n";
  return kExitOk;
}

int cmd_refine(const RunConfig& rc, const std::string& pattern_path,
               const std::string& out_pattern, const std::string& log_path) {
  io::PatternRecord rec = io::read_pattern_file(pattern_path);
  DeviceSpec dev = DeviceSpec::make(rc.f1, rc.ts, rec.levels);
  DesignSpec des;
  des.k = rec.pattern.switch_count();
  des.symmetry = rec.symmetry;
  des.unipolar = rec.unipolar;
  if (!std::isnan(rc.modulation)) des.with_modulation_index(rc.modulation);
  for (const auto& h : rc.harmonics)
    des.harmonics.entries.push_back(parse_harmonic(h));
  LoadModel load = make_load(rc);
  auto res = localsearch::refine(rec.pattern, dev, des, load);
  if (!log_path.empty()) {
    std::ofstream log(log_path);
    log << "[";
    for (size_t i = 0; i < res.log.size(); ++i)
      log << (i ? ", " : "") << "{\"iter\": " << res.log[i].iter
          << ", \"energy\": " << io::format_double(res.log[i].energy)
          << ", \"max_violation\": "
          << io::format_double(res.log[i].max_violation) << "}";
    log << "]\n";
  }
  if (res.status != localsearch::RefineStatus::Feasible) {
    std::cerr << "refinement infeasible (max violation " << res.max_violation
              << ")\n";
    return kExitInfeasible;
  }
  io::PatternRecord out{rec.levels, *res.pattern, rec.symmetry, rec.unipolar};
  io::write_pattern_file(out_pattern, out);
  std::cout << "energy = " << io::format_double(res.energy) << "\n";
  return kExitOk;
}

std::vector<double> parse_grid(const std::string& text) {
  std::vector<double> out;
  std::istringstream ss(text);
  std::string tok;
  while (std::getline(ss, tok, ',')) out.push_back(std::stod(tok));
  if (out.empty()) throw std::runtime_error("empty grid");
  return out;
}

int cmd_sweep(const RunConfig& rc, const std::string& k_grid,
              const std::string& beta_grid, const std::string& tau_grid,
              const std::string& m_grid, const std::string& dir,
              const std::string& out_csv, bool solve) {
  const auto ks = parse_grid(k_grid.empty() ? std::to_string(rc.k) : k_grid);
  const auto betas =
      parse_grid(beta_grid.empty() ? std::to_string(rc.beta) : beta_grid);
  const auto taus =
      parse_grid(tau_grid.empty() ? std::to_string(rc.tau) : tau_grid);
  const auto ms = parse_grid(
      m_grid.empty()
          ? (std::isnan(rc.modulation) ? "nan" : std::to_string(rc.modulation))
          : m_grid);
  struct Point {
    int k, beta;
    double tau, M;
    std::string status = "pending";
    double bound = std::numeric_limits<double>::quiet_NaN();
    double energy = std::numeric_limits<double>::quiet_NaN();
    double build_ms = 0.0, solve_ms = 0.0;
  };
  std::vector<Point> points;
  for (double k : ks)
    for (double beta : betas)
      for (double tau : taus)
        for (double M : ms)
          points.push_back(
              {static_cast<int>(k), static_cast<int>(beta), tau, M});

  const std::string tmpl = resolve_solver(rc);
  std::atomic<size_t> next{0};
  auto work = [&]() {
    for (size_t idx = next.fetch_add(1); idx < points.size();
         idx = next.fetch_add(1)) {
      Point& pt = points[idx];
      RunConfig local = rc;
      local.k = pt.k;
      local.beta = pt.beta;
      local.tau = pt.tau;
      local.modulation = pt.M;
      std::ostringstream base;
      base << dir << "/point_k" << pt.k << "_b" << pt.beta << "_tau" << pt.tau
           << "_m" << pt.M << ".dat-s";
      try {
        const auto t0 = std::chrono::steady_clock::now();
        BoundArtifacts art = build_and_export(local, base.str());
        pt.build_ms =
            std::chrono::duration<double, std::milli>(
                std::chrono::steady_clock::now() - t0)
                .count();
        pt.status = "exported";
        if (solve && !tmpl.empty()) {
          const auto t1 = std::chrono::steady_clock::now();
          const int code =
              run_solver(tmpl, art.problem_path, art.solution_path);
          pt.solve_ms = std::chrono::duration<double, std::milli>(
                            std::chrono::steady_clock::now() - t1)
                            .count();
          if (code != 0) {
            pt.status = "solver_failed";
            continue;
          }
          auto sol = moment::import_solution(art.solution_path, art.prob);
          pt.bound = sol.objective;
          pt.status = "solved";
          try {
            auto dwell = moment::dwell_from_solution(sol, art.prob);
            auto g = make_analysis_graph(local);
            PulsePattern cand = graph::extract_pattern(dwell, g);
            DeviceSpec dev = make_device(local);
            DesignSpec des = make_design(local);
            auto res = localsearch::refine(cand, dev, des, make_load(local));
            if (res.status == localsearch::RefineStatus::Feasible) {
              pt.energy = res.energy;
              pt.status = "refined";
            } else {
              pt.status = "refine_infeasible";
            }
          } catch (const std::exception& e) {
            pt.status = std::string("extract_failed: ") + e.what();
          }
        }
      } catch (const std::exception& e) {
        pt.status = std::string("failed: ") + e.what();
      }
    }
  };
  std::vector<std::thread> workers;
  const int jobs = std::max(1, rc.jobs);
  for (int t = 1; t < jobs; ++t) workers.emplace_back(work);
  work();
  for (auto& t : workers) t.join();

  std::ostringstream os;
  os << "# opp sweep v1: k,beta,tau,M,status,bound,candidate_energy,gap,"
        "build_ms,solve_ms\n";
  os << "k,beta,tau,M,status,bound,candidate_energy,gap,build_ms,solve_ms\n";
  for (const Point& pt : points) {
    os << pt.k << "," << pt.beta << "," << io::format_double(pt.tau) << ","
       << io::format_double(pt.M) << "," << pt.status << ","
       << io::format_double(pt.bound) << "," << io::format_double(pt.energy)
       << "," << io::format_double(pt.energy - pt.bound) << ","
       << io::format_double(pt.build_ms) << ","
       << io::format_double(pt.solve_ms) << "\n";
  }
  if (out_csv.empty() || out_csv == "-") {
    std::cout << os.str();
  } else {
    std::ofstream out(out_csv);
    if (!out) throw std::runtime_error("cannot write " + out_csv);
    out << os.str();
  }
  return kExitOk;
}

int cmd_she(const RunConfig& rc, int starts, const std::string& sequence,
            const std::string& out_csv, const std::string& out_dir) {
  LevelSet levels = make_levels(rc);
  DeviceSpec dev = make_device(rc);
  if (std::isnan(rc.modulation))
    throw std::runtime_error("she requires --m (modulation index)");
  std::vector<std::vector<int>> paths;
  if (!sequence.empty()) {
    std::vector<int> seq;
    std::istringstream ss(sequence);
    std::string tok;
    while (std::getline(ss, tok, ',')) seq.push_back(std::stoi(tok));
    paths.push_back(seq);
  } else {
    auto g = graph::build_graph(levels.size(), rc.k, Symmetry::QW, true);
    for (auto& p : graph::enumerate_paths(g, 100000))
      if (p[0] == g.designated_start) paths.push_back(std::move(p));
  }
  std::ostringstream os;
  os << "# opp she v1: path_id,path,solution_id,residual,energy,"
        "theta_feasible,min_gap\n";
  os << "path_id,path,solution_id,residual,energy,theta_feasible,min_gap\n";
  LoadModel load = make_load(rc);
  int feasible_total = 0;
  for (size_t pi = 0; pi < paths.size(); ++pi) {
    Eigen::VectorXi nq(static_cast<long>(paths[pi].size()));
    for (size_t i = 0; i < paths[pi].size(); ++i)
      nq[static_cast<long>(i)] = paths[pi][i];
    she::SheSpec spec = she::make_standard_spec(nq, rc.modulation, rc.k,
                                                levels, dev.theta_lock);
    std::vector<she::SheSolution> sols;
    try {
      sols = she::solve_she(spec, starts);
    } catch (const std::exception& e) {
      std::cerr << "path " << pi << ": " << e.what() << "\n";
      continue;
    }
    std::string path_str;
    for (size_t i = 0; i < paths[pi].size(); ++i)
      path_str += (i ? "-" : "") + std::to_string(paths[pi][i]);
    for (size_t s = 0; s < sols.size(); ++s) {
      const auto& sol = sols[s];
      PulsePattern p = she::she_pattern(spec, sol);
      const double e = energy::signal_energy(p, levels, load).total();
      os << pi << "," << path_str << "," << s << ","
         << io::format_double(sol.residual) << "," << io::format_double(e)
         << "," << (sol.theta_feasible ? 1 : 0) << ","
         << io::format_double(sol.min_gap) << "\n";
      feasible_total += sol.theta_feasible;
      if (!out_dir.empty()) {
        io::PatternRecord rec{levels, p, Symmetry::QW, true};
        io::write_pattern_file(out_dir + "/she_" + std::to_string(pi) + "_" +
                                   std::to_string(s) + ".json",
                               rec);
      }
    }
  }
  if (out_csv.empty() || out_csv == "-") {
    std::cout << os.str();
  } else {
    std::ofstream out(out_csv);
    if (!out) throw std::runtime_error("cannot write " + out_csv);
    out << os.str();
  }
  return feasible_total > 0 ? kExitOk : kExitInfeasible;
}

}  // namespace

int main(int argc, char** argv) {
  RunConfig rc;
  // Pre-scan for --config so command-line flags override file values.
  for (int i = 1; i + 1 < argc; ++i)
    if (std::string(argv[i]) == "--config") {
      try {
        apply_config_file(rc, argv[i + 1]);
      } catch (const std::exception& e) {
        std::cerr << "error: " << e.what() << "\n";
        return kExitInput;
      }
    }

  CLI::App app{"optimal pulse pattern toolkit"};
  app.require_subcommand(1);
  std::string config_path;
  app.add_option("--config", config_path, "JSON config mirroring the flags");

  auto add_common = [&](CLI::App* cmd) {
    // accepted (and pre-scanned) in subcommand position as well
    cmd->add_option("--config", config_path, "JSON config mirroring the flags");
    cmd->add_option("--levels", rc.levels, "converter levels, increasing");
    cmd->add_option("--f1", rc.f1, "fundamental frequency [Hz]");
    cmd->add_option("--ts", rc.ts, "interlocking time [s]");
    cmd->add_option("--k", rc.k, "switch count per period");
    cmd->add_option("--symmetry", rc.symmetry, "FW | HW | QW");
    cmd->add_flag("--unipolar", rc.unipolar, "nonnegative first half-period");
    cmd->add_option("--m", rc.modulation, "modulation index (b1 equality)");
    cmd->add_option("--harmonic", rc.harmonics,
                    "extra harmonic box kind:order:lo:hi (repeatable)");
    cmd->add_option("--tau", rc.tau, "load ratio R/L");
    cmd->add_option("--A", rc.A, "external source amplitude");
    cmd->add_option("--phi", rc.phi, "external source phase [rad]");
    cmd->add_option("--vdc", rc.vdc, "dc-link voltage");
    cmd->add_option("--inom", rc.inom, "nominal current");
    cmd->add_option("--beta", rc.beta, "relaxation degree");
    cmd->add_option("--ibound", rc.ibound, "current box bound (0 = default)");
    cmd->add_option("--lmax", rc.lmax, "spectrum truncation order");
    cmd->add_option("--solver", rc.solver,
                    "SDP solver command template with {in} {out}");
    cmd->add_option("--jobs", rc.jobs, "sweep worker count");
  };

  auto* analyze = app.add_subcommand("analyze", "analyze a pattern record");
  std::string pattern_path, out_path;
  bool degrees = false;
  analyze->add_option("pattern", pattern_path, "pattern record (JSON)")
      ->required();
  analyze->add_option("--out", out_path, "output path (default stdout)");
  analyze->add_flag("--degrees", degrees, "print angles in degrees");
  add_common(analyze);

  auto* graph_cmd = app.add_subcommand("graph", "emit the transition graph");
  bool list_paths = false;
  std::string graph_pattern, graph_dwell_csv;
  graph_cmd->add_option("--out", out_path, "output path (default stdout)");
  graph_cmd->add_flag("--paths", list_paths, "list admissible paths");
  graph_cmd->add_option("--pattern", graph_pattern,
                        "pattern record for the dwell table");
  graph_cmd->add_option("--dwell-csv", graph_dwell_csv,
                        "write the pattern's dwell table as CSV");
  add_common(graph_cmd);

  auto* bound = app.add_subcommand("bound", "assemble and export the SDP");
  std::string problem_out = "problem.dat-s", dwell_csv;
  bool solve = false;
  bound->add_option("--out", problem_out, "interchange file path");
  bound->add_flag("--solve", solve, "invoke the configured solver");
  bound->add_option("--dwell-csv", dwell_csv, "dwell table CSV after solving");
  add_common(bound);

  auto* extract = app.add_subcommand("extract", "pattern from a solution");
  std::string solution_path, out_pattern = "candidate.json", log_path;
  bool no_refine = false;
  extract->add_option("solution", solution_path, "solver output file")
      ->required();
  extract->add_option("--out", out_pattern, "pattern record output");
  extract->add_flag("--no-refine", no_refine, "skip the local search");
  extract->add_option("--log", log_path, "refinement iterate log (JSON)");
  add_common(extract);

  auto* refine_cmd = app.add_subcommand("refine", "refine a pattern record");
  refine_cmd->add_option("pattern", pattern_path, "pattern record (JSON)")
      ->required();
  refine_cmd->add_option("--out", out_pattern, "pattern record output");
  refine_cmd->add_option("--log", log_path, "iterate log (JSON)");
  add_common(refine_cmd);

  auto* sweep = app.add_subcommand("sweep", "grid of relaxations");
  std::string k_grid, beta_grid, tau_grid, m_grid, dir = ".", out_csv;
  sweep->add_option("--k-grid", k_grid, "comma list of k values");
  sweep->add_option("--beta-grid", beta_grid, "comma list of degrees");
  sweep->add_option("--tau-grid", tau_grid, "comma list of load ratios");
  sweep->add_option("--m-grid", m_grid, "comma list of modulation indices");
  sweep->add_option("--dir", dir, "directory for exported problems");
  sweep->add_option("--out", out_csv, "CSV output (default stdout)");
  sweep->add_flag("--solve", solve, "solve each point when a solver is set");
  add_common(sweep);

  auto* she_cmd = app.add_subcommand("she", "selective harmonic elimination");
  int starts = 200;
  std::string sequence, out_dir;
  she_cmd->add_option("--starts", starts, "number of Newton starts");
  she_cmd->add_option("--sequence", sequence,
                      "explicit quarter level sequence, comma separated");
  she_cmd->add_option("--out", out_csv, "CSV output (default stdout)");
  she_cmd->add_option("--out-dir", out_dir, "directory for pattern records");
  add_common(she_cmd);

  try {
    app.parse(argc, argv);
  } catch (const CLI::ParseError& e) {
    if (e.get_exit_code() == 0) return app.exit(e);  // --help
    app.exit(e);
    return kExitInput;
  }

  try {
    if (analyze->parsed())
      return cmd_analyze(rc, pattern_path, out_path, degrees);
    if (graph_cmd->parsed())
      return cmd_graph(rc, out_path, list_paths, graph_pattern,
                       graph_dwell_csv);
    if (bound->parsed()) return cmd_bound(rc, problem_out, solve, dwell_csv);
    if (extract->parsed())
      return cmd_extract(rc, solution_path, out_pattern, !no_refine, log_path);
    if (refine_cmd->parsed())
      return cmd_refine(rc, pattern_path, out_pattern, log_path);
    if (sweep->parsed())
      return cmd_sweep(rc, k_grid, beta_grid, tau_grid, m_grid, dir, out_csv,
                       solve);
    if (she_cmd->parsed())
      return cmd_she(rc, starts, sequence, out_csv, out_dir);
  } catch (const std::exception& e) {
    std::cerr << "error: " << e.what() << "\n";
    return kExitInput;
  }
  return kExitInput;
}
