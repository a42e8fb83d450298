#include "opp/moment.hpp"
#include "opp/pattern_io.hpp"

#include <algorithm>
#include <cmath>
#include <fstream>
#include <map>
#include <sstream>
#include <stdexcept>

namespace opp::moment {

namespace {

// Placement of one pseudomoment inside the block-diagonal matrix variable:
// its defining entry in the owning slot's main moment matrix.
struct Canonical {
  int block = 0;  // 1-based block number in the interchange file
  int row = 0, col = 0;  // 1-based, row <= col
};

int basis_position(const std::vector<MomentIndex>& basis,
                   const MomentIndex& idx) {
  const auto it = std::lower_bound(basis.begin(), basis.end(), idx);
  if (it == basis.end() || !(*it == idx))
    throw std::logic_error("monomial missing from basis");
  return static_cast<int>(it - basis.begin());
}

// Split gamma = u + v with both halves inside the degree-beta reduced basis.
std::pair<MomentIndex, MomentIndex> canonical_split(const MomentIndex& gamma) {
  MomentIndex u;
  int rem = (gamma.degree() + 1) / 2;
  u.e[0] = gamma.e[0];  // c-degree (<= 1) rides on the first factor
  rem -= u.e[0];
  for (int d = 1; d < 4; ++d) {
    const int take = std::min(gamma.e[d], rem);
    u.e[d] = take;
    rem -= take;
  }
  MomentIndex v;
  for (int d = 0; d < 4; ++d) v.e[d] = gamma.e[d] - u.e[d];
  return {u, v};
}

struct ExportLayout {
  std::vector<Canonical> canon;      // per variable
  std::vector<int> main_block;       // per slot: 1-based block id, -1 shared
  int slack_block = 0;               // 1-based id of the diagonal block, 0 if none
  int num_slack = 0;
  int num_rows = 0;
  std::vector<double> rhs;
};

ExportLayout make_layout(const SdpProblem& prob) {
  ExportLayout lay;
  lay.canon.resize(prob.num_vars);
  lay.main_block.assign(prob.slots.size(), -1);
  // Main moment matrices come first in prob.blocks, one per slot in slot
  // order, followed by localizing blocks; recover the mapping by name-free
  // association: blocks were appended slot by slot, main matrix first.
  {
    size_t b = 0;
    for (size_t s = 0; s < prob.slots.size() && b < prob.blocks.size(); ++s) {
      // first block of each slot group is the main matrix
      if (prob.blocks[b].slot != static_cast<int>(s))
        throw std::logic_error("block ordering does not follow slots");
      lay.main_block[s] = static_cast<int>(b) + 1;
      ++b;
      while (b < prob.blocks.size() &&
             prob.blocks[b].slot == static_cast<int>(s))
        ++b;
    }
  }
  for (size_t s = 0; s < prob.slots.size(); ++s) {
    const Slot& slot = prob.slots[s];
    if (slot.shared_with >= 0) continue;
    const auto& full = slot.four_state ? prob.basis4(2 * prob.beta)
                                       : prob.basis2(2 * prob.beta);
    const auto& half =
        slot.four_state ? prob.basis4(prob.beta) : prob.basis2(prob.beta);
    for (size_t bidx = 0; bidx < full.size(); ++bidx) {
      const auto [u, v] = canonical_split(full[bidx]);
      int r = basis_position(half, u);
      int c = basis_position(half, v);
      if (r > c) std::swap(r, c);
      lay.canon[slot.var_offset + static_cast<int>(bidx)] = {
          lay.main_block[s], r + 1, c + 1};
    }
  }
  lay.num_slack = 2 * static_cast<int>(prob.boxes.size());
  lay.slack_block =
      lay.num_slack > 0 ? static_cast<int>(prob.blocks.size()) + 1 : 0;
  return lay;
}

struct FileEntry {
  int mat, blk, row, col;
  double value;
};

// Rows in file order: semantic equalities, box slack rows, then linking rows.
void assemble_rows(const SdpProblem& prob, ExportLayout& lay,
                   std::vector<FileEntry>& entries) {
  int row_id = 0;
  auto put = [&](int mat, int blk, int r, int c, double v) {
    if (v == 0.0) return;
    if (r > c) std::swap(r, c);
    entries.push_back({mat, blk, r, c, v});
  };
  auto put_var = [&](int mat, int var, double coeff) {
    const Canonical& cn = lay.canon[var];
    // Off-diagonal placements carry half weight under the symmetric inner
    // product.
    put(mat, cn.block, cn.row, cn.col,
        cn.row == cn.col ? coeff : 0.5 * coeff);
  };

  for (const LinearRow& row : prob.equalities) {
    ++row_id;
    std::map<std::tuple<int, int, int>, double> acc;
    for (const auto& [var, c] : row.terms) {
      const Canonical& cn = lay.canon[var];
      acc[{cn.block, cn.row, cn.col}] +=
          cn.row == cn.col ? c : 0.5 * c;
    }
    for (const auto& [key, v] : acc)
      put(row_id, std::get<0>(key), std::get<1>(key), std::get<2>(key), v);
    lay.rhs.push_back(row.rhs);
  }
  int slack = 0;
  for (const BoxRow& box : prob.boxes) {
    // lower side: terms - slack = lo
    ++row_id;
    ++slack;
    for (const auto& [var, c] : box.terms) put_var(row_id, var, c);
    put(row_id, lay.slack_block, slack, slack, -1.0);
    lay.rhs.push_back(box.lo);
    // upper side: terms + slack = hi
    ++row_id;
    ++slack;
    for (const auto& [var, c] : box.terms) put_var(row_id, var, c);
    put(row_id, lay.slack_block, slack, slack, 1.0);
    lay.rhs.push_back(box.hi);
  }
  // Linking rows: every stored block entry equals its pseudomoment value.
  for (size_t b = 0; b < prob.blocks.size(); ++b) {
    const Block& blk = prob.blocks[b];
    const int file_blk = static_cast<int>(b) + 1;
    std::map<std::pair<int, int>, std::vector<std::pair<int, double>>> cells;
    for (const BlockEntry& e : blk.entries)
      cells[{e.row, e.col}].emplace_back(e.var, e.coeff);
    for (const auto& [cell, terms] : cells) {
      const auto [r, c] = cell;
      // Skip the defining entries of the owning main matrix.
      if (terms.size() == 1 && terms[0].second == 1.0) {
        const Canonical& cn = lay.canon[terms[0].first];
        if (cn.block == file_blk && cn.row == r + 1 && cn.col == c + 1)
          continue;
      }
      ++row_id;
      put(row_id, file_blk, r + 1, c + 1, r == c ? 1.0 : 0.5);
      std::map<std::tuple<int, int, int>, double> acc;
      for (const auto& [var, coeff] : terms) {
        const Canonical& cn = lay.canon[var];
        acc[{cn.block, cn.row, cn.col}] -=
            cn.row == cn.col ? coeff : 0.5 * coeff;
      }
      for (const auto& [key, v] : acc)
        put(row_id, std::get<0>(key), std::get<1>(key), std::get<2>(key), v);
      lay.rhs.push_back(0.0);
    }
  }
  lay.num_rows = row_id;
}

}  // namespace

void export_interchange(const SdpProblem& prob, const std::string& path,
                        const std::string& sidecar_path) {
  ExportLayout lay = make_layout(prob);
  std::vector<FileEntry> entries;
  // Objective: the solver maximizes <F0, Y>; minimizing our functional means
  // writing its negation.
  for (const auto& [var, c] : prob.objective) {
    const Canonical& cn = lay.canon[var];
    entries.push_back({0, cn.block, cn.row, cn.col,
                       cn.row == cn.col ? -c : -0.5 * c});
  }
  assemble_rows(prob, lay, entries);

  std::ofstream out(path);
  if (!out) throw std::runtime_error("cannot write interchange file: " + path);
  out << lay.num_rows << "\n";
  const int nblocks =
      static_cast<int>(prob.blocks.size()) + (lay.num_slack > 0 ? 1 : 0);
  out << nblocks << "\n";
  for (size_t b = 0; b < prob.blocks.size(); ++b)
    out << (b ? " " : "") << prob.blocks[b].size;
  if (lay.num_slack > 0) out << " " << -lay.num_slack;
  out << "\n";
  for (int i = 0; i < lay.num_rows; ++i)
    out << (i ? " " : "") << io::format_double(lay.rhs[i]);
  out << "\n";
  for (const FileEntry& e : entries)
    out << e.mat << " " << e.blk << " " << e.row << " " << e.col << " "
        << io::format_double(e.value) << "\n";
  out.close();

  if (!sidecar_path.empty()) {
    std::ofstream sc(sidecar_path);
    if (!sc)
      throw std::runtime_error("cannot write sidecar file: " + sidecar_path);
    sc << "{\n  \"beta\": " << prob.beta << ",\n  \"c_sym\": " << prob.c_sym
       << ",\n  \"i_bound\": " << io::format_double(prob.i_bound)
       << ",\n  \"num_vars\": " << prob.num_vars
       << ",\n  \"num_rows\": " << lay.num_rows
       << ",\n  \"num_semantic_rows\": "
       << prob.equalities.size() + 2 * prob.boxes.size()
       << ",\n  \"objective_sign\": -1,\n  \"blocks\": [";
    for (size_t b = 0; b < prob.blocks.size(); ++b)
      sc << (b ? ", " : "") << "{\"name\": \"" << prob.blocks[b].name
         << "\", \"size\": " << prob.blocks[b].size << "}";
    if (lay.num_slack > 0)
      sc << (prob.blocks.empty() ? "" : ", ") << "{\"name\": \"slack\", \"size\": "
         << -lay.num_slack << "}";
    sc << "],\n  \"vars\": [\n";
    for (size_t s = 0; s < prob.slots.size(); ++s) {
      const Slot& slot = prob.slots[s];
      if (slot.shared_with >= 0) continue;
      const auto& full = slot.four_state ? prob.basis4(2 * prob.beta)
                                         : prob.basis2(2 * prob.beta);
      for (size_t b = 0; b < full.size(); ++b) {
        const int var = slot.var_offset + static_cast<int>(b);
        const Canonical& cn = lay.canon[var];
        sc << "    {\"var\": " << var << ", \"slot\": " << s << ", \"kind\": "
           << static_cast<int>(slot.kind) << ", \"n\": " << slot.n
           << ", \"i\": " << slot.i << ", \"mono\": [" << full[b].c() << ", "
           << full[b].s() << ", " << full[b].phi() << ", " << full[b].I()
           << "], \"block\": " << cn.block << ", \"row\": " << cn.row
           << ", \"col\": " << cn.col << "}"
           << (var + 1 == prob.num_vars ? "\n" : ",\n");
      }
    }
    sc << "  ]\n}\n";
  }
}

InterchangeData read_interchange(const std::string& path) {
  std::ifstream in(path);
  if (!in) throw std::runtime_error("cannot open interchange file: " + path);
  InterchangeData d;
  std::string line;
  // Header lines may be preceded by comments starting with " or *.
  auto next_data_line = [&]() {
    while (std::getline(in, line)) {
      if (line.empty()) continue;
      if (line[0] == '"' || line[0] == '*') continue;
      return true;
    }
    return false;
  };
  if (!next_data_line()) throw std::runtime_error("truncated interchange file");
  d.num_constraints = std::stoi(line);
  if (!next_data_line()) throw std::runtime_error("truncated interchange file");
  const int nblocks = std::stoi(line);
  if (!next_data_line()) throw std::runtime_error("truncated interchange file");
  {
    std::istringstream ss(line);
    int v;
    while (ss >> v) d.block_sizes.push_back(v);
    if (static_cast<int>(d.block_sizes.size()) != nblocks)
      throw std::runtime_error("block count does not match block sizes");
  }
  if (!next_data_line()) throw std::runtime_error("truncated interchange file");
  {
    std::istringstream ss(line);
    std::vector<double> rhs;
    double v;
    while (ss >> v) rhs.push_back(v);
    d.rhs = Eigen::Map<Eigen::VectorXd>(rhs.data(),
                                        static_cast<long>(rhs.size()));
  }
  while (next_data_line()) {
    std::istringstream ss(line);
    InterchangeData::Entry e;
    if (ss >> e.mat >> e.blk >> e.row >> e.col >> e.value)
      d.entries.push_back(e);
  }
  return d;
}

void write_solution_file(const std::string& path, const SdpProblem& prob,
                         const Eigen::VectorXd& y) {
  ExportLayout lay = make_layout(prob);
  std::vector<FileEntry> scratch;
  assemble_rows(prob, lay, scratch);  // for the dual-vector length only
  std::ofstream out(path);
  if (!out) throw std::runtime_error("cannot write solution file: " + path);
  for (int i = 0; i < lay.num_rows; ++i) out << (i ? " " : "") << "0";
  out << "\n";
  for (int var = 0; var < prob.num_vars; ++var) {
    const Canonical& cn = lay.canon[var];
    out << "2 " << cn.block << " " << cn.row << " " << cn.col << " "
        << io::format_double(y[var]) << "\n";
  }
}

PseudoMomentSolution import_solution(const std::string& path,
                                     const SdpProblem& prob) {
  std::ifstream in(path);
  if (!in) throw std::runtime_error("cannot open solution file: " + path);
  ExportLayout lay = make_layout(prob);
  std::vector<FileEntry> scratch;
  assemble_rows(prob, lay, scratch);

  std::string line;
  if (!std::getline(in, line))
    throw std::runtime_error("empty solution file");
  std::vector<double> dual;
  {
    std::istringstream ss(line);
    double v;
    while (ss >> v) dual.push_back(v);
  }
  if (static_cast<int>(dual.size()) != lay.num_rows)
    throw std::runtime_error(
        "solution dual vector length does not match problem rows");

  std::map<std::tuple<int, int, int>, double> xent;
  while (std::getline(in, line)) {
    if (line.empty()) continue;
    std::istringstream ss(line);
    int mat, blk, r, c;
    double v;
    if (!(ss >> mat >> blk >> r >> c >> v)) continue;
    if (mat != 2) continue;  // primal matrix entries only
    if (blk < 1 ||
        blk > static_cast<int>(prob.blocks.size()) + (lay.num_slack ? 1 : 0))
      throw std::runtime_error("solution references an unknown block");
    xent[{blk, std::min(r, c), std::max(r, c)}] = v;
  }

  PseudoMomentSolution sol;
  sol.y = Eigen::VectorXd::Zero(prob.num_vars);
  for (int var = 0; var < prob.num_vars; ++var) {
    const Canonical& cn = lay.canon[var];
    const auto it = xent.find({cn.block, cn.row, cn.col});
    sol.y[var] = it == xent.end() ? 0.0 : it->second;
  }
  sol.status = SolverStatus::Imported;
  sol.objective = evaluate_objective(prob, sol.y);
  double dual_obj = 0.0;
  for (int i = 0; i < lay.num_rows; ++i) dual_obj += lay.rhs[i] * dual[i];
  // File objective is the negated functional; the solver's dual value mirrors
  // that sign.
  sol.duality_gap = std::abs(-dual_obj - sol.objective);
  return sol;
}

}  // namespace opp::moment
