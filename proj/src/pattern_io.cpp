#include "opp/pattern_io.hpp"

#include <json.hpp>

#include <cstdio>
#include <fstream>
#include <sstream>
#include <stdexcept>

namespace opp::io {

std::string format_double(double v) {
  char buf[40];
  std::snprintf(buf, sizeof(buf), "%.17g", v);
  return buf;
}

std::string to_json(const PatternRecord& rec) {
  // Numbers are emitted as %.17g raw tokens to keep the record byte
  // reproducible across writers.
  std::ostringstream os;
  os << "{\n  \"levels\": [";
  for (int i = 0; i < rec.levels.size(); ++i)
    os << (i ? ", " : "") << format_double(rec.levels.values()[i]);
  os << "],\n  \"n\": [";
  for (int i = 0; i < rec.pattern.level_indices().size(); ++i)
    os << (i ? ", " : "") << rec.pattern.level_indices()[i];
  os << "],\n  \"alpha\": [";
  for (int i = 0; i < rec.pattern.angles().size(); ++i)
    os << (i ? ", " : "") << format_double(rec.pattern.angles()[i]);
  os << "],\n  \"k\": " << rec.pattern.switch_count();
  os << ",\n  \"symmetry\": \"" << to_string(rec.symmetry) << "\"";
  os << ",\n  \"unipolar\": " << (rec.unipolar ? "true" : "false");
  os << "\n}\n";
  return os.str();
}

PatternRecord pattern_from_json(const std::string& text) {
  nlohmann::json j;
  try {
    j = nlohmann::json::parse(text);
  } catch (const nlohmann::json::exception& e) {
    throw std::invalid_argument(std::string("pattern record parse error: ") +
                                e.what());
  }
  if (!j.contains("levels") || !j.contains("n") || !j.contains("alpha"))
    throw std::invalid_argument("pattern record missing levels/n/alpha");
  Eigen::VectorXd levels(j["levels"].size());
  for (size_t i = 0; i < j["levels"].size(); ++i)
    levels[static_cast<long>(i)] = j["levels"][i].get<double>();
  Eigen::VectorXi n(j["n"].size());
  for (size_t i = 0; i < j["n"].size(); ++i)
    n[static_cast<long>(i)] = j["n"][i].get<int>();
  Eigen::VectorXd alpha(j["alpha"].size());
  for (size_t i = 0; i < j["alpha"].size(); ++i)
    alpha[static_cast<long>(i)] = j["alpha"][i].get<double>();
  if (j.contains("k") && j["k"].get<int>() != static_cast<int>(alpha.size()))
    throw std::invalid_argument("pattern record k does not match alpha");
  PatternRecord rec{LevelSet(std::move(levels)),
                    PulsePattern(std::move(n), std::move(alpha)),
                    Symmetry::FW, false};
  if (j.contains("symmetry"))
    rec.symmetry = symmetry_from_string(j["symmetry"].get<std::string>());
  if (j.contains("unipolar")) rec.unipolar = j["unipolar"].get<bool>();
  return rec;
}

PatternRecord read_pattern_file(const std::string& path) {
  std::ifstream in(path);
  if (!in) throw std::runtime_error("cannot open pattern file: " + path);
  std::stringstream ss;
  ss << in.rdbuf();
  return pattern_from_json(ss.str());
}

void write_pattern_file(const std::string& path, const PatternRecord& rec) {
  std::ofstream out(path);
  if (!out) throw std::runtime_error("cannot write pattern file: " + path);
  out << to_json(rec);
}

}  // namespace opp::io
