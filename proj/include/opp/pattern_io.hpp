#pragma once

#include "opp/converter.hpp"

#include <iosfwd>
#include <string>

namespace opp::io {

/// Interchange record for a pulse pattern: levels, level indices, angles in
/// radians (17 significant digits), switch count, symmetry tag, unipolar flag.
struct PatternRecord {
  LevelSet levels;
  PulsePattern pattern;
  Symmetry symmetry = Symmetry::FW;
  bool unipolar = false;
};

std::string to_json(const PatternRecord& rec);
PatternRecord pattern_from_json(const std::string& text);

PatternRecord read_pattern_file(const std::string& path);
void write_pattern_file(const std::string& path, const PatternRecord& rec);

/// Fixed-format floating point used by every interchange writer.
std::string format_double(double v);

}  // namespace opp::io
