#pragma once

#include <filesystem>
#include <iosfwd>
#include <optional>
#include <string>
#include <vector>

#include "ropelab/model.hpp"

namespace ropelab {

struct ProfilerSettings {
  std::vector<Position> positions;  // empty means default_positions(max_positions)
  std::filesystem::path documents;
  std::size_t limit = 128;
  std::filesystem::path output;
  bool verbose = false;
  bool zero_q = false;
};

/// Parsed `section.key = value` run configuration.
///
/// Sections are model, rope, scaling and profiler; `#` starts a comment.
/// Unset rope.d follows model.d_head, unset scaling.c and scaling.s follow the
/// rope window and its scaling factor. Relative paths resolve against the
/// directory of the config file.
struct RunConfig {
  ModelSpec model;
  std::optional<std::filesystem::path> weights;
  RopeConfig rope;
  ScalingPolicy scaling;
  ProfilerSettings profiler;

  void validate() const;
};

RunConfig parse_run_config(std::istream& in, const std::filesystem::path& base_dir = {},
                           const std::string& source = "<config>");
RunConfig load_run_config(const std::filesystem::path& path);

std::vector<Position> parse_position_list(std::string_view text);
std::vector<int> parse_int_list(std::string_view text);

}  // namespace ropelab
