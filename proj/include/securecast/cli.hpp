#pragma once

// Command-line front end: simulate, montecarlo, analyze, sweep, trace-check.
//
// Exit codes: 0 ok, 1 config or parse error, 2 property violation.

#include <iosfwd>
#include <map>
#include <string>
#include <vector>

#include "securecast/analysis.hpp"
#include "securecast/simnet.hpp"

namespace securecast {

inline constexpr int kExitOk = 0;
inline constexpr int kExitConfig = 1;
inline constexpr int kExitViolation = 2;

using Settings = std::map<std::string, std::string>;

/// key=value lines; '#' starts a comment, blank lines are skipped. Keys may use
/// '-' or '_'. Throws InvalidParams naming the line.
Settings parse_settings(std::istream& in, const std::string& origin = "config");

/// Builds a simulator config from settings, rejecting unknown keys and
/// malformed values with field-precise messages. Does not validate ranges.
SimConfig sim_config_from(const Settings& s);

struct GridAxis {
  std::string key;  // n, t, kappa, delta or slack_c
  std::uint32_t lo = 0;
  std::uint32_t hi = 0;  // inclusive; hi < lo gives an empty axis
};

/// "kappa=1..6,delta=1..12" or single values "t=10". An empty spec has no points.
std::vector<GridAxis> parse_grid(const std::string& spec);

/// args excludes the program name.
int run_cli(const std::vector<std::string>& args, std::ostream& out, std::ostream& err);

}  // namespace securecast
