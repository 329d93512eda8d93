#include "securecast/cli.hpp"

#include <CLI11.hpp>

#include <algorithm>
#include <charconv>
#include <cmath>
#include <cstdlib>
#include <fstream>
#include <functional>
#include <iostream>
#include <memory>
#include <sstream>

#include "securecast/checker.hpp"
#include "securecast/trace.hpp"

namespace securecast {

namespace {

std::string normalize(std::string key) {
  std::replace(key.begin(), key.end(), '-', '_');
  return key;
}

std::string trim(const std::string& s) {
  const auto b = s.find_first_not_of(" \t\r");
  if (b == std::string::npos) return {};
  const auto e = s.find_last_not_of(" \t\r");
  return s.substr(b, e - b + 1);
}

std::uint64_t parse_u64(const std::string& key, const std::string& value) {
  std::uint64_t v = 0;
  const auto* end = value.data() + value.size();
  const auto [ptr, ec] = std::from_chars(value.data(), end, v);
  if (value.empty() || ec != std::errc() || ptr != end) {
    throw InvalidParams(key + ": expected a non-negative integer (got '" + value + "')");
  }
  return v;
}

std::uint32_t parse_u32(const std::string& key, const std::string& value) {
  const auto v = parse_u64(key, value);
  if (v > 0xffffffffull) throw InvalidParams(key + ": value out of range (got '" + value + "')");
  return static_cast<std::uint32_t>(v);
}

Tick parse_tick(const std::string& key, const std::string& value) {
  const auto v = parse_u64(key, value);
  if (v > static_cast<std::uint64_t>(INT64_MAX)) throw InvalidParams(key + ": value out of range");
  return static_cast<Tick>(v);
}

double parse_double(const std::string& key, const std::string& value) {
  char* end = nullptr;
  const double v = std::strtod(value.c_str(), &end);
  if (value.empty() || end != value.c_str() + value.size() || !std::isfinite(v)) {
    throw InvalidParams(key + ": expected a number (got '" + value + "')");
  }
  return v;
}

bool parse_bool(const std::string& key, const std::string& value) {
  if (value == "1" || value == "true" || value == "yes" || value == "on") return true;
  if (value == "0" || value == "false" || value == "no" || value == "off") return false;
  throw InvalidParams(key + ": expected 0 or 1 (got '" + value + "')");
}

std::vector<std::uint32_t> parse_id_list(const std::string& key, const std::string& value) {
  std::vector<std::uint32_t> ids;
  std::string item;
  std::istringstream in(value);
  while (std::getline(in, item, value.find(';') != std::string::npos ? ';' : ',')) {
    item = trim(item);
    if (!item.empty()) ids.push_back(parse_u32(key, item));
  }
  return ids;
}

std::optional<std::string> take(Settings& s, const std::string& key) {
  auto it = s.find(key);
  if (it == s.end()) return std::nullopt;
  auto v = it->second;
  s.erase(it);
  return v;
}

struct Flag {
  const char* name;
  const char* help;
};

const std::vector<Flag> kSimFlags = {
    {"protocol", "e, 3t or act"},
    {"n", "number of processes"},
    {"t", "resilience threshold"},
    {"kappa", "ACT active witnesses"},
    {"delta", "ACT probes per active witness"},
    {"slack-c", "ACT certificate slack C"},
    {"w3t", "W_3T selection: uniform or blocks"},
    {"messages", "multicasts by correct senders"},
    {"message-interval", "ticks between correct multicasts"},
    {"faulty-messages", "multicasts requested from each faulty process"},
    {"adversary", "none, silent, crash, equivocate, collusive, regime-split, seq-burner"},
    {"faulty-count", "number of faulty processes (default t with an adversary)"},
    {"faulty", "explicit faulty ids, comma-separated"},
    {"crash-at", "crash tick for the crash adversary"},
    {"adversary-knows-r", "0/1: adversary may plan with the witness seed"},
    {"seed", "seed for all randomness"},
    {"drop-prob", "per-attempt drop probability"},
    {"retransmit-interval", "ticks between retransmissions"},
    {"latency-lo", "minimum link latency"},
    {"latency-hi", "maximum link latency"},
    {"alert-latency", "alert plane latency bound"},
    {"alert-can-lose", "0/1: let alerts be lost (outside the model)"},
    {"recovery-ack-delay", "delay before a recovery ack is released"},
    {"recovery-timeout", "ACT no-failure regime timeout"},
    {"stability-lag", "stability oracle lag"},
    {"stability-timeout", "stability re-forward timeout"},
    {"holdback-cap", "per-sender holdback capacity"},
    {"max-ticks", "simulation horizon"},
};

void add_flags(CLI::App* sub, const std::vector<Flag>& flags, Settings& into) {
  for (const auto& f : flags) {
    const std::string key = normalize(f.name);
    sub->add_option_function<std::string>(
        std::string("--") + f.name, [&into, key](const std::string& v) { into[key] = v; }, f.help);
  }
}

// File settings first, flags on top.
Settings merged(const std::string& config_path, const Settings& flags) {
  Settings s;
  if (!config_path.empty()) {
    std::ifstream in(config_path);
    if (!in) throw InvalidParams("config: cannot open '" + config_path + "'");
    s = parse_settings(in, config_path);
  }
  for (const auto& [k, v] : flags) s[k] = v;
  return s;
}

std::uint64_t seed_of(const Settings& s) {
  auto it = s.find("seed");
  return it == s.end() ? 0 : parse_u64("seed", it->second);
}

void print_report(std::ostream& out, const SimConfig& c, std::uint64_t seed, const RunReport& r) {
  out << "protocol=" << to_string(c.protocol) << " n=" << c.n << " t=" << c.t;
  if (c.protocol == ProtocolKind::Act) out << " kappa=" << c.kappa << " delta=" << c.delta << " slack_c=" << c.slack_c;
  out << " adversary=" << to_string(c.adversary) << " faulty=" << r.faulty.size() << " seed=" << seed << '\n';
  out << "multicasts=" << r.multicasts << " deliveries=" << r.total_deliveries() << " conflicts=" << r.conflicts
      << " alerts=" << r.alerts << " attacked=" << r.attacked.size()
      << " attacked_conflicts=" << r.attacked_conflicts() << '\n';
  out << "ticks=" << r.ticks << " events=" << r.events << " quiescent=" << (r.quiescent ? 1 : 0)
      << " load=" << format_g6(measured_load(r)) << '\n';
  out << "violations=" << r.violations.size() << '\n';
  for (const auto& v : r.violations) out << "violation tick=" << v.tick << ' ' << v.property << ": " << v.detail << '\n';
}

int cmd_simulate(Settings s, std::ostream& out, std::ostream& err) {
  const auto trace_out = take(s, "trace_out");
  const auto seed = seed_of(s);
  const auto config = sim_config_from(s);
  config.validate();

  std::ofstream file;
  std::unique_ptr<TextTraceWriter> writer;
  if (trace_out) {
    file.open(*trace_out, std::ios::binary | std::ios::trunc);
    if (!file) {
      err << "error: trace_out: cannot open '" << *trace_out << "'\n";
      return kExitConfig;
    }
    writer = std::make_unique<TextTraceWriter>(file);
  }
  SimWorld world(config, writer.get());
  const auto report = world.run_to_quiescence();
  print_report(out, config, seed, report);
  return report.violations.empty() ? kExitOk : kExitViolation;
}

std::string mc_header() { return "trials,attacked,conflicts,estimate,sigma,ci_low,ci_high,bound,verdict"; }

std::string mc_row(const MonteCarloResult& r) {
  return std::to_string(r.trials) + "," + std::to_string(r.attacked) + "," + std::to_string(r.conflicts) + "," +
         format_g6(r.estimate) + "," + format_g6(r.sigma) + "," + format_g6(r.ci_low) + "," + format_g6(r.ci_high) +
         "," + format_g6(r.bound) + "," + (r.pass() && r.violations == 0 ? "PASS" : "FAIL");
}

void warn_mc(std::ostream& err, const MonteCarloResult& r) {
  if (r.insufficient_trials) {
    err << "warning: insufficient trials: " << r.attacked << " attacked ids give a 3-sigma interval wider than the bound "
        << format_g6(r.bound) << '\n';
  }
  for (const auto& v : r.violation_samples) err << "violation " << v << '\n';
}

int cmd_montecarlo(Settings s, std::ostream& out, std::ostream& err) {
  const auto trials = parse_u64("trials", take(s, "trials").value_or("1000"));
  const auto threads = parse_u32("parallel", take(s, "parallel").value_or("0"));
  const auto seed = seed_of(s);
  const auto config = sim_config_from(s);
  const auto r = monte_carlo_conflict_rate(config, trials, seed, threads);
  out << "protocol,n,t,kappa,delta,adversary," << mc_header() << '\n';
  out << to_string(config.protocol) << ',' << config.n << ',' << config.t << ',' << config.kappa << ','
      << config.delta << ',' << to_string(config.adversary) << ',' << mc_row(r) << '\n';
  warn_mc(err, r);
  return r.pass() && r.violations == 0 ? kExitOk : kExitViolation;
}

AnalysisParams analysis_params(Settings& s, bool require_nt) {
  AnalysisParams p;
  auto field = [&](const char* key, std::uint32_t& dst, bool required) {
    if (auto v = take(s, key)) {
      dst = parse_u32(key, *v);
    } else if (required) {
      throw InvalidParams(std::string(key) + ": required");
    }
  };
  field("n", p.n, require_nt);
  field("t", p.t, require_nt);
  field("kappa", p.kappa, false);
  field("delta", p.delta, false);
  field("slack_c", p.slack_c, false);
  return p;
}

int cmd_analyze(Settings s, std::ostream& out, std::ostream&) {
  const bool given = s.count("kappa") || s.count("delta");
  const auto eps = take(s, "epsilon");
  auto p = analysis_params(s, true);
  if (!s.empty()) throw InvalidParams(s.begin()->first + ": unknown key for analyze");
  p.validate();

  std::optional<KappaDelta> solved;
  if (eps) {
    const double epsilon = parse_double("epsilon", *eps);
    if (!(epsilon > 0 && epsilon < 1)) throw InvalidParams("epsilon: must lie in (0, 1)");
    solved = solve_for_epsilon(p.n, p.t, epsilon);
    if (!solved) {
      throw InvalidParams("epsilon: no (kappa, delta) with n-t >= kappa*delta and delta <= 3t reaches " + *eps);
    }
  }
  out << bound_csv_header() << '\n';
  if (!eps || given) out << bound_csv_row(bound_report(p)) << '\n';
  if (solved) {
    auto q = p;
    q.kappa = solved->kappa;
    q.delta = solved->delta;
    q.slack_c = 0;
    out << bound_csv_row(bound_report(q)) << '\n';
    out << "# epsilon=" << *eps << " kappa=" << solved->kappa << " delta=" << solved->delta
        << " cost=" << solved->kappa * (solved->delta + 1) << " bound=" << format_g6(solved->bound) << '\n';
  }
  return kExitOk;
}

void set_axis(const std::string& key, std::uint32_t v, AnalysisParams& a, SimConfig& c) {
  if (key == "n") a.n = c.n = v;
  else if (key == "t") a.t = c.t = v;
  else if (key == "kappa") a.kappa = c.kappa = v;
  else if (key == "delta") a.delta = c.delta = v;
  else a.slack_c = c.slack_c = v;
}

int cmd_sweep(Settings s, std::ostream& out, std::ostream& err) {
  const auto grid_spec = take(s, "grid");
  if (!grid_spec) throw InvalidParams("grid: required");
  const auto grid = parse_grid(*grid_spec);
  const bool mc = parse_bool("montecarlo", take(s, "montecarlo").value_or("0"));
  const auto trials = parse_u64("trials", take(s, "trials").value_or("1000"));
  const auto threads = parse_u32("parallel", take(s, "parallel").value_or("0"));
  const auto out_path = take(s, "out");
  const auto seed = seed_of(s);
  const auto base = sim_config_from(s);

  std::ofstream file;
  std::ostream* sink = &out;
  if (out_path) {
    file.open(*out_path, std::ios::binary | std::ios::trunc);
    if (!file) throw InvalidParams("out: cannot open '" + *out_path + "'");
    sink = &file;
  }
  *sink << bound_csv_header() << (mc ? "," + mc_header() : "") << '\n';

  bool empty = grid.empty();
  for (const auto& axis : grid) empty = empty || axis.hi < axis.lo;
  if (empty) return kExitOk;

  bool failed = false;
  std::vector<std::uint32_t> point(grid.size());
  for (std::size_t i = 0; i < grid.size(); ++i) point[i] = grid[i].lo;
  while (true) {
    AnalysisParams a{base.n, base.t, base.kappa, base.delta, base.slack_c};
    SimConfig c = base;
    std::string label;
    for (std::size_t i = 0; i < grid.size(); ++i) {
      set_axis(grid[i].key, point[i], a, c);
      label += (i ? " " : "") + grid[i].key + "=" + std::to_string(point[i]);
    }
    try {
      a.validate();
      std::string row = bound_csv_row(bound_report(a));
      if (mc) {
        try {
          c.validate();
          const auto r = monte_carlo_conflict_rate(c, trials, seed, threads);
          row += "," + mc_row(r);
          failed = failed || !r.pass() || r.violations > 0;
          if (r.insufficient_trials) err << "warning: " << label << ": insufficient trials\n";
        } catch (const std::invalid_argument& e) {
          row += ",,,,,,,,,invalid";
          err << "warning: " << label << ": no simulation: " << e.what() << '\n';
        }
      }
      *sink << row << '\n';
    } catch (const InvalidParams& e) {
      err << "warning: " << label << ": skipped: " << e.what() << '\n';
    }
    std::size_t i = grid.size();
    while (i > 0 && point[i - 1] == grid[i - 1].hi) {
      point[i - 1] = grid[i - 1].lo;
      --i;
    }
    if (i == 0) break;
    ++point[i - 1];
  }
  return failed ? kExitViolation : kExitOk;
}

int cmd_trace_check(const std::string& path, std::ostream& out, std::ostream& err) {
  std::ifstream in(path);
  if (!in) {
    err << "error: cannot open trace '" << path << "'\n";
    return kExitConfig;
  }
  InvariantChecker checker;
  std::vector<std::pair<std::size_t, std::string>> lines;  // record index -> (line number, text)
  std::string line;
  std::size_t number = 0;
  while (std::getline(in, line)) {
    ++number;
    if (trim(line).empty()) continue;
    try {
      checker.on_record(parse_record(line));
    } catch (const TraceParseError& e) {
      err << "error: line " << number << ": " << e.what() << '\n';
      return kExitConfig;
    }
    lines.emplace_back(number, line);
  }
  const auto& summary = checker.finish();
  out << "records=" << lines.size() << " deliveries=" << summary.deliveries << " conflicts=" << summary.conflicts
      << " alerts=" << summary.alerts << " quiescent=" << (summary.quiescent ? 1 : 0) << '\n';
  out << "violations=" << summary.violations.size() << '\n';
  for (const auto& v : summary.violations) {
    if (v.record < lines.size()) {
      out << "line " << lines[v.record].first << ": " << v.property << ": " << v.detail << '\n';
      out << "  " << lines[v.record].second << '\n';
    } else {
      out << "end of trace: " << v.property << ": " << v.detail << '\n';
    }
  }
  return summary.violations.empty() ? kExitOk : kExitViolation;
}

}  // namespace

Settings parse_settings(std::istream& in, const std::string& origin) {
  Settings s;
  std::string line;
  std::size_t number = 0;
  while (std::getline(in, line)) {
    ++number;
    if (const auto hash = line.find('#'); hash != std::string::npos) line.erase(hash);
    line = trim(line);
    if (line.empty()) continue;
    const auto eq = line.find('=');
    if (eq == std::string::npos) {
      throw InvalidParams(origin + ":" + std::to_string(number) + ": expected key=value");
    }
    const auto key = normalize(trim(line.substr(0, eq)));
    if (key.empty()) throw InvalidParams(origin + ":" + std::to_string(number) + ": empty key");
    s[key] = trim(line.substr(eq + 1));
  }
  return s;
}

SimConfig sim_config_from(const Settings& s) {
  SimConfig c;
  bool seen_adversary_count = false;
  for (const auto& [key, value] : s) {
    if (key == "protocol") c.protocol = parse_protocol(value);
    else if (key == "n") c.n = parse_u32(key, value);
    else if (key == "t") c.t = parse_u32(key, value);
    else if (key == "kappa") c.kappa = parse_u32(key, value);
    else if (key == "delta") c.delta = parse_u32(key, value);
    else if (key == "slack_c") c.slack_c = parse_u32(key, value);
    else if (key == "w3t") c.w3t_mode = parse_w3t_mode(value);
    else if (key == "messages") c.messages = parse_u64(key, value);
    else if (key == "message_interval") c.message_interval = parse_tick(key, value);
    else if (key == "faulty_messages") c.faulty_messages = parse_u64(key, value);
    else if (key == "adversary") c.adversary = parse_adversary(value);
    else if (key == "faulty_count") {
      c.faulty_count = parse_u32(key, value);
      seen_adversary_count = true;
    } else if (key == "faulty") c.faulty = parse_id_list(key, value);
    else if (key == "crash_at") c.crash_at = parse_tick(key, value);
    else if (key == "adversary_knows_r") c.adversary_knows_r = parse_bool(key, value);
    else if (key == "seed") c.seeds = SimSeeds::from(parse_u64(key, value));
    else if (key == "drop_prob") c.p_drop = parse_double(key, value);
    else if (key == "retransmit_interval") c.retransmit_interval = parse_tick(key, value);
    else if (key == "latency_lo") c.latency_lo = parse_tick(key, value);
    else if (key == "latency_hi") c.latency_hi = parse_tick(key, value);
    else if (key == "alert_latency") c.alert_latency = parse_tick(key, value);
    else if (key == "alert_can_lose") c.alert_can_lose = parse_bool(key, value);
    else if (key == "recovery_ack_delay") c.recovery_ack_delay = parse_tick(key, value);
    else if (key == "recovery_timeout") c.recovery_timeout = parse_tick(key, value);
    else if (key == "stability_lag") c.stability_lag = parse_tick(key, value);
    else if (key == "stability_timeout") c.stability_timeout = parse_tick(key, value);
    else if (key == "holdback_cap") c.holdback_cap = parse_u64(key, value);
    else if (key == "max_ticks") c.max_ticks = parse_tick(key, value);
    else throw InvalidParams(key + ": unknown setting");
  }
  if (c.faulty && seen_adversary_count && *c.faulty_count != c.faulty->size()) {
    throw InvalidParams("faulty_count: disagrees with the explicit faulty list");
  }
  return c;
}

std::vector<GridAxis> parse_grid(const std::string& spec) {
  std::vector<GridAxis> axes;
  std::istringstream in(spec);
  std::string item;
  while (std::getline(in, item, ',')) {
    item = trim(item);
    if (item.empty()) continue;
    const auto eq = item.find('=');
    if (eq == std::string::npos) throw InvalidParams("grid: expected key=lo..hi (got '" + item + "')");
    GridAxis axis;
    axis.key = normalize(trim(item.substr(0, eq)));
    if (axis.key != "n" && axis.key != "t" && axis.key != "kappa" && axis.key != "delta" && axis.key != "slack_c") {
      throw InvalidParams("grid: unknown axis '" + axis.key + "'");
    }
    for (const auto& other : axes) {
      if (other.key == axis.key) throw InvalidParams("grid: axis '" + axis.key + "' given twice");
    }
    const auto range = trim(item.substr(eq + 1));
    const auto dots = range.find("..");
    if (dots == std::string::npos) {
      axis.lo = axis.hi = parse_u32("grid " + axis.key, range);
    } else {
      axis.lo = parse_u32("grid " + axis.key, trim(range.substr(0, dots)));
      axis.hi = parse_u32("grid " + axis.key, trim(range.substr(dots + 2)));
    }
    axes.push_back(axis);
  }
  return axes;
}

int run_cli(const std::vector<std::string>& args, std::ostream& out, std::ostream& err) {
  CLI::App app{"Secure reliable multicast: E, 3T and ACT(t) simulation and analysis", "securecast"};
  app.require_subcommand(1);

  Settings flags;
  std::string config_path;
  std::string trace_path;

  auto* simulate = app.add_subcommand("simulate", "Run one seeded world and report");
  add_flags(simulate, kSimFlags, flags);
  simulate->add_option_function<std::string>(
      "--trace-out", [&](const std::string& v) { flags["trace_out"] = v; }, "write the trace here");
  simulate->add_option("--config", config_path, "key=value settings file (flags override)");

  auto* montecarlo = app.add_subcommand("montecarlo", "Estimate the ACT conflict rate over many worlds");
  add_flags(montecarlo, kSimFlags, flags);
  add_flags(montecarlo, {{"trials", "number of worlds"}, {"parallel", "concurrent worlds"}}, flags);
  montecarlo->add_option("--config", config_path, "key=value settings file (flags override)");

  auto* analyze = app.add_subcommand("analyze", "Print the bound table for one parameter point");
  add_flags(analyze,
            {{"n", "number of processes"},
             {"t", "resilience threshold"},
             {"kappa", "active witnesses"},
             {"delta", "probes per active witness"},
             {"slack-c", "certificate slack C"},
             {"epsilon", "also solve for the cheapest (kappa, delta) reaching this bound"}},
            flags);
  analyze->add_option("--config", config_path, "key=value settings file (flags override)");

  auto* sweep = app.add_subcommand("sweep", "Bound table (and optional Monte Carlo) over a parameter grid");
  add_flags(sweep, kSimFlags, flags);
  add_flags(sweep,
            {{"grid", "e.g. \"kappa=1..6,delta=1..12\""},
             {"trials", "worlds per grid point with --montecarlo"},
             {"parallel", "concurrent worlds"},
             {"out", "write the CSV here instead of stdout"}},
            flags);
  sweep->add_flag_callback("--montecarlo", [&] { flags["montecarlo"] = "1"; }, "add Monte Carlo columns");
  sweep->add_option("--config", config_path, "key=value settings file (flags override)");

  auto* trace_check = app.add_subcommand("trace-check", "Replay a trace through the invariant checker");
  trace_check->add_option("path", trace_path, "trace file")->required();

  std::vector<const char*> argv{"securecast"};
  for (const auto& a : args) argv.push_back(a.c_str());
  try {
    app.parse(static_cast<int>(argv.size()), argv.data());
  } catch (const CLI::ParseError& e) {
    const int code = app.exit(e, out, err);
    return code == 0 ? kExitOk : kExitConfig;
  }

  try {
    if (trace_check->parsed()) return cmd_trace_check(trace_path, out, err);
    auto settings = merged(config_path, flags);
    if (simulate->parsed()) return cmd_simulate(std::move(settings), out, err);
    if (montecarlo->parsed()) return cmd_montecarlo(std::move(settings), out, err);
    if (analyze->parsed()) return cmd_analyze(std::move(settings), out, err);
    return cmd_sweep(std::move(settings), out, err);
  } catch (const std::invalid_argument& e) {
    err << "error: " << e.what() << '\n';
    return kExitConfig;
  }
}

}  // namespace securecast
