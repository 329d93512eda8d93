#include "securecast/analysis.hpp"

#include <boost/multiprecision/cpp_int.hpp>

#include <algorithm>
#include <cmath>
#include <cstdio>
#include <set>

#include "securecast/parallel.hpp"
#include "securecast/rng.hpp"

namespace securecast {

namespace {

using boost::multiprecision::cpp_int;
using boost::multiprecision::cpp_rational;

constexpr std::uint32_t kExactLimit = 3000;

cpp_int choose(std::uint32_t n, std::uint32_t k) {
  if (k > n) return 0;
  k = std::min(k, n - k);
  cpp_int r = 1;
  for (std::uint32_t i = 1; i <= k; ++i) {
    r *= n - k + i;
    r /= i;
  }
  return r;
}

double ratio(const cpp_int& num, const cpp_int& den) { return cpp_rational(num, den).convert_to<double>(); }

double log_choose(double n, double k) { return std::lgamma(n + 1) - std::lgamma(k + 1) - std::lgamma(n - k + 1); }

// Product form of C(a, k) / C(b, k) for a <= b.
double falling_ratio(std::int64_t a, std::int64_t b, std::uint32_t k) {
  long double r = 1;
  for (std::uint32_t i = 0; i < k; ++i) {
    if (a - static_cast<std::int64_t>(i) <= 0) return 0;
    r *= static_cast<long double>(a - i) / static_cast<long double>(b - i);
  }
  return static_cast<double>(r);
}

}  // namespace

void AnalysisParams::validate() const {
  if (n < 1) throw InvalidParams("n: must be positive");
  if (3ull * t + 1 > n) {
    throw InvalidParams("n/t: 3t+1 > n (3t+1 = " + std::to_string(3ull * t + 1) + ", n = " + std::to_string(n) + ")");
  }
  if (kappa > n) throw InvalidParams("kappa: must not exceed n");
  if (t >= 1 && delta > 3 * t) throw InvalidParams("delta: must satisfy δ <= 3t");
  if (slack_c > kappa) throw InvalidParams("slack_c: must not exceed kappa");
}

double binomial(std::uint32_t n, std::uint32_t k) { return choose(n, k).convert_to<double>(); }

FaultyActive p_faulty_active_set(const AnalysisParams& p) {
  p.validate();
  FaultyActive out;
  if (p.t == 0) return out;
  out.power = std::pow(static_cast<double>(p.t) / p.n, p.kappa);
  out.exact = p.kappa > p.t ? 0.0 : falling_ratio(p.t, p.n, p.kappa);
  return out;
}

ProbeMiss probe_miss_probability(const AnalysisParams& p) {
  p.validate();
  ProbeMiss out;
  if (p.delta == 0) return out;
  out.with_replacement = std::pow(2.0 * p.t / (3.0 * p.t + 1.0), p.delta);
  out.without_replacement = falling_ratio(2ll * p.t - 1, 3ll * p.t, p.delta);
  return out;
}

ConflictBound overall_conflict_bound(const AnalysisParams& p) {
  const auto fa = p_faulty_active_set(p).power;
  const auto miss = probe_miss_probability(p).with_replacement;
  ConflictBound out;
  out.specific = fa + (1 - fa) * miss;
  const double third = std::pow(1.0 / 3.0, p.kappa);
  out.worst_case = third + (1 - third) * std::pow(2.0 / 3.0, p.delta);
  return out;
}

KappaC p_kappa_c(const AnalysisParams& p) {
  p.validate();
  KappaC out;
  const std::uint32_t n = p.n, k = p.kappa, c = p.slack_c;
  const std::uint32_t f = n / 3;
  out.faulty = f;
  if (n <= kExactLimit) {
    cpp_int num = 0;
    for (std::uint32_t j = 0; j <= c; ++j) num += choose(f, k - j) * choose(n - f, j);
    out.exact = ratio(num, choose(n, k));
  } else {
    const double total = log_choose(n, k);
    for (std::uint32_t j = 0; j <= c; ++j) {
      if (k - j > f || j > n - f) continue;
      out.exact += std::exp(log_choose(f, k - j) + log_choose(n - f, j) - total);
    }
  }
  const double third = std::pow(1.0 / 3.0, static_cast<double>(k - c));
  if (c == 0) {
    out.bound = third;
  } else if (n == k) {
    out.bound = INFINITY;
  } else {
    out.bound = std::pow(static_cast<double>(k) * n / (static_cast<double>(c) * (n - k)), c) * third;
  }
  out.bound_holds = out.exact <= out.bound * (1 + 1e-12);
  return out;
}

Load failure_free_load(ProtocolKind kind, const AnalysisParams& p) {
  p.validate();
  switch (kind) {
    case ProtocolKind::E:
      return {static_cast<double>(dissemination_quorum_size(QuorumParams{p.n, std::max(p.t, 1u)})) / p.n, true};
    case ProtocolKind::ThreeT: return {(2.0 * p.t + 1) / p.n, false};
    case ProtocolKind::Act: return {static_cast<double>(p.kappa) * (p.delta + 1) / p.n, false};
  }
  return {};
}

Load failure_load_bound(ProtocolKind kind, const AnalysisParams& p) {
  p.validate();
  switch (kind) {
    case ProtocolKind::E: return failure_free_load(kind, p);
    case ProtocolKind::ThreeT: return {(3.0 * p.t + 1) / p.n, false};
    case ProtocolKind::Act: return {(static_cast<double>(p.kappa) * (p.delta + 1) + 3.0 * p.t + 1) / p.n, false};
  }
  return {};
}

std::optional<KappaDelta> solve_for_epsilon(std::uint32_t n, std::uint32_t t, double epsilon) {
  AnalysisParams base{n, t, 1, 0, 0};
  base.validate();
  std::optional<KappaDelta> best;
  std::uint64_t best_cost = 0;
  const std::uint32_t max_delta = 3 * t;
  for (std::uint32_t k = 1; k <= n; ++k) {
    if (best && k > best_cost) break;  // cost >= k for every delta
    for (std::uint32_t d = 0; d <= max_delta; ++d) {
      if (static_cast<std::uint64_t>(k) * d > n - t) break;
      const std::uint64_t cost = static_cast<std::uint64_t>(k) * (d + 1);
      if (best && cost >= best_cost) break;
      const double b = overall_conflict_bound(AnalysisParams{n, t, k, d, 0}).specific;
      if (b <= epsilon) {
        best = KappaDelta{k, d, b};
        best_cost = cost;
        break;
      }
    }
  }
  return best;
}

MonteCarloResult monte_carlo_conflict_rate(const SimConfig& config, std::uint64_t trials, std::uint64_t base_seed,
                                           unsigned threads) {
  config.validate();
  struct Trial {
    std::uint64_t attacked = 0, conflicts = 0;
    std::vector<std::string> violations;
  };
  std::vector<Trial> results(trials);
  parallel_for(trials, worker_count(threads), [&](std::size_t i) {
    SimConfig c = config;
    c.seeds = SimSeeds::from(derive_seed(base_seed, "trial", i));
    SimWorld world(c);
    const auto report = world.run_to_quiescence();
    auto& r = results[i];
    r.attacked = report.attacked.size();
    r.conflicts = report.attacked_conflicts();
    for (const auto& v : report.violations) r.violations.push_back("trial " + std::to_string(i) + ": " + v.property + ": " + v.detail);
  });

  MonteCarloResult out;
  out.trials = trials;
  for (const auto& r : results) {
    out.attacked += r.attacked;
    out.conflicts += r.conflicts;
    out.violations += r.violations.size();
    for (const auto& v : r.violations)
      if (out.violation_samples.size() < 5) out.violation_samples.push_back(v);
  }
  AnalysisParams ap{config.n, config.t, config.kappa, config.delta, 0};
  out.bound = overall_conflict_bound(ap).specific;
  if (out.attacked > 0) {
    const double n = static_cast<double>(out.attacked);
    out.estimate = out.conflicts / n;
    out.sigma = std::sqrt(out.estimate * (1 - out.estimate) / n);
    out.bound_sigma = std::sqrt(out.bound * (1 - out.bound) / n);
    out.ci_low = std::max(0.0, out.estimate - 3 * out.sigma);
    out.ci_high = std::min(1.0, out.estimate + 3 * out.sigma);
    out.insufficient_trials = 6 * out.bound_sigma > out.bound;
  } else {
    out.insufficient_trials = true;
  }
  return out;
}

double measured_load(const RunReport& report) {
  if (report.multicasts == 0) return 0;
  std::uint64_t busiest = 0;
  for (std::size_t p = 0; p < report.witness_accesses.size(); ++p)
    busiest = std::max(busiest, report.witness_accesses[p] + report.peer_accesses[p]);
  return static_cast<double>(busiest) / static_cast<double>(report.multicasts);
}

BoundReport bound_report(const AnalysisParams& p) {
  BoundReport r;
  r.params = p;
  r.faulty_active = p_faulty_active_set(p);
  r.probe_miss = probe_miss_probability(p);
  r.conflict = overall_conflict_bound(p);
  r.kappa_c = p_kappa_c(p);
  r.ff_e = failure_free_load(ProtocolKind::E, p);
  r.ff_3t = failure_free_load(ProtocolKind::ThreeT, p);
  r.ff_act = failure_free_load(ProtocolKind::Act, p);
  r.fail_3t = failure_load_bound(ProtocolKind::ThreeT, p);
  r.fail_act = failure_load_bound(ProtocolKind::Act, p);
  return r;
}

std::string format_g6(double v) {
  char buf[32];
  std::snprintf(buf, sizeof buf, "%.6g", v);
  return buf;
}

std::string bound_csv_header() {
  return "n,t,kappa,delta,slack_c,p_faulty_active,p_faulty_active_exact,probe_miss,probe_miss_exact,"
         "conflict_bound,conflict_bound_worst,detection,p_kappa_c_exact,p_kappa_c_bound,"
         "load_ff_act,load_ff_3t,load_fail_act,load_fail_3t,load_ff_e_ext";
}

std::string bound_csv_row(const BoundReport& r) {
  const auto& p = r.params;
  std::string row = std::to_string(p.n) + "," + std::to_string(p.t) + "," + std::to_string(p.kappa) + "," +
                    std::to_string(p.delta) + "," + std::to_string(p.slack_c);
  for (double v : {r.faulty_active.power, r.faulty_active.exact, r.probe_miss.with_replacement,
                   r.probe_miss.without_replacement, r.conflict.specific, r.conflict.worst_case,
                   1 - r.conflict.specific, r.kappa_c.exact, r.kappa_c.bound, r.ff_act.value, r.ff_3t.value,
                   r.fail_act.value, r.fail_3t.value, r.ff_e.value}) {
    row += ',';
    row += format_g6(v);
  }
  return row;
}

}  // namespace securecast
