#pragma once

// Closed-form conflict and load figures for E, 3T and ACT(t), their exact
// combinatorial counterparts, and Monte Carlo estimators over simulated runs.

#include <cstdint>
#include <optional>
#include <string>
#include <vector>

#include "securecast/protocols.hpp"
#include "securecast/simnet.hpp"

namespace securecast {

struct AnalysisParams {
  std::uint32_t n = 100;
  std::uint32_t t = 10;
  std::uint32_t kappa = 3;
  std::uint32_t delta = 5;
  std::uint32_t slack_c = 0;

  /// 3t+1 <= n, kappa <= n, delta <= 3t (when t >= 1), C <= kappa. Throws InvalidParams.
  void validate() const;
};

struct FaultyActive {
  double power = 0;  // (t/n)^kappa
  double exact = 0;  // C(t,kappa)/C(n,kappa), zero when kappa > t
};

FaultyActive p_faulty_active_set(const AnalysisParams& p);

struct ProbeMiss {
  double with_replacement = 1;     // (2t/(3t+1))^delta
  double without_replacement = 1;  // C(2t-1,delta)/C(3t,delta): delta distinct peers out of W_3T minus the prober
};

ProbeMiss probe_miss_probability(const AnalysisParams& p);

struct ConflictBound {
  double specific = 0;    // (t/n)^k + (1-(t/n)^k)(2t/(3t+1))^d
  double worst_case = 0;  // (1/3)^k + (1-(1/3)^k)(2/3)^d
};

ConflictBound overall_conflict_bound(const AnalysisParams& p);

struct KappaC {
  std::uint32_t faulty = 0;  // floor(n/3)
  double exact = 0;
  double bound = 0;
  bool bound_holds = true;
};

/// Probability that at least kappa-C of kappa uniformly chosen processes are
/// faulty when floor(n/3) of n are. Exact rational arithmetic up to n = 3000,
/// log-gamma beyond (relative error below 1e-9 on the tested range).
KappaC p_kappa_c(const AnalysisParams& p);

struct Load {
  double value = 0;
  bool extension = false;  // E is not covered by the closed forms
};

Load failure_free_load(ProtocolKind kind, const AnalysisParams& p);
Load failure_load_bound(ProtocolKind kind, const AnalysisParams& p);

/// Smallest kappa*(delta+1) with specific bound <= epsilon, n-t >= kappa*delta and
/// delta <= 3t; ties go to the smaller kappa.
struct KappaDelta {
  std::uint32_t kappa = 0;
  std::uint32_t delta = 0;
  double bound = 0;
};

std::optional<KappaDelta> solve_for_epsilon(std::uint32_t n, std::uint32_t t, double epsilon);

/// Exact binomial coefficient as a double (arbitrary precision internally).
double binomial(std::uint32_t n, std::uint32_t k);

struct MonteCarloResult {
  std::uint64_t trials = 0;
  std::uint64_t attacked = 0;
  std::uint64_t conflicts = 0;
  double estimate = 0;
  double sigma = 0;      // sqrt(p(1-p)/N) at the estimate
  double ci_low = 0;     // estimate -/+ 3 sigma, clamped to [0, 1]
  double ci_high = 0;
  double bound = 0;      // overall_conflict_bound(...).specific
  double bound_sigma = 0;  // sqrt(b(1-b)/N) at the bound
  bool insufficient_trials = false;  // the 3-sigma interval is wider than the bound itself
  std::uint64_t violations = 0;      // absolute-property violations across all trials
  std::vector<std::string> violation_samples;

  /// The estimate is compatible with the bound: ci_low <= bound.
  bool pass() const { return ci_low <= bound; }
};

/// Runs `trials` independent worlds; trial i uses SimSeeds::from(derive_seed(base_seed, "trial", i)).
MonteCarloResult monte_carlo_conflict_rate(const SimConfig& config, std::uint64_t trials, std::uint64_t base_seed,
                                           unsigned threads = 0);

/// max over processes of (certificate signatures + probes answered) / correct multicasts.
double measured_load(const RunReport& report);

struct BoundReport {
  AnalysisParams params;
  FaultyActive faulty_active;
  ProbeMiss probe_miss;
  ConflictBound conflict;
  KappaC kappa_c;
  Load ff_e, ff_3t, ff_act, fail_3t, fail_act;
};

BoundReport bound_report(const AnalysisParams& p);

std::string bound_csv_header();
std::string bound_csv_row(const BoundReport& r);

/// printf("%.6g").
std::string format_g6(double v);

}  // namespace securecast
