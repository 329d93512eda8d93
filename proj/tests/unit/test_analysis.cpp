#include <doctest.h>

#include <cmath>
#include <functional>

#include "securecast/analysis.hpp"
#include "securecast/protocols.hpp"

using namespace securecast;

namespace {

// Calls fn on every k-subset of {0..n-1}, as a sorted index vector.
void for_each_subset(std::uint32_t n, std::uint32_t k, const std::function<void(const std::vector<std::uint32_t>&)>& fn) {
  std::vector<std::uint32_t> idx(k);
  for (std::uint32_t i = 0; i < k; ++i) idx[i] = i;
  if (k > n) return;
  while (true) {
    fn(idx);
    std::int64_t i = static_cast<std::int64_t>(k) - 1;
    while (i >= 0 && idx[i] == n - k + i) --i;
    if (i < 0) return;
    ++idx[i];
    for (auto j = static_cast<std::uint32_t>(i) + 1; j < k; ++j) idx[j] = idx[j - 1] + 1;
  }
}

// Fraction of k-subsets with at least `need` members below `marked`.
double enumerate_fraction(std::uint32_t n, std::uint32_t k, std::uint32_t marked, std::uint32_t need) {
  std::uint64_t hit = 0, total = 0;
  for_each_subset(n, k, [&](const std::vector<std::uint32_t>& s) {
    std::uint32_t c = 0;
    for (auto v : s) c += v < marked;
    hit += c >= need;
    ++total;
  });
  return static_cast<double>(hit) / static_cast<double>(total);
}

}  // namespace

TEST_CASE("parameters are validated") {
  CHECK_THROWS_AS(AnalysisParams({3, 1, 1, 1, 0}).validate(), InvalidParams);
  CHECK_THROWS_AS(AnalysisParams({10, 3, 11, 1, 0}).validate(), InvalidParams);
  CHECK_THROWS_AS(AnalysisParams({10, 3, 3, 10, 0}).validate(), InvalidParams);
  CHECK_THROWS_AS(AnalysisParams({10, 3, 3, 2, 4}).validate(), InvalidParams);
  CHECK_NOTHROW(AnalysisParams({10, 0, 3, 0, 0}).validate());
}

TEST_CASE("exact binomials") {
  CHECK(binomial(30, 3) == 4060);
  CHECK(binomial(10, 0) == 1);
  CHECK(binomial(5, 6) == 0);
  const double lg = std::lgamma(101.0) - 2 * std::lgamma(51.0);
  CHECK(std::log(binomial(100, 50)) == doctest::Approx(lg).epsilon(1e-12));
}

TEST_CASE("faulty active set against subset enumeration") {
  for (std::uint32_t n : {7u, 10u, 13u}) {
    const std::uint32_t t = (n - 1) / 3;
    for (std::uint32_t k = 1; k <= 4; ++k) {
      const auto fa = p_faulty_active_set({n, t, k, 0, 0});
      CHECK(fa.exact == doctest::Approx(enumerate_fraction(n, k, t, k)).epsilon(1e-12));
      CHECK(fa.power == doctest::Approx(std::pow(double(t) / n, k)).epsilon(1e-12));
    }
  }
  const auto big = p_faulty_active_set({100, 10, 3, 5, 0});
  CHECK(big.power == doctest::Approx(0.001).epsilon(1e-12));
  CHECK(big.exact == doctest::Approx(120.0 / 161700.0).epsilon(1e-12));
  CHECK(p_faulty_active_set({100, 0, 3, 0, 0}).power == 0);
}

TEST_CASE("probe miss against subset enumeration") {
  // The prober draws delta of the 3t other W_3T members; t+1 of them know m'.
  for (std::uint32_t t = 1; t <= 4; ++t) {
    for (std::uint32_t d = 1; d <= std::min(3 * t, 4u); ++d) {
      const auto miss = probe_miss_probability({3 * t + 1, t, 1, d, 0});
      const double enumerated = 1.0 - enumerate_fraction(3 * t, d, t + 1, 1);
      CHECK(miss.without_replacement == doctest::Approx(enumerated).epsilon(1e-12));
      CHECK(miss.with_replacement == doctest::Approx(std::pow(2.0 * t / (3.0 * t + 1), d)).epsilon(1e-12));
      CHECK(miss.without_replacement <= miss.with_replacement);
    }
  }
  const auto miss = probe_miss_probability({31, 10, 3, 5, 0});
  CHECK(miss.with_replacement == doctest::Approx(std::pow(20.0 / 31.0, 5)).epsilon(1e-12));
  CHECK(miss.without_replacement == doctest::Approx(11628.0 / 142506.0).epsilon(1e-12));
  CHECK(probe_miss_probability({31, 10, 3, 0, 0}).with_replacement == 1);
}

TEST_CASE("probe miss matches the production peer sampler") {
  const std::uint32_t t = 4, d = 3;
  std::vector<ProcessId> range;
  for (std::uint32_t p = 0; p < 3 * t + 1; ++p) range.push_back(ProcessId{p});
  Rng rng(5);
  const int draws = 200000;
  int misses = 0;
  for (int i = 0; i < draws; ++i) {
    bool hit = false;
    for (auto p : choose_peers(rng, range, ProcessId{0}, d)) hit = hit || (to_index(p) >= 1 && to_index(p) <= t + 1);
    misses += !hit;
  }
  const double exact = probe_miss_probability({3 * t + 1, t, 1, d, 0}).without_replacement;
  const double sigma = std::sqrt(exact * (1 - exact) / draws);
  CHECK(std::abs(double(misses) / draws - exact) <= 3 * sigma);
}

TEST_CASE("overall conflict bound") {
  const auto b = overall_conflict_bound({100, 10, 3, 5, 0});
  const double fa = 0.001, miss = std::pow(20.0 / 31.0, 5);
  CHECK(b.specific == doctest::Approx(fa + (1 - fa) * miss).epsilon(1e-12));
  CHECK(b.specific == doctest::Approx(0.112662).epsilon(1e-5));
  CHECK(b.worst_case == doctest::Approx(1.0 / 27 + 26.0 / 27 * 32.0 / 243).epsilon(1e-12));
  CHECK(b.worst_case == doctest::Approx(0.163847).epsilon(1e-5));

  // Detection probabilities behind the worked examples, computed from the formula.
  CHECK(1 - b.specific == doctest::Approx(0.887338).epsilon(1e-5));
  const auto large = overall_conflict_bound({1000, 100, 4, 10, 0});
  const double fa2 = 1e-4, miss2 = std::pow(200.0 / 301.0, 10);
  CHECK(1 - large.specific == doctest::Approx(1 - (fa2 + (1 - fa2) * miss2)).epsilon(1e-12));
}

TEST_CASE("the bound strictly decreases in kappa and in delta") {
  for (std::uint32_t k = 1; k <= 12; ++k) {
    for (std::uint32_t d = 1; d <= 12; ++d) {
      const double here = overall_conflict_bound({100, 10, k, d, 0}).specific;
      if (k < 12) CHECK(overall_conflict_bound({100, 10, k + 1, d, 0}).specific < here);
      if (d < 12) CHECK(overall_conflict_bound({100, 10, k, d + 1, 0}).specific < here);
    }
  }
}

TEST_CASE("P_kappa_C against subset enumeration") {
  for (std::uint32_t n = 6; n <= 21; n += 3) {
    for (std::uint32_t k = 1; k <= 4; ++k) {
      for (std::uint32_t c = 0; c <= std::min(k, 2u); ++c) {
        const auto r = p_kappa_c({n, (n - 1) / 3, k, 0, c});
        CHECK(r.faulty == n / 3);
        CHECK(r.exact == doctest::Approx(enumerate_fraction(n, k, n / 3, k - c)).epsilon(1e-12));
        CHECK(r.bound_holds);
        CHECK(r.exact <= r.bound);
      }
    }
  }
  const auto r = p_kappa_c({30, 9, 3, 0, 1});
  CHECK(r.exact == doctest::Approx(1020.0 / 4060.0).epsilon(1e-12));
  CHECK(r.bound == doctest::Approx(90.0 / 27.0 / 9.0).epsilon(1e-12));
  const auto zero = p_kappa_c({30, 9, 3, 0, 0});
  CHECK(zero.exact == doctest::Approx(binomial(10, 3) / binomial(30, 3)).epsilon(1e-12));
}

TEST_CASE("P_kappa_C for n not divisible by three uses floor(n/3)") {
  const auto r = p_kappa_c({10, 3, 2, 0, 0});
  CHECK(r.faulty == 3);
  CHECK(r.exact == doctest::Approx(3.0 / 45.0).epsilon(1e-12));
}

TEST_CASE("P_kappa_C beyond the exact range") {
  // C = 0 reduces to a falling-factorial ratio that needs no big numbers.
  const std::uint32_t n = 6000, k = 4;
  double ratio = 1;
  for (std::uint32_t i = 0; i < k; ++i) ratio *= double(n / 3 - i) / double(n - i);
  CHECK(p_kappa_c({n, 1999, k, 0, 0}).exact == doctest::Approx(ratio).epsilon(1e-9));
  // Small binomials in plain doubles for a C > 0 point past the switch-over.
  auto choose = [](double a, std::uint32_t b) {
    double r = 1;
    for (std::uint32_t i = 0; i < b; ++i) r = r * (a - i) / (i + 1);
    return r;
  };
  const std::uint32_t m = 3003, f = 1001;
  double sum = 0;
  for (std::uint32_t j = 0; j <= 2; ++j) sum += choose(f, 5 - j) * choose(m - f, j);
  CHECK(p_kappa_c({m, 1000, 5, 0, 2}).exact == doctest::Approx(sum / choose(m, 5)).epsilon(1e-9));
}

TEST_CASE("P_kappa_C bound is flagged where it fails") {
  const auto r = p_kappa_c({120, 39, 9, 0, 5});
  CHECK_FALSE(r.bound_holds);
  CHECK(r.exact > r.bound);
}

TEST_CASE("load figures") {
  const AnalysisParams p{100, 10, 3, 5, 0};
  CHECK(failure_free_load(ProtocolKind::ThreeT, p).value == doctest::Approx(0.21));
  CHECK(failure_free_load(ProtocolKind::Act, p).value == doctest::Approx(0.18));
  CHECK(failure_load_bound(ProtocolKind::ThreeT, p).value == doctest::Approx(0.31));
  CHECK(failure_load_bound(ProtocolKind::Act, p).value == doctest::Approx(0.49));
  const auto e = failure_free_load(ProtocolKind::E, p);
  CHECK(e.extension);
  CHECK(e.value == doctest::Approx(0.56));
  CHECK(failure_free_load(ProtocolKind::Act, {10, 3, 10, 0, 0}).value == doctest::Approx(1.0));
  CHECK(failure_load_bound(ProtocolKind::Act, {10, 0, 2, 0, 0}).value == doctest::Approx(3.0 / 10));
}

TEST_CASE("epsilon solver finds the cheapest feasible point") {
  for (auto [n, t, eps] : std::vector<std::tuple<std::uint32_t, std::uint32_t, double>>{
           {100, 10, 0.001}, {100, 10, 0.05}, {31, 10, 0.2}, {1000, 100, 0.002}}) {
    const auto got = solve_for_epsilon(n, t, eps);
    // Brute force over the whole feasible grid.
    std::optional<std::pair<std::uint32_t, std::uint32_t>> best;
    std::uint64_t best_cost = 0;
    for (std::uint32_t k = 1; k <= n; ++k) {
      for (std::uint32_t d = 0; d <= 3 * t && std::uint64_t(k) * d <= n - t; ++d) {
        const double fa = std::pow(double(t) / n, k);
        const double b = fa + (1 - fa) * std::pow(2.0 * t / (3.0 * t + 1), d);
        const std::uint64_t cost = std::uint64_t(k) * (d + 1);
        if (b <= eps && (!best || cost < best_cost)) {
          best = {k, d};
          best_cost = cost;
        }
      }
    }
    REQUIRE(got.has_value() == best.has_value());
    if (!got) continue;
    CHECK(std::uint64_t(got->kappa) * (got->delta + 1) == best_cost);
    CHECK(got->kappa == best->first);
    CHECK(got->bound <= eps);
    CHECK(std::uint64_t(got->kappa) * got->delta <= n - t);
  }
  CHECK_FALSE(solve_for_epsilon(31, 10, 1e-9).has_value());
}

TEST_CASE("CSV rows line up with the header") {
  const auto header = bound_csv_header();
  const auto row = bound_csv_row(bound_report({100, 10, 3, 5, 0}));
  CHECK(std::count(header.begin(), header.end(), ',') == std::count(row.begin(), row.end(), ','));
  CHECK(row.rfind("100,10,3,5,0,0.001,", 0) == 0);
  CHECK(row.find(",0.111774,") != std::string::npos);
  CHECK(row.find(",0.112662,") != std::string::npos);
  CHECK(format_g6(0.1117744) == "0.111774");
  CHECK(format_g6(1e-7) == "1e-07");
}

TEST_CASE("Monte Carlo on honest senders sees no attacks") {
  SimConfig c;
  c.n = 10;
  c.t = 3;
  c.protocol = ProtocolKind::Act;
  c.kappa = 2;
  c.delta = 2;
  const auto r = monte_carlo_conflict_rate(c, 20, 1);
  CHECK(r.attacked == 0);
  CHECK(r.estimate == 0);
  CHECK(r.insufficient_trials);
  CHECK(r.violations == 0);
}

TEST_CASE("Monte Carlo is deterministic and independent of the worker count") {
  SimConfig c;
  c.n = 31;
  c.t = 10;
  c.protocol = ProtocolKind::Act;
  c.kappa = 3;
  c.delta = 5;
  c.adversary = AdversaryKind::regime_split;
  const auto a = monte_carlo_conflict_rate(c, 40, 9, 1);
  const auto b = monte_carlo_conflict_rate(c, 40, 9, 3);
  CHECK(a.attacked == 400);
  CHECK(a.conflicts == b.conflicts);
  CHECK(a.estimate == b.estimate);
  CHECK(a.violations == 0);
  CHECK(a.bound == doctest::Approx(overall_conflict_bound({31, 10, 3, 5, 0}).specific));
  CHECK(a.pass());
}

TEST_CASE("measured load on an empty report is zero") {
  RunReport r;
  CHECK(measured_load(r) == 0);
}
