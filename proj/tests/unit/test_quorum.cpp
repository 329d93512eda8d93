#include <doctest.h>

#include <boost/math/distributions/chi_squared.hpp>

#include <algorithm>
#include <map>
#include <set>

#include "securecast/quorum.hpp"

using namespace securecast;

namespace {

// Smallest q with 2q - n >= t + 1, found by counting up.
std::uint32_t smallest_consistent_q(std::uint32_t n, std::uint32_t t) {
  std::uint32_t q = 1;
  while (2 * q < n + t + 1) ++q;
  return q;
}

double chi_square_critical(double dof) {
  return boost::math::quantile(boost::math::complement(boost::math::chi_squared(dof), 0.001));
}

}  // namespace

TEST_CASE("quorum size on small systems") {
  CHECK(dissemination_quorum_size({4, 1}) == smallest_consistent_q(4, 1));
  CHECK(dissemination_quorum_size({4, 1}) == 3);
  CHECK(dissemination_quorum_size({100, 10}) == 56);
  CHECK(dissemination_quorum_size({7, 2}) == 5);
}

TEST_CASE("quorum size is the smallest consistent one and stays available") {
  for (std::uint32_t n = 4; n <= 200; ++n) {
    for (std::uint32_t t = 1; 3 * t + 1 <= n; ++t) {
      const auto q = dissemination_quorum_size({n, t});
      REQUIRE(q == smallest_consistent_q(n, t));
      REQUIRE(check_dissemination_properties({n, t}, q));
      REQUIRE_FALSE(check_dissemination_properties({n, t}, q - 1));
    }
  }
}

TEST_CASE("quorum parameters are validated") {
  CHECK_THROWS_AS(QuorumParams({3, 1}).validate(), InvalidParams);
  CHECK_THROWS_AS(QuorumParams({4, 0}).validate(), InvalidParams);
  CHECK_NOTHROW(QuorumParams({4, 1}).validate());
  CHECK_THROWS_AS(dissemination_quorum_size({6, 2}), InvalidParams);
}

TEST_CASE("W_3T ranges have 3t+1 sorted distinct members") {
  const QuorumParams params{31, 7};
  const WitnessSeed seed(42);
  for (auto mode : {W3tMode::uniform, W3tMode::blocks}) {
    for (std::uint64_t seq = 1; seq <= 50; ++seq) {
      const MessageId id{ProcessId{static_cast<std::uint32_t>(seq % 31)}, seq};
      const auto w = w3t(id, params, seed, mode);
      REQUIRE(w.size() == 22);
      REQUIRE(std::is_sorted(w.members.begin(), w.members.end()));
      REQUIRE(std::adjacent_find(w.members.begin(), w.members.end()) == w.members.end());
      REQUIRE(to_index(w.members.back()) < 31);
      REQUIRE(w.members == w3t(id, params, seed, mode).members);
    }
  }
  CHECK(parse_w3t_mode(to_string(W3tMode::blocks)) == W3tMode::blocks);
  CHECK_THROWS_AS(parse_w3t_mode("zigzag"), InvalidParams);
}

TEST_CASE("witness sets depend on the seed") {
  const QuorumParams params{100, 10};
  int differ = 0;
  for (std::uint64_t seq = 1; seq <= 20; ++seq) {
    const MessageId id{ProcessId{0}, seq};
    if (w_active(id, 3, params, WitnessSeed(1)).members != w_active(id, 3, params, WitnessSeed(2)).members) ++differ;
  }
  CHECK(differ >= 18);
}

TEST_CASE("W_active edge sizes") {
  const QuorumParams params{10, 3};
  const WitnessSeed seed(5);
  const MessageId id{ProcessId{1}, 1};
  CHECK(w_active(id, 10, params, seed).size() == 10);
  CHECK(w_active(id, 1, params, seed).size() == 1);
  const auto w = w_active(id, 4, params, seed);
  CHECK(w.kind == WitnessKind::w_active);
  for (auto p : w.members) CHECK(w.contains(p));
  CHECK_THROWS_AS(w_active(id, 11, params, seed), InvalidParams);
}

TEST_CASE("W_active membership is uniform over processes") {
  const QuorumParams params{10, 3};
  const WitnessSeed seed(99);
  const int draws = 30000;
  std::vector<double> counts(10, 0);
  for (int i = 0; i < draws; ++i) {
    for (auto p : w_active(MessageId{ProcessId{static_cast<std::uint32_t>(i % 10)}, static_cast<std::uint64_t>(i)},
                           3, params, seed).members)
      counts[to_index(p)] += 1;
  }
  const double expect = draws * 3.0 / 10.0;
  double chi = 0;
  for (double c : counts) chi += (c - expect) * (c - expect) / expect;
  CHECK(chi < chi_square_critical(9));
}

TEST_CASE("W_active is a uniform subset") {
  const QuorumParams params{6, 1};
  const WitnessSeed seed(123);
  const int draws = 30000;
  std::map<std::vector<ProcessId>, double> counts;
  for (int i = 0; i < draws; ++i)
    counts[w_active(MessageId{ProcessId{0}, static_cast<std::uint64_t>(i + 1)}, 2, params, seed).members] += 1;
  REQUIRE(counts.size() == 15);
  const double expect = draws / 15.0;
  double chi = 0;
  for (const auto& [set, c] : counts) chi += (c - expect) * (c - expect) / expect;
  CHECK(chi < chi_square_critical(14));
}

TEST_CASE("W_3T uniform mode spreads load evenly") {
  const QuorumParams params{20, 3};
  const WitnessSeed seed(7);
  const int draws = 20000;
  std::vector<double> counts(20, 0);
  for (int i = 0; i < draws; ++i)
    for (auto p : w3t(MessageId{ProcessId{static_cast<std::uint32_t>(i % 20)}, static_cast<std::uint64_t>(i / 20 + 1)},
                      params, seed)
                      .members)
      counts[to_index(p)] += 1;
  const double expect = draws * 10.0 / 20.0;
  double chi = 0;
  for (double c : counts) chi += (c - expect) * (c - expect) / expect;
  CHECK(chi < chi_square_critical(19));
}
