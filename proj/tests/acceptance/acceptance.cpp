// One pass/fail line per acceptance criterion. `--only N` runs a single one.

#include <CLI11.hpp>

#include <algorithm>
#include <chrono>
#include <cmath>
#include <cstdio>
#include <filesystem>
#include <fstream>
#include <functional>
#include <map>
#include <set>
#include <sstream>
#include <string>
#include <vector>

#include "securecast/adversary.hpp"
#include "securecast/analysis.hpp"
#include "securecast/cli.hpp"
#include "securecast/parallel.hpp"
#include "securecast/quorum.hpp"
#include "securecast/simnet.hpp"
#include "securecast/trace.hpp"

using namespace securecast;
namespace fs = std::filesystem;

namespace {

// Pinned tolerances.
constexpr double kSigmas = 3.0;
constexpr double kLoad3t = 0.21, kLoadAct = 0.18, kLoadTolerance = 0.02;
constexpr double kFailLoad3t = 0.31, kFailLoadAct = 0.49;
constexpr double kDetectionN100 = 0.887, kDetectionN1000 = 0.983, kDetectionTolerance = 0.0005;
constexpr double kFormulaTolerance = 1e-9;

struct Outcome {
  bool pass = true;
  std::string detail;
};

std::string fmt(const char* f, auto... args) {
  char buf[512];
  std::snprintf(buf, sizeof buf, f, args...);
  return buf;
}

const std::vector<AdversaryKind> kGridAdversaries{AdversaryKind::silent, AdversaryKind::crash, AdversaryKind::equivocate,
                                                  AdversaryKind::collusive};

// Keeps deliveries, alerts, and recovery requests and acks.
struct Recorder : TraceSink {
  std::vector<TraceRecord> records;
  void on_record(const TraceRecord& r) override {
    switch (r.kind) {
      case EventKind::deliver:
      case EventKind::alert_raise:
      case EventKind::alert_recv:
        records.push_back(r);
        break;
      case EventKind::send:
        if (r.role == Role::ack && r.proto == Tag::ThreeT) records.push_back(r);
        break;
      case EventKind::recv:
        if (r.role == Role::regular && r.proto == Tag::ThreeT) records.push_back(r);
        break;
      default:
        break;
    }
  }
};

// Runs a grid of seeded worlds; `extra` may inspect each world and its trace.
Outcome absolute_agreement(ProtocolKind protocol, const std::vector<std::pair<std::uint32_t, std::uint32_t>>& sizes,
                           std::size_t runs,
                           const std::function<std::string(const SimWorld&, const Recorder&)>& extra) {
  const std::size_t cells = sizes.size() * kGridAdversaries.size();
  std::vector<std::string> failures(runs);
  std::vector<std::uint64_t> deliveries(runs);
  parallel_for(runs, 0, [&](std::size_t i) {
    const auto cell = i % cells;
    SimConfig c;
    c.n = sizes[cell / kGridAdversaries.size()].first;
    c.t = sizes[cell / kGridAdversaries.size()].second;
    c.protocol = protocol;
    c.adversary = kGridAdversaries[cell % kGridAdversaries.size()];
    c.messages = 2;
    c.seeds = SimSeeds::from(i);
    Recorder rec;
    SimWorld world(c, &rec);
    const auto r = world.run_to_quiescence();
    deliveries[i] = r.total_deliveries();
    std::string why;
    if (r.conflicts != 0) why = fmt("%llu conflicts", static_cast<unsigned long long>(r.conflicts));
    if (!r.violations.empty()) why = r.violations.front().property + ": " + r.violations.front().detail;
    if (why.empty() && extra) why = extra(world, rec);
    if (!why.empty())
      failures[i] = fmt("run %zu (n=%u %s): ", i, c.n, std::string(to_string(c.adversary)).c_str()) + why;
  });
  Outcome o;
  std::size_t bad = 0;
  for (const auto& f : failures)
    if (!f.empty()) {
      if (bad++ == 0) o.detail = f;
      o.pass = false;
    }
  std::uint64_t total = 0;
  for (auto d : deliveries) total += d;
  o.detail = fmt("runs=%zu failing=%zu deliveries=%llu", runs, bad, static_cast<unsigned long long>(total)) +
             (o.detail.empty() ? "" : " first: " + o.detail);
  return o;
}

Outcome criterion_1() {
  return absolute_agreement(ProtocolKind::E, {{4, 1}, {7, 2}, {10, 3}}, 1000, nullptr);
}

Outcome criterion_2() {
  auto certificates = [](const SimWorld& world, const Recorder& rec) -> std::string {
    const auto& c = world.config();
    for (const auto& r : rec.records) {
      if (r.kind != EventKind::deliver) continue;
      const auto range = w3t(*r.subject, {c.n, c.t}, world.witness_seed(), c.w3t_mode);
      std::set<std::uint32_t> inside;
      for (auto s : r.signers)
        if (range.contains(ProcessId{s})) inside.insert(s);
      if (inside.size() < 2 * c.t + 1)
        return fmt("delivery of %s at %u has %zu signers in W_3T", to_string(*r.subject).c_str(), *r.dst,
                   inside.size());
    }
    return {};
  };
  return absolute_agreement(ProtocolKind::ThreeT, {{4, 1}, {7, 2}, {10, 3}, {31, 10}, {100, 10}}, 1000, certificates);
}

// Detection probability 1 - [(t/n)^k + (1-(t/n)^k)(2t/(3t+1))^d], written out independently.
double detection_oracle(double n, double t, double k, double d) {
  const double all_faulty = std::pow(t / n, k);
  const double miss = std::pow(2 * t / (3 * t + 1), d);
  return 1 - (all_faulty + (1 - all_faulty) * miss);
}

Outcome criterion_3() {
  SimConfig c;
  c.n = 31;
  c.t = 10;
  c.protocol = ProtocolKind::Act;
  c.kappa = 3;
  c.delta = 5;
  c.adversary = AdversaryKind::regime_split;
  const auto mc = monte_carlo_conflict_rate(c, 1000, 31);
  const double b = overall_conflict_bound({31, 10, 3, 5, 0}).specific;
  const double n = static_cast<double>(mc.attacked);
  const double limit = b + kSigmas * std::sqrt(b * (1 - b) / n);
  const double oracle_b = 1 - detection_oracle(31, 10, 3, 5);
  const double det100 = 1 - overall_conflict_bound({100, 10, 3, 5, 0}).specific;
  const double det1000 = 1 - overall_conflict_bound({1000, 100, 4, 10, 0}).specific;

  Outcome o;
  o.pass = mc.attacked >= 10000 && mc.violations == 0 && mc.estimate <= limit &&
           std::abs(b - oracle_b) <= kFormulaTolerance &&
           std::abs(det100 - detection_oracle(100, 10, 3, 5)) <= kFormulaTolerance &&
           std::abs(det1000 - detection_oracle(1000, 100, 4, 10)) <= kFormulaTolerance &&
           std::abs(det100 - kDetectionN100) <= kDetectionTolerance &&
           std::abs(det1000 - kDetectionN1000) <= kDetectionTolerance;
  o.detail = fmt("attacked=%llu conflicts=%llu rate=%.6f bound=%.6f limit=%.6f violations=%llu "
                 "detection(n=100,k=3,d=5)=%.6f detection(n=1000,t=100,k=4,d=10)=%.6f",
                 static_cast<unsigned long long>(mc.attacked), static_cast<unsigned long long>(mc.conflicts),
                 mc.estimate, b, limit, static_cast<unsigned long long>(mc.violations), det100, det1000);
  return o;
}

Outcome criterion_4() {
  constexpr std::uint32_t n = 100, t = 10, kappa = 3;
  constexpr std::size_t samples = 1'000'000;
  const WitnessSeed seed(derive_seed(4, "witness"));
  const auto faulty_list = choose_faulty(n, t, derive_seed(4, "faulty"));
  std::vector<bool> faulty(n);
  for (auto p : faulty_list) faulty[to_index(p)] = true;

  const unsigned workers = worker_count();
  std::vector<std::uint64_t> hits(workers);
  parallel_for(workers, workers, [&](std::size_t w) {
    for (std::size_t i = w; i < samples; i += workers) {
      const MessageId id{ProcessId{static_cast<std::uint32_t>(i % n)}, i / n + 1};
      const auto active = w_active(id, kappa, {n, t}, seed);
      if (std::all_of(active.members.begin(), active.members.end(), [&](ProcessId p) { return faulty[to_index(p)]; }))
        ++hits[w];
    }
  });
  std::uint64_t total = 0;
  for (auto h : hits) total += h;
  const double rate = static_cast<double>(total) / samples;

  const double stated = 0.001;
  const double stated_margin = kSigmas * std::sqrt(stated * (1 - stated) / samples);
  // Distinct kappa-subsets: C(t,3)/C(n,3).
  const double exact = (10.0 * 9 * 8) / (100.0 * 99 * 98);
  const double exact_margin = kSigmas * std::sqrt(exact * (1 - exact) / samples);
  const bool literal = std::abs(rate - stated) <= stated_margin;
  const bool companion = std::abs(rate - exact) <= exact_margin;

  Outcome o;
  o.pass = literal && companion;
  o.detail = fmt("samples=%zu rate=%.6f | stated 0.001+-%.6f: %s | exact C(10,3)/C(100,3)=%.6f+-%.6f: %s", samples, rate,
                 stated_margin, literal ? "ok" : "outside", exact, exact_margin, companion ? "ok" : "outside");
  return o;
}

Outcome criterion_5() {
  constexpr std::uint32_t t = 10, delta = 5;
  constexpr std::size_t draws = 1'000'000;
  std::vector<ProcessId> range;
  for (std::uint32_t p = 0; p <= 3 * t; ++p) range.push_back(ProcessId{p});
  const ProcessId self{0};
  // Peers 1..t+1 hold the evidence; the other 2t-1 miss it.
  auto hit = [](ProcessId p) { return to_index(p) >= 1 && to_index(p) <= t + 1; };

  Rng rng(derive_seed(5, "probe"));
  std::uint64_t misses = 0;
  for (std::size_t i = 0; i < draws; ++i) {
    const auto peers = choose_peers(rng, range, self, delta);
    if (std::none_of(peers.begin(), peers.end(), hit)) ++misses;
  }
  const double rate = static_cast<double>(misses) / draws;

  // Brute force over every delta-subset of the 3t peers.
  std::uint64_t subsets = 0, missing = 0;
  std::vector<std::uint32_t> pick(delta);
  std::function<void(std::uint32_t, std::uint32_t)> walk = [&](std::uint32_t from, std::uint32_t depth) {
    if (depth == delta) {
      ++subsets;
      if (std::none_of(pick.begin(), pick.end(), [&](std::uint32_t p) { return hit(ProcessId{p}); })) ++missing;
      return;
    }
    for (std::uint32_t p = from; p <= 3 * t; ++p) {
      pick[depth] = p;
      walk(p + 1, depth + 1);
    }
  };
  walk(1, 0);
  const double exact = static_cast<double>(missing) / static_cast<double>(subsets);
  const double bound = std::pow(20.0 / 31.0, 5);
  const double margin = kSigmas * std::sqrt(exact * (1 - exact) / draws);

  Outcome o;
  o.pass = rate <= bound && std::abs(rate - exact) <= margin;
  o.detail = fmt("draws=%zu miss=%.6f bound=(20/31)^5=%.6f exact=%llu/%llu=%.6f margin=%.6f", draws, rate, bound,
                 static_cast<unsigned long long>(missing), static_cast<unsigned long long>(subsets), exact, margin);
  return o;
}

Outcome criterion_6() {
  Outcome o;
  std::size_t cases = 0;
  for (std::uint32_t n = 6; n <= 30; n += 3) {
    const std::uint32_t f = n / 3;
    for (std::uint32_t k = 1; k <= 5; ++k) {
      // Count k-subsets of {0..n-1} with at least k-C members below f, for each C at once.
      std::vector<std::uint64_t> by_faulty(k + 1);
      std::uint64_t total = 0;
      std::function<void(std::uint32_t, std::uint32_t, std::uint32_t)> walk = [&](std::uint32_t from,
                                                                                 std::uint32_t depth,
                                                                                 std::uint32_t faulty) {
        if (depth == k) {
          ++total;
          ++by_faulty[faulty];
          return;
        }
        for (std::uint32_t p = from; p < n; ++p) walk(p + 1, depth + 1, faulty + (p < f ? 1 : 0));
      };
      walk(0, 0, 0);
      for (std::uint32_t c = 0; c <= std::min<std::uint32_t>(2, k); ++c) {
        std::uint64_t favourable = 0;
        for (std::uint32_t j = k - c; j <= k; ++j) favourable += by_faulty[j];
        const double oracle = static_cast<double>(favourable) / static_cast<double>(total);
        const auto got = p_kappa_c({n, (n - 1) / 3, k, 1, c});
        ++cases;
        const bool same = std::abs(got.exact - oracle) <= 1e-12 * std::max(1.0, oracle);
        const bool bounded = got.exact <= got.bound * (1 + 1e-12);
        if ((!same || !bounded) && o.pass) {
          o.pass = false;
          o.detail = fmt(" first: n=%u k=%u C=%u exact=%.12g oracle=%.12g bound=%.12g", n, k, c, got.exact, oracle,
                         got.bound);
        }
      }
    }
  }
  o.detail = fmt("cases=%zu", cases) + o.detail;
  return o;
}

Outcome criterion_7() {
  struct Run {
    ProtocolKind protocol;
    bool failures;
    double load = 0;
    bool violations = false;
  };
  std::vector<Run> runs{{ProtocolKind::ThreeT, false}, {ProtocolKind::Act, false}, {ProtocolKind::ThreeT, true},
                        {ProtocolKind::Act, true}};
  parallel_for(runs.size(), 0, [&](std::size_t i) {
    SimConfig c;
    c.n = 100;
    c.t = 10;
    c.protocol = runs[i].protocol;
    c.kappa = 3;
    c.delta = 5;
    c.messages = 10'000;
    c.seeds = SimSeeds::from(7);
    if (runs[i].failures) {
      c.adversary = AdversaryKind::silent;
      c.faulty_messages = 0;
    }
    SimWorld world(c);
    const auto r = world.run_to_quiescence();
    runs[i].load = measured_load(r);
    runs[i].violations = !r.violations.empty();
  });
  Outcome o;
  o.pass = std::abs(runs[0].load - kLoad3t) <= kLoadTolerance && std::abs(runs[1].load - kLoadAct) <= kLoadTolerance &&
           runs[2].load <= kFailLoad3t && runs[3].load <= kFailLoadAct &&
           std::none_of(runs.begin(), runs.end(), [](const Run& r) { return r.violations; });
  o.detail = fmt("3T=%.4f (0.21+-0.02) ACT=%.4f (0.18+-0.02) 3T-fail=%.4f (<=0.31) ACT-fail=%.4f (<=0.49)", runs[0].load,
                 runs[1].load, runs[2].load, runs[3].load);
  return o;
}

std::string slurp(const fs::path& p) {
  std::ifstream in(p, std::ios::binary);
  return std::string(std::istreambuf_iterator<char>(in), {});
}

Outcome criterion_8() {
  Outcome o;
  const auto dir = fs::temp_directory_path() / "securecast_acceptance";
  fs::create_directories(dir);
  std::size_t matched = 0;
  for (const char* name : {"e_n4", "3t_n7_equivocate", "act_n10_lossy"}) {
    const fs::path golden = fs::path(SECURECAST_GOLDEN_DIR) / name;
    std::vector<std::string> traces;
    for (int pass = 0; pass < 2; ++pass) {
      const auto out = dir / (std::string(name) + "." + std::to_string(pass) + ".trace");
      std::ostringstream sink_out, sink_err;
      const int code = run_cli({"simulate", "--config", golden.string() + ".conf", "--trace-out", out.string()},
                               sink_out, sink_err);
      if (code != kExitOk) o.pass = false;
      traces.push_back(slurp(out));
    }
    const auto expected = slurp(golden.string() + ".trace");
    if (traces[0] == traces[1] && traces[0] == expected && !expected.empty())
      ++matched;
    else
      o.pass = false;
  }
  o.detail = fmt("configs=3 byte-identical=%zu", matched);
  return o;
}

Outcome criterion_9() {
  Outcome o;
  std::size_t pairs = 0;
  for (std::uint32_t n = 4; n <= 1000; ++n)
    for (std::uint32_t t = 1; t <= (n - 1) / 3; ++t) {
      const auto q = dissemination_quorum_size({n, t});
      ++pairs;
      const bool ok = 2 * static_cast<std::int64_t>(q) - n >= t + 1 && q <= n - t;
      if (!ok && o.pass) {
        o.pass = false;
        o.detail = fmt(" first: n=%u t=%u q=%u", n, t, q);
      }
    }
  o.detail = fmt("pairs=%zu", pairs) + o.detail;
  return o;
}

Outcome criterion_10() {
  constexpr std::size_t runs = 100;
  std::vector<std::string> failures(runs);
  std::vector<std::uint64_t> alerts(runs), acks(runs), races(runs);
  parallel_for(runs, 0, [&](std::size_t i) {
    SimConfig c;
    c.n = 31;
    c.t = 10;
    c.protocol = ProtocolKind::Act;
    c.kappa = 3;
    c.delta = 5;
    c.adversary = AdversaryKind::equivocate;
    c.messages = 2;
    c.latency_lo = 1;
    c.latency_hi = 100;
    c.p_drop = 0.3;
    c.alert_latency = 40;
    c.recovery_timeout = 20;  // recovery starts while alerts are still in flight
    c.seeds = SimSeeds::from(derive_seed(10, "run", i));
    Recorder rec;
    SimWorld world(c, &rec);
    const auto r = world.run_to_quiescence();
    if (!r.violations.empty()) {
      failures[i] = r.violations.front().property + ": " + r.violations.front().detail;
      return;
    }
    // First raise per convicted sender, and when each process first learned of it.
    std::map<std::uint32_t, Tick> raised;
    std::map<std::pair<std::uint32_t, std::uint32_t>, Tick> learned;
    for (const auto& e : rec.records) {
      if (e.kind == EventKind::alert_raise) {
        ++alerts[i];
        raised.emplace(to_index(e.subject->sender), e.tick);
        learned.emplace(std::pair{*e.src, to_index(e.subject->sender)}, e.tick);
      } else if (e.kind == EventKind::alert_recv) {
        learned.emplace(std::pair{*e.dst, to_index(e.subject->sender)}, e.tick);
      }
    }
    for (const auto& [sender, tick] : raised)
      for (std::uint32_t p = 0; p < c.n; ++p) {
        if (world.is_faulty(ProcessId{p})) continue;
        const auto it = learned.find({p, sender});
        if (it == learned.end() || it->second > tick + c.alert_latency)
          failures[i] = fmt("alert about %u reached %u late", sender, p);
      }
    for (const auto& e : rec.records) {
      // A recovery request that lands while an alert about its sender is still in flight.
      if (e.kind == EventKind::recv && !world.is_faulty(ProcessId{*e.dst})) {
        const auto sender = to_index(e.subject->sender);
        const auto alert = raised.find(sender);
        const auto seen = learned.find({*e.dst, sender});
        if (alert != raised.end() && alert->second <= e.tick && (seen == learned.end() || seen->second > e.tick))
          ++races[i];
      }
      if (e.kind != EventKind::send || world.is_faulty(ProcessId{*e.src}) || !e.req) continue;
      const auto sender = to_index(e.subject->sender);
      const auto alert = raised.find(sender);
      if (alert == raised.end() || alert->second > *e.req) continue;
      ++acks[i];
      const auto it = learned.find({*e.src, sender});
      if (it == learned.end() || it->second > e.tick)
        failures[i] = fmt("%u signed a recovery ack for %s at %llu before the alert arrived", *e.src,
                          to_string(*e.subject).c_str(), static_cast<unsigned long long>(e.tick));
    }
  });
  Outcome o;
  std::size_t bad = 0;
  std::uint64_t total_alerts = 0, total_acks = 0, total_races = 0;
  std::string first;
  for (std::size_t i = 0; i < runs; ++i) {
    total_alerts += alerts[i];
    total_acks += acks[i];
    total_races += races[i];
    if (!failures[i].empty() && bad++ == 0) first = fmt("run %zu: ", i) + failures[i];
  }
  o.pass = bad == 0 && total_alerts > 0 && total_races > 0;
  o.detail = fmt("runs=%zu alerts=%llu racing-requests=%llu acks-after-raise=%llu failing=%zu", runs,
                 static_cast<unsigned long long>(total_alerts), static_cast<unsigned long long>(total_races),
                 static_cast<unsigned long long>(total_acks), bad) +
             (first.empty() ? "" : " first: " + first);
  return o;
}

struct Criterion {
  const char* title;
  Outcome (*run)();
};

const std::vector<Criterion> kCriteria{
    {"absolute agreement, E", criterion_1},
    {"absolute agreement and W_3T certificates, 3T", criterion_2},
    {"ACT conflict rate under regime split", criterion_3},
    {"all-faulty W_active frequency", criterion_4},
    {"probe-miss calibration", criterion_5},
    {"P_{kappa,C} against enumeration", criterion_6},
    {"load convergence", criterion_7},
    {"golden-trace determinism", criterion_8},
    {"dissemination quorum sweep", criterion_9},
    {"alert race", criterion_10},
};

}  // namespace

int main(int argc, char** argv) {
  CLI::App app{"securecast acceptance checks"};
  int only = 0;
  app.add_option("--only", only, "run a single criterion")->check(CLI::Range(1, static_cast<int>(kCriteria.size())));
  CLI11_PARSE(app, argc, argv);

  bool all = true;
  for (std::size_t i = 0; i < kCriteria.size(); ++i) {
    if (only != 0 && static_cast<std::size_t>(only) != i + 1) continue;
    const auto start = std::chrono::steady_clock::now();
    Outcome o;
    try {
      o = kCriteria[i].run();
    } catch (const std::exception& e) {
      o.pass = false;
      o.detail = std::string("exception: ") + e.what();
    }
    const double secs = std::chrono::duration<double>(std::chrono::steady_clock::now() - start).count();
    std::printf("[%s] %zu %s: %s (%.1fs)\n", o.pass ? "PASS" : "FAIL", i + 1, kCriteria[i].title, o.detail.c_str(),
                secs);
    std::fflush(stdout);
    all = all && o.pass;
  }
  return all ? 0 : 1;
}
