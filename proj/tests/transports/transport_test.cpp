#include "nymkit/transports/transport.h"

#include <gtest/gtest.h>

#include <map>
#include <random>

#include "nymkit/common/error.h"

namespace nymkit::transports {
namespace {

std::vector<Relay> relays(int n) {
  std::vector<Relay> out;
  for (int i = 0; i < n; ++i) out.push_back({"relay" + std::to_string(i)});
  return out;
}

std::vector<std::string> ids(const std::vector<Relay>& rs) {
  std::vector<std::string> out;
  for (const auto& r : rs) out.push_back(r.id);
  return out;
}

GuardSeed seed_from(std::mt19937_64& rng) {
  GuardSeed s;
  for (auto& b : s.bytes) b = static_cast<std::uint8_t>(rng());
  return s;
}

Internet internet() {
  Internet net;
  net.add_host("example.org", "203.0.113.10");
  net.add_host("resolver", "203.0.113.53");
  return net;
}

TEST(RelayDirectory, ParsesFlagsAndComments) {
  auto rs = parse_relay_directory(
      "# directory\n"
      "alpha guard,middle\n"
      "\n"
      "beta exit   # trailing comment\n"
      "gamma\n");
  ASSERT_EQ(rs.size(), 3u);
  EXPECT_TRUE(rs[0].guard && rs[0].middle && !rs[0].exit);
  EXPECT_TRUE(!rs[1].guard && !rs[1].middle && rs[1].exit);
  EXPECT_TRUE(rs[2].guard && rs[2].middle && rs[2].exit);
  EXPECT_THROW(parse_relay_directory("x bogus\n"), Error);
}

TEST(EntryGuard, Deterministic) {
  std::mt19937_64 rng(1);
  GuardSeed seed = seed_from(rng);
  auto list = ids(relays(10));
  EXPECT_EQ(select_entry_guard(seed, list), select_entry_guard(seed, list));
  // Order of the input list does not matter.
  auto reversed = list;
  std::reverse(reversed.begin(), reversed.end());
  EXPECT_EQ(select_entry_guard(seed, list), select_entry_guard(seed, reversed));
}

TEST(EntryGuard, SingleRelayAlwaysChosen) {
  std::mt19937_64 rng(2);
  std::vector<std::string> one = {"only"};
  for (int i = 0; i < 20; ++i) EXPECT_EQ(select_entry_guard(seed_from(rng), one), "only");
}

TEST(EntryGuard, EmptyListRejected) {
  try {
    select_entry_guard(GuardSeed{}, std::vector<std::string>{});
    FAIL();
  } catch (const Error& e) {
    EXPECT_EQ(e.code(), Errc::kNoRelays);
  }
}

TEST(EntryGuard, UniformSpreadMonteCarlo) {
  std::mt19937_64 rng(424242);
  auto list = ids(relays(10));
  std::map<std::string, int> counts;
  for (int i = 0; i < 10000; ++i) ++counts[select_entry_guard(seed_from(rng), list)];
  ASSERT_EQ(counts.size(), 10u);
  for (const auto& [relay, count] : counts) {
    EXPECT_GE(count, 850) << relay;
    EXPECT_LE(count, 1150) << relay;
  }
}

TEST(StartTransport, IncognitoNeedsNoRelays) {
  auto t = start_transport(TransportKind::kIncognito, "nym1", {}, std::nullopt);
  EXPECT_EQ(t->kind(), TransportKind::kIncognito);
  EXPECT_FALSE(t->circuit().has_value());
}

TEST(StartTransport, CircuitKindsNeedRelays) {
  for (auto kind : {TransportKind::kOnionSim, TransportKind::kDcnetSim}) {
    try {
      start_transport(kind, "nym1", {}, std::nullopt);
      FAIL();
    } catch (const Error& e) {
      EXPECT_EQ(e.code(), Errc::kNoRelays);
    }
  }
}

TEST(StartTransport, SeededOnionUsesSelectedGuard) {
  std::mt19937_64 rng(3);
  GuardSeed seed = seed_from(rng);
  auto rs = relays(6);
  auto t = start_transport(TransportKind::kOnionSim, "nym1", rs, seed, 100);
  ASSERT_TRUE(t->circuit());
  const CircuitState& c = *t->circuit();
  EXPECT_EQ(c.entry_guard, select_entry_guard(seed, ids(rs)));
  EXPECT_EQ(c.path.size(), 3u);
  EXPECT_EQ(c.path.front(), c.entry_guard);
  EXPECT_EQ(std::set<std::string>(c.path.begin(), c.path.end()).size(), 3u);
  EXPECT_EQ(c.established_at, 100u);
  EXPECT_EQ(t->guard_seed(), seed);
}

TEST(StartTransport, GuardStableAcrossReconnects) {
  std::mt19937_64 rng(4);
  GuardSeed seed = seed_from(rng);
  auto rs = relays(12);
  auto t = start_transport(TransportKind::kOnionSim, "nym1", rs, seed);
  auto& onion = static_cast<OnionSimTransport&>(*t);
  std::string guard = onion.circuit()->entry_guard;
  std::set<std::string> exits;
  for (int i = 0; i < 30; ++i) {
    onion.rebuild_circuit(static_cast<std::uint64_t>(i));
    EXPECT_EQ(onion.circuit()->entry_guard, guard);
    EXPECT_EQ(onion.circuit()->path.front(), guard);
    exits.insert(onion.circuit()->path.back());
  }
  EXPECT_GT(exits.size(), 1u);
}

TEST(StartTransport, FlagsConstrainPositions) {
  std::vector<Relay> rs = {{"g", true, false, false},
                           {"m", false, true, false},
                           {"e", false, false, true}};
  auto t = start_transport(TransportKind::kOnionSim, "nym1", rs, GuardSeed{});
  EXPECT_EQ(t->circuit()->path, (std::vector<std::string>{"g", "m", "e"}));
  std::vector<Relay> too_few = {{"a"}, {"b"}};
  EXPECT_THROW(start_transport(TransportKind::kOnionSim, "nym1", too_few, GuardSeed{}),
               Error);
}

TEST(ProxyConnect, ObservedSourcePerKind) {
  Internet net = internet();
  TransportConfig cfg;
  auto incognito = start_transport(TransportKind::kIncognito, "n", {}, std::nullopt, 0, cfg);
  auto onion = start_transport(TransportKind::kOnionSim, "n", relays(5), std::nullopt, 0, cfg);
  auto dcnet = start_transport(TransportKind::kDcnetSim, "n", relays(5), std::nullopt, 0, cfg);

  EXPECT_EQ(incognito->proxy_connect({"example.org", 80, to_bytes("GET")}, net)
                .observed_source(),
            cfg.gateway_address);
  StreamHandle s = onion->proxy_connect({"example.org", 80, to_bytes("GET")}, net);
  EXPECT_EQ(s.observed_source(), onion->circuit()->path.back());
  StreamHandle d = dcnet->proxy_connect({"example.org", 80, to_bytes("GET")}, net);
  EXPECT_NE(d.observed_source(), cfg.gateway_address);

  const auto& log = net.access_log("example.org");
  ASSERT_EQ(log.size(), 3u);
  EXPECT_EQ(log[0].observed_source, cfg.gateway_address);
  EXPECT_NE(log[1].observed_source, cfg.gateway_address);
  EXPECT_NE(log[2].observed_source, cfg.gateway_address);
}

TEST(ProxyConnect, UnknownHostUnreachable) {
  Internet net = internet();
  auto t = start_transport(TransportKind::kIncognito, "n", {}, std::nullopt);
  try {
    t->proxy_connect({"nowhere.invalid", 80, {}}, net);
    FAIL();
  } catch (const Error& e) {
    EXPECT_EQ(e.code(), Errc::kUnreachable);
  }
}

// Independent cell count: chop the payload into cell-sized pieces.
std::size_t count_cells(std::size_t payload, std::size_t usable) {
  std::size_t cells = 0;
  while (payload > 0) {
    payload -= std::min(payload, usable);
    ++cells;
  }
  return cells;
}

TEST(Overhead, IncognitoIsOne) {
  auto t = start_transport(TransportKind::kIncognito, "n", {}, std::nullopt);
  for (std::size_t n : {1u, 100u, 1u << 20}) EXPECT_EQ(measure_overhead(*t, n), 1.0);
}

TEST(Overhead, OnionMatchesCellFormula) {
  auto t = start_transport(TransportKind::kOnionSim, "n", relays(5), std::nullopt);
  EXPECT_NEAR(measure_overhead(*t, 498000), 1000.0 * 512.0 / 498000.0, 1e-12);
  EXPECT_NEAR(measure_overhead(*t, 498000), 1.0281124497991967, 1e-12);
  std::mt19937_64 rng(5);
  for (int i = 0; i < 200; ++i) {
    std::size_t n = 1 + rng() % 2'000'000;
    double oracle = static_cast<double>(count_cells(n, 498) * 512) / static_cast<double>(n);
    EXPECT_NEAR(measure_overhead(*t, n), oracle, 1e-6 * oracle);
    EXPECT_NEAR(measure_overhead(*t, n), onion_overhead_analytic({}, n), 1e-6);
  }
}

TEST(Overhead, ZeroPayloadRejected) {
  auto t = start_transport(TransportKind::kIncognito, "n", {}, std::nullopt);
  EXPECT_THROW(measure_overhead(*t, 0), Error);
}

TEST(Independence, CompromiseDoesNotTouchOtherInstances) {
  std::mt19937_64 rng(6);
  auto rs = relays(8);
  auto a = start_transport(TransportKind::kOnionSim, "a", rs, seed_from(rng));
  auto b = start_transport(TransportKind::kOnionSim, "b", rs, seed_from(rng));
  CircuitState b_before = *b->circuit();
  a->inject_compromise();
  static_cast<OnionSimTransport&>(*a).rebuild_circuit(99);
  a->stop();
  EXPECT_EQ(*b->circuit(), b_before);
  EXPECT_FALSE(b->learned_public_address());
  EXPECT_TRUE(b->running());
  ASSERT_TRUE(a->learned_public_address());
  EXPECT_EQ(*a->learned_public_address(), a->config().gateway_address);
}

TEST(Parse, KindNames) {
  EXPECT_EQ(parse_kind("onion"), TransportKind::kOnionSim);
  EXPECT_EQ(parse_kind(kind_name(TransportKind::kDcnetSim)), TransportKind::kDcnetSim);
  EXPECT_THROW(parse_kind("tor2"), Error);
}

}  // namespace
}  // namespace nymkit::transports
