#include "nymkit/nymcore/engine.h"

#include <gtest/gtest.h>

#include <random>

#include "errc_matchers.h"
#include "nymcore/fixture.h"

namespace nymkit::nymcore {
namespace {

using nymkit::testing::test_config;
using transports::TransportKind;

Bytes random_blob(std::mt19937_64& rng, std::size_t n) {
  Bytes b(n);
  for (auto& x : b) x = static_cast<std::uint8_t>(rng());
  return b;
}

TEST(Transitions, MatchTable) {
  using S = NymState;
  const std::vector<std::pair<S, S>> legal = {
      {S::kCreated, S::kRunning},   {S::kCreated, S::kTerminated}, {S::kRunning, S::kPaused},
      {S::kPaused, S::kRunning},    {S::kPaused, S::kStoring},     {S::kStoring, S::kRunning},
      {S::kRunning, S::kTerminated}, {S::kPaused, S::kTerminated}};
  for (auto a : {S::kCreated, S::kRunning, S::kPaused, S::kStoring, S::kTerminated}) {
    for (auto b : {S::kCreated, S::kRunning, S::kPaused, S::kStoring, S::kTerminated}) {
      bool expect = std::find(legal.begin(), legal.end(), std::pair(a, b)) != legal.end();
      EXPECT_EQ(is_legal_transition(a, b), expect) << state_name(a) << "->" << state_name(b);
    }
  }
}

TEST(Engine, CreateIsPristineAndIsolated) {
  Engine e(test_config("create"));
  auto a = e.create_nym(NymMode::kEphemeral);
  auto b = e.create_nym(NymMode::kPersistent, TransportKind::kIncognito);
  EXPECT_NE(a, b);
  EXPECT_EQ(e.state(a), NymState::kRunning);
  EXPECT_TRUE(e.writable_layer(a, VmRole::kAnon).empty());
  EXPECT_EQ(e.vm_identity(a), e.vm_identity(b));
  EXPECT_TRUE(e.probe().violations.empty());
  EXPECT_EQ(e.info(b).transport, TransportKind::kIncognito);
}

TEST(Engine, BudgetExceeded) {
  auto c = test_config("budget");
  c.host_ram_mb = 2 * NymBoxSpec{}.host_ram_mb();
  Engine e(c);
  auto a = e.create_nym(NymMode::kEphemeral);
  e.create_nym(NymMode::kEphemeral);
  EXPECT_ERRC(e.create_nym(NymMode::kEphemeral), Errc::kBudgetExceeded);
  EXPECT_EQ(e.list_nyms().size(), 2u);
  e.terminate_nym(a);
  EXPECT_NO_THROW(e.create_nym(NymMode::kEphemeral));
}

TEST(Engine, TransportStartFailureLeavesNoNym) {
  auto c = test_config("norelays");
  c.relays = {{"r0", false, true, true}};  // no guard-capable relay
  Engine e(c);
  auto before = e.topology().nodes().size();
  EXPECT_TRUE(nymkit::testing::thrown_code([&] { e.create_nym(NymMode::kEphemeral); }));
  EXPECT_TRUE(e.list_nyms(true).empty());
  EXPECT_EQ(e.topology().nodes().size(), before);
}

TEST(Engine, PauseResumeTerminate) {
  Engine e(test_config("lifecycle"));
  auto n = e.create_nym(NymMode::kEphemeral);
  EXPECT_ERRC(e.resume_nym(n), Errc::kIllegalTransition);
  e.pause_nym(n);
  EXPECT_ERRC(e.pause_nym(n), Errc::kIllegalTransition);
  EXPECT_ERRC(e.write_file(n, VmRole::kAnon, "/tmp/x", to_bytes("x")), Errc::kIllegalTransition);
  e.resume_nym(n);
  e.terminate_nym(n);
  EXPECT_NO_THROW(e.terminate_nym(n));
  EXPECT_EQ(e.state(n), NymState::kTerminated);
  EXPECT_FALSE(e.topology().has_nym(n));
  EXPECT_ERRC(e.resume_nym(n), Errc::kIllegalTransition);
  EXPECT_ERRC(e.state("nym-999"), Errc::kUnknownNym);
}

// Random call sequences against a reference state model. Every state the
// engine reports, and every transition it announces, must be legal.
TEST(Engine, LifecycleFuzz) {
  auto c = test_config("fuzz");
  c.host_ram_mb = 6 * NymBoxSpec{}.host_ram_mb();
  Engine e(c);
  std::size_t bad_events = 0;
  e.subscribe([&](const nlohmann::json& ev) {
    if (ev["event"] != "state") return;
    auto parse = [](const std::string& s) {
      for (auto st : {NymState::kCreated, NymState::kRunning, NymState::kPaused,
                      NymState::kStoring, NymState::kTerminated}) {
        if (state_name(st) == s) return st;
      }
      return NymState::kCreated;
    };
    if (!is_legal_transition(parse(ev["from"]), parse(ev["to"]))) ++bad_events;
  });

  struct Model {
    NymMode mode;
    NymState state;
  };
  std::map<std::string, Model> model;
  std::mt19937_64 rng(7);
  std::size_t live = 0, stores = 0;
  const int kOps = 100000;
  for (int i = 0; i < kOps; ++i) {
    int op = static_cast<int>(rng() % 1000);
    if (model.empty() || op < 100) {
      auto mode = static_cast<NymMode>(rng() % 3);
      if (live >= 6) {
        EXPECT_ERRC(e.create_nym(mode, TransportKind::kIncognito), Errc::kBudgetExceeded);
      } else {
        auto id = e.create_nym(mode, TransportKind::kIncognito);
        model[id] = {mode, NymState::kRunning};
        ++live;
      }
      continue;
    }
    auto it = model.begin();
    std::advance(it, rng() % model.size());
    const std::string& id = it->first;
    Model& m = it->second;
    if (op < 400) {
      auto code = nymkit::testing::thrown_code([&] { e.pause_nym(id); });
      if (m.state == NymState::kRunning) {
        ASSERT_FALSE(code);
        m.state = NymState::kPaused;
      } else {
        ASSERT_EQ(code, std::optional(Errc::kIllegalTransition));
      }
    } else if (op < 700) {
      auto code = nymkit::testing::thrown_code([&] { e.resume_nym(id); });
      if (m.state == NymState::kPaused) {
        ASSERT_FALSE(code);
        m.state = NymState::kRunning;
      } else {
        ASSERT_EQ(code, std::optional(Errc::kIllegalTransition));
      }
    } else if (op < 998) {
      if (op < 900) continue;
      e.terminate_nym(id);
      if (m.state != NymState::kTerminated) --live;
      m.state = NymState::kTerminated;
    } else {
      auto code = nymkit::testing::thrown_code(
          [&] { e.store_nym(id, {"local", "fuzz"}, "pw"); });
      if (m.state == NymState::kTerminated) {
        ASSERT_EQ(code, std::optional(Errc::kUnknownNym));
      } else if (m.mode == NymMode::kEphemeral) {
        ASSERT_EQ(code, std::optional(Errc::kModeForbidsStore));
      } else {
        ASSERT_FALSE(code);
        m.state = NymState::kRunning;
        ++stores;
      }
    }
    ASSERT_EQ(e.state(id), m.state) << "op " << i;
    ASSERT_EQ(e.info(id).mode, m.mode);
  }
  EXPECT_EQ(bad_events, 0u);
  EXPECT_GT(stores, 0u);
  EXPECT_LE(e.used_host_ram_mb(), c.host_ram_mb);
}

TEST(Amnesia, CanaryAbsentAfterTerminate) {
  Engine e(test_config("amnesia"));
  std::mt19937_64 rng(11);
  for (int trial = 0; trial < 20; ++trial) {
    auto n = e.create_nym(trial % 2 ? NymMode::kPersistent : NymMode::kEphemeral);
    Bytes canary = random_blob(rng, 32);
    Bytes comm_canary = random_blob(rng, 32);
    e.write_file(n, VmRole::kAnon, "/home/user/notes.txt", canary);
    e.write_file(n, VmRole::kComm, "/var/log/x", comm_canary);
    e.run_workload(n, {2, 4096, 64});
    EXPECT_TRUE(contains(e.serialize_state(), canary));
    e.terminate_nym(n);
    Bytes state = e.serialize_state();
    EXPECT_FALSE(contains(state, canary)) << "trial " << trial;
    EXPECT_FALSE(contains(state, comm_canary)) << "trial " << trial;
  }
}

// Without the erase step the canary survives in released host frames, so the
// scan above does detect residue when there is some.
TEST(Amnesia, ReleaseWithoutEraseLeavesResidue) {
  HostArena arena;
  Bytes canary = to_bytes("canary-canary-canary-canary-0123");
  {
    VmMemory mem(&arena, 16);
    mem.write(4096 * 3 + 100, canary);
    mem.release_without_erase();
  }
  Writer w;
  arena.dump(w);
  EXPECT_TRUE(contains(w.buffer(), canary));

  HostArena clean;
  {
    VmMemory mem(&clean, 16);
    mem.write(4096 * 3 + 100, canary);
    mem.secure_erase();
  }
  Writer w2;
  clean.dump(w2);
  EXPECT_FALSE(contains(w2.buffer(), canary));
}

TEST(Store, EphemeralForbidden) {
  Engine e(test_config("ephemeral-store"));
  auto n = e.create_nym(NymMode::kEphemeral);
  EXPECT_ERRC(e.store_nym(n, {"local", "x"}, "pw"), Errc::kModeForbidsStore);
  EXPECT_ERRC(e.snapshot_nym(n, {"local", "x"}, "pw"), Errc::kModeMismatch);
  EXPECT_EQ(e.state(n), NymState::kRunning);
}

TEST(Store, RoundTripAndVersions) {
  Engine e(test_config("roundtrip"));
  auto n = e.create_nym(NymMode::kPersistent);
  e.run_workload(n);
  e.write_file(n, VmRole::kAnon, "/home/user/doc", to_bytes("hello"));
  auto anon = e.writable_layer(n, VmRole::kAnon);
  auto comm = e.writable_layer(n, VmRole::kComm);
  auto r1 = e.store_nym(n, {"local", "alice"}, "pw");
  EXPECT_EQ(r1.version, 1u);
  EXPECT_EQ(e.state(n), NymState::kRunning);
  EXPECT_FALSE(r1.boot_image);

  e.write_file(n, VmRole::kAnon, "/home/user/doc", to_bytes("changed"));
  auto r2 = e.store_nym(n, {"local", "alice"}, "pw");
  EXPECT_EQ(r2.version, 2u);
  EXPECT_NE(r1.archive_digest, r2.archive_digest);
  e.terminate_nym(n);

  auto m = e.load_nym({"local", "alice"}, "pw", {.version = 1});
  EXPECT_EQ(e.info(m).mode, NymMode::kPersistent);
  EXPECT_EQ(e.writable_layer(m, VmRole::kAnon).serialize(), anon.serialize());
  EXPECT_EQ(e.writable_layer(m, VmRole::kComm).serialize(), comm.serialize());
  EXPECT_EQ(e.read_file(m, VmRole::kAnon, "/home/user/doc")->content, to_bytes("hello"));

  auto latest = e.load_nym({"local", "alice"}, "pw");
  EXPECT_EQ(e.read_file(latest, VmRole::kAnon, "/home/user/doc")->content, to_bytes("changed"));
}

TEST(Load, WrongPasswordCreatesNothing) {
  Engine e(test_config("wrongpw"));
  auto n = e.create_nym(NymMode::kPersistent);
  e.store_nym(n, {"local", "bob"}, "right");
  e.terminate_nym(n);
  auto before = e.list_nyms(true).size();
  EXPECT_ERRC(e.load_nym({"local", "bob"}, "wrong"), Errc::kAuthFailure);
  auto all = e.list_nyms(true);
  EXPECT_EQ(all.size(), before + 1);  // only the loader
  EXPECT_TRUE(all.back().loader);
  EXPECT_EQ(all.back().state, NymState::kTerminated);
  EXPECT_TRUE(e.list_nyms().empty());
  EXPECT_ERRC(e.load_nym({"local", "nobody"}, "pw"), Errc::kNotFound);
  EXPECT_TRUE(e.list_nyms().empty());
}

TEST(Load, SameGuardAcrossLoads) {
  Engine e(test_config("guard"));
  auto n = e.create_nym(NymMode::kPersistent, TransportKind::kOnionSim);
  e.store_nym(n, {"local", "carol"}, "pw");
  e.terminate_nym(n);
  std::optional<std::string> guard;
  std::optional<std::string> loader_guard;
  for (int i = 0; i < 5; ++i) {
    auto m = e.load_nym({"local", "carol"}, "pw");
    auto info = e.info(m);
    EXPECT_TRUE(info.guard_seeded);
    ASSERT_TRUE(info.entry_guard);
    if (guard) EXPECT_EQ(*guard, *info.entry_guard);
    guard = info.entry_guard;
    auto nyms = e.list_nyms(true);
    for (const auto& x : nyms) {
      if (!x.loader) continue;
      EXPECT_TRUE(x.guard_seeded);
    }
    e.terminate_nym(m);
  }
}

TEST(Load, StoredTransportStateSpeedsStartup) {
  Engine e(test_config("phases"));
  auto n = e.create_nym(NymMode::kPersistent, TransportKind::kOnionSim);
  e.store_nym(n, {"local", "dave"}, "pw");
  auto m = e.load_nym({"local", "dave"}, "pw");
  std::uint64_t fresh = 0, restored = 0;
  bool loader_phase = false;
  for (const auto& t : e.metrics().phases()) {
    for (const auto& p : t.phases) {
      if (p.kind != metrics::PhaseKind::kTransportStartup) continue;
      (t.nym == m ? restored : fresh) = p.duration_ms;
    }
    if (t.nym == m) loader_phase = t.phases.front().kind == metrics::PhaseKind::kEphemeralLoader;
  }
  EXPECT_GT(fresh, 0u);
  EXPECT_LT(restored, fresh);
  EXPECT_TRUE(loader_phase);
}

TEST(Store, FailureLeavesNymRunningAndVersionsUnchanged) {
  Engine e(test_config("atomic"));
  e.cloud_login("erin", "cloudpw");
  auto n = e.create_nym(NymMode::kPersistent);
  e.store_nym(n, {"cloud", "erin"}, "pw");
  e.cloud().inject_put_failure(100);
  EXPECT_ERRC(e.store_nym(n, {"cloud", "erin"}, "pw"), Errc::kBackendFailure);
  EXPECT_EQ(e.state(n), NymState::kRunning);
  EXPECT_EQ(e.cloud().versions("erin"), std::vector<std::uint64_t>{1});
}

TEST(Store, CloudTrafficLeavesThroughTheTransport) {
  Engine e(test_config("cloud"));
  e.cloud_login("frank", "cloudpw");
  auto n = e.create_nym(NymMode::kPersistent, TransportKind::kOnionSim);
  e.store_nym(n, {"cloud", "frank"}, "pw");
  auto m = e.load_nym({"cloud", "frank"}, "pw");
  EXPECT_EQ(e.state(m), NymState::kRunning);
  auto log = e.cloud().access_log();
  ASSERT_EQ(log.size(), 2u);
  for (const auto& a : log) EXPECT_NE(a.observed_source, e.config().addresses.gateway);
  e.cloud().logout();
  EXPECT_ERRC(e.store_nym(m, {"cloud", "frank"}, "pw"), Errc::kNotAuthenticated);
  EXPECT_EQ(e.state(m), NymState::kRunning);
}

TEST(Preconfigured, SnapshotIsTheBootImage) {
  Engine e(test_config("preconf"));
  auto n = e.create_nym(NymMode::kPreconfigured);
  e.write_file(n, VmRole::kAnon, "/home/user/bookmarks", to_bytes("configured"));
  e.snapshot_nym(n, {"local", "kiosk"}, "pw");
  auto snap = e.writable_layer(n, VmRole::kAnon).serialize();
  EXPECT_EQ(e.session_end_policy(n), StoreAction::kDiscard);
  e.close_session(n, std::nullopt);

  for (int s = 0; s < 3; ++s) {
    auto m = e.load_nym({"local", "kiosk"}, "pw");
    EXPECT_EQ(e.writable_layer(m, VmRole::kAnon).serialize(), snap);
    e.write_file(m, VmRole::kAnon, "/home/user/bookmarks", to_bytes("stain " + std::to_string(s)));
    e.run_workload(m);
    EXPECT_FALSE(e.close_session(m, std::string("pw")));
  }
  EXPECT_EQ(e.backend("local").versions("kiosk").size(), 1u);

  auto m = e.load_nym({"local", "kiosk"}, "pw");
  e.write_file(m, VmRole::kAnon, "/home/user/bookmarks", to_bytes("new"));
  e.snapshot_nym(m, {"local", "kiosk"}, "pw");
  e.terminate_nym(m);
  auto again = e.load_nym({"local", "kiosk"}, "pw");
  EXPECT_EQ(e.read_file(again, VmRole::kAnon, "/home/user/bookmarks")->content, to_bytes("new"));
}

TEST(Session, PersistentNeedsStoreOrDiscard) {
  Engine e(test_config("session"));
  auto p = e.create_nym(NymMode::kPersistent);
  auto x = e.create_nym(NymMode::kEphemeral);
  EXPECT_EQ(e.session_end_policy(p), StoreAction::kStoreThenTerminate);
  EXPECT_EQ(e.session_end_policy(x), StoreAction::kDiscard);
  EXPECT_ERRC(e.close_session(p, std::nullopt), Errc::kStoreRequired);
  EXPECT_EQ(e.state(p), NymState::kRunning);
  EXPECT_ERRC(e.close_session(p, std::string("pw")), Errc::kStoreRequired);  // no target yet
  auto r = e.close_session(p, std::string("pw"), false, StorageTarget{"local", "gina"});
  ASSERT_TRUE(r);
  EXPECT_EQ(r->version, 1u);
  EXPECT_EQ(e.state(p), NymState::kTerminated);

  auto q = e.load_nym({"local", "gina"}, "pw");
  auto r2 = e.close_session(q, std::string("pw"));  // target remembered from the load
  ASSERT_TRUE(r2);
  EXPECT_EQ(r2->version, 2u);

  auto z = e.load_nym({"local", "gina"}, "pw");
  EXPECT_FALSE(e.close_session(z, std::nullopt, true));
  EXPECT_EQ(e.backend("local").versions("gina").size(), 2u);
  EXPECT_FALSE(e.close_session(x, std::nullopt));
}

TEST(Integrity, TamperedBaseShutsNymDown) {
  Engine e(test_config("tamper"));
  auto n = e.create_nym(NymMode::kEphemeral);
  EXPECT_TRUE(e.verify_base_partition().empty());
  for (const auto& path : e.base_image().entries()) {
    if (e.read_file(n, VmRole::kAnon, path.first)) continue;
  }
  EXPECT_EQ(e.state(n), NymState::kRunning);

  auto extents = e.base_image().record_extents();
  const auto& ext = extents.at("/etc/hostname");
  e.tamper_base_partition(ext.offset + ext.length - 2, 0x01);
  EXPECT_FALSE(e.verify_base_partition().empty());
  EXPECT_ERRC(e.read_file(n, VmRole::kAnon, "/etc/hostname"), Errc::kTamperDetected);
  EXPECT_EQ(e.state(n), NymState::kTerminated);
  e.tamper_base_partition(ext.offset + ext.length - 2, 0x01);
  EXPECT_TRUE(e.verify_base_partition().empty());
}

TEST(Integrity, BaseDigestSurvivesLifetimes) {
  Engine e(test_config("basedigest"));
  Digest before = e.base_digest();
  Bytes partition(e.base_partition().begin(), e.base_partition().end());
  for (int i = 0; i < 5; ++i) {
    auto n = e.create_nym(NymMode::kPersistent);
    e.write_file(n, VmRole::kAnon, "/etc/hostname", to_bytes("mine"));
    e.remove_file(n, VmRole::kAnon, "/etc/resolv.conf");
    e.run_workload(n);
    e.terminate_nym(n);
  }
  EXPECT_EQ(e.base_digest(), before);
  EXPECT_TRUE(std::equal(partition.begin(), partition.end(), e.base_partition().begin(),
                         e.base_partition().end()));
}

TEST(Engine, ConfigLayersDifferPerRole) {
  Engine e(test_config("roles"));
  auto n = e.create_nym(NymMode::kEphemeral, TransportKind::kDcnetSim);
  auto anon_rc = e.read_file(n, VmRole::kAnon, "/etc/rc.local");
  auto comm_rc = e.read_file(n, VmRole::kComm, "/etc/rc.local");
  ASSERT_TRUE(anon_rc && comm_rc);
  EXPECT_NE(anon_rc->content, comm_rc->content);
  EXPECT_EQ(e.read_file(n, VmRole::kComm, "/etc/nymix/transport")->content, to_bytes("dcnet\n"));
  EXPECT_FALSE(e.read_file(n, VmRole::kAnon, "/etc/nymix/transport"));
}

TEST(Inbound, GuestCannotWriteInbound) {
  Engine e(test_config("inbound"));
  auto n = e.create_nym(NymMode::kEphemeral);
  EXPECT_ERRC(e.write_file(n, VmRole::kAnon, std::string(kInboundDir) + "evil", to_bytes("x")),
              Errc::kReadOnly);
}

TEST(Workload, CountsVisitsAndCachesPages) {
  Engine e(test_config("workload"));
  auto n = e.create_nym(NymMode::kPersistent);
  auto r = e.run_workload(n, {3, 2048, 128});
  EXPECT_EQ(r.pages, 3u);
  EXPECT_GT(r.wire_bytes, r.payload_bytes);
  for (const auto& p : r.cached_paths) EXPECT_TRUE(e.read_file(n, VmRole::kAnon, p));
  EXPECT_EQ(e.read_file(n, VmRole::kAnon, "/home/user/.config/nymkit/visits")->content,
            to_bytes("3"));
  EXPECT_GT(e.writable_layer(n, VmRole::kComm).content_bytes(), 0u);
  EXPECT_TRUE(e.probe().violations.empty());
}

TEST(Events, SinksSeeTransitions) {
  Engine e(test_config("events"));
  std::vector<nlohmann::json> seen;
  int id = e.subscribe([&](const nlohmann::json& ev) { seen.push_back(ev); });
  auto n = e.create_nym(NymMode::kEphemeral);
  e.pause_nym(n);
  e.unsubscribe(id);
  e.resume_nym(n);
  ASSERT_FALSE(seen.empty());
  EXPECT_EQ(seen.back()["to"], "Paused");
  EXPECT_EQ(seen.back()["nym"], n);
}

}  // namespace
}  // namespace nymkit::nymcore
