#include "nymkit/hostnym/disk.h"

#include <gtest/gtest.h>

#include <random>

#include "errc_matchers.h"
#include "nymcore/fixture.h"
#include "nymkit/nymcore/engine.h"

namespace nymkit::hostnym {
namespace {

using nymcore::Engine;
using nymcore::PersistencePolicy;
using nymkit::testing::test_config;

constexpr std::size_t kBs = 512;

std::shared_ptr<HostDiskImage> disk(OsLabel os, DriverProfile p, std::size_t blocks = 64) {
  return std::make_shared<HostDiskImage>(HostDiskImage::synthesize(os, p, blocks, "t", kBs));
}

Bytes block_of(std::mt19937_64& rng, std::size_t n) {
  Bytes b(n);
  for (auto& x : b) x = static_cast<std::uint8_t>(rng());
  return b;
}

TEST(HostDisk, SerializeRoundTrip) {
  auto d = disk(OsLabel::kWindows7, DriverProfile::kBareMetal);
  auto back = HostDiskImage::parse(d->serialize());
  EXPECT_EQ(back.digest(), d->digest());
  EXPECT_EQ(back.os(), OsLabel::kWindows7);
  EXPECT_EQ(back.installed_profile(), DriverProfile::kBareMetal);
  EXPECT_EQ(config_profile(back.block(0)), DriverProfile::kBareMetal);

  Bytes bytes = d->serialize();
  bytes.pop_back();
  EXPECT_ERRC(HostDiskImage::parse(bytes), Errc::kBadFormat);
  bytes = d->serialize();
  bytes[0] ^= 1;
  EXPECT_ERRC(HostDiskImage::parse(bytes), Errc::kBadFormat);
}

// Reads through the COW disk match a full copy mutated by the same writes,
// and the lower image never changes.
TEST(CowDisk, MatchesFullCopyOracle) {
  std::mt19937_64 rng(3);
  for (int trial = 0; trial < 50; ++trial) {
    auto lower = disk(OsLabel::kLinux, DriverProfile::kBareMetal, 32);
    Digest before = lower->digest();
    HostDiskImage copy = *lower;
    CowDisk cow(lower);
    for (int op = 0; op < 100; ++op) {
      std::size_t i = rng() % 32;
      if (rng() % 2) {
        Bytes data = block_of(rng, 1 + rng() % kBs);
        cow.write(i, data);
        copy.write_block(i, data);
      } else {
        ByteView want = copy.block(i);
        ASSERT_EQ(cow.read(i), Bytes(want.begin(), want.end()));
      }
    }
    EXPECT_EQ(lower->digest(), before);
    EXPECT_EQ(cow.digest(), sha256(ByteView(copy.serialize()).subspan(copy.serialize().size() -
                                                                      32 * kBs)));
    // WriteBack: merging must produce exactly the full-copy oracle.
    cow.merge_into_lower();
    EXPECT_EQ(lower->digest(), copy.digest());
    EXPECT_TRUE(cow.upper().empty());
  }
}

TEST(CowDisk, LayerRoundTrip) {
  auto lower = disk(OsLabel::kLinux, DriverProfile::kBareMetal, 16);
  CowDisk cow(lower);
  cow.write(3, to_bytes("three"));
  cow.write(15, to_bytes("fifteen"));
  auto back = CowDisk::from_layer(lower, cow.to_layer("x"));
  EXPECT_EQ(back.digest(), cow.digest());
  EXPECT_ERRC(cow.write(16, to_bytes("x")), Errc::kOutOfRange);
}

TEST(Repair, DeltaAndIdempotence) {
  for (auto os : {OsLabel::kWindowsVista, OsLabel::kWindows7, OsLabel::kWindows8}) {
    auto lower = disk(os, DriverProfile::kBareMetal, 40000);
    Digest before = lower->digest();
    CowDisk a = repair_os(lower);
    CowDisk b = repair_os(lower);
    EXPECT_EQ(a.effective_profile(), DriverProfile::kVirtual);
    EXPECT_EQ(a.digest(), b.digest());
    EXPECT_EQ(a.upper_bytes(), repair_delta_bytes(os, kBs));
    apply_repair(a);
    EXPECT_EQ(a.digest(), b.digest());
    EXPECT_EQ(lower->digest(), before);
  }
  EXPECT_GT(repair_delta_bytes(OsLabel::kWindows8, kBs), 14u * 1024 * 1024 - 1);
  EXPECT_ERRC(repair_os(disk(OsLabel::kLinux, DriverProfile::kBareMetal)), Errc::kNotApplicable);
  EXPECT_ERRC(repair_os(disk(OsLabel::kWindows7, DriverProfile::kVirtual)), Errc::kNotApplicable);
}

TEST(HostNym, BootRules) {
  Engine e(test_config("hostboot"));
  auto linux_disk = disk(OsLabel::kLinux, DriverProfile::kBareMetal);
  auto n = e.boot_host_nym(CowDisk(linux_disk));
  EXPECT_TRUE(e.info(n).host_nym);
  EXPECT_EQ(e.info(n).transport, transports::TransportKind::kIncognito);
  EXPECT_ERRC(e.boot_host_nym(CowDisk(linux_disk)), Errc::kInvalidArgument);
  EXPECT_ERRC(e.run_workload(n), Errc::kNotApplicable);

  auto win = disk(OsLabel::kWindows7, DriverProfile::kBareMetal, 12000);
  EXPECT_ERRC(e.boot_host_nym(CowDisk(win)), Errc::kDriverMismatch);
  auto repaired = e.repair_host_disk(win);
  EXPECT_NO_THROW(e.boot_host_nym(std::move(repaired)));
  ASSERT_EQ(e.metrics().repairs().size(), 1u);
  EXPECT_EQ(e.metrics().repairs()[0].os_label, "Windows7");

  auto other = disk(OsLabel::kLinux, DriverProfile::kVirtual);
  std::vector<nlohmann::json> events;
  e.subscribe([&](const nlohmann::json& ev) { events.push_back(ev); });
  auto anon = e.boot_host_nym(CowDisk(other), {transports::TransportKind::kOnionSim});
  EXPECT_EQ(e.info(anon).transport, transports::TransportKind::kOnionSim);
  bool warned = false;
  for (const auto& ev : events) warned |= ev["event"] == "host-boot" && ev["anonymizer"] == true;
  EXPECT_TRUE(warned);
}

TEST(HostNym, DiscardIsDeniable) {
  Engine e(test_config("discard"));
  auto lower = disk(OsLabel::kLinux, DriverProfile::kBareMetal);
  Bytes image = lower->serialize();
  std::mt19937_64 rng(5);
  for (int s = 0; s < 20; ++s) {
    auto n = e.boot_host_nym(CowDisk(lower));
    EXPECT_EQ(e.persistence_policy(n), PersistencePolicy::kDiscard);
    Bytes canary = block_of(rng, 64);
    e.write_host_block(n, 1 + rng() % 60, canary);
    e.terminate_nym(n);
    EXPECT_EQ(lower->serialize(), image);
    EXPECT_FALSE(contains(e.serialize_state(), canary));
  }
}

TEST(HostNym, WriteBackNeedsConfirmation) {
  Engine e(test_config("writeback"));
  auto lower = disk(OsLabel::kLinux, DriverProfile::kBareMetal);
  HostDiskImage oracle = *lower;
  auto n = e.boot_host_nym(CowDisk(lower));
  e.write_host_block(n, 7, to_bytes("seven"));
  oracle.write_block(7, to_bytes("seven"));
  EXPECT_ERRC(e.set_persistence_policy(n, PersistencePolicy::kWriteBack), Errc::kInvalidArgument);
  e.set_persistence_policy(n, PersistencePolicy::kWriteBack, true);
  EXPECT_EQ(to_string(e.read_host_block(n, 7)).substr(0, 5), "seven");
  e.terminate_nym(n);
  EXPECT_EQ(lower->digest(), oracle.digest());
}

TEST(HostNym, StoreCowAndStaleBase) {
  Engine e(test_config("storecow"));
  auto lower = disk(OsLabel::kLinux, DriverProfile::kBareMetal);
  Digest before = lower->digest();
  auto n = e.boot_host_nym(CowDisk(lower));
  e.write_host_block(n, 9, to_bytes("nine"));
  Digest cow_digest = CowDisk::from_layer(lower, [&] {
                        CowDisk c(lower);
                        c.write(9, to_bytes("nine"));
                        return c.to_layer("x");
                      }()).digest();
  auto receipt = e.store_host_cow(n, {"local", "hostcow"}, "pw");
  EXPECT_EQ(e.persistence_policy(n), PersistencePolicy::kStoreCow);
  e.terminate_nym(n);
  EXPECT_EQ(lower->digest(), before);

  auto restored = e.restore_host_cow(lower, {"local", "hostcow"}, "pw");
  EXPECT_EQ(restored.digest(), cow_digest);
  EXPECT_ERRC(e.restore_host_cow(lower, {"local", "hostcow"}, "nope"), Errc::kAuthFailure);
  EXPECT_ERRC(e.load_nym({"local", "hostcow"}, "pw"), Errc::kKindMismatch);

  std::mt19937_64 rng(9);
  for (int t = 0; t < 10; ++t) {
    auto changed = std::make_shared<HostDiskImage>(*lower);
    changed->write_block(rng() % 64, block_of(rng, 16));
    EXPECT_ERRC(e.restore_host_cow(changed, {"local", "hostcow"}, "pw"), Errc::kStaleBase);
  }
  (void)receipt;
}

}  // namespace
}  // namespace nymkit::hostnym
