#include "nymkit/metrics/drivers.h"

#include "nymkit/common/error.h"

namespace nymkit::metrics {

using nymcore::Engine;
using nymcore::NymMode;

std::vector<PagePool> engine_page_pools(const Engine& engine, const DuplicationModel& model) {
  std::vector<PagePool> pools;
  for (const auto& vm : engine.vm_pages()) {
    bool comm = vm.role == nymcore::VmRole::kComm;
    pools.push_back(build_page_pool({vm.owner + (comm ? "/comm" : "/anon"), comm, vm.spec.ram_mb,
                                     vm.spec.writable_disk_mb, vm.resident},
                                    model));
  }
  return pools;
}

std::vector<RamPoint> ram_series(Engine& engine, std::size_t max_nyms,
                                 const DuplicationModel& model) {
  std::vector<RamPoint> out;
  std::vector<std::string> started;
  for (std::size_t n = 1; n <= max_nyms; ++n) {
    started.push_back(engine.create_nym(NymMode::kEphemeral, transports::TransportKind::kIncognito,
                                        nymcore::NymBoxSpec::evaluation()));
    out.push_back({n, ksm_account(engine_page_pools(engine, model))});
  }
  for (const auto& id : started) engine.terminate_nym(id);
  return out;
}

SizeSeries size_series(Engine& engine, NymMode mode, const SizeSeriesOptions& o) {
  if (mode == NymMode::kEphemeral) {
    fail(Errc::kModeForbidsStore, "ephemeral nyms have no stored size");
  }
  SizeSeries series;
  series.mode = std::string(nymcore::mode_name(mode));
  std::string nym = engine.create_nym(mode, o.transport);

  if (mode == NymMode::kPersistent) {
    for (std::size_t c = 0; c < o.cycles; ++c) {
      engine.run_workload(nym, o.workload);
      auto r = engine.store_nym(nym, o.target, o.password);
      series.points.push_back({c, r.archive_bytes, r.anon_layer_bytes, r.comm_layer_bytes});
      engine.terminate_nym(nym);
      if (c + 1 < o.cycles) nym = engine.load_nym(o.target, o.password);
    }
    return series;
  }

  // Pre-configured: one configuring session, then sessions that are scrubbed.
  engine.run_workload(nym, o.workload);
  engine.snapshot_nym(nym, o.target, o.password);
  engine.terminate_nym(nym);
  auto& be = engine.backend(o.target.backend);
  for (std::size_t c = 0; c < o.cycles; ++c) {
    Bytes archive = be.get(nullptr, o.target.object);
    auto u = snapstore::unpack(archive, o.password);
    series.points.push_back({c, archive.size(), u.anon.serialize().size(),
                             u.comm.serialize().size()});
    nym = engine.load_nym(o.target, o.password);
    engine.run_workload(nym, o.workload);
    engine.close_session(nym, std::nullopt);
  }
  return series;
}

PhaseReport startup_trials(Engine& engine, std::size_t runs, transports::TransportKind transport) {
  std::size_t before = engine.metrics().phases().size();
  const std::string pw = "startup-trials";
  nymcore::StorageTarget persistent{"local", "startup-persistent"};
  nymcore::StorageTarget preconfigured{"local", "startup-preconfigured"};

  auto seed = [&](NymMode mode, const nymcore::StorageTarget& t) {
    auto n = engine.create_nym(mode, transport);
    engine.run_workload(n);
    if (mode == NymMode::kPreconfigured) {
      engine.snapshot_nym(n, t, pw);
    } else {
      engine.store_nym(n, t, pw);
    }
    engine.terminate_nym(n);
  };
  seed(NymMode::kPersistent, persistent);
  seed(NymMode::kPreconfigured, preconfigured);

  std::vector<PhaseTrace> traces;
  for (std::size_t i = 0; i < runs; ++i) {
    engine.terminate_nym(engine.create_nym(NymMode::kEphemeral, transport));
    engine.terminate_nym(engine.load_nym(persistent, pw));
    engine.terminate_nym(engine.load_nym(preconfigured, pw));
  }
  auto all = engine.metrics().phases();
  // Skip the two seeding sessions.
  traces.assign(all.begin() + static_cast<std::ptrdiff_t>(before + 2), all.end());
  return phase_report(traces);
}

}  // namespace nymkit::metrics
