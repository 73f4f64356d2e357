#pragma once

#include <cstddef>
#include <string>
#include <vector>

#include "nymkit/metrics/eval.h"
#include "nymkit/nymcore/engine.h"

// Experiment drivers that run workloads on an engine and collect the
// evaluation series.
namespace nymkit::metrics {

// Page pools of every live VM on the engine.
std::vector<PagePool> engine_page_pools(const nymcore::Engine& engine,
                                        const DuplicationModel& model = {});

// Starts nyms one at a time (evaluation spec, incognito transport) and
// accounts memory after each start. The nyms are terminated afterwards.
std::vector<RamPoint> ram_series(nymcore::Engine& engine, std::size_t max_nyms,
                                 const DuplicationModel& model = {});

struct SizeSeriesOptions {
  std::size_t cycles = 6;
  nymcore::WorkloadSpec workload;
  nymcore::StorageTarget target{"local", "series"};
  std::string password = "series-password";
  transports::TransportKind transport = transports::TransportKind::kOnionSim;
};

// Persistent: workload, store, terminate, load, repeated. Preconfigured: one
// configured session and snapshot, then sessions that are never stored; each
// point reports the boot image currently on the backend.
SizeSeries size_series(nymcore::Engine& engine, nymcore::NymMode mode,
                       const SizeSeriesOptions& options = {});

// `runs` startups for each usage model (fresh ephemeral, restored persistent,
// restored pre-configured), then the per-phase means.
PhaseReport startup_trials(nymcore::Engine& engine, std::size_t runs,
                           transports::TransportKind transport =
                               transports::TransportKind::kOnionSim);

}  // namespace nymkit::metrics
