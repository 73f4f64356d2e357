#include "nymkit/ctl/controller.h"

#include <algorithm>
#include <cstdio>
#include <sstream>

#include "nymkit/common/error.h"
#include "nymkit/common/log.h"
#include "nymkit/metrics/drivers.h"

namespace nymkit::ctl {
namespace {

using nlohmann::json;
using nymcore::NymMode;

std::string required(const json& a, const char* key) {
  if (!a.contains(key) || !a.at(key).is_string() || a.at(key).get<std::string>().empty()) {
    fail(Errc::kUsage, std::string("missing argument: ") + key);
  }
  return a.at(key).get<std::string>();
}

std::string password(const json& a, const char* key = "password") {
  if (!a.contains(key) || !a.at(key).is_string()) {
    fail(Errc::kUsage, std::string("missing secret: ") + key);
  }
  return a.at(key).get<std::string>();
}

json receipt_json(const nymcore::StoredReceipt& r) {
  return {{"backend", r.backend},
          {"object", r.object},
          {"version", r.version},
          {"archive_digest", r.archive_digest.hex()},
          {"archive_bytes", r.archive_bytes},
          {"anon_layer_bytes", r.anon_layer_bytes},
          {"comm_layer_bytes", r.comm_layer_bytes},
          {"boot_image", r.boot_image}};
}

nymcore::NymBoxSpec parse_box_spec(const std::string& s) {
  unsigned a = 0, b = 0, c = 0, d = 0;
  char tail = 0;
  if (std::sscanf(s.c_str(), "%u/%u/%u/%u%c", &a, &b, &c, &d, &tail) != 4) {
    fail(Errc::kUsage, "spec must be anon_ram/anon_disk/comm_ram/comm_disk in MB: " + s);
  }
  return {{a, b}, {c, d}};
}

nymcore::PersistencePolicy parse_policy(const std::string& s) {
  if (s == "discard") return nymcore::PersistencePolicy::kDiscard;
  if (s == "writeback") return nymcore::PersistencePolicy::kWriteBack;
  if (s == "storecow") return nymcore::PersistencePolicy::kStoreCow;
  fail(Errc::kUsage, "policy must be discard, writeback or storecow: " + s);
}

std::vector<std::string> uncovered_highs(const std::vector<sanivm::RiskFinding>& findings,
                                         const sanivm::ScrubPlan& plan, sanivm::MediaKind kind,
                                         const std::set<std::string>& overrides) {
  std::vector<std::string> out;
  for (const auto& f : findings) {
    if (f.severity == sanivm::Severity::kHigh && !sanivm::plan_covers(plan, f, kind) &&
        !overrides.count(f.field)) {
      out.push_back(f.field);
    }
  }
  return out;
}

json findings_json(const std::vector<sanivm::RiskFinding>& findings) {
  json out = json::array();
  for (const auto& f : findings) out.push_back(f.to_json());
  return out;
}

std::set<std::string> string_set(const json& a, const char* key) {
  std::set<std::string> out;
  if (a.contains(key)) {
    for (const auto& v : a.at(key)) out.insert(v.get<std::string>());
  }
  return out;
}

}  // namespace

int EventHub::subscribe(Sink sink) {
  std::lock_guard lock(mu_);
  sinks_[next_id_] = std::move(sink);
  return next_id_++;
}

void EventHub::unsubscribe(int id) {
  std::lock_guard lock(mu_);
  sinks_.erase(id);
}

void EventHub::publish(json event) {
  std::lock_guard lock(mu_);
  event["seq"] = ++seq_;
  for (const auto& [id, sink] : sinks_) {
    try {
      sink(event);
    } catch (const std::exception& e) {
      logger()->warn("event sink {} failed: {}", id, e.what());
    }
  }
}

Controller::Controller(Settings settings)
    : settings_(std::move(settings)),
      approvals_([this](const json& e) { events_.publish(e); }),
      engine_(std::make_unique<nymcore::Engine>(settings_.engine)),
      sanivm_(std::make_unique<sanivm::SaniVm>(*engine_, settings_.sanivm)),
      catalog_(settings_.source_dir ? sanivm::SourceCatalog::mount(*settings_.source_dir)
                                    : sanivm::SourceCatalog::from_files(sanivm::fixture_corpus())) {
  engine_sub_ = engine_->subscribe([this](const json& e) { events_.publish(e); });
}

Controller::~Controller() { engine_->unsubscribe(engine_sub_); }

const std::map<std::string, Controller::Handler>& Controller::table() {
  static const std::map<std::string, Handler> t{
      {"create", &Controller::create},       {"load", &Controller::load},
      {"store", &Controller::store},         {"snapshot", &Controller::snapshot},
      {"terminate", &Controller::terminate}, {"pause", &Controller::pause},
      {"resume", &Controller::resume},       {"list", &Controller::list},
      {"scrub", &Controller::scrub},         {"transfer", &Controller::transfer},
      {"approve", &Controller::approve},     {"probe", &Controller::probe},
      {"report", &Controller::report},       {"host-boot", &Controller::host_boot},
  };
  return t;
}

std::vector<std::string> Controller::verbs() {
  std::vector<std::string> out;
  for (const auto& [verb, _] : table()) out.push_back(verb);
  return out;
}

std::uint64_t Controller::dispatch_count(const std::string& verb) const {
  std::lock_guard lock(mu_);
  auto it = counts_.find(verb);
  return it == counts_.end() ? 0 : it->second;
}

json Controller::call(const std::string& verb, const json& args) {
  auto it = table().find(verb);
  if (it == table().end()) fail(Errc::kUsage, "unknown verb: " + verb);
  if (!args.is_null() && !args.is_object()) fail(Errc::kUsage, "args must be an object");
  {
    std::lock_guard lock(mu_);
    ++counts_[verb];
  }
  const json& a = args.is_null() ? json::object() : args;
  logger()->debug("ctl {} {}", verb, redact(a).dump());
  return (this->*(it->second))(a);
}

nymcore::StorageTarget Controller::target(const json& a, const std::string& default_object) {
  nymcore::StorageTarget t;
  t.backend = a.value("backend", settings_.default_backend);
  t.object = a.value("object", default_object);
  if (t.object.empty()) fail(Errc::kUsage, "missing argument: object");
  if (t.backend == "cloud" && a.contains("account")) {
    engine_->cloud_login(required(a, "account"), password(a, "cloud_password"));
  }
  return t;
}

json Controller::create(const json& a) {
  auto mode = nymcore::parse_mode(a.value("mode", "ephemeral"));
  std::optional<transports::TransportKind> kind;
  if (a.contains("transport")) kind = transports::parse_kind(required(a, "transport"));
  std::optional<nymcore::NymBoxSpec> spec;
  if (a.contains("spec")) spec = parse_box_spec(required(a, "spec"));
  auto id = engine_->create_nym(mode, kind, spec);
  return {{"nym", id}, {"info", engine_->info(id).to_json()}};
}

json Controller::load(const json& a) {
  auto t = target(a, "");
  nymcore::LoadOptions o;
  if (a.contains("version")) o.version = a.at("version").get<std::uint64_t>();
  if (a.contains("seeded_loader")) o.seeded_loader = a.at("seeded_loader").get<bool>();
  auto id = engine_->load_nym(t, password(a), o);
  return {{"nym", id}, {"info", engine_->info(id).to_json()}};
}

json Controller::store(const json& a) {
  auto nym = required(a, "nym");
  auto info = engine_->info(nym);
  auto t = target(a, info.storage ? info.storage->object : nym);
  return {{"nym", nym}, {"receipt", receipt_json(engine_->store_nym(nym, t, password(a)))}};
}

json Controller::snapshot(const json& a) {
  auto nym = required(a, "nym");
  auto info = engine_->info(nym);
  auto t = target(a, info.storage ? info.storage->object : nym);
  return {{"nym", nym}, {"receipt", receipt_json(engine_->snapshot_nym(nym, t, password(a)))}};
}

json Controller::terminate(const json& a) {
  auto nym = required(a, "nym");
  std::optional<std::string> pw;
  if (a.contains("password")) pw = password(a);
  std::optional<nymcore::StorageTarget> t;
  if (a.contains("object") || a.contains("backend")) t = target(a, "");
  auto receipt = engine_->close_session(nym, pw, a.value("discard", false), t);
  json body = {{"nym", nym}, {"state", nymcore::state_name(engine_->state(nym))}};
  if (receipt) body["receipt"] = receipt_json(*receipt);
  return body;
}

json Controller::pause(const json& a) {
  auto nym = required(a, "nym");
  engine_->pause_nym(nym);
  return {{"nym", nym}, {"state", nymcore::state_name(engine_->state(nym))}};
}

json Controller::resume(const json& a) {
  auto nym = required(a, "nym");
  engine_->resume_nym(nym);
  return {{"nym", nym}, {"state", nymcore::state_name(engine_->state(nym))}};
}

json Controller::list(const json& a) {
  json nyms = json::array();
  for (const auto& n : engine_->list_nyms(a.value("all", false))) nyms.push_back(n.to_json());
  return {{"nyms", nyms}};
}

json Controller::scrub(const json& a) {
  auto name = required(a, "file");
  auto file = catalog_.open(name);
  auto findings = sanivm_->analyze(file);
  auto plan = sanivm::ScrubPlan::paranoia(a.value("paranoia", 2), file.kind);
  json body = {{"file", name},
               {"kind", sanivm::kind_name(file.kind)},
               {"findings", findings_json(findings)},
               {"plan", plan.to_json()},
               {"uncovered", uncovered_highs(findings, plan, file.kind, string_set(a, "overrides"))}};
  try {
    body["residual"] = findings_json(sanivm_->analyze(sanivm::scrub(file, plan)));
  } catch (const Error& e) {
    if (e.code() != Errc::kKindMismatch) throw;
    body["residual"] = nullptr;
  }
  return body;
}

json Controller::transfer(const json& a) {
  auto nym = required(a, "nym");
  auto name = required(a, "file");
  auto file = catalog_.open(name);
  auto findings = sanivm_->analyze(file);
  int level = a.value("paranoia", 2);
  auto plan = sanivm::ScrubPlan::paranoia(level, file.kind);
  auto overrides = string_set(a, "overrides");

  auto uncovered = uncovered_highs(findings, plan, file.kind, overrides);
  if (!uncovered.empty() && a.value("approval", false)) {
    auto timeout = a.contains("timeout_ms")
                       ? std::chrono::milliseconds(a.at("timeout_ms").get<std::int64_t>())
                       : settings_.approval_timeout;
    auto reply = approvals_.request({{"nym", nym},
                                     {"file", name},
                                     {"kind", sanivm::kind_name(file.kind)},
                                     {"findings", findings_json(findings)},
                                     {"plan", plan.to_json()},
                                     {"uncovered", uncovered}},
                                    timeout);
    if (!reply.approve) fail(Errc::kUnresolvedRisk, "transfer of " + name + " rejected by user");
    if (reply.paranoia) plan = sanivm::ScrubPlan::paranoia(*reply.paranoia, file.kind);
    overrides.insert(reply.overrides.begin(), reply.overrides.end());
  }
  auto record = sanivm_->transfer({nym, file, plan, overrides});
  return record.to_json();
}

json Controller::approve(const json& a) {
  auto request = required(a, "request");
  approvals_.answer(request, ApprovalReply::from_json(a));
  return {{"request", request}};
}

json Controller::probe(const json&) {
  auto report = engine_->probe();
  netfabric::LeakReport v;
  v.attempted = report.violations;
  json records = json::array();
  std::istringstream lines(v.to_jsonl());
  for (std::string line; std::getline(lines, line);) records.push_back(json::parse(line));
  json body = {{"attempted", report.attempted.size()},
               {"delivered", report.delivered.size()},
               {"violations", report.violations.size()},
               {"blocked_expected", report.blocked_expected.size()},
               {"violation_records", records}};
  events_.publish({{"event", "probe"}, {"violations", report.violations.size()}});
  return body;
}

json Controller::report(const json& a) {
  auto kind = required(a, "kind");
  json body = {{"kind", kind}};
  if (kind == "ksm") {
    auto series = metrics::ram_series(*engine_, a.value("nyms", std::size_t{8}));
    body["csv"] = metrics::ram_series_csv(series);
    body["saving"] = series.back().ksm.saving();
  } else if (kind == "bandwidth") {
    auto transport = transports::parse_kind(a.value("transport", "incognito"));
    std::uint64_t payload = a.value("payload_bytes", std::uint64_t{10'000'000});
    std::string csv;
    for (std::size_t n : {1u, 2u, 4u, 8u}) {
      auto r = metrics::bandwidth_trial(transport, payload, n);
      auto part = r.to_csv();
      csv += csv.empty() ? part : part.substr(part.find('\n') + 1);
    }
    body["csv"] = csv;
  } else if (kind == "phases") {
    auto transport = transports::parse_kind(a.value("transport", "onion"));
    body["csv"] = metrics::startup_trials(*engine_, a.value("runs", std::size_t{5}), transport).to_csv();
  } else if (kind == "sizes") {
    auto mode = nymcore::parse_mode(a.value("mode", "persistent"));
    metrics::SizeSeriesOptions o;
    o.cycles = a.value("cycles", std::size_t{6});
    o.target.object = "size-series-" + std::string(nymcore::mode_name(mode));
    auto s = metrics::size_series(*engine_, mode, o);
    body["csv"] = s.to_csv();
  } else if (kind == "metrics") {
    body["jsonl"] = engine_->metrics().to_jsonl();
  } else {
    fail(Errc::kUsage, "report kind must be ksm, bandwidth, phases, sizes or metrics: " + kind);
  }
  events_.publish({{"event", "metric"}, {"kind", kind}});
  return body;
}

std::shared_ptr<hostnym::HostDiskImage> Controller::disk(const json& a) {
  std::lock_guard lock(mu_);
  if (a.contains("disk")) {
    auto path = required(a, "disk");
    auto& slot = disks_[path];
    if (!slot) slot = std::make_shared<hostnym::HostDiskImage>(hostnym::HostDiskImage::load(path));
    return slot;
  }
  auto os = required(a, "synthesize");
  auto profile = hostnym::parse_profile(a.value("profile", "BareMetal"));
  auto& slot = disks_["synthetic:" + os + ":" + std::string(hostnym::profile_name(profile))];
  if (!slot) {
    slot = std::make_shared<hostnym::HostDiskImage>(
        hostnym::HostDiskImage::synthesize(hostnym::parse_os(os), profile, a.value("blocks", std::size_t{4096})));
  }
  return slot;
}

json Controller::host_boot(const json& a) {
  auto lower = disk(a);
  json body;
  hostnym::CowDisk cow = a.value("repair", false) ? engine_->repair_host_disk(lower)
                                                   : hostnym::CowDisk(lower);
  nymcore::HostBootOptions o;
  if (a.contains("anonymizer")) o.transport_override = transports::parse_kind(required(a, "anonymizer"));
  auto id = engine_->boot_host_nym(std::move(cow), o);
  if (a.contains("policy")) {
    engine_->set_persistence_policy(id, parse_policy(required(a, "policy")),
                                    a.value("confirm", false));
  }
  body["nym"] = id;
  body["info"] = engine_->info(id).to_json();
  body["policy"] = nymcore::policy_name(engine_->persistence_policy(id));
  return body;
}

}  // namespace nymkit::ctl
