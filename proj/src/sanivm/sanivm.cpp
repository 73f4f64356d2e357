#include "nymkit/sanivm/sanivm.h"

#include <fstream>

#include "nymkit/common/error.h"
#include "nymkit/common/log.h"

namespace nymkit::sanivm {

namespace fs = std::filesystem;

// SourceCatalog --------------------------------------------------------------

SourceCatalog SourceCatalog::mount(const fs::path& root) {
  std::map<std::string, Bytes> files;
  if (!fs::is_directory(root)) fail(Errc::kNotFound, "no such directory: " + root.string());
  for (const auto& entry : fs::recursive_directory_iterator(root)) {
    if (!entry.is_regular_file()) continue;
    std::ifstream in(entry.path(), std::ios::binary);
    Bytes data((std::istreambuf_iterator<char>(in)), std::istreambuf_iterator<char>());
    files[fs::relative(entry.path(), root).generic_string()] = std::move(data);
  }
  return from_files(std::move(files));
}

SourceCatalog SourceCatalog::from_files(std::map<std::string, Bytes> files) {
  SourceCatalog c;
  c.files_ = std::move(files);
  return c;
}

std::vector<std::string> SourceCatalog::list() const {
  std::vector<std::string> out;
  for (const auto& [name, data] : files_) out.push_back(name);
  return out;
}

const Bytes& SourceCatalog::read(const std::string& name) const {
  auto it = files_.find(name);
  if (it == files_.end()) fail(Errc::kNotFound, "no such source file: " + name);
  return it->second;
}

Digest SourceCatalog::digest(const std::string& name) const { return sha256(read(name)); }

MediaFile SourceCatalog::open(const std::string& name) const {
  auto base = fs::path(name).filename().string();
  return MediaFile::from_bytes(base, read(name));
}

void SourceCatalog::write(const std::string& name, ByteView) const {
  fail(Errc::kReadOnly, "source file systems are mounted read-only: " + name);
}

// SaniVm ---------------------------------------------------------------------

nlohmann::json TransferRecord::to_json() const {
  nlohmann::json f = nlohmann::json::array();
  for (const auto& x : findings) f.push_back(x.to_json());
  return {{"file", file},
          {"findings", f},
          {"plan", plan.to_json()},
          {"overrides", overrides},
          {"nym", nym},
          {"destination", destination},
          {"delivered_sha256", delivered_digest.hex()}};
}

SaniVm::SaniVm(nymcore::Engine& engine, SaniConfig config)
    : engine_(engine), config_(std::move(config)) {}

std::vector<RiskFinding> SaniVm::analyze(const MediaFile& file) const {
  return sanivm::analyze(file, policy_);
}

TransferRecord SaniVm::transfer(const TransferRequest& req) {
  if (engine_.state(req.nym) == nymcore::NymState::kTerminated) {
    fail(Errc::kUnknownNym, "nym is terminated: " + req.nym);
  }
  std::vector<RiskFinding> findings = analyze(req.file);
  std::vector<std::string> used_overrides;
  for (const auto& f : findings) {
    if (f.severity != Severity::kHigh || plan_covers(req.plan, f, req.file.kind)) continue;
    if (!req.overrides.contains(f.field)) {
      fail(Errc::kUnresolvedRisk, req.file.name + ": unresolved " +
                                      std::string(severity_name(f.severity)) + " risk on " +
                                      f.field + " (" + f.rationale + ")");
    }
    used_overrides.push_back(f.field);
  }
  MediaFile out = scrub(req.file, req.plan);
  if (out.payload.size() > config_.shared_folder_capacity) {
    fail(Errc::kOutOfRange, "file exceeds the shared folder capacity");
  }

  std::lock_guard lock(mu_);
  // SaniVM per-nym directory, then the hypervisor's shared folder, then the
  // AnonVM's inbound directory.
  directories_[req.nym].push_back(out.name);
  TransferRecord rec;
  rec.file = req.file.name;
  rec.nym = req.nym;
  rec.findings = std::move(findings);
  rec.plan = req.plan;
  rec.overrides = used_overrides;
  rec.delivered_digest = sha256(out.payload);
  rec.destination = engine_.deliver_inbound(nymcore::InboundKey{}, req.nym, out.name,
                                            std::move(out.payload));
  audit_.push_back(rec);
  if (!used_overrides.empty()) {
    logger()->warn("{} transferred to {} with {} overridden High finding(s)", rec.file, rec.nym,
                   used_overrides.size());
  }
  if (config_.audit_path) {
    std::ofstream log(*config_.audit_path, std::ios::app);
    log << rec.to_json().dump() << "\n";
  }
  return rec;
}

std::vector<std::string> SaniVm::nym_directory(const std::string& nym) const {
  std::lock_guard lock(mu_);
  auto it = directories_.find(nym);
  return it == directories_.end() ? std::vector<std::string>{} : it->second;
}

std::vector<TransferRecord> SaniVm::audit_log() const {
  std::lock_guard lock(mu_);
  return audit_;
}

std::string SaniVm::audit_jsonl() const {
  std::lock_guard lock(mu_);
  std::string out;
  for (const auto& r : audit_) out += r.to_json().dump() + "\n";
  return out;
}

// Fixture corpus -------------------------------------------------------------

namespace {

Image gradient_image(std::uint32_t w, std::uint32_t h, std::uint32_t seed) {
  Image img;
  img.width = w;
  img.height = h;
  img.rgb.resize(std::size_t{w} * h * 3);
  for (std::uint32_t y = 0; y < h; ++y) {
    for (std::uint32_t x = 0; x < w; ++x) {
      auto* p = img.pixel(x, y);
      p[0] = static_cast<std::uint8_t>(x * 4 + seed);
      p[1] = static_cast<std::uint8_t>(y * 4 + seed * 3);
      p[2] = static_cast<std::uint8_t>((x ^ y) + seed * 7);
    }
  }
  return img;
}

}  // namespace

std::map<std::string, Bytes> fixture_corpus() {
  std::map<std::string, Bytes> out;
  for (std::uint32_t mask = 0; mask < 32; ++mask) {
    Image img = gradient_image(48 + mask, 32 + mask % 7, mask);
    std::string name = "img";
    if (mask & 1) {
      img.metadata["gps.latitude"] = "40.4406";
      img.metadata["gps.longitude"] = "-79.9959";
      name += "-gps";
    }
    if (mask & 2) {
      img.metadata["serial"] = "SN-0042-7731";
      name += "-serial";
    }
    if (mask & 4) {
      img.metadata["author"] = "J. Doe";
      name += "-author";
    }
    if (mask & 8) {
      img.metadata["datetime_original"] = "2013:10:01 12:00:00";
      name += "-time";
    }
    if (mask & 16) {
      img.regions.push_back({4, 4, 12, 10});
      img.regions.push_back({20, 8, 9, 9});
      name += "-faces";
    }
    img.metadata["software"] = "fixture";
    out["images/" + name + ".nimg"] = img.encode();
  }
  for (std::uint32_t mask = 0; mask < 16; ++mask) {
    Document doc;
    std::string name = "doc";
    if (mask & 1) {
      doc.metadata["author"] = "J. Doe";
      name += "-author";
    }
    if (mask & 2) {
      doc.metadata["creator"] = "jdoe@laptop";
      name += "-creator";
    }
    if (mask & 4) {
      doc.metadata["device_id"] = "LAPTOP-8F3A";
      name += "-device";
    }
    if (mask & 8) {
      doc.metadata["modified"] = "2013-10-01T12:00:00Z";
      name += "-time";
    }
    doc.pages = {"Meeting notes " + std::to_string(mask) + "\nAgenda: budget, travel.",
                 "Hidden text layer: internal draft " + std::to_string(mask)};
    out["docs/" + name + ".ndoc"] = doc.encode();
  }
  out["other/blob.bin"] = to_bytes(std::string("\x7f" "ELF\x02\x01\x01", 7) + "opaque");
  out["other/notes.txt"] = to_bytes("plain text with no container\n");
  out["other/empty"] = {};
  return out;
}

}  // namespace nymkit::sanivm
