#include "nymkit/hostnym/disk.h"

#include <sodium.h>

#include <algorithm>
#include <cmath>
#include <fstream>
#include <iomanip>
#include <sstream>

#include "nymkit/common/error.h"

namespace nymkit::hostnym {
namespace {

constexpr std::uint16_t kVersion = 1;

void keystream(ByteView key_material, std::uint64_t counter, std::span<std::uint8_t> out) {
  crypto_init();
  Digest key = blake2b(key_material);
  std::array<std::uint8_t, crypto_stream_chacha20_NONCEBYTES> nonce{};
  for (int i = 0; i < 8; ++i) nonce[i] = static_cast<std::uint8_t>(counter >> (56 - 8 * i));
  crypto_stream_chacha20(out.data(), out.size(), nonce.data(), key.bytes.data());
}

std::string block_path(std::size_t i) {
  std::ostringstream s;
  s << "/block/" << std::setw(12) << std::setfill('0') << i;
  return s.str();
}

}  // namespace

std::string_view os_name(OsLabel os) {
  switch (os) {
    case OsLabel::kLinux: return "Linux";
    case OsLabel::kWindowsVista: return "WindowsVista";
    case OsLabel::kWindows7: return "Windows7";
    case OsLabel::kWindows8: return "Windows8";
  }
  return "?";
}

OsLabel parse_os(std::string_view name) {
  for (auto os : {OsLabel::kLinux, OsLabel::kWindowsVista, OsLabel::kWindows7,
                  OsLabel::kWindows8}) {
    if (name == os_name(os)) return os;
  }
  fail(Errc::kInvalidArgument, "unknown os label: " + std::string(name));
}

std::string_view profile_name(DriverProfile p) {
  return p == DriverProfile::kBareMetal ? "BareMetal" : "Virtual";
}

DriverProfile parse_profile(std::string_view name) {
  if (name == "BareMetal") return DriverProfile::kBareMetal;
  if (name == "Virtual") return DriverProfile::kVirtual;
  fail(Errc::kInvalidArgument, "unknown driver profile: " + std::string(name));
}

bool is_windows(OsLabel os) { return os != OsLabel::kLinux; }

Bytes config_block(OsLabel os, DriverProfile profile, std::size_t block_size) {
  std::string text = "os=" + std::string(os_name(os)) + "\ndriver_profile=" +
                     std::string(profile_name(profile)) + "\n";
  Bytes b = to_bytes(text);
  if (b.size() > block_size) fail(Errc::kInvalidArgument, "block size too small");
  b.resize(block_size, 0);
  return b;
}

DriverProfile config_profile(ByteView block) {
  std::string text = to_string(block);
  text.resize(std::min(text.find('\0'), text.size()));
  std::istringstream in(text);
  std::string line;
  while (std::getline(in, line)) {
    if (line.rfind("driver_profile=", 0) == 0) return parse_profile(line.substr(15));
  }
  fail(Errc::kBadFormat, "config block has no driver profile");
}

// HostDiskImage -------------------------------------------------------------

HostDiskImage HostDiskImage::synthesize(OsLabel os, DriverProfile profile,
                                        std::size_t block_count, std::string_view seed,
                                        std::size_t block_size) {
  if (block_count < 2 || block_size < 64) fail(Errc::kInvalidArgument, "disk too small");
  HostDiskImage d;
  d.os_ = os;
  d.profile_ = profile;
  d.block_size_ = block_size;
  d.blocks_.resize(block_count * block_size);
  Bytes cfg = config_block(os, profile, block_size);
  std::copy(cfg.begin(), cfg.end(), d.blocks_.begin());
  std::string material = std::string(seed) + "/" + std::string(os_name(os));
  keystream(as_bytes(material), 0,
            std::span<std::uint8_t>(d.blocks_).subspan(block_size));
  return d;
}

HostDiskImage HostDiskImage::parse(ByteView bytes) {
  Reader r(bytes);
  if (to_string(r.raw(kMagic.size())) != kMagic) fail(Errc::kBadFormat, "not a host disk image");
  if (r.u16() != kVersion) fail(Errc::kBadFormat, "unsupported disk image version");
  std::uint8_t os = r.u8();
  std::uint8_t profile = r.u8();
  if (os > 3 || profile > 1) fail(Errc::kBadFormat, "bad disk descriptor");
  std::uint32_t block_size = r.u32();
  std::uint64_t count = r.u64();
  if (block_size < 64 || count < 2 || count > (std::uint64_t{1} << 32) / block_size ||
      r.remaining() != count * block_size) {
    fail(Errc::kBadFormat, "disk size does not match descriptor");
  }
  HostDiskImage d;
  d.os_ = static_cast<OsLabel>(os);
  d.profile_ = static_cast<DriverProfile>(profile);
  d.block_size_ = block_size;
  ByteView rest = r.raw(r.remaining());
  d.blocks_.assign(rest.begin(), rest.end());
  return d;
}

HostDiskImage HostDiskImage::load(const std::filesystem::path& path) {
  std::ifstream in(path, std::ios::binary);
  if (!in) fail(Errc::kNotFound, "cannot open disk image " + path.string());
  Bytes data((std::istreambuf_iterator<char>(in)), std::istreambuf_iterator<char>());
  return parse(data);
}

Bytes HostDiskImage::serialize() const {
  Writer w;
  w.raw(kMagic);
  w.u16(kVersion);
  w.u8(static_cast<std::uint8_t>(os_));
  w.u8(static_cast<std::uint8_t>(profile_));
  w.u32(static_cast<std::uint32_t>(block_size_));
  w.u64(block_count());
  w.raw(blocks_);
  return w.take();
}

void HostDiskImage::save(const std::filesystem::path& path) const {
  Bytes data = serialize();
  std::ofstream out(path, std::ios::binary | std::ios::trunc);
  out.write(reinterpret_cast<const char*>(data.data()), data.size());
  if (!out) fail(Errc::kBackendFailure, "cannot write " + path.string());
}

ByteView HostDiskImage::block(std::size_t i) const {
  if (i >= block_count()) fail(Errc::kOutOfRange, "block index past end of disk");
  return ByteView(blocks_).subspan(i * block_size_, block_size_);
}

void HostDiskImage::write_block(std::size_t i, ByteView data) {
  if (i >= block_count()) fail(Errc::kOutOfRange, "block index past end of disk");
  if (data.size() > block_size_) fail(Errc::kInvalidArgument, "block data too large");
  auto dst = blocks_.begin() + i * block_size_;
  std::copy(data.begin(), data.end(), dst);
  std::fill(dst + data.size(), dst + block_size_, 0);
}

Digest HostDiskImage::digest() const { return sha256(serialize()); }

// CowDisk -------------------------------------------------------------------

CowDisk::CowDisk(std::shared_ptr<HostDiskImage> lower) : lower_(std::move(lower)) {
  if (!lower_) fail(Errc::kInvalidArgument, "cow disk needs a lower image");
}

std::size_t CowDisk::upper_bytes() const { return upper_.size() * lower_->block_size(); }

Bytes CowDisk::read(std::size_t i) const {
  if (auto it = upper_.find(i); it != upper_.end()) return it->second;
  ByteView b = lower_->block(i);
  return Bytes(b.begin(), b.end());
}

void CowDisk::write(std::size_t i, ByteView data) {
  if (i >= lower_->block_count()) fail(Errc::kOutOfRange, "block index past end of disk");
  if (data.size() > lower_->block_size()) fail(Errc::kInvalidArgument, "block data too large");
  Bytes b(data.begin(), data.end());
  b.resize(lower_->block_size(), 0);
  upper_[i] = std::move(b);
}

Digest CowDisk::digest() const {
  Sha256 h;
  for (std::size_t i = 0; i < lower_->block_count(); ++i) {
    if (auto it = upper_.find(i); it != upper_.end()) h.update(it->second);
    else h.update(lower_->block(i));
  }
  return h.finish();
}

void CowDisk::merge_into_lower() {
  for (const auto& [i, b] : upper_) lower_->write_block(i, b);
  wipe_upper();
}

void CowDisk::wipe_upper() {
  for (auto& [i, b] : upper_) secure_zero(b);
  upper_.clear();
}

overlay::Layer CowDisk::to_layer(const std::string& id) const {
  overlay::Layer l(id, overlay::LayerMode::kWritable);
  for (const auto& [i, b] : upper_) l.put(block_path(i), {b, {}});
  return l.frozen(id);
}

CowDisk CowDisk::from_layer(std::shared_ptr<HostDiskImage> lower, const overlay::Layer& layer) {
  CowDisk cow(std::move(lower));
  for (const auto& [path, entry] : layer.entries()) {
    if (path.rfind("/block/", 0) != 0) fail(Errc::kBadFormat, "unexpected path in cow layer");
    std::size_t i = std::stoull(path.substr(7));
    cow.write(i, entry.content);
  }
  return cow;
}

// Repair --------------------------------------------------------------------

std::size_t repair_delta_bytes(OsLabel os, std::size_t block_size) {
  double mib = 0;
  switch (os) {
    case OsLabel::kWindowsVista: mib = 4.9; break;
    case OsLabel::kWindows7: mib = 4.5; break;
    case OsLabel::kWindows8: mib = 14.0; break;
    case OsLabel::kLinux: return 0;
  }
  auto bytes = static_cast<std::size_t>(std::ceil(mib * 1024 * 1024));
  return (bytes + block_size - 1) / block_size * block_size;
}

void apply_repair(CowDisk& cow) {
  const HostDiskImage& disk = cow.lower();
  if (!is_windows(disk.os())) fail(Errc::kNotApplicable, "repair applies to Windows images only");
  std::size_t bs = disk.block_size();
  std::size_t blocks = repair_delta_bytes(disk.os(), bs) / bs;
  if (blocks > disk.block_count()) fail(Errc::kInvalidArgument, "disk too small for repair delta");
  cow.write(0, config_block(disk.os(), DriverProfile::kVirtual, bs));
  std::string material = "repair/" + std::string(os_name(disk.os()));
  Bytes buf(bs);
  for (std::size_t i = 1; i < blocks; ++i) {
    keystream(as_bytes(material), i, buf);
    cow.write(i, buf);
  }
}

CowDisk repair_os(std::shared_ptr<HostDiskImage> disk) {
  if (!disk) fail(Errc::kInvalidArgument, "no disk");
  if (!is_windows(disk->os()) || disk->installed_profile() != DriverProfile::kBareMetal) {
    fail(Errc::kNotApplicable, "repair applies to bare-metal Windows images only");
  }
  CowDisk cow(std::move(disk));
  apply_repair(cow);
  return cow;
}

}  // namespace nymkit::hostnym
