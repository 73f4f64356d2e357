#pragma once

#include <cstdint>
#include <filesystem>
#include <map>
#include <memory>
#include <string>
#include <string_view>

#include "nymkit/common/bytes.h"
#include "nymkit/common/digest.h"
#include "nymkit/overlay/layer.h"

namespace nymkit::hostnym {

enum class OsLabel { kLinux, kWindowsVista, kWindows7, kWindows8 };
enum class DriverProfile { kBareMetal, kVirtual };

std::string_view os_name(OsLabel os);
OsLabel parse_os(std::string_view name);
std::string_view profile_name(DriverProfile p);
DriverProfile parse_profile(std::string_view name);
bool is_windows(OsLabel os);

// Raw block image of an installed OS.
//
// File layout (integers big-endian):
//   "NYMKIT-DISK\0"    12-byte magic
//   u16 version        1
//   u8  os_label       0 Linux, 1 Vista, 2 Win7, 3 Win8
//   u8  driver_profile 0 BareMetal, 1 Virtual
//   u32 block_size
//   u64 block_count
//   block_count * block_size bytes
//
// Block 0 is the OS configuration block: "key=value\n" text, zero padded,
// including "driver_profile=<name>". The header's profile describes the image
// as installed; the config block is what a booting OS actually consults.
class HostDiskImage {
 public:
  static constexpr std::string_view kMagic{"NYMKIT-DISK\0", 12};
  static constexpr std::size_t kDefaultBlockSize = 4096;

  // Deterministic synthetic contents.
  static HostDiskImage synthesize(OsLabel os, DriverProfile profile,
                                  std::size_t block_count,
                                  std::string_view seed = "host",
                                  std::size_t block_size = kDefaultBlockSize);
  static HostDiskImage parse(ByteView bytes);
  static HostDiskImage load(const std::filesystem::path& path);

  Bytes serialize() const;
  void save(const std::filesystem::path& path) const;

  OsLabel os() const { return os_; }
  DriverProfile installed_profile() const { return profile_; }
  std::size_t block_size() const { return block_size_; }
  std::size_t block_count() const { return blocks_.size() / block_size_; }

  ByteView block(std::size_t i) const;
  // Direct modification, as when the machine boots its OS natively.
  void write_block(std::size_t i, ByteView data);

  Digest digest() const;

 private:
  OsLabel os_ = OsLabel::kLinux;
  DriverProfile profile_ = DriverProfile::kBareMetal;
  std::size_t block_size_ = kDefaultBlockSize;
  Bytes blocks_;
};

// Config block text for an OS/profile pair, padded to `block_size`.
Bytes config_block(OsLabel os, DriverProfile profile, std::size_t block_size);
// Profile recorded in a config block.
DriverProfile config_profile(ByteView block);

// Block-level copy-on-write view. Reads resolve upper-then-lower; the lower
// image is never written through this object except by merge_into_lower().
class CowDisk {
 public:
  explicit CowDisk(std::shared_ptr<HostDiskImage> lower);

  const HostDiskImage& lower() const { return *lower_; }
  std::shared_ptr<HostDiskImage> shared_lower() const { return lower_; }
  const std::map<std::size_t, Bytes>& upper() const { return upper_; }
  std::size_t upper_bytes() const;

  Bytes read(std::size_t i) const;
  // `data` is zero padded to the block size; longer input throws.
  void write(std::size_t i, ByteView data);

  // Profile the booting OS would see.
  DriverProfile effective_profile() const { return config_profile(read(0)); }

  // Digest of the disk as the VM sees it.
  Digest digest() const;

  // Applies the upper blocks to the lower image and clears the upper layer.
  void merge_into_lower();
  // Zeroes and drops every upper block.
  void wipe_upper();

  // Upper blocks as a layer with one entry per block, "/block/<index>".
  overlay::Layer to_layer(const std::string& id) const;
  static CowDisk from_layer(std::shared_ptr<HostDiskImage> lower,
                            const overlay::Layer& layer);

 private:
  std::shared_ptr<HostDiskImage> lower_;
  std::map<std::size_t, Bytes> upper_;
};

// Size of the modeled repair delta per Windows release (whole blocks).
std::size_t repair_delta_bytes(OsLabel os, std::size_t block_size);

// Returns a COW disk whose upper layer holds the repair delta: the config
// block flipped to the Virtual profile plus deterministic rewritten blocks.
// Applying it to a disk that already carries the delta changes nothing.
// Throws kNotApplicable for Linux or for images already installed Virtual.
CowDisk repair_os(std::shared_ptr<HostDiskImage> disk);
// Applies the repair delta onto an existing COW view.
void apply_repair(CowDisk& cow);

}  // namespace nymkit::hostnym
