#pragma once

#include <array>
#include <cstddef>
#include <cstdint>
#include <map>
#include <vector>

#include "nymkit/common/bytes.h"
#include "nymkit/common/digest.h"

namespace nymkit::nymcore {

inline constexpr std::size_t kPageSize = 4096;
using Page = std::array<std::uint8_t, kPageSize>;

// Host physical memory. Frames are handed out to VMs and returned to a free
// list; a returned frame keeps whatever bytes it held unless the releasing
// side zeroes it, which is exactly the residue secure erase has to remove.
class HostArena {
 public:
  std::size_t allocate();
  void release(std::size_t frame);

  Page& frame(std::size_t i) { return frames_[i]; }
  const Page& frame(std::size_t i) const { return frames_[i]; }
  std::size_t frame_count() const { return frames_.size(); }
  std::size_t free_count() const { return free_.size(); }

  // Every frame, allocated or free.
  void dump(Writer& out) const;

 private:
  std::vector<Page> frames_;
  std::vector<std::size_t> free_;
};

// A VM's guest-physical memory: a sparse page table over host frames.
// Untouched pages read as zero and hold no frame.
class VmMemory {
 public:
  VmMemory(HostArena* arena, std::size_t page_count)
      : arena_(arena), page_count_(page_count) {}
  VmMemory(const VmMemory&) = delete;
  VmMemory& operator=(const VmMemory&) = delete;
  VmMemory(VmMemory&& other) noexcept;
  VmMemory& operator=(VmMemory&&) = delete;
  ~VmMemory();

  std::size_t page_count() const { return page_count_; }
  std::size_t resident_pages() const { return table_.size(); }

  // Writes at a guest byte address. Throws kOutOfRange past the end.
  void write(std::uint64_t address, ByteView data);
  Bytes read(std::uint64_t address, std::size_t length) const;

  // Appends into a ring over the upper half of memory, standing in for the
  // guest page cache.
  void cache(ByteView data);

  // Content digests of resident pages, by guest page number.
  std::map<std::size_t, Digest> resident_digests() const;

  // Zeroes every resident frame, then returns the frames to the arena.
  void secure_erase();
  // Returns frames without zeroing them. Exists so tests can show what
  // secure_erase prevents.
  void release_without_erase();

  void dump(Writer& out) const;

 private:
  HostArena* arena_;
  std::size_t page_count_;
  std::map<std::size_t, std::size_t> table_;  // guest page -> host frame
  std::uint64_t cache_cursor_ = 0;
};

}  // namespace nymkit::nymcore
