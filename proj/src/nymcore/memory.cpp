#include "nymkit/nymcore/memory.h"

#include <algorithm>

#include "nymkit/common/error.h"

namespace nymkit::nymcore {

std::size_t HostArena::allocate() {
  if (!free_.empty()) {
    std::size_t f = free_.back();
    free_.pop_back();
    return f;
  }
  frames_.emplace_back();
  frames_.back().fill(0);
  return frames_.size() - 1;
}

void HostArena::release(std::size_t frame) { free_.push_back(frame); }

void HostArena::dump(Writer& out) const {
  out.u64(frames_.size());
  for (const auto& f : frames_) out.raw(f);
}

VmMemory::VmMemory(VmMemory&& other) noexcept
    : arena_(other.arena_),
      page_count_(other.page_count_),
      table_(std::move(other.table_)),
      cache_cursor_(other.cache_cursor_) {
  other.table_.clear();
}

VmMemory::~VmMemory() { secure_erase(); }

void VmMemory::write(std::uint64_t address, ByteView data) {
  if (address + data.size() > page_count_ * kPageSize || address + data.size() < address) {
    fail(Errc::kOutOfRange, "write past end of guest memory");
  }
  std::size_t done = 0;
  while (done < data.size()) {
    std::uint64_t a = address + done;
    std::size_t page = a / kPageSize;
    std::size_t off = a % kPageSize;
    std::size_t n = std::min(kPageSize - off, data.size() - done);
    auto it = table_.find(page);
    if (it == table_.end()) it = table_.emplace(page, arena_->allocate()).first;
    std::copy_n(data.begin() + done, n, arena_->frame(it->second).begin() + off);
    done += n;
  }
}

Bytes VmMemory::read(std::uint64_t address, std::size_t length) const {
  if (address + length > page_count_ * kPageSize) {
    fail(Errc::kOutOfRange, "read past end of guest memory");
  }
  Bytes out(length, 0);
  std::size_t done = 0;
  while (done < length) {
    std::uint64_t a = address + done;
    std::size_t page = a / kPageSize;
    std::size_t off = a % kPageSize;
    std::size_t n = std::min(kPageSize - off, length - done);
    if (auto it = table_.find(page); it != table_.end()) {
      const Page& f = arena_->frame(it->second);
      std::copy_n(f.begin() + off, n, out.begin() + done);
    }
    done += n;
  }
  return out;
}

void VmMemory::cache(ByteView data) {
  std::uint64_t lo = (page_count_ / 2) * kPageSize;
  std::uint64_t span = page_count_ * kPageSize - lo;
  if (span == 0) return;
  std::size_t done = 0;
  while (done < data.size()) {
    std::uint64_t pos = cache_cursor_ % span;
    std::size_t n = std::min<std::uint64_t>(data.size() - done, span - pos);
    write(lo + pos, data.subspan(done, n));
    cache_cursor_ += n;
    done += n;
  }
}

std::map<std::size_t, Digest> VmMemory::resident_digests() const {
  std::map<std::size_t, Digest> out;
  for (const auto& [page, frame] : table_) out.emplace(page, sha256(arena_->frame(frame)));
  return out;
}

void VmMemory::secure_erase() {
  for (const auto& [page, frame] : table_) {
    Page& f = arena_->frame(frame);
    secure_zero(f.data(), f.size());
    arena_->release(frame);
  }
  table_.clear();
}

void VmMemory::release_without_erase() {
  for (const auto& [page, frame] : table_) arena_->release(frame);
  table_.clear();
}

void VmMemory::dump(Writer& out) const {
  out.u64(table_.size());
  for (const auto& [page, frame] : table_) {
    out.u64(page);
    out.raw(arena_->frame(frame));
  }
}

}  // namespace nymkit::nymcore
