#include "nymkit/sanivm/media.h"

#include <algorithm>

#include "nymkit/common/error.h"

namespace nymkit::sanivm {
namespace {

constexpr std::uint32_t kMaxDimension = 1 << 14;

bool has_magic(ByteView b, std::string_view magic) {
  return b.size() >= magic.size() && to_string(b.first(magic.size())) == magic;
}

void write_tags(Writer& w, const std::map<std::string, std::string>& tags) {
  w.u32(static_cast<std::uint32_t>(tags.size()));
  for (const auto& [k, v] : tags) {
    w.str(k);
    w.str(v);
  }
}

std::map<std::string, std::string> read_tags(Reader& r) {
  std::map<std::string, std::string> tags;
  std::uint32_t n = r.u32();
  for (std::uint32_t i = 0; i < n; ++i) {
    std::string k = r.str();
    tags[k] = r.str();
  }
  return tags;
}

}  // namespace

std::string_view kind_name(MediaKind kind) {
  switch (kind) {
    case MediaKind::kImage: return "Image";
    case MediaKind::kDocument: return "Document";
    case MediaKind::kImageSequence: return "ImageSequence";
    case MediaKind::kUnknown: return "Unknown";
  }
  return "?";
}

MediaKind detect_kind(ByteView payload) {
  if (has_magic(payload, kImageMagic)) return MediaKind::kImage;
  if (has_magic(payload, kDocumentMagic)) return MediaKind::kDocument;
  if (has_magic(payload, kSequenceMagic)) return MediaKind::kImageSequence;
  return MediaKind::kUnknown;
}

Bytes Image::encode() const {
  Writer w;
  w.raw(kImageMagic);
  w.u32(width);
  w.u32(height);
  write_tags(w, metadata);
  w.u32(static_cast<std::uint32_t>(regions.size()));
  for (const auto& r : regions) {
    w.u32(r.x);
    w.u32(r.y);
    w.u32(r.w);
    w.u32(r.h);
  }
  w.raw(rgb);
  return w.take();
}

Image Image::decode(ByteView bytes) {
  if (!has_magic(bytes, kImageMagic)) fail(Errc::kBadFormat, "not an image");
  Reader r(bytes.subspan(kImageMagic.size()));
  Image img;
  img.width = r.u32();
  img.height = r.u32();
  if (img.width > kMaxDimension || img.height > kMaxDimension) {
    fail(Errc::kBadFormat, "image too large");
  }
  img.metadata = read_tags(r);
  std::uint32_t n = r.u32();
  for (std::uint32_t i = 0; i < n; ++i) {
    Rect rect{r.u32(), r.u32(), r.u32(), r.u32()};
    if (std::uint64_t{rect.x} + rect.w > img.width || std::uint64_t{rect.y} + rect.h > img.height) {
      fail(Errc::kBadFormat, "region outside image");
    }
    img.regions.push_back(rect);
  }
  std::size_t px = std::size_t{img.width} * img.height * 3;
  if (r.remaining() != px) fail(Errc::kBadFormat, "pixel data size mismatch");
  ByteView data = r.raw(px);
  img.rgb.assign(data.begin(), data.end());
  return img;
}

Bytes Document::encode() const {
  Writer w;
  w.raw(kDocumentMagic);
  write_tags(w, metadata);
  w.u32(static_cast<std::uint32_t>(pages.size()));
  for (const auto& p : pages) w.str(p);
  return w.take();
}

Document Document::decode(ByteView bytes) {
  if (!has_magic(bytes, kDocumentMagic)) fail(Errc::kBadFormat, "not a document");
  Reader r(bytes.subspan(kDocumentMagic.size()));
  Document d;
  d.metadata = read_tags(r);
  std::uint32_t n = r.u32();
  for (std::uint32_t i = 0; i < n; ++i) d.pages.push_back(r.str());
  if (!r.done()) fail(Errc::kBadFormat, "trailing bytes after document");
  return d;
}

Bytes encode_sequence(const std::vector<Image>& images) {
  Writer w;
  w.raw(kSequenceMagic);
  w.u32(static_cast<std::uint32_t>(images.size()));
  for (const auto& img : images) w.blob(img.encode());
  return w.take();
}

std::vector<Image> decode_sequence(ByteView bytes) {
  if (!has_magic(bytes, kSequenceMagic)) fail(Errc::kBadFormat, "not an image sequence");
  Reader r(bytes.subspan(kSequenceMagic.size()));
  std::vector<Image> out;
  std::uint32_t n = r.u32();
  for (std::uint32_t i = 0; i < n; ++i) out.push_back(Image::decode(r.blob()));
  if (!r.done()) fail(Errc::kBadFormat, "trailing bytes after sequence");
  return out;
}

MediaFile MediaFile::from_bytes(std::string name, Bytes payload) {
  MediaFile f;
  f.name = std::move(name);
  f.kind = detect_kind(payload);
  switch (f.kind) {
    case MediaKind::kImage: {
      Image img = Image::decode(payload);
      f.metadata = std::move(img.metadata);
      f.regions = std::move(img.regions);
      break;
    }
    case MediaKind::kDocument:
      f.metadata = Document::decode(payload).metadata;
      break;
    case MediaKind::kImageSequence:
      for (auto& img : decode_sequence(payload)) {
        f.metadata.merge(img.metadata);
        f.regions.insert(f.regions.end(), img.regions.begin(), img.regions.end());
      }
      break;
    case MediaKind::kUnknown:
      break;
  }
  f.payload = std::move(payload);
  return f;
}

}  // namespace nymkit::sanivm
