#pragma once

#include <cstdint>
#include <map>
#include <string>
#include <string_view>
#include <vector>

#include "nymkit/common/bytes.h"

namespace nymkit::sanivm {

// Fixture formats (integers big-endian):
//
//   image     "NYMIMG1\0", u32 width, u32 height,
//             u32 n, (str key, str value)*n,
//             u32 r, (u32 x, u32 y, u32 w, u32 h)*r   declared sensitive regions
//             width*height*3 bytes of RGB
//   document  "NYMDOC1\0", u32 n, (str key, str value)*n, u32 pages, str*pages
//   raster    "NYMSEQ1\0", u32 count, (u32 len, image)*count
//
// str is a u32 length followed by the bytes.
enum class MediaKind { kImage, kDocument, kImageSequence, kUnknown };

std::string_view kind_name(MediaKind kind);

inline constexpr std::string_view kImageMagic{"NYMIMG1\0", 8};
inline constexpr std::string_view kDocumentMagic{"NYMDOC1\0", 8};
inline constexpr std::string_view kSequenceMagic{"NYMSEQ1\0", 8};

// Decided from the leading magic bytes only.
MediaKind detect_kind(ByteView payload);

struct Rect {
  std::uint32_t x = 0;
  std::uint32_t y = 0;
  std::uint32_t w = 0;
  std::uint32_t h = 0;

  bool operator==(const Rect&) const = default;
};

struct Image {
  std::uint32_t width = 0;
  std::uint32_t height = 0;
  std::map<std::string, std::string> metadata;
  std::vector<Rect> regions;
  Bytes rgb;

  Bytes encode() const;
  // Throws kBadFormat. Regions must lie inside the image.
  static Image decode(ByteView bytes);

  std::uint8_t* pixel(std::uint32_t x, std::uint32_t y) { return &rgb[(y * width + x) * 3]; }
  const std::uint8_t* pixel(std::uint32_t x, std::uint32_t y) const {
    return &rgb[(y * width + x) * 3];
  }
};

struct Document {
  std::map<std::string, std::string> metadata;
  std::vector<std::string> pages;

  Bytes encode() const;
  static Document decode(ByteView bytes);
};

Bytes encode_sequence(const std::vector<Image>& images);
std::vector<Image> decode_sequence(ByteView bytes);

// A file offered for transfer. Metadata and regions are parsed from the
// payload; for sequences they are the union over frames.
struct MediaFile {
  std::string name;
  MediaKind kind = MediaKind::kUnknown;
  Bytes payload;
  std::map<std::string, std::string> metadata;
  std::vector<Rect> regions;

  // Throws kBadFormat when the magic matches but the body does not parse.
  static MediaFile from_bytes(std::string name, Bytes payload);
};

}  // namespace nymkit::sanivm
