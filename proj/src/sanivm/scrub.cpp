#include "nymkit/sanivm/scrub.h"

#include <algorithm>
#include <cctype>
#include <map>
#include <random>

#include "nymkit/common/error.h"

namespace nymkit::sanivm {
namespace {

std::string lower(std::string_view s) {
  std::string out(s);
  std::transform(out.begin(), out.end(), out.begin(),
                 [](unsigned char c) { return std::tolower(c); });
  return out;
}

bool image_like(MediaKind k) { return k == MediaKind::kImage || k == MediaKind::kImageSequence; }

bool applies(Transform t, MediaKind k) {
  switch (t) {
    case Transform::kStripMetadata: return k != MediaKind::kUnknown;
    case Transform::kBlurRegions:
    case Transform::kNoiseDownscale: return image_like(k);
    case Transform::kRasterizeDocument: return k == MediaKind::kDocument;
  }
  return false;
}

void blur_regions(Image& img) {
  for (const auto& r : img.regions) {
    if (r.w == 0 || r.h == 0) continue;
    std::uint64_t sum[3] = {0, 0, 0};
    for (std::uint32_t y = r.y; y < r.y + r.h; ++y) {
      for (std::uint32_t x = r.x; x < r.x + r.w; ++x) {
        for (int c = 0; c < 3; ++c) sum[c] += img.pixel(x, y)[c];
      }
    }
    std::uint64_t n = std::uint64_t{r.w} * r.h;
    for (std::uint32_t y = r.y; y < r.y + r.h; ++y) {
      for (std::uint32_t x = r.x; x < r.x + r.w; ++x) {
        for (int c = 0; c < 3; ++c) img.pixel(x, y)[c] = static_cast<std::uint8_t>(sum[c] / n);
      }
    }
  }
  img.regions.clear();
}

// Halves both dimensions by 2x2 averaging, then adds uniform noise.
void noise_downscale(Image& img, std::uint8_t amplitude, std::mt19937_64& rng) {
  std::uint32_t w = std::max<std::uint32_t>(1, img.width / 2);
  std::uint32_t h = std::max<std::uint32_t>(1, img.height / 2);
  Image out;
  out.width = w;
  out.height = h;
  out.metadata = img.metadata;
  out.rgb.resize(std::size_t{w} * h * 3);
  std::uniform_int_distribution<int> noise(-amplitude, amplitude);
  for (std::uint32_t y = 0; y < h; ++y) {
    for (std::uint32_t x = 0; x < w; ++x) {
      for (int c = 0; c < 3; ++c) {
        int sum = 0, n = 0;
        for (std::uint32_t dy = 0; dy < 2; ++dy) {
          for (std::uint32_t dx = 0; dx < 2; ++dx) {
            std::uint32_t sx = 2 * x + dx, sy = 2 * y + dy;
            if (sx < img.width && sy < img.height) {
              sum += img.pixel(sx, sy)[c];
              ++n;
            }
          }
        }
        int v = (n ? sum / n : 0) + noise(rng);
        out.pixel(x, y)[c] = static_cast<std::uint8_t>(std::clamp(v, 0, 255));
      }
    }
  }
  for (const auto& r : img.regions) {
    Rect s{r.x / 2, r.y / 2, std::max<std::uint32_t>(1, r.w / 2), std::max<std::uint32_t>(1, r.h / 2)};
    s.w = std::min(s.w, w - std::min(s.x, w));
    s.h = std::min(s.h, h - std::min(s.y, h));
    if (s.x < w && s.y < h && s.w && s.h) out.regions.push_back(s);
  }
  img = std::move(out);
}

constexpr std::uint32_t kCols = 64;
constexpr std::uint32_t kCellW = 6;
constexpr std::uint32_t kCellH = 8;

// Renders each character as a 5x7 dot pattern derived from its code. The
// result carries pixels only; no character codes survive.
Image rasterize_page(const std::string& text) {
  std::vector<std::string> lines(1);
  for (char ch : text) {
    if (ch == '\n' || lines.back().size() == kCols) lines.emplace_back();
    if (ch != '\n') lines.back().push_back(ch);
  }
  Image img;
  img.width = kCols * kCellW;
  img.height = static_cast<std::uint32_t>(lines.size()) * kCellH;
  img.rgb.assign(std::size_t{img.width} * img.height * 3, 255);
  for (std::size_t row = 0; row < lines.size(); ++row) {
    for (std::size_t col = 0; col < lines[row].size(); ++col) {
      auto c = static_cast<unsigned char>(lines[row][col]);
      if (c == ' ') continue;
      std::uint64_t bits = (c + 1) * 0x9E3779B97F4A7C15ull;
      for (std::uint32_t dy = 0; dy < 7; ++dy) {
        for (std::uint32_t dx = 0; dx < 5; ++dx) {
          if (!((bits >> (dy * 5 + dx)) & 1)) continue;
          auto* p = img.pixel(static_cast<std::uint32_t>(col) * kCellW + dx,
                              static_cast<std::uint32_t>(row) * kCellH + dy);
          p[0] = p[1] = p[2] = 0;
        }
      }
    }
  }
  return img;
}

}  // namespace

std::string_view severity_name(Severity s) {
  switch (s) {
    case Severity::kHigh: return "High";
    case Severity::kMedium: return "Medium";
    case Severity::kLow: return "Low";
  }
  return "?";
}

nlohmann::json RiskFinding::to_json() const {
  return {{"field", field}, {"severity", severity_name(severity)}, {"rationale", rationale}};
}

std::vector<MetadataRule> RiskPolicy::default_rules() {
  return {
      {"gps*", Severity::kHigh, "geolocation reveals where the file was made"},
      {"serial*", Severity::kHigh, "device serial number links files to one device"},
      {"device_id", Severity::kHigh, "device identifier links files to one device"},
      {"bodyserial*", Severity::kHigh, "camera body serial number"},
      {"author", Severity::kMedium, "names the author"},
      {"creator", Severity::kMedium, "names the creating user or tool owner"},
      {"owner*", Severity::kMedium, "names the owner"},
      {"datetime*", Severity::kLow, "timestamps can correlate activity"},
      {"timestamp*", Severity::kLow, "timestamps can correlate activity"},
      {"created", Severity::kLow, "timestamps can correlate activity"},
      {"modified", Severity::kLow, "timestamps can correlate activity"},
  };
}

const MetadataRule* RiskPolicy::match(std::string_view key) const {
  std::string k = lower(key);
  for (const auto& r : rules) {
    std::string p = lower(r.pattern);
    if (!p.empty() && p.back() == '*') {
      p.pop_back();
      if (k.rfind(p, 0) == 0) return &r;
    } else if (k == p) {
      return &r;
    }
  }
  return nullptr;
}

std::vector<RiskFinding> analyze(const MediaFile& file, const RiskPolicy& policy) {
  std::vector<RiskFinding> out;
  if (file.kind == MediaKind::kUnknown) {
    out.push_back({"format", Severity::kHigh, FindingClass::kFormat,
                   "unrecognized format: contents cannot be inspected"});
    return out;
  }
  std::map<const MetadataRule*, std::vector<std::string>> hits;
  for (const auto& [key, value] : file.metadata) {
    if (const MetadataRule* r = policy.match(key)) hits[r].push_back(key);
  }
  for (const auto& r : policy.rules) {
    auto it = hits.find(&r);
    if (it == hits.end()) continue;
    std::string keys;
    for (const auto& k : it->second) keys += (keys.empty() ? "" : ", ") + k;
    out.push_back({r.pattern, r.severity, FindingClass::kMetadata, r.rationale + " [" + keys + "]"});
  }
  for (std::size_t i = 0; i < file.regions.size(); ++i) {
    out.push_back({"region[" + std::to_string(i) + "]", Severity::kHigh, FindingClass::kRegion,
                   "declared face or identifying region"});
  }
  return out;
}

std::string_view transform_name(Transform t) {
  switch (t) {
    case Transform::kStripMetadata: return "StripMetadata";
    case Transform::kBlurRegions: return "BlurRegions";
    case Transform::kNoiseDownscale: return "NoiseDownscale";
    case Transform::kRasterizeDocument: return "RasterizeDocument";
  }
  return "?";
}

Transform parse_transform(std::string_view name) {
  for (auto t : {Transform::kStripMetadata, Transform::kBlurRegions, Transform::kNoiseDownscale,
                 Transform::kRasterizeDocument}) {
    if (lower(name) == lower(transform_name(t))) return t;
  }
  fail(Errc::kInvalidArgument, "unknown transform: " + std::string(name));
}

ScrubPlan ScrubPlan::paranoia(int level, MediaKind kind) {
  if (level < 0 || level > 2) fail(Errc::kInvalidArgument, "paranoia level must be 0, 1 or 2");
  ScrubPlan p;
  if (kind == MediaKind::kUnknown) return p;
  p.transforms.push_back(Transform::kStripMetadata);
  if (image_like(kind)) {
    if (level >= 1) p.transforms.push_back(Transform::kBlurRegions);
    if (level >= 2) p.transforms.push_back(Transform::kNoiseDownscale);
  } else if (level >= 2) {
    p.transforms.push_back(Transform::kRasterizeDocument);
  }
  return p;
}

nlohmann::json ScrubPlan::to_json() const {
  nlohmann::json t = nlohmann::json::array();
  for (auto x : transforms) t.push_back(transform_name(x));
  return {{"transforms", t}, {"noise_amplitude", noise_amplitude}};
}

bool plan_covers(const ScrubPlan& plan, const RiskFinding& finding, MediaKind kind) {
  auto has = [&](Transform t) {
    return std::find(plan.transforms.begin(), plan.transforms.end(), t) != plan.transforms.end();
  };
  switch (finding.cls) {
    case FindingClass::kMetadata:
      return has(Transform::kStripMetadata) ||
             (kind == MediaKind::kDocument && has(Transform::kRasterizeDocument));
    case FindingClass::kRegion:
      return has(Transform::kBlurRegions);
    case FindingClass::kFormat:
      return false;
  }
  return false;
}

MediaFile scrub(const MediaFile& file, const ScrubPlan& plan) {
  for (auto t : plan.transforms) {
    if (!applies(t, file.kind)) {
      fail(Errc::kKindMismatch, std::string(transform_name(t)) + " does not apply to " +
                                    std::string(kind_name(file.kind)));
    }
  }
  if (plan.transforms.empty()) return file;

  std::mt19937_64 rng(plan.noise_seed);
  auto apply_image = [&](Image& img, Transform t) {
    switch (t) {
      case Transform::kStripMetadata: img.metadata.clear(); break;
      case Transform::kBlurRegions: blur_regions(img); break;
      case Transform::kNoiseDownscale: noise_downscale(img, plan.noise_amplitude, rng); break;
      case Transform::kRasterizeDocument: break;
    }
  };

  Bytes payload;
  switch (file.kind) {
    case MediaKind::kImage: {
      Image img = Image::decode(file.payload);
      for (auto t : plan.transforms) apply_image(img, t);
      payload = img.encode();
      break;
    }
    case MediaKind::kImageSequence: {
      auto frames = decode_sequence(file.payload);
      for (auto t : plan.transforms) {
        for (auto& f : frames) apply_image(f, t);
      }
      payload = encode_sequence(frames);
      break;
    }
    case MediaKind::kDocument: {
      Document doc = Document::decode(file.payload);
      bool raster = false;
      for (auto t : plan.transforms) {
        if (t == Transform::kStripMetadata) doc.metadata.clear();
        if (t == Transform::kRasterizeDocument) raster = true;
      }
      if (raster) {
        std::vector<Image> pages;
        for (const auto& p : doc.pages) pages.push_back(rasterize_page(p));
        payload = encode_sequence(pages);
      } else {
        payload = doc.encode();
      }
      break;
    }
    case MediaKind::kUnknown:
      return file;
  }
  return MediaFile::from_bytes(file.name, std::move(payload));
}

}  // namespace nymkit::sanivm
