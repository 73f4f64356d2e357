#pragma once

#include <cstdint>
#include <string>
#include <string_view>
#include <vector>

#include <json.hpp>

#include "nymkit/sanivm/media.h"

namespace nymkit::sanivm {

enum class Severity { kHigh, kMedium, kLow };
std::string_view severity_name(Severity s);

enum class FindingClass { kMetadata, kRegion, kFormat };

struct RiskFinding {
  std::string field;  // rule pattern, "region[i]" or "format"
  Severity severity = Severity::kLow;
  FindingClass cls = FindingClass::kMetadata;
  std::string rationale;

  nlohmann::json to_json() const;
};

// A blacklist entry. A pattern ending in '*' matches by prefix; otherwise the
// key must match exactly. Matching ignores case.
struct MetadataRule {
  std::string pattern;
  Severity severity = Severity::kHigh;
  std::string rationale;
};

struct RiskPolicy {
  std::vector<MetadataRule> rules = default_rules();

  static std::vector<MetadataRule> default_rules();
  const MetadataRule* match(std::string_view key) const;
};

// One finding per matching rule (field = the rule's pattern) and per declared
// region. Unknown payloads yield a single High "format" finding only.
std::vector<RiskFinding> analyze(const MediaFile& file, const RiskPolicy& policy = {});

enum class Transform { kStripMetadata, kBlurRegions, kNoiseDownscale, kRasterizeDocument };
std::string_view transform_name(Transform t);
Transform parse_transform(std::string_view name);

struct ScrubPlan {
  std::vector<Transform> transforms;
  // Amplitude of the uniform per-channel noise added by NoiseDownscale.
  std::uint8_t noise_amplitude = 6;
  std::uint64_t noise_seed = 0;

  // Presets: 0 strips metadata; 1 adds region blurring for images; 2 adds
  // noise/downscale for images and rasterizes documents.
  static ScrubPlan paranoia(int level, MediaKind kind);
  nlohmann::json to_json() const;
};

// Applies the transforms in order. Throws kKindMismatch if one does not apply
// to the file's kind. StripMetadata drops every key, blacklisted or not.
MediaFile scrub(const MediaFile& file, const ScrubPlan& plan);

// True if applying `plan` to a file of `kind` removes the finding.
bool plan_covers(const ScrubPlan& plan, const RiskFinding& finding, MediaKind kind);

}  // namespace nymkit::sanivm
