#pragma once

#include <array>
#include <cstdint>
#include <filesystem>
#include <optional>
#include <string>
#include <vector>

#include "json.hpp"

#include "anchorflow/anchor.hpp"
#include "anchorflow/correspondence.hpp"
#include "anchorflow/grid.hpp"
#include "anchorflow/pck.hpp"
#include "anchorflow/synthetic.hpp"

namespace anchorflow::io {

namespace fs = std::filesystem;
using nlohmann::json;

// ---------------------------------------------------------------------------
// Binary feature container
//
//   offset  size  field
//        0     4  magic "MRCF"
//        4     2  version (u16, = 1)
//        6     4  height in cells (u32)
//       10     4  width in cells (u32)
//       14     4  descriptor dim (u32)
//       18     4  stride in pixels (f32)
//       22     2  flags (u16): bit0 normalized, bit1 mask block present
//       24     .  height*width*dim f32 descriptors, row-major
//        .     .  optional height*width mask bytes (0 or 1)
//
// Every multi-byte field is little-endian.

inline constexpr std::uint16_t kFeatureVersion = 1;
inline constexpr std::size_t kFeatureHeaderBytes = 24;
inline constexpr std::uint16_t kFlagNormalized = 1u << 0;
inline constexpr std::uint16_t kFlagMask = 1u << 1;

struct FeatureFile {
  FeatureGrid grid;
  /// Per-cell object mask, empty when the file carries none.
  std::vector<std::uint8_t> mask;

  bool has_mask() const { return !mask.empty(); }
};

std::vector<std::uint8_t> encode_feature_file(const FeatureFile& file);
/// Throws ParseError (kBadMagic, kBadVersion, kTruncated, kDimOverflow,
/// kMaskMismatch, kFormat) with the byte offset of the offending field.
FeatureFile decode_feature_file(const std::vector<std::uint8_t>& bytes);

FeatureFile read_feature_file(const fs::path& path);
void write_feature_file(const FeatureFile& file, const fs::path& path);

// ---------------------------------------------------------------------------
// Files

/// Whole file as bytes; kIo on failure.
std::vector<std::uint8_t> read_bytes(const fs::path& path);
/// Writes to a sibling temporary file and renames it over `path`.
void write_atomic(const fs::path& path, const std::string& contents);
void write_atomic(const fs::path& path, const std::vector<std::uint8_t>& contents);

json read_json(const fs::path& path);
/// Pretty-printed with a trailing newline.
void write_json(const fs::path& path, const json& j);

// ---------------------------------------------------------------------------
// Correspondence JSON

struct ImageSize {
  int height = 0;
  int width = 0;
};

struct CorrespondenceFile {
  std::string src;
  std::string tgt;
  std::optional<ImageSize> src_hw;
  std::optional<ImageSize> tgt_hw;
  /// min x, min y, max x, max y per side.
  std::optional<std::array<double, 4>> bbox_src;
  std::optional<std::array<double, 4>> bbox_tgt;
  CorrespondenceSet pairs;
  std::vector<int> seen;
  std::vector<int> unseen;
  /// Free-form summary carried along on output (null when absent).
  json diagnostics;

  /// Annotated pairs usable as anchors: the seen split when present,
  /// otherwise every pair with annotated provenance.
  CorrespondenceSet anchors() const;
};

/// Validates finiteness, in-image coordinates, split ids and their disjointness.
CorrespondenceFile correspondence_from_json(const json& j);
json correspondence_to_json(const CorrespondenceFile& f);

// ---------------------------------------------------------------------------
// PCK inputs
//
// Predictions: {"images": [{"id": str, "keypoints": [{"id": int, "x", "y"}]}]}
// Annotations: {"images": [{"id": str, "bbox": [x0, y0, x1, y1] (optional),
//                "keypoints": [{"id": int, "x", "y", "split": "seen"|"unseen"}]}]}

struct PckInputs {
  /// Records keyed by split name ("all", "seen", "unseen"), only non-empty ones.
  std::vector<std::pair<std::string, std::vector<PckRecord>>> splits;
};

PckInputs pck_inputs_from_json(const json& predictions, const json& annotations);

// ---------------------------------------------------------------------------
// Scene spec and mining diagnostics

json spec_to_json(const SceneSpec& spec);
/// Unknown keys are rejected; missing keys keep their defaults.
SceneSpec spec_from_json(const json& j);

json diagnostics_to_json(const MiningDiagnostics& d);

}  // namespace anchorflow::io
