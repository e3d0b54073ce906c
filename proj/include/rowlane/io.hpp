#pragma once

#include <cstdint>
#include <filesystem>
#include <map>
#include <optional>
#include <span>
#include <string>
#include <string_view>
#include <vector>

#include "rowlane/eval.hpp"
#include "rowlane/grid.hpp"
#include "rowlane/nnet.hpp"

namespace rowlane::io {

// ---------------------------------------------------------------------------
// CULane lane files (".lines.txt")

/// One polyline per text line of whitespace-separated "x y" pairs. Points
/// with x < 0 are padding and dropped; lines left with fewer than two points
/// are dropped. Throws ParseError on odd token counts or non-numeric tokens.
std::vector<Polyline> parse_lane_file(std::string_view text);

/// Inverse of parse_lane_file. Coordinates are written with three decimals,
/// trailing zeros trimmed.
std::string write_lane_file(const std::vector<Polyline>& lanes);

struct CulaneAnnotation {
  std::string frame;
  std::vector<Polyline> lanes;
  std::optional<std::string> category;
};

// ---------------------------------------------------------------------------
// Frame lists

/// One frame per non-blank line (first whitespace token); CRLF is accepted.
std::vector<FrameRef> parse_list_file(std::string_view text, const std::string& category);

/// Maps a split list file name (e.g. "test3_shadow.txt") to its category.
/// Looks the bare file name up in `mapping` first, then in the CULane
/// "testN_<category>.txt" convention; nullopt when neither applies.
std::optional<std::string> category_for_list(const std::filesystem::path& list_file,
                                             const std::map<std::string, std::string>& mapping = {});

/// "<frame without extension>.lines.txt" under `root`.
std::filesystem::path lane_file_for_frame(const std::filesystem::path& root, const std::string& frame);

/// LaneSource reading lane files under `root`; a missing file yields nullopt.
LaneSource directory_lane_source(std::filesystem::path root);

// ---------------------------------------------------------------------------
// Score tensors ("SWLT")

/// Magic "SWLT", u32 version (1), u32 lanes, u32 anchors, u32 classes, then
/// the values as little-endian f32 in (lane, anchor, class) order. Values are
/// narrowed to f32, so a tensor holding f32-representable values round-trips
/// bit-exactly.
std::vector<std::uint8_t> write_score_tensor(const ScoreTensor& scores);
ScoreTensor read_score_tensor(std::span<const std::uint8_t> bytes);

// ---------------------------------------------------------------------------
// Images

/// 8-bit RGB, row-major, interleaved.
struct RgbImage {
  int width = 0;
  int height = 0;
  std::vector<std::uint8_t> pixels;

  std::uint8_t* at(int x, int y) { return pixels.data() + (static_cast<std::size_t>(y) * width + x) * 3; }
  const std::uint8_t* at(int x, int y) const {
    return pixels.data() + (static_cast<std::size_t>(y) * width + x) * 3;
  }
  friend bool operator==(const RgbImage&, const RgbImage&) = default;
};

/// Binary PPM (P6, maxval 255). Comments in the header are skipped.
RgbImage read_ppm(std::span<const std::uint8_t> bytes);
std::vector<std::uint8_t> write_ppm(const RgbImage& image);

/// Bilinear resize with half-pixel centers.
RgbImage resize_bilinear(const RgbImage& image, int width, int height);

/// Scales to [0, 1] and normalizes with the ImageNet channel mean and
/// standard deviation; result is channel-first (3, H, W).
nnet::Tensor3 image_to_tensor(const RgbImage& image);

// ---------------------------------------------------------------------------
// Files

std::vector<std::uint8_t> read_file(const std::filesystem::path& path);
std::string read_text_file(const std::filesystem::path& path);

/// Writes to a sibling temporary file and renames it over `path`, so a failed
/// write never leaves a partial file behind.
void write_file_atomic(const std::filesystem::path& path, std::span<const std::uint8_t> bytes);
void write_file_atomic(const std::filesystem::path& path, std::string_view text);

}  // namespace rowlane::io
