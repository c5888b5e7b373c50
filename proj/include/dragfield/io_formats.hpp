#pragma once

// File formats: drag plan JSON, run-length-encoded label arrays, raw f32
// tensors with a JSON sidecar, PGM masks and PPM region images.

#include <array>
#include <cstdint>
#include <filesystem>
#include <span>
#include <string>
#include <string_view>
#include <vector>

#include <json.hpp>

#include "dragfield/correspondence.hpp"
#include "dragfield/geometry.hpp"

namespace dragfield {

inline constexpr int kFormatVersion = 1;

/// The user's full edit intent.
struct DragPlan {
  GridSpec grid{2, 2};
  EditMode mode = EditMode::Drag;
  ScaleVector scale;
  EditableMask mask{GridSpec{2, 2}};
  std::vector<DragInstruction> instructions;
  int trans_width = 2;
  std::uint64_t noise_seed = 0;

  friend bool operator==(const DragPlan&, const DragPlan&) = default;
};

/// Validates against the plan schema; unknown fields are rejected. A string
/// mask is a PGM path resolved against base_dir. Throws ParseError.
DragPlan parse_drag_plan(std::string_view bytes, const std::filesystem::path& base_dir = {});
DragPlan parse_drag_plan_json(const nlohmann::json& doc,
                               const std::filesystem::path& base_dir = {});

/// Serializes with an inline RLE mask.
nlohmann::json drag_plan_to_json(const DragPlan& plan);

/// Stable formatting used for every JSON artifact.
std::string dump_json(const nlohmann::json& doc);

/// Row-major labels as [[label, run_length], ...].
nlohmann::json encode_rle(std::span<const std::uint8_t> labels);
/// Throws ParseError (at `pointer`) on malformed runs, labels above
/// max_label or a total length different from `expected`.
std::vector<std::uint8_t> decode_rle(const nlohmann::json& runs, std::size_t expected,
                                     int max_label, const std::string& pointer);

struct Tensor {
  std::vector<std::int64_t> shape;
  std::vector<float> data;

  friend bool operator==(const Tensor&, const Tensor&) = default;
};

/// Writes `path` (little-endian f32 payload) and `path` + ".json" (sidecar).
void write_tensor(const std::filesystem::path& path, const Tensor& tensor);
/// Throws CorruptTensor when the payload length disagrees with the shape.
Tensor read_tensor(const std::filesystem::path& path);
std::filesystem::path tensor_sidecar_path(const std::filesystem::path& path);

Tensor latent_to_tensor(const LatentGrid& latent);
/// Expects shape [height, width, channels].
LatentGrid tensor_to_latent(const Tensor& tensor);

/// Binary (P5) or ASCII (P2) PGM; any nonzero sample is editable.
EditableMask read_pgm_mask(const std::filesystem::path& path, const GridSpec& grid);
void write_pgm_mask(const std::filesystem::path& path, const EditableMask& mask);

using Rgb = std::array<std::uint8_t, 3>;
Rgb region_color(Region region);
/// Color used for destination cells won by an odd-numbered instruction.
inline constexpr Rgb kAlternateDestinationColor{60, 90, 220};

/// Binary P6 image, one pixel per cell. When `destination_instruction` is
/// given (one entry per cell, -1 where unused), destinations of odd
/// instructions are drawn in the alternate color.
std::string encode_region_ppm(const RegionPartition& partition,
                              std::span<const int> destination_instruction = {});
void write_region_viz(const RegionPartition& partition, const std::filesystem::path& path,
                      std::span<const int> destination_instruction = {});

std::string read_file(const std::filesystem::path& path);
void write_file(const std::filesystem::path& path, std::string_view bytes);

}  // namespace dragfield
