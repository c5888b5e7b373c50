#pragma once

// The toy end-to-end run: invert z_0, replay the edit through the controlled
// sampler and compare against an uncontrolled baseline.

#include <cstdint>
#include <optional>
#include <string>
#include <string_view>

#include <json.hpp>

#include "dragfield/correspondence.hpp"
#include "dragfield/io_formats.hpp"
#include "dragfield/pipeline.hpp"
#include "dragfield/toy_model.hpp"

namespace dragfield {

struct SimulationRequest {
  DragPlan plan;
  std::uint64_t seed = 0;
  SamplerConfig sampler;
  std::string prompt;
  /// Synthesized from the seed when absent. Must match the plan grid.
  std::optional<LatentGrid> z0;
};

struct SimulationResult {
  LatentGrid z0;
  LatentGrid z_t;
  /// Controlled sample from the warped latent.
  LatentGrid output;
  /// Uncontrolled sample from z_T.
  LatentGrid baseline;
  CorrespondenceResult correspondence;
  nlohmann::json metrics;
};

/// Seeded N(0, 1) latent.
LatentGrid synthesize_latent(const GridSpec& grid, int channels, std::uint64_t seed);

/// Throws BadConfig on an invalid sampler, ShapeMismatch on a z_0 of the
/// wrong grid, and geometry errors from the plan.
SimulationResult simulate(const SimulationRequest& request);

/// Per-cell ||output - baseline|| as a grayscale P6 image. Values are scaled
/// by the mean per-cell norm of the baseline, so an unchanged output is black.
std::string difference_heatmap_ppm(const LatentGrid& output, const LatentGrid& baseline);

}  // namespace dragfield
