#pragma once

// Lattice projection of the displacement field, collision resolution into the
// matching maps (M, A), the four-region partition and the warped initial latent.

#include <cstdint>
#include <optional>
#include <span>
#include <vector>

#include "dragfield/geometry.hpp"

namespace dragfield {

/// height x width x channels, row-major, channel fastest.
class LatentGrid {
 public:
  LatentGrid(GridSpec grid, int channels);
  LatentGrid(GridSpec grid, int channels, std::vector<float> values);

  const GridSpec& grid() const { return grid_; }
  int channels() const { return channels_; }

  std::span<float> at(Cell c) { return {values_.data() + offset(c), std::size_t(channels_)}; }
  std::span<const float> at(Cell c) const {
    return {values_.data() + offset(c), std::size_t(channels_)};
  }

  std::vector<float>& values() { return values_; }
  const std::vector<float>& values() const { return values_; }

  friend bool operator==(const LatentGrid&, const LatentGrid&) = default;

 private:
  std::size_t offset(Cell c) const { return grid_.index(c) * std::size_t(channels_); }

  GridSpec grid_;
  int channels_;
  std::vector<float> values_;
};

enum class Region : std::uint8_t { Background = 0, Destination = 1, Inpaint = 2, Transition = 3 };

/// Four disjoint cell sets covering the grid, stored as one label per cell.
class RegionPartition {
 public:
  /// All background.
  explicit RegionPartition(GridSpec grid);
  RegionPartition(GridSpec grid, std::vector<Region> labels);

  const GridSpec& grid() const { return grid_; }
  Region label(Cell c) const { return labels_[grid_.index(c)]; }
  std::span<const Region> labels() const { return labels_; }

  std::vector<Cell> cells(Region r) const;
  std::size_t count(Region r) const;

  friend bool operator==(const RegionPartition&, const RegionPartition&) = default;

 private:
  GridSpec grid_;
  std::vector<Region> labels_;
};

struct Match {
  Cell destination;
  Cell source;
  /// min(1, alpha) of the winning source.
  double weight = 0.0;

  friend bool operator==(const Match&, const Match&) = default;
};

/// Matching point map M and weight map A, defined on the destination set.
class MatchingMaps {
 public:
  explicit MatchingMaps(GridSpec grid);
  /// Matches must have distinct, in-grid destinations.
  MatchingMaps(GridSpec grid, std::vector<Match> matches);

  const GridSpec& grid() const { return grid_; }
  /// Sorted by destination, row-major.
  const std::vector<Match>& matches() const { return matches_; }
  bool empty() const { return matches_.empty(); }

  std::optional<Cell> source(Cell destination) const;
  std::optional<double> weight(Cell destination) const;
  std::vector<Cell> destinations() const;

  friend bool operator==(const MatchingMaps& a, const MatchingMaps& b) {
    return a.grid_ == b.grid_ && a.matches_ == b.matches_;
  }

 private:
  GridSpec grid_;
  std::vector<Match> matches_;
  std::vector<std::int32_t> lookup_;  // cell index -> match index or -1
};

struct CollisionResult {
  MatchingMaps maps;
  /// Set when every destination fell off the grid; maps are empty then.
  bool empty_destination = false;
};

/// P* = in-bounds projections of p + v; each destination keeps the source with
/// the largest alpha (ties: lowest row-major source index).
CollisionResult resolve_collisions(const DisplacementField& field);

/// dst as given; inp = editable cells not in dst; trans = cells within
/// Chebyshev distance trans_width of dst or inp that are in neither; bg = rest.
RegionPartition partition_regions(const EditableMask& mask, std::span<const Cell> destinations,
                                  int trans_width);

/// dst copies z_T at M(x); inp draws N(0, 1) keyed by (noise_seed, cell, channel);
/// bg and trans keep z_T.
LatentGrid build_warped_latent(const LatentGrid& z_t, const RegionPartition& partition,
                               const MatchingMaps& maps, std::uint64_t noise_seed);

/// Noise value used for one inpainted cell channel.
float inpaint_noise(std::uint64_t noise_seed, std::size_t cell_index, int channel);

struct CorrespondencePlan {
  RegionPartition partition;
  MatchingMaps maps;
  LatentGrid warped;
  std::uint64_t noise_seed = 0;
};

}  // namespace dragfield
