#include "dragfield/correspondence.hpp"

#include <algorithm>
#include <cmath>
#include <limits>
#include <string>

#include <spdlog/spdlog.h>

#include "dragfield/errors.hpp"
#include "dragfield/random.hpp"

namespace dragfield {

LatentGrid::LatentGrid(GridSpec grid, int channels)
    : LatentGrid(grid, channels, std::vector<float>(grid.cells() * std::size_t(std::max(channels, 0)))) {}

LatentGrid::LatentGrid(GridSpec grid, int channels, std::vector<float> values)
    : grid_(grid), channels_(channels), values_(std::move(values)) {
  if (channels <= 0) throw Error(ErrorKind::ShapeMismatch, "latent needs at least one channel");
  if (values_.size() != grid.cells() * std::size_t(channels)) {
    throw Error(ErrorKind::ShapeMismatch, "latent payload has " + std::to_string(values_.size()) +
                                              " values, expected " +
                                              std::to_string(grid.cells() * channels));
  }
}

RegionPartition::RegionPartition(GridSpec grid)
    : grid_(grid), labels_(grid.cells(), Region::Background) {}

RegionPartition::RegionPartition(GridSpec grid, std::vector<Region> labels)
    : grid_(grid), labels_(std::move(labels)) {
  if (labels_.size() != grid.cells()) {
    throw Error(ErrorKind::ShapeMismatch, "partition label count does not match grid");
  }
}

std::vector<Cell> RegionPartition::cells(Region r) const {
  std::vector<Cell> out;
  for (std::size_t i = 0; i < labels_.size(); ++i) {
    if (labels_[i] == r) out.push_back(grid_.cell_at(i));
  }
  return out;
}

std::size_t RegionPartition::count(Region r) const {
  return static_cast<std::size_t>(std::count(labels_.begin(), labels_.end(), r));
}

MatchingMaps::MatchingMaps(GridSpec grid) : grid_(grid), lookup_(grid.cells(), -1) {}

MatchingMaps::MatchingMaps(GridSpec grid, std::vector<Match> matches)
    : grid_(grid), matches_(std::move(matches)), lookup_(grid.cells(), -1) {
  std::sort(matches_.begin(), matches_.end(), [&](const Match& a, const Match& b) {
    return grid_.index(a.destination) < grid_.index(b.destination);
  });
  for (std::size_t i = 0; i < matches_.size(); ++i) {
    const Match& m = matches_[i];
    if (!grid_.contains(m.destination) || !grid_.contains(m.source)) {
      throw Error(ErrorKind::ShapeMismatch, "match cell outside grid");
    }
    auto& slot = lookup_[grid_.index(m.destination)];
    if (slot != -1) throw Error(ErrorKind::ShapeMismatch, "duplicate destination in matches");
    slot = static_cast<std::int32_t>(i);
  }
}

std::optional<Cell> MatchingMaps::source(Cell destination) const {
  if (!grid_.contains(destination)) return std::nullopt;
  const auto slot = lookup_[grid_.index(destination)];
  if (slot < 0) return std::nullopt;
  return matches_[std::size_t(slot)].source;
}

std::optional<double> MatchingMaps::weight(Cell destination) const {
  if (!grid_.contains(destination)) return std::nullopt;
  const auto slot = lookup_[grid_.index(destination)];
  if (slot < 0) return std::nullopt;
  return matches_[std::size_t(slot)].weight;
}

std::vector<Cell> MatchingMaps::destinations() const {
  std::vector<Cell> out;
  out.reserve(matches_.size());
  for (const auto& m : matches_) out.push_back(m.destination);
  return out;
}

CollisionResult resolve_collisions(const DisplacementField& field) {
  const GridSpec& grid = field.grid;
  constexpr std::size_t kNone = std::numeric_limits<std::size_t>::max();
  std::vector<std::size_t> winner(grid.cells(), kNone);

  // Field entries are row-major, so scanning in order with a strict '>' keeps
  // the lowest source index on equal alpha.
  for (std::size_t j = 0; j < field.entries.size(); ++j) {
    const FieldEntry& e = field.entries[j];
    const ProjectedCell dst = project(to_point(e.cell) + e.displacement, grid);
    if (!dst.in_bounds) continue;
    std::size_t& w = winner[grid.index(dst.cell)];
    if (w == kNone || e.alpha_value() > field.entries[w].alpha_value()) w = j;
  }

  std::vector<Match> matches;
  for (std::size_t i = 0; i < winner.size(); ++i) {
    if (winner[i] == kNone) continue;
    const FieldEntry& e = field.entries[winner[i]];
    matches.push_back({grid.cell_at(i), e.cell, e.alpha_infinite ? 1.0 : std::min(1.0, e.alpha)});
  }

  CollisionResult result{MatchingMaps(grid, std::move(matches)), false};
  if (result.maps.empty() && !field.entries.empty()) {
    result.empty_destination = true;
    spdlog::warn("EmptyDestination: every displaced cell left the grid");
  }
  return result;
}

RegionPartition partition_regions(const EditableMask& mask, std::span<const Cell> destinations,
                                  int trans_width) {
  const GridSpec& grid = mask.grid();
  if (trans_width < 0) throw Error(ErrorKind::BadConfig, "trans_width must be >= 0");
  std::vector<Region> labels(grid.cells(), Region::Background);

  for (const Cell& c : destinations) labels[grid.index(c)] = Region::Destination;
  for (std::size_t i = 0; i < labels.size(); ++i) {
    if (mask.bits()[i] && labels[i] != Region::Destination) labels[i] = Region::Inpaint;
  }

  if (trans_width > 0) {
    // Dilate dst ∪ inp with a (2w+1)^2 box, separably: rows first, then columns.
    const int w = grid.width(), h = grid.height();
    std::vector<std::uint8_t> core(grid.cells()), row_pass(grid.cells(), 0);
    for (std::size_t i = 0; i < labels.size(); ++i) core[i] = labels[i] != Region::Background;
    for (int y = 0; y < h; ++y) {
      for (int x = 0; x < w; ++x) {
        if (!core[std::size_t(y) * w + x]) continue;
        const int lo = std::max(0, x - trans_width), hi = std::min(w - 1, x + trans_width);
        for (int xx = lo; xx <= hi; ++xx) row_pass[std::size_t(y) * w + xx] = 1;
      }
    }
    for (int y = 0; y < h; ++y) {
      for (int x = 0; x < w; ++x) {
        if (!row_pass[std::size_t(y) * w + x]) continue;
        const int lo = std::max(0, y - trans_width), hi = std::min(h - 1, y + trans_width);
        for (int yy = lo; yy <= hi; ++yy) {
          Region& r = labels[std::size_t(yy) * w + x];
          if (r == Region::Background) r = Region::Transition;
        }
      }
    }
  }
  return RegionPartition(grid, std::move(labels));
}

float inpaint_noise(std::uint64_t noise_seed, std::size_t cell_index, int channel) {
  const std::uint64_t cell_key = hash_key(noise_seed, cell_index);
  return static_cast<float>(counter_normal(cell_key, static_cast<std::uint64_t>(channel)));
}

LatentGrid build_warped_latent(const LatentGrid& z_t, const RegionPartition& partition,
                               const MatchingMaps& maps, std::uint64_t noise_seed) {
  if (!(z_t.grid() == partition.grid()) || !(maps.grid() == partition.grid())) {
    throw Error(ErrorKind::ShapeMismatch, "latent, partition and maps must share one grid");
  }
  const GridSpec& grid = z_t.grid();
  LatentGrid out = z_t;
  for (std::size_t i = 0; i < grid.cells(); ++i) {
    const Cell x = grid.cell_at(i);
    switch (partition.label(x)) {
      case Region::Destination: {
        const auto src = maps.source(x);
        if (!src) throw Error(ErrorKind::ShapeMismatch, "destination cell without a match");
        const auto from = z_t.at(*src);
        std::copy(from.begin(), from.end(), out.at(x).begin());
        break;
      }
      case Region::Inpaint: {
        auto dst = out.at(x);
        for (int c = 0; c < z_t.channels(); ++c) dst[std::size_t(c)] = inpaint_noise(noise_seed, i, c);
        break;
      }
      case Region::Background:
      case Region::Transition:
        break;
    }
  }
  return out;
}

}  // namespace dragfield
