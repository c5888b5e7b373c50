#include "dragfield/attention_control.hpp"

#include <algorithm>
#include <cmath>
#include <cstring>
#include <string>

#include "dragfield/errors.hpp"
#include "dragfield/random.hpp"

namespace dragfield {

HeadLayout make_head_layout(int dim, int heads) {
  if (heads <= 0 || dim <= 0 || dim % heads != 0) {
    throw Error(ErrorKind::BadHeadDim, "model dim " + std::to_string(dim) +
                                           " does not split into " + std::to_string(heads) +
                                           " heads");
  }
  const int head_dim = dim / heads;
  if (head_dim % 4 != 0) {
    throw Error(ErrorKind::BadHeadDim,
                "head dim " + std::to_string(head_dim) + " is not divisible by 4");
  }
  return {heads, head_dim};
}

template <class T>
void rope_encode_inplace(std::span<T> token, Cell position, int head_dim) {
  if (head_dim <= 0 || head_dim % 4 != 0 || token.size() % std::size_t(head_dim) != 0) {
    throw Error(ErrorKind::BadHeadDim, "rotary layout needs head dim divisible by 4, got " +
                                           std::to_string(head_dim));
  }
  const int half = head_dim / 2;
  const int pairs = head_dim / 4;
  // Angles are shared by every head of the token.
  constexpr int kMaxPairs = 256;
  if (pairs > kMaxPairs) throw Error(ErrorKind::BadHeadDim, "head dim too large");
  double cos_t[2][kMaxPairs], sin_t[2][kMaxPairs];
  for (int axis = 0; axis < 2; ++axis) {
    const double coord = axis == 0 ? position.y : position.x;
    for (int i = 0; i < pairs; ++i) {
      const double angle = coord * std::pow(kRopeBase, -static_cast<double>(i) / pairs);
      cos_t[axis][i] = std::cos(angle);
      sin_t[axis][i] = std::sin(angle);
    }
  }
  for (std::size_t base = 0; base < token.size(); base += std::size_t(head_dim)) {
    for (int axis = 0; axis < 2; ++axis) {
      T* seg = token.data() + base + std::size_t(axis * half);
      for (int i = 0; i < pairs; ++i) {
        const double c = cos_t[axis][i], s = sin_t[axis][i];
        const double a = seg[2 * i], b = seg[2 * i + 1];
        seg[2 * i] = static_cast<T>(a * c - b * s);
        seg[2 * i + 1] = static_cast<T>(a * s + b * c);
      }
    }
  }
}

template void rope_encode_inplace<float>(std::span<float>, Cell, int);
template void rope_encode_inplace<double>(std::span<double>, Cell, int);

// --- TokenCache ------------------------------------------------------------

TokenCache::TokenCache(int steps, int layers, int positions, int dim, Fingerprint fingerprint)
    : steps_(steps), layers_(layers), positions_(positions), dim_(dim), fingerprint_(fingerprint) {
  if (steps <= 0 || layers <= 0 || positions <= 0 || dim <= 0) {
    throw Error(ErrorKind::BadConfig, "token cache dimensions must be positive");
  }
  data_.assign(std::size_t(steps) * layers * 4 * positions * dim, 0.0f);
  present_.assign(std::size_t(steps) * layers, 0);
}

void TokenCache::check_range(int step, int layer) const {
  if (step < 0 || step >= steps_ || layer < 0 || layer >= layers_) {
    throw Error(ErrorKind::CacheMiss, "no cache entry for step " + std::to_string(step) +
                                          ", layer " + std::to_string(layer));
  }
}

bool TokenCache::has(int step, int layer) const {
  if (step < 0 || step >= steps_ || layer < 0 || layer >= layers_) return false;
  return present_[std::size_t(step) * layers_ + layer] != 0;
}

std::size_t TokenCache::recorded() const {
  return static_cast<std::size_t>(std::count(present_.begin(), present_.end(), std::uint8_t{1}));
}

std::size_t TokenCache::block_offset(int step, int layer, Slot s) const {
  const std::size_t block = std::size_t(positions_) * dim_;
  return ((std::size_t(step) * layers_ + layer) * 4 + std::size_t(s)) * block;
}

std::span<const float> TokenCache::slot(int step, int layer, Slot s) const {
  check_range(step, layer);
  if (!has(step, layer)) {
    throw Error(ErrorKind::CacheMiss, "cache entry for step " + std::to_string(step) +
                                          ", layer " + std::to_string(layer) +
                                          " was never recorded");
  }
  return {data_.data() + block_offset(step, layer, s), std::size_t(positions_) * dim_};
}

std::span<const float> TokenCache::row(int step, int layer, Slot s, std::size_t position) const {
  return slot(step, layer, s).subspan(position * std::size_t(dim_), std::size_t(dim_));
}

void TokenCache::record(int step, int layer, std::span<const float> q, std::span<const float> k,
                        std::span<const float> v, std::span<const float> y) {
  check_range(step, layer);
  const std::size_t block = std::size_t(positions_) * dim_;
  if (q.size() != block || k.size() != block || v.size() != block || y.size() != block) {
    throw Error(ErrorKind::ShapeMismatch, "cache record has the wrong block size");
  }
  auto& flag = present_[std::size_t(step) * layers_ + layer];
  if (flag) throw Error(ErrorKind::BadConfig, "cache entry recorded twice");
  const std::span<const float> blocks[4] = {q, k, v, y};
  for (int s = 0; s < 4; ++s) {
    std::copy(blocks[s].begin(), blocks[s].end(),
              data_.begin() + std::ptrdiff_t(block_offset(step, layer, Slot(s))));
  }
  flag = 1;
}

std::uint64_t TokenCache::checksum() const {
  const std::string_view bytes(reinterpret_cast<const char*>(data_.data()),
                               data_.size() * sizeof(float));
  const std::string_view flags(reinterpret_cast<const char*>(present_.data()), present_.size());
  return fnv1a(flags, fnv1a(bytes));
}

// --- schedule --------------------------------------------------------------

double h_schedule(int step_index, int activation, int steps) {
  if (activation <= 0 || step_index >= activation || step_index >= steps) return 0.0;
  if (step_index < 0) return 1.0;
  return std::max(0.0, 1.0 - static_cast<double>(step_index) / activation);
}

ControlConfig make_control_config(int activation, int steps, RegionPartition partition,
                                  MatchingMaps maps) {
  if (steps < 1) throw Error(ErrorKind::BadConfig, "steps must be >= 1");
  if (activation < 0 || activation > steps) {
    throw Error(ErrorKind::BadConfig, "activation must lie in [0, steps]");
  }
  if (!(partition.grid() == maps.grid())) {
    throw Error(ErrorKind::ShapeMismatch, "partition and maps use different grids");
  }
  return {activation, steps, std::move(partition), std::move(maps)};
}

double gate(const ControlConfig& config, int step_index, Cell x) {
  if (config.partition.label(x) != Region::Destination) return 0.0;
  const auto a = config.maps.weight(x);
  if (!a) return 0.0;
  return h_schedule(step_index, config.activation, config.steps) * *a;
}

// --- unified source map ----------------------------------------------------

UnifiedSourceMap::UnifiedSourceMap(const RegionPartition& partition, const MatchingMaps& maps)
    : grid_(partition.grid()), source_index_(partition.grid().cells(), -1) {
  for (std::size_t i = 0; i < source_index_.size(); ++i) {
    const Cell x = grid_.cell_at(i);
    switch (partition.label(x)) {
      case Region::Destination: {
        const auto src = maps.source(x);
        if (!src) throw Error(ErrorKind::ShapeMismatch, "destination cell missing from M");
        source_index_[i] = static_cast<std::int32_t>(grid_.index(*src));
        ++defined_;
        break;
      }
      case Region::Transition:
        source_index_[i] = static_cast<std::int32_t>(i);
        ++defined_;
        break;
      default:
        break;
    }
  }
}

std::optional<Cell> UnifiedSourceMap::source(Cell x) const {
  if (!grid_.contains(x)) return std::nullopt;
  const auto idx = source_index_[grid_.index(x)];
  if (idx < 0) return std::nullopt;
  return grid_.cell_at(std::size_t(idx));
}

// --- controls --------------------------------------------------------------

void apply_background_replacement(ImageTokens tokens, const TokenCache& cache, int cache_step,
                                  int layer, const RegionPartition& partition, HeadLayout layout) {
  const std::size_t dim = std::size_t(layout.dim());
  const std::size_t positions = partition.grid().cells();
  if (dim != std::size_t(cache.dim()) || positions != std::size_t(cache.positions()) ||
      tokens.q.size() != positions * dim || tokens.k.size() != positions * dim ||
      tokens.v.size() != positions * dim) {
    throw Error(ErrorKind::ShapeMismatch, "token block does not match cache layout");
  }
  const auto q_bar = cache.slot(cache_step, layer, TokenCache::Slot::Query);
  const auto k_bar = cache.slot(cache_step, layer, TokenCache::Slot::Key);
  const auto v_bar = cache.slot(cache_step, layer, TokenCache::Slot::Value);
  const GridSpec& grid = partition.grid();
  for (std::size_t i = 0; i < positions; ++i) {
    if (partition.labels()[i] != Region::Background) continue;
    const Cell x = grid.cell_at(i);
    const std::size_t off = i * dim;
    auto q = tokens.q.subspan(off, dim);
    auto k = tokens.k.subspan(off, dim);
    std::copy_n(q_bar.begin() + std::ptrdiff_t(off), dim, q.begin());
    std::copy_n(k_bar.begin() + std::ptrdiff_t(off), dim, k.begin());
    std::copy_n(v_bar.begin() + std::ptrdiff_t(off), dim, tokens.v.begin() + std::ptrdiff_t(off));
    rope_encode_inplace<float>(q, x, layout.head_dim);
    rope_encode_inplace<float>(k, x, layout.head_dim);
  }
}

KvEntry appended_kv(Cell x, const TokenCache& cache, int cache_step, int layer,
                    const UnifiedSourceMap& sources, HeadLayout layout) {
  const auto src = sources.source(x);
  if (!src) {
    throw Error(ErrorKind::NotEditRegion, "cell (" + std::to_string(x.x) + ", " +
                                              std::to_string(x.y) + ") is not in dst or trans");
  }
  const std::size_t src_index = sources.grid().index(*src);
  const auto k_bar = cache.row(cache_step, layer, TokenCache::Slot::Key, src_index);
  const auto v_bar = cache.row(cache_step, layer, TokenCache::Slot::Value, src_index);
  KvEntry entry{std::vector<float>(k_bar.begin(), k_bar.end()),
                std::vector<float>(v_bar.begin(), v_bar.end())};
  // Re-encoded at the destination x, not at the source.
  rope_encode_inplace<float>(std::span<float>(entry.key), x, layout.head_dim);
  return entry;
}

AugmentedKv augment_kv(std::span<const float> keys, std::span<const float> values, Cell x,
                       const TokenCache& cache, int cache_step, int layer,
                       const UnifiedSourceMap& sources, HeadLayout layout) {
  const std::size_t dim = std::size_t(layout.dim());
  if (keys.size() != values.size() || keys.size() % dim != 0) {
    throw Error(ErrorKind::ShapeMismatch, "key/value sequences have inconsistent shapes");
  }
  KvEntry extra = appended_kv(x, cache, cache_step, layer, sources, layout);
  AugmentedKv out;
  out.length = keys.size() / dim + 1;
  out.keys.reserve(keys.size() + dim);
  out.values.reserve(values.size() + dim);
  out.keys.assign(keys.begin(), keys.end());
  out.keys.insert(out.keys.end(), extra.key.begin(), extra.key.end());
  out.values.assign(values.begin(), values.end());
  out.values.insert(out.values.end(), extra.value.begin(), extra.value.end());
  return out;
}

void gated_merge(std::span<float> y, std::span<const float> cached_source_output, double gamma) {
  if (y.size() != cached_source_output.size()) {
    throw Error(ErrorKind::ShapeMismatch, "gated merge operands differ in size");
  }
  if (gamma == 0.0) return;
  for (std::size_t i = 0; i < y.size(); ++i) {
    y[i] = static_cast<float>((1.0 - gamma) * y[i] + gamma * cached_source_output[i]);
  }
}

double gated_merge(std::span<float> y, Cell x, const TokenCache& cache, int cache_step, int layer,
                   const MatchingMaps& maps, double h_t) {
  const auto src = maps.source(x);
  if (!src) return 0.0;
  const double gamma = h_t * *maps.weight(x);
  const auto y_bar = cache.row(cache_step, layer, TokenCache::Slot::Output, maps.grid().index(*src));
  gated_merge(y, y_bar, gamma);
  return gamma;
}

}  // namespace dragfield
