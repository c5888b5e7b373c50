#pragma once

// Correspondence-driven attention control for single-stream layers:
// background token replacement, key/value concatenation from the matched
// source (keys re-encoded at the destination) and gated output merging.

#include <cstdint>
#include <optional>
#include <span>
#include <vector>

#include "dragfield/correspondence.hpp"
#include "dragfield/geometry.hpp"

namespace dragfield {

struct HeadLayout {
  int heads = 0;
  int head_dim = 0;

  int dim() const { return heads * head_dim; }
};

/// Throws BadHeadDim unless dim splits evenly into heads of a size divisible by 4.
HeadLayout make_head_layout(int dim, int heads);

inline constexpr double kRopeBase = 10000.0;

/// 2D axial rotary embedding applied per head. In each head the first half is
/// rotated by row-frequency angles (y), the second half by column-frequency
/// angles (x); pair i of a half uses frequency base^(-i / (head_dim / 4)).
template <class T>
void rope_encode_inplace(std::span<T> token, Cell position, int head_dim);

template <class T>
std::vector<T> rope_encode(std::span<const T> token, Cell position, int head_dim) {
  std::vector<T> out(token.begin(), token.end());
  rope_encode_inplace<T>(std::span<T>(out), position, head_dim);
  return out;
}

/// Pre-positional-encoding Q/K/V and attention outputs of every image position,
/// per (inversion step, layer). Written once during inversion.
class TokenCache {
 public:
  enum class Slot { Query = 0, Key = 1, Value = 2, Output = 3 };

  /// Identifies the run the cache came from.
  struct Fingerprint {
    std::uint64_t model_checksum = 0;
    std::uint64_t text_hash = 0;
    int steps = 0;

    friend bool operator==(const Fingerprint&, const Fingerprint&) = default;
  };

  TokenCache(int steps, int layers, int positions, int dim, Fingerprint fingerprint);

  int steps() const { return steps_; }
  int layers() const { return layers_; }
  int positions() const { return positions_; }
  int dim() const { return dim_; }
  const Fingerprint& fingerprint() const { return fingerprint_; }

  bool has(int step, int layer) const;
  /// Number of (step, layer) entries recorded so far.
  std::size_t recorded() const;

  /// positions x dim block; throws CacheMiss if (step, layer) was never recorded.
  std::span<const float> slot(int step, int layer, Slot s) const;
  std::span<const float> row(int step, int layer, Slot s, std::size_t position) const;

  /// Writes one full (step, layer) record. Throws CacheMiss when out of range
  /// and BadConfig when the entry already exists.
  void record(int step, int layer, std::span<const float> q, std::span<const float> k,
              std::span<const float> v, std::span<const float> y);

  std::uint64_t checksum() const;

 private:
  std::size_t block_offset(int step, int layer, Slot s) const;
  void check_range(int step, int layer) const;

  int steps_, layers_, positions_, dim_;
  Fingerprint fingerprint_;
  std::vector<float> data_;
  std::vector<std::uint8_t> present_;
};

/// Image-position rows (positions x dim, row-major) of the current layer.
struct ImageTokens {
  std::span<float> q;
  std::span<float> k;
  std::span<float> v;
};

/// Linear decay 1 -> 0 across the activation window; 0 from step a on.
double h_schedule(int step_index, int activation, int steps);

struct ControlConfig {
  int activation = 40;
  int steps = 50;
  RegionPartition partition;
  MatchingMaps maps;
};

/// Throws BadConfig unless 0 <= activation <= steps and the grids agree.
ControlConfig make_control_config(int activation, int steps, RegionPartition partition,
                                  MatchingMaps maps);

/// gamma = h_t * A(x) on destination cells, 0 elsewhere.
double gate(const ControlConfig& config, int step_index, Cell x);

/// M on dst, identity on trans, undefined elsewhere.
class UnifiedSourceMap {
 public:
  UnifiedSourceMap(const RegionPartition& partition, const MatchingMaps& maps);

  const GridSpec& grid() const { return grid_; }
  std::optional<Cell> source(Cell x) const;
  std::size_t size() const { return defined_; }

 private:
  GridSpec grid_;
  std::vector<std::int32_t> source_index_;
  std::size_t defined_ = 0;
};

/// Overwrites bg rows with the cached tokens: Q and K re-encoded at their own
/// position, V copied. Every other row is left untouched.
void apply_background_replacement(ImageTokens tokens, const TokenCache& cache, int cache_step,
                                  int layer, const RegionPartition& partition, HeadLayout layout);

struct KvEntry {
  std::vector<float> key;
  std::vector<float> value;
};

/// The pair appended to x's attention: cached key of M~(x) re-encoded at x,
/// cached value of M~(x) as is. Throws NotEditRegion outside dst ∪ trans.
KvEntry appended_kv(Cell x, const TokenCache& cache, int cache_step, int layer,
                    const UnifiedSourceMap& sources, HeadLayout layout);

struct AugmentedKv {
  std::vector<float> keys;    // length x dim
  std::vector<float> values;  // length x dim
  std::size_t length = 0;
};

/// Key/value sequences seen by the query at x: the current ones plus the
/// appended pair at the end.
AugmentedKv augment_kv(std::span<const float> keys, std::span<const float> values, Cell x,
                       const TokenCache& cache, int cache_step, int layer,
                       const UnifiedSourceMap& sources, HeadLayout layout);

/// y <- (1 - gamma) y + gamma y_src.
void gated_merge(std::span<float> y, std::span<const float> cached_source_output, double gamma);

/// Map-driven form: gamma = h_t * A(x), source output taken from the cache at M(x).
/// Returns the gamma used. Cells outside dst are left unchanged (gamma 0).
double gated_merge(std::span<float> y, Cell x, const TokenCache& cache, int cache_step, int layer,
                   const MatchingMaps& maps, double h_t);

}  // namespace dragfield
