#pragma once

// A small seeded single-stream transformer whose output is read as a flow
// velocity. Inversion integrates t = 0 -> 1 with forward Euler and caches the
// attention tokens; sampling inverts each Euler step exactly (fixed-point
// solve) and replays the cache through the attention controls.

#include <cstdint>
#include <optional>
#include <span>
#include <string_view>
#include <vector>

#include "dragfield/attention_control.hpp"
#include "dragfield/correspondence.hpp"
#include "dragfield/geometry.hpp"

namespace dragfield {

struct ToyModelConfig {
  int layers = 4;
  int dim = 64;
  int heads = 4;
  GridSpec grid{16, 16};
  int channels = 4;
  int text_tokens = 8;
  int ff_mult = 2;
  std::uint64_t seed = 0;
};

struct SamplerConfig {
  int steps = 50;
  int activation = 40;
};

/// Throws BadConfig unless steps >= 1 and 0 <= activation <= steps.
void validate(const SamplerConfig& sampler);

/// Seeded embedding of a prompt string; the tokenizer is a hash.
struct TextTokens {
  int count = 0;
  int dim = 0;
  std::vector<float> values;  // count x dim
  std::uint64_t hash = 0;
};

TextTokens embed_prompt(std::string_view prompt, const ToyModelConfig& config);

/// Callbacks into one velocity evaluation. Every span covers the image rows
/// only (positions x dim, row-major); text rows are never exposed.
class AttentionHooks {
 public:
  virtual ~AttentionHooks() = default;

  /// Q/K/V right after projection, before rotary encoding.
  virtual void on_projected(int /*layer*/, std::span<const float> /*q*/,
                            std::span<const float> /*k*/, std::span<const float> /*v*/) {}
  /// Q/K/V after rotary encoding; may be rewritten in place.
  virtual void on_encoded(int /*layer*/, ImageTokens /*tokens*/) {}
  /// Extra key/value appended for the query at an image position, or nullptr.
  virtual const KvEntry* extra_kv(int /*layer*/, std::size_t /*position*/) { return nullptr; }
  /// Number of keys each query attended over (text rows first, then image rows).
  virtual void on_attended(int /*layer*/, std::span<const std::uint32_t> /*lengths*/) {}
  /// Attention output before the output projection; may be rewritten in place.
  virtual void on_attention_output(int /*layer*/, std::span<float> /*y*/) {}
};

class ToyModel {
 public:
  const ToyModelConfig& config() const { return config_; }
  HeadLayout layout() const { return layout_; }

  /// Hash of the configuration and every parameter.
  std::uint64_t checksum() const { return checksum_; }

  /// Upper bound on the Frobenius norm of any velocity the model can emit.
  double velocity_bound() const;

  /// Velocity field at time t.
  LatentGrid velocity(const LatentGrid& z, double t, const TextTokens& text,
                      AttentionHooks* hooks = nullptr) const;

 private:
  friend ToyModel build_model(const ToyModelConfig& config);

  struct Block {
    std::vector<float> wq, wk, wv, wo;  // dim x dim
    std::vector<float> w1;              // hidden x dim
    std::vector<float> w2;              // dim x hidden
  };

  ToyModelConfig config_;
  HeadLayout layout_;
  std::vector<float> w_in_;    // dim x channels
  std::vector<float> w_head_;  // channels x dim
  std::vector<Block> blocks_;
  std::uint64_t checksum_ = 0;
};

/// Deterministic in the seed. Throws BadConfig on invalid dimensions.
ToyModel build_model(const ToyModelConfig& config);

struct Inversion {
  LatentGrid z_t;
  TokenCache cache;
};

/// Forward Euler over `steps` uniform intervals of [0, 1], recording the cache.
Inversion invert(const LatentGrid& z0, const TextTokens& text, const SamplerConfig& sampler,
                 const ToyModel& model);

/// Which control rules run during sampling.
struct ControlRules {
  bool background = true;
  /// Key/value concatenation and gated merging (inside the activation window).
  bool identity = true;
};

struct SampleReport {
  LatentGrid output;
  /// Largest gamma applied at each sampling step (0 when none fired).
  std::vector<double> gamma_trace;
  /// h_t per sampling step.
  std::vector<double> h_trace;
  std::vector<std::size_t> merges_per_step;
  std::vector<std::size_t> augmented_queries_per_step;
  std::vector<int> solver_iterations;
  /// max |token - RoPE(cached token)| over bg rows after replacement.
  double bg_token_residual = 0.0;
  /// max |y - cached y| over image rows, measured before merging.
  double attention_cache_residual = 0.0;
};

/// Reverse sampling from z_T. Without a control config this is the plain
/// inverse of `invert`. Throws CacheMismatch when the cache came from a
/// different model, step count, text or grid.
SampleReport sample(const LatentGrid& z_t, const TextTokens& text, const SamplerConfig& sampler,
                    const ToyModel& model, const TokenCache& cache,
                    const ControlConfig* control = nullptr, ControlRules rules = {});

/// ||a - b||_F / ||b||_F.
double relative_error(const LatentGrid& a, const LatentGrid& b);

}  // namespace dragfield
