#include "dragfield/toy_model.hpp"

#include <algorithm>
#include <cmath>
#include <limits>
#include <string>

#include "dragfield/errors.hpp"
#include "dragfield/kernels.hpp"
#include "dragfield/random.hpp"

namespace dragfield {
namespace {

constexpr double kHeadGain = 1.0;
constexpr double kFeedForwardGain = 0.5;
constexpr float kNormEps = 1e-6f;
// The reverse step solves z_k = z_{k+1} - dt v(z_k) by fixed-point iteration.
constexpr double kSolverTolerance = 1e-6;
constexpr int kMaxSolverIterations = 32;

enum TensorId : std::uint64_t { kInput = 1, kHead = 2, kBlockBase = 16 };

// Gaussian rows normalized to unit L2 norm, then scaled by gain.
std::vector<float> normalized_projection(std::uint64_t seed, std::uint64_t tensor_id, int rows,
                                         int cols, double gain) {
  const std::uint64_t key = hash_key(seed, tensor_id);
  std::vector<float> w(std::size_t(rows) * cols);
  std::vector<double> row(static_cast<std::size_t>(cols));
  for (int r = 0; r < rows; ++r) {
    double sq = 0.0;
    for (int c = 0; c < cols; ++c) {
      row[std::size_t(c)] = counter_normal(key, std::uint64_t(r) * cols + c);
      sq += row[std::size_t(c)] * row[std::size_t(c)];
    }
    const double inv = gain / std::sqrt(sq);
    for (int c = 0; c < cols; ++c) {
      w[std::size_t(r) * cols + c] = static_cast<float>(row[std::size_t(c)] * inv);
    }
  }
  return w;
}

void rmsnorm_rows(const float* in, float* out, std::size_t rows, std::size_t dim) {
  for (std::size_t r = 0; r < rows; ++r) {
    const float* x = in + r * dim;
    float* y = out + r * dim;
    double sq = 0.0;
    for (std::size_t d = 0; d < dim; ++d) sq += double(x[d]) * x[d];
    const float inv = static_cast<float>(1.0 / std::sqrt(sq / double(dim) + kNormEps));
    for (std::size_t d = 0; d < dim; ++d) y[d] = x[d] * inv;
  }
}

float gelu(float x) {
  return 0.5f * x * (1.0f + std::tanh(0.7978845608f * (x + 0.044715f * x * x * x)));
}

void time_embedding(double t, int dim, std::vector<float>& out) {
  out.assign(std::size_t(dim), 0.0f);
  const int half = dim / 2;
  for (int i = 0; i < half; ++i) {
    const double freq = std::pow(100.0, double(i) / std::max(1, half - 1));
    out[std::size_t(2 * i)] = static_cast<float>(0.5 * std::sin(t * freq));
    out[std::size_t(2 * i + 1)] = static_cast<float>(0.5 * std::cos(t * freq));
  }
}

// y[n x out] = x[n x in] * w^T with w stored out x in.
void linear(const simd::KernelTable& k, const float* x, std::size_t n, std::size_t in,
            const std::vector<float>& w, std::size_t out, float* y) {
  k.gemm_nt(x, in, w.data(), in, y, out, n, out, in);
}

std::uint64_t hash_floats(const std::vector<float>& v, std::uint64_t h) {
  return fnv1a(std::string_view(reinterpret_cast<const char*>(v.data()), v.size() * sizeof(float)),
               h);
}

void check_latent(const LatentGrid& z, const ToyModelConfig& config) {
  if (!(z.grid() == config.grid) || z.channels() != config.channels) {
    throw Error(ErrorKind::ShapeMismatch, "latent shape does not match the model");
  }
}

void check_text(const TextTokens& text, const ToyModelConfig& config) {
  if (text.dim != config.dim || text.values.size() != std::size_t(text.count) * config.dim) {
    throw Error(ErrorKind::ShapeMismatch, "text tokens do not match the model width");
  }
}

}  // namespace

void validate(const SamplerConfig& sampler) {
  if (sampler.steps < 1) throw Error(ErrorKind::BadConfig, "steps must be >= 1");
  if (sampler.activation < 0 || sampler.activation > sampler.steps) {
    throw Error(ErrorKind::BadConfig, "activation must lie in [0, steps]");
  }
}

TextTokens embed_prompt(std::string_view prompt, const ToyModelConfig& config) {
  TextTokens text;
  text.count = config.text_tokens;
  text.dim = config.dim;
  text.hash = fnv1a(prompt);
  text.values.resize(std::size_t(text.count) * text.dim);
  for (int i = 0; i < text.count; ++i) {
    const std::uint64_t key = hash_key(text.hash, std::uint64_t(i));
    for (int d = 0; d < text.dim; ++d) {
      text.values[std::size_t(i) * text.dim + d] = static_cast<float>(counter_normal(key, d));
    }
  }
  return text;
}

ToyModel build_model(const ToyModelConfig& config) {
  if (config.layers < 1 || config.dim < 4 || config.heads < 1 || config.channels < 1 ||
      config.text_tokens < 0 || config.ff_mult < 1) {
    throw Error(ErrorKind::BadConfig, "toy model dimensions must be positive");
  }
  ToyModel model;
  try {
    model.layout_ = make_head_layout(config.dim, config.heads);
  } catch (const Error& e) {
    throw Error(ErrorKind::BadConfig, e.what());
  }
  model.config_ = config;
  const int d = config.dim;
  const int hidden = d * config.ff_mult;
  const double out_gain = 1.0 / std::sqrt(double(config.layers));
  model.w_in_ = normalized_projection(config.seed, kInput, d, config.channels, 1.0);
  model.w_head_ = normalized_projection(config.seed, kHead, config.channels, d, kHeadGain);
  for (int l = 0; l < config.layers; ++l) {
    const std::uint64_t base = kBlockBase + std::uint64_t(l) * 8;
    ToyModel::Block b;
    b.wq = normalized_projection(config.seed, base + 0, d, d, 1.0);
    b.wk = normalized_projection(config.seed, base + 1, d, d, 1.0);
    b.wv = normalized_projection(config.seed, base + 2, d, d, 1.0);
    b.wo = normalized_projection(config.seed, base + 3, d, d, out_gain);
    b.w1 = normalized_projection(config.seed, base + 4, hidden, d, 1.0);
    b.w2 = normalized_projection(config.seed, base + 5, d, hidden, kFeedForwardGain);
    model.blocks_.push_back(std::move(b));
  }

  std::uint64_t h = hash_key(config.seed, std::uint64_t(config.layers), std::uint64_t(d));
  h = hash_key(h, std::uint64_t(config.heads), std::uint64_t(config.channels));
  h = hash_key(h, std::uint64_t(config.grid.width()), std::uint64_t(config.grid.height()));
  h = hash_key(h, std::uint64_t(config.text_tokens), std::uint64_t(config.ff_mult));
  h = hash_floats(model.w_in_, h);
  h = hash_floats(model.w_head_, h);
  for (const auto& b : model.blocks_) {
    for (const auto* w : {&b.wq, &b.wk, &b.wv, &b.wo, &b.w1, &b.w2}) h = hash_floats(*w, h);
  }
  model.checksum_ = h;
  return model;
}

double ToyModel::velocity_bound() const {
  // Head rows have norm kHeadGain and its input is RMS-normalized (norm < sqrt(dim)).
  return kHeadGain *
         std::sqrt(double(config_.channels) * config_.dim * double(config_.grid.cells()));
}

LatentGrid ToyModel::velocity(const LatentGrid& z, double t, const TextTokens& text,
                              AttentionHooks* hooks) const {
  check_latent(z, config_);
  check_text(text, config_);
  const auto& k = simd::active();
  const std::size_t n_text = std::size_t(text.count);
  const std::size_t n_img = config_.grid.cells();
  const std::size_t n = n_text + n_img;
  const std::size_t d = std::size_t(config_.dim);
  const std::size_t hd = std::size_t(layout_.head_dim);
  const std::size_t hidden = d * std::size_t(config_.ff_mult);
  const std::size_t c = std::size_t(config_.channels);
  const float scale = static_cast<float>(1.0 / std::sqrt(double(hd)));

  std::vector<float> temb;
  time_embedding(t, config_.dim, temb);

  std::vector<float> h(n * d), xn(n * d), q(n * d), kk(n * d), v(n * d), y(n * d), u(n * d);
  std::vector<float> hid(n * hidden), updates(n_img * d, 0.0f);
  std::copy(text.values.begin(), text.values.end(), h.begin());
  linear(k, z.values().data(), n_img, c, w_in_, d, h.data() + n_text * d);
  for (std::size_t r = 0; r < n; ++r) {
    for (std::size_t j = 0; j < d; ++j) h[r * d + j] += temb[j];
  }

  // Per-head scratch.
  std::vector<float> qh(n * hd), kh(n * hd), vt(hd * n), scores(n * n), yh(n * hd);
  std::vector<float> p_extra(n_img);
  std::vector<const KvEntry*> extras(n_img, nullptr);
  std::vector<std::uint32_t> lengths(n);

  const auto image = [&](std::vector<float>& m) {
    return std::span<float>(m.data() + n_text * d, n_img * d);
  };

  for (int l = 0; l < config_.layers; ++l) {
    const Block& b = blocks_[std::size_t(l)];
    rmsnorm_rows(h.data(), xn.data(), n, d);
    linear(k, xn.data(), n, d, b.wq, d, q.data());
    linear(k, xn.data(), n, d, b.wk, d, kk.data());
    linear(k, xn.data(), n, d, b.wv, d, v.data());
    if (hooks) hooks->on_projected(l, image(q), image(kk), image(v));

    // Text tokens sit at position (0, 0), where the rotation is the identity.
    for (std::size_t i = 0; i < n_img; ++i) {
      const Cell pos = config_.grid.cell_at(i);
      const std::size_t off = (n_text + i) * d;
      rope_encode_inplace<float>(std::span<float>(q.data() + off, d), pos, int(hd));
      rope_encode_inplace<float>(std::span<float>(kk.data() + off, d), pos, int(hd));
    }
    if (hooks) hooks->on_encoded(l, ImageTokens{image(q), image(kk), image(v)});

    std::fill(lengths.begin(), lengths.end(), std::uint32_t(n));
    for (std::size_t i = 0; i < n_img; ++i) {
      extras[i] = hooks ? hooks->extra_kv(l, i) : nullptr;
      if (extras[i]) lengths[n_text + i] += 1;
    }
    if (hooks) hooks->on_attended(l, lengths);

    for (std::size_t head = 0; head < std::size_t(layout_.heads); ++head) {
      const std::size_t col = head * hd;
      for (std::size_t r = 0; r < n; ++r) {
        std::copy_n(q.data() + r * d + col, hd, qh.data() + r * hd);
        std::copy_n(kk.data() + r * d + col, hd, kh.data() + r * hd);
        for (std::size_t j = 0; j < hd; ++j) vt[j * n + r] = v[r * d + col + j];
      }
      k.gemm_nt(qh.data(), hd, kh.data(), hd, scores.data(), n, n, n, hd);
      for (std::size_t r = 0; r < n; ++r) {
        float* row = scores.data() + r * n;
        const KvEntry* extra = r >= n_text ? extras[r - n_text] : nullptr;
        float extra_score = -std::numeric_limits<float>::infinity();
        if (extra) extra_score = k.dot(qh.data() + r * hd, extra->key.data() + col, hd) * scale;
        float mx = extra_score;
        for (std::size_t j = 0; j < n; ++j) {
          row[j] *= scale;
          mx = std::max(mx, row[j]);
        }
        float sum = 0.0f;
        for (std::size_t j = 0; j < n; ++j) {
          row[j] = std::exp(row[j] - mx);
          sum += row[j];
        }
        float pe = 0.0f;
        if (extra) {
          pe = std::exp(extra_score - mx);
          sum += pe;
        }
        const float inv = 1.0f / sum;
        for (std::size_t j = 0; j < n; ++j) row[j] *= inv;
        if (r >= n_text) p_extra[r - n_text] = pe * inv;
      }
      k.gemm_nt(scores.data(), n, vt.data(), n, yh.data(), hd, n, hd, n);
      for (std::size_t i = 0; i < n_img; ++i) {
        if (extras[i]) {
          k.axpy(p_extra[i], extras[i]->value.data() + col, yh.data() + (n_text + i) * hd, hd);
        }
      }
      for (std::size_t r = 0; r < n; ++r) std::copy_n(yh.data() + r * hd, hd, y.data() + r * d + col);
    }
    if (hooks) hooks->on_attention_output(l, image(y));

    // Block update depends on the attention output only.
    linear(k, y.data(), n, d, b.wo, d, u.data());
    rmsnorm_rows(u.data(), xn.data(), n, d);
    linear(k, xn.data(), n, d, b.w1, hidden, hid.data());
    for (auto& x : hid) x = gelu(x);
    linear(k, hid.data(), n, hidden, b.w2, d, xn.data());
    for (std::size_t i = 0; i < n * d; ++i) u[i] += xn[i];
    for (std::size_t i = 0; i < n * d; ++i) h[i] += u[i];
    for (std::size_t i = 0; i < n_img * d; ++i) updates[i] += u[n_text * d + i];
  }

  // The head reads the accumulated block updates, not the input embedding.
  rmsnorm_rows(updates.data(), updates.data(), n_img, d);
  LatentGrid out(config_.grid, config_.channels);
  linear(k, updates.data(), n_img, d, w_head_, c, out.values().data());
  return out;
}

// --- inversion ---------------------------------------------------------------

namespace {

class CacheRecorder final : public AttentionHooks {
 public:
  CacheRecorder(TokenCache& cache, int step) : cache_(cache), step_(step) {}

  void on_projected(int, std::span<const float> q, std::span<const float> k,
                    std::span<const float> v) override {
    q_.assign(q.begin(), q.end());
    k_.assign(k.begin(), k.end());
    v_.assign(v.begin(), v.end());
  }

  void on_attention_output(int layer, std::span<float> y) override {
    cache_.record(step_, layer, q_, k_, v_, y);
  }

 private:
  TokenCache& cache_;
  int step_;
  std::vector<float> q_, k_, v_;
};

}  // namespace

Inversion invert(const LatentGrid& z0, const TextTokens& text, const SamplerConfig& sampler,
                 const ToyModel& model) {
  validate(sampler);
  check_latent(z0, model.config());
  check_text(text, model.config());
  const auto& cfg = model.config();
  TokenCache cache(sampler.steps, cfg.layers, int(cfg.grid.cells()), cfg.dim,
                   {model.checksum(), text.hash, sampler.steps});
  LatentGrid z = z0;
  const double dt = 1.0 / sampler.steps;
  for (int step = 0; step < sampler.steps; ++step) {
    CacheRecorder recorder(cache, step);
    const LatentGrid vel = model.velocity(z, step * dt, text, &recorder);
    auto& zv = z.values();
    for (std::size_t i = 0; i < zv.size(); ++i) {
      zv[i] = static_cast<float>(double(zv[i]) + dt * double(vel.values()[i]));
    }
  }
  return {std::move(z), std::move(cache)};
}

// --- sampling ----------------------------------------------------------------

namespace {

// Applies the control rules for one sampling step and measures residuals.
class ControlHooks final : public AttentionHooks {
 public:
  ControlHooks(const TokenCache& cache, const ControlConfig& control, ControlRules rules,
               const UnifiedSourceMap& sources, const std::vector<std::size_t>& edit_positions,
               HeadLayout layout, int sample_step, int cache_step)
      : cache_(cache),
        control_(control),
        rules_(rules),
        sources_(sources),
        edit_positions_(edit_positions),
        layout_(layout),
        cache_step_(cache_step),
        identity_active_(rules.identity && sample_step < control.activation),
        h_(h_schedule(sample_step, control.activation, control.steps)),
        extras_(control.partition.grid().cells()),
        has_extra_(control.partition.grid().cells(), 0) {}

  void begin_evaluation() {
    bg_residual_ = 0.0;
    cache_residual_ = 0.0;
    max_gamma_ = 0.0;
    merges_ = 0;
    augmented_ = 0;
  }

  void on_encoded(int layer, ImageTokens tokens) override {
    const GridSpec& grid = control_.partition.grid();
    const std::size_t d = std::size_t(layout_.dim());
    if (rules_.background) {
      apply_background_replacement(tokens, cache_, cache_step_, layer, control_.partition,
                                   layout_);
      const auto q_bar = cache_.slot(cache_step_, layer, TokenCache::Slot::Query);
      const auto k_bar = cache_.slot(cache_step_, layer, TokenCache::Slot::Key);
      const auto v_bar = cache_.slot(cache_step_, layer, TokenCache::Slot::Value);
      for (std::size_t i = 0; i < grid.cells(); ++i) {
        if (control_.partition.labels()[i] != Region::Background) continue;
        const Cell x = grid.cell_at(i);
        const auto rq = rope_encode<float>(q_bar.subspan(i * d, d), x, layout_.head_dim);
        const auto rk = rope_encode<float>(k_bar.subspan(i * d, d), x, layout_.head_dim);
        for (std::size_t j = 0; j < d; ++j) {
          bg_residual_ = std::max<double>(bg_residual_, std::fabs(tokens.q[i * d + j] - rq[j]));
          bg_residual_ = std::max<double>(bg_residual_, std::fabs(tokens.k[i * d + j] - rk[j]));
          bg_residual_ =
              std::max<double>(bg_residual_, std::fabs(tokens.v[i * d + j] - v_bar[i * d + j]));
        }
      }
    }
    if (identity_active_) {
      for (std::size_t i : edit_positions_) {
        extras_[i] = appended_kv(grid.cell_at(i), cache_, cache_step_, layer, sources_, layout_);
        has_extra_[i] = 1;
      }
    }
  }

  const KvEntry* extra_kv(int, std::size_t position) override {
    return has_extra_[position] ? &extras_[position] : nullptr;
  }

  void on_attended(int, std::span<const std::uint32_t> lengths) override {
    // Every query sees all text and image keys; augmented ones see one more.
    const auto base = static_cast<std::uint32_t>(lengths.size());
    augmented_ = static_cast<std::size_t>(
        std::count_if(lengths.begin(), lengths.end(), [&](auto len) { return len == base + 1; }));
  }

  void on_attention_output(int layer, std::span<float> y) override {
    const auto y_bar = cache_.slot(cache_step_, layer, TokenCache::Slot::Output);
    for (std::size_t i = 0; i < y.size(); ++i) {
      cache_residual_ = std::max<double>(cache_residual_, std::fabs(y[i] - y_bar[i]));
    }
    if (!identity_active_) return;
    const GridSpec& grid = control_.partition.grid();
    const std::size_t d = std::size_t(layout_.dim());
    for (const Match& m : control_.maps.matches()) {
      const std::size_t i = grid.index(m.destination);
      const double gamma =
          gated_merge(y.subspan(i * d, d), m.destination, cache_, cache_step_, layer,
                      control_.maps, h_);
      if (gamma > 0.0) ++merges_;
      max_gamma_ = std::max(max_gamma_, gamma);
    }
  }

  double h() const { return h_; }
  double bg_residual() const { return bg_residual_; }
  double cache_residual() const { return cache_residual_; }
  double max_gamma() const { return max_gamma_; }
  std::size_t merges() const { return merges_; }
  std::size_t augmented() const { return augmented_; }

 private:
  const TokenCache& cache_;
  const ControlConfig& control_;
  ControlRules rules_;
  const UnifiedSourceMap& sources_;
  const std::vector<std::size_t>& edit_positions_;
  HeadLayout layout_;
  int cache_step_;
  bool identity_active_;
  double h_;
  std::vector<KvEntry> extras_;
  std::vector<std::uint8_t> has_extra_;
  double bg_residual_ = 0.0, cache_residual_ = 0.0, max_gamma_ = 0.0;
  std::size_t merges_ = 0, augmented_ = 0;
};

void check_cache(const TokenCache& cache, const TextTokens& text, const SamplerConfig& sampler,
                 const ToyModel& model) {
  const auto& cfg = model.config();
  const TokenCache::Fingerprint expected{model.checksum(), text.hash, sampler.steps};
  if (!(cache.fingerprint() == expected) || cache.layers() != cfg.layers ||
      cache.positions() != int(cfg.grid.cells()) || cache.dim() != cfg.dim ||
      cache.steps() != sampler.steps) {
    throw Error(ErrorKind::CacheMismatch,
                "token cache was recorded with a different model, text, grid or step count");
  }
  if (cache.recorded() != std::size_t(cache.steps()) * cache.layers()) {
    throw Error(ErrorKind::CacheMismatch, "token cache is incomplete");
  }
}

}  // namespace

SampleReport sample(const LatentGrid& z_t, const TextTokens& text, const SamplerConfig& sampler,
                    const ToyModel& model, const TokenCache& cache, const ControlConfig* control,
                    ControlRules rules) {
  validate(sampler);
  check_latent(z_t, model.config());
  check_text(text, model.config());
  check_cache(cache, text, sampler, model);
  if (control) {
    if (!(control->partition.grid() == model.config().grid)) {
      throw Error(ErrorKind::ShapeMismatch, "control grid does not match the model");
    }
    if (control->steps != sampler.steps) {
      throw Error(ErrorKind::BadConfig, "control step count differs from the sampler");
    }
  }

  std::optional<UnifiedSourceMap> sources;
  std::vector<std::size_t> edit_positions;
  if (control) {
    sources.emplace(control->partition, control->maps);
    const GridSpec& grid = control->partition.grid();
    for (std::size_t i = 0; i < grid.cells(); ++i) {
      if (sources->source(grid.cell_at(i))) edit_positions.push_back(i);
    }
  }

  SampleReport report{z_t, {}, {}, {}, {}, {}, 0.0, 0.0};
  LatentGrid& z = report.output;
  const double dt = 1.0 / sampler.steps;
  for (int s = 0; s < sampler.steps; ++s) {
    const int k = sampler.steps - 1 - s;
    const double t = k * dt;
    std::optional<ControlHooks> hooks;
    if (control) {
      hooks.emplace(cache, *control, rules, *sources, edit_positions, model.layout(), s, k);
    }

    const LatentGrid z_next = z;
    LatentGrid current = z_next;
    int iterations = 0;
    for (; iterations < kMaxSolverIterations;) {
      if (hooks) hooks->begin_evaluation();
      const LatentGrid vel = model.velocity(current, t, text, hooks ? &*hooks : nullptr);
      ++iterations;
      double change = 0.0, magnitude = 1.0;
      auto& cv = current.values();
      for (std::size_t i = 0; i < cv.size(); ++i) {
        const float next = static_cast<float>(double(z_next.values()[i]) - dt * double(vel.values()[i]));
        change = std::max(change, std::fabs(double(next) - double(cv[i])));
        magnitude = std::max(magnitude, std::fabs(double(next)));
        cv[i] = next;
      }
      if (change <= kSolverTolerance * magnitude) break;
    }
    z = std::move(current);

    report.solver_iterations.push_back(iterations);
    if (hooks) {
      report.h_trace.push_back(rules.identity ? hooks->h() : 0.0);
      report.gamma_trace.push_back(hooks->max_gamma());
      report.merges_per_step.push_back(hooks->merges());
      report.augmented_queries_per_step.push_back(hooks->augmented());
      report.bg_token_residual = std::max(report.bg_token_residual, hooks->bg_residual());
      report.attention_cache_residual =
          std::max(report.attention_cache_residual, hooks->cache_residual());
    } else {
      report.h_trace.push_back(0.0);
      report.gamma_trace.push_back(0.0);
      report.merges_per_step.push_back(0);
      report.augmented_queries_per_step.push_back(0);
    }
  }
  return report;
}

double relative_error(const LatentGrid& a, const LatentGrid& b) {
  if (a.values().size() != b.values().size()) {
    throw Error(ErrorKind::ShapeMismatch, "relative_error operands differ in shape");
  }
  double num = 0.0, den = 0.0;
  for (std::size_t i = 0; i < a.values().size(); ++i) {
    const double diff = double(a.values()[i]) - double(b.values()[i]);
    num += diff * diff;
    den += double(b.values()[i]) * b.values()[i];
  }
  return den > 0.0 ? std::sqrt(num / den) : std::sqrt(num);
}

}  // namespace dragfield
