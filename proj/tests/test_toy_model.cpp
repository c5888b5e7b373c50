#include <doctest.h>

#include <cmath>

#include "dragfield/correspondence.hpp"
#include "dragfield/errors.hpp"
#include "dragfield/simulate.hpp"
#include "dragfield/toy_model.hpp"

using namespace dragfield;

namespace {

ToyModelConfig small_config(std::uint64_t seed = 1) {
  ToyModelConfig c;
  c.grid = GridSpec(8, 8);
  c.seed = seed;
  return c;
}

struct Fixture {
  ToyModelConfig config;
  ToyModel model;
  TextTokens text;
  LatentGrid z0;
  SamplerConfig sampler;
  Inversion inversion;

  Fixture(ToyModelConfig cfg, SamplerConfig s)
      : config(cfg),
        model(build_model(cfg)),
        text(embed_prompt("a red fox", cfg)),
        z0(synthesize_latent(cfg.grid, cfg.channels, cfg.seed)),
        sampler(s),
        inversion(invert(z0, text, s, model)) {}
};

double correlation(const std::vector<double>& a, const std::vector<double>& b) {
  double ma = 0, mb = 0;
  for (std::size_t i = 0; i < a.size(); ++i) ma += a[i], mb += b[i];
  ma /= double(a.size());
  mb /= double(b.size());
  double sab = 0, saa = 0, sbb = 0;
  for (std::size_t i = 0; i < a.size(); ++i) {
    sab += (a[i] - ma) * (b[i] - mb);
    saa += (a[i] - ma) * (a[i] - ma);
    sbb += (b[i] - mb) * (b[i] - mb);
  }
  return sab / std::sqrt(saa * sbb);
}

}  // namespace

TEST_CASE("model construction is deterministic in the seed") {
  CHECK(build_model(small_config(3)).checksum() == build_model(small_config(3)).checksum());
  CHECK(build_model(small_config(3)).checksum() != build_model(small_config(4)).checksum());
  auto bad = small_config();
  bad.heads = 3;
  CHECK_THROWS_AS(build_model(bad), Error);
}

TEST_CASE("zero input stays finite and bounded") {
  const auto cfg = small_config();
  const ToyModel model = build_model(cfg);
  TextTokens text{cfg.text_tokens, cfg.dim, std::vector<float>(std::size_t(cfg.text_tokens * cfg.dim), 0.0f), 0};
  const LatentGrid v = model.velocity(LatentGrid(cfg.grid, cfg.channels), 0.5, text);
  double sq = 0;
  for (float x : v.values()) {
    CHECK(std::isfinite(x));
    sq += double(x) * x;
  }
  CHECK(std::sqrt(sq) <= model.velocity_bound());
}

TEST_CASE("sampler validation") {
  CHECK_THROWS_AS(validate(SamplerConfig{0, 0}), Error);
  CHECK_THROWS_AS(validate(SamplerConfig{10, 11}), Error);
  CHECK_NOTHROW(validate(SamplerConfig{10, 0}));
}

TEST_CASE("single-step inversion is one Euler step") {
  const auto cfg = small_config();
  Fixture f(cfg, {1, 1});
  const LatentGrid v = f.model.velocity(f.z0, 0.0, f.text);
  for (std::size_t i = 0; i < f.z0.values().size(); ++i) {
    CHECK(f.inversion.z_t.values()[i] == static_cast<float>(double(f.z0.values()[i]) + double(v.values()[i])));
  }
  CHECK(f.inversion.cache.recorded() == std::size_t(cfg.layers));
}

TEST_CASE("inversion caches every step, layer and position") {
  const auto cfg = small_config();
  Fixture f(cfg, {6, 4});
  CHECK(f.inversion.cache.recorded() == std::size_t(6 * cfg.layers));
  for (int s = 0; s < 6; ++s)
    for (int l = 0; l < cfg.layers; ++l) {
      CHECK(f.inversion.cache.has(s, l));
      CHECK(f.inversion.cache.slot(s, l, TokenCache::Slot::Output).size() == cfg.grid.cells() * std::size_t(cfg.dim));
    }
}

TEST_CASE("plain sampling inverts the inversion") {
  Fixture f(small_config(), {12, 10});
  const auto r = sample(f.inversion.z_t, f.text, f.sampler, f.model, f.inversion.cache);
  CHECK(relative_error(r.output, f.z0) <= 1e-4);
  for (int it : r.solver_iterations) CHECK(it < 32);
}

TEST_CASE("cache must come from the same run") {
  Fixture f(small_config(), {4, 2});
  const TextTokens other = embed_prompt("something else", f.config);
  CHECK_THROWS_AS(sample(f.inversion.z_t, other, f.sampler, f.model, f.inversion.cache), Error);
  CHECK_THROWS_AS(sample(f.inversion.z_t, f.text, {5, 2}, f.model, f.inversion.cache), Error);
  CHECK_THROWS_AS(sample(f.inversion.z_t, f.text, f.sampler, build_model(small_config(9)), f.inversion.cache), Error);
}

TEST_CASE("no-drag controlled run reproduces the input") {
  Fixture f(small_config(), {12, 10});
  const auto control = make_control_config(10, 12, RegionPartition(f.config.grid), MatchingMaps(f.config.grid));
  const std::uint64_t before = f.inversion.cache.checksum();
  const auto r = sample(f.inversion.z_t, f.text, f.sampler, f.model, f.inversion.cache, &control);
  CHECK(relative_error(r.output, f.z0) <= 1e-4);
  CHECK(r.attention_cache_residual <= 1e-5);
  CHECK(r.bg_token_residual <= 1e-12);
  CHECK(f.inversion.cache.checksum() == before);
  for (double g : r.gamma_trace) CHECK(g == 0.0);
}

TEST_CASE("controlled runs with a translated patch") {
  const auto cfg = small_config(5);
  Fixture f(cfg, {10, 8});
  EditableMask mask(cfg.grid);
  for (int y = 2; y <= 4; ++y)
    for (int x = 1; x <= 3; ++x) mask.set({x, y});
  const std::vector<DragInstruction> ins{{{1, 2}, {4, 2}}};
  const auto field = wta_fuse(mask, ins, reference_circle(mask), EditMode::Move, {});
  const auto maps = resolve_collisions(field).maps;
  const auto part = partition_regions(mask, maps.destinations(), 1);
  const auto warped = build_warped_latent(f.inversion.z_t, part, maps, 3);
  const std::size_t edit_cells = part.count(Region::Destination) + part.count(Region::Transition);

  SUBCASE("activation zero equals background replacement alone") {
    const auto c0 = make_control_config(0, 10, part, maps);
    const auto a = sample(warped, f.text, f.sampler, f.model, f.inversion.cache, &c0);
    const auto cfull = make_control_config(8, 10, part, maps);
    const auto b = sample(warped, f.text, f.sampler, f.model, f.inversion.cache, &cfull, {true, false});
    CHECK(a.output == b.output);
    for (double g : a.gamma_trace) CHECK(g == 0.0);
    for (auto n : a.augmented_queries_per_step) CHECK(n == 0);
  }
  SUBCASE("full activation merges at every step") {
    const auto c = make_control_config(10, 10, part, maps);
    const auto r = sample(warped, f.text, f.sampler, f.model, f.inversion.cache, &c);
    for (int s = 0; s < 10; ++s) {
      CHECK(r.merges_per_step[std::size_t(s)] > 0);
      CHECK(r.augmented_queries_per_step[std::size_t(s)] == edit_cells);
      CHECK(r.gamma_trace[std::size_t(s)] >= 0.0);
      CHECK(r.gamma_trace[std::size_t(s)] <= 1.0);
      if (s > 0) CHECK(r.gamma_trace[std::size_t(s)] <= r.gamma_trace[std::size_t(s - 1)]);
    }
    CHECK(r.bg_token_residual <= 1e-12);
  }
  SUBCASE("window closes at the activation step") {
    const auto c = make_control_config(6, 10, part, maps);
    const auto r = sample(warped, f.text, f.sampler, f.model, f.inversion.cache, &c);
    for (int s = 0; s < 10; ++s) {
      if (s >= 6) {
        CHECK(r.gamma_trace[std::size_t(s)] == 0.0);
        CHECK(r.augmented_queries_per_step[std::size_t(s)] == 0);
      } else {
        CHECK(r.augmented_queries_per_step[std::size_t(s)] == edit_cells);
      }
    }
  }
  SUBCASE("sampling is deterministic") {
    const auto c = make_control_config(8, 10, part, maps);
    const auto a = sample(warped, f.text, f.sampler, f.model, f.inversion.cache, &c);
    const auto b = sample(warped, f.text, f.sampler, f.model, f.inversion.cache, &c);
    CHECK(a.output == b.output);
  }
}

TEST_CASE("edited content follows the drag") {
  ToyModelConfig cfg;  // 16 x 16
  cfg.seed = 21;
  Fixture f(cfg, {20, 16});
  EditableMask mask(cfg.grid);
  for (int y = 5; y <= 10; ++y)
    for (int x = 2; x <= 6; ++x) mask.set({x, y});
  const std::vector<DragInstruction> ins{{{2, 5}, {8, 5}}};
  const auto field = wta_fuse(mask, ins, reference_circle(mask), EditMode::Move, {});
  const auto maps = resolve_collisions(field).maps;
  const auto part = partition_regions(mask, maps.destinations(), 2);
  const auto warped = build_warped_latent(f.inversion.z_t, part, maps, 7);
  const auto control = make_control_config(16, 20, part, maps);
  const auto edited = sample(warped, f.text, f.sampler, f.model, f.inversion.cache, &control);
  const auto baseline = sample(f.inversion.z_t, f.text, f.sampler, f.model, f.inversion.cache);

  std::vector<double> out, moved, still;
  for (const Match& m : maps.matches()) {
    for (int c = 0; c < cfg.channels; ++c) {
      out.push_back(edited.output.at(m.destination)[std::size_t(c)]);
      moved.push_back(baseline.output.at(m.source)[std::size_t(c)]);
      still.push_back(baseline.output.at(m.destination)[std::size_t(c)]);
    }
  }
  const double toward = correlation(out, moved), away = correlation(out, still);
  MESSAGE("correlation with translated baseline " << toward << ", with untranslated " << away);
  CHECK(toward > away);
}
