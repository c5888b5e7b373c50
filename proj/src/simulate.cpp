#include "dragfield/simulate.hpp"

#include <algorithm>
#include <cmath>

#include "dragfield/errors.hpp"
#include "dragfield/random.hpp"

namespace dragfield {

namespace {

constexpr int kLatentChannels = 4;
constexpr std::uint64_t kLatentStream = 0x6c6174656e74ULL;

}  // namespace

LatentGrid synthesize_latent(const GridSpec& grid, int channels, std::uint64_t seed) {
  LatentGrid z(grid, channels);
  const std::uint64_t key = hash_key(seed, kLatentStream);
  auto& v = z.values();
  for (std::size_t i = 0; i < v.size(); ++i) v[i] = static_cast<float>(counter_normal(key, i));
  return z;
}

SimulationResult simulate(const SimulationRequest& request) {
  validate(request.sampler);
  const DragPlan& plan = request.plan;

  ToyModelConfig config;
  config.grid = plan.grid;
  config.seed = request.seed;
  config.channels = request.z0 ? request.z0->channels() : kLatentChannels;
  if (request.z0 && !(request.z0->grid() == plan.grid)) {
    throw Error(ErrorKind::ShapeMismatch, "latent grid differs from plan grid");
  }

  // Geometry first, so a bad plan fails before any model work.
  CorrespondenceResult correspondence = compute_correspondence(plan);

  const ToyModel model = build_model(config);
  const TextTokens text = embed_prompt(request.prompt, config);
  LatentGrid z0 = request.z0 ? *request.z0 : synthesize_latent(plan.grid, config.channels, request.seed);

  Inversion inversion = invert(z0, text, request.sampler, model);
  SampleReport baseline = sample(inversion.z_t, text, request.sampler, model, inversion.cache);

  const CorrespondencePlan warped = make_correspondence_plan(plan, correspondence, inversion.z_t);
  const ControlConfig control = make_control_config(request.sampler.activation, request.sampler.steps,
                                                    correspondence.partition, correspondence.maps);
  SampleReport edited =
      sample(warped.warped, text, request.sampler, model, inversion.cache, &control);

  const auto& gamma = edited.gamma_trace;
  nlohmann::json metrics = {
      {"format_version", kFormatVersion},
      {"seed", request.seed},
      {"steps", request.sampler.steps},
      {"activation", request.sampler.activation},
      {"model_checksum", model.checksum()},
      {"round_trip_rel_err", relative_error(baseline.output, z0)},
      {"output_rel_err", relative_error(edited.output, z0)},
      {"edit_rel_err_vs_baseline", relative_error(edited.output, baseline.output)},
      {"bg_token_residual", edited.bg_token_residual},
      {"attention_cache_residual", edited.attention_cache_residual},
      {"max_solver_iterations",
       edited.solver_iterations.empty()
           ? 0
           : *std::max_element(edited.solver_iterations.begin(), edited.solver_iterations.end())},
      {"gamma_trace", gamma},
      {"gamma_trace_active",
       std::vector<double>(gamma.begin(), gamma.begin() + request.sampler.activation)},
      {"h_trace", edited.h_trace},
      {"regions",
       {{"bg", correspondence.partition.count(Region::Background)},
        {"dst", correspondence.partition.count(Region::Destination)},
        {"inp", correspondence.partition.count(Region::Inpaint)},
        {"trans", correspondence.partition.count(Region::Transition)}}},
  };

  return {std::move(z0), std::move(inversion.z_t), std::move(edited.output),
          std::move(baseline.output), std::move(correspondence), std::move(metrics)};
}

std::string difference_heatmap_ppm(const LatentGrid& output, const LatentGrid& baseline) {
  if (!(output.grid() == baseline.grid()) || output.channels() != baseline.channels()) {
    throw Error(ErrorKind::ShapeMismatch, "heatmap inputs differ in shape");
  }
  const GridSpec& grid = output.grid();
  std::vector<double> diff(grid.cells());
  double scale = 0.0;
  for (std::size_t i = 0; i < grid.cells(); ++i) {
    const Cell c = grid.cell_at(i);
    const auto a = output.at(c);
    const auto b = baseline.at(c);
    double d = 0.0, n = 0.0;
    for (std::size_t k = 0; k < a.size(); ++k) {
      d += double(a[k] - b[k]) * double(a[k] - b[k]);
      n += double(b[k]) * double(b[k]);
    }
    diff[i] = std::sqrt(d);
    scale += std::sqrt(n);
  }
  scale = scale / double(grid.cells());
  if (scale <= 0.0) scale = 1.0;

  std::string out = "P6\n" + std::to_string(grid.width()) + " " + std::to_string(grid.height()) +
                    "\n255\n";
  for (double d : diff) {
    const auto v = static_cast<unsigned char>(std::lround(255.0 * std::clamp(d / scale, 0.0, 1.0)));
    out.append(3, static_cast<char>(v));
  }
  return out;
}

}  // namespace dragfield
