#include "dragfield/cli.hpp"

#include <cstdlib>
#include <filesystem>
#include <iostream>

#include <CLI11.hpp>
#include <spdlog/spdlog.h>

#include "dragfield/errors.hpp"
#include "dragfield/io_formats.hpp"
#include "dragfield/pipeline.hpp"
#include "dragfield/server.hpp"
#include "dragfield/simulate.hpp"

namespace dragfield {

namespace fs = std::filesystem;

namespace {

void configure_logging() {
  spdlog::set_level(spdlog::level::warn);
  const char* env = std::getenv("DRAGFIELD_LOG");
  if (!env) return;
  const std::string level = env;
  if (level == "error") spdlog::set_level(spdlog::level::err);
  else if (level == "info") spdlog::set_level(spdlog::level::info);
  else if (level == "debug") spdlog::set_level(spdlog::level::debug);
}

DragPlan load_plan(const fs::path& path) {
  return parse_drag_plan(read_file(path), path.parent_path());
}

void write_plan_artifacts(const CorrespondenceResult& result, const fs::path& out, bool viz) {
  fs::create_directories(out);
  write_file(out / "plan.json", dump_json(plan_document(result)));
  write_tensor(out / "field.tensor", field_tensor(result));
  write_tensor(out / "weights.tensor", weights_tensor(result));
  if (viz) {
    write_region_viz(result.partition, out / "regions.ppm", destination_instructions(result));
  }
}

struct Options {
  fs::path plan, out, latent;
  bool viz = false;
  std::uint64_t seed = 0;
  int steps = 50;
  int activation = 40;
  std::string prompt;
  std::string host = "127.0.0.1";
  int port = 8080;
};

int cmd_plan(const Options& o) {
  write_plan_artifacts(compute_correspondence(load_plan(o.plan)), o.out, o.viz);
  return kExitOk;
}

int cmd_viz(const Options& o) {
  const CorrespondenceResult result = compute_correspondence(load_plan(o.plan));
  if (o.out.has_parent_path()) fs::create_directories(o.out.parent_path());
  write_region_viz(result.partition, o.out, destination_instructions(result));
  return kExitOk;
}

int cmd_simulate(const Options& o) {
  SimulationRequest request;
  request.plan = load_plan(o.plan);
  request.seed = o.seed;
  request.sampler = {o.steps, o.activation};
  request.prompt = o.prompt;
  if (!o.latent.empty()) request.z0 = tensor_to_latent(read_tensor(o.latent));

  const SimulationResult result = simulate(request);
  fs::create_directories(o.out);
  write_tensor(o.out / "z0.tensor", latent_to_tensor(result.z0));
  write_tensor(o.out / "zT.tensor", latent_to_tensor(result.z_t));
  write_tensor(o.out / "output.tensor", latent_to_tensor(result.output));
  write_file(o.out / "metrics.json", dump_json(result.metrics));
  return kExitOk;
}

int cmd_serve(const Options& o) {
  if (o.port < 1 || o.port > 65535) {
    std::cerr << "dragfield: invalid port " << o.port << "\n";
    return kExitBind;
  }
  return run_server(o.host, o.port) ? kExitOk : kExitBind;
}

int exit_code_for(const Error& e) {
  switch (e.kind()) {
    case ErrorKind::ParseError:
    case ErrorKind::CorruptTensor:
    case ErrorKind::BadConfig:
    case ErrorKind::ShapeMismatch:
      return kExitParse;
    default:
      break;
  }
  if (is_geometry_error(e.kind())) return kExitGeometry;
  return kExitFailure;
}

}  // namespace

int run_cli(const std::vector<std::string>& args) {
  configure_logging();
  Options o;
  CLI::App app{"Region-partitioned drag editing toolkit"};
  app.require_subcommand(1);

  auto* plan = app.add_subcommand("plan", "Compute the displacement field, maps and regions");
  plan->add_option("--plan", o.plan, "Drag plan JSON")->required();
  plan->add_option("--out", o.out, "Output directory")->required();
  plan->add_flag("--viz", o.viz, "Also write regions.ppm");

  auto* sim = app.add_subcommand("simulate", "Run the toy invert/edit/sample pipeline");
  sim->add_option("--plan", o.plan, "Drag plan JSON")->required();
  sim->add_option("--out", o.out, "Output directory")->required();
  sim->add_option("--seed", o.seed, "Model and latent seed");
  sim->add_option("--steps", o.steps, "Sampling steps")->capture_default_str();
  sim->add_option("--activation", o.activation, "Steps with identity control")->capture_default_str();
  sim->add_option("--latent", o.latent, "z0 tensor [height, width, channels]");
  sim->add_option("--prompt", o.prompt, "Prompt text");

  auto* viz = app.add_subcommand("viz", "Render the region partition as PPM");
  viz->add_option("--plan", o.plan, "Drag plan JSON")->required();
  viz->add_option("--out", o.out, "Output PPM file")->required();

  auto* serve = app.add_subcommand("serve", "Start the HTTP API");
  serve->add_option("--port", o.port)->capture_default_str();
  serve->add_option("--host", o.host)->capture_default_str();

  std::vector<std::string> rest(args.rbegin(), args.rend() - 1);  // CLI11 wants reversed argv
  try {
    app.parse(rest);
  } catch (const CLI::ParseError& e) {
    const int code = app.exit(e);
    return code == 0 ? kExitOk : kExitParse;
  }

  try {
    if (*plan) return cmd_plan(o);
    if (*sim) return cmd_simulate(o);
    if (*viz) return cmd_viz(o);
    return cmd_serve(o);
  } catch (const Error& e) {
    std::cerr << "dragfield: " << e.what() << "\n";
    return exit_code_for(e);
  } catch (const std::exception& e) {
    std::cerr << "dragfield: " << e.what() << "\n";
    return kExitFailure;
  }
}

int run_cli(int argc, char** argv) { return run_cli(std::vector<std::string>(argv, argv + argc)); }

}  // namespace dragfield
