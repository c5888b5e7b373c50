#pragma once

// HTTP API for the authoring UI. Handlers are pure functions of the request
// body so they can be exercised without a socket.

#include <cstdint>
#include <string>
#include <string_view>

namespace dragfield {

struct ApiResponse {
  int status = 200;
  std::string body;
  std::string content_type = "application/json";
};

struct ServerLimits {
  int max_steps = 64;
  int max_width = 32;
  int max_height = 32;
  std::size_t max_body_bytes = std::size_t{8} << 20;
};

/// POST /api/plan. Same bytes as the plan.json written by `dragfield plan`.
ApiResponse handle_plan(std::string_view body);

/// POST /api/simulate: plan fields plus optional seed, steps, activation, prompt.
ApiResponse handle_simulate(std::string_view body, const ServerLimits& limits = {});

/// Blocks until stop_server() or a fatal error. Returns false when the socket
/// cannot be bound.
bool run_server(const std::string& host, int port, const ServerLimits& limits = {});

/// Asks a running run_server() to return.
void stop_server();

}  // namespace dragfield
