#include "dragfield/server.hpp"

#include <atomic>
#include <mutex>

#include <httplib.h>
#include <spdlog/spdlog.h>

#include <json.hpp>

#include "dragfield/errors.hpp"
#include "dragfield/io_formats.hpp"
#include "dragfield/pipeline.hpp"
#include "dragfield/simulate.hpp"

namespace dragfield {

using nlohmann::json;

namespace {

ApiResponse json_response(int status, const json& doc) { return {status, dump_json(doc)}; }

ApiResponse error_response(const Error& e) {
  if (const auto* pe = dynamic_cast<const ParseError*>(&e)) {
    return json_response(400, {{"error", e.what()}, {"path", pe->pointer().empty() ? "/" : pe->pointer()}});
  }
  const ErrorKind kind = e.kind();
  const bool client_fault = is_geometry_error(kind) || kind == ErrorKind::LimitExceeded ||
                            kind == ErrorKind::BadConfig || kind == ErrorKind::ShapeMismatch;
  return json_response(client_fault ? 422 : 500, {{"error", e.what()}});
}

json parse_body(std::string_view body) {
  json doc = json::parse(body, nullptr, false);
  if (doc.is_discarded()) throw ParseError("", "body is not valid JSON");
  if (!doc.is_object()) throw ParseError("", "body must be a JSON object");
  // Mask paths would let a client read server-side files.
  if (doc.contains("mask") && doc["mask"].is_string()) {
    throw ParseError("/mask", "requests must carry the mask inline as RLE");
  }
  return doc;
}

int take_int(json& doc, const char* key, int fallback) {
  auto it = doc.find(key);
  if (it == doc.end()) return fallback;
  if (!it->is_number_integer()) throw ParseError(std::string("/") + key, "expected an integer");
  const auto v = it->get<std::int64_t>();
  if (v < -1'000'000 || v > 1'000'000) throw ParseError(std::string("/") + key, "out of range");
  doc.erase(it);
  return int(v);
}

template <class Fn>
ApiResponse guarded(Fn&& fn) {
  try {
    return fn();
  } catch (const Error& e) {
    return error_response(e);
  } catch (const std::exception& e) {
    return json_response(500, {{"error", e.what()}});
  }
}

}  // namespace

ApiResponse handle_plan(std::string_view body) {
  return guarded([&] {
    const DragPlan plan = parse_drag_plan_json(parse_body(body));
    return json_response(200, plan_document(compute_correspondence(plan)));
  });
}

ApiResponse handle_simulate(std::string_view body, const ServerLimits& limits) {
  return guarded([&] {
    json doc = parse_body(body);
    SimulationRequest request;
    request.sampler.steps = take_int(doc, "steps", request.sampler.steps);
    request.sampler.activation = take_int(doc, "activation", request.sampler.activation);
    if (auto it = doc.find("seed"); it != doc.end()) {
      if (!it->is_number_unsigned() && !(it->is_number_integer() && it->get<std::int64_t>() >= 0)) {
        throw ParseError("/seed", "expected a non-negative integer");
      }
      request.seed = it->get<std::uint64_t>();
      doc.erase(it);
    }
    if (auto it = doc.find("prompt"); it != doc.end()) {
      if (!it->is_string()) throw ParseError("/prompt", "expected a string");
      request.prompt = it->get<std::string>();
      doc.erase(it);
    }
    request.plan = parse_drag_plan_json(doc);

    if (request.sampler.steps > limits.max_steps) {
      throw Error(ErrorKind::LimitExceeded,
                  "steps must be at most " + std::to_string(limits.max_steps));
    }
    if (request.plan.grid.width() > limits.max_width ||
        request.plan.grid.height() > limits.max_height) {
      throw Error(ErrorKind::LimitExceeded, "grid must be at most " +
                                                std::to_string(limits.max_width) + "x" +
                                                std::to_string(limits.max_height));
    }

    const SimulationResult result = simulate(request);
    const std::string ppm = difference_heatmap_ppm(result.output, result.baseline);
    return json_response(200, {{"metrics", result.metrics},
                               {"preview",
                                {{"format", "ppm"},
                                 {"encoding", "base64"},
                                 {"width", request.plan.grid.width()},
                                 {"height", request.plan.grid.height()},
                                 {"data", httplib::detail::base64_encode(ppm)}}}});
  });
}

namespace {

std::mutex g_server_mutex;
httplib::Server* g_server = nullptr;

void send(httplib::Response& res, const ApiResponse& api) {
  res.status = api.status;
  res.set_content(api.body, api.content_type);
}

}  // namespace

bool run_server(const std::string& host, int port, const ServerLimits& limits) {
  httplib::Server server;
  // Without SO_REUSEPORT a second server on a busy port fails to bind instead
  // of silently sharing it.
  server.set_socket_options([](socket_t sock) {
    int yes = 1;
    setsockopt(sock, SOL_SOCKET, SO_REUSEADDR, &yes, sizeof(yes));
  });
  server.set_payload_max_length(limits.max_body_bytes);
  server.set_default_headers({{"Access-Control-Allow-Origin", "*"},
                              {"Access-Control-Allow-Methods", "GET, POST, OPTIONS"},
                              {"Access-Control-Allow-Headers", "Content-Type"}});
  server.set_logger([](const httplib::Request& req, const httplib::Response& res) {
    spdlog::info("{} {} {} {}B", req.method, req.path, res.status, res.body.size());
  });

  server.Get("/health", [](const httplib::Request&, httplib::Response& res) {
    res.set_content("ok", "text/plain");
  });
  server.Options(R"(/api/.*)", [](const httplib::Request&, httplib::Response& res) {
    res.status = 204;
  });
  server.Post("/api/plan", [](const httplib::Request& req, httplib::Response& res) {
    send(res, handle_plan(req.body));
  });
  server.Post("/api/simulate", [limits](const httplib::Request& req, httplib::Response& res) {
    send(res, handle_simulate(req.body, limits));
  });

  if (port < 1 || port > 65535 || !server.bind_to_port(host, port)) {
    spdlog::error("cannot bind {}:{}", host, port);
    return false;
  }
  {
    std::lock_guard lock(g_server_mutex);
    g_server = &server;
  }
  spdlog::info("listening on {}:{}", host, port);
  const bool ok = server.listen_after_bind();
  {
    std::lock_guard lock(g_server_mutex);
    g_server = nullptr;
  }
  return ok;
}

void stop_server() {
  std::lock_guard lock(g_server_mutex);
  if (g_server) g_server->stop();
}

}  // namespace dragfield
