#include "dragfield/pipeline.hpp"

#include <cmath>
#include <limits>
#include <string>

#include "dragfield/errors.hpp"

namespace dragfield {

using nlohmann::json;

CorrespondenceResult compute_correspondence(const DragPlan& plan) {
  const GridSpec& grid = plan.grid;
  if (!(plan.mask.grid() == grid)) throw Error(ErrorKind::ShapeMismatch, "mask grid differs from plan grid");
  if (plan.instructions.empty()) {
    return {std::nullopt, MatchingMaps(grid), RegionPartition(grid), false};
  }
  if (plan.mask.empty()) {
    throw Error(ErrorKind::EmptyEditableRegion, "plan has instructions but no editable cells");
  }
  for (std::size_t i = 0; i < plan.instructions.size(); ++i) {
    const ProjectedCell cell = project(plan.instructions[i].handle, grid);
    if (!cell.in_bounds || !plan.mask.editable(cell.cell)) {
      throw Error(ErrorKind::HandleNotEditable,
                  "handle of instruction " + std::to_string(i) + " is not on an editable cell");
    }
  }

  const ReferenceCircle circle = reference_circle(plan.mask);
  DisplacementField field = wta_fuse(plan.mask, plan.instructions, circle, plan.mode, plan.scale);
  CollisionResult collisions = resolve_collisions(field);
  const auto destinations = collisions.maps.destinations();
  RegionPartition partition = partition_regions(plan.mask, destinations, plan.trans_width);
  return {std::move(field), std::move(collisions.maps), std::move(partition),
          collisions.empty_destination};
}

CorrespondencePlan make_correspondence_plan(const DragPlan& plan,
                                            const CorrespondenceResult& result,
                                            const LatentGrid& z_t) {
  return {result.partition, result.maps,
          build_warped_latent(z_t, result.partition, result.maps, plan.noise_seed),
          plan.noise_seed};
}

namespace {

json alpha_json(const FieldEntry& e) {
  if (e.alpha_infinite) return "inf";
  return e.alpha;
}

}  // namespace

json plan_document(const CorrespondenceResult& result) {
  const GridSpec& grid = result.partition.grid();
  std::vector<std::uint8_t> labels(grid.cells());
  for (std::size_t i = 0; i < labels.size(); ++i) {
    labels[i] = static_cast<std::uint8_t>(result.partition.labels()[i]);
  }

  json field = json::array();
  if (result.field) {
    for (const auto& e : result.field->entries) {
      field.push_back({e.cell.x, e.cell.y, e.displacement.x, e.displacement.y, e.winner,
                       alpha_json(e)});
    }
  }

  json m = json::array(), a = json::array();
  for (const auto& match : result.maps.matches()) {
    m.push_back({match.destination.x, match.destination.y, match.source.x, match.source.y});
    a.push_back(match.weight);
  }

  return {
      {"format_version", kFormatVersion},
      {"grid", {{"width", grid.width()}, {"height", grid.height()}}},
      {"regions", {{"labels", {"bg", "dst", "inp", "trans"}}, {"rle", encode_rle(labels)}}},
      {"field", field},
      {"maps", {{"M", m}, {"A", a}}},
      {"stats",
       {{"bg", result.partition.count(Region::Background)},
        {"dst", result.partition.count(Region::Destination)},
        {"inp", result.partition.count(Region::Inpaint)},
        {"trans", result.partition.count(Region::Transition)},
        {"empty_destination", result.empty_destination}}},
  };
}

namespace {

int cell_coord(const json& v, const std::string& ptr, int limit) {
  if (!v.is_number_integer()) throw ParseError(ptr, "expected an integer coordinate");
  const auto i = v.get<std::int64_t>();
  if (i < 0 || i >= limit) throw ParseError(ptr, "coordinate outside the grid");
  return int(i);
}

double real(const json& v, const std::string& ptr) {
  if (!v.is_number()) throw ParseError(ptr, "expected a number");
  return v.get<double>();
}

}  // namespace

PlanDocument parse_plan_document(const json& doc) {
  if (!doc.is_object()) throw ParseError("", "plan document must be an object");
  for (const char* key : {"grid", "regions", "field", "maps"}) {
    if (!doc.contains(key)) throw ParseError(std::string("/") + key, "missing required field");
  }
  const json& g = doc["grid"];
  if (!g.is_object() || !g.contains("width") || !g.contains("height") ||
      !g["width"].is_number_integer() || !g["height"].is_number_integer()) {
    throw ParseError("/grid", "expected {width, height}");
  }
  GridSpec grid(2, 2);
  try {
    grid = GridSpec(g["width"].get<int>(), g["height"].get<int>());
  } catch (const Error& e) {
    throw ParseError("/grid", e.what());
  }

  const json& regions = doc["regions"];
  if (!regions.is_object() || !regions.contains("rle")) {
    throw ParseError("/regions/rle", "missing required field");
  }
  const auto raw = decode_rle(regions["rle"], grid.cells(), 3, "/regions/rle");
  std::vector<Region> labels(raw.size());
  for (std::size_t i = 0; i < raw.size(); ++i) labels[i] = static_cast<Region>(raw[i]);

  const json& maps = doc["maps"];
  if (!maps.is_object() || !maps.contains("M") || !maps.contains("A") || !maps["M"].is_array() ||
      !maps["A"].is_array() || maps["M"].size() != maps["A"].size()) {
    throw ParseError("/maps", "expected parallel arrays M and A");
  }
  std::vector<Match> matches;
  for (std::size_t i = 0; i < maps["M"].size(); ++i) {
    const std::string ptr = "/maps/M/" + std::to_string(i);
    const json& row = maps["M"][i];
    if (!row.is_array() || row.size() != 4) throw ParseError(ptr, "expected [dst_x, dst_y, src_x, src_y]");
    Match m;
    m.destination = {cell_coord(row[0], ptr + "/0", grid.width()),
                     cell_coord(row[1], ptr + "/1", grid.height())};
    m.source = {cell_coord(row[2], ptr + "/2", grid.width()),
                cell_coord(row[3], ptr + "/3", grid.height())};
    m.weight = real(maps["A"][i], "/maps/A/" + std::to_string(i));
    matches.push_back(m);
  }

  std::vector<FieldEntry> field;
  if (!doc["field"].is_array()) throw ParseError("/field", "expected an array");
  for (std::size_t i = 0; i < doc["field"].size(); ++i) {
    const std::string ptr = "/field/" + std::to_string(i);
    const json& row = doc["field"][i];
    if (!row.is_array() || row.size() != 6) {
      throw ParseError(ptr, "expected [x, y, vx, vy, winner, alpha]");
    }
    FieldEntry e;
    e.cell = {cell_coord(row[0], ptr + "/0", grid.width()),
              cell_coord(row[1], ptr + "/1", grid.height())};
    e.displacement = {real(row[2], ptr + "/2"), real(row[3], ptr + "/3")};
    if (!row[4].is_number_integer()) throw ParseError(ptr + "/4", "expected an integer");
    e.winner = row[4].get<int>();
    if (row[5].is_string() && row[5] == "inf") {
      e.alpha_infinite = true;
    } else {
      e.alpha = real(row[5], ptr + "/5");
    }
    field.push_back(e);
  }

  try {
    return {RegionPartition(grid, std::move(labels)), MatchingMaps(grid, std::move(matches)),
            std::move(field)};
  } catch (const ParseError&) {
    throw;
  } catch (const Error& e) {
    throw ParseError("/maps", e.what());
  }
}

Tensor field_tensor(const CorrespondenceResult& result) {
  const GridSpec& grid = result.partition.grid();
  Tensor t{{grid.height(), grid.width(), 4}, std::vector<float>(grid.cells() * 4, 0.0f)};
  for (std::size_t i = 0; i < grid.cells(); ++i) t.data[i * 4 + 2] = -1.0f;
  if (result.field) {
    for (const auto& e : result.field->entries) {
      float* px = t.data.data() + grid.index(e.cell) * 4;
      px[0] = static_cast<float>(e.displacement.x);
      px[1] = static_cast<float>(e.displacement.y);
      px[2] = static_cast<float>(e.winner);
      px[3] = e.alpha_infinite ? std::numeric_limits<float>::infinity()
                               : static_cast<float>(e.alpha);
    }
  }
  return t;
}

Tensor weights_tensor(const CorrespondenceResult& result) {
  const GridSpec& grid = result.partition.grid();
  Tensor t{{grid.height(), grid.width()}, std::vector<float>(grid.cells(), 0.0f)};
  for (const auto& m : result.maps.matches()) {
    t.data[grid.index(m.destination)] = static_cast<float>(m.weight);
  }
  return t;
}

std::vector<int> destination_instructions(const CorrespondenceResult& result) {
  const GridSpec& grid = result.partition.grid();
  std::vector<int> out(grid.cells(), -1);
  if (!result.field) return out;
  std::vector<int> winner_at(grid.cells(), -1);
  for (const auto& e : result.field->entries) winner_at[grid.index(e.cell)] = e.winner;
  for (const auto& m : result.maps.matches()) {
    out[grid.index(m.destination)] = winner_at[grid.index(m.source)];
  }
  return out;
}

}  // namespace dragfield
