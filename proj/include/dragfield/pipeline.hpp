#pragma once

// Drag plan -> displacement field -> matching maps -> region partition, and
// the JSON document shared by `dragfield plan` and POST /api/plan.

#include <optional>
#include <vector>

#include <json.hpp>

#include "dragfield/correspondence.hpp"
#include "dragfield/geometry.hpp"
#include "dragfield/io_formats.hpp"

namespace dragfield {

struct CorrespondenceResult {
  /// Absent for a plan without instructions (identity edit).
  std::optional<DisplacementField> field;
  MatchingMaps maps;
  RegionPartition partition;
  bool empty_destination = false;
};

/// Throws geometry errors (EmptyEditableRegion, HandleNotEditable,
/// HandleOutsideCircle, ...). A plan without instructions yields an all-bg
/// partition.
CorrespondenceResult compute_correspondence(const DragPlan& plan);

/// Adds the warped latent built from z_t.
CorrespondencePlan make_correspondence_plan(const DragPlan& plan,
                                            const CorrespondenceResult& result,
                                            const LatentGrid& z_t);

/// {format_version, grid, regions, field, maps, stats}.
nlohmann::json plan_document(const CorrespondenceResult& result);

struct PlanDocument {
  RegionPartition partition;
  MatchingMaps maps;
  std::vector<FieldEntry> field;
};

/// Inverse of plan_document. Throws ParseError.
PlanDocument parse_plan_document(const nlohmann::json& doc);

/// [height, width, 4]: vx, vy, winner, alpha per cell; winner -1 and zeros
/// outside the editable set, alpha +inf on handle cells.
Tensor field_tensor(const CorrespondenceResult& result);

/// [height, width]: A(x) on destinations, 0 elsewhere.
Tensor weights_tensor(const CorrespondenceResult& result);

/// Instruction index of the matched source for each destination cell, -1 elsewhere.
std::vector<int> destination_instructions(const CorrespondenceResult& result);

}  // namespace dragfield
