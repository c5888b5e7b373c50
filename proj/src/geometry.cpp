#include "dragfield/geometry.hpp"

#include <algorithm>
#include <cmath>
#include <limits>
#include <numeric>
#include <string>

#include "dragfield/errors.hpp"
#include "dragfield/kernels.hpp"

namespace dragfield {

double norm(Vec2 v) { return std::hypot(v.x, v.y); }
double dot(Vec2 a, Vec2 b) { return a.x * b.x + a.y * b.y; }
double cross(Vec2 a, Vec2 b) { return a.x * b.y - a.y * b.x; }

GridSpec::GridSpec(int width, int height) : width_(width), height_(height) {
  if (width < 2 || height < 2) {
    throw Error(ErrorKind::InvalidGrid, "grid must be at least 2x2, got " + std::to_string(width) +
                                            "x" + std::to_string(height));
  }
  if (static_cast<std::size_t>(width) * static_cast<std::size_t>(height) > kMaxCells) {
    throw Error(ErrorKind::InvalidGrid, "grid exceeds 2^20 cells");
  }
}

bool GridSpec::contains(Point p) const {
  return std::isfinite(p.x) && std::isfinite(p.y) && p.x >= 0.0 && p.y >= 0.0 &&
         p.x <= width_ - 1 && p.y <= height_ - 1;
}

ProjectedCell project(Point p, const GridSpec& grid) {
  // std::round is half-away-from-zero.
  const double rx = std::round(p.x);
  const double ry = std::round(p.y);
  if (!std::isfinite(rx) || !std::isfinite(ry) || std::fabs(rx) > 1e9 || std::fabs(ry) > 1e9) {
    return {{0, 0}, false};
  }
  const Cell c{static_cast<int>(rx), static_cast<int>(ry)};
  return {c, grid.contains(c)};
}

EditableMask::EditableMask(GridSpec grid) : grid_(grid), bits_(grid.cells(), 0) {}

void EditableMask::set(Cell c, bool value) {
  if (!grid_.contains(c)) throw Error(ErrorKind::InvalidGrid, "mask cell outside grid");
  bits_[grid_.index(c)] = value ? 1 : 0;
}

std::size_t EditableMask::count() const {
  return static_cast<std::size_t>(std::count(bits_.begin(), bits_.end(), std::uint8_t{1}));
}

std::vector<Cell> EditableMask::cells() const {
  std::vector<Cell> out;
  for (std::size_t i = 0; i < bits_.size(); ++i) {
    if (bits_[i]) out.push_back(grid_.cell_at(i));
  }
  return out;
}

ScaleVector make_scale(double rx, double ry) {
  if (!(std::isfinite(rx) && std::isfinite(ry) && rx > 0.0 && ry > 0.0)) {
    throw Error(ErrorKind::BadConfig, "scale components must be > 0");
  }
  return {rx, ry};
}

double FieldEntry::alpha_value() const {
  return alpha_infinite ? std::numeric_limits<double>::infinity() : alpha;
}

ReferenceCircle reference_circle(const EditableMask& mask) {
  int min_x = std::numeric_limits<int>::max(), min_y = min_x;
  int max_x = std::numeric_limits<int>::min(), max_y = max_x;
  bool any = false;
  const auto& grid = mask.grid();
  for (std::size_t i = 0; i < grid.cells(); ++i) {
    if (!mask.bits()[i]) continue;
    const Cell c = grid.cell_at(i);
    min_x = std::min(min_x, c.x);
    max_x = std::max(max_x, c.x);
    min_y = std::min(min_y, c.y);
    max_y = std::max(max_y, c.y);
    any = true;
  }
  if (!any) throw Error(ErrorKind::EmptyEditableRegion, "mask has no editable cells");

  const Point center{0.5 * (min_x + max_x), 0.5 * (min_y + max_y)};
  const double radius = 0.5 * std::hypot(double(max_x - min_x), double(max_y - min_y));
  return {center, radius > 0.0 ? radius : 0.5};
}

double stretch_factor(Point p, Point s, const ReferenceCircle& circle) {
  const Vec2 sc = s - circle.center;
  if (!(norm(sc) < circle.radius - kCircleSlack)) {
    throw Error(ErrorKind::HandleOutsideCircle, "handle (" + std::to_string(s.x) + ", " +
                                                    std::to_string(s.y) +
                                                    ") is not strictly inside the reference circle");
  }
  if (norm(p - circle.center) > circle.radius + kCircleSlack) {
    throw Error(ErrorKind::PointOutsideCircle, "point (" + std::to_string(p.x) + ", " +
                                                   std::to_string(p.y) +
                                                   ") lies outside the reference circle");
  }
  const Vec2 sp = p - s;
  const double dist = norm(sp);
  if (dist <= kCircleSlack) return 1.0;

  // |s + t u - c| = R along the unit direction u; the positive root is the exit.
  const Vec2 u{sp.x / dist, sp.y / dist};
  const double b = dot(u, sc);
  const double c = dot(sc, sc) - circle.radius * circle.radius;  // < 0: s inside
  const double t_exit = -b + std::sqrt(b * b - c);
  // ||p - q|| / ||s - q|| with q = s + t_exit u and p = s + dist u.
  const double lambda = (t_exit - dist) / t_exit;
  return std::clamp(lambda, 0.0, 1.0);
}

Vec2 per_instruction_displacement(Point p, const DragInstruction& instr,
                                  const ReferenceCircle& circle) {
  return stretch_factor(p, instr.handle, circle) * instr.drag();
}

DisplacementField wta_fuse(const EditableMask& mask, std::span<const DragInstruction> instructions,
                           const ReferenceCircle& circle, EditMode mode, ScaleVector scale) {
  if (instructions.empty()) throw Error(ErrorKind::NoInstructions, "no drag instructions");
  const GridSpec& grid = mask.grid();

  if (mode == EditMode::Drag) {
    for (const auto& instr : instructions) {
      if (!(norm(instr.handle - circle.center) < circle.radius - kCircleSlack)) {
        throw Error(ErrorKind::HandleOutsideCircle,
                    "handle (" + std::to_string(instr.handle.x) + ", " +
                        std::to_string(instr.handle.y) +
                        ") is not strictly inside the reference circle");
      }
    }
  }

  const std::vector<Cell> cells = mask.cells();
  const std::size_t m = cells.size();
  std::vector<double> px(m), py(m);
  for (std::size_t j = 0; j < m; ++j) {
    px[j] = cells[j].x;
    py[j] = cells[j].y;
  }

  // Running argmax over instructions; strict '>' keeps the lowest index on ties.
  std::vector<double> best_alpha(m, -1.0);
  std::vector<int> best_index(m, -1);
  std::vector<double> alpha(m);
  const auto& kernels = simd::active();
  for (std::size_t i = 0; i < instructions.size(); ++i) {
    const Point s = instructions[i].handle;
    kernels.inverse_distances(px.data(), py.data(), m, s.x, s.y, alpha.data());
    const ProjectedCell handle_cell = project(s, grid);
    for (std::size_t j = 0; j < m; ++j) {
      double a = alpha[j];
      if (handle_cell.in_bounds && handle_cell.cell == cells[j]) {
        a = std::numeric_limits<double>::infinity();
      }
      if (a > best_alpha[j]) {
        best_alpha[j] = a;
        best_index[j] = static_cast<int>(i);
      }
    }
  }

  DisplacementField field{grid, {}};
  field.entries.reserve(m);
  for (std::size_t j = 0; j < m; ++j) {
    const auto& instr = instructions[static_cast<std::size_t>(best_index[j])];
    const Point p = to_point(cells[j]);
    const Vec2 offset = p - instr.handle;
    const Vec2 scaled{(scale.rx - 1.0) * offset.x, (scale.ry - 1.0) * offset.y};

    FieldEntry e;
    e.cell = cells[j];
    e.winner = best_index[j];
    if (mode == EditMode::Move) {
      e.displacement = instr.drag() + scaled;
      e.alpha = 1.0;
    } else {
      e.displacement = per_instruction_displacement(p, instr, circle) + scaled;
      e.alpha_infinite = std::isinf(best_alpha[j]);
      e.alpha = e.alpha_infinite ? 0.0 : best_alpha[j];
    }
    field.entries.push_back(e);
  }
  return field;
}

}  // namespace dragfield
