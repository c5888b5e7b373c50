#pragma once

// Lattice types, drag instructions and the winner-takes-all displacement field.

#include <compare>
#include <cstddef>
#include <cstdint>
#include <span>
#include <vector>

namespace dragfield {

struct Vec2 {
  double x = 0.0;
  double y = 0.0;

  friend Vec2 operator+(Vec2 a, Vec2 b) { return {a.x + b.x, a.y + b.y}; }
  friend Vec2 operator-(Vec2 a, Vec2 b) { return {a.x - b.x, a.y - b.y}; }
  friend Vec2 operator*(double s, Vec2 v) { return {s * v.x, s * v.y}; }
  friend bool operator==(Vec2, Vec2) = default;
};

/// Continuous position in grid units; x is the column, y the row.
using Point = Vec2;

double norm(Vec2 v);
double dot(Vec2 a, Vec2 b);
double cross(Vec2 a, Vec2 b);

/// Integer lattice cell.
struct Cell {
  int x = 0;
  int y = 0;

  friend auto operator<=>(const Cell&, const Cell&) = default;
};

inline Point to_point(Cell c) { return {static_cast<double>(c.x), static_cast<double>(c.y)}; }

class GridSpec {
 public:
  static constexpr std::size_t kMaxCells = std::size_t{1} << 20;

  /// Throws InvalidGrid unless width, height >= 2 and width*height <= 2^20.
  GridSpec(int width, int height);

  int width() const { return width_; }
  int height() const { return height_; }
  std::size_t cells() const { return static_cast<std::size_t>(width_) * height_; }

  bool contains(Cell c) const { return c.x >= 0 && c.y >= 0 && c.x < width_ && c.y < height_; }
  /// Inside the closed rectangle [0, w-1] x [0, h-1].
  bool contains(Point p) const;

  std::size_t index(Cell c) const { return static_cast<std::size_t>(c.y) * width_ + c.x; }
  Cell cell_at(std::size_t index) const {
    return {static_cast<int>(index % width_), static_cast<int>(index / width_)};
  }

  friend bool operator==(const GridSpec&, const GridSpec&) = default;

 private:
  int width_;
  int height_;
};

/// Result of rounding a point to the lattice.
struct ProjectedCell {
  Cell cell;
  bool in_bounds = false;
};

/// Rounds each coordinate half-away-from-zero. Out-of-grid cells are flagged,
/// not clamped.
ProjectedCell project(Point p, const GridSpec& grid);

struct DragInstruction {
  Point handle;
  Point target;

  Vec2 drag() const { return target - handle; }
  friend bool operator==(const DragInstruction&, const DragInstruction&) = default;
};

/// Editable cells of the latent grid.
class EditableMask {
 public:
  explicit EditableMask(GridSpec grid);

  const GridSpec& grid() const { return grid_; }
  bool editable(Cell c) const { return grid_.contains(c) && bits_[grid_.index(c)] != 0; }
  void set(Cell c, bool value = true);

  std::size_t count() const;
  bool empty() const { return count() == 0; }

  /// Editable cells in row-major order.
  std::vector<Cell> cells() const;
  std::span<const std::uint8_t> bits() const { return bits_; }

  friend bool operator==(const EditableMask&, const EditableMask&) = default;

 private:
  GridSpec grid_;
  std::vector<std::uint8_t> bits_;
};

struct ReferenceCircle {
  Point center;
  double radius = 0.0;
};

enum class EditMode { Drag, Move };

struct ScaleVector {
  double rx = 1.0;
  double ry = 1.0;

  friend bool operator==(const ScaleVector&, const ScaleVector&) = default;
};

/// Throws BadConfig unless both components are finite and > 0.
ScaleVector make_scale(double rx, double ry);

struct FieldEntry {
  Cell cell;
  Vec2 displacement;
  int winner = 0;
  /// Finite part of alpha; meaningless when alpha_infinite is set.
  double alpha = 0.0;
  bool alpha_infinite = false;

  double alpha_value() const;
};

/// One entry per editable cell, row-major.
struct DisplacementField {
  GridSpec grid;
  std::vector<FieldEntry> entries;
};

/// Circle circumscribing the bounding rectangle of the editable cells.
/// A single-cell region gets radius 0.5.
ReferenceCircle reference_circle(const EditableMask& mask);

/// Slack used for every on-circle / at-handle comparison.
inline constexpr double kCircleSlack = 1e-9;

/// Elastic stretch factor: ||p - q|| / ||s - q|| with q the exit point of the
/// ray s -> p through the circle. Returns exactly 1 at the handle.
double stretch_factor(Point p, Point s, const ReferenceCircle& circle);

/// lambda * (target - handle).
Vec2 per_instruction_displacement(Point p, const DragInstruction& instr,
                                  const ReferenceCircle& circle);

/// Winner-takes-all fusion. Each editable cell follows only its nearest
/// handle (alpha = 1/distance, infinite on the handle's own lattice cell;
/// ties go to the lowest instruction index).
DisplacementField wta_fuse(const EditableMask& mask, std::span<const DragInstruction> instructions,
                           const ReferenceCircle& circle, EditMode mode, ScaleVector scale);

}  // namespace dragfield
