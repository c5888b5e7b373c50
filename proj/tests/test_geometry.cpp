#include <doctest.h>

#include <cmath>
#include <random>

#include "dragfield/errors.hpp"
#include "dragfield/geometry.hpp"
#include "oracles.hpp"

using namespace dragfield;

namespace {

EditableMask rect_mask(GridSpec grid, int x0, int y0, int x1, int y1) {
  EditableMask m(grid);
  for (int y = y0; y <= y1; ++y)
    for (int x = x0; x <= x1; ++x) m.set({x, y});
  return m;
}

const ReferenceCircle kCircle{{5.0, 5.0}, 5.0 * std::sqrt(2.0)};

}  // namespace

TEST_CASE("grid validation") {
  CHECK_THROWS_AS(GridSpec(1, 5), Error);
  CHECK_THROWS_AS(GridSpec(2048, 1024), Error);
  CHECK_NOTHROW(GridSpec(1024, 1024));
  GridSpec g(3, 4);
  CHECK(g.index({2, 1}) == 5);
  CHECK(g.cell_at(5) == Cell{2, 1});
}

TEST_CASE("reference circle") {
  SUBCASE("square lattice") {
    const auto c = reference_circle(rect_mask(GridSpec(11, 11), 0, 0, 10, 10));
    CHECK(c.center == Point{5, 5});
    CHECK(c.radius == doctest::Approx(7.07107).epsilon(1e-6));
  }
  SUBCASE("single cell falls back to 0.5") {
    EditableMask m(GridSpec(8, 8));
    m.set({3, 3});
    const auto c = reference_circle(m);
    CHECK(c.center == Point{3, 3});
    CHECK(c.radius == 0.5);
  }
  SUBCASE("rectangle") {
    const auto c = reference_circle(rect_mask(GridSpec(8, 8), 0, 0, 4, 2));
    CHECK(c.center == Point{2, 1});
    CHECK(c.radius == doctest::Approx(std::sqrt(5.0)).epsilon(1e-12));
  }
  SUBCASE("empty mask") {
    try {
      reference_circle(EditableMask(GridSpec(4, 4)));
      FAIL("expected EmptyEditableRegion");
    } catch (const Error& e) {
      CHECK(e.kind() == ErrorKind::EmptyEditableRegion);
      CHECK(std::string(e.what()).find("EmptyEditableRegion") != std::string::npos);
    }
  }
}

TEST_CASE("stretch factor worked examples") {
  CHECK(stretch_factor({5, 5}, {5, 5}, kCircle) == 1.0);
  CHECK(std::abs(stretch_factor({5 + 5 * std::sqrt(2.0), 5}, {5, 5}, kCircle)) <= 1e-9);
  const double expected = 1.0 - std::sqrt(2.0) / 2.0;
  const double got = stretch_factor({10, 5}, {5, 5}, kCircle);
  CHECK(std::abs(got - expected) <= 1e-12);
  CHECK(std::abs(got - oracle::lambda(10, 5, 5, 5, {5, 5, 5 * std::sqrt(2.0)})) <= 1e-6);
  CHECK(got == doctest::Approx(0.29289).epsilon(1e-5));
}

TEST_CASE("stretch factor preconditions") {
  auto kind_of = [](auto&& fn) {
    try {
      fn();
    } catch (const Error& e) {
      return e.kind();
    }
    return ErrorKind::IoError;
  };
  CHECK(kind_of([] { stretch_factor({5, 5}, {5 + 5 * std::sqrt(2.0), 5}, kCircle); }) ==
        ErrorKind::HandleOutsideCircle);
  CHECK(kind_of([] { stretch_factor({20, 5}, {5, 5}, kCircle); }) == ErrorKind::PointOutsideCircle);
}

TEST_CASE("lambda is monotone along a ray and matches the bisection oracle") {
  std::mt19937_64 rng(3);
  std::uniform_real_distribution<double> angle(0, 2 * M_PI), frac(0, 0.95);
  const oracle::Circle oc{5, 5, 5 * std::sqrt(2.0)};
  for (int trial = 0; trial < 200; ++trial) {
    const double a = angle(rng), r = frac(rng) * kCircle.radius;
    const Point s{5 + r * std::cos(a), 5 + r * std::sin(a)};
    const double dir = angle(rng);
    const Vec2 u{std::cos(dir), std::sin(dir)};
    double prev = 1.0;
    for (int k = 0; k <= 40; ++k) {
      const Point p = s + (k * 0.05) * u;
      if (norm(p - kCircle.center) > kCircle.radius) break;
      const double l = stretch_factor(p, s, kCircle);
      CHECK(l <= prev + 1e-12);
      CHECK(std::abs(l - oracle::lambda(p.x, p.y, s.x, s.y, oc)) <= 1e-9);
      prev = l;
    }
  }
}

TEST_CASE("per-instruction displacement") {
  CHECK(per_instruction_displacement({5, 5}, {{5, 5}, {7, 5}}, kCircle) == Vec2{2, 0});
  const Vec2 edge = per_instruction_displacement({5 + 5 * std::sqrt(2.0), 5}, {{5, 5}, {9, 1}}, kCircle);
  CHECK(norm(edge) <= 1e-8);
  const Vec2 v = per_instruction_displacement({10, 5}, {{5, 5}, {7, 5}}, kCircle);
  CHECK(v.x == doctest::Approx(0.58579).epsilon(1e-5));
  CHECK(v.y == 0.0);
}

TEST_CASE("wta worked examples") {
  const GridSpec grid(11, 11);
  const EditableMask mask = rect_mask(grid, 0, 0, 10, 10);
  const ReferenceCircle circle = reference_circle(mask);

  SUBCASE("nearest handle wins") {
    const std::vector<DragInstruction> ins{{{2, 2}, {2, 3}}, {{8, 8}, {8, 9}}};
    const auto f = wta_fuse(mask, ins, circle, EditMode::Drag, {});
    const auto& e = f.entries[grid.index({3, 3})];
    CHECK(e.cell == Cell{3, 3});
    CHECK(e.winner == 0);  // the first instruction
    CHECK(e.alpha == doctest::Approx(0.70711).epsilon(1e-5));
    CHECK(f.entries[grid.index({2, 2})].alpha_infinite);
  }
  SUBCASE("move mode translation") {
    const std::vector<DragInstruction> ins{{{4, 4}, {7, 3}}};
    const auto f = wta_fuse(mask, ins, circle, EditMode::Move, {});
    for (const auto& e : f.entries) {
      CHECK(e.displacement == Vec2{3, -1});
      CHECK(e.alpha == 1.0);
    }
  }
  SUBCASE("zero drag is the identity") {
    const std::vector<DragInstruction> ins{{{4, 4}, {4, 4}}, {{6, 2}, {6, 2}}};
    for (const auto& e : wta_fuse(mask, ins, circle, EditMode::Drag, {}).entries) {
      CHECK(e.displacement == Vec2{0, 0});
    }
  }
  SUBCASE("ties go to the lowest index") {
    const std::vector<DragInstruction> ins{{{2, 5}, {2, 6}}, {{8, 5}, {8, 6}}};
    CHECK(wta_fuse(mask, ins, circle, EditMode::Drag, {}).entries[grid.index({5, 5})].winner == 0);
  }
  SUBCASE("handle outside the circle") {
    const std::vector<DragInstruction> ins{{{0, 0}, {1, 1}}};
    CHECK_THROWS_AS(wta_fuse(mask, ins, circle, EditMode::Drag, {}), Error);
    CHECK_NOTHROW(wta_fuse(mask, ins, circle, EditMode::Move, {}));
  }
  SUBCASE("no instructions") {
    CHECK_THROWS_AS(wta_fuse(mask, {}, circle, EditMode::Drag, {}), Error);
  }
}

TEST_CASE("wta matches the brute-force oracle on random instances") {
  std::mt19937_64 rng(20240611);
  for (int trial = 0; trial < 300; ++trial) {
    const auto inst = oracle::random_instance(rng);
    const auto f = wta_fuse(inst.mask, inst.instructions, reference_circle(inst.mask), inst.mode, inst.scale);
    const auto expect = oracle::wta(inst.mask, inst.instructions, inst.mode, inst.scale);
    REQUIRE(f.entries.size() == expect.size());
    for (std::size_t j = 0; j < expect.size(); ++j) {
      const auto& e = f.entries[j];
      const auto& o = expect[j];
      CHECK(e.cell == o.cell);
      CHECK(e.winner == o.winner);
      CHECK(e.alpha_value() == o.alpha);
      const double err = std::hypot(e.displacement.x - o.vx, e.displacement.y - o.vy);
      CHECK(err <= 1e-9 * std::max(1.0, std::hypot(o.vx, o.vy)));
    }
  }
}

TEST_CASE("field properties") {
  std::mt19937_64 rng(99);
  for (int trial = 0; trial < 200; ++trial) {
    auto inst = oracle::random_instance(rng, 32, 6);
    inst.scale = {};
    const auto circle = reference_circle(inst.mask);
    const auto f = wta_fuse(inst.mask, inst.instructions, circle, inst.mode, inst.scale);
    for (const auto& e : f.entries) {
      const auto& w = inst.instructions[std::size_t(e.winner)];
      if (inst.mode == EditMode::Move) {
        CHECK(e.displacement == w.drag());  // constant per Voronoi cell
      } else {
        CHECK(std::abs(cross(e.displacement, w.drag())) <= 1e-9 * std::max(1.0, norm(w.drag())));
        // The fused vector is exactly the winner's own, never a blend.
        CHECK(e.displacement == per_instruction_displacement(to_point(e.cell), w, circle));
      }
    }
  }
}

TEST_CASE("antagonistic drags keep full magnitude") {
  const GridSpec grid(32, 32);
  const EditableMask mask = rect_mask(grid, 4, 4, 27, 27);
  const ReferenceCircle circle = reference_circle(mask);
  const std::vector<DragInstruction> ins{{{15.5, 12}, {15.5, 8}}, {{15.5, 19}, {15.5, 23}}};
  const auto f = wta_fuse(mask, ins, circle, EditMode::Drag, {});
  for (const auto& e : f.entries) {
    const auto& w = ins[std::size_t(e.winner)];
    const Vec2 own = per_instruction_displacement(to_point(e.cell), w, circle);
    CHECK(norm(e.displacement) >= 0.99 * norm(own));
    // Upper half moves up, lower half moves down.
    if (e.cell.y <= 15) CHECK(e.winner == 0);
    else CHECK(e.winner == 1);
    if (norm(own) > 0) CHECK((e.winner == 0 ? e.displacement.y < 0 : e.displacement.y > 0));
  }
}

TEST_CASE("make_scale") {
  CHECK(make_scale(2, 1) == ScaleVector{2, 1});
  CHECK_THROWS_AS(make_scale(0, 1), Error);
  CHECK_THROWS_AS(make_scale(1, NAN), Error);
}
