#include <doctest.h>

#include <bit>
#include <filesystem>
#include <random>

#include <unistd.h>

#include "dragfield/errors.hpp"
#include "dragfield/io_formats.hpp"

using namespace dragfield;
namespace fs = std::filesystem;

namespace {

struct TempDir {
  fs::path path;
  TempDir() {
    static int counter = 0;
    path = fs::temp_directory_path() / ("dragfield_io_" + std::to_string(::getpid()) + "_" + std::to_string(counter++));
    fs::create_directories(path);
  }
  ~TempDir() { fs::remove_all(path); }
};

std::string pointer_of(std::string_view text) {
  try {
    parse_drag_plan(text);
  } catch (const ParseError& e) {
    return e.pointer();
  }
  return "<no error>";
}

constexpr const char* kMinimal = R"({
  "mode": "drag",
  "grid": {"width": 4, "height": 4},
  "mask": {"rle": [[0, 5], [1, 2], [0, 2], [1, 2], [0, 5]]},
  "instructions": [{"handle": [1, 1], "target": [2, 2]}]
})";

}  // namespace

TEST_CASE("minimal drag plan parses") {
  const DragPlan p = parse_drag_plan(kMinimal);
  CHECK(p.mode == EditMode::Drag);
  CHECK(p.grid == GridSpec(4, 4));
  CHECK(p.mask.count() == 4);
  CHECK(p.mask.editable({1, 1}));
  CHECK(p.instructions.size() == 1);
  CHECK(p.instructions[0].target == Point{2, 2});
  CHECK(p.trans_width == 2);
  CHECK(p.scale == ScaleVector{1, 1});
}

TEST_CASE("plan schema violations carry a pointer") {
  CHECK(pointer_of(R"({"mode": "drag", "grid": {"width": 4, "height": 4},
      "mask": {"rle": [[0, 16]]}, "instructions": [{"handle": [1, 1], "target": [4, 2]}]})") ==
        "/instructions/0/target");
  CHECK(pointer_of(R"({"mode": "fly", "grid": {"width": 4, "height": 4}, "mask": {"rle": [[0, 16]]}, "instructions": []})") == "/mode");
  CHECK(pointer_of(R"({"mode": "drag", "grid": {"width": 4, "height": 4}, "mask": {"rle": [[0, 15]]}, "instructions": []})") == "/mask/rle");
  CHECK(pointer_of(R"({"mode": "drag", "grid": {"width": 4, "height": 4}, "mask": {"rle": [[0, 16]]}, "instructions": [], "extra": 1})") == "/extra");
  CHECK(pointer_of(R"({"mode": "drag", "grid": {"width": 4, "height": 4}, "mask": {"rle": [[0, 16]]}})") == "/instructions");
  CHECK(pointer_of(R"({"mode": "drag", "grid": {"width": 1, "height": 4}, "mask": {"rle": [[0, 4]]}, "instructions": []})") == "/grid");
  CHECK(pointer_of(R"({"mode": "drag", "grid": {"width": 4, "height": 4}, "mask": {"rle": [[0, 16]]}, "instructions": [], "scale": [0, 1]})") == "/scale/0");
  CHECK(pointer_of("{not json") == "");
  CHECK(pointer_of(R"({"mode": "drag", "grid": {"width": 4, "height": 4}, "mask": {"rle": [[0, 16]]}, "instructions": [], "format_version": 2})") == "/format_version");
}

TEST_CASE("move plan with scale") {
  const DragPlan p = parse_drag_plan(R"({"mode": "move", "scale": [2, 1], "grid": {"width": 4, "height": 4},
      "mask": {"rle": [[1, 16]]}, "instructions": [{"handle": [0, 0], "target": [1, 0]}]})");
  CHECK(p.mode == EditMode::Move);
  CHECK(p.scale == ScaleVector{2, 1});
}

TEST_CASE("plan JSON round trip") {
  DragPlan p = parse_drag_plan(kMinimal);
  p.noise_seed = 18446744073709551615ull;
  p.instructions.push_back({{0.25, 3}, {3, 0.125}});
  const DragPlan q = parse_drag_plan(dump_json(drag_plan_to_json(p)));
  CHECK(p == q);
  CHECK(dump_json(drag_plan_to_json(q)) == dump_json(drag_plan_to_json(p)));
}

TEST_CASE("RLE encode/decode") {
  const std::vector<std::uint8_t> labels{0, 0, 3, 3, 3, 1, 0};
  const auto runs = encode_rle(labels);
  CHECK(runs.dump() == "[[0,2],[3,3],[1,1],[0,1]]");
  CHECK(decode_rle(runs, labels.size(), 3, "/r") == labels);
  CHECK_THROWS_AS(decode_rle(runs, labels.size(), 2, "/r"), ParseError);
  CHECK_THROWS_AS(decode_rle(nlohmann::json::parse("[[0,0]]"), 0, 3, "/r"), ParseError);
  CHECK(encode_rle({}).dump() == "[]");
}

TEST_CASE("tensor round trip") {
  TempDir dir;
  std::mt19937 rng(1);
  std::normal_distribution<float> d;
  Tensor t{{16, 16, 4}, std::vector<float>(16 * 16 * 4)};
  for (auto& x : t.data) x = d(rng);
  t.data[3] = -0.0f;
  t.data[4] = std::numeric_limits<float>::infinity();
  write_tensor(dir.path / "a.tensor", t);
  const Tensor back = read_tensor(dir.path / "a.tensor");
  CHECK(back.shape == t.shape);
  REQUIRE(back.data.size() == t.data.size());
  for (std::size_t i = 0; i < t.data.size(); ++i) {
    CHECK(std::bit_cast<std::uint32_t>(back.data[i]) == std::bit_cast<std::uint32_t>(t.data[i]));
  }
  CHECK(fs::exists(tensor_sidecar_path(dir.path / "a.tensor")));
  const auto sidecar = nlohmann::json::parse(read_file(tensor_sidecar_path(dir.path / "a.tensor")));
  CHECK(sidecar["dtype"] == "f32");
  CHECK(sidecar["format_version"] == 1);

  SUBCASE("truncated payload") {
    const std::string bytes = read_file(dir.path / "a.tensor");
    write_file(dir.path / "a.tensor", bytes.substr(0, bytes.size() - 4));
    try {
      read_tensor(dir.path / "a.tensor");
      FAIL("expected CorruptTensor");
    } catch (const Error& e) {
      CHECK(e.kind() == ErrorKind::CorruptTensor);
    }
  }
  SUBCASE("zero-length tensor") {
    write_tensor(dir.path / "z.tensor", Tensor{{0}, {}});
    const Tensor z = read_tensor(dir.path / "z.tensor");
    CHECK(z.shape == std::vector<std::int64_t>{0});
    CHECK(z.data.empty());
  }
}

TEST_CASE("latent tensor conversion") {
  LatentGrid z(GridSpec(3, 2), 2, {1, 2, 3, 4, 5, 6, 7, 8, 9, 10, 11, 12});
  const Tensor t = latent_to_tensor(z);
  CHECK(t.shape == std::vector<std::int64_t>{2, 3, 2});
  CHECK(tensor_to_latent(t) == z);
  CHECK_THROWS_AS(tensor_to_latent(Tensor{{6, 2}, std::vector<float>(12)}), Error);
}

TEST_CASE("PGM masks") {
  TempDir dir;
  EditableMask m(GridSpec(5, 3));
  m.set({1, 1});
  m.set({4, 2});
  write_pgm_mask(dir.path / "m.pgm", m);
  CHECK(read_pgm_mask(dir.path / "m.pgm", GridSpec(5, 3)) == m);
  CHECK_THROWS_AS(read_pgm_mask(dir.path / "m.pgm", GridSpec(3, 5)), ParseError);

  write_file(dir.path / "ascii.pgm", "P2\n# comment\n3 2\n255\n0 9 0\n0 0 255\n");
  const EditableMask a = read_pgm_mask(dir.path / "ascii.pgm", GridSpec(3, 2));
  CHECK(a.count() == 2);
  CHECK(a.editable({1, 0}));
  CHECK(a.editable({2, 1}));

  // A plan can point at a PGM next to it.
  write_file(dir.path / "plan.json", R"({"mode": "drag", "grid": {"width": 5, "height": 3},
      "mask": "m.pgm", "instructions": []})");
  CHECK(parse_drag_plan(read_file(dir.path / "plan.json"), dir.path).mask == m);
}

TEST_CASE("region images") {
  SUBCASE("all background is uniform gray") {
    const std::string ppm = encode_region_ppm(RegionPartition(GridSpec(4, 3)));
    const std::string header = "P6\n4 3\n255\n";
    REQUIRE(ppm.size() == header.size() + 36);
    CHECK(ppm.substr(0, header.size()) == header);
    for (std::size_t i = header.size(); i < ppm.size(); ++i) CHECK(static_cast<unsigned char>(ppm[i]) == 128);
  }
  SUBCASE("colors per region") {
    std::vector<Region> labels{Region::Background, Region::Destination, Region::Inpaint, Region::Transition};
    const std::string ppm = encode_region_ppm(RegionPartition(GridSpec(2, 2), labels), std::vector<int>{-1, 1, -1, -1});
    const std::size_t off = std::string("P6\n2 2\n255\n").size();
    CHECK(static_cast<unsigned char>(ppm[off + 3]) == kAlternateDestinationColor[0]);
    CHECK(static_cast<unsigned char>(ppm[off + 6]) == region_color(Region::Inpaint)[0]);
    CHECK(static_cast<unsigned char>(ppm[off + 10]) == region_color(Region::Transition)[1]);
  }
}

TEST_CASE("missing files") {
  CHECK_THROWS_AS(read_file("/nonexistent/dragfield/file"), Error);
}
