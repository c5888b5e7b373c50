#include "dragfield/io_formats.hpp"

#include <bit>
#include <cmath>
#include <fstream>
#include <limits>
#include <sstream>

#include "dragfield/errors.hpp"

namespace dragfield {

using nlohmann::json;

namespace {

std::string child(const std::string& ptr, std::string_view key) {
  return ptr + "/" + std::string(key);
}
std::string child(const std::string& ptr, std::size_t index) {
  return ptr + "/" + std::to_string(index);
}

void reject_unknown(const json& obj, std::initializer_list<std::string_view> allowed,
                    const std::string& ptr) {
  for (const auto& [key, value] : obj.items()) {
    bool known = false;
    for (auto a : allowed) known = known || key == a;
    if (!known) throw ParseError(child(ptr, key), "unknown field");
  }
}

const json& require(const json& obj, std::string_view key, const std::string& ptr) {
  auto it = obj.find(std::string(key));
  if (it == obj.end()) throw ParseError(child(ptr, key), "missing required field");
  return *it;
}

double finite_number(const json& v, const std::string& ptr) {
  if (!v.is_number()) throw ParseError(ptr, "expected a number");
  const double d = v.get<double>();
  if (!std::isfinite(d)) throw ParseError(ptr, "expected a finite number");
  return d;
}

std::int64_t integer(const json& v, const std::string& ptr, std::int64_t lo, std::int64_t hi) {
  if (!v.is_number_integer()) throw ParseError(ptr, "expected an integer");
  if (v.is_number_unsigned() && v.get<std::uint64_t>() > std::uint64_t(hi)) {
    throw ParseError(ptr, "integer out of range");
  }
  const auto i = v.get<std::int64_t>();
  if (i < lo || i > hi) throw ParseError(ptr, "integer out of range");
  return i;
}

Point parse_point(const json& v, const std::string& ptr, const GridSpec& grid) {
  if (!v.is_array() || v.size() != 2) throw ParseError(ptr, "expected [x, y]");
  const Point p{finite_number(v[0], child(ptr, 0)), finite_number(v[1], child(ptr, 1))};
  if (!grid.contains(p)) throw ParseError(ptr, "point lies outside the grid");
  return p;
}

void write_le_u32(std::string& out, std::uint32_t v) {
  for (int i = 0; i < 4; ++i) out.push_back(static_cast<char>((v >> (8 * i)) & 0xff));
}

std::uint32_t read_le_u32(const unsigned char* p) {
  return std::uint32_t(p[0]) | (std::uint32_t(p[1]) << 8) | (std::uint32_t(p[2]) << 16) |
         (std::uint32_t(p[3]) << 24);
}

// Netpbm header tokenizer: skips whitespace and '#' comments.
class PnmReader {
 public:
  explicit PnmReader(const std::string& bytes) : bytes_(bytes) {}

  std::string token() {
    skip_space();
    std::string out;
    while (pos_ < bytes_.size() && !std::isspace(static_cast<unsigned char>(bytes_[pos_]))) {
      out.push_back(bytes_[pos_++]);
    }
    return out;
  }

  long number() {
    const std::string t = token();
    if (t.empty() || t.find_first_not_of("0123456789") != std::string::npos) return -1;
    return std::stol(t);
  }

  // Exactly one whitespace byte separates the header from binary samples.
  std::size_t binary_start() const { return pos_ + 1; }

 private:
  void skip_space() {
    while (pos_ < bytes_.size()) {
      if (bytes_[pos_] == '#') {
        while (pos_ < bytes_.size() && bytes_[pos_] != '\n') ++pos_;
      } else if (std::isspace(static_cast<unsigned char>(bytes_[pos_]))) {
        ++pos_;
      } else {
        break;
      }
    }
  }

  const std::string& bytes_;
  std::size_t pos_ = 0;
};

}  // namespace

std::string read_file(const std::filesystem::path& path) {
  std::ifstream in(path, std::ios::binary);
  if (!in) throw Error(ErrorKind::IoError, "cannot open " + path.string());
  std::ostringstream ss;
  ss << in.rdbuf();
  return ss.str();
}

void write_file(const std::filesystem::path& path, std::string_view bytes) {
  std::ofstream out(path, std::ios::binary | std::ios::trunc);
  if (!out) throw Error(ErrorKind::IoError, "cannot write " + path.string());
  out.write(bytes.data(), std::streamsize(bytes.size()));
  if (!out) throw Error(ErrorKind::IoError, "write failed for " + path.string());
}

std::string dump_json(const json& doc) { return doc.dump(2) + "\n"; }

// --- RLE -------------------------------------------------------------------

json encode_rle(std::span<const std::uint8_t> labels) {
  json runs = json::array();
  std::size_t i = 0;
  while (i < labels.size()) {
    std::size_t j = i;
    while (j < labels.size() && labels[j] == labels[i]) ++j;
    runs.push_back(json::array({int(labels[i]), j - i}));
    i = j;
  }
  return runs;
}

std::vector<std::uint8_t> decode_rle(const json& runs, std::size_t expected, int max_label,
                                     const std::string& pointer) {
  if (!runs.is_array()) throw ParseError(pointer, "expected an array of [label, count] runs");
  std::vector<std::uint8_t> out;
  out.reserve(expected);
  for (std::size_t r = 0; r < runs.size(); ++r) {
    const std::string ptr = child(pointer, r);
    const json& run = runs[r];
    if (!run.is_array() || run.size() != 2) throw ParseError(ptr, "expected [label, count]");
    const auto label = integer(run[0], child(ptr, 0), 0, max_label);
    const auto count = integer(run[1], child(ptr, 1), 1, std::int64_t(expected));
    if (out.size() + std::size_t(count) > expected) {
      throw ParseError(ptr, "runs cover more than " + std::to_string(expected) + " cells");
    }
    out.insert(out.end(), std::size_t(count), std::uint8_t(label));
  }
  if (out.size() != expected) {
    throw ParseError(pointer, "runs cover " + std::to_string(out.size()) + " cells, expected " +
                                  std::to_string(expected));
  }
  return out;
}

// --- drag plan ---------------------------------------------------------------

DragPlan parse_drag_plan(std::string_view bytes, const std::filesystem::path& base_dir) {
  json doc;
  try {
    doc = json::parse(bytes.begin(), bytes.end());
  } catch (const json::parse_error& e) {
    throw ParseError("", std::string("malformed JSON: ") + e.what());
  }
  return parse_drag_plan_json(doc, base_dir);
}

DragPlan parse_drag_plan_json(const json& doc, const std::filesystem::path& base_dir) {
  const std::string root;
  if (!doc.is_object()) throw ParseError(root, "plan must be a JSON object");
  reject_unknown(doc,
                 {"format_version", "mode", "grid", "scale", "mask", "instructions", "trans_width",
                  "noise_seed"},
                 root);

  DragPlan plan;
  if (auto it = doc.find("format_version"); it != doc.end()) {
    if (integer(*it, "/format_version", 0, 1 << 20) != kFormatVersion) {
      throw ParseError("/format_version", "unsupported format version");
    }
  }

  const json& mode = require(doc, "mode", root);
  if (mode == "drag") {
    plan.mode = EditMode::Drag;
  } else if (mode == "move") {
    plan.mode = EditMode::Move;
  } else {
    throw ParseError("/mode", "expected \"drag\" or \"move\"");
  }

  const json& grid = require(doc, "grid", root);
  if (!grid.is_object()) throw ParseError("/grid", "expected {width, height}");
  reject_unknown(grid, {"width", "height"}, "/grid");
  const auto width = integer(require(grid, "width", "/grid"), "/grid/width", 1, 1 << 20);
  const auto height = integer(require(grid, "height", "/grid"), "/grid/height", 1, 1 << 20);
  try {
    plan.grid = GridSpec(int(width), int(height));
  } catch (const Error& e) {
    throw ParseError("/grid", e.what());
  }

  if (auto it = doc.find("scale"); it != doc.end()) {
    if (!it->is_array() || it->size() != 2) throw ParseError("/scale", "expected [rx, ry]");
    const double rx = finite_number((*it)[0], "/scale/0");
    const double ry = finite_number((*it)[1], "/scale/1");
    if (rx <= 0.0) throw ParseError("/scale/0", "scale must be > 0");
    if (ry <= 0.0) throw ParseError("/scale/1", "scale must be > 0");
    plan.scale = {rx, ry};
  }

  const json& mask = require(doc, "mask", root);
  if (mask.is_string()) {
    std::filesystem::path path = mask.get<std::string>();
    if (path.is_relative() && !base_dir.empty()) path = base_dir / path;
    try {
      plan.mask = read_pgm_mask(path, plan.grid);
    } catch (const ParseError&) {
      throw;
    } catch (const Error& e) {
      throw ParseError("/mask", e.what());
    }
  } else if (mask.is_object()) {
    reject_unknown(mask, {"rle"}, "/mask");
    const auto bits = decode_rle(require(mask, "rle", "/mask"), plan.grid.cells(), 1, "/mask/rle");
    plan.mask = EditableMask(plan.grid);
    for (std::size_t i = 0; i < bits.size(); ++i) {
      if (bits[i]) plan.mask.set(plan.grid.cell_at(i));
    }
  } else {
    throw ParseError("/mask", "expected a PGM path or {\"rle\": [...]}");
  }

  const json& instrs = require(doc, "instructions", root);
  if (!instrs.is_array()) throw ParseError("/instructions", "expected an array");
  for (std::size_t i = 0; i < instrs.size(); ++i) {
    const std::string ptr = child("/instructions", i);
    const json& in = instrs[i];
    if (!in.is_object()) throw ParseError(ptr, "expected {handle, target}");
    reject_unknown(in, {"handle", "target"}, ptr);
    DragInstruction instr;
    instr.handle = parse_point(require(in, "handle", ptr), child(ptr, "handle"), plan.grid);
    instr.target = parse_point(require(in, "target", ptr), child(ptr, "target"), plan.grid);
    plan.instructions.push_back(instr);
  }

  if (auto it = doc.find("trans_width"); it != doc.end()) {
    plan.trans_width = int(integer(*it, "/trans_width", 0, 1024));
  }
  if (auto it = doc.find("noise_seed"); it != doc.end()) {
    if (!it->is_number_integer() || (it->is_number_integer() && !it->is_number_unsigned() &&
                                     it->get<std::int64_t>() < 0)) {
      throw ParseError("/noise_seed", "expected a non-negative integer");
    }
    plan.noise_seed = it->get<std::uint64_t>();
  }
  return plan;
}

json drag_plan_to_json(const DragPlan& plan) {
  json instrs = json::array();
  for (const auto& in : plan.instructions) {
    instrs.push_back({{"handle", {in.handle.x, in.handle.y}}, {"target", {in.target.x, in.target.y}}});
  }
  return {
      {"format_version", kFormatVersion},
      {"mode", plan.mode == EditMode::Drag ? "drag" : "move"},
      {"grid", {{"width", plan.grid.width()}, {"height", plan.grid.height()}}},
      {"scale", {plan.scale.rx, plan.scale.ry}},
      {"mask", {{"rle", encode_rle(plan.mask.bits())}}},
      {"instructions", instrs},
      {"trans_width", plan.trans_width},
      {"noise_seed", plan.noise_seed},
  };
}

// --- tensors -----------------------------------------------------------------

std::filesystem::path tensor_sidecar_path(const std::filesystem::path& path) {
  return std::filesystem::path(path.string() + ".json");
}

void write_tensor(const std::filesystem::path& path, const Tensor& tensor) {
  std::size_t expected = 1;
  for (auto d : tensor.shape) {
    if (d < 0) throw Error(ErrorKind::CorruptTensor, "negative tensor dimension");
    expected *= std::size_t(d);
  }
  if (expected != tensor.data.size()) {
    throw Error(ErrorKind::CorruptTensor, "tensor data does not match its shape");
  }
  std::string payload;
  payload.reserve(tensor.data.size() * 4);
  for (float f : tensor.data) write_le_u32(payload, std::bit_cast<std::uint32_t>(f));
  write_file(path, payload);
  const json sidecar{{"format_version", kFormatVersion},
                     {"shape", tensor.shape},
                     {"order", "row-major"},
                     {"dtype", "f32"}};
  write_file(tensor_sidecar_path(path), dump_json(sidecar));
}

Tensor read_tensor(const std::filesystem::path& path) {
  json sidecar;
  try {
    sidecar = json::parse(read_file(tensor_sidecar_path(path)));
  } catch (const json::parse_error& e) {
    throw Error(ErrorKind::CorruptTensor, std::string("unreadable sidecar: ") + e.what());
  }
  if (!sidecar.is_object() || sidecar.value("dtype", "") != "f32" ||
      sidecar.value("order", "") != "row-major" || !sidecar.contains("shape") ||
      !sidecar["shape"].is_array()) {
    throw Error(ErrorKind::CorruptTensor, "sidecar must declare f32 row-major shape");
  }
  Tensor t;
  std::size_t expected = 1;
  for (const auto& d : sidecar["shape"]) {
    if (!d.is_number_integer() || d.get<std::int64_t>() < 0) {
      throw Error(ErrorKind::CorruptTensor, "invalid shape entry");
    }
    t.shape.push_back(d.get<std::int64_t>());
    expected *= std::size_t(t.shape.back());
  }
  const std::string payload = read_file(path);
  if (payload.size() != expected * 4) {
    throw Error(ErrorKind::CorruptTensor, "payload is " + std::to_string(payload.size()) +
                                              " bytes, shape needs " +
                                              std::to_string(expected * 4));
  }
  t.data.resize(expected);
  const auto* p = reinterpret_cast<const unsigned char*>(payload.data());
  for (std::size_t i = 0; i < expected; ++i) t.data[i] = std::bit_cast<float>(read_le_u32(p + 4 * i));
  return t;
}

Tensor latent_to_tensor(const LatentGrid& latent) {
  return {{latent.grid().height(), latent.grid().width(), latent.channels()}, latent.values()};
}

LatentGrid tensor_to_latent(const Tensor& tensor) {
  if (tensor.shape.size() != 3) {
    throw Error(ErrorKind::ShapeMismatch, "latent tensor must have shape [height, width, channels]");
  }
  const GridSpec grid(int(tensor.shape[1]), int(tensor.shape[0]));
  return LatentGrid(grid, int(tensor.shape[2]), tensor.data);
}

// --- netpbm --------------------------------------------------------------------

EditableMask read_pgm_mask(const std::filesystem::path& path, const GridSpec& grid) {
  const std::string bytes = read_file(path);
  PnmReader reader(bytes);
  const std::string magic = reader.token();
  if (magic != "P5" && magic != "P2") throw ParseError("/mask", "mask is not a PGM (P2/P5) file");
  const long w = reader.number(), h = reader.number(), maxval = reader.number();
  if (w <= 0 || h <= 0 || maxval <= 0 || maxval > 255) {
    throw ParseError("/mask", "unsupported PGM header");
  }
  if (w != grid.width() || h != grid.height()) {
    throw ParseError("/mask", "PGM is " + std::to_string(w) + "x" + std::to_string(h) +
                                  ", grid is " + std::to_string(grid.width()) + "x" +
                                  std::to_string(grid.height()));
  }
  EditableMask mask(grid);
  if (magic == "P5") {
    const std::size_t start = reader.binary_start();
    if (bytes.size() < start + grid.cells()) throw ParseError("/mask", "PGM payload truncated");
    for (std::size_t i = 0; i < grid.cells(); ++i) {
      if (bytes[start + i] != 0) mask.set(grid.cell_at(i));
    }
  } else {
    for (std::size_t i = 0; i < grid.cells(); ++i) {
      const long v = reader.number();
      if (v < 0) throw ParseError("/mask", "PGM payload truncated");
      if (v != 0) mask.set(grid.cell_at(i));
    }
  }
  return mask;
}

void write_pgm_mask(const std::filesystem::path& path, const EditableMask& mask) {
  const GridSpec& grid = mask.grid();
  std::string out = "P5\n" + std::to_string(grid.width()) + " " + std::to_string(grid.height()) +
                    "\n255\n";
  for (auto b : mask.bits()) out.push_back(static_cast<char>(b ? 255 : 0));
  write_file(path, out);
}

Rgb region_color(Region region) {
  switch (region) {
    case Region::Background: return {128, 128, 128};
    case Region::Destination: return {220, 50, 50};
    case Region::Inpaint: return {235, 200, 40};
    case Region::Transition: return {60, 180, 90};
  }
  return {0, 0, 0};
}

std::string encode_region_ppm(const RegionPartition& partition,
                              std::span<const int> destination_instruction) {
  const GridSpec& grid = partition.grid();
  if (!destination_instruction.empty() && destination_instruction.size() != grid.cells()) {
    throw Error(ErrorKind::ShapeMismatch, "instruction labels do not match the grid");
  }
  std::string out = "P6\n" + std::to_string(grid.width()) + " " + std::to_string(grid.height()) +
                    "\n255\n";
  out.reserve(out.size() + grid.cells() * 3);
  for (std::size_t i = 0; i < grid.cells(); ++i) {
    const Region r = partition.labels()[i];
    Rgb rgb = region_color(r);
    if (r == Region::Destination && !destination_instruction.empty() &&
        destination_instruction[i] % 2 == 1) {
      rgb = kAlternateDestinationColor;
    }
    out.append(reinterpret_cast<const char*>(rgb.data()), 3);
  }
  return out;
}

void write_region_viz(const RegionPartition& partition, const std::filesystem::path& path,
                      std::span<const int> destination_instruction) {
  write_file(path, encode_region_ppm(partition, destination_instruction));
}

}  // namespace dragfield
