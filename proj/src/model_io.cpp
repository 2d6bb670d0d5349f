#include "splitwise/model_io.hpp"

#include <fstream>
#include <iterator>

#include <json.hpp>

#include "splitwise/bytes.hpp"
#include "splitwise/error.hpp"
#include "splitwise/sha256.hpp"

namespace splitwise {

namespace {

constexpr std::string_view kSwmfMagic = "SWMF";
constexpr std::string_view kSwdsMagic = "SWDS";
constexpr std::size_t kMaxInferredExtent = 8192;

std::vector<std::uint8_t> serialize_model_impl(const ModelGraph& graph, bool with_weights) {
  if (graph.layer_count() > 0xFFFF) fail(ErrorCode::kInvalidModel, "too many layers for SWMF");
  ByteWriter out;
  out.text(kSwmfMagic);
  out.u16_le(kSwmfVersion);
  out.u16_le(static_cast<std::uint16_t>(graph.layer_count()));
  for (const auto& layer : graph.layers()) {
    const auto& s = layer.spec;
    if (s.name.size() > 0xFFFF) fail(ErrorCode::kInvalidModel, "layer name too long");
    out.u16_le(static_cast<std::uint16_t>(s.name.size()));
    out.text(s.name);
    out.u8(static_cast<std::uint8_t>(s.kind));
    switch (s.kind) {
      case LayerKind::kConv2d:
        for (auto v : {s.n, s.c, s.kh, s.kw, s.stride, s.pad}) out.u32_le(static_cast<std::uint32_t>(v));
        break;
      case LayerKind::kMaxPool:
        for (auto v : {s.kh, s.kw, s.stride}) out.u32_le(static_cast<std::uint32_t>(v));
        break;
      case LayerKind::kLinear:
        for (auto v : {s.n, s.c}) out.u32_le(static_cast<std::uint32_t>(v));
        break;
      default:
        break;
    }
    if (with_weights && s.is_parametric()) {
      out.f32_le(layer.weights.values());
      out.f32_le(std::span<const float>(layer.bias.data(), static_cast<std::size_t>(layer.bias.size())));
    }
  }
  return out.take();
}

std::optional<Shape> infer_input_shape(const std::vector<Layer>& layers) {
  std::vector<Layer> specs;
  specs.reserve(layers.size());
  bool has_linear = false;
  std::optional<std::size_t> channels;
  for (const auto& l : layers) {
    specs.push_back(Layer{l.spec, {}, {}});
    if (l.spec.kind == LayerKind::kLinear) has_linear = true;
    if (!channels && l.spec.kind == LayerKind::kConv2d) channels = l.spec.c;
  }
  if (layers.front().spec.kind == LayerKind::kLinear) return Shape{layers.front().spec.c};
  if (!channels || !has_linear) return std::nullopt;
  for (std::size_t extent = 1; extent <= kMaxInferredExtent; ++extent) {
    try {
      ModelGraph probe(Shape{*channels, extent, extent}, specs, false);
      return probe.input_shape();
    } catch (const Error&) {
    }
  }
  return std::nullopt;
}

}  // namespace

std::vector<std::uint8_t> serialize_model(const ModelGraph& graph) {
  return serialize_model_impl(graph, graph.has_weights());
}

ModelGraph parse_model(std::span<const std::uint8_t> bytes, const std::optional<Shape>& input_hint) {
  ByteReader in(bytes);
  std::vector<Layer> layers;
  try {
    if (in.text(4) != kSwmfMagic) fail(ErrorCode::kFormat, "not an SWMF file (bad magic)");
    const auto version = in.u16_le();
    if (version != kSwmfVersion) fail(ErrorCode::kFormat, "unsupported SWMF version " + std::to_string(version));
    const auto count = in.u16_le();
    if (count == 0) fail(ErrorCode::kInvalidModel, "SWMF file declares zero layers");
    for (std::size_t i = 0; i < count; ++i) {
      Layer layer;
      auto& s = layer.spec;
      s.index = i + 1;
      s.name = in.text(in.u16_le());
      const auto code = in.u8();
      if (code > static_cast<std::uint8_t>(LayerKind::kSoftmax)) {
        fail(ErrorCode::kFormat, "unknown layer kind code " + std::to_string(code));
      }
      s.kind = static_cast<LayerKind>(code);
      switch (s.kind) {
        case LayerKind::kConv2d:
          s.n = in.u32_le(); s.c = in.u32_le(); s.kh = in.u32_le(); s.kw = in.u32_le();
          s.stride = in.u32_le(); s.pad = in.u32_le();
          break;
        case LayerKind::kMaxPool:
          s.kh = in.u32_le(); s.kw = in.u32_le(); s.stride = in.u32_le();
          break;
        case LayerKind::kLinear:
          s.n = in.u32_le(); s.c = in.u32_le();
          break;
        default:
          break;
      }
      if (s.is_parametric()) {
        Shape wshape = s.kind == LayerKind::kConv2d ? Shape{s.n, s.c, s.kh, s.kw} : Shape{s.n, s.c};
        const auto count_w = element_count(wshape);
        if (count_w == 0 || count_w * sizeof(float) > in.remaining()) throw ByteOverrun();
        std::vector<float> w(count_w);
        in.f32_le(w);
        layer.weights = Tensor(std::move(wshape), std::move(w));
        layer.bias.resize(static_cast<Eigen::Index>(s.n));
        in.f32_le(std::span<float>(layer.bias.data(), s.n));
      }
      layers.push_back(std::move(layer));
    }
  } catch (const ByteOverrun&) {
    fail(ErrorCode::kIo, "truncated SWMF file");
  }
  if (in.remaining() != 0) fail(ErrorCode::kFormat, "trailing bytes after last SWMF layer");

  auto input = input_hint ? input_hint : infer_input_shape(layers);
  if (!input) fail(ErrorCode::kInvalidModel, "cannot recover the model input shape; supply it explicitly");
  return ModelGraph(*input, std::move(layers), true);
}

void save_model(const ModelGraph& graph, const std::filesystem::path& path) {
  if (!graph.has_weights()) fail(ErrorCode::kInvalidArgument, "cannot save a shape-only model as SWMF");
  write_file(path, serialize_model(graph));
}

ModelGraph load_model(const std::filesystem::path& path, const std::optional<Shape>& input_hint) {
  return parse_model(read_file(path), input_hint);
}

ModelGraph load_model_descriptor(const std::filesystem::path& path) {
  nlohmann::json doc;
  try {
    std::ifstream f(path);
    if (!f) fail(ErrorCode::kIo, "cannot open " + path.string());
    doc = nlohmann::json::parse(f);
  } catch (const nlohmann::json::exception& e) {
    fail(ErrorCode::kFormat, "bad model descriptor: " + std::string(e.what()));
  }
  try {
    Shape input = doc.at("input").get<Shape>();
    std::vector<Layer> layers;
    Shape current = input;
    for (const auto& entry : doc.at("layers")) {
      Layer layer;
      auto& s = layer.spec;
      s.kind = layer_kind_from_string(entry.at("kind").get<std::string>());
      s.name = entry.value("name", std::string{});
      const auto k = entry.value("k", std::size_t{0});
      s.kh = entry.value("kh", k);
      s.kw = entry.value("kw", k);
      s.stride = entry.value("stride", std::size_t{1});
      s.pad = entry.value("pad", std::size_t{0});
      s.n = entry.value("n", std::size_t{0});
      if (s.kind == LayerKind::kConv2d || s.kind == LayerKind::kLinear) {
        s.c = current.empty() ? 0 : current[0];
      }
      layers.push_back(std::move(layer));
      ModelGraph prefix(input, layers, false);
      current = prefix.output_shape();
      layers = prefix.layers();
    }
    return ModelGraph(std::move(input), std::move(layers), false);
  } catch (const nlohmann::json::exception& e) {
    fail(ErrorCode::kFormat, "bad model descriptor: " + std::string(e.what()));
  }
}

ModelGraph load_any_model(const std::filesystem::path& path, const std::optional<Shape>& input_hint) {
  if (path.extension() == ".json") return load_model_descriptor(path);
  return load_model(path, input_hint);
}

std::array<std::uint8_t, 32> model_hash(const ModelGraph& graph) { return sha256(serialize_model(graph)); }

std::string hex(std::span<const std::uint8_t> bytes) {
  static constexpr char kDigits[] = "0123456789abcdef";
  std::string out;
  out.reserve(bytes.size() * 2);
  for (auto b : bytes) {
    out.push_back(kDigits[b >> 4]);
    out.push_back(kDigits[b & 0xF]);
  }
  return out;
}

std::vector<std::uint8_t> serialize_valset(const ValidationSet& set) {
  if (set.input_shape.size() != 3) fail(ErrorCode::kInvalidArgument, "SWDS samples must be (c,h,w)");
  for (auto e : set.input_shape) {
    if (e > 0xFFFF) fail(ErrorCode::kInvalidArgument, "SWDS extent exceeds u16");
  }
  if (set.class_count > 0xFFFF) fail(ErrorCode::kInvalidArgument, "SWDS class count exceeds u16");
  ByteWriter out;
  out.text(kSwdsMagic);
  out.u16_le(kSwdsVersion);
  out.u32_le(static_cast<std::uint32_t>(set.samples.size()));
  for (auto e : set.input_shape) out.u16_le(static_cast<std::uint16_t>(e));
  out.u16_le(static_cast<std::uint16_t>(set.class_count));
  for (const auto& s : set.samples) {
    if (s.input.shape() != set.input_shape) fail(ErrorCode::kInvalidArgument, "sample shape differs from set");
    if (s.label >= set.class_count) fail(ErrorCode::kInvalidArgument, "label out of range");
    out.u16_le(s.label);
    out.f32_le(s.input.values());
  }
  return out.take();
}

ValidationSet parse_valset(std::span<const std::uint8_t> bytes) {
  ByteReader in(bytes);
  ValidationSet set;
  try {
    if (in.text(4) != kSwdsMagic) fail(ErrorCode::kFormat, "not an SWDS file (bad magic)");
    const auto version = in.u16_le();
    if (version != kSwdsVersion) fail(ErrorCode::kFormat, "unsupported SWDS version " + std::to_string(version));
    const auto count = in.u32_le();
    const std::size_t c = in.u16_le(), h = in.u16_le(), w = in.u16_le();
    set.class_count = in.u16_le();
    if (c == 0 || h == 0 || w == 0) fail(ErrorCode::kFormat, "zero sample extent");
    if (set.class_count == 0) fail(ErrorCode::kFormat, "zero classes");
    set.input_shape = {c, h, w};
    const std::size_t per_sample = 2 + c * h * w * sizeof(float);
    if (static_cast<std::uint64_t>(count) * per_sample > in.remaining()) throw ByteOverrun();
    set.samples.reserve(count);
    for (std::uint32_t i = 0; i < count; ++i) {
      Sample s;
      s.label = in.u16_le();
      if (s.label >= set.class_count) {
        fail(ErrorCode::kFormat, "sample " + std::to_string(i) + " label " + std::to_string(s.label) +
                                     " >= class count " + std::to_string(set.class_count));
      }
      std::vector<float> values(c * h * w);
      in.f32_le(values);
      s.input = Tensor(set.input_shape, std::move(values));
      set.samples.push_back(std::move(s));
    }
  } catch (const ByteOverrun&) {
    fail(ErrorCode::kIo, "truncated SWDS file");
  }
  if (in.remaining() != 0) fail(ErrorCode::kFormat, "trailing bytes after last SWDS sample");
  return set;
}

void save_valset(const ValidationSet& set, const std::filesystem::path& path) {
  write_file(path, serialize_valset(set));
}

ValidationSet load_valset(const std::filesystem::path& path) { return parse_valset(read_file(path)); }

Tensor load_input_bin(const std::filesystem::path& path, const Shape& shape) {
  const auto bytes = read_file(path);
  if (bytes.size() != element_count(shape) * sizeof(float)) {
    fail(ErrorCode::kFormat, path.string() + " holds " + std::to_string(bytes.size()) + " bytes, model input " +
                                 to_string(shape) + " needs " + std::to_string(element_count(shape) * 4));
  }
  std::vector<float> values(element_count(shape));
  ByteReader in(bytes);
  in.f32_le(values);
  return Tensor(shape, std::move(values));
}

void save_input_bin(const Tensor& tensor, const std::filesystem::path& path) {
  ByteWriter out;
  out.f32_le(tensor.values());
  write_file(path, out.buffer());
}

std::vector<std::uint8_t> read_file(const std::filesystem::path& path) {
  std::ifstream f(path, std::ios::binary);
  if (!f) fail(ErrorCode::kIo, "cannot open " + path.string());
  return std::vector<std::uint8_t>(std::istreambuf_iterator<char>(f), std::istreambuf_iterator<char>());
}

void write_file(const std::filesystem::path& path, std::span<const std::uint8_t> bytes) {
  std::ofstream f(path, std::ios::binary | std::ios::trunc);
  if (!f) fail(ErrorCode::kIo, "cannot write " + path.string());
  f.write(reinterpret_cast<const char*>(bytes.data()), static_cast<std::streamsize>(bytes.size()));
  if (!f) fail(ErrorCode::kIo, "write failed for " + path.string());
}

void write_text(const std::filesystem::path& path, const std::string& text) {
  write_file(path, std::span<const std::uint8_t>(reinterpret_cast<const std::uint8_t*>(text.data()), text.size()));
}

}  // namespace splitwise
