#include "splitwise/model_graph.hpp"

#include "splitwise/error.hpp"
#include "splitwise/layers.hpp"

namespace splitwise {

std::string_view to_string(LayerKind kind) {
  switch (kind) {
    case LayerKind::kConv2d: return "conv2d";
    case LayerKind::kMaxPool: return "maxpool";
    case LayerKind::kRelu: return "relu";
    case LayerKind::kLinear: return "linear";
    case LayerKind::kFlatten: return "flatten";
    case LayerKind::kSoftmax: return "softmax";
  }
  return "unknown";
}

LayerKind layer_kind_from_string(std::string_view name) {
  for (auto k : {LayerKind::kConv2d, LayerKind::kMaxPool, LayerKind::kRelu, LayerKind::kLinear,
                 LayerKind::kFlatten, LayerKind::kSoftmax}) {
    if (to_string(k) == name) return k;
  }
  if (name == "conv") return LayerKind::kConv2d;
  if (name == "pool") return LayerKind::kMaxPool;
  fail(ErrorCode::kInvalidModel, "unknown layer kind '" + std::string(name) + "'");
}

namespace {

[[noreturn]] void chain_break(const LayerSpec& spec, const std::string& why) {
  fail(ErrorCode::kInvalidModel,
       "layer " + std::to_string(spec.index) + " (" + spec.name + ", " + std::string(to_string(spec.kind)) + "): " + why);
}

void resolve(LayerSpec& spec, const Shape& in) {
  spec.input_shape = in;
  switch (spec.kind) {
    case LayerKind::kConv2d: {
      if (in.size() != 3) chain_break(spec, "expects a (c,h,w) input, got " + to_string(in));
      if (spec.c != in[0]) chain_break(spec, "expects " + std::to_string(spec.c) + " channels, got " + to_string(in));
      if (spec.n == 0 || spec.kh == 0 || spec.kw == 0 || spec.stride == 0) chain_break(spec, "zero parameter");
      const auto oh = window_extent(in[1], spec.kh, spec.stride, spec.pad);
      const auto ow = window_extent(in[2], spec.kw, spec.stride, spec.pad);
      if (oh == 0 || ow == 0) chain_break(spec, "kernel does not fit input " + to_string(in));
      spec.output_shape = {spec.n, oh, ow};
      break;
    }
    case LayerKind::kMaxPool: {
      if (in.size() != 3) chain_break(spec, "expects a (c,h,w) input, got " + to_string(in));
      if (spec.kh == 0 || spec.kw == 0 || spec.stride == 0) chain_break(spec, "zero parameter");
      const auto oh = window_extent(in[1], spec.kh, spec.stride, 0);
      const auto ow = window_extent(in[2], spec.kw, spec.stride, 0);
      if (oh == 0 || ow == 0) chain_break(spec, "window does not fit input " + to_string(in));
      spec.c = spec.n = in[0];
      spec.output_shape = {in[0], oh, ow};
      break;
    }
    case LayerKind::kRelu:
      spec.output_shape = in;
      break;
    case LayerKind::kFlatten:
      spec.output_shape = {element_count(in)};
      break;
    case LayerKind::kLinear:
      if (in.size() != 1) chain_break(spec, "expects a flat input, got " + to_string(in));
      if (spec.c != in[0]) chain_break(spec, "expects " + std::to_string(spec.c) + " features, got " + to_string(in));
      if (spec.n == 0) chain_break(spec, "zero output features");
      spec.output_shape = {spec.n};
      break;
    case LayerKind::kSoftmax:
      if (in.size() != 1) chain_break(spec, "expects a flat input, got " + to_string(in));
      spec.output_shape = in;
      break;
  }
}

void check_weights(const Layer& layer) {
  const auto& s = layer.spec;
  if (s.kind == LayerKind::kConv2d) {
    if (layer.weights.shape() != Shape{s.n, s.c, s.kh, s.kw}) chain_break(s, "weight tensor shape mismatch");
  } else if (s.kind == LayerKind::kLinear) {
    if (layer.weights.shape() != Shape{s.n, s.c}) chain_break(s, "weight tensor shape mismatch");
  } else {
    if (layer.weights.size() != 0 || layer.bias.size() != 0) chain_break(s, "non-parametric layer carries weights");
    return;
  }
  if (static_cast<std::size_t>(layer.bias.size()) != s.n) chain_break(s, "bias length mismatch");
}

}  // namespace

ModelGraph::ModelGraph(Shape input_shape, std::vector<Layer> layers, bool has_weights)
    : input_shape_(std::move(input_shape)), layers_(std::move(layers)), has_weights_(has_weights) {
  rechain();
}

void ModelGraph::rechain() {
  if (layers_.empty()) fail(ErrorCode::kInvalidModel, "model has no layers");
  if (input_shape_.empty()) fail(ErrorCode::kInvalidModel, "model input shape unresolved");
  for (auto e : input_shape_) {
    if (e == 0) fail(ErrorCode::kInvalidModel, "zero input extent");
  }
  Shape current = input_shape_;
  for (std::size_t i = 0; i < layers_.size(); ++i) {
    auto& layer = layers_[i];
    layer.spec.index = i + 1;
    if (layer.spec.name.empty()) layer.spec.name = std::string(to_string(layer.spec.kind)) + std::to_string(i + 1);
    resolve(layer.spec, current);
    if (has_weights_) check_weights(layer);
    current = layer.spec.output_shape;
  }
}

const Shape& ModelGraph::output_shape() const {
  if (layers_.empty()) fail(ErrorCode::kInvalidModel, "model has no layers");
  return layers_.back().spec.output_shape;
}

const Shape& ModelGraph::shape_after(std::size_t index) const {
  if (index == 0) return input_shape_;
  return layer(index).spec.output_shape;
}

std::vector<std::size_t> ModelGraph::prunable_layers() const {
  std::vector<std::size_t> out;
  for (const auto& l : layers_) {
    if (l.spec.kind == LayerKind::kConv2d) out.push_back(l.spec.index);
  }
  return out;
}

std::optional<std::size_t> ModelGraph::next_parametric(std::size_t index) const {
  for (std::size_t i = index + 1; i <= layers_.size(); ++i) {
    if (layer(i).spec.is_parametric()) return i;
  }
  return std::nullopt;
}

std::uint64_t ModelGraph::total_flops() const {
  std::uint64_t total = 0;
  for (const auto& l : layers_) total += flops_of_layer(l.spec);
  return total;
}

Tensor ModelGraph::forward_layer(std::size_t index, const Tensor& input) const {
  if (!has_weights_) fail(ErrorCode::kInvalidModel, "shape-only model cannot run inference");
  const Layer& l = layer(index);
  const auto& s = l.spec;
  if (input.shape() != s.input_shape) {
    fail(ErrorCode::kInvalidShape, "layer " + std::to_string(index) + " expects " + to_string(s.input_shape) +
                                       ", got " + to_string(input.shape()));
  }
  switch (s.kind) {
    case LayerKind::kConv2d: return conv2d_forward(input, l.weights, l.bias, s.stride, s.pad);
    case LayerKind::kMaxPool: return maxpool2d_forward(input, s.kh, s.kw, s.stride);
    case LayerKind::kRelu: return relu(input);
    case LayerKind::kFlatten: return input.reshaped({input.size()});
    case LayerKind::kLinear: return tensor_from(linear_forward(input.vec(), l.weights, l.bias));
    case LayerKind::kSoftmax: return tensor_from(softmax(input.vec()));
  }
  fail(ErrorCode::kInvalidModel, "unknown layer kind");
}

Tensor ModelGraph::forward_range(const Tensor& input, std::size_t first, std::size_t last) const {
  if (first == 0 || last > layers_.size()) fail(ErrorCode::kInvalidArgument, "layer range out of bounds");
  Tensor x = input;
  for (std::size_t i = first; i <= last; ++i) x = forward_layer(i, x);
  return x;
}

std::uint64_t bytes_of_shape(const Shape& shape) { return element_count(shape) * sizeof(float); }

std::uint64_t flops_of_layer(const LayerSpec& layer) {
  if (!layer.is_resolved()) fail(ErrorCode::kInvalidModel, "flops of unresolved layer " + layer.name);
  switch (layer.kind) {
    case LayerKind::kConv2d:
      return 2ull * layer.n * layer.c * layer.kh * layer.kw * layer.output_shape[1] * layer.output_shape[2];
    case LayerKind::kLinear:
      return 2ull * layer.n * layer.c;
    default:
      return 0;
  }
}

std::uint64_t output_bytes_of_layer(const LayerSpec& layer) {
  if (!layer.is_resolved()) fail(ErrorCode::kInvalidModel, "output size of unresolved layer " + layer.name);
  return bytes_of_shape(layer.output_shape);
}

std::uint64_t split_bytes(const ModelGraph& graph, std::size_t c) {
  if (c > graph.layer_count()) fail(ErrorCode::kInvalidArgument, "split point beyond the last layer");
  return bytes_of_shape(graph.shape_after(c));
}

}  // namespace splitwise
