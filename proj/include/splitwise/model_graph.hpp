#pragma once

#include <cstdint>
#include <optional>
#include <string>
#include <string_view>
#include <vector>

#include <Eigen/Core>

#include "splitwise/tensor.hpp"

namespace splitwise {

// Numeric values are the SWMF kind codes.
enum class LayerKind : std::uint8_t {
  kConv2d = 0,
  kMaxPool = 1,
  kRelu = 2,
  kLinear = 3,
  kFlatten = 4,
  kSoftmax = 5,
};

std::string_view to_string(LayerKind kind);
LayerKind layer_kind_from_string(std::string_view name);

/// One layer of a sequential chain. `n`/`c` are output/input channels for
/// conv and pool, output/input features for linear. Shapes are filled in by
/// ModelGraph when the chain is resolved.
struct LayerSpec {
  std::size_t index = 0;  // 1-based position in the chain
  std::string name;
  LayerKind kind = LayerKind::kRelu;
  std::size_t n = 0;
  std::size_t c = 0;
  std::size_t kh = 0;
  std::size_t kw = 0;
  std::size_t stride = 1;
  std::size_t pad = 0;
  Shape input_shape;
  Shape output_shape;

  bool is_parametric() const { return kind == LayerKind::kConv2d || kind == LayerKind::kLinear; }
  bool is_resolved() const { return !input_shape.empty() && !output_shape.empty(); }

  friend bool operator==(const LayerSpec&, const LayerSpec&) = default;
};

struct Layer {
  LayerSpec spec;
  Tensor weights;          // conv (n,c,kh,kw), linear (n,c); empty otherwise
  Eigen::VectorXf bias;    // length n for parametric layers

  friend bool operator==(const Layer& a, const Layer& b) {
    return a.spec == b.spec && a.weights == b.weights && a.bias.size() == b.bias.size() && a.bias == b.bias;
  }
};

/// Ordered layer chain with resolved shapes. Layer indices are 1-based to
/// line up with split points: split c runs layers 1..c on the device.
class ModelGraph {
 public:
  ModelGraph() = default;
  /// Resolves and validates the shape chain; throws invalid-model on a break.
  ModelGraph(Shape input_shape, std::vector<Layer> layers, bool has_weights = true);

  const Shape& input_shape() const noexcept { return input_shape_; }
  std::size_t layer_count() const noexcept { return layers_.size(); }
  const Layer& layer(std::size_t index) const { return layers_.at(index - 1); }
  const std::vector<Layer>& layers() const noexcept { return layers_; }
  bool has_weights() const noexcept { return has_weights_; }
  const Shape& output_shape() const;
  std::size_t class_count() const { return element_count(output_shape()); }

  /// 1-based indices of the prunable (convolution) layers, in chain order.
  std::vector<std::size_t> prunable_layers() const;
  /// First parametric layer strictly after `index`, if any.
  std::optional<std::size_t> next_parametric(std::size_t index) const;

  /// Output shape of layer `index`; index 0 is the raw input.
  const Shape& shape_after(std::size_t index) const;

  std::uint64_t total_flops() const;

  Tensor forward(const Tensor& input) const { return forward_range(input, 1, layer_count()); }
  /// Runs layers first..last (1-based, inclusive); first > last is identity.
  Tensor forward_range(const Tensor& input, std::size_t first, std::size_t last) const;
  Tensor forward_layer(std::size_t index, const Tensor& input) const;

  /// Mutable access for the pruning engine; call rechain() afterwards.
  Layer& mutable_layer(std::size_t index) { return layers_.at(index - 1); }
  void rechain();

  friend bool operator==(const ModelGraph&, const ModelGraph&) = default;

 private:
  Shape input_shape_;
  std::vector<Layer> layers_;
  bool has_weights_ = true;
};

std::uint64_t flops_of_layer(const LayerSpec& layer);
std::uint64_t output_bytes_of_layer(const LayerSpec& layer);
std::uint64_t bytes_of_shape(const Shape& shape);

/// Bytes that cross the link when splitting after layer c (c = 0 is the raw input).
std::uint64_t split_bytes(const ModelGraph& graph, std::size_t c);

}  // namespace splitwise
