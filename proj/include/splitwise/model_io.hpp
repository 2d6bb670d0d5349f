#pragma once

#include <array>
#include <cstdint>
#include <filesystem>
#include <optional>
#include <span>
#include <string>
#include <vector>

#include "splitwise/model_graph.hpp"
#include "splitwise/tensor.hpp"

namespace splitwise {

inline constexpr std::uint16_t kSwmfVersion = 1;
inline constexpr std::uint16_t kSwdsVersion = 1;

// SWMF (little-endian):
//   "SWMF" u16 version u16 layer_count
//   per layer: u16 name_len, name bytes, u8 kind,
//              u32 params (conv: n,c,kh,kw,stride,pad; pool: kh,kw,stride; linear: n,c),
//              f32 weights then f32 biases for conv/linear.
// The file does not carry the input extent. Parsing recovers it from the
// first layer's channel count and the smallest square spatial extent that
// makes the classifier head chain, unless `input_hint` supplies it.
std::vector<std::uint8_t> serialize_model(const ModelGraph& graph);
ModelGraph parse_model(std::span<const std::uint8_t> bytes, const std::optional<Shape>& input_hint = std::nullopt);

void save_model(const ModelGraph& graph, const std::filesystem::path& path);
ModelGraph load_model(const std::filesystem::path& path, const std::optional<Shape>& input_hint = std::nullopt);

/// Shape-only model from a JSON descriptor:
/// {"name": ..., "input": [c,h,w], "layers": [{"kind": "conv2d", "n": 64, "kh": 11, ...}, ...]}
ModelGraph load_model_descriptor(const std::filesystem::path& path);

/// Dispatches on extension: ".json" descriptors, anything else SWMF.
ModelGraph load_any_model(const std::filesystem::path& path, const std::optional<Shape>& input_hint = std::nullopt);

/// SHA-256 of the SWMF serialization (for weightless graphs, of the
/// serialization without weight payloads).
std::array<std::uint8_t, 32> model_hash(const ModelGraph& graph);
std::string hex(std::span<const std::uint8_t> bytes);

struct Sample {
  Tensor input;
  std::uint16_t label = 0;

  friend bool operator==(const Sample&, const Sample&) = default;
};

struct ValidationSet {
  std::vector<Sample> samples;
  std::size_t class_count = 0;
  Shape input_shape;

  friend bool operator==(const ValidationSet&, const ValidationSet&) = default;
};

// SWDS: "SWDS" u16 version u32 sample_count u16 c,h,w u16 class_count,
// then per sample u16 label and c*h*w f32, little-endian.
std::vector<std::uint8_t> serialize_valset(const ValidationSet& set);
ValidationSet parse_valset(std::span<const std::uint8_t> bytes);
void save_valset(const ValidationSet& set, const std::filesystem::path& path);
ValidationSet load_valset(const std::filesystem::path& path);

/// Raw little-endian f32 tensor file; the shape comes from the model.
Tensor load_input_bin(const std::filesystem::path& path, const Shape& shape);
void save_input_bin(const Tensor& tensor, const std::filesystem::path& path);

std::vector<std::uint8_t> read_file(const std::filesystem::path& path);
void write_file(const std::filesystem::path& path, std::span<const std::uint8_t> bytes);
void write_text(const std::filesystem::path& path, const std::string& text);

}  // namespace splitwise
