#pragma once

#include <filesystem>
#include <fstream>
#include <random>
#include <string>

#include <json.hpp>

#include "splitwise/layers.hpp"
#include "splitwise/model_graph.hpp"
#include "splitwise/model_io.hpp"

namespace splitwise::test {

inline std::filesystem::path fixture(const std::string& name) {
  return std::filesystem::path(SPLITWISE_FIXTURE_DIR) / name;
}

inline nlohmann::json manifest() {
  std::ifstream f(fixture("manifest.json"));
  return nlohmann::json::parse(f);
}

inline Tensor random_tensor(const Shape& shape, std::mt19937_64& rng, float lo = -1.0f, float hi = 1.0f) {
  std::uniform_real_distribution<float> dist(lo, hi);
  Tensor t(shape);
  for (auto& v : t.values()) v = dist(rng);
  return t;
}

inline Layer conv(std::size_t n, std::size_t c, std::size_t k, std::size_t stride, std::size_t pad,
                  std::mt19937_64& rng) {
  Layer l;
  l.spec.kind = LayerKind::kConv2d;
  l.spec.n = n;
  l.spec.c = c;
  l.spec.kh = l.spec.kw = k;
  l.spec.stride = stride;
  l.spec.pad = pad;
  l.weights = random_tensor({n, c, k, k}, rng, -0.5f, 0.5f);
  l.bias = Eigen::VectorXf::Random(static_cast<Eigen::Index>(n)) * 0.1f;
  return l;
}

inline Layer pool(std::size_t k, std::size_t stride) {
  Layer l;
  l.spec.kind = LayerKind::kMaxPool;
  l.spec.kh = l.spec.kw = k;
  l.spec.stride = stride;
  return l;
}

inline Layer linear(std::size_t n, std::size_t c, std::mt19937_64& rng) {
  Layer l;
  l.spec.kind = LayerKind::kLinear;
  l.spec.n = n;
  l.spec.c = c;
  l.weights = random_tensor({n, c}, rng, -0.3f, 0.3f);
  l.bias = Eigen::VectorXf::Random(static_cast<Eigen::Index>(n)) * 0.1f;
  return l;
}

inline Layer simple(LayerKind kind) {
  Layer l;
  l.spec.kind = kind;
  return l;
}

/// 3x12x12 input, three convs, two pools, two linears, softmax: 13 layers.
inline ModelGraph small_cnn(std::mt19937_64& rng) {
  std::vector<Layer> layers;
  layers.push_back(conv(6, 3, 3, 1, 1, rng));
  layers.push_back(simple(LayerKind::kRelu));
  layers.push_back(pool(2, 2));
  layers.push_back(conv(8, 6, 3, 1, 1, rng));
  layers.push_back(simple(LayerKind::kRelu));
  layers.push_back(conv(4, 8, 3, 1, 1, rng));
  layers.push_back(simple(LayerKind::kRelu));
  layers.push_back(pool(2, 2));
  layers.push_back(simple(LayerKind::kFlatten));
  layers.push_back(linear(12, 36, rng));
  layers.push_back(simple(LayerKind::kRelu));
  layers.push_back(linear(5, 12, rng));
  layers.push_back(simple(LayerKind::kSoftmax));
  return ModelGraph({3, 12, 12}, std::move(layers));
}

inline ModelGraph toy_model() { return load_model(fixture("toy_alexnet.swmf")); }

// Six nested loops, no im2col: the reference the engine is checked against.
inline Tensor naive_conv(const Tensor& x, const Tensor& w, const Eigen::VectorXf& b, std::size_t stride,
                         std::size_t pad) {
  const std::size_t c = x.dim(0), h = x.dim(1), wd = x.dim(2);
  const std::size_t n = w.dim(0), kh = w.dim(2), kw = w.dim(3);
  const std::size_t oh = (h + 2 * pad - kh) / stride + 1, ow = (wd + 2 * pad - kw) / stride + 1;
  Tensor y({n, oh, ow});
  for (std::size_t o = 0; o < n; ++o) {
    for (std::size_t i = 0; i < oh; ++i) {
      for (std::size_t j = 0; j < ow; ++j) {
        double acc = b[static_cast<Eigen::Index>(o)];
        for (std::size_t ch = 0; ch < c; ++ch) {
          for (std::size_t u = 0; u < kh; ++u) {
            for (std::size_t v = 0; v < kw; ++v) {
              const long r = static_cast<long>(i * stride + u) - static_cast<long>(pad);
              const long q = static_cast<long>(j * stride + v) - static_cast<long>(pad);
              if (r < 0 || q < 0 || r >= static_cast<long>(h) || q >= static_cast<long>(wd)) continue;
              acc += static_cast<double>(w.data()[((o * c + ch) * kh + u) * kw + v]) *
                     x(ch, static_cast<std::size_t>(r), static_cast<std::size_t>(q));
            }
          }
        }
        y(o, i, j) = static_cast<float>(acc);
      }
    }
  }
  return y;
}

inline Tensor naive_pool(const Tensor& x, std::size_t k, std::size_t stride) {
  const std::size_t oh = (x.dim(1) - k) / stride + 1, ow = (x.dim(2) - k) / stride + 1;
  Tensor y({x.dim(0), oh, ow});
  for (std::size_t ch = 0; ch < x.dim(0); ++ch) {
    for (std::size_t i = 0; i < oh; ++i) {
      for (std::size_t j = 0; j < ow; ++j) {
        float m = x(ch, i * stride, j * stride);
        for (std::size_t u = 0; u < k; ++u) {
          for (std::size_t v = 0; v < k; ++v) m = std::max(m, x(ch, i * stride + u, j * stride + v));
        }
        y(ch, i, j) = m;
      }
    }
  }
  return y;
}

inline float max_abs_diff(const Tensor& a, const Tensor& b) {
  float m = 0.0f;
  for (std::size_t i = 0; i < a.size(); ++i) m = std::max(m, std::abs(a.data()[i] - b.data()[i]));
  return m;
}

}  // namespace splitwise::test
