#include "splitwise/layers.hpp"

#include <algorithm>
#include <limits>

#include "splitwise/error.hpp"

namespace splitwise {

namespace {

using RowMatrixXf = Eigen::Matrix<float, Eigen::Dynamic, Eigen::Dynamic, Eigen::RowMajor>;

void require_finite(const Tensor& t, const char* op) {
  if (!t.all_finite()) fail(ErrorCode::kNumeric, std::string(op) + ": non-finite input");
}

}  // namespace

std::size_t window_extent(std::size_t in, std::size_t k, std::size_t stride, std::size_t pad) {
  if (stride == 0 || in + 2 * pad < k) return 0;
  return (in + 2 * pad - k) / stride + 1;
}

Tensor conv2d_forward(const Tensor& input, const Tensor& weights, const Eigen::Ref<const Eigen::VectorXf>& bias,
                      std::size_t stride, std::size_t pad) {
  if (input.rank() != 3 || weights.rank() != 4) {
    fail(ErrorCode::kInvalidShape, "conv2d expects (c,h,w) input and (n,c,kh,kw) weights");
  }
  const std::size_t c = input.dim(0), h = input.dim(1), w = input.dim(2);
  const std::size_t n = weights.dim(0), kh = weights.dim(2), kw = weights.dim(3);
  if (weights.dim(1) != c) {
    fail(ErrorCode::kInvalidShape, "conv2d input has " + std::to_string(c) + " channels, weights expect " +
                                       std::to_string(weights.dim(1)));
  }
  if (static_cast<std::size_t>(bias.size()) != n) fail(ErrorCode::kInvalidShape, "conv2d bias length mismatch");
  if (stride == 0) fail(ErrorCode::kInvalidShape, "conv2d stride must be positive");
  const std::size_t oh = window_extent(h, kh, stride, pad);
  const std::size_t ow = window_extent(w, kw, stride, pad);
  if (oh == 0 || ow == 0) fail(ErrorCode::kInvalidShape, "conv2d kernel larger than padded input");
  require_finite(input, "conv2d");

  // Lower to a single GEMM: columns hold one receptive field each.
  const std::size_t patch = c * kh * kw;
  const std::size_t positions = oh * ow;
  RowMatrixXf columns = RowMatrixXf::Zero(static_cast<Eigen::Index>(patch), static_cast<Eigen::Index>(positions));
  for (std::size_t ci = 0; ci < c; ++ci) {
    for (std::size_t ky = 0; ky < kh; ++ky) {
      for (std::size_t kx = 0; kx < kw; ++kx) {
        const auto row = static_cast<Eigen::Index>((ci * kh + ky) * kw + kx);
        for (std::size_t oy = 0; oy < oh; ++oy) {
          const std::ptrdiff_t iy = static_cast<std::ptrdiff_t>(oy * stride + ky) - static_cast<std::ptrdiff_t>(pad);
          if (iy < 0 || iy >= static_cast<std::ptrdiff_t>(h)) continue;
          for (std::size_t ox = 0; ox < ow; ++ox) {
            const std::ptrdiff_t ix =
                static_cast<std::ptrdiff_t>(ox * stride + kx) - static_cast<std::ptrdiff_t>(pad);
            if (ix < 0 || ix >= static_cast<std::ptrdiff_t>(w)) continue;
            columns(row, static_cast<Eigen::Index>(oy * ow + ox)) = input(ci, static_cast<std::size_t>(iy),
                                                                           static_cast<std::size_t>(ix));
          }
        }
      }
    }
  }

  Eigen::Map<const RowMatrixXf> kernel(weights.data(), static_cast<Eigen::Index>(n),
                                       static_cast<Eigen::Index>(patch));
  Tensor output({n, oh, ow});
  Eigen::Map<RowMatrixXf> out(output.data(), static_cast<Eigen::Index>(n), static_cast<Eigen::Index>(positions));
  out.noalias() = kernel * columns;
  out.colwise() += bias;
  return output;
}

Tensor maxpool2d_forward(const Tensor& input, std::size_t kh, std::size_t kw, std::size_t stride) {
  if (input.rank() != 3) fail(ErrorCode::kInvalidShape, "maxpool expects (c,h,w) input");
  const std::size_t c = input.dim(0), h = input.dim(1), w = input.dim(2);
  const std::size_t oh = window_extent(h, kh, stride, 0);
  const std::size_t ow = window_extent(w, kw, stride, 0);
  if (kh == 0 || kw == 0 || oh == 0 || ow == 0) {
    fail(ErrorCode::kInvalidShape, "pool window " + std::to_string(kh) + "x" + std::to_string(kw) +
                                       " does not fit input " + to_string(input.shape()));
  }
  Tensor output({c, oh, ow});
  for (std::size_t ci = 0; ci < c; ++ci) {
    for (std::size_t oy = 0; oy < oh; ++oy) {
      for (std::size_t ox = 0; ox < ow; ++ox) {
        float best = -std::numeric_limits<float>::infinity();
        for (std::size_t ky = 0; ky < kh; ++ky) {
          for (std::size_t kx = 0; kx < kw; ++kx) {
            best = std::max(best, input(ci, oy * stride + ky, ox * stride + kx));
          }
        }
        output(ci, oy, ox) = best;
      }
    }
  }
  return output;
}

Eigen::VectorXf linear_forward(const Eigen::Ref<const Eigen::VectorXf>& input, const Tensor& weights,
                               const Eigen::Ref<const Eigen::VectorXf>& bias) {
  if (weights.rank() != 2) fail(ErrorCode::kInvalidShape, "linear weights must be (out,in)");
  const auto out_dim = static_cast<Eigen::Index>(weights.dim(0));
  const auto in_dim = static_cast<Eigen::Index>(weights.dim(1));
  if (input.size() != in_dim) {
    fail(ErrorCode::kInvalidShape, "linear expects " + std::to_string(in_dim) + " inputs, got " +
                                       std::to_string(input.size()));
  }
  if (bias.size() != out_dim) fail(ErrorCode::kInvalidShape, "linear bias length mismatch");
  if (!input.allFinite()) fail(ErrorCode::kNumeric, "linear: non-finite input");
  Eigen::Map<const RowMatrixXf> w(weights.data(), out_dim, in_dim);
  Eigen::VectorXf y = bias;
  y.noalias() += w * input;
  return y;
}

Tensor relu(const Tensor& input) {
  Tensor out = input;
  out.vec() = out.vec().cwiseMax(0.0f);
  return out;
}

Eigen::VectorXf softmax(const Eigen::Ref<const Eigen::VectorXf>& logits) {
  if (logits.size() == 0) fail(ErrorCode::kInvalidShape, "softmax of empty vector");
  const Eigen::VectorXf shifted = logits.array() - logits.maxCoeff();
  const Eigen::VectorXf e = shifted.array().exp();
  return e / e.sum();
}

Eigen::VectorXf flatten(const Tensor& input) { return input.vec(); }

}  // namespace splitwise
