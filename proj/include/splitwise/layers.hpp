#pragma once

#include <cstddef>

#include <Eigen/Core>

#include "splitwise/tensor.hpp"

namespace splitwise {

/// Output extent of a sliding window: floor((in + 2*pad - k) / stride) + 1.
/// Returns 0 when the window does not fit.
std::size_t window_extent(std::size_t in, std::size_t k, std::size_t stride, std::size_t pad);

// Cross-correlation (no kernel flip). input (c,h,w), weights (n,c,kh,kw).
Tensor conv2d_forward(const Tensor& input, const Tensor& weights, const Eigen::Ref<const Eigen::VectorXf>& bias,
                      std::size_t stride, std::size_t pad);

Tensor maxpool2d_forward(const Tensor& input, std::size_t kh, std::size_t kw, std::size_t stride);

// y = W x + b with W shaped (out, in).
Eigen::VectorXf linear_forward(const Eigen::Ref<const Eigen::VectorXf>& input, const Tensor& weights,
                               const Eigen::Ref<const Eigen::VectorXf>& bias);

Tensor relu(const Tensor& input);
Eigen::VectorXf softmax(const Eigen::Ref<const Eigen::VectorXf>& logits);
Eigen::VectorXf flatten(const Tensor& input);

}  // namespace splitwise
