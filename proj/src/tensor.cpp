#include "splitwise/tensor.hpp"

#include <cmath>
#include <numeric>

#include "splitwise/error.hpp"

namespace splitwise {

std::size_t element_count(const Shape& shape) {
  return std::accumulate(shape.begin(), shape.end(), std::size_t{1}, std::multiplies<>());
}

std::string to_string(const Shape& shape) {
  std::string out = "[";
  for (std::size_t i = 0; i < shape.size(); ++i) {
    if (i) out += ",";
    out += std::to_string(shape[i]);
  }
  return out + "]";
}

namespace {
void check_extents(const Shape& shape) {
  if (shape.empty()) fail(ErrorCode::kInvalidShape, "tensor needs at least one extent");
  for (auto e : shape) {
    if (e == 0) fail(ErrorCode::kInvalidShape, "zero extent in " + to_string(shape));
  }
}
}  // namespace

Tensor::Tensor(Shape shape) : shape_(std::move(shape)) {
  check_extents(shape_);
  data_.assign(element_count(shape_), 0.0f);
}

Tensor::Tensor(Shape shape, std::vector<float> values) : shape_(std::move(shape)), data_(std::move(values)) {
  check_extents(shape_);
  if (data_.size() != element_count(shape_)) {
    fail(ErrorCode::kInvalidShape, "data length " + std::to_string(data_.size()) + " does not match shape " +
                                       to_string(shape_));
  }
}

Tensor Tensor::reshaped(Shape shape) const {
  if (element_count(shape) != data_.size()) {
    fail(ErrorCode::kInvalidShape, "cannot reshape " + to_string(shape_) + " to " + to_string(shape));
  }
  return Tensor(std::move(shape), data_);
}

bool Tensor::all_finite() const noexcept {
  for (float v : data_) {
    if (!std::isfinite(v)) return false;
  }
  return true;
}

Tensor tensor_from(const Eigen::VectorXf& v) {
  return Tensor({static_cast<std::size_t>(v.size())}, std::vector<float>(v.data(), v.data() + v.size()));
}

}  // namespace splitwise
