#pragma once

#include <cmath>
#include <random>
#include <vector>

#include <Eigen/Core>

#include "splitwise/error.hpp"

namespace splitwise {

enum class OutputActivation { kSigmoid, kIdentity };

/// Fully connected network with rectifier hidden layers. Batches are stored
/// column-wise: an input batch is (dims.front() x batch).
template <typename Scalar>
struct MlpNet {
  using Matrix = Eigen::Matrix<Scalar, Eigen::Dynamic, Eigen::Dynamic>;
  using Vector = Eigen::Matrix<Scalar, Eigen::Dynamic, 1>;

  std::vector<Eigen::Index> dims;
  std::vector<Matrix> weights;  // weights[l] is dims[l+1] x dims[l]
  std::vector<Vector> biases;
  OutputActivation output = OutputActivation::kIdentity;

  std::size_t layer_count() const { return weights.size(); }
  Eigen::Index input_dim() const { return dims.front(); }
  Eigen::Index output_dim() const { return dims.back(); }

  std::size_t parameter_count() const {
    std::size_t total = 0;
    for (std::size_t l = 0; l < weights.size(); ++l) total += weights[l].size() + biases[l].size();
    return total;
  }

  friend bool operator==(const MlpNet& a, const MlpNet& b) {
    if (a.dims != b.dims || a.output != b.output) return false;
    for (std::size_t l = 0; l < a.weights.size(); ++l) {
      if (a.weights[l] != b.weights[l] || a.biases[l] != b.biases[l]) return false;
    }
    return true;
  }
};

template <typename Scalar>
struct MlpCache {
  using Matrix = typename MlpNet<Scalar>::Matrix;
  std::vector<Matrix> inputs;           // inputs[l] feeds layer l
  std::vector<Matrix> pre_activations;  // z = W a + b per layer
  Matrix output;
};

template <typename Scalar>
struct MlpGradients {
  using Matrix = typename MlpNet<Scalar>::Matrix;
  using Vector = typename MlpNet<Scalar>::Vector;
  std::vector<Matrix> weights;
  std::vector<Vector> biases;
  Matrix input;  // dLoss/dInput, same layout as the forward batch
};

/// Hidden layers uniform in +-1/sqrt(fan_in); the output layer starts in
/// +-final_scale so fresh policies and critics sit near their midpoint.
template <typename Scalar, typename Rng>
MlpNet<Scalar> make_mlp(std::vector<Eigen::Index> dims, OutputActivation output, Rng& rng,
                        Scalar final_scale = Scalar(3e-3)) {
  if (dims.size() < 2) fail(ErrorCode::kInvalidArgument, "mlp needs at least input and output dims");
  for (auto d : dims) {
    if (d <= 0) fail(ErrorCode::kInvalidArgument, "mlp dims must be positive");
  }
  MlpNet<Scalar> net;
  net.dims = std::move(dims);
  net.output = output;
  for (std::size_t l = 0; l + 1 < net.dims.size(); ++l) {
    const bool last = l + 2 == net.dims.size();
    const Scalar bound = last ? final_scale : Scalar(1) / std::sqrt(static_cast<Scalar>(net.dims[l]));
    std::uniform_real_distribution<Scalar> dist(-bound, bound);
    typename MlpNet<Scalar>::Matrix w(net.dims[l + 1], net.dims[l]);
    for (Eigen::Index i = 0; i < w.size(); ++i) w.data()[i] = dist(rng);
    typename MlpNet<Scalar>::Vector b(net.dims[l + 1]);
    for (Eigen::Index i = 0; i < b.size(); ++i) b[i] = dist(rng);
    net.weights.push_back(std::move(w));
    net.biases.push_back(std::move(b));
  }
  return net;
}

template <typename Scalar>
MlpCache<Scalar> mlp_forward(const MlpNet<Scalar>& net,
                             const Eigen::Ref<const typename MlpNet<Scalar>::Matrix>& input) {
  if (input.rows() != net.input_dim()) {
    fail(ErrorCode::kInvalidShape, "mlp input has " + std::to_string(input.rows()) + " rows, expected " +
                                       std::to_string(net.input_dim()));
  }
  MlpCache<Scalar> cache;
  typename MlpNet<Scalar>::Matrix a = input;
  for (std::size_t l = 0; l < net.layer_count(); ++l) {
    typename MlpNet<Scalar>::Matrix z = net.weights[l] * a;
    z.colwise() += net.biases[l];
    cache.inputs.push_back(std::move(a));
    const bool last = l + 1 == net.layer_count();
    if (!last) {
      a = z.cwiseMax(Scalar(0));
    } else if (net.output == OutputActivation::kSigmoid) {
      a = (Scalar(1) + (-z.array()).exp()).inverse().matrix();
    } else {
      a = z;
    }
    cache.pre_activations.push_back(std::move(z));
  }
  cache.output = std::move(a);
  return cache;
}

/// Backpropagates dLoss/dOutput (same layout as cache.output). Parameter
/// gradients are summed over the batch columns.
template <typename Scalar>
MlpGradients<Scalar> mlp_backward(const MlpNet<Scalar>& net, const MlpCache<Scalar>& cache,
                                  const Eigen::Ref<const typename MlpNet<Scalar>::Matrix>& d_output) {
  using Matrix = typename MlpNet<Scalar>::Matrix;
  if (cache.inputs.size() != net.layer_count() || d_output.rows() != cache.output.rows() ||
      d_output.cols() != cache.output.cols()) {
    fail(ErrorCode::kInvalidShape, "mlp_backward: gradient does not match the cached forward pass");
  }
  MlpGradients<Scalar> grads;
  grads.weights.resize(net.layer_count());
  grads.biases.resize(net.layer_count());

  Matrix delta = d_output;
  if (net.output == OutputActivation::kSigmoid) {
    delta = (delta.array() * cache.output.array() * (Scalar(1) - cache.output.array())).matrix();
  }
  for (std::size_t l = net.layer_count(); l-- > 0;) {
    grads.weights[l].noalias() = delta * cache.inputs[l].transpose();
    grads.biases[l] = delta.rowwise().sum();
    Matrix upstream = net.weights[l].transpose() * delta;
    if (l > 0) {
      const auto& z = cache.pre_activations[l - 1];
      delta = (upstream.array() * (z.array() > Scalar(0)).template cast<Scalar>()).matrix();
    } else {
      grads.input = std::move(upstream);
    }
  }
  return grads;
}

template <typename Scalar>
void sgd_step(MlpNet<Scalar>& net, const MlpGradients<Scalar>& grads, Scalar lr) {
  if (grads.weights.size() != net.layer_count()) fail(ErrorCode::kInvalidShape, "gradient layer count mismatch");
  for (std::size_t l = 0; l < net.layer_count(); ++l) {
    if (grads.weights[l].rows() != net.weights[l].rows() || grads.weights[l].cols() != net.weights[l].cols() ||
        grads.biases[l].size() != net.biases[l].size()) {
      fail(ErrorCode::kInvalidShape, "gradient dims mismatch at layer " + std::to_string(l));
    }
    net.weights[l] -= lr * grads.weights[l];
    net.biases[l] -= lr * grads.biases[l];
  }
}

/// Adam moments for one network.
template <typename Scalar>
class AdamOptimizer {
 public:
  AdamOptimizer() = default;
  explicit AdamOptimizer(const MlpNet<Scalar>& net, Scalar beta1 = Scalar(0.9), Scalar beta2 = Scalar(0.999),
                         Scalar eps = Scalar(1e-8))
      : beta1_(beta1), beta2_(beta2), eps_(eps) {
    for (std::size_t l = 0; l < net.layer_count(); ++l) {
      m_w_.push_back(MlpNet<Scalar>::Matrix::Zero(net.weights[l].rows(), net.weights[l].cols()));
      v_w_.push_back(m_w_.back());
      m_b_.push_back(MlpNet<Scalar>::Vector::Zero(net.biases[l].size()));
      v_b_.push_back(m_b_.back());
    }
  }

  void step(MlpNet<Scalar>& net, const MlpGradients<Scalar>& grads, Scalar lr) {
    ++t_;
    const Scalar c1 = Scalar(1) - std::pow(beta1_, static_cast<Scalar>(t_));
    const Scalar c2 = Scalar(1) - std::pow(beta2_, static_cast<Scalar>(t_));
    for (std::size_t l = 0; l < net.layer_count(); ++l) {
      update(net.weights[l], m_w_[l], v_w_[l], grads.weights[l], lr, c1, c2);
      update(net.biases[l], m_b_[l], v_b_[l], grads.biases[l], lr, c1, c2);
    }
  }

 private:
  template <typename Param, typename Grad>
  void update(Param& p, Param& m, Param& v, const Grad& g, Scalar lr, Scalar c1, Scalar c2) {
    m = beta1_ * m + (Scalar(1) - beta1_) * g;
    v = beta2_ * v + (Scalar(1) - beta2_) * g.cwiseAbs2();
    p.array() -= lr * (m.array() / c1) / ((v.array() / c2).sqrt() + eps_);
  }

  Scalar beta1_ = Scalar(0.9), beta2_ = Scalar(0.999), eps_ = Scalar(1e-8);
  long t_ = 0;
  std::vector<typename MlpNet<Scalar>::Matrix> m_w_, v_w_;
  std::vector<typename MlpNet<Scalar>::Vector> m_b_, v_b_;
};

/// target <- tau * source + (1 - tau) * target, elementwise.
template <typename Scalar>
void soft_update(MlpNet<Scalar>& target, const MlpNet<Scalar>& source, Scalar tau) {
  if (target.dims != source.dims) fail(ErrorCode::kInvalidShape, "soft_update between different architectures");
  for (std::size_t l = 0; l < target.layer_count(); ++l) {
    target.weights[l] = tau * source.weights[l] + (Scalar(1) - tau) * target.weights[l];
    target.biases[l] = tau * source.biases[l] + (Scalar(1) - tau) * target.biases[l];
  }
}

}  // namespace splitwise
