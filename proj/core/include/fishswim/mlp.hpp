#pragma once

#include <Eigen/Core>
#include <cmath>
#include <random>
#include <span>
#include <vector>

#include "fishswim/errors.hpp"

// Dense ReLU networks with a linear output layer, batched column-wise
// (one sample per column), plus Adam. All parameters of a network live in
// one flat vector so optimisers, averaging and checkpoints treat them alike.
namespace fishswim::nn {

template <typename T>
using Matrix = Eigen::Matrix<T, Eigen::Dynamic, Eigen::Dynamic>;
template <typename T>
using Vector = Eigen::Matrix<T, Eigen::Dynamic, 1>;

template <typename T>
class Mlp {
 public:
  using Mat = Matrix<T>;
  using MatMap = Eigen::Map<Mat>;
  using ConstMatMap = Eigen::Map<const Mat>;
  using VecMap = Eigen::Map<Vector<T>>;
  using ConstVecMap = Eigen::Map<const Vector<T>>;

  Mlp() = default;

  // sizes = {inputs, hidden..., outputs}. Weights and biases start uniform in
  // +-1/sqrt(fan_in).
  template <typename Rng>
  Mlp(std::vector<int> sizes, Rng& rng) : sizes_(std::move(sizes)) {
    if (sizes_.size() < 2) throw ConfigError("network needs at least an input and an output layer");
    std::size_t total = 0;
    for (std::size_t l = 0; l + 1 < sizes_.size(); ++l) {
      if (sizes_[l] <= 0 || sizes_[l + 1] <= 0) throw ConfigError("layer sizes must be positive");
      w_offset_.push_back(total);
      total += static_cast<std::size_t>(sizes_[l]) * sizes_[l + 1];
      b_offset_.push_back(total);
      total += sizes_[l + 1];
    }
    params_.setZero(static_cast<Eigen::Index>(total));
    grads_.setZero(static_cast<Eigen::Index>(total));
    for (std::size_t l = 0; l < layers(); ++l) {
      const double bound = 1.0 / std::sqrt(static_cast<double>(sizes_[l]));
      std::uniform_real_distribution<double> u(-bound, bound);
      const std::size_t end = l + 1 < layers() ? w_offset_[l + 1] : total;
      for (std::size_t i = w_offset_[l]; i < end; ++i) params_[static_cast<Eigen::Index>(i)] = static_cast<T>(u(rng));
    }
  }

  std::size_t layers() const { return sizes_.size() - 1; }
  const std::vector<int>& sizes() const { return sizes_; }
  int inputs() const { return sizes_.front(); }
  int outputs() const { return sizes_.back(); }
  Eigen::Index parameter_count() const { return params_.size(); }
  Vector<T>& params() { return params_; }
  const Vector<T>& params() const { return params_; }
  Vector<T>& grads() { return grads_; }
  const Vector<T>& grads() const { return grads_; }
  void zero_grad() { grads_.setZero(); }

  ConstMatMap weight(std::size_t l) const {
    return ConstMatMap(params_.data() + w_offset_[l], sizes_[l + 1], sizes_[l]);
  }
  ConstVecMap bias(std::size_t l) const { return ConstVecMap(params_.data() + b_offset_[l], sizes_[l + 1]); }

  // Forward pass keeping activations for a following backward().
  const Mat& forward(const Mat& x) {
    if (x.rows() != inputs()) throw ConfigError("network input has wrong dimension");
    acts_.resize(layers() + 1);
    acts_[0] = x;
    for (std::size_t l = 0; l < layers(); ++l) {
      acts_[l + 1].noalias() = weight(l) * acts_[l];
      acts_[l + 1].colwise() += bias(l);
      if (l + 1 < layers()) acts_[l + 1] = acts_[l + 1].cwiseMax(T(0));
    }
    return acts_.back();
  }

  // Forward pass without caching.
  Mat predict(const Mat& x) const {
    Mat a = x;
    for (std::size_t l = 0; l < layers(); ++l) {
      Mat z = weight(l) * a;
      z.colwise() += bias(l);
      a = l + 1 < layers() ? Mat(z.cwiseMax(T(0))) : z;
    }
    return a;
  }

  // Accumulates parameter gradients for dL/d(output) and returns dL/d(input).
  Mat backward(const Mat& grad_out) {
    Mat g = grad_out;
    for (std::size_t l = layers(); l-- > 0;) {
      if (l + 1 < layers()) g = (acts_[l + 1].array() > T(0)).select(g, T(0));
      MatMap(grads_.data() + w_offset_[l], sizes_[l + 1], sizes_[l]).noalias() += g * acts_[l].transpose();
      VecMap(grads_.data() + b_offset_[l], sizes_[l + 1]) += g.rowwise().sum();
      Mat next = weight(l).transpose() * g;
      g.swap(next);
    }
    return g;
  }

 private:
  std::vector<int> sizes_;
  std::vector<std::size_t> w_offset_;
  std::vector<std::size_t> b_offset_;
  Vector<T> params_;
  Vector<T> grads_;
  std::vector<Mat> acts_;
};

template <typename T>
class Adam {
 public:
  Adam() = default;
  Adam(Eigen::Index n, double lr, double beta1 = 0.9, double beta2 = 0.999, double eps = 1e-8)
      : lr_(lr), beta1_(beta1), beta2_(beta2), eps_(eps) {
    m_.setZero(n);
    v_.setZero(n);
  }

  void step(Vector<T>& params, const Vector<T>& grads) {
    if (params.size() != m_.size() || grads.size() != m_.size()) throw ConfigError("optimizer size mismatch");
    ++t_;
    const T b1 = static_cast<T>(beta1_);
    const T b2 = static_cast<T>(beta2_);
    m_ = b1 * m_ + (T(1) - b1) * grads;
    v_ = b2 * v_ + (T(1) - b2) * grads.cwiseAbs2();
    const T c1 = static_cast<T>(1.0 - std::pow(beta1_, static_cast<double>(t_)));
    const T c2 = static_cast<T>(1.0 - std::pow(beta2_, static_cast<double>(t_)));
    const T lr = static_cast<T>(lr_);
    const T eps = static_cast<T>(eps_);
    params.array() -= lr * (m_.array() / c1) / ((v_.array() / c2).sqrt() + eps);
  }

  long long steps() const { return t_; }

 private:
  double lr_ = 3e-4;
  double beta1_ = 0.9;
  double beta2_ = 0.999;
  double eps_ = 1e-8;
  long long t_ = 0;
  Vector<T> m_;
  Vector<T> v_;
};

// target <- tau * online + (1 - tau) * target
template <typename T>
void polyak_update(Mlp<T>& target, const Mlp<T>& online, double tau) {
  if (target.parameter_count() != online.parameter_count()) throw ConfigError("polyak update on mismatched networks");
  const T t = static_cast<T>(tau);
  if (tau == 1.0) {
    target.params() = online.params();
  } else {
    target.params() = t * online.params() + (T(1) - t) * target.params();
  }
}

}  // namespace fishswim::nn
