#pragma once

#include <cmath>
#include <random>
#include <string>
#include <utility>
#include <vector>

#include "pignet/ops.hpp"
#include "pignet/rng.hpp"
#include "pignet/tensor.hpp"

namespace pignet {

template <typename T>
struct NamedTensor {
  std::string name;
  Tensor<T> tensor;
};

/// Trainable parameters and non-trainable state (BN running statistics) of a
/// layer tree, in fixed declaration order.
template <typename T>
struct ParameterSet {
  std::vector<NamedTensor<T>> params;
  std::vector<NamedTensor<T>> buffers;

  std::vector<Tensor<T>> tensors() const {
    std::vector<Tensor<T>> out;
    for (const auto& p : params) out.push_back(p.tensor);
    return out;
  }
};

/// Shared linear map applied to every row (point) independently:
/// out[i] = x[i]·W + bias.
template <typename T>
class PointwiseConv {
 public:
  PointwiseConv() = default;

  PointwiseConv(std::size_t in, std::size_t out, bool bias, Rng& rng)
      : in_(in), out_(out) {
    // Glorot-uniform weights, zero bias.
    const double bound = std::sqrt(6.0 / double(in + out));
    std::uniform_real_distribution<double> dist(-bound, bound);
    std::vector<T> w(in * out);
    for (auto& v : w) v = static_cast<T>(dist(rng));
    weight_ = Tensor<T>::from({in, out}, std::move(w), true);
    if (bias) bias_ = Tensor<T>::zeros({out}, true);
  }

  static PointwiseConv from_tensors(Tensor<T> weight, Tensor<T> bias = {}) {
    PointwiseConv conv;
    conv.in_ = weight.dim(0);
    conv.out_ = weight.dim(1);
    conv.weight_ = std::move(weight);
    conv.bias_ = std::move(bias);
    return conv;
  }

  Tensor<T> operator()(const Tensor<T>& x) const {
    if (x.rank() != 2 || x.dim(1) != in_) {
      throw dimension_error("pointwise conv expects " + std::to_string(in_) +
                            " input channels, got shape " +
                            shape_str(x.shape()));
    }
    Tensor<T> y = matmul(x, weight_);
    return bias_.defined() ? add_bias(y, bias_) : y;
  }

  std::size_t in_channels() const { return in_; }
  std::size_t out_channels() const { return out_; }
  bool has_bias() const { return bias_.defined(); }
  const Tensor<T>& weight() const { return weight_; }
  const Tensor<T>& bias() const { return bias_; }

  void collect(const std::string& prefix, ParameterSet<T>& set) const {
    set.params.push_back({prefix + ".weight", weight_});
    if (bias_.defined()) set.params.push_back({prefix + ".bias", bias_});
  }

 private:
  std::size_t in_ = 0;
  std::size_t out_ = 0;
  Tensor<T> weight_;
  Tensor<T> bias_;
};

template <typename T>
class BatchNorm {
 public:
  static constexpr double kMomentum = 0.1;
  static constexpr double kEpsilon = 1e-5;

  BatchNorm() = default;
  explicit BatchNorm(std::size_t width)
      : gamma_(Tensor<T>::filled({width}, T{1}, true)),
        beta_(Tensor<T>::zeros({width}, true)),
        running_mean_(Tensor<T>::zeros({width})),
        running_var_(Tensor<T>::filled({width}, T{1})) {}

  /// Train mode normalizes with the statistics of all rows and folds them
  /// into the running estimates; eval mode applies the running estimates.
  Tensor<T> operator()(const Tensor<T>& x, Mode mode) {
    const T eps = static_cast<T>(kEpsilon);
    if (mode == Mode::eval) {
      return batch_norm_eval(x, gamma_, beta_, running_mean_.data(),
                             running_var_.data(), eps);
    }
    BatchMoments<T> moments;
    Tensor<T> y = batch_norm_train(x, gamma_, beta_, eps, &moments);
    const T mom = static_cast<T>(kMomentum);
    auto mean = running_mean_.mutable_data();
    auto var = running_var_.mutable_data();
    for (std::size_t j = 0; j < mean.size(); ++j) {
      mean[j] = (T{1} - mom) * mean[j] + mom * moments.mean[j];
      var[j] = (T{1} - mom) * var[j] + mom * moments.var[j];
    }
    return y;
  }

  std::size_t width() const { return gamma_.size(); }
  Tensor<T>& gamma() { return gamma_; }
  Tensor<T>& beta() { return beta_; }
  const Tensor<T>& running_mean() const { return running_mean_; }
  const Tensor<T>& running_var() const { return running_var_; }

  void collect(const std::string& prefix, ParameterSet<T>& set) const {
    set.params.push_back({prefix + ".gamma", gamma_});
    set.params.push_back({prefix + ".beta", beta_});
    set.buffers.push_back({prefix + ".running_mean", running_mean_});
    set.buffers.push_back({prefix + ".running_var", running_var_});
  }

 private:
  Tensor<T> gamma_, beta_;
  Tensor<T> running_mean_, running_var_;
};

/// Conv (no bias, BN supplies the shift) -> BatchNorm -> ReLU.
template <typename T>
class ConvBnRelu {
 public:
  ConvBnRelu() = default;
  ConvBnRelu(std::size_t in, std::size_t out, Rng& rng)
      : conv_(in, out, false, rng), bn_(out) {}

  Tensor<T> operator()(const Tensor<T>& x, Mode mode) {
    return relu(bn_(conv_(x), mode));
  }

  std::size_t out_channels() const { return conv_.out_channels(); }

  void collect(const std::string& prefix, ParameterSet<T>& set) const {
    conv_.collect(prefix + ".conv", set);
    bn_.collect(prefix + ".bn", set);
  }

 private:
  PointwiseConv<T> conv_;
  BatchNorm<T> bn_;
};

template <typename T>
Tensor<T> max_over_points(const Tensor<T>& features) {
  return reduce_max(features);
}

template <typename T>
Tensor<T> global_average_pool(const Tensor<T>& features) {
  return reduce_mean(features);
}

template <typename T>
Tensor<T> orthogonality_regularizer(const Tensor<T>& a) {
  if (a.rank() != 2 || a.dim(0) != a.dim(1)) {
    throw dimension_error("orthogonality_regularizer needs a square matrix, got " +
                          shape_str(a.shape()));
  }
  return orthogonality_penalty(a, 1);
}

struct TNetWidths {
  std::vector<std::size_t> conv{64, 128, 1024};
  std::vector<std::size_t> fc{512, 256};
};

/// Alignment network predicting one k×k matrix per cloud:
/// shared convs -> max over points -> fully connected -> k×k.
///
/// The final affine starts at W = 0, bias = vec(I), so a fresh network
/// outputs the identity for every input.
template <typename T>
class TNet {
 public:
  TNet() = default;
  TNet(std::size_t k, const TNetWidths& widths, Rng& rng) : k_(k) {
    std::size_t in = k;
    for (auto w : widths.conv) {
      convs_.emplace_back(in, w, rng);
      in = w;
    }
    for (auto w : widths.fc) {
      fcs_.emplace_back(in, w, true, rng);
      in = w;
    }
    std::vector<T> eye(k * k, T{0});
    for (std::size_t i = 0; i < k; ++i) eye[i * k + i] = T{1};
    out_ = PointwiseConv<T>::from_tensors(Tensor<T>::zeros({in, k * k}, true),
                                          Tensor<T>::from({k * k}, eye, true));
  }

  std::size_t k() const { return k_; }

  /// features: (groups·n)×k. Returns the stacked (groups·k)×k transforms.
  Tensor<T> operator()(const Tensor<T>& features, std::size_t groups,
                       Mode mode) {
    if (features.rank() != 2 || features.dim(1) != k_) {
      throw dimension_error("T-Net of size " + std::to_string(k_) +
                            " applied to features of shape " +
                            shape_str(features.shape()));
    }
    Tensor<T> h = features;
    for (auto& c : convs_) h = c(h, mode);
    h = segment_max(h, groups);
    for (auto& fc : fcs_) h = relu(fc(h));
    return reshape(out_(h), {groups * k_, k_});
  }

  PointwiseConv<T>& output_layer() { return out_; }

  void collect(const std::string& prefix, ParameterSet<T>& set) const {
    for (std::size_t i = 0; i < convs_.size(); ++i)
      convs_[i].collect(prefix + ".conv" + std::to_string(i), set);
    for (std::size_t i = 0; i < fcs_.size(); ++i)
      fcs_[i].collect(prefix + ".fc" + std::to_string(i), set);
    out_.collect(prefix + ".out", set);
  }

 private:
  std::size_t k_ = 0;
  std::vector<ConvBnRelu<T>> convs_;
  std::vector<PointwiseConv<T>> fcs_;
  PointwiseConv<T> out_;
};

template <typename T>
struct Aligned {
  Tensor<T> features;   // (groups·n)×k
  Tensor<T> transform;  // (groups·k)×k
};

/// Predicts the alignment matrix and applies it: aligned = features · A.
template <typename T>
Aligned<T> tnet_apply(const Tensor<T>& features, TNet<T>& tnet,
                      std::size_t groups = 1, Mode mode = Mode::eval) {
  Tensor<T> a = tnet(features, groups, mode);
  return {grouped_matmul(features, a, groups), a};
}

}  // namespace pignet
