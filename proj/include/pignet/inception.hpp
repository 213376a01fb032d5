#pragma once

#include <string>
#include <vector>

#include "pignet/layers.hpp"

namespace pignet {

/// Output width of an inception layer with e filters: e + e/2 + e/2 + e.
constexpr std::size_t inception_width(std::size_t e) { return 3 * e; }

/// Channel width at the end of a stack with the given filter plan.
inline std::size_t stack_width(const std::vector<std::size_t>& plan) {
  return plan.empty() ? 3 : inception_width(plan.back());
}

/// One point inception layer.
///
///   t = ReLU(BN(conv_a(x)))                  e channels
///   b = ReLU(BN(conv_b(t)))                  e/2
///   c = ReLU(BN(conv_c(t)))                  e/2
///   d = ReLU(BN(conv_d(window_max(t))))      e
///   out = [t | b | c | d]                    3e
///
/// Branches b and c are parallel siblings with independent weights. The
/// pooling branch slides along channels, so every point is processed on its
/// own and the layer is equivariant to point order.
template <typename T>
class InceptionLayer {
 public:
  InceptionLayer() = default;
  InceptionLayer(std::size_t in, std::size_t e, Rng& rng) : in_(in), e_(e) {
    if (e == 0 || e % 2 != 0) {
      throw config_error("inception filter count must be even and positive, got " +
                         std::to_string(e));
    }
    a_ = ConvBnRelu<T>(in, e, rng);
    b_ = ConvBnRelu<T>(e, e / 2, rng);
    c_ = ConvBnRelu<T>(e, e / 2, rng);
    d_ = ConvBnRelu<T>(e, e, rng);
  }

  Tensor<T> operator()(const Tensor<T>& x, Mode mode) {
    if (x.rank() != 2 || x.dim(1) != in_) {
      throw dimension_error("inception layer expects " + std::to_string(in_) +
                            " channels, got shape " + shape_str(x.shape()));
    }
    Tensor<T> t = a_(x, mode);
    Tensor<T> b = b_(t, mode);
    Tensor<T> c = c_(t, mode);
    Tensor<T> d = d_(channel_window_max(t), mode);
    return concat(std::vector<Tensor<T>>{t, b, c, d});
  }

  std::size_t filters() const { return e_; }
  std::size_t in_channels() const { return in_; }
  std::size_t out_channels() const { return inception_width(e_); }

  void collect(const std::string& prefix, ParameterSet<T>& set) const {
    a_.collect(prefix + ".a", set);
    b_.collect(prefix + ".b", set);
    c_.collect(prefix + ".c", set);
    d_.collect(prefix + ".d", set);
  }

 private:
  std::size_t in_ = 0;
  std::size_t e_ = 0;
  ConvBnRelu<T> a_, b_, c_, d_;
};

template <typename T>
class InceptionStack {
 public:
  InceptionStack() = default;
  InceptionStack(std::size_t in, const std::vector<std::size_t>& plan, Rng& rng)
      : in_(in) {
    for (auto e : plan) {
      layers_.emplace_back(in, e, rng);
      in = layers_.back().out_channels();
    }
  }

  Tensor<T> operator()(const Tensor<T>& x, Mode mode) {
    Tensor<T> h = x;
    for (auto& layer : layers_) h = layer(h, mode);
    return h;
  }

  std::size_t in_channels() const { return in_; }
  std::size_t out_channels() const {
    return layers_.empty() ? in_ : layers_.back().out_channels();
  }
  const std::vector<InceptionLayer<T>>& layers() const { return layers_; }

  void collect(const std::string& prefix, ParameterSet<T>& set) const {
    for (std::size_t i = 0; i < layers_.size(); ++i)
      layers_[i].collect(prefix + ".inception" + std::to_string(i), set);
  }

 private:
  std::size_t in_ = 0;
  std::vector<InceptionLayer<T>> layers_;
};

template <typename T>
Tensor<T> inception_forward(const Tensor<T>& features, InceptionLayer<T>& layer,
                            Mode mode = Mode::eval) {
  return layer(features, mode);
}

template <typename T>
Tensor<T> inception_stack_forward(const Tensor<T>& points,
                                  InceptionStack<T>& stack,
                                  Mode mode = Mode::eval) {
  if (points.rank() != 2 || points.dim(1) != 3) {
    throw dimension_error("inception stack expects n×3 points, got " +
                          shape_str(points.shape()));
  }
  return stack(points, mode);
}

}  // namespace pignet
