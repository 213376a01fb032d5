#pragma once

#include <cmath>
#include <cstdint>
#include <cstring>
#include <memory>
#include <span>
#include <string>
#include <vector>

#include "pignet/config.hpp"
#include "pignet/inception.hpp"
#include "pignet/layers.hpp"

namespace pignet {

template <typename T>
struct ForwardResult {
  Tensor<T> logits;           // (groups·n)×P, raw scores
  Tensor<T> feature_transform;  // (groups·K)×K, undefined when disabled
  Tensor<T> local;            // (groups·n)×K aligned per-point features
  Tensor<T> global;           // groups×K pooled descriptor
};

/// Common surface of the segmentation networks (PIG-Net and the PointNet
/// comparator) consumed by the trainer and evaluator.
template <typename T>
class SegmentationNet {
 public:
  virtual ~SegmentationNet() = default;

  /// points: (groups·n)×3, clouds stacked row-wise with equal n.
  virtual ForwardResult<T> forward(const Tensor<T>& points, std::size_t groups,
                                   Mode mode) = 0;
  virtual ParameterSet<T> parameters() const = 0;
  virtual const ModelConfig& config() const = 0;

  std::size_t num_parts() const { return config().num_parts; }
};

namespace detail {

template <typename T>
void check_points(const Tensor<T>& points, std::size_t groups) {
  if (points.rank() != 2 || points.dim(1) != 3) {
    throw dimension_error("expected (n×3) points, got " +
                          shape_str(points.shape()));
  }
  if (groups == 0 || points.dim(0) == 0 || points.dim(0) % groups != 0) {
    throw input_error("cannot split " + std::to_string(points.dim(0)) +
                      " points into " + std::to_string(groups) +
                      " non-empty clouds");
  }
  for (std::size_t i = 0; i < points.size(); ++i) {
    if (!std::isfinite(double(points[i]))) {
      throw input_error("non-finite coordinate at point " +
                        std::to_string(i / 3));
    }
  }
}

template <typename T>
class SegmentationHead {
 public:
  SegmentationHead() = default;
  SegmentationHead(std::size_t in, const std::vector<std::size_t>& widths,
                   std::size_t parts, Rng& rng) {
    for (auto w : widths) {
      hidden_.emplace_back(in, w, rng);
      in = w;
    }
    out_ = PointwiseConv<T>(in, parts, true, rng);
  }

  Tensor<T> operator()(const Tensor<T>& x, Mode mode) {
    Tensor<T> h = x;
    for (auto& layer : hidden_) h = layer(h, mode);
    return out_(h);
  }

  void collect(const std::string& prefix, ParameterSet<T>& set) const {
    for (std::size_t i = 0; i < hidden_.size(); ++i)
      hidden_[i].collect(prefix + ".conv" + std::to_string(i), set);
    out_.collect(prefix + ".out", set);
  }

 private:
  std::vector<ConvBnRelu<T>> hidden_;
  PointwiseConv<T> out_;
};

}  // namespace detail

/// Input T-Net -> inception stack -> feature T-Net -> global pooling ->
/// [local | global] per point -> segmentation head.
template <typename T>
class PigNet final : public SegmentationNet<T> {
 public:
  PigNet(ModelConfig config, std::uint64_t seed) : config_(std::move(config)) {
    config_.validate();
    if (config_.architecture != Architecture::pignet) {
      throw config_error("PigNet built from a non-pignet config");
    }
    Rng rng(seed);
    input_tnet_ = TNet<T>(3, config_.tnet, rng);
    if (config_.use_inception) {
      stack_ = InceptionStack<T>(3, config_.inception_plan, rng);
    } else {
      std::size_t in = 3;
      for (auto e : config_.inception_plan) {
        plain_.emplace_back(in, inception_width(e), rng);
        in = inception_width(e);
      }
    }
    std::size_t k = inception_width(config_.inception_plan.back());
    if (config_.feature_reduction) {
      reduction_ = ConvBnRelu<T>(k, config_.feature_reduction, rng);
      k = config_.feature_reduction;
    }
    if (config_.feature_transform) feature_tnet_ = TNet<T>(k, config_.tnet, rng);
    head_ = detail::SegmentationHead<T>(2 * k, config_.head_widths,
                                        config_.num_parts, rng);
  }

  ForwardResult<T> forward(const Tensor<T>& points, std::size_t groups,
                           Mode mode) override {
    detail::check_points(points, groups);
    const std::size_t n = points.dim(0) / groups;

    Tensor<T> aligned = tnet_apply(points, input_tnet_, groups, mode).features;
    Tensor<T> local;
    if (config_.use_inception) {
      local = stack_(aligned, mode);
    } else {
      local = aligned;
      for (auto& layer : plain_) local = layer(local, mode);
    }
    if (config_.feature_reduction) local = reduction_(local, mode);

    ForwardResult<T> out;
    if (config_.feature_transform) {
      auto ft = tnet_apply(local, feature_tnet_, groups, mode);
      local = ft.features;
      out.feature_transform = ft.transform;
    }
    out.local = local;
    out.global = config_.use_gap ? segment_mean(local, groups)
                                 : segment_max(local, groups);
    Tensor<T> combined = concat(local, repeat_rows(out.global, n));
    out.logits = head_(combined, mode);
    return out;
  }

  ParameterSet<T> parameters() const override {
    ParameterSet<T> set;
    input_tnet_.collect("input_tnet", set);
    if (config_.use_inception) {
      stack_.collect("stack", set);
    } else {
      for (std::size_t i = 0; i < plain_.size(); ++i)
        plain_[i].collect("stack.plain" + std::to_string(i), set);
    }
    if (config_.feature_reduction) reduction_.collect("reduction", set);
    if (config_.feature_transform) feature_tnet_.collect("feature_tnet", set);
    head_.collect("head", set);
    return set;
  }

  const ModelConfig& config() const override { return config_; }

  TNet<T>& input_tnet() { return input_tnet_; }
  TNet<T>& feature_tnet() { return feature_tnet_; }

 private:
  ModelConfig config_;
  TNet<T> input_tnet_;
  InceptionStack<T> stack_;
  std::vector<ConvBnRelu<T>> plain_;
  ConvBnRelu<T> reduction_;
  TNet<T> feature_tnet_;
  detail::SegmentationHead<T> head_;
};

/// Compact PointNet-style segmentation comparator: input T-Net -> shared
/// convs (feature T-Net after the first `baseline_local_depth`) -> max over
/// points -> [local | global] -> head.
template <typename T>
class PointNetSeg final : public SegmentationNet<T> {
 public:
  PointNetSeg(ModelConfig config, std::uint64_t seed)
      : config_(std::move(config)) {
    config_.validate();
    if (config_.architecture != Architecture::pointnet) {
      throw config_error("PointNetSeg built from a non-pointnet config");
    }
    Rng rng(seed);
    input_tnet_ = TNet<T>(3, config_.tnet, rng);
    std::size_t in = 3;
    for (std::size_t i = 0; i < config_.baseline_convs.size(); ++i) {
      if (i == config_.baseline_local_depth && config_.feature_transform) {
        feature_tnet_ = TNet<T>(in, config_.tnet, rng);
      }
      convs_.emplace_back(in, config_.baseline_convs[i], rng);
      in = config_.baseline_convs[i];
    }
    const std::size_t local =
        config_.baseline_convs[config_.baseline_local_depth - 1];
    head_ = detail::SegmentationHead<T>(local + in, config_.head_widths,
                                        config_.num_parts, rng);
  }

  ForwardResult<T> forward(const Tensor<T>& points, std::size_t groups,
                           Mode mode) override {
    detail::check_points(points, groups);
    const std::size_t n = points.dim(0) / groups;
    Tensor<T> h = tnet_apply(points, input_tnet_, groups, mode).features;
    ForwardResult<T> out;
    Tensor<T> local;
    for (std::size_t i = 0; i < convs_.size(); ++i) {
      if (i == config_.baseline_local_depth) {
        if (config_.feature_transform) {
          auto ft = tnet_apply(h, feature_tnet_, groups, mode);
          h = ft.features;
          out.feature_transform = ft.transform;
        }
        local = h;
      }
      h = convs_[i](h, mode);
    }
    out.local = local;
    out.global = segment_max(h, groups);
    out.logits = head_(concat(local, repeat_rows(out.global, n)), mode);
    return out;
  }

  ParameterSet<T> parameters() const override {
    ParameterSet<T> set;
    input_tnet_.collect("input_tnet", set);
    for (std::size_t i = 0; i < convs_.size(); ++i) {
      if (i == config_.baseline_local_depth && config_.feature_transform)
        feature_tnet_.collect("feature_tnet", set);
      convs_[i].collect("conv" + std::to_string(i), set);
    }
    head_.collect("head", set);
    return set;
  }

  const ModelConfig& config() const override { return config_; }

 private:
  ModelConfig config_;
  TNet<T> input_tnet_;
  std::vector<ConvBnRelu<T>> convs_;
  TNet<T> feature_tnet_;
  detail::SegmentationHead<T> head_;
};

template <typename T>
std::unique_ptr<SegmentationNet<T>> build_model(const ModelConfig& config,
                                                std::uint64_t seed) {
  if (config.architecture == Architecture::pointnet)
    return std::make_unique<PointNetSeg<T>>(config, seed);
  return std::make_unique<PigNet<T>>(config, seed);
}

/// Mean per-point cross entropy plus lambda · mean regularizer of the feature
/// transforms.
template <typename T>
Tensor<T> segmentation_loss(const Tensor<T>& logits, std::span<const int> labels,
                            const Tensor<T>& feature_transform,
                            std::size_t groups, double lambda_reg) {
  if (logits.rank() == 2) {
    for (std::size_t i = 0; i < labels.size(); ++i) {
      if (labels[i] < 0 || static_cast<std::size_t>(labels[i]) >= logits.dim(1)) {
        throw data_error("label " + std::to_string(labels[i]) + " at point " +
                         std::to_string(i) + " outside [0, " +
                         std::to_string(logits.dim(1)) + ")");
      }
    }
  }
  Tensor<T> ce = softmax_cross_entropy(logits, labels);
  if (!feature_transform.defined() || lambda_reg == 0.0) return ce;
  return add(ce, scale(orthogonality_penalty(feature_transform, groups),
                       static_cast<T>(lambda_reg)));
}

template <typename T>
Tensor<T> segmentation_loss(const ForwardResult<T>& fwd,
                            std::span<const int> labels, std::size_t groups,
                            double lambda_reg) {
  return segmentation_loss(fwd.logits, labels, fwd.feature_transform, groups,
                           lambda_reg);
}

/// Row-wise argmax; ties resolve to the lower part id.
template <typename T>
std::vector<int> argmax_parts(const Tensor<T>& logits) {
  const std::size_t m = logits.dim(0), p = logits.dim(1);
  std::vector<int> out(m);
  for (std::size_t i = 0; i < m; ++i) {
    std::size_t best = 0;
    for (std::size_t j = 1; j < p; ++j)
      if (logits.at(i, j) > logits.at(i, best)) best = j;
    out[i] = static_cast<int>(best);
  }
  return out;
}

/// Eval-mode per-point part prediction for one cloud (n×3).
template <typename T>
std::vector<int> predict(SegmentationNet<T>& model, const Tensor<T>& cloud) {
  NoGradGuard guard;
  return argmax_parts(model.forward(cloud, 1, Mode::eval).logits);
}

template <typename T>
std::size_t count_parameters(const SegmentationNet<T>& model) {
  std::size_t total = 0;
  for (const auto& p : model.parameters().params) total += p.tensor.size();
  return total;
}

namespace detail {

inline std::size_t conv_params(std::size_t in, std::size_t out, bool bias) {
  return in * out + (bias ? out : 0);
}
inline std::size_t conv_bn_params(std::size_t in, std::size_t out) {
  return in * out + 2 * out;
}
inline std::size_t tnet_params(std::size_t k, const TNetWidths& w) {
  std::size_t total = 0, in = k;
  for (auto c : w.conv) {
    total += conv_bn_params(in, c);
    in = c;
  }
  for (auto f : w.fc) {
    total += conv_params(in, f, true);
    in = f;
  }
  return total + conv_params(in, k * k, true);
}
inline std::size_t head_params(std::size_t in, const std::vector<std::size_t>& widths,
                               std::size_t parts) {
  std::size_t total = 0;
  for (auto w : widths) {
    total += conv_bn_params(in, w);
    in = w;
  }
  return total + conv_params(in, parts, true);
}

}  // namespace detail

/// Parameter count computed from the configuration alone, without
/// allocating the network (the full-width feature T-Net is very large).
inline std::size_t count_parameters(const ModelConfig& c) {
  using namespace detail;
  std::size_t total = tnet_params(3, c.tnet);
  if (c.architecture == Architecture::pointnet) {
    std::size_t in = 3;
    for (std::size_t i = 0; i < c.baseline_convs.size(); ++i) {
      if (i == c.baseline_local_depth && c.feature_transform)
        total += tnet_params(in, c.tnet);
      total += conv_bn_params(in, c.baseline_convs[i]);
      in = c.baseline_convs[i];
    }
    return total + head_params(c.baseline_convs[c.baseline_local_depth - 1] + in,
                               c.head_widths, c.num_parts);
  }
  std::size_t in = 3;
  for (auto e : c.inception_plan) {
    if (c.use_inception) {
      total += conv_bn_params(in, e) + 2 * conv_bn_params(e, e / 2) +
               conv_bn_params(e, e);
    } else {
      total += conv_bn_params(in, inception_width(e));
    }
    in = inception_width(e);
  }
  if (c.feature_reduction) {
    total += conv_bn_params(in, c.feature_reduction);
    in = c.feature_reduction;
  }
  if (c.feature_transform) total += tnet_params(in, c.tnet);
  return total + head_params(2 * in, c.head_widths, c.num_parts);
}

/// FNV-1a over the raw bytes of every parameter, in declaration order.
template <typename T>
std::uint64_t parameter_hash(const SegmentationNet<T>& model) {
  std::uint64_t h = 0xcbf29ce484222325ULL;
  for (const auto& p : model.parameters().params) {
    auto d = p.tensor.data();
    h = fnv1a(std::string_view(reinterpret_cast<const char*>(d.data()),
                               d.size() * sizeof(T)),
              h);
  }
  return h;
}

}  // namespace pignet
