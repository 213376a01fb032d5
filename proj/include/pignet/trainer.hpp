#pragma once

#include <algorithm>
#include <chrono>
#include <cmath>
#include <functional>
#include <limits>
#include <memory>
#include <numeric>
#include <vector>

#include "pignet/checkpoint.hpp"
#include "pignet/data.hpp"
#include "pignet/evaluator.hpp"
#include "pignet/model.hpp"
#include "pignet/optim.hpp"

namespace pignet {

struct TrainConfig {
  std::size_t batch_size = 64;
  AdamConfig adam;
  std::size_t epochs = 1;
  std::uint64_t seed = 0;
  std::size_t points = 1024;
  bool augment = true;
  AugmentConfig augmentation;
  std::size_t threads = 1;  // validation workers

  void validate() const {
    if (batch_size < 1) throw config_error("train.batch_size must be >= 1");
    if (!(adam.learning_rate >= 0)) throw config_error("train.learning_rate must be >= 0");
    if (!(adam.beta1 >= 0 && adam.beta1 < 1) || !(adam.beta2 >= 0 && adam.beta2 < 1))
      throw config_error("train.beta1 and train.beta2 must lie in [0, 1)");
    if (!(adam.epsilon > 0)) throw config_error("train.epsilon must be > 0");
    if (points == 0) throw config_error("data.points must be positive");
    augmentation.validate();
  }
};

struct TrainHistory {
  std::vector<double> train_loss;         // mean batch loss per epoch
  std::vector<double> val_instance_miou;  // NaN when there is no validation set
  std::vector<double> epoch_seconds;
};

/// Owns the optimizer and RNG state for one model; one training thread.
template <typename T>
class Trainer {
 public:
  Trainer(SegmentationNet<T>& model, TrainConfig config)
      : model_(model), config_(std::move(config)), rng_(config_.seed) {
    config_.validate();
    optimizer_.reset(model_.parameters().tensors());
  }

  /// One pass over `train`: seeded shuffle, batching (the last partial batch
  /// is kept), train-mode forward, loss, backward, Adam update.
  double run_epoch(const std::vector<PointCloud>& train) {
    if (train.empty()) throw usage_error("training set is empty");
    std::vector<std::size_t> order(train.size());
    std::iota(order.begin(), order.end(), std::size_t{0});
    std::shuffle(order.begin(), order.end(), rng_);
    const std::uint64_t epoch_seed = rng_();

    auto params = model_.parameters().tensors();
    const double lambda = model_.config().lambda_reg;
    double loss_sum = 0;
    std::size_t shapes = 0;
    for (std::size_t start = 0; start < order.size(); start += config_.batch_size) {
      const std::size_t end = std::min(order.size(), start + config_.batch_size);
      std::vector<PointCloud> batch;
      std::vector<int> labels;
      for (std::size_t b = start; b < end; ++b) {
        const std::size_t idx = order[b];
        const std::uint64_t shape_seed = derive_seed(epoch_seed, idx);
        PointCloud c = sample_points(train[idx], config_.points, shape_seed);
        if (config_.augment) {
          Rng aug_rng(mix_seed(shape_seed));
          c = augment(std::move(c), config_.augmentation, aug_rng);
        }
        labels.insert(labels.end(), c.labels.begin(), c.labels.end());
        batch.push_back(std::move(c));
      }
      const std::size_t groups = batch.size();
      auto fwd = model_.forward(to_tensor<T>(batch), groups, Mode::train);
      Tensor<T> loss = segmentation_loss(fwd, labels, groups, lambda);
      for (auto& p : params) p.zero_grad();
      backward(loss);
      adam_step(params, optimizer_, config_.adam);
      loss_sum += double(loss.item()) * double(groups);
      shapes += groups;
    }
    ++epoch_;
    return loss_sum / double(shapes);
  }

  /// Trains for config.epochs epochs. `train` and `val` are normalized
  /// first; validation runs in eval mode after every epoch when non-empty.
  TrainHistory fit(const std::vector<PointCloud>& train,
                   const std::vector<PointCloud>& val = {},
                   const std::function<void(std::size_t, const TrainHistory&)>& on_epoch = {}) {
    check_labels(train);
    check_labels(val);
    std::vector<PointCloud> train_n, val_n;
    for (const auto& c : train) train_n.push_back(normalize(c));
    for (const auto& c : val) val_n.push_back(normalize(c));

    TrainHistory history;
    for (std::size_t e = 0; e < config_.epochs; ++e) {
      const auto t0 = std::chrono::steady_clock::now();
      history.train_loss.push_back(run_epoch(train_n));
      history.epoch_seconds.push_back(
          std::chrono::duration<double>(std::chrono::steady_clock::now() - t0).count());
      if (val_n.empty()) {
        history.val_instance_miou.push_back(std::numeric_limits<double>::quiet_NaN());
      } else {
        EvalOptions opt{config_.points, config_.seed, 0.0, config_.threads};
        history.val_instance_miou.push_back(
            evaluate_clouds(model_, val_n, opt).instance_miou);
      }
      if (on_epoch) on_epoch(e, history);
    }
    return history;
  }

  void save(const std::filesystem::path& path) const {
    save_checkpoint(path, model_, optimizer_, epoch_, rng_);
  }

  void load(const std::filesystem::path& path) {
    epoch_ = load_checkpoint(path, model_, &optimizer_, &rng_).epoch;
  }

  std::uint64_t epoch() const { return epoch_; }
  const AdamState<T>& optimizer() const { return optimizer_; }
  const Rng& rng() const { return rng_; }

 private:
  void check_labels(const std::vector<PointCloud>& clouds) const {
    const std::size_t parts = model_.num_parts();
    for (const auto& c : clouds) {
      if (!c.labeled()) throw data_error("training shape " + c.id + " has no labels");
      for (std::size_t i = 0; i < c.labels.size(); ++i) {
        if (c.labels[i] < 0 || std::size_t(c.labels[i]) >= parts) {
          throw data_error("shape " + c.id + " point " + std::to_string(i) +
                           " has label " + std::to_string(c.labels[i]) +
                           " outside [0, " + std::to_string(parts) + ")");
        }
      }
    }
  }

  SegmentationNet<T>& model_;
  TrainConfig config_;
  Rng rng_;
  AdamState<T> optimizer_;
  std::uint64_t epoch_ = 0;
};

template <typename T>
struct TrainResult {
  std::unique_ptr<SegmentationNet<T>> model;
  TrainHistory history;
};

/// Builds a model from (config, train seed) and fits it to one category.
template <typename T>
TrainResult<T> train_category(const std::vector<PointCloud>& train,
                              const std::vector<PointCloud>& val,
                              const ModelConfig& model_config,
                              const TrainConfig& train_config) {
  if (train.empty()) throw usage_error("train_category: empty training list");
  TrainResult<T> result;
  result.model = build_model<T>(model_config, train_config.seed);
  Trainer<T> trainer(*result.model, train_config);
  result.history = trainer.fit(train, val);
  return result;
}

}  // namespace pignet
