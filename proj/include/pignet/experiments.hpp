#pragma once

#include <chrono>
#include <iomanip>
#include <ostream>
#include <string>
#include <vector>

#include "pignet/config.hpp"
#include "pignet/evaluator.hpp"
#include "pignet/model.hpp"
#include "pignet/trainer.hpp"

namespace pignet {

struct AblationRow {
  std::string name;
  ModelConfig config;
  double instance_miou = 0;
  double category_miou = 0;
  double accuracy = 0;
  std::size_t parameters = 0;
  std::uint64_t initial_hash = 0;
  std::uint64_t trained_hash = 0;
  double train_seconds = 0;
};

/// Trains every variant with the same train config (hence the same seed) and
/// evaluates it on `eval`.
template <typename T>
std::vector<AblationRow> ablation_run(const std::vector<PointCloud>& train,
                                      const std::vector<PointCloud>& eval,
                                      const std::vector<Variant>& variants,
                                      const TrainConfig& train_config,
                                      std::size_t eval_points) {
  std::vector<AblationRow> rows;
  for (const auto& v : variants) {
    AblationRow row;
    row.name = v.name;
    row.config = v.config;
    auto model = build_model<T>(v.config, train_config.seed);
    row.initial_hash = parameter_hash(*model);
    row.parameters = count_parameters(*model);
    const auto t0 = std::chrono::steady_clock::now();
    Trainer<T> trainer(*model, train_config);
    trainer.fit(train);
    row.train_seconds =
        std::chrono::duration<double>(std::chrono::steady_clock::now() - t0).count();
    row.trained_hash = parameter_hash(*model);
    auto report = evaluate_clouds(
        *model, eval, {eval_points, train_config.seed, 0.0, train_config.threads});
    row.instance_miou = report.instance_miou;
    row.category_miou = report.category_miou;
    row.accuracy = report.accuracy;
    rows.push_back(std::move(row));
  }
  return rows;
}

inline void write_ablation_tsv(std::ostream& os, const std::vector<AblationRow>& rows) {
  os << "variant\tinception_plan\tuse_inception\tuse_gap\tcat_miou\tins_miou\t"
        "accuracy\tparams\ttrain_seconds\n";
  for (const auto& r : rows) {
    os << r.name << '\t' << join(r.config.inception_plan) << '\t'
       << r.config.use_inception << '\t' << r.config.use_gap << '\t'
       << std::fixed << std::setprecision(6) << r.category_miou << '\t'
       << r.instance_miou << '\t' << r.accuracy << '\t' << r.parameters << '\t'
       << std::setprecision(3) << r.train_seconds << '\n';
  }
}

struct ComplexityReport {
  std::size_t parameters = 0;
  double train_seconds_per_epoch = 0;
  double inference_seconds_per_shape = 0;
};

/// Parameter count plus wall-clock timings on this machine: one training
/// epoch over `train` on a fresh copy of the architecture, and eval-mode
/// inference averaged over `train`.
template <typename T>
ComplexityReport complexity_report(const ModelConfig& config,
                                   const std::vector<PointCloud>& train,
                                   const TrainConfig& train_config) {
  using clock = std::chrono::steady_clock;
  ComplexityReport r;
  auto model = build_model<T>(config, train_config.seed);
  r.parameters = count_parameters(*model);
  TrainConfig one = train_config;
  one.epochs = 1;
  Trainer<T> trainer(*model, one);
  r.train_seconds_per_epoch = trainer.fit(train).epoch_seconds.front();

  const auto t0 = clock::now();
  for (std::size_t i = 0; i < train.size(); ++i) {
    auto c = prepare_for_eval(train[i], i, {train_config.points, train_config.seed});
    predict(*model, to_tensor<T>(c));
  }
  r.inference_seconds_per_shape =
      std::chrono::duration<double>(clock::now() - t0).count() / double(train.size());
  return r;
}

}  // namespace pignet
