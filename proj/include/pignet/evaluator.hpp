#pragma once

#include <array>
#include <atomic>
#include <chrono>
#include <cstdlib>
#include <exception>
#include <mutex>
#include <span>
#include <algorithm>
#include <filesystem>
#include <fstream>
#include <iomanip>
#include <ostream>
#include <string>
#include <thread>
#include <vector>

#include "pignet/data.hpp"
#include "pignet/metrics.hpp"
#include "pignet/model.hpp"

namespace pignet {

/// Worker cap from PIGNET_THREADS (default 1).
inline std::size_t worker_threads() {
  if (const char* env = std::getenv("PIGNET_THREADS")) {
    char* end = nullptr;
    const long v = std::strtol(env, &end, 10);
    if (end != env && *end == '\0' && v > 0) return static_cast<std::size_t>(v);
  }
  return 1;
}

/// Runs body(i) for i in [0, count) on up to `threads` workers. Results must
/// be written by index so the outcome is independent of scheduling.
template <typename F>
void parallel_for(std::size_t count, std::size_t threads, F&& body) {
  threads = std::max<std::size_t>(1, std::min(threads, count));
  if (threads == 1) {
    for (std::size_t i = 0; i < count; ++i) body(i);
    return;
  }
  std::atomic<std::size_t> next{0};
  std::exception_ptr failure;
  std::mutex failure_mutex;
  std::vector<std::jthread> workers;
  for (std::size_t t = 0; t < threads; ++t) {
    workers.emplace_back([&] {
      for (std::size_t i = next++; i < count; i = next++) {
        try {
          body(i);
        } catch (...) {
          std::lock_guard lock(failure_mutex);
          if (!failure) failure = std::current_exception();
        }
      }
    });
  }
  workers.clear();
  if (failure) std::rethrow_exception(failure);
}

struct EvalOptions {
  std::size_t points = 1024;
  std::uint64_t seed = 0;
  double noise_sigma = 0.0;
  std::size_t threads = 1;
};

struct SegmentationReport {
  std::vector<ShapeResult> shapes;
  double instance_miou = 0;
  double category_miou = 0;
  double accuracy = 0;  // per-point, over all shapes
};

/// Normalize, resample to `points`, optionally add noise. Shape i draws from
/// seeds derived from (seed, i).
inline PointCloud prepare_for_eval(const PointCloud& cloud, std::size_t index,
                                   const EvalOptions& opt) {
  PointCloud c = sample_points(normalize(cloud), opt.points,
                               derive_seed(opt.seed, index));
  if (opt.noise_sigma > 0) {
    c = add_gaussian_noise(std::move(c), opt.noise_sigma,
                           derive_seed(mix_seed(opt.seed), index));
  }
  return c;
}

template <typename T>
SegmentationReport evaluate_clouds(SegmentationNet<T>& model,
                                   const std::vector<PointCloud>& clouds,
                                   const EvalOptions& opt = {}) {
  if (clouds.empty()) throw usage_error("evaluation set is empty");
  const std::size_t parts = model.num_parts();
  for (const auto& c : clouds) {
    if (!c.labeled()) throw data_error("shape " + c.id + " has no labels");
    for (int l : c.labels) {
      if (l < 0 || std::size_t(l) >= parts) {
        throw config_error("shape " + c.id + " of category '" + c.category +
                           "' has label " + std::to_string(l) +
                           " but the model predicts " + std::to_string(parts) +
                           " parts");
      }
    }
  }
  std::vector<ShapeResult> results(clouds.size());
  parallel_for(clouds.size(), opt.threads, [&](std::size_t i) {
    const PointCloud c = prepare_for_eval(clouds[i], i, opt);
    const auto pred = predict(model, to_tensor<T>(c));
    ShapeResult r;
    r.id = c.id;
    r.category = c.category;
    r.points = c.size();
    r.miou = shape_miou(pred, c.labels, parts);
    for (std::size_t j = 0; j < pred.size(); ++j) r.correct += pred[j] == c.labels[j];
    results[i] = std::move(r);
  });
  SegmentationReport report;
  report.shapes = std::move(results);
  const auto summary = aggregate(report.shapes);
  report.instance_miou = summary.instance_miou;
  report.category_miou = summary.category_miou;
  std::size_t correct = 0, total = 0;
  for (const auto& s : report.shapes) {
    correct += s.correct;
    total += s.points;
  }
  report.accuracy = double(correct) / double(total);
  return report;
}

template <typename T>
SegmentationReport evaluate_split(SegmentationNet<T>& model,
                                  const DatasetSplit& split,
                                  const std::string& which,
                                  const EvalOptions& opt = {}) {
  if (split.num_parts && split.num_parts != model.num_parts()) {
    throw config_error("category '" + split.category + "' has " +
                       std::to_string(split.num_parts) +
                       " parts but the model predicts " +
                       std::to_string(model.num_parts()));
  }
  return evaluate_clouds(model, load_records(split.get(which)), opt);
}

// ---------------------------------------------------------------------------
// Robustness grid

inline constexpr std::array<std::size_t, 4> kDensityLevels{128, 256, 512, 1024};
inline constexpr std::array<double, 5> kNoiseLevels{0.0, 0.01, 0.02, 0.03, 0.04};

struct RobustnessGrid {
  std::string model_name;
  std::vector<std::size_t> densities;
  std::vector<double> sigmas;
  std::vector<std::vector<double>> instance_miou;  // [density][sigma]
};

template <typename T>
RobustnessGrid robustness_grid(SegmentationNet<T>& model, std::string name,
                               const std::vector<PointCloud>& clouds,
                               std::uint64_t seed, std::size_t threads = 1) {
  RobustnessGrid grid;
  grid.model_name = std::move(name);
  grid.densities.assign(kDensityLevels.begin(), kDensityLevels.end());
  grid.sigmas.assign(kNoiseLevels.begin(), kNoiseLevels.end());
  for (auto m : grid.densities) {
    auto& row = grid.instance_miou.emplace_back();
    for (auto s : grid.sigmas) {
      row.push_back(evaluate_clouds(model, clouds, {m, seed, s, threads}).instance_miou);
    }
  }
  return grid;
}

/// Evaluates the model and the comparator on every corrupted copy.
template <typename T>
std::vector<RobustnessGrid> robustness_run(SegmentationNet<T>& model,
                                           SegmentationNet<T>& baseline,
                                           const std::vector<PointCloud>& clouds,
                                           std::uint64_t seed,
                                           std::size_t threads = 1) {
  return {robustness_grid(model, "PIG-Net", clouds, seed, threads),
          robustness_grid(baseline, "PointNet", clouds, seed, threads)};
}

// ---------------------------------------------------------------------------
// Output formats

inline void write_report_tsv(std::ostream& os, const SegmentationReport& r) {
  os << "id\tcategory\tmiou\tcorrect\tpoints\n";
  os << std::setprecision(6) << std::fixed;
  for (const auto& s : r.shapes)
    os << s.id << '\t' << s.category << '\t' << s.miou << '\t' << s.correct
       << '\t' << s.points << '\n';
}

inline void write_report_summary(std::ostream& os, const SegmentationReport& r) {
  os << std::setprecision(6) << std::fixed;
  os << "shapes: " << r.shapes.size() << '\n'
     << "instance_miou: " << r.instance_miou << '\n'
     << "category_miou: " << r.category_miou << '\n'
     << "point_accuracy: " << r.accuracy << '\n';
}

inline void write_robustness_tsv(std::ostream& os,
                                 const std::vector<RobustnessGrid>& grids) {
  os << "model\tdensity\tsigma\tinstance_miou\n";
  os << std::setprecision(6) << std::fixed;
  for (const auto& g : grids)
    for (std::size_t i = 0; i < g.densities.size(); ++i)
      for (std::size_t j = 0; j < g.sigmas.size(); ++j)
        os << g.model_name << '\t' << g.densities[i] << '\t'
           << std::setprecision(2) << g.sigmas[j] << std::setprecision(6) << '\t'
           << g.instance_miou[i][j] << '\n';
}

/// Fixed 8-color palette, indexed by part id modulo 8.
inline constexpr std::array<std::array<int, 3>, 8> kPartPalette{{
    {230, 25, 75}, {60, 180, 75}, {0, 130, 200}, {255, 225, 25},
    {245, 130, 48}, {145, 30, 180}, {70, 240, 240}, {128, 128, 128},
}};

/// ASCII PLY with per-vertex position and part color.
inline void write_ply(std::ostream& os, const PointCloud& cloud,
                      std::span<const int> parts) {
  if (parts.size() != cloud.size()) {
    throw data_error("write_ply: " + std::to_string(parts.size()) +
                     " part ids for " + std::to_string(cloud.size()) + " points");
  }
  os << "ply\nformat ascii 1.0\n"
     << "element vertex " << cloud.size() << '\n'
     << "property float x\nproperty float y\nproperty float z\n"
     << "property uchar red\nproperty uchar green\nproperty uchar blue\n"
     << "end_header\n";
  os << std::setprecision(6) << std::fixed;
  for (std::size_t i = 0; i < cloud.size(); ++i) {
    const auto& c = kPartPalette[static_cast<std::size_t>(parts[i]) % kPartPalette.size()];
    os << cloud.points[i][0] << ' ' << cloud.points[i][1] << ' '
       << cloud.points[i][2] << ' ' << c[0] << ' ' << c[1] << ' ' << c[2] << '\n';
  }
}

}  // namespace pignet
