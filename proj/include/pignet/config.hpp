#pragma once

#include <cstdint>
#include <sstream>
#include <string>
#include <string_view>
#include <vector>

#include "pignet/errors.hpp"
#include "pignet/inception.hpp"
#include "pignet/layers.hpp"

namespace pignet {

enum class Architecture { pignet, pointnet };

inline std::string to_string(Architecture a) {
  return a == Architecture::pignet ? "pignet" : "pointnet";
}

/// Full architectural description. A network is a deterministic function of
/// (ModelConfig, seed).
struct ModelConfig {
  Architecture architecture = Architecture::pignet;
  std::vector<std::size_t> inception_plan{64, 128, 256, 512};
  bool use_inception = true;  // off: one conv of width 3e per stage
  bool use_gap = true;        // off: max over points
  bool feature_transform = true;
  std::size_t feature_reduction = 0;  // optional conv before the feature T-Net; 0 = off
  std::vector<std::size_t> head_widths{512, 256, 128};
  std::size_t num_parts = 4;
  double lambda_reg = 0.001;
  TNetWidths tnet;
  // PointNet comparator: per-point convs, local features taken after the
  // first `baseline_local_depth` of them (where its feature T-Net sits).
  std::vector<std::size_t> baseline_convs{64, 64, 64, 128, 1024};
  std::size_t baseline_local_depth = 2;

  void validate() const {
    if (num_parts < 2) {
      throw config_error("model.num_parts must be >= 2, got " +
                         std::to_string(num_parts));
    }
    if (!(lambda_reg >= 0.0)) {
      throw config_error("model.lambda_reg must be >= 0");
    }
    if (architecture == Architecture::pignet) {
      if (inception_plan.empty()) {
        throw config_error("model.inception_plan must not be empty");
      }
      for (auto e : inception_plan) {
        if (e == 0 || e % 2 != 0) {
          throw config_error("model.inception_plan entries must be even and positive, got " +
                             std::to_string(e));
        }
      }
    } else {
      if (baseline_local_depth == 0 ||
          baseline_local_depth >= baseline_convs.size()) {
        throw config_error(
            "model.baseline_local_depth must lie in [1, len(baseline_convs))");
      }
    }
    for (auto w : head_widths)
      if (w == 0) throw config_error("model.head_widths entries must be positive");
    for (auto w : tnet.conv)
      if (w == 0) throw config_error("model.tnet_conv entries must be positive");
    for (auto w : tnet.fc)
      if (w == 0) throw config_error("model.tnet_fc entries must be positive");
    if (tnet.conv.empty()) throw config_error("model.tnet_conv must not be empty");
  }

  /// Width of the per-point local features entering the global pooling.
  std::size_t local_width() const {
    if (architecture == Architecture::pointnet) {
      return baseline_convs.back();
    }
    std::size_t k = 0;
    for (auto e : inception_plan) k = inception_width(e);
    return feature_reduction ? feature_reduction : k;
  }
};

inline std::string join(const std::vector<std::size_t>& v) {
  std::string s;
  for (std::size_t i = 0; i < v.size(); ++i) {
    if (i) s += ',';
    s += std::to_string(v[i]);
  }
  return s;
}

/// Canonical text of the fields that determine parameter shapes.
inline std::string architecture_signature(const ModelConfig& c) {
  std::ostringstream os;
  os << "architecture=" << to_string(c.architecture) << '\n'
     << "num_parts=" << c.num_parts << '\n'
     << "head_widths=" << join(c.head_widths) << '\n'
     << "tnet_conv=" << join(c.tnet.conv) << '\n'
     << "tnet_fc=" << join(c.tnet.fc) << '\n'
     << "feature_transform=" << c.feature_transform << '\n';
  if (c.architecture == Architecture::pignet) {
    os << "inception_plan=" << join(c.inception_plan) << '\n'
       << "use_inception=" << c.use_inception << '\n'
       << "use_gap=" << c.use_gap << '\n'
       << "feature_reduction=" << c.feature_reduction << '\n';
  } else {
    os << "baseline_convs=" << join(c.baseline_convs) << '\n'
       << "baseline_local_depth=" << c.baseline_local_depth << '\n';
  }
  return os.str();
}

/// FNV-1a, 64 bit.
inline std::uint64_t fnv1a(std::string_view bytes,
                           std::uint64_t h = 0xcbf29ce484222325ULL) {
  for (unsigned char ch : bytes) {
    h ^= ch;
    h *= 0x100000001b3ULL;
  }
  return h;
}

inline std::uint64_t config_hash(const ModelConfig& c) {
  return fnv1a(architecture_signature(c));
}

/// Small widths for desk-scale runs: every structural element of the full
/// network is present but T-Net and head widths are cut down.
inline ModelConfig compact_config(std::vector<std::size_t> plan,
                                  std::size_t num_parts) {
  ModelConfig c;
  c.inception_plan = std::move(plan);
  c.num_parts = num_parts;
  c.head_widths = {64, 32};
  c.tnet.conv = {16, 32, 64};
  c.tnet.fc = {32, 16};
  c.baseline_convs = {16, 16, 16, 32, 64};
  return c;
}

/// Widths used by gradient-check and closed-form parameter-count tests.
inline ModelConfig tiny_config(std::vector<std::size_t> plan = {8, 16},
                               std::size_t num_parts = 3) {
  ModelConfig c;
  c.inception_plan = std::move(plan);
  c.num_parts = num_parts;
  c.head_widths = {8};
  c.tnet.conv = {4, 8};
  c.tnet.fc = {4};
  c.baseline_convs = {4, 4, 8};
  c.baseline_local_depth = 1;
  return c;
}

inline ModelConfig pointnet_config(std::size_t num_parts) {
  ModelConfig c;
  c.architecture = Architecture::pointnet;
  c.num_parts = num_parts;
  return c;
}

struct Variant {
  std::string name;
  ModelConfig config;
};

/// The alternative-architecture grid: Inc3L/Inc4L/Inc5L with GAP, the plain
/// conv stack, and Inc4L with max pooling. Filter plans are divided by
/// `width_divisor` for desk-scale runs (1 gives the full plans).
inline std::vector<Variant> ablation_variants(const ModelConfig& base,
                                              std::size_t width_divisor = 1) {
  if (width_divisor == 0) throw usage_error("width_divisor must be positive");
  auto plan = [&](std::initializer_list<std::size_t> full) {
    std::vector<std::size_t> p;
    for (auto e : full) p.push_back(e / width_divisor);
    return p;
  };
  std::vector<Variant> out;
  auto add = [&](std::string name, std::vector<std::size_t> p, bool inception,
                 bool gap) {
    ModelConfig c = base;
    c.architecture = Architecture::pignet;
    c.inception_plan = std::move(p);
    c.use_inception = inception;
    c.use_gap = gap;
    out.push_back({std::move(name), c});
  };
  add("PIGNet-Inc3L-GAP", plan({64, 128, 256}), true, true);
  add("PIGNet-Inc4L-GAP", plan({64, 128, 256, 512}), true, true);
  add("PIGNet-Inc5L-GAP", plan({64, 128, 256, 512, 1024}), true, true);
  add("PIGNet-No-Inc4L-GAP", plan({64, 128, 256, 512}), false, true);
  add("PIGNet-Inc4L-max-pooling", plan({64, 128, 256, 512}), true, false);
  for (auto& v : out) v.config.validate();
  return out;
}

}  // namespace pignet
