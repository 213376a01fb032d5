#pragma once

#include <map>
#include <span>
#include <string>
#include <vector>

#include "pignet/errors.hpp"

namespace pignet {

/// Mean over parts 0..num_parts-1 of |pred=p ∧ gt=p| / |pred=p ∨ gt=p|.
/// A part absent from both prediction and ground truth scores 1.
inline double shape_miou(std::span<const int> pred, std::span<const int> gt,
                         std::size_t num_parts) {
  if (pred.size() != gt.size()) {
    throw data_error("prediction has " + std::to_string(pred.size()) +
                     " points, ground truth has " + std::to_string(gt.size()));
  }
  if (num_parts == 0) throw usage_error("shape_miou needs at least one part");
  std::vector<std::size_t> inter(num_parts, 0), uni(num_parts, 0);
  for (std::size_t i = 0; i < pred.size(); ++i) {
    const int p = pred[i], g = gt[i];
    if (p < 0 || g < 0 || std::size_t(p) >= num_parts ||
        std::size_t(g) >= num_parts) {
      throw data_error("label outside the category part set at point " +
                       std::to_string(i));
    }
    if (p == g) {
      ++inter[p];
      ++uni[p];
    } else {
      ++uni[p];
      ++uni[g];
    }
  }
  double total = 0;
  for (std::size_t k = 0; k < num_parts; ++k)
    total += uni[k] == 0 ? 1.0 : double(inter[k]) / double(uni[k]);
  return total / double(num_parts);
}

struct ShapeResult {
  std::string id;
  std::string category;
  double miou = 0;
  std::size_t correct = 0;
  std::size_t points = 0;
};

struct MiouSummary {
  double instance_miou = 0;
  double category_miou = 0;
};

/// Instance mIoU averages every shape; category mIoU averages the
/// per-category means with equal weight per category.
inline MiouSummary aggregate(const std::vector<ShapeResult>& shapes) {
  if (shapes.empty()) throw usage_error("aggregate needs at least one shape");
  std::map<std::string, std::pair<double, std::size_t>> per_category;
  double total = 0;
  for (const auto& s : shapes) {
    total += s.miou;
    auto& [sum, count] = per_category[s.category];
    sum += s.miou;
    ++count;
  }
  double cat = 0;
  for (const auto& [name, acc] : per_category) cat += acc.first / double(acc.second);
  return {total / double(shapes.size()), cat / double(per_category.size())};
}

}  // namespace pignet
