#pragma once

#include <algorithm>
#include <array>
#include <cmath>
#include <cstdint>
#include <filesystem>
#include <fstream>
#include <iomanip>
#include <numbers>
#include <numeric>
#include <random>
#include <set>
#include <sstream>
#include <string>
#include <vector>

#include "pignet/errors.hpp"
#include "pignet/rng.hpp"
#include "pignet/tensor.hpp"

namespace pignet {

using Point3 = std::array<double, 3>;

struct PointCloud {
  std::vector<Point3> points;
  std::vector<int> labels;  // empty when unlabeled
  std::string category;
  std::string id;

  std::size_t size() const { return points.size(); }
  bool labeled() const { return !labels.empty(); }
};

/// splitmix64 finalizer; used to derive independent per-shape seeds so that
/// results do not depend on scheduling.
inline std::uint64_t mix_seed(std::uint64_t x) {
  x += 0x9e3779b97f4a7c15ULL;
  x = (x ^ (x >> 30)) * 0xbf58476d1ce4e5b9ULL;
  x = (x ^ (x >> 27)) * 0x94d049bb133111ebULL;
  return x ^ (x >> 31);
}

inline std::uint64_t derive_seed(std::uint64_t seed, std::uint64_t index) {
  return mix_seed(seed ^ mix_seed(index));
}

// ---------------------------------------------------------------------------
// Text formats: points file holds one "x y z" per line, labels file one
// integer per line.

inline PointCloud parse_cloud(std::istream& points_in, std::istream* labels_in,
                              const std::string& points_name = "<points>",
                              const std::string& labels_name = "<labels>") {
  PointCloud cloud;
  std::string line;
  std::size_t line_no = 0;
  while (std::getline(points_in, line)) {
    ++line_no;
    if (line.find_first_not_of(" \t\r") == std::string::npos) continue;
    std::istringstream ls(line);
    Point3 p{};
    std::string extra;
    if (!(ls >> p[0] >> p[1] >> p[2]) || (ls >> extra)) {
      throw parse_error(points_name + ":" + std::to_string(line_no) +
                        ": expected three reals, got '" + line + "'");
    }
    cloud.points.push_back(p);
  }
  if (labels_in) {
    line_no = 0;
    while (std::getline(*labels_in, line)) {
      ++line_no;
      if (line.find_first_not_of(" \t\r") == std::string::npos) continue;
      std::istringstream ls(line);
      int label = 0;
      std::string extra;
      if (!(ls >> label) || (ls >> extra)) {
        throw parse_error(labels_name + ":" + std::to_string(line_no) +
                          ": expected an integer label, got '" + line + "'");
      }
      cloud.labels.push_back(label);
    }
    if (cloud.labels.size() != cloud.points.size()) {
      throw data_error("label count " + std::to_string(cloud.labels.size()) +
                       " in " + labels_name + " does not match point count " +
                       std::to_string(cloud.points.size()) + " in " +
                       points_name);
    }
  }
  return cloud;
}

inline PointCloud load_cloud(const std::filesystem::path& points_path,
                             const std::filesystem::path& labels_path = {}) {
  std::ifstream pin(points_path);
  if (!pin) throw data_error("cannot open points file " + points_path.string());
  std::ifstream lin;
  if (!labels_path.empty()) {
    lin.open(labels_path);
    if (!lin) throw data_error("cannot open labels file " + labels_path.string());
  }
  auto cloud = parse_cloud(pin, labels_path.empty() ? nullptr : &lin,
                           points_path.string(), labels_path.string());
  cloud.id = points_path.stem().string();
  return cloud;
}

inline void write_cloud(const PointCloud& cloud,
                        const std::filesystem::path& points_path,
                        const std::filesystem::path& labels_path = {}) {
  std::ofstream pout(points_path);
  if (!pout) throw data_error("cannot write " + points_path.string());
  pout << std::fixed << std::setprecision(6);
  for (const auto& p : cloud.points)
    pout << p[0] << ' ' << p[1] << ' ' << p[2] << '\n';
  if (!labels_path.empty()) {
    std::ofstream lout(labels_path);
    if (!lout) throw data_error("cannot write " + labels_path.string());
    for (int l : cloud.labels) lout << l << '\n';
  }
}

// ---------------------------------------------------------------------------
// Geometry

/// Centers on the centroid and scales uniformly so the farthest point has
/// unit norm.
inline PointCloud normalize(PointCloud cloud) {
  if (cloud.points.empty()) throw degenerate_error("cannot normalize an empty cloud");
  Point3 c{0, 0, 0};
  for (const auto& p : cloud.points)
    for (int a = 0; a < 3; ++a) c[a] += p[a];
  for (int a = 0; a < 3; ++a) c[a] /= double(cloud.points.size());
  double radius = 0;
  for (auto& p : cloud.points) {
    for (int a = 0; a < 3; ++a) p[a] -= c[a];
    radius = std::max(radius, std::sqrt(p[0] * p[0] + p[1] * p[1] + p[2] * p[2]));
  }
  if (!(radius > 0)) {
    throw degenerate_error("cannot normalize a cloud whose points all coincide");
  }
  for (auto& p : cloud.points)
    for (int a = 0; a < 3; ++a) p[a] /= radius;
  return cloud;
}

/// m points drawn uniformly: without replacement when the cloud has at least
/// m points, with replacement otherwise. Labels follow their points.
inline PointCloud sample_points(const PointCloud& cloud, std::size_t m,
                                std::uint64_t seed) {
  if (m == 0) throw usage_error("sample_points: target count must be positive");
  if (cloud.points.empty()) throw data_error("sample_points: empty cloud");
  Rng rng(seed);
  const std::size_t n = cloud.size();
  std::vector<std::size_t> idx;
  if (n >= m) {
    idx.resize(n);
    std::iota(idx.begin(), idx.end(), std::size_t{0});
    // Partial Fisher-Yates: the first m slots are a uniform draw.
    for (std::size_t i = 0; i < m; ++i) {
      std::uniform_int_distribution<std::size_t> pick(i, n - 1);
      std::swap(idx[i], idx[pick(rng)]);
    }
    idx.resize(m);
  } else {
    std::uniform_int_distribution<std::size_t> pick(0, n - 1);
    idx.resize(m);
    for (auto& i : idx) i = pick(rng);
  }
  PointCloud out;
  out.category = cloud.category;
  out.id = cloud.id;
  out.points.reserve(m);
  for (auto i : idx) out.points.push_back(cloud.points[i]);
  if (cloud.labeled()) {
    out.labels.reserve(m);
    for (auto i : idx) out.labels.push_back(cloud.labels[i]);
  }
  return out;
}

struct AugmentConfig {
  bool rotate_up_axis = true;
  int up_axis = 1;  // y-up
  double scale_low = 0.66;
  double scale_high = 1.5;
  double translate_low = -0.2;
  double translate_high = 0.2;
  double jitter_sigma = 0.01;

  void validate() const {
    if (!(scale_low > 0) || scale_low > scale_high)
      throw config_error("augment scale range must satisfy 0 < low <= high");
    if (translate_low > translate_high)
      throw config_error("augment translate range must satisfy low <= high");
    if (!(jitter_sigma >= 0)) throw config_error("augment.jitter_sigma must be >= 0");
    if (up_axis < 0 || up_axis > 2) throw config_error("augment.up_axis must be 0, 1 or 2");
  }

  /// No-op settings.
  static AugmentConfig identity() {
    AugmentConfig c;
    c.rotate_up_axis = false;
    c.scale_low = c.scale_high = 1.0;
    c.translate_low = c.translate_high = 0.0;
    c.jitter_sigma = 0.0;
    return c;
  }
};

namespace detail {
inline double uniform(Rng& rng, double lo, double hi) {
  if (lo == hi) return lo;
  return std::uniform_real_distribution<double>(lo, hi)(rng);
}
}  // namespace detail

/// Rotation by `angle` about the given axis (right-handed).
inline Point3 rotate_about(const Point3& p, int axis, double angle) {
  const int a = (axis + 1) % 3, b = (axis + 2) % 3;
  const double c = std::cos(angle), s = std::sin(angle);
  Point3 q = p;
  q[a] = c * p[a] - s * p[b];
  q[b] = s * p[a] + c * p[b];
  return q;
}

/// Random rotation about the up axis, per-axis scaling, per-axis translation,
/// then per-coordinate Gaussian jitter, in that order. Labels are untouched.
inline PointCloud augment(PointCloud cloud, const AugmentConfig& cfg, Rng& rng) {
  const double angle =
      cfg.rotate_up_axis ? detail::uniform(rng, 0.0, 2 * std::numbers::pi) : 0.0;
  Point3 scale, shift;
  for (int a = 0; a < 3; ++a) scale[a] = detail::uniform(rng, cfg.scale_low, cfg.scale_high);
  for (int a = 0; a < 3; ++a)
    shift[a] = detail::uniform(rng, cfg.translate_low, cfg.translate_high);
  std::normal_distribution<double> noise(0.0, cfg.jitter_sigma);
  for (auto& p : cloud.points) {
    if (cfg.rotate_up_axis) p = rotate_about(p, cfg.up_axis, angle);
    for (int a = 0; a < 3; ++a) p[a] = p[a] * scale[a] + shift[a];
    if (cfg.jitter_sigma > 0)
      for (int a = 0; a < 3; ++a) p[a] += noise(rng);
  }
  return cloud;
}

inline PointCloud subsample_density(const PointCloud& cloud, std::size_t m,
                                    std::uint64_t seed) {
  return sample_points(cloud, m, seed);
}

inline PointCloud add_gaussian_noise(PointCloud cloud, double sigma,
                                     std::uint64_t seed) {
  if (!(sigma >= 0)) throw usage_error("noise sigma must be >= 0");
  if (sigma == 0) return cloud;
  Rng rng(seed);
  std::normal_distribution<double> noise(0.0, sigma);
  for (auto& p : cloud.points)
    for (auto& v : p) v += noise(rng);
  return cloud;
}

/// Stacks clouds of equal size into a (groups·n)×3 tensor.
template <typename T>
Tensor<T> to_tensor(const std::vector<PointCloud>& clouds) {
  if (clouds.empty()) throw usage_error("to_tensor of zero clouds");
  const std::size_t n = clouds.front().size();
  std::vector<T> values;
  values.reserve(clouds.size() * n * 3);
  for (const auto& c : clouds) {
    if (c.size() != n) {
      throw dimension_error("clouds in a batch must share a point count (" +
                            std::to_string(n) + " vs " +
                            std::to_string(c.size()) + ")");
    }
    for (const auto& p : c.points)
      for (double v : p) values.push_back(static_cast<T>(v));
  }
  return Tensor<T>::from({clouds.size() * n, 3}, std::move(values));
}

template <typename T>
Tensor<T> to_tensor(const PointCloud& cloud) {
  return to_tensor<T>(std::vector<PointCloud>{cloud});
}

// ---------------------------------------------------------------------------
// Synthetic labeled shapes

struct SyntheticShape {
  std::string name;
  std::size_t parts;
  std::vector<std::string> part_names;
};

inline const std::vector<SyntheticShape>& synthetic_shapes() {
  static const std::vector<SyntheticShape> shapes{
      {"lamp", 3, {"base", "pole", "shade"}},
      {"table", 2, {"top", "legs"}},
      {"chair", 3, {"seat", "back", "legs"}},
  };
  return shapes;
}

inline const SyntheticShape& synthetic_shape(const std::string& name) {
  for (const auto& s : synthetic_shapes())
    if (s.name == name) return s;
  throw usage_error("unknown synthetic shape '" + name +
                    "' (known: lamp, table, chair)");
}

/// Dimensions of the lamp pole, exposed so tests can check containment.
struct LampGeometry {
  double base_radius, base_height;
  double pole_radius, pole_height;
  double shade_bottom_radius, shade_top_radius, shade_height;
};

namespace detail {

struct SurfaceSampler {
  Rng& rng;
  PointCloud& cloud;

  double u(double lo, double hi) { return uniform(rng, lo, hi); }

  void disc(double radius, double y, int label) {
    double r = radius * std::sqrt(u(0, 1)), t = u(0, 2 * std::numbers::pi);
    cloud.points.push_back({r * std::cos(t), y, r * std::sin(t)});
    cloud.labels.push_back(label);
  }
  // Lateral surface of a frustum between heights y0 and y1.
  void frustum(double r0, double r1, double y0, double y1, int label) {
    double s = u(0, 1), t = u(0, 2 * std::numbers::pi);
    double r = r0 + (r1 - r0) * s;
    cloud.points.push_back({r * std::cos(t), y0 + (y1 - y0) * s, r * std::sin(t)});
    cloud.labels.push_back(label);
  }
  void box(const Point3& lo, const Point3& hi, int label) {
    const double dx = hi[0] - lo[0], dy = hi[1] - lo[1], dz = hi[2] - lo[2];
    const double areas[3] = {dy * dz, dx * dz, dx * dy};
    const double total = areas[0] + areas[1] + areas[2];
    double pick = u(0, total);
    int axis = pick < areas[0] ? 0 : (pick < areas[0] + areas[1] ? 1 : 2);
    Point3 p{u(lo[0], hi[0]), u(lo[1], hi[1]), u(lo[2], hi[2])};
    p[axis] = u(0, 1) < 0.5 ? lo[axis] : hi[axis];
    cloud.points.push_back(p);
    cloud.labels.push_back(label);
  }
};

inline double box_area(const Point3& lo, const Point3& hi) {
  const double dx = hi[0] - lo[0], dy = hi[1] - lo[1], dz = hi[2] - lo[2];
  return 2 * (dx * dy + dy * dz + dx * dz);
}

// Splits `n` points over surfaces in proportion to weight, each surface
// getting at least one point.
inline std::vector<std::size_t> allocate(std::size_t n,
                                         const std::vector<double>& weights) {
  double total = 0;
  for (double w : weights) total += w;
  std::vector<std::size_t> counts(weights.size(), 1);
  std::size_t used = weights.size();
  for (std::size_t i = 0; i + 1 < weights.size(); ++i) {
    auto extra = static_cast<std::size_t>(
        std::floor(double(n - weights.size()) * weights[i] / total));
    counts[i] += extra;
    used += extra;
  }
  counts.back() += n - used;
  return counts;
}

}  // namespace detail

inline LampGeometry lamp_geometry(Rng& rng) {
  auto u = [&](double lo, double hi) { return detail::uniform(rng, lo, hi); };
  LampGeometry g;
  g.base_radius = u(0.35, 0.5);
  g.base_height = u(0.03, 0.06);
  g.pole_radius = u(0.03, 0.05);
  g.pole_height = u(0.8, 1.2);
  g.shade_bottom_radius = u(0.35, 0.5);
  g.shade_top_radius = u(0.1, 0.2);
  g.shade_height = u(0.3, 0.45);
  return g;
}

/// Procedurally generated shapes whose part label is the generating surface.
///
///   lamp:  base disc (0), pole cylinder (1), shade cone (2)
///   table: top slab (0), four legs (1)
///   chair: seat slab (0), back slab (1), four legs (2)
inline std::vector<PointCloud> synth_generate(const std::string& shape,
                                              std::size_t count,
                                              std::uint64_t seed,
                                              std::size_t points = 1024) {
  const auto& info = synthetic_shape(shape);
  if (points < info.parts) {
    throw usage_error("synth_generate needs at least one point per part");
  }
  std::vector<PointCloud> out;
  for (std::size_t s = 0; s < count; ++s) {
    Rng rng(derive_seed(seed, s));
    PointCloud cloud;
    cloud.category = shape;
    std::ostringstream id;
    id << shape << '_' << std::setw(4) << std::setfill('0') << s;
    cloud.id = id.str();
    detail::SurfaceSampler sampler{rng, cloud};
    auto u = [&](double lo, double hi) { return detail::uniform(rng, lo, hi); };

    if (shape == "lamp") {
      const auto g = lamp_geometry(rng);
      const double pi = std::numbers::pi;
      const double top = g.base_height + g.pole_height;
      const double slant = std::hypot(g.shade_bottom_radius - g.shade_top_radius,
                                      g.shade_height);
      auto counts = detail::allocate(
          points, {pi * g.base_radius * g.base_radius,
                   2 * pi * g.pole_radius * g.pole_height,
                   pi * (g.shade_bottom_radius + g.shade_top_radius) * slant});
      for (std::size_t i = 0; i < counts[0]; ++i) sampler.disc(g.base_radius, g.base_height, 0);
      for (std::size_t i = 0; i < counts[1]; ++i)
        sampler.frustum(g.pole_radius, g.pole_radius, g.base_height, top, 1);
      for (std::size_t i = 0; i < counts[2]; ++i)
        sampler.frustum(g.shade_bottom_radius, g.shade_top_radius,
                        top - 0.5 * g.shade_height, top + 0.5 * g.shade_height, 2);
    } else if (shape == "table" || shape == "chair") {
      const bool chair = shape == "chair";
      const double half_w = chair ? u(0.35, 0.45) : u(0.6, 0.9);
      const double half_d = chair ? u(0.35, 0.45) : u(0.4, 0.6);
      const double leg_h = chair ? u(0.4, 0.5) : u(0.6, 0.8);
      const double slab = u(0.04, 0.07);
      const double leg = u(0.04, 0.07);
      const Point3 top_lo{-half_w, leg_h, -half_d};
      const Point3 top_hi{half_w, leg_h + slab, half_d};
      std::vector<std::pair<Point3, Point3>> legs;
      for (double sx : {-1.0, 1.0})
        for (double sz : {-1.0, 1.0}) {
          const double x = sx * (half_w - leg), z = sz * (half_d - leg);
          legs.push_back({{x - leg, 0.0, z - leg}, {x + leg, leg_h, z + leg}});
        }
      double leg_area = 0;
      for (const auto& [lo, hi] : legs) leg_area += detail::box_area(lo, hi);
      std::vector<double> weights{detail::box_area(top_lo, top_hi)};
      Point3 back_lo{}, back_hi{};
      if (chair) {
        const double back_h = u(0.4, 0.6);
        back_lo = {-half_w, leg_h + slab, half_d - slab};
        back_hi = {half_w, leg_h + slab + back_h, half_d};
        weights.push_back(detail::box_area(back_lo, back_hi));
      }
      weights.push_back(leg_area);
      auto counts = detail::allocate(points, weights);
      for (std::size_t i = 0; i < counts[0]; ++i) sampler.box(top_lo, top_hi, 0);
      if (chair)
        for (std::size_t i = 0; i < counts[1]; ++i) sampler.box(back_lo, back_hi, 1);
      const int leg_label = chair ? 2 : 1;
      std::vector<double> leg_weights;
      for (const auto& [lo, hi] : legs) leg_weights.push_back(detail::box_area(lo, hi));
      auto per_leg = detail::allocate(counts.back(), leg_weights);
      for (std::size_t l = 0; l < legs.size(); ++l)
        for (std::size_t i = 0; i < per_leg[l]; ++i)
          sampler.box(legs[l].first, legs[l].second, leg_label);
    }
    out.push_back(std::move(cloud));
  }
  return out;
}

// ---------------------------------------------------------------------------
// Dataset layout:
//   <root>/<category>/points/<id>.pts
//   <root>/<category>/points_label/<id>.seg
//   <root>/<category>/{train,val,test}.txt   (ids, one per line)
//   <root>/<category>/parts.txt              (optional part count)

struct ShapeRecord {
  std::filesystem::path points_file;
  std::filesystem::path labels_file;
  std::string category;
  std::string id;
};

struct DatasetSplit {
  std::string category;
  std::size_t num_parts = 0;  // 0 when unknown
  std::vector<ShapeRecord> train, val, test;

  const std::vector<ShapeRecord>& get(const std::string& name) const {
    if (name == "train") return train;
    if (name == "val") return val;
    if (name == "test") return test;
    throw usage_error("unknown split '" + name + "' (train, val, test)");
  }
};

inline DatasetSplit load_split(const std::filesystem::path& root,
                               const std::string& category) {
  namespace fs = std::filesystem;
  const fs::path dir = root / category;
  if (!fs::is_directory(dir)) {
    throw data_error("category directory not found: " + dir.string());
  }
  DatasetSplit split;
  split.category = category;
  if (std::ifstream parts(dir / "parts.txt"); parts) {
    if (!(parts >> split.num_parts)) {
      throw parse_error((dir / "parts.txt").string() + ": expected a part count");
    }
  }
  std::set<std::string> seen;
  auto read = [&](const char* name, std::vector<ShapeRecord>& into) {
    std::ifstream in(dir / name);
    if (!in) return;
    std::string id;
    while (in >> id) {
      if (!seen.insert(id).second) {
        throw data_error("shape id '" + id + "' listed in more than one split of " +
                         category);
      }
      into.push_back({dir / "points" / (id + ".pts"),
                      dir / "points_label" / (id + ".seg"), category, id});
    }
  };
  read("train.txt", split.train);
  read("val.txt", split.val);
  read("test.txt", split.test);
  return split;
}

inline std::vector<PointCloud> load_records(const std::vector<ShapeRecord>& records) {
  std::vector<PointCloud> clouds;
  clouds.reserve(records.size());
  for (const auto& r : records) {
    auto c = load_cloud(r.points_file, r.labels_file);
    c.category = r.category;
    c.id = r.id;
    clouds.push_back(std::move(c));
  }
  return clouds;
}

/// Writes clouds under the dataset layout and the three manifests.
inline void write_dataset(const std::filesystem::path& root,
                          const std::string& category, std::size_t num_parts,
                          const std::vector<PointCloud>& train,
                          const std::vector<PointCloud>& val,
                          const std::vector<PointCloud>& test) {
  namespace fs = std::filesystem;
  const fs::path dir = root / category;
  fs::create_directories(dir / "points");
  fs::create_directories(dir / "points_label");
  std::ofstream(dir / "parts.txt") << num_parts << '\n';
  auto emit = [&](const char* name, const std::vector<PointCloud>& clouds) {
    std::ofstream manifest(dir / name);
    for (const auto& c : clouds) {
      write_cloud(c, dir / "points" / (c.id + ".pts"),
                  dir / "points_label" / (c.id + ".seg"));
      manifest << c.id << '\n';
    }
  };
  emit("train.txt", train);
  emit("val.txt", val);
  emit("test.txt", test);
}

}  // namespace pignet
