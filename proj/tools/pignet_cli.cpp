#include <boost/property_tree/ini_parser.hpp>
#include <boost/property_tree/ptree.hpp>

#include <CLI11.hpp>

#include <charconv>
#include <cmath>
#include <chrono>
#include <ctime>
#include <filesystem>
#include <fstream>
#include <functional>
#include <iomanip>
#include <iostream>
#include <map>
#include <optional>
#include <sstream>
#include <string>
#include <vector>

#include "pignet/pignet.hpp"

namespace fs = std::filesystem;
using namespace pignet;

namespace {

constexpr int kExitRuntime = 1;
constexpr int kExitConfig = 2;

struct RunConfig {
  std::string preset = "full";
  ModelConfig model;
  bool num_parts_set = false;
  TrainConfig train;
  std::string precision = "double";
  fs::path data_root = "data";
  std::string category;
  std::string split = "test";
};

// ---------------------------------------------------------------------------
// Value parsing

std::string trim(std::string s) {
  const auto b = s.find_first_not_of(" \t\r\n");
  if (b == std::string::npos) return {};
  const auto e = s.find_last_not_of(" \t\r\n");
  return s.substr(b, e - b + 1);
}

std::size_t parse_size(const std::string& key, const std::string& text) {
  const std::string v = trim(text);
  std::size_t out = 0;
  auto [ptr, ec] = std::from_chars(v.data(), v.data() + v.size(), out);
  if (v.empty() || ec != std::errc{} || ptr != v.data() + v.size())
    throw config_error(key + ": expected a non-negative integer, got '" + text + "'");
  return out;
}

double parse_real(const std::string& key, const std::string& text) {
  const std::string v = trim(text);
  try {
    std::size_t used = 0;
    const double out = std::stod(v, &used);
    if (used == v.size()) return out;
  } catch (const std::exception&) {
  }
  throw config_error(key + ": expected a number, got '" + text + "'");
}

bool parse_bool(const std::string& key, const std::string& text) {
  const std::string v = trim(text);
  if (v == "true" || v == "1" || v == "yes" || v == "on") return true;
  if (v == "false" || v == "0" || v == "no" || v == "off") return false;
  throw config_error(key + ": expected true or false, got '" + text + "'");
}

std::vector<std::size_t> parse_list(const std::string& key, const std::string& text) {
  std::vector<std::size_t> out;
  std::stringstream ss(text);
  for (std::string item; std::getline(ss, item, ',');) out.push_back(parse_size(key, item));
  if (out.empty()) throw config_error(key + ": expected a comma-separated list");
  return out;
}

std::string fmt_real(double v) {
  std::ostringstream os;
  os << std::setprecision(17) << v;
  return os.str();
}

// ---------------------------------------------------------------------------
// Config keys

void apply_preset(RunConfig& rc, const std::string& name) {
  const auto parts = rc.model.num_parts;
  if (name == "full") {
    rc.model = ModelConfig{};
  } else if (name == "compact") {
    rc.model = compact_config(ModelConfig{}.inception_plan, parts);
  } else if (name == "tiny") {
    rc.model = tiny_config({8, 16}, parts);
  } else {
    throw config_error("model.preset: expected full, compact or tiny, got '" + name + "'");
  }
  rc.model.num_parts = parts;
  rc.preset = name;
}

using Setter = std::function<void(RunConfig&, const std::string&)>;

const std::map<std::string, Setter>& setters() {
  static const std::map<std::string, Setter> table{
      {"model.preset", [](RunConfig&, const std::string&) {}},
      {"model.architecture",
       [](RunConfig& rc, const std::string& v) {
         const auto a = trim(v);
         if (a == "pignet") rc.model.architecture = Architecture::pignet;
         else if (a == "pointnet") rc.model.architecture = Architecture::pointnet;
         else throw config_error("model.architecture: expected pignet or pointnet, got '" + v + "'");
       }},
      {"model.inception_plan",
       [](RunConfig& rc, const std::string& v) {
         rc.model.inception_plan = parse_list("model.inception_plan", v);
       }},
      {"model.use_inception",
       [](RunConfig& rc, const std::string& v) {
         rc.model.use_inception = parse_bool("model.use_inception", v);
       }},
      {"model.use_gap",
       [](RunConfig& rc, const std::string& v) { rc.model.use_gap = parse_bool("model.use_gap", v); }},
      {"model.feature_transform",
       [](RunConfig& rc, const std::string& v) {
         rc.model.feature_transform = parse_bool("model.feature_transform", v);
       }},
      {"model.feature_reduction",
       [](RunConfig& rc, const std::string& v) {
         rc.model.feature_reduction = parse_size("model.feature_reduction", v);
       }},
      {"model.head_widths",
       [](RunConfig& rc, const std::string& v) {
         rc.model.head_widths = parse_list("model.head_widths", v);
       }},
      {"model.num_parts",
       [](RunConfig& rc, const std::string& v) {
         rc.model.num_parts = parse_size("model.num_parts", v);
         rc.num_parts_set = true;
       }},
      {"model.lambda_reg",
       [](RunConfig& rc, const std::string& v) {
         rc.model.lambda_reg = parse_real("model.lambda_reg", v);
       }},
      {"model.tnet_conv",
       [](RunConfig& rc, const std::string& v) {
         rc.model.tnet.conv = parse_list("model.tnet_conv", v);
       }},
      {"model.tnet_fc",
       [](RunConfig& rc, const std::string& v) { rc.model.tnet.fc = parse_list("model.tnet_fc", v); }},
      {"model.baseline_convs",
       [](RunConfig& rc, const std::string& v) {
         rc.model.baseline_convs = parse_list("model.baseline_convs", v);
       }},
      {"model.baseline_local_depth",
       [](RunConfig& rc, const std::string& v) {
         rc.model.baseline_local_depth = parse_size("model.baseline_local_depth", v);
       }},
      {"train.batch_size",
       [](RunConfig& rc, const std::string& v) {
         rc.train.batch_size = parse_size("train.batch_size", v);
       }},
      {"train.learning_rate",
       [](RunConfig& rc, const std::string& v) {
         rc.train.adam.learning_rate = parse_real("train.learning_rate", v);
       }},
      {"train.beta1",
       [](RunConfig& rc, const std::string& v) { rc.train.adam.beta1 = parse_real("train.beta1", v); }},
      {"train.beta2",
       [](RunConfig& rc, const std::string& v) { rc.train.adam.beta2 = parse_real("train.beta2", v); }},
      {"train.epsilon",
       [](RunConfig& rc, const std::string& v) {
         rc.train.adam.epsilon = parse_real("train.epsilon", v);
       }},
      {"train.epochs",
       [](RunConfig& rc, const std::string& v) { rc.train.epochs = parse_size("train.epochs", v); }},
      {"train.seed",
       [](RunConfig& rc, const std::string& v) { rc.train.seed = parse_size("train.seed", v); }},
      {"train.augment",
       [](RunConfig& rc, const std::string& v) { rc.train.augment = parse_bool("train.augment", v); }},
      {"train.precision",
       [](RunConfig& rc, const std::string& v) {
         const auto p = trim(v);
         if (p != "float" && p != "double")
           throw config_error("train.precision: expected float or double, got '" + v + "'");
         rc.precision = p;
       }},
      {"augment.rotate_up_axis",
       [](RunConfig& rc, const std::string& v) {
         rc.train.augmentation.rotate_up_axis = parse_bool("augment.rotate_up_axis", v);
       }},
      {"augment.up_axis",
       [](RunConfig& rc, const std::string& v) {
         rc.train.augmentation.up_axis = int(parse_size("augment.up_axis", v));
       }},
      {"augment.scale_low",
       [](RunConfig& rc, const std::string& v) {
         rc.train.augmentation.scale_low = parse_real("augment.scale_low", v);
       }},
      {"augment.scale_high",
       [](RunConfig& rc, const std::string& v) {
         rc.train.augmentation.scale_high = parse_real("augment.scale_high", v);
       }},
      {"augment.translate_low",
       [](RunConfig& rc, const std::string& v) {
         rc.train.augmentation.translate_low = parse_real("augment.translate_low", v);
       }},
      {"augment.translate_high",
       [](RunConfig& rc, const std::string& v) {
         rc.train.augmentation.translate_high = parse_real("augment.translate_high", v);
       }},
      {"augment.jitter_sigma",
       [](RunConfig& rc, const std::string& v) {
         rc.train.augmentation.jitter_sigma = parse_real("augment.jitter_sigma", v);
       }},
      {"data.root", [](RunConfig& rc, const std::string& v) { rc.data_root = trim(v); }},
      {"data.category", [](RunConfig& rc, const std::string& v) { rc.category = trim(v); }},
      {"data.points",
       [](RunConfig& rc, const std::string& v) { rc.train.points = parse_size("data.points", v); }},
      {"data.split", [](RunConfig& rc, const std::string& v) { rc.split = trim(v); }},
  };
  return table;
}

void load_config_file(const fs::path& path, RunConfig& rc) {
  if (!fs::exists(path)) throw data_error("config file not found: " + path.string());
  boost::property_tree::ptree tree;
  try {
    boost::property_tree::ini_parser::read_ini(path.string(), tree);
  } catch (const boost::property_tree::ini_parser_error& e) {
    throw config_error(path.string() + ": " + e.message() + " (line " +
                       std::to_string(e.line()) + ")");
  }
  std::vector<std::pair<std::string, std::string>> entries;
  for (const auto& [section, body] : tree) {
    if (body.empty()) {
      throw config_error("unknown config key '" + section + "' in " + path.string() +
                         " (keys belong to a [model], [train], [augment] or [data] section)");
    }
    for (const auto& [key, value] : body) {
      const std::string full = section + "." + key;
      if (!setters().count(full))
        throw config_error("unknown config key '" + full + "' in " + path.string());
      entries.push_back({full, value.data()});
    }
  }
  for (const auto& [key, value] : entries)
    if (key == "model.preset") apply_preset(rc, trim(value));
  for (const auto& [key, value] : entries) setters().at(key)(rc, value);
}

void write_config(std::ostream& os, const RunConfig& rc) {
  const auto& m = rc.model;
  const auto& t = rc.train;
  const auto& a = t.augmentation;
  os << "[model]\n"
     << "preset = " << rc.preset << '\n'
     << "architecture = " << to_string(m.architecture) << '\n'
     << "inception_plan = " << join(m.inception_plan) << '\n'
     << "use_inception = " << (m.use_inception ? "true" : "false") << '\n'
     << "use_gap = " << (m.use_gap ? "true" : "false") << '\n'
     << "feature_transform = " << (m.feature_transform ? "true" : "false") << '\n'
     << "feature_reduction = " << m.feature_reduction << '\n'
     << "head_widths = " << join(m.head_widths) << '\n'
     << "num_parts = " << m.num_parts << '\n'
     << "lambda_reg = " << fmt_real(m.lambda_reg) << '\n'
     << "tnet_conv = " << join(m.tnet.conv) << '\n'
     << "tnet_fc = " << join(m.tnet.fc) << '\n'
     << "baseline_convs = " << join(m.baseline_convs) << '\n'
     << "baseline_local_depth = " << m.baseline_local_depth << "\n\n"
     << "[train]\n"
     << "batch_size = " << t.batch_size << '\n'
     << "learning_rate = " << fmt_real(t.adam.learning_rate) << '\n'
     << "beta1 = " << fmt_real(t.adam.beta1) << '\n'
     << "beta2 = " << fmt_real(t.adam.beta2) << '\n'
     << "epsilon = " << fmt_real(t.adam.epsilon) << '\n'
     << "epochs = " << t.epochs << '\n'
     << "seed = " << t.seed << '\n'
     << "augment = " << (t.augment ? "true" : "false") << '\n'
     << "precision = " << rc.precision << "\n\n"
     << "[augment]\n"
     << "rotate_up_axis = " << (a.rotate_up_axis ? "true" : "false") << '\n'
     << "up_axis = " << a.up_axis << '\n'
     << "scale_low = " << fmt_real(a.scale_low) << '\n'
     << "scale_high = " << fmt_real(a.scale_high) << '\n'
     << "translate_low = " << fmt_real(a.translate_low) << '\n'
     << "translate_high = " << fmt_real(a.translate_high) << '\n'
     << "jitter_sigma = " << fmt_real(a.jitter_sigma) << "\n\n"
     << "[data]\n"
     << "root = " << rc.data_root.string() << '\n'
     << "category = " << rc.category << '\n'
     << "points = " << t.points << '\n'
     << "split = " << rc.split << '\n';
}

// ---------------------------------------------------------------------------
// Run directories and logging

class RunDir {
 public:
  RunDir(const fs::path& out, const RunConfig& rc) {
    const auto now = std::chrono::system_clock::to_time_t(std::chrono::system_clock::now());
    std::tm tm{};
    localtime_r(&now, &tm);
    std::ostringstream stamp;
    stamp << "run-" << std::put_time(&tm, "%Y%m%d-%H%M%S");
    path_ = out / stamp.str();
    for (int i = 1; fs::exists(path_); ++i) path_ = out / (stamp.str() + "-" + std::to_string(i));
    fs::create_directories(path_);
    std::ofstream cfg(path_ / "config.ini");
    write_config(cfg, rc);
    log_.open(path_ / "log.txt");
  }

  const fs::path& path() const { return path_; }

  void log(const std::string& line) {
    std::cout << line << '\n';
    log_ << line << '\n';
    log_.flush();
  }

 private:
  fs::path path_;
  std::ofstream log_;
};

std::string fixed(double v, int digits = 6) {
  std::ostringstream os;
  os << std::fixed << std::setprecision(digits) << v;
  return os.str();
}

// ---------------------------------------------------------------------------
// Commands

struct Options {
  std::optional<fs::path> config;
  std::optional<fs::path> data_root;
  std::optional<std::string> category;
  std::optional<std::uint64_t> seed;
  std::optional<std::size_t> epochs;
  std::optional<std::size_t> points;
  fs::path out = "runs";
  std::optional<std::string> split;
  std::optional<std::string> precision;
  fs::path checkpoint;
  fs::path resume;
  fs::path baseline_checkpoint;
  fs::path baseline_config;
  std::vector<fs::path> inputs;
  std::vector<std::string> shapes{"lamp"};
  std::size_t count = 8;
  std::size_t val_count = 0;
  std::size_t test_count = 0;
  std::size_t width_divisor = 1;
};

RunConfig resolve(const Options& o, const std::optional<fs::path>& fallback_config = {}) {
  RunConfig rc;
  if (o.config) load_config_file(*o.config, rc);
  else if (fallback_config && fs::exists(*fallback_config)) load_config_file(*fallback_config, rc);
  if (o.data_root) rc.data_root = *o.data_root;
  if (o.category) rc.category = *o.category;
  if (o.seed) rc.train.seed = *o.seed;
  if (o.epochs) rc.train.epochs = *o.epochs;
  if (o.points) rc.train.points = *o.points;
  if (o.split) rc.split = *o.split;
  if (o.precision) setters().at("train.precision")(rc, *o.precision);
  rc.train.threads = worker_threads();
  return rc;
}

void require_category(const RunConfig& rc) {
  if (rc.category.empty())
    throw config_error("data.category is not set (use --category or [data] category)");
}

DatasetSplit open_split(RunConfig& rc) {
  require_category(rc);
  auto split = load_split(rc.data_root, rc.category);
  if (split.num_parts) {
    if (rc.num_parts_set && rc.model.num_parts != split.num_parts) {
      throw config_error("model.num_parts is " + std::to_string(rc.model.num_parts) +
                         " but category '" + rc.category + "' has " +
                         std::to_string(split.num_parts) + " parts");
    }
    rc.model.num_parts = split.num_parts;
  }
  return split;
}

void validate(const RunConfig& rc) {
  rc.model.validate();
  rc.train.validate();
  if (rc.train.epochs == 0) throw config_error("train.epochs must be >= 1");
}

fs::path sibling_config(const fs::path& checkpoint) {
  return checkpoint.parent_path() / "config.ini";
}

void require_file(const fs::path& p, const std::string& what) {
  if (p.empty()) throw config_error(what + " is required");
  if (!fs::exists(p)) throw data_error(what + " not found: " + p.string());
}

std::vector<PointCloud> records_or_throw(const DatasetSplit& split, const std::string& which,
                                         const RunConfig& rc) {
  auto clouds = load_records(split.get(which));
  if (clouds.empty()) {
    throw data_error("split '" + which + "' of " + (rc.data_root / rc.category).string() +
                     " lists no shapes");
  }
  return clouds;
}

int cmd_synth(const Options& o) {
  RunConfig rc = resolve(o);
  const std::size_t points = o.points ? *o.points : 1024;
  for (const auto& shape : o.shapes) {
    const auto& info = synthetic_shape(shape);
    const std::size_t total = o.count + o.val_count + o.test_count;
    auto clouds = synth_generate(shape, total, rc.train.seed, points);
    std::vector<PointCloud> train(clouds.begin(), clouds.begin() + long(o.count));
    std::vector<PointCloud> val(clouds.begin() + long(o.count),
                                clouds.begin() + long(o.count + o.val_count));
    std::vector<PointCloud> test(clouds.begin() + long(o.count + o.val_count), clouds.end());
    write_dataset(rc.data_root, shape, info.parts, train, val, test);
    std::cout << "wrote " << total << " " << shape << " shapes (" << info.parts << " parts, "
              << points << " points) to " << (rc.data_root / shape).string() << '\n';
  }
  return 0;
}

template <typename T>
int cmd_train(const Options& o) {
  RunConfig rc = resolve(o);
  auto split = open_split(rc);
  validate(rc);
  auto train = records_or_throw(split, "train", rc);
  auto val = load_records(split.val);
  RunDir run(o.out, rc);
  run.log("run directory: " + run.path().string());
  auto model = build_model<T>(rc.model, rc.train.seed);
  run.log("architecture: " + to_string(rc.model.architecture) + ", parameters: " +
          std::to_string(count_parameters(*model)) + ", precision: " + rc.precision);
  Trainer<T> trainer(*model, rc.train);
  if (!o.resume.empty()) {
    require_file(o.resume, "resume checkpoint");
    trainer.load(o.resume);
    run.log("resumed from " + o.resume.string() + " at epoch " + std::to_string(trainer.epoch()));
  }
  const fs::path ckpt = run.path() / "model.ckpt";
  std::ofstream history(run.path() / "history.tsv");
  history << "epoch\ttrain_loss\tval_instance_miou\tseconds\n";
  const std::uint64_t start_epoch = trainer.epoch();
  trainer.fit(train, val, [&](std::size_t e, const TrainHistory& h) {
    const auto epoch = start_epoch + e + 1;
    const double val_miou = h.val_instance_miou.back();
    history << epoch << '\t' << fixed(h.train_loss.back(), 8) << '\t'
            << (std::isnan(val_miou) ? std::string("nan") : fixed(val_miou)) << '\t'
            << fixed(h.epoch_seconds.back(), 3) << '\n';
    history.flush();
    trainer.save(ckpt);
    run.log("epoch " + std::to_string(epoch) + " loss " + fixed(h.train_loss.back(), 6) +
            (std::isnan(val_miou) ? std::string() : " val_miou " + fixed(val_miou)) + " (" +
            fixed(h.epoch_seconds.back(), 2) + " s)");
  });
  run.log("checkpoint: " + ckpt.string());
  return 0;
}

template <typename T>
std::unique_ptr<SegmentationNet<T>> load_model(const RunConfig& rc, const fs::path& checkpoint) {
  auto model = build_model<T>(rc.model, rc.train.seed);
  load_checkpoint(checkpoint, *model);
  return model;
}

template <typename T>
int cmd_eval(const Options& o) {
  require_file(o.checkpoint, "--checkpoint");
  RunConfig rc = resolve(o, sibling_config(o.checkpoint));
  auto split = open_split(rc);
  validate(rc);
  auto clouds = records_or_throw(split, rc.split, rc);
  auto model = load_model<T>(rc, o.checkpoint);
  RunDir run(o.out, rc);
  auto report = evaluate_clouds(*model, clouds,
                                {rc.train.points, rc.train.seed, 0.0, rc.train.threads});
  std::ofstream tsv(run.path() / "report.tsv");
  write_report_tsv(tsv, report);
  std::ofstream summary(run.path() / "summary.txt");
  summary << "split: " << rc.split << '\n';
  write_report_summary(summary, report);
  std::ostringstream text;
  write_report_summary(text, report);
  run.log("run directory: " + run.path().string());
  run.log("split: " + rc.split);
  run.log(trim(text.str()));
  return 0;
}

template <typename T>
int cmd_predict(const Options& o) {
  require_file(o.checkpoint, "--checkpoint");
  RunConfig rc = resolve(o, sibling_config(o.checkpoint));
  std::vector<PointCloud> clouds;
  if (!o.inputs.empty()) {
    for (const auto& p : o.inputs) {
      auto c = load_cloud(p, {});
      c.id = p.stem().string();
      clouds.push_back(std::move(c));
    }
  } else {
    auto split = open_split(rc);
    clouds = records_or_throw(split, rc.split, rc);
  }
  validate(rc);
  auto model = load_model<T>(rc, o.checkpoint);
  RunDir run(o.out, rc);
  for (const auto& raw : clouds) {
    const PointCloud c = normalize(raw);
    const auto parts = predict(*model, to_tensor<T>(c));
    std::ofstream ply(run.path() / (c.id + ".ply"));
    write_ply(ply, c, parts);
    std::ofstream seg(run.path() / (c.id + ".seg"));
    for (int p : parts) seg << p << '\n';
    std::string line = c.id + ": " + std::to_string(c.size()) + " points";
    if (c.labeled()) line += ", mIoU " + fixed(shape_miou(parts, c.labels, model->num_parts()));
    run.log(line);
  }
  run.log("wrote " + std::to_string(clouds.size()) + " PLY files to " + run.path().string());
  return 0;
}

template <typename T>
int cmd_ablate(const Options& o) {
  RunConfig rc = resolve(o);
  auto split = open_split(rc);
  validate(rc);
  auto train = records_or_throw(split, "train", rc);
  auto eval = records_or_throw(split, rc.split, rc);
  RunDir run(o.out, rc);
  run.log("run directory: " + run.path().string());
  const auto variants = ablation_variants(rc.model, o.width_divisor);
  const auto rows = ablation_run<T>(train, eval, variants, rc.train, rc.train.points);
  std::ofstream tsv(run.path() / "ablation.tsv");
  write_ablation_tsv(tsv, rows);
  std::ostringstream text;
  write_ablation_tsv(text, rows);
  run.log(trim(text.str()));
  return 0;
}

template <typename T>
std::unique_ptr<SegmentationNet<T>> trained_or_loaded(RunDir& run, const RunConfig& rc,
                                                      const fs::path& checkpoint,
                                                      const std::vector<PointCloud>& train,
                                                      const std::string& name) {
  if (!checkpoint.empty()) {
    require_file(checkpoint, name + " checkpoint");
    run.log(name + ": loading " + checkpoint.string());
    return load_model<T>(rc, checkpoint);
  }
  run.log(name + ": training " + std::to_string(rc.train.epochs) + " epochs");
  auto result = train_category<T>(train, {}, rc.model, rc.train);
  return std::move(result.model);
}

template <typename T>
int cmd_robustness(const Options& o) {
  std::optional<fs::path> fallback;
  if (!o.checkpoint.empty()) fallback = sibling_config(o.checkpoint);
  RunConfig rc = resolve(o, fallback);
  auto split = open_split(rc);
  RunConfig base = rc;
  if (!o.baseline_config.empty()) {
    base = RunConfig{};
    load_config_file(o.baseline_config, base);
    base.data_root = rc.data_root;
    base.category = rc.category;
    base.train.points = rc.train.points;
    base.train.threads = rc.train.threads;
    base.model.num_parts = rc.model.num_parts;
  } else if (!o.baseline_checkpoint.empty() && fs::exists(sibling_config(o.baseline_checkpoint))) {
    base = RunConfig{};
    load_config_file(sibling_config(o.baseline_checkpoint), base);
    base.model.num_parts = rc.model.num_parts;
  }
  base.model.architecture = Architecture::pointnet;
  validate(rc);
  validate(base);
  auto eval = records_or_throw(split, rc.split, rc);
  std::vector<PointCloud> train;
  if (o.checkpoint.empty() || o.baseline_checkpoint.empty()) {
    train = records_or_throw(split, "train", rc);
  }
  RunDir run(o.out, rc);
  run.log("run directory: " + run.path().string());
  auto model = trained_or_loaded<T>(run, rc, o.checkpoint, train, "PIG-Net");
  auto baseline = trained_or_loaded<T>(run, base, o.baseline_checkpoint, train, "PointNet");
  const auto grids = robustness_run(*model, *baseline, eval, rc.train.seed, rc.train.threads);
  std::ofstream tsv(run.path() / "robustness.tsv");
  write_robustness_tsv(tsv, grids);
  std::ostringstream text;
  write_robustness_tsv(text, grids);
  run.log(trim(text.str()));
  return 0;
}

int cmd_inspect(const Options& o) {
  RunConfig rc = resolve(o);
  if (!rc.category.empty() && fs::exists(rc.data_root / rc.category)) open_split(rc);
  validate(rc);
  const auto& m = rc.model;
  std::cout << "architecture: " << to_string(m.architecture) << '\n';
  if (m.architecture == Architecture::pignet) {
    std::cout << "inception_plan: " << join(m.inception_plan) << '\n'
              << "use_inception: " << m.use_inception << '\n'
              << "aggregation: " << (m.use_gap ? "global average pooling" : "max pooling") << '\n';
  } else {
    std::cout << "baseline_convs: " << join(m.baseline_convs) << '\n';
  }
  std::cout << "local_width: " << m.local_width() << '\n'
            << "feature_transform: " << m.feature_transform << '\n'
            << "head_widths: " << join(m.head_widths) << '\n'
            << "num_parts: " << m.num_parts << '\n'
            << "config_hash: " << std::hex << config_hash(m) << std::dec << '\n'
            << "parameters: " << count_parameters(m) << '\n';
  return 0;
}

template <typename T>
int dispatch(const std::string& command, const Options& o) {
  if (command == "train") return cmd_train<T>(o);
  if (command == "eval") return cmd_eval<T>(o);
  if (command == "predict") return cmd_predict<T>(o);
  if (command == "ablate") return cmd_ablate<T>(o);
  if (command == "robustness") return cmd_robustness<T>(o);
  throw usage_error("unknown command " + command);
}

std::string effective_precision(const Options& o) {
  if (o.precision) return *o.precision;
  std::optional<fs::path> cfg = o.config;
  if (!cfg && !o.checkpoint.empty()) cfg = sibling_config(o.checkpoint);
  if (cfg && fs::exists(*cfg)) {
    RunConfig rc;
    load_config_file(*cfg, rc);
    return rc.precision;
  }
  return "double";
}

}  // namespace

int main(int argc, char** argv) {
  CLI::App app{"PIG-Net point cloud part segmentation"};
  app.require_subcommand(1);
  Options o;

  auto common = [&](CLI::App* sub) {
    sub->add_option("--config", o.config, "INI configuration file");
    sub->add_option("--data-root", o.data_root, "dataset root directory");
    sub->add_option("--category", o.category, "object category");
    sub->add_option("--seed", o.seed, "random seed");
    sub->add_option("--epochs", o.epochs, "training epochs");
    sub->add_option("--points", o.points, "points sampled per shape (default 1024)");
    sub->add_option("--out", o.out, "output directory for run-<timestamp> folders")
        ->capture_default_str();
    sub->add_option("--precision", o.precision, "float or double");
  };

  auto* synth = app.add_subcommand("synth", "generate a labeled synthetic dataset");
  common(synth);
  synth->add_option("--shapes", o.shapes, "shape names: lamp, table, chair")->delimiter(',');
  synth->add_option("--count", o.count, "training shapes per category")->capture_default_str();
  synth->add_option("--val", o.val_count, "validation shapes per category")->capture_default_str();
  synth->add_option("--test", o.test_count, "test shapes per category")->capture_default_str();

  auto* train = app.add_subcommand("train", "train a model on one category");
  common(train);
  train->add_option("--resume", o.resume, "continue from a checkpoint");

  auto* eval = app.add_subcommand("eval", "evaluate a checkpoint on a split");
  common(eval);
  eval->add_option("--checkpoint", o.checkpoint, "checkpoint file")->required();
  eval->add_option("--split", o.split, "train, val or test");

  auto* pred = app.add_subcommand("predict", "export per-point predictions as PLY");
  common(pred);
  pred->add_option("--checkpoint", o.checkpoint, "checkpoint file")->required();
  pred->add_option("--split", o.split, "train, val or test");
  pred->add_option("--input", o.inputs, "points files to segment instead of a split");

  auto* ablate = app.add_subcommand("ablate", "train and compare the five architecture variants");
  common(ablate);
  ablate->add_option("--split", o.split, "evaluation split");
  ablate->add_option("--width-divisor", o.width_divisor, "divide every filter count by N")
      ->capture_default_str();

  auto* robust = app.add_subcommand("robustness", "density x noise grid for PIG-Net and PointNet");
  common(robust);
  robust->add_option("--split", o.split, "evaluation split");
  robust->add_option("--checkpoint", o.checkpoint, "PIG-Net checkpoint (trained if absent)");
  robust->add_option("--baseline-checkpoint", o.baseline_checkpoint,
                     "PointNet checkpoint (trained if absent)");
  robust->add_option("--baseline-config", o.baseline_config, "PointNet configuration file");

  auto* inspect = app.add_subcommand("inspect", "print architecture summary and parameter count");
  common(inspect);

  try {
    app.parse(argc, argv);
  } catch (const CLI::ParseError& e) {
    const int code = app.exit(e);
    return code == 0 ? 0 : kExitConfig;
  }

  const std::string command = app.get_subcommands().front()->get_name();
  try {
    if (command == "synth") return cmd_synth(o);
    if (command == "inspect") return cmd_inspect(o);
    const std::string precision = effective_precision(o);
    if (precision == "float") return dispatch<float>(command, o);
    if (precision == "double") return dispatch<double>(command, o);
    throw config_error("train.precision: expected float or double, got '" + precision + "'");
  } catch (const config_error& e) {
    std::cerr << "configuration error: " << e.what() << '\n';
    return kExitConfig;
  } catch (const usage_error& e) {
    std::cerr << "usage error: " << e.what() << '\n';
    return kExitConfig;
  } catch (const std::exception& e) {
    std::cerr << "error: " << e.what() << '\n';
    return kExitRuntime;
  }
}
