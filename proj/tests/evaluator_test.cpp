#include <gtest/gtest.h>

#include <filesystem>
#include <random>
#include <set>
#include <sstream>

#include "pignet/experiments.hpp"

using namespace pignet;
namespace fs = std::filesystem;

namespace {

double oracle_miou(const std::vector<int>& pred, const std::vector<int>& gt, int parts) {
  std::vector<std::vector<long>> confusion(parts, std::vector<long>(parts, 0));
  for (std::size_t i = 0; i < pred.size(); ++i) ++confusion[pred[i]][gt[i]];
  double total = 0;
  for (int k = 0; k < parts; ++k) {
    long row = 0, col = 0;
    for (int j = 0; j < parts; ++j) {
      row += confusion[k][j];
      col += confusion[j][k];
    }
    const long uni = row + col - confusion[k][k];
    total += uni == 0 ? 1.0 : double(confusion[k][k]) / double(uni);
  }
  return total / double(parts);
}

bool next_labeling(std::vector<int>& v, int parts) {
  for (auto& x : v) {
    if (++x < parts) return true;
    x = 0;
  }
  return false;
}

ShapeResult shape(std::string category, double miou) {
  ShapeResult r;
  r.category = std::move(category);
  r.miou = miou;
  return r;
}

}  // namespace

TEST(ShapeMiou, PerfectPrediction) {
  std::vector<int> a{0, 1, 2, 2, 1};
  EXPECT_EQ(shape_miou(a, a, 3), 1.0);
}

TEST(ShapeMiou, HandDerivedCase) {
  std::vector<int> gt{0, 0, 1, 1}, pred{0, 1, 1, 1};
  EXPECT_NEAR(shape_miou(pred, gt, 2), 0.583333, 1e-6);
  EXPECT_NEAR(shape_miou(pred, gt, 2), (0.5 + 2.0 / 3.0) / 2.0, 1e-15);
}

TEST(ShapeMiou, AbsentPartScoresOne) {
  std::vector<int> gt{0, 0, 1, 1}, pred{0, 1, 1, 1};
  EXPECT_NEAR(shape_miou(pred, gt, 3), (0.5 + 2.0 / 3.0 + 1.0) / 3.0, 1e-15);
}

TEST(ShapeMiou, LengthMismatchAndBadLabels) {
  std::vector<int> a{0, 1}, b{0, 1, 1}, c{0, 5};
  EXPECT_THROW(shape_miou(a, b, 2), data_error);
  EXPECT_THROW(shape_miou(a, c, 2), data_error);
}

TEST(ShapeMiou, ExhaustiveSmallInstancesMatchConfusionOracle) {
  std::size_t checked = 0;
  for (int parts = 1; parts <= 3; ++parts) {
    const int max_n = parts == 1 ? 12 : parts == 2 ? 8 : 5;
    for (int n = 1; n <= max_n; ++n) {
      std::vector<int> pred(n, 0);
      do {
        std::vector<int> gt(n, 0);
        do {
          ASSERT_EQ(shape_miou(pred, gt, parts), oracle_miou(pred, gt, parts));
          ++checked;
        } while (next_labeling(gt, parts));
      } while (next_labeling(pred, parts));
    }
  }
  std::mt19937_64 rng(1);
  std::vector<int> pred(12);
  std::uniform_int_distribution<int> d(0, 2);
  for (auto& p : pred) p = d(rng);
  std::vector<int> gt(12, 0);
  do {
    ASSERT_EQ(shape_miou(pred, gt, 3), oracle_miou(pred, gt, 3));
    ++checked;
  } while (next_labeling(gt, 3));
  EXPECT_GT(checked, 500000u);
}

TEST(ShapeMiou, RandomLargeInstancesMatchConfusionOracle) {
  std::mt19937_64 rng(2);
  for (int trial = 0; trial < 100; ++trial) {
    const int parts = 2 + trial % 5;
    std::uniform_int_distribution<int> d(0, parts - 1);
    std::vector<int> pred(2048), gt(2048);
    for (auto& p : pred) p = d(rng);
    for (std::size_t i = 0; i < gt.size(); ++i) gt[i] = (rng() % 4 == 0) ? d(rng) : pred[i];
    const double m = shape_miou(pred, gt, parts);
    EXPECT_EQ(m, oracle_miou(pred, gt, parts));
    EXPECT_GE(m, 0.0);
    EXPECT_LE(m, 1.0);
  }
}

TEST(Aggregate, HandAveraging) {
  auto s = aggregate({shape("A", 0.8), shape("A", 0.6), shape("B", 1.0)});
  EXPECT_NEAR(s.instance_miou, 0.8, 1e-15);
  EXPECT_NEAR(s.category_miou, 0.85, 1e-15);
}

TEST(Aggregate, SingleShapeAndPerfect) {
  auto s = aggregate({shape("A", 0.42)});
  EXPECT_EQ(s.instance_miou, 0.42);
  EXPECT_EQ(s.category_miou, 0.42);
  auto p = aggregate({shape("A", 1.0), shape("B", 1.0), shape("B", 1.0)});
  EXPECT_EQ(p.instance_miou, 1.0);
  EXPECT_EQ(p.category_miou, 1.0);
  auto one_cat = aggregate({shape("A", 0.3), shape("A", 0.9)});
  EXPECT_EQ(one_cat.instance_miou, one_cat.category_miou);
  EXPECT_THROW(aggregate({}), usage_error);
}

TEST(Evaluate, UntrainedModelReportInRange) {
  PigNet<float> net(tiny_config(), 1);
  auto clouds = synth_generate("chair", 4, 3, 200);
  auto r = evaluate_clouds(net, clouds, {128, 5});
  ASSERT_EQ(r.shapes.size(), 4u);
  for (const auto& s : r.shapes) {
    EXPECT_GE(s.miou, 0.0);
    EXPECT_LE(s.miou, 1.0);
    EXPECT_EQ(s.points, 128u);
  }
  EXPECT_GE(r.instance_miou, 0.0);
  EXPECT_LE(r.instance_miou, 1.0);
  EXPECT_EQ(r.instance_miou, r.category_miou);
}

TEST(Evaluate, MatchesIndependentEvaluationPath) {
  PigNet<double> net(tiny_config(), 2);
  auto clouds = synth_generate("lamp", 6, 4, 300);
  const EvalOptions opt{100, 9};
  auto r = evaluate_clouds(net, clouds, opt);
  double total = 0;
  for (std::size_t i = 0; i < clouds.size(); ++i) {
    auto c = sample_points(normalize(clouds[i]), 100, derive_seed(9, i));
    auto logits = net.forward(to_tensor<double>(c), 1, Mode::eval).logits;
    std::vector<int> pred;
    for (std::size_t p = 0; p < c.size(); ++p) {
      int best = 0;
      for (int k = 1; k < 3; ++k)
        if (logits.at(p, k) > logits.at(p, best)) best = k;
      pred.push_back(best);
    }
    const double m = oracle_miou(pred, c.labels, 3);
    EXPECT_EQ(r.shapes[i].miou, m);
    total += m;
  }
  EXPECT_NEAR(r.instance_miou, total / 6.0, 1e-15);
}

TEST(Evaluate, DeterministicAcrossRunsAndThreadCounts) {
  PigNet<float> net(tiny_config(), 3);
  auto clouds = synth_generate("table", 5, 5, 200);
  auto a = evaluate_clouds(net, clouds, {64, 11, 0.02, 1});
  auto b = evaluate_clouds(net, clouds, {64, 11, 0.02, 3});
  ASSERT_EQ(a.shapes.size(), b.shapes.size());
  for (std::size_t i = 0; i < a.shapes.size(); ++i) {
    EXPECT_EQ(a.shapes[i].miou, b.shapes[i].miou);
    EXPECT_EQ(a.shapes[i].id, b.shapes[i].id);
  }
}

TEST(Evaluate, PartCountMismatchIsConfigError) {
  auto dir = fs::temp_directory_path() / "pignet_eval_test";
  fs::remove_all(dir);
  auto chairs = synth_generate("chair", 2, 1, 64);
  write_dataset(dir, "chair", 3, {chairs[0]}, {}, {chairs[1]});
  PigNet<float> two(tiny_config({8, 16}, 2), 1);
  EXPECT_THROW(evaluate_split(two, load_split(dir, "chair"), "test", {64, 1}), config_error);
  PigNet<float> three(tiny_config({8, 16}, 3), 1);
  EXPECT_EQ(evaluate_split(three, load_split(dir, "chair"), "test", {64, 1}).shapes.size(), 1u);
  fs::remove_all(dir);
}

TEST(Robustness, GridShapeAndIdentityCell) {
  PigNet<float> net(tiny_config(), 4);
  auto cfg = tiny_config();
  cfg.architecture = Architecture::pointnet;
  PointNetSeg<float> baseline(cfg, 4);
  auto clouds = synth_generate("lamp", 3, 6, 1024);
  auto grids = robustness_run<float>(net, baseline, clouds, 21);
  ASSERT_EQ(grids.size(), 2u);
  for (auto* pair : {&grids[0], &grids[1]}) {
    ASSERT_EQ(pair->instance_miou.size(), 4u);
    for (const auto& row : pair->instance_miou) ASSERT_EQ(row.size(), 5u);
  }
  EXPECT_EQ(grids[0].densities, (std::vector<std::size_t>{128, 256, 512, 1024}));
  EXPECT_EQ(grids[0].sigmas, (std::vector<double>{0, 0.01, 0.02, 0.03, 0.04}));
  EXPECT_EQ(grids[0].instance_miou[3][0], evaluate_clouds(net, clouds, {1024, 21}).instance_miou);
  EXPECT_EQ(grids[1].instance_miou[3][0],
            evaluate_clouds(baseline, clouds, {1024, 21}).instance_miou);
  std::ostringstream os;
  write_robustness_tsv(os, grids);
  std::size_t lines = 0;
  for (char c : os.str()) lines += c == '\n';
  EXPECT_EQ(lines, 1u + 2u * 20u);
}

TEST(Robustness, LowDensityCloudsHaveReducedCount) {
  auto c = synth_generate("lamp", 1, 6, 1024)[0];
  EXPECT_EQ(prepare_for_eval(c, 0, {128, 1}).size(), 128u);
}

TEST(Ablation, VariantGridStructure) {
  auto variants = ablation_variants(compact_config({64, 128, 256, 512}, 3));
  ASSERT_EQ(variants.size(), 5u);
  EXPECT_EQ(variants[0].config.local_width(), 768u);
  EXPECT_EQ(variants[1].config.local_width(), 1536u);
  EXPECT_EQ(variants[2].config.local_width(), 3072u);
  EXPECT_FALSE(variants[3].config.use_inception);
  EXPECT_TRUE(variants[4].config.use_inception);
  EXPECT_FALSE(variants[4].config.use_gap);

  auto lines = [](const ModelConfig& c) {
    std::set<std::string> out;
    std::istringstream in(architecture_signature(c));
    for (std::string l; std::getline(in, l);) out.insert(l);
    return out;
  };
  auto gap = lines(variants[1].config), max = lines(variants[4].config);
  std::vector<std::string> diff;
  std::set_symmetric_difference(gap.begin(), gap.end(), max.begin(), max.end(),
                                std::back_inserter(diff));
  EXPECT_EQ(diff, (std::vector<std::string>{"use_gap=0", "use_gap=1"}));
}

TEST(Ablation, RunSharesInitializationAcrossAggregation) {
  auto base = tiny_config();
  auto variants = ablation_variants(base, 32);
  TrainConfig tc;
  tc.epochs = 1;
  tc.seed = 3;
  tc.points = 32;
  tc.batch_size = 2;
  auto clouds = synth_generate("lamp", 2, 3, 64);
  auto rows = ablation_run<float>(clouds, clouds, variants, tc, 32);
  ASSERT_EQ(rows.size(), 5u);
  EXPECT_EQ(rows[1].initial_hash, rows[4].initial_hash);
  EXPECT_NE(rows[1].trained_hash, rows[4].trained_hash);
  std::ostringstream os;
  write_ablation_tsv(os, rows);
  EXPECT_NE(os.str().find("PIGNet-Inc4L-max-pooling"), std::string::npos);
}

TEST(Complexity, TimingsPositive) {
  TrainConfig tc;
  tc.points = 32;
  tc.batch_size = 2;
  auto clouds = synth_generate("lamp", 2, 3, 64);
  auto r = complexity_report<float>(tiny_config(), clouds, tc);
  EXPECT_EQ(r.parameters, count_parameters(tiny_config()));
  EXPECT_GT(r.train_seconds_per_epoch, 0.0);
  EXPECT_GT(r.inference_seconds_per_shape, 0.0);
}

TEST(Export, PlyHeaderAndPalette) {
  PointCloud c;
  c.points = {{0, 0, 0}, {1, 2, 3}};
  std::vector<int> parts{0, 9};
  std::ostringstream os;
  write_ply(os, c, parts);
  const auto s = os.str();
  EXPECT_EQ(s.rfind("ply\nformat ascii 1.0\nelement vertex 2\n", 0), 0u);
  EXPECT_NE(s.find("end_header\n"), std::string::npos);
  EXPECT_NE(s.find("1.000000 2.000000 3.000000 60 180 75\n"), std::string::npos);
  std::vector<int> short_parts{0};
  EXPECT_THROW(write_ply(os, c, short_parts), data_error);
}

TEST(Report, TsvAndSummary) {
  SegmentationReport r;
  r.shapes = {shape("lamp", 0.5)};
  r.shapes[0].id = "lamp_0000";
  r.instance_miou = r.category_miou = 0.5;
  std::ostringstream tsv, summary;
  write_report_tsv(tsv, r);
  write_report_summary(summary, r);
  EXPECT_NE(tsv.str().find("lamp_0000\tlamp\t0.500000"), std::string::npos);
  EXPECT_NE(summary.str().find("instance_miou: 0.500000"), std::string::npos);
}
