#include "scan/train.hpp"
#include "test_util.hpp"

#include <gtest/gtest.h>

#include <filesystem>
#include <fstream>
#include <json.hpp>
#include <limits>
#include <random>
#include <sstream>

#ifndef SCAN_TEST_DATA_DIR
#error "SCAN_TEST_DATA_DIR must point at tests/data"
#endif

namespace scan {
namespace {

namespace fs = std::filesystem;

PreparedData toy_data() {
  DatasetBundle b;
  b.train = read_jsonl(std::string(SCAN_TEST_DATA_DIR) + "/toy_corpus.jsonl");
  b.categories = collect_categories({&b.train}, true);
  b.dev = b.train;
  b.test = b.train;
  return PreparedData::from_bundle(b, {});
}

TrainConfig small_config() {
  TrainConfig c;
  c.dim = 16;
  c.heads = 4;
  c.batch_size = 4;
  c.learning_rate = 0.01;
  c.max_epochs = 6;
  c.seed = 3;
  return c;
}

TEST(TrainConfig, DefaultsFollowThePublishedSetup) {
  TrainConfig c;
  EXPECT_EQ(c.learning_rate, 0.001);
  EXPECT_EQ(c.batch_size, 32u);
  EXPECT_EQ(c.heads, 4);
  EXPECT_EQ(c.dim, 300);
  EXPECT_EQ(c.weight_acd, 1.0);
  EXPECT_EQ(c.weight_iloss, 1.0);
  EXPECT_EQ(c.weight_acsa, 1.0);
  EXPECT_EQ(c.l2, 1e-5);
  EXPECT_EQ(c.patience, 10);
  EXPECT_EQ(c.runs, 5);
  EXPECT_EQ(c.max_epochs, 100);
  EXPECT_NO_THROW(c.validate());
}

TEST(TrainConfig, ParsesKeyValueFiles) {
  std::istringstream in("# comment\nlearning_rate = 0.01\n\nvariant = no-tree\nkeep_preterminals = true\nruns=3\n");
  TrainConfig c = parse_train_config(in);
  EXPECT_EQ(c.learning_rate, 0.01);
  EXPECT_EQ(c.variant, Variant::no_tree);
  EXPECT_TRUE(c.keep_preterminals);
  EXPECT_EQ(c.runs, 3);
  EXPECT_EQ(c.batch_size, 32u);
}

TEST(TrainConfig, RejectsUnknownKeysAndBadValues) {
  std::istringstream unknown("learning_rate = 0.01\ndropout = 0.5\n");
  EXPECT_THROW(parse_train_config(unknown), std::invalid_argument);
  std::istringstream bad("patience = ten\n");
  EXPECT_THROW(parse_train_config(bad), std::invalid_argument);
  std::istringstream no_eq("patience 10\n");
  EXPECT_THROW(parse_train_config(no_eq), std::invalid_argument);
}

TEST(TrainConfig, ResolvedTextRoundTrips) {
  TrainConfig c;
  c.set("learning_rate", "0.0003");
  c.set("dataset", "mams");
  c.set("variant", "no_iloss");
  std::istringstream in(c.to_text());
  TrainConfig again = parse_train_config(in);
  EXPECT_EQ(again.to_text(), c.to_text());
  for (const std::string& key : TrainConfig::keys()) {
    EXPECT_NE(c.to_text().find(key + " = "), std::string::npos) << key;
  }
}

TEST(TrainConfig, ValidateEnforcesInvariants) {
  TrainConfig c;
  c.weight_iloss = -1;
  EXPECT_THROW(c.validate(), std::invalid_argument);
  c = TrainConfig{};
  c.patience = 0;
  EXPECT_THROW(c.validate(), std::invalid_argument);
  c = TrainConfig{};
  c.runs = 0;
  EXPECT_THROW(c.validate(), std::invalid_argument);
}

TEST(TrainConfig, NoILossZeroesOnlyEta) {
  TrainConfig c;
  c.variant = Variant::no_iloss;
  LossWeights w = c.loss_weights();
  EXPECT_EQ(w.iloss, 0.0);
  EXPECT_EQ(w.acd, 1.0);
  EXPECT_EQ(w.acsa, 1.0);
  EXPECT_EQ(w.l2, 1e-5);
  c.variant = Variant::no_tree;
  EXPECT_EQ(c.loss_weights().iloss, 1.0);
}

TEST(EarlyStopper, StopsFifteenAfterLastImprovementAtFive) {
  EarlyStopper s(10);
  const std::vector<double> metric = {0.5, 0.6, 0.6, 0.55, 0.7};
  int stopped_at = 0;
  for (int epoch = 1; epoch <= 100 && !stopped_at; ++epoch) {
    const double m = epoch <= 5 ? metric[static_cast<std::size_t>(epoch - 1)] : 0.1;
    const bool improved = s.update(epoch, m);
    EXPECT_EQ(improved, epoch == 1 || epoch == 2 || epoch == 5) << epoch;
    if (s.should_stop()) stopped_at = epoch;
  }
  EXPECT_EQ(stopped_at, 15);
  EXPECT_EQ(s.best_epoch(), 5);
}

TEST(EarlyStopper, NeverStopsBeforePatienceNonImprovingEpochs) {
  std::mt19937_64 rng(4);
  std::uniform_real_distribution<double> u(0.0, 1.0);
  for (int trial = 0; trial < 100; ++trial) {
    const int patience = 1 + static_cast<int>(rng() % 12);
    EarlyStopper s(patience);
    double best = -1.0;
    int since = 0;
    for (int epoch = 1; epoch <= 60; ++epoch) {
      const double m = std::floor(u(rng) * 10) / 10;
      s.update(epoch, m);
      if (m > best) {
        best = m;
        since = 0;
      } else {
        ++since;
      }
      ASSERT_EQ(s.should_stop(), since >= patience) << "trial " << trial << " epoch " << epoch;
      if (s.should_stop()) break;
    }
  }
}

TEST(Adam, MatchesHandComputedUpdates) {
  Parameter p("p", Matrix::Constant(1, 2, 1.0));
  p.zero_grad();
  Adam adam(0.1);
  p.grad << 0.5, -2.0;
  adam.step({&p});
  // First step: m̂ = g and v̂ = g², so each entry moves by lr·g/(|g| + ε).
  EXPECT_NEAR(p.value(0, 0), 1.0 - 0.1 * 0.5 / (0.5 + 1e-8), 1e-15);
  EXPECT_NEAR(p.value(0, 1), 1.0 + 0.1 * 2.0 / (2.0 + 1e-8), 1e-15);
  p.grad << 1.0, 0.0;
  const double before = p.value(0, 0);
  adam.step({&p});
  const double m = 0.9 * 0.05 + 0.1 * 1.0, v = 0.999 * 0.00025 + 0.001 * 1.0;
  const double m_hat = m / (1 - 0.81), v_hat = v / (1 - 0.999 * 0.999);
  EXPECT_NEAR(p.value(0, 0), before - 0.1 * m_hat / (std::sqrt(v_hat) + 1e-8), 1e-14);
  EXPECT_EQ(adam.steps(), 2u);
}

TEST(TrainOneRun, LossDecreasesOverFirstTenEpochs) {
  PreparedData d = toy_data();
  TrainConfig c;
  c.max_epochs = 10;
  c.patience = 100;
  RunResult r = train_one_run(c, d, initial_params(c, d, c.seed));
  ASSERT_EQ(r.history.size(), 10u);
  EXPECT_LT(r.history.back().train_loss, r.history.front().train_loss);
  for (std::size_t k = 1; k < r.history.size(); ++k) {
    EXPECT_LT(r.history[k].train_loss, r.history[k - 1].train_loss) << "epoch " << k + 1;
  }
}

TEST(TrainOneRun, IsBitwiseReproducible) {
  PreparedData d = toy_data();
  TrainConfig c = small_config();
  RunResult a = train_one_run(c, d, initial_params(c, d, c.seed));
  RunResult b = train_one_run(c, d, initial_params(c, d, c.seed));
  ASSERT_EQ(a.history.size(), b.history.size());
  for (std::size_t k = 0; k < a.history.size(); ++k) EXPECT_EQ(a.history[k].train_loss, b.history[k].train_loss);
  const auto pa = a.best.all();
  const auto pb = b.best.all();
  for (std::size_t i = 0; i < pa.size(); ++i) EXPECT_EQ(pa[i]->value, pb[i]->value);
}

TEST(TrainOneRun, WritesJsonlHistoryAndRespectsEpochCap) {
  PreparedData d = toy_data();
  TrainConfig c = small_config();
  c.patience = 50;
  const fs::path path = fs::temp_directory_path() / "scan_history.jsonl";
  int callbacks = 0;
  RunOptions options;
  options.history_path = path.string();
  options.on_epoch = [&](const EpochRecord&) { ++callbacks; };
  RunResult r = train_one_run(c, d, initial_params(c, d, c.seed), options);
  EXPECT_EQ(r.history.size(), 6u);
  EXPECT_FALSE(r.stopped_early);
  EXPECT_EQ(callbacks, 6);
  std::ifstream in(path);
  std::string line;
  int lines = 0;
  while (std::getline(in, line)) {
    auto j = nlohmann::json::parse(line);
    EXPECT_EQ(j.at("epoch").get<int>(), ++lines);
    EXPECT_TRUE(j.contains("train_loss"));
    EXPECT_TRUE(j.contains("dev_accuracy"));
  }
  EXPECT_EQ(lines, 6);
  fs::remove(path);
}

TEST(TrainOneRun, StopsEarlyWhenDevStalls) {
  PreparedData d = toy_data();
  TrainConfig c = small_config();
  c.learning_rate = 0.0;
  c.patience = 2;
  c.max_epochs = 50;
  RunResult r = train_one_run(c, d, initial_params(c, d, c.seed));
  EXPECT_TRUE(r.stopped_early);
  EXPECT_EQ(r.history.size(), 3u);
  EXPECT_EQ(r.best_epoch, 1);
}

TEST(TrainOneRun, NonFiniteLossIsDivergence) {
  PreparedData d = toy_data();
  TrainConfig c = small_config();
  ModelParams p = initial_params(c, d, c.seed);
  p.acsa_w2.value(0, 0) = std::numeric_limits<double>::quiet_NaN();
  EXPECT_THROW(train_one_run(c, d, p), TrainingError);
}

TEST(MultiRun, AggregatesSeededRuns) {
  PreparedData d = toy_data();
  TrainConfig c = small_config();
  c.runs = 2;
  c.max_epochs = 2;
  MultiRunResult serial = multi_run(c, d);
  ASSERT_EQ(serial.runs.size(), 2u);
  EXPECT_EQ(serial.runs[0].seed, 3u);
  EXPECT_EQ(serial.runs[1].seed, 4u);
  EXPECT_FALSE(serial.partial);
  EXPECT_DOUBLE_EQ(serial.mean, (serial.runs[0].test_accuracy + serial.runs[1].test_accuracy) / 2);
  c.threads = 2;
  MultiRunResult parallel = multi_run(c, d);
  for (std::size_t i = 0; i < 2; ++i) EXPECT_EQ(parallel.runs[i].test_accuracy, serial.runs[i].test_accuracy);
}

TEST(MultiRun, SingleRunMeanEqualsTheRun) {
  PreparedData d = toy_data();
  TrainConfig c = small_config();
  c.runs = 1;
  c.max_epochs = 1;
  const fs::path dir = fs::temp_directory_path() / "scan_multi_run";
  fs::remove_all(dir);
  MultiRunResult r = multi_run(c, d, {.out_dir = dir.string(), .dataset_tag = "toy"});
  EXPECT_EQ(r.mean, r.runs[0].test_accuracy);
  EXPECT_EQ(r.stddev, 0.0);
  EXPECT_TRUE(fs::exists(dir / "run_0" / "history.jsonl"));
  EXPECT_TRUE(fs::exists(dir / "run_0" / "best.ckpt"));
  EXPECT_TRUE(fs::exists(dir / "run_0" / "config.resolved.txt"));
  fs::remove_all(dir);
}

TEST(MultiRun, Statistics) {
  EXPECT_DOUBLE_EQ(mean_of({0.7, 0.8}), 0.75);
  EXPECT_NEAR(stddev_of({0.7, 0.8}), 0.05, 1e-15);
  EXPECT_THROW(mean_of({}), std::invalid_argument);
}

TEST(OverfitProbe, FullModelReachesPerfectTrainAccuracy) {
  ProbeResult r = overfit_probe(TrainConfig{}, toy_data());
  EXPECT_TRUE(r.passed);
  EXPECT_LE(r.epochs, 300);
  EXPECT_EQ(r.final_accuracy, 1.0);
}

TEST(OverfitProbe, ZeroLearningRateFails) {
  TrainConfig c;
  c.learning_rate = 0.0;
  ProbeResult r = overfit_probe(c, toy_data(), 30);
  EXPECT_FALSE(r.passed);
}

TEST(OverfitProbe, NoTreeVariantAlsoPasses) {
  TrainConfig c;
  c.variant = Variant::no_tree;
  EXPECT_TRUE(overfit_probe(c, toy_data()).passed);
}

}  // namespace
}  // namespace scan
