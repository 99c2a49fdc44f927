#define DOCTEST_CONFIG_IMPLEMENT_WITH_MAIN
#include <doctest.h>

#include <cstring>
#include <filesystem>
#include <fstream>

#include "core/report.hpp"
#include "core/synth.hpp"
#include "core/train.hpp"

using fsr::CrackGenConfig;
using fsr::Dataset;
using fsr::ExperimentDatasets;
using fsr::ExperimentResult;
using fsr::ModelKind;
using fsr::Network;
using fsr::RunModeKind;
using fsr::TrainConfig;

namespace {

CrackGenConfig gen_cfg(std::uint64_t seed, int side = 32) {
  CrackGenConfig cfg;
  cfg.side = side;
  cfg.crack_walk_steps = side * 3 / 2;
  cfg.seed = seed;
  return cfg;
}

TrainConfig desk_lenet_cfg() {
  TrainConfig cfg;
  cfg.model.kind = ModelKind::LeNet5;
  cfg.model.scale = fsr::ScaleProfile::Desk;
  cfg.epochs = 2;
  cfg.batch_size = 16;
  cfg.seed = 5;
  cfg.timing = fsr::TimingMode::Virtual;
  return cfg;
}

std::vector<double> snapshot(const Network& net) {
  std::vector<double> out;
  for (const auto& e : net.state())
    out.insert(out.end(), e.tensor.values().begin(), e.tensor.values().end());
  return out;
}

std::string slurp(const std::filesystem::path& p) {
  std::ifstream f(p, std::ios::binary);
  REQUIRE(f.good());
  return std::string((std::istreambuf_iterator<char>(f)), std::istreambuf_iterator<char>());
}

}  // namespace

TEST_CASE("zero learning rate leaves parameters bit-identical") {
  Dataset ds = fsr::generate_dataset(gen_cfg(1), 8);
  TrainConfig cfg = desk_lenet_cfg();
  cfg.learning_rate = 0.0;
  Network net = fsr::build_model(cfg.model, 3);
  const std::vector<double> before = snapshot(net);
  fsr::SgdState opt(net.trainable_params(), cfg.learning_rate, cfg.momentum);
  fsr::train_epoch(net, ds, cfg, 1, opt);
  const std::vector<double> after = snapshot(net);
  CHECK(std::memcmp(before.data(), after.data(), before.size() * sizeof(double)) == 0);
}

TEST_CASE("batch count per epoch is ceil(N over batch size)") {
  Dataset ds = fsr::generate_dataset(gen_cfg(2), 5);  // 10 samples
  TrainConfig cfg = desk_lenet_cfg();
  cfg.batch_size = 4;
  Network net = fsr::build_model(cfg.model, 4);
  fsr::SgdState opt(net.trainable_params(), cfg.learning_rate, cfg.momentum);
  const auto [loss, batches] = fsr::train_epoch(net, ds, cfg, 1, opt);
  CHECK(batches == 3.0);  // virtual timing reports batches
  CHECK(loss > 0.0);

  Dataset empty("none", 32);
  CHECK_THROWS_AS(fsr::train_epoch(net, empty, cfg, 1, opt), std::invalid_argument);
}

TEST_CASE("a single sample is memorized within thirty epochs") {
  Dataset one("one", 32);
  one.add(std::make_shared<fsr::ImageSample>(fsr::generate_crack_image(gen_cfg(3), 1, 0)));
  TrainConfig cfg = desk_lenet_cfg();
  cfg.batch_size = 1;
  Network net = fsr::build_model(cfg.model, 6);
  fsr::SgdState opt(net.trainable_params(), cfg.learning_rate, cfg.momentum);
  std::vector<double> losses;
  for (int epoch = 1; epoch <= 30; ++epoch)
    losses.push_back(fsr::train_epoch(net, one, cfg, epoch, opt).first);
  for (int i = 1; i < 10; ++i) CHECK(losses[i] < losses[i - 1]);
  CHECK(losses.back() < 0.01);
}

TEST_CASE("accuracy arithmetic on perfect and constant predictors") {
  Dataset test = fsr::generate_dataset(gen_cfg(4), 12);
  TrainConfig cfg = desk_lenet_cfg();
  Network net = fsr::build_model(cfg.model, 7);
  // zeroed parameters give all-zero logits, argmax ties to class 0
  for (const auto& e : net.state()) {
    fsr::Tensor t = e.tensor;
    std::fill(t.values().begin(), t.values().end(), 0.0);
  }
  CHECK(fsr::evaluate_accuracy(net, test) == 50.0);

  Dataset empty("none", 32);
  CHECK_THROWS_AS(fsr::evaluate_accuracy(net, empty), std::invalid_argument);
}

TEST_CASE("run_experiment bookkeeping and reproducibility") {
  Dataset source = fsr::generate_dataset(gen_cfg(5), 24);
  auto [train, test] = fsr::split_dataset(source, fsr::SplitSpec{0.75, 9});
  ExperimentDatasets data;
  data.source_train = &train;
  data.source_test = &test;

  TrainConfig cfg = desk_lenet_cfg();
  cfg.epochs = 3;
  ExperimentResult a = fsr::run_experiment(cfg, data);
  CHECK(a.records.size() == 3);
  double best = 0.0;
  int best_epoch = 0;
  for (const auto& r : a.records)
    if (r.test_accuracy > best) {
      best = r.test_accuracy;
      best_epoch = r.epoch;
    }
  CHECK(a.best_accuracy == best);
  CHECK(a.best_epoch == best_epoch);
  for (const auto& r : a.records) CHECK(r.epoch_seconds > 0.0);

  ExperimentResult b = fsr::run_experiment(cfg, data);
  for (std::size_t i = 0; i < a.records.size(); ++i) {
    CHECK(a.records[i].test_accuracy == b.records[i].test_accuracy);
    CHECK(a.records[i].train_loss == b.records[i].train_loss);
  }
}

TEST_CASE("absent augmentation equals an all-disabled policy bit-exactly") {
  Dataset source = fsr::generate_dataset(gen_cfg(6), 16);
  auto [train, test] = fsr::split_dataset(source, fsr::SplitSpec{0.75, 2});
  ExperimentDatasets data;
  data.source_train = &train;
  data.source_test = &test;

  TrainConfig off = desk_lenet_cfg();
  off.augmentation.reset();
  TrainConfig disabled = desk_lenet_cfg();
  disabled.augmentation = fsr::AugmentationPolicy::disabled();

  ExperimentResult a = fsr::run_experiment(off, data);
  ExperimentResult b = fsr::run_experiment(disabled, data);
  CHECK(a.augmented == false);
  CHECK(b.augmented == false);
  for (std::size_t i = 0; i < a.records.size(); ++i) {
    CHECK(a.records[i].test_accuracy == b.records[i].test_accuracy);
    CHECK(a.records[i].train_loss == b.records[i].train_loss);
  }
}

TEST_CASE("augmentation only touches the training pass") {
  Dataset source = fsr::generate_dataset(gen_cfg(61), 16);
  auto [train, test] = fsr::split_dataset(source, fsr::SplitSpec{0.75, 3});
  ExperimentDatasets data;
  data.source_train = &train;
  data.source_test = &test;

  TrainConfig cfg = desk_lenet_cfg();
  cfg.augmentation = fsr::AugmentationPolicy{};
  cfg.augmentation->rng_seed = 11;
  ExperimentResult r = fsr::run_experiment(cfg, data);
  CHECK(r.augmented == true);
  CHECK(r.records.size() == 2);
}

TEST_CASE("transfer modes reject leaked test samples and missing inputs") {
  Dataset source = fsr::generate_dataset(gen_cfg(7), 8);
  CrackGenConfig soil = gen_cfg(8);
  soil.background = fsr::TextureFamily::Soil;
  Dataset target = fsr::generate_dataset(soil, 6, "soil");
  auto [t_train, t_test] = fsr::split_dataset(target, fsr::SplitSpec{0.7, 4});

  TrainConfig cfg = desk_lenet_cfg();
  cfg.mode = RunModeKind::TransferMerge;
  ExperimentDatasets data;
  data.source_train = &source;
  data.target_train = &t_train;
  data.target_test = &t_test;
  ExperimentResult r = fsr::run_experiment(cfg, data);
  CHECK(r.mode == "transfer_merge");

  // leak: evaluating on the very samples that were merged for training
  ExperimentDatasets leaky = data;
  leaky.target_test = &t_train;
  CHECK_THROWS_AS(fsr::run_experiment(cfg, leaky), std::invalid_argument);

  ExperimentDatasets missing;
  missing.source_train = &source;
  CHECK_THROWS_AS(fsr::run_experiment(cfg, missing), std::invalid_argument);

  TrainConfig finetune = cfg;
  finetune.mode = RunModeKind::TransferFinetune;
  CHECK_THROWS_AS(fsr::run_experiment(finetune, data), std::invalid_argument);  // no checkpoint
}

TEST_CASE("finetune continues from a checkpoint") {
  const auto dir = std::filesystem::temp_directory_path() / "fsr_train_ckpt";
  std::filesystem::create_directories(dir);

  Dataset source = fsr::generate_dataset(gen_cfg(9), 10);
  auto [s_train, s_test] = fsr::split_dataset(source, fsr::SplitSpec{0.8, 5});
  CrackGenConfig soil = gen_cfg(10);
  soil.background = fsr::TextureFamily::Soil;
  Dataset target = fsr::generate_dataset(soil, 5, "soil");
  auto [t_train, t_test] = fsr::split_dataset(target, fsr::SplitSpec{0.6, 6});

  TrainConfig pre = desk_lenet_cfg();
  pre.epochs = 1;
  pre.checkpoint_out = dir / "pre.fsr";
  ExperimentDatasets pre_data;
  pre_data.source_train = &s_train;
  pre_data.source_test = &s_test;
  fsr::run_experiment(pre, pre_data);
  CHECK(std::filesystem::exists(pre.checkpoint_out));

  TrainConfig fine = desk_lenet_cfg();
  fine.epochs = 1;
  fine.mode = RunModeKind::TransferFinetune;
  fine.checkpoint_in = pre.checkpoint_out;
  ExperimentDatasets fine_data;
  fine_data.source_train = &s_train;
  fine_data.target_train = &t_train;
  fine_data.target_test = &t_test;
  ExperimentResult r = fsr::run_experiment(fine, fine_data);
  CHECK(r.mode == "transfer_finetune");
  CHECK(r.records.size() == 1);

  std::filesystem::remove_all(dir);
}

TEST_CASE("reports round-trip and regenerate byte-identically") {
  const auto dir = std::filesystem::temp_directory_path() / "fsr_report_test";
  std::filesystem::remove_all(dir);

  std::vector<ExperimentResult> results(2);
  results[0].model = "LeNet5";
  results[0].mode = "pretrain";
  results[0].records = {{1, 98.6, 0.693147180559945, 1.34},
                        {2, 98.812, 0.25, 1.33},
                        {3, 98.912, 0.125, 1.33}};
  results[0].best_accuracy = 98.912;
  results[0].best_epoch = 3;
  results[1].model = "AlexNet";
  results[1].mode = "pretrain";
  results[1].records = {{1, 99.312, 0.5, 3.4}, {2, 99.375, 0.25, 3.32}, {3, 99.575, 0.1, 3.32}};
  results[1].best_accuracy = 99.575;
  results[1].best_epoch = 3;

  nlohmann::ordered_json echo;
  echo["train"] = {{"epochs", 3}};
  fsr::emit_report(results, echo, dir);

  const auto rows = fsr::parse_records_csv(dir / "records.csv");
  REQUIRE(rows.size() == 6);
  CHECK(rows[0].model == "LeNet5");
  CHECK(rows[0].accuracy == "98.600");  // three decimals, paper style
  CHECK(rows[0].seconds == "1.34");
  CHECK(std::stod(rows[0].loss) == 0.693147180559945);  // full precision round trip

  const std::string pivot_acc = slurp(dir / "pivot_accuracy.csv");
  CHECK(pivot_acc.substr(0, pivot_acc.find('\n')) == "epoch,LeNet5,AlexNet");
  CHECK(std::count(pivot_acc.begin(), pivot_acc.end(), '\n') == 4);  // header + 3 epochs

  const std::string pivot_sec = slurp(dir / "pivot_seconds.csv");
  fsr::regenerate_pivots(dir);
  CHECK(slurp(dir / "pivot_accuracy.csv") == pivot_acc);
  CHECK(slurp(dir / "pivot_seconds.csv") == pivot_sec);

  const std::string summary = slurp(dir / "summary.json");
  nlohmann::json doc = nlohmann::json::parse(summary);
  CHECK(doc["results"][0]["best_accuracy"] == 98.912);
  CHECK(doc["config"]["train"]["epochs"] == 3);

  CHECK_THROWS_AS(fsr::emit_report({}, echo, dir), std::invalid_argument);
  results[1].records.pop_back();
  CHECK_THROWS_AS(fsr::emit_report(results, echo, dir), std::invalid_argument);

  std::filesystem::remove_all(dir);
}

TEST_CASE("mixed-mode reports qualify duplicate model columns") {
  const auto dir = std::filesystem::temp_directory_path() / "fsr_report_modes";
  std::filesystem::remove_all(dir);

  std::vector<ExperimentResult> results(2);
  results[0].model = "LeNet5";
  results[0].mode = "scratch";
  results[0].records = {{1, 72.36, 1.0, 0.5}};
  results[0].best_accuracy = 72.36;
  results[0].best_epoch = 1;
  results[1].model = "LeNet5";
  results[1].mode = "transfer_merge";
  results[1].records = {{1, 96.101, 0.9, 5.0}};
  results[1].best_accuracy = 96.101;
  results[1].best_epoch = 1;

  fsr::emit_report(results, nlohmann::ordered_json::object(), dir);
  const std::string pivot = slurp(dir / "pivot_accuracy.csv");
  CHECK(pivot.substr(0, pivot.find('\n')) == "epoch,LeNet5:scratch,LeNet5:transfer_merge");
  std::filesystem::remove_all(dir);
}

TEST_CASE("synthetic corpora are learnable") {
  // 100 per class at side 32, held-out 20 per class
  Dataset all = fsr::generate_dataset(gen_cfg(42), 120);
  auto [train, test] = fsr::split_dataset(all, fsr::SplitSpec{100.0 / 120.0, 7});
  REQUIRE(train.size() == 200);
  REQUIRE(test.size() == 40);

  TrainConfig cfg = desk_lenet_cfg();
  cfg.epochs = 50;
  cfg.batch_size = 32;
  cfg.seed = 12;
  ExperimentDatasets data;
  data.source_train = &train;
  data.source_test = &test;

  double best = 0.0;
  Network net = fsr::build_model(cfg.model, cfg.seed);
  fsr::SgdState opt(net.trainable_params(), cfg.learning_rate, cfg.momentum);
  for (int epoch = 1; epoch <= cfg.epochs && best < 95.0; ++epoch) {
    fsr::train_epoch(net, train, cfg, epoch, opt);
    best = std::max(best, fsr::evaluate_accuracy(net, test));
  }
  CHECK(best >= 95.0);
}
