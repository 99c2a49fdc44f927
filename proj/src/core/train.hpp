#pragma once

#include <cstdint>
#include <filesystem>
#include <optional>
#include <string>
#include <utility>
#include <vector>

#include "core/augment.hpp"
#include "core/dataset.hpp"
#include "core/model.hpp"
#include "core/sgd.hpp"

namespace fsr {

// The three experiment families: source-only pretraining, target-only
// training from scratch, and transfer via dataset merging (fresh weights
// or continued from a checkpoint).
enum class RunModeKind { Pretrain, Scratch, TransferMerge, TransferFinetune };

RunModeKind run_mode_from_string(const std::string& s);
std::string to_string(RunModeKind mode);

// Wall is real elapsed time; Virtual substitutes a deterministic stand-in
// so runs can be compared byte-for-byte.
enum class TimingMode { Wall, Virtual };

struct TrainConfig {
  ModelSpec model;
  int epochs = 10;
  int batch_size = 64;
  double learning_rate = 0.01;
  double momentum = 0.9;
  std::optional<AugmentationPolicy> augmentation;
  std::uint64_t seed = 0;
  RunModeKind mode = RunModeKind::Pretrain;
  TimingMode timing = TimingMode::Wall;
  std::filesystem::path checkpoint_in;
  std::filesystem::path checkpoint_out;

  void validate() const;
};

struct EpochRecord {
  int epoch = 0;  // 1-based
  double test_accuracy = 0.0;
  double train_loss = 0.0;
  double epoch_seconds = 0.0;  // training only, evaluation excluded
};

struct ExperimentResult {
  std::string model;  // display name, e.g. "LeNet5"
  std::string mode;
  bool augmented = false;
  std::vector<EpochRecord> records;
  double best_accuracy = 0.0;
  int best_epoch = 0;
};

struct ExperimentDatasets {
  const Dataset* source_train = nullptr;
  const Dataset* source_test = nullptr;
  const Dataset* target_train = nullptr;
  const Dataset* target_test = nullptr;
};

// Samples fetched by index (augmented when a policy is given), resized
// to the model side, packed planar [N,3,S,S]; labels side by side.
Tensor assemble_batch(const Dataset& ds, const std::vector<std::size_t>& indices, int model_side,
                      const AugmentationPolicy* policy, int epoch_index, std::vector<int>& labels);

// One seed-deterministic shuffled pass; returns (mean loss, seconds).
std::pair<double, double> train_epoch(Network& net, const Dataset& train, const TrainConfig& cfg,
                                      int epoch_index, SgdState& opt);

// 100 * correct / total. The evaluation path has no augmentation hook.
double evaluate_accuracy(Network& net, const Dataset& test);

ExperimentResult run_experiment(const TrainConfig& cfg, const ExperimentDatasets& data);

}  // namespace fsr
