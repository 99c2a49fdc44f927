#include "core/train.hpp"

#include <chrono>
#include <stdexcept>
#include <unordered_set>

#include "core/checkpoint.hpp"
#include "core/ops.hpp"
#include "core/rng.hpp"

namespace fsr {

RunModeKind run_mode_from_string(const std::string& s) {
  if (s == "pretrain") return RunModeKind::Pretrain;
  if (s == "scratch") return RunModeKind::Scratch;
  if (s == "transfer_merge") return RunModeKind::TransferMerge;
  if (s == "transfer_finetune") return RunModeKind::TransferFinetune;
  throw std::invalid_argument("unknown run mode: " + s);
}

std::string to_string(RunModeKind mode) {
  switch (mode) {
    case RunModeKind::Pretrain: return "pretrain";
    case RunModeKind::Scratch: return "scratch";
    case RunModeKind::TransferMerge: return "transfer_merge";
    case RunModeKind::TransferFinetune: return "transfer_finetune";
  }
  throw std::logic_error("bad run mode");
}

void TrainConfig::validate() const {
  model.validate();
  if (epochs < 1) throw std::invalid_argument("train: epochs must be >= 1");
  if (batch_size < 1) throw std::invalid_argument("train: batch size must be >= 1");
  if (learning_rate < 0.0) throw std::invalid_argument("train: learning rate must be non-negative");
  if (momentum < 0.0 || momentum >= 1.0) throw std::invalid_argument("train: momentum must be in [0,1)");
  if (augmentation) augmentation->validate();
  if (mode == RunModeKind::TransferFinetune && checkpoint_in.empty())
    throw std::invalid_argument("train: transfer_finetune requires an input checkpoint");
}

Tensor assemble_batch(const Dataset& ds, const std::vector<std::size_t>& indices, int model_side,
                      const AugmentationPolicy* policy, int epoch_index, std::vector<int>& labels) {
  const int n = static_cast<int>(indices.size());
  Tensor batch(Shape{n, 3, model_side, model_side});
  labels.resize(indices.size());
  const std::size_t plane = static_cast<std::size_t>(model_side) * model_side;
  for (int b = 0; b < n; ++b) {
    const std::size_t idx = indices[static_cast<std::size_t>(b)];
    const ImageSample* s = &ds.sample(idx);
    ImageSample augmented;
    if (policy && policy->any_enabled()) {
      SplitMix64 draw = augmentation_stream(*policy, idx, epoch_index);
      augmented = augment_sample(*s, *policy, draw);
      s = &augmented;
    }
    labels[static_cast<std::size_t>(b)] = s->label;
    double* dst = batch.data() + static_cast<std::size_t>(b) * 3 * plane;
    if (s->side == model_side) {
      for (std::size_t p = 0; p < plane; ++p)
        for (int c = 0; c < 3; ++c) dst[c * plane + p] = s->pixels[p * 3 + c] / 255.0;
    } else {
      const FloatImage resized = resize_bilinear(to_float(*s), model_side, model_side);
      for (std::size_t p = 0; p < plane; ++p)
        for (int c = 0; c < 3; ++c) dst[c * plane + p] = resized.rgb[p * 3 + c];
    }
  }
  return batch;
}

std::pair<double, double> train_epoch(Network& net, const Dataset& train, const TrainConfig& cfg,
                                      int epoch_index, SgdState& opt) {
  if (train.empty()) throw std::invalid_argument("train_epoch: empty dataset");
  const int side = net.spec().resolved_side();
  const AugmentationPolicy* policy =
      cfg.augmentation && cfg.augmentation->any_enabled() ? &*cfg.augmentation : nullptr;

  std::vector<std::size_t> order(train.size());
  for (std::size_t i = 0; i < order.size(); ++i) order[i] = i;
  SplitMix64 shuffle(mix_seed(cfg.seed, 0xe70c5ULL, static_cast<std::uint64_t>(epoch_index)));
  for (std::size_t i = order.size() - 1; i > 0; --i)
    std::swap(order[i], order[shuffle.next_below(i + 1)]);

  const auto start = std::chrono::steady_clock::now();
  double total_loss = 0.0;
  std::size_t batches = 0;
  std::vector<int> labels;
  for (std::size_t at = 0; at < order.size(); at += static_cast<std::size_t>(cfg.batch_size)) {
    const std::size_t end = std::min(order.size(), at + static_cast<std::size_t>(cfg.batch_size));
    const std::vector<std::size_t> chunk(order.begin() + static_cast<std::ptrdiff_t>(at),
                                         order.begin() + static_cast<std::ptrdiff_t>(end));
    Tensor batch = assemble_batch(train, chunk, side, policy, epoch_index, labels);

    Tape tape;
    Tensor logits = net.forward(batch, &tape, RunMode::Train);
    Tensor loss = cross_entropy_loss(logits, labels, &tape);
    net.zero_grad();
    backward(loss, tape);
    opt.step();
    total_loss += loss.item() * static_cast<double>(chunk.size());
    ++batches;
  }
  const auto stop = std::chrono::steady_clock::now();
  // Virtual timing reports the batch count: positive, deterministic, and
  // proportional to the work done.
  const double seconds = cfg.timing == TimingMode::Virtual
                             ? static_cast<double>(batches)
                             : std::chrono::duration<double>(stop - start).count();
  return {total_loss / static_cast<double>(train.size()), seconds};
}

double evaluate_accuracy(Network& net, const Dataset& test) {
  if (test.empty()) throw std::invalid_argument("evaluate_accuracy: empty test set");
  const int side = net.spec().resolved_side();
  constexpr std::size_t kChunk = 64;
  std::size_t correct = 0;
  std::vector<int> labels;
  for (std::size_t at = 0; at < test.size(); at += kChunk) {
    const std::size_t end = std::min(test.size(), at + kChunk);
    std::vector<std::size_t> chunk;
    for (std::size_t i = at; i < end; ++i) chunk.push_back(i);
    Tensor batch = assemble_batch(test, chunk, side, nullptr, 0, labels);
    const auto [logits, preds] = net.forward_classify(batch);
    for (std::size_t i = 0; i < preds.size(); ++i)
      if (preds[i] == labels[i]) ++correct;
  }
  return 100.0 * static_cast<double>(correct) / static_cast<double>(test.size());
}

namespace {

const Dataset* require(const Dataset* ds, const char* what, RunModeKind mode) {
  if (!ds || ds->empty())
    throw std::invalid_argument(std::string("run_experiment: mode ") + to_string(mode) +
                                " needs a non-empty " + what + " dataset");
  return ds;
}

void check_disjoint(const Dataset& train, const Dataset& test) {
  std::unordered_set<std::string> test_ids;
  for (std::size_t i = 0; i < test.size(); ++i) test_ids.insert(test.sample(i).source_id);
  for (std::size_t i = 0; i < train.size(); ++i)
    if (test_ids.count(train.sample(i).source_id))
      throw std::invalid_argument("run_experiment: test sample '" + train.sample(i).source_id +
                                  "' leaked into the training set");
}

}  // namespace

ExperimentResult run_experiment(const TrainConfig& cfg, const ExperimentDatasets& data) {
  cfg.validate();

  Dataset merged;
  const Dataset* train = nullptr;
  const Dataset* test = nullptr;
  switch (cfg.mode) {
    case RunModeKind::Pretrain:
      train = require(data.source_train, "source train", cfg.mode);
      test = require(data.source_test, "source test", cfg.mode);
      break;
    case RunModeKind::Scratch:
      train = require(data.target_train, "target train", cfg.mode);
      test = require(data.target_test, "target test", cfg.mode);
      break;
    case RunModeKind::TransferMerge:
    case RunModeKind::TransferFinetune:
      merged = merge_datasets(*require(data.source_train, "source train", cfg.mode),
                              *require(data.target_train, "target train", cfg.mode));
      train = &merged;
      test = require(data.target_test, "target test", cfg.mode);
      break;
  }
  check_disjoint(*train, *test);

  Network net = build_model(cfg.model, cfg.seed);
  if (cfg.mode == RunModeKind::TransferFinetune) load_checkpoint(net, cfg.checkpoint_in);
  SgdState opt(net.trainable_params(), cfg.learning_rate, cfg.momentum);

  ExperimentResult result;
  result.model = display_name(cfg.model.kind);
  result.mode = to_string(cfg.mode);
  result.augmented = cfg.augmentation && cfg.augmentation->any_enabled();
  for (int epoch = 1; epoch <= cfg.epochs; ++epoch) {
    const auto [loss, seconds] = train_epoch(net, *train, cfg, epoch, opt);
    const double accuracy = evaluate_accuracy(net, *test);
    result.records.push_back({epoch, accuracy, loss, seconds});
    if (result.best_epoch == 0 || accuracy > result.best_accuracy) {
      result.best_accuracy = accuracy;
      result.best_epoch = epoch;
    }
  }
  if (!cfg.checkpoint_out.empty()) save_checkpoint(net, cfg.checkpoint_out);
  return result;
}

}  // namespace fsr
