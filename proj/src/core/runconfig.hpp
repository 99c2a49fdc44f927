#pragma once

#include <cstdint>
#include <filesystem>
#include <stdexcept>
#include <string>
#include <vector>

#include <json.hpp>

#include "core/augment.hpp"
#include "core/dataset.hpp"
#include "core/model.hpp"
#include "core/synth.hpp"
#include "core/train.hpp"

namespace fsr {

// Configuration problems (parse failures, unknown keys, bad values).
// Distinct from runtime failures so callers can exit 2 vs 1.
class ConfigError : public std::runtime_error {
 public:
  using std::runtime_error::runtime_error;
};

// Where one of the two corpora comes from: a directory on disk, the
// synthetic generator, or both (generate materializes to the root).
struct DataSourceConfig {
  bool present = false;
  std::filesystem::path root;
  bool has_generator = false;
  TextureFamily family = TextureFamily::Concrete;
  int n_per_class = 0;
  std::uint64_t gen_seed = 0;
  int walk_steps = 0;  // 0 keeps the generator default
  double width_min = 0.0, width_max = 0.0;
  double darkness = 0.0;
  double noise = -1.0;

  CrackGenConfig generator(int side) const;
};

// The declarative run document. Unknown keys are rejected with their
// full path; the resolved form is echoed into summary.json.
struct RunConfig {
  std::string run_id;
  RunModeKind mode = RunModeKind::Pretrain;
  std::filesystem::path output_dir = "results";

  int side = 64;
  DataSourceConfig source, target;
  SplitSpec split{0.8, 20};

  std::vector<ModelKind> kinds{ModelKind::LeNet5};
  ScaleProfile scale = ScaleProfile::Desk;
  int num_classes = 2;
  int input_channels = 3;
  int input_side = 0;

  int epochs = 10;
  int batch_size = 64;
  double learning_rate = 0.01;
  double momentum = 0.9;
  std::uint64_t train_seed = 1;
  TimingMode timing = TimingMode::Wall;
  std::filesystem::path checkpoint_in;
  bool save_checkpoints = false;

  bool augmentation_enabled = false;
  AugmentationPolicy policy;

  nlohmann::ordered_json echo;  // fully resolved document

  std::string derived_run_id(RunModeKind effective_mode, bool sweep) const;
};

// `base_dir` anchors every relative path in the document.
RunConfig parse_run_config(const std::string& json_text, const std::filesystem::path& base_dir);
RunConfig load_run_config(const std::filesystem::path& path);

// Applies one "dotted.key=value" assignment; the value is parsed as JSON
// when possible, otherwise taken as a string.
void apply_override(nlohmann::ordered_json& doc, const std::string& assignment);

RunConfig parse_run_config_with_overrides(const std::string& json_text,
                                          const std::filesystem::path& base_dir,
                                          const std::vector<std::string>& overrides);

}  // namespace fsr
