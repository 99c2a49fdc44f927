#pragma once

#include <cstdint>
#include <filesystem>
#include <memory>
#include <string>
#include <utility>
#include <vector>

#include "core/image.hpp"

namespace fsr {

// Immutable once built; splits and merges share the underlying samples.
class Dataset {
 public:
  Dataset() = default;
  Dataset(std::string name, int side) : name_(std::move(name)), side_(side) {}

  void add(std::shared_ptr<const ImageSample> sample);

  std::size_t size() const { return samples_.size(); }
  bool empty() const { return samples_.empty(); }
  int side() const { return side_; }
  const std::string& name() const { return name_; }
  void set_name(std::string name) { name_ = std::move(name); }

  const ImageSample& sample(std::size_t i) const { return *samples_[i]; }
  const std::shared_ptr<const ImageSample>& sample_ptr(std::size_t i) const { return samples_[i]; }
  std::size_t class_count(int label) const { return label == 1 ? cracked_ : uncracked_; }

 private:
  std::string name_;
  int side_ = 0;
  std::vector<std::shared_ptr<const ImageSample>> samples_;
  std::size_t cracked_ = 0, uncracked_ = 0;
};

struct SplitSpec {
  double train_fraction = 0.8;
  std::uint64_t seed = 0;
};

struct LoadStats {
  std::size_t loaded = 0;
  std::size_t skipped = 0;
};

// Reads ROOT/cracked/*.png and ROOT/uncracked/*.png in lexicographic
// file order, resized to side x side. Unreadable files are skipped with
// a warning; an empty class directory is an error.
Dataset load_dataset(const std::filesystem::path& root, int side, LoadStats* stats = nullptr);

// Stratified split: within each class, a splitmix64-driven Fisher-Yates
// shuffle, then the first floor(fraction*n) samples go to train.
std::pair<Dataset, Dataset> split_dataset(const Dataset& ds, const SplitSpec& spec);

// Concatenation, source first; sides must match.
Dataset merge_datasets(const Dataset& source_train, const Dataset& target_train);

// PNG directory layout plus manifest.json.
void write_dataset(const Dataset& ds, const std::filesystem::path& root);
// Manifest only (name, side, per-class counts, ordered source ids).
void write_manifest(const Dataset& ds, const std::filesystem::path& root);

}  // namespace fsr
