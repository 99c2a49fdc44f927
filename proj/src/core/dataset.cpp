#include "core/dataset.hpp"

#include <algorithm>
#include <cmath>
#include <cstdio>
#include <fstream>
#include <stdexcept>

#include <json.hpp>

#include "core/rng.hpp"

namespace fsr {

void Dataset::add(std::shared_ptr<const ImageSample> sample) {
  if (sample->side != side_)
    throw std::invalid_argument("dataset " + name_ + ": sample side " + std::to_string(sample->side) +
                                " does not match declared side " + std::to_string(side_));
  if (sample->label == 1)
    ++cracked_;
  else
    ++uncracked_;
  samples_.push_back(std::move(sample));
}

Dataset load_dataset(const std::filesystem::path& root, int side, LoadStats* stats) {
  Dataset ds(root.filename().string(), side);
  LoadStats local;
  for (const auto& [dirname, label] : {std::pair<const char*, int>{"cracked", 1}, {"uncracked", 0}}) {
    const std::filesystem::path dir = root / dirname;
    if (!std::filesystem::is_directory(dir))
      throw std::runtime_error("dataset: missing class directory " + dir.string());
    std::vector<std::filesystem::path> files;
    for (const auto& entry : std::filesystem::directory_iterator(dir))
      if (entry.is_regular_file() && entry.path().extension() == ".png") files.push_back(entry.path());
    std::sort(files.begin(), files.end(),
              [](const auto& a, const auto& b) { return a.filename().string() < b.filename().string(); });
    std::size_t ok = 0;
    for (const auto& file : files) {
      const std::string id = std::string(dirname) + "/" + file.filename().string();
      try {
        ds.add(std::make_shared<ImageSample>(read_png(file, side, label, id)));
        ++ok;
      } catch (const std::exception& e) {
        ++local.skipped;
        std::fprintf(stderr, "warning: skipping %s (%s)\n", file.string().c_str(), e.what());
      }
    }
    if (ok == 0) throw std::runtime_error("dataset: no readable images in " + dir.string());
    local.loaded += ok;
  }
  if (stats) *stats = local;
  return ds;
}

std::pair<Dataset, Dataset> split_dataset(const Dataset& ds, const SplitSpec& spec) {
  if (spec.train_fraction <= 0.0 || spec.train_fraction >= 1.0)
    throw std::invalid_argument("split: train fraction must be in (0,1)");

  Dataset train(ds.name() + "-train", ds.side());
  Dataset test(ds.name() + "-test", ds.side());
  for (int label : {1, 0}) {
    std::vector<std::size_t> indices;
    for (std::size_t i = 0; i < ds.size(); ++i)
      if (ds.sample(i).label == label) indices.push_back(i);
    if (indices.size() < 2)
      throw std::invalid_argument("split: class " + std::to_string(label) +
                                  " needs at least 2 samples, has " +
                                  std::to_string(indices.size()));

    SplitMix64 stream(mix_seed(spec.seed, static_cast<std::uint64_t>(label) + 1));
    for (std::size_t i = indices.size() - 1; i > 0; --i) {
      const std::size_t j = stream.next_below(i + 1);
      std::swap(indices[i], indices[j]);
    }
    const std::size_t take =
        static_cast<std::size_t>(std::floor(spec.train_fraction * static_cast<double>(indices.size())));
    if (take == 0 || take == indices.size())
      throw std::invalid_argument("split: fraction " + std::to_string(spec.train_fraction) +
                                  " leaves an empty side for class " + std::to_string(label));
    for (std::size_t i = 0; i < indices.size(); ++i)
      (i < take ? train : test).add(ds.sample_ptr(indices[i]));
  }
  return {std::move(train), std::move(test)};
}

Dataset merge_datasets(const Dataset& source_train, const Dataset& target_train) {
  if (!target_train.empty() && source_train.side() != target_train.side())
    throw std::invalid_argument("merge: side mismatch (" + std::to_string(source_train.side()) +
                                " vs " + std::to_string(target_train.side()) + ")");
  Dataset merged(source_train.name() + "+" + target_train.name(), source_train.side());
  for (std::size_t i = 0; i < source_train.size(); ++i) merged.add(source_train.sample_ptr(i));
  for (std::size_t i = 0; i < target_train.size(); ++i) merged.add(target_train.sample_ptr(i));
  return merged;
}

void write_manifest(const Dataset& ds, const std::filesystem::path& root) {
  nlohmann::ordered_json doc;
  doc["name"] = ds.name();
  doc["side"] = ds.side();
  doc["counts"] = {{"cracked", ds.class_count(1)}, {"uncracked", ds.class_count(0)}};
  nlohmann::ordered_json ids = nlohmann::ordered_json::array();
  for (std::size_t i = 0; i < ds.size(); ++i) ids.push_back(ds.sample(i).source_id);
  doc["samples"] = std::move(ids);

  std::filesystem::create_directories(root);
  const std::filesystem::path tmp = root / "manifest.json.tmp";
  {
    std::ofstream f(tmp, std::ios::trunc);
    if (!f) throw std::runtime_error("dataset: cannot write manifest in " + root.string());
    f << doc.dump(2) << '\n';
  }
  std::filesystem::rename(tmp, root / "manifest.json");
}

void write_dataset(const Dataset& ds, const std::filesystem::path& root) {
  std::filesystem::create_directories(root / "cracked");
  std::filesystem::create_directories(root / "uncracked");
  for (std::size_t i = 0; i < ds.size(); ++i) {
    const ImageSample& s = ds.sample(i);
    std::filesystem::path rel = s.source_id;
    if (!rel.has_parent_path()) rel = (s.label == 1 ? "cracked" : "uncracked") / rel;
    if (rel.extension() != ".png") rel += ".png";
    write_png(s, root / rel);
  }
  write_manifest(ds, root);
}

}  // namespace fsr
