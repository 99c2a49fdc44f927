#define DOCTEST_CONFIG_IMPLEMENT_WITH_MAIN
#include <doctest.h>

#include <filesystem>
#include <fstream>
#include <set>

#include <json.hpp>

#include "core/augment.hpp"
#include "core/dataset.hpp"
#include "core/synth.hpp"

using fsr::AugmentationPolicy;
using fsr::CrackGenConfig;
using fsr::Dataset;
using fsr::ImageSample;
using fsr::SplitSpec;

namespace {

std::filesystem::path fresh_dir(const std::string& name) {
  const auto dir = std::filesystem::temp_directory_path() / name;
  std::filesystem::remove_all(dir);
  std::filesystem::create_directories(dir);
  return dir;
}

CrackGenConfig small_cfg(std::uint64_t seed = 1) {
  CrackGenConfig cfg;
  cfg.side = 32;
  cfg.crack_walk_steps = 48;
  cfg.seed = seed;
  return cfg;
}

std::vector<std::string> ids(const Dataset& ds) {
  std::vector<std::string> out;
  for (std::size_t i = 0; i < ds.size(); ++i) out.push_back(ds.sample(i).source_id);
  return out;
}

}  // namespace

TEST_CASE("load_dataset counts classes and orders files lexicographically") {
  const auto root = fresh_dir("fsr_load_test");
  const CrackGenConfig cfg = small_cfg();
  for (int i = 0; i < 3; ++i)
    fsr::write_png(fsr::generate_crack_image(cfg, 1, i),
                   root / "cracked" / ("img_" + std::to_string(i) + ".png"));
  for (int i = 0; i < 2; ++i)
    fsr::write_png(fsr::generate_crack_image(cfg, 0, i),
                   root / "uncracked" / ("img_" + std::to_string(i) + ".png"));

  fsr::LoadStats stats;
  Dataset ds = fsr::load_dataset(root, 32, &stats);
  CHECK(ds.size() == 5);
  CHECK(ds.class_count(1) == 3);
  CHECK(ds.class_count(0) == 2);
  CHECK(stats.loaded == 5);
  CHECK(stats.skipped == 0);
  CHECK(ds.sample(0).source_id == "cracked/img_0.png");

  Dataset again = fsr::load_dataset(root, 32);
  CHECK(ids(ds) == ids(again));

  // PNG round trip is bit exact at the native side
  ImageSample orig = fsr::generate_crack_image(cfg, 1, 0);
  CHECK(ds.sample(0).pixels == orig.pixels);

  std::filesystem::remove_all(root);
}

TEST_CASE("load_dataset skips corrupt files and rejects empty classes") {
  const auto root = fresh_dir("fsr_load_bad");
  const CrackGenConfig cfg = small_cfg();
  fsr::write_png(fsr::generate_crack_image(cfg, 1, 0), root / "cracked" / "ok.png");
  fsr::write_png(fsr::generate_crack_image(cfg, 0, 0), root / "uncracked" / "ok.png");
  std::ofstream(root / "cracked" / "broken.png") << "not a png";

  fsr::LoadStats stats;
  Dataset ds = fsr::load_dataset(root, 32, &stats);
  CHECK(ds.size() == 2);
  CHECK(stats.skipped == 1);

  const auto empty_root = fresh_dir("fsr_load_empty");
  std::filesystem::create_directories(empty_root / "cracked");
  std::filesystem::create_directories(empty_root / "uncracked");
  fsr::write_png(fsr::generate_crack_image(cfg, 1, 0), empty_root / "cracked" / "a.png");
  CHECK_THROWS_AS(fsr::load_dataset(empty_root, 32), std::runtime_error);

  std::filesystem::remove_all(root);
  std::filesystem::remove_all(empty_root);
}

TEST_CASE("split arithmetic matches the stated counts") {
  CrackGenConfig cfg = small_cfg(7);
  Dataset ds = fsr::generate_dataset(cfg, 200);
  REQUIRE(ds.size() == 400);

  auto [train, test] = fsr::split_dataset(ds, SplitSpec{0.8, 42});
  CHECK(train.size() == 320);
  CHECK(test.size() == 80);
  CHECK(train.class_count(1) == 160);
  CHECK(train.class_count(0) == 160);
  CHECK(test.class_count(1) == 40);
  CHECK(test.class_count(0) == 40);

  Dataset tiny = fsr::generate_dataset(cfg, 5);
  auto [tr5, te5] = fsr::split_dataset(tiny, SplitSpec{0.8, 1});
  CHECK(tr5.class_count(1) == 4);
  CHECK(tr5.class_count(0) == 4);
  CHECK(te5.class_count(1) == 1);
  CHECK(te5.class_count(0) == 1);
}

TEST_CASE("split rejects degenerate inputs") {
  CrackGenConfig cfg = small_cfg(9);
  Dataset one_class("one", 32);
  for (int i = 0; i < 10; ++i)
    one_class.add(std::make_shared<ImageSample>(fsr::generate_crack_image(cfg, 1, i)));
  CHECK_THROWS_AS(fsr::split_dataset(one_class, SplitSpec{0.8, 1}), std::invalid_argument);

  Dataset ds = fsr::generate_dataset(cfg, 4);
  CHECK_THROWS_AS(fsr::split_dataset(ds, SplitSpec{0.1, 1}), std::invalid_argument);  // empty train
  CHECK_THROWS_AS(fsr::split_dataset(ds, SplitSpec{1.0, 1}), std::invalid_argument);
}

TEST_CASE("split partition property over random balanced sizes") {
  fsr::SplitMix64 rng(2024);
  for (int trial = 0; trial < 12; ++trial) {
    const int per_class = 2 + static_cast<int>(rng.next_below(999));  // 4..2000 total
    CrackGenConfig cfg = small_cfg(trial);
    cfg.side = 16;
    cfg.crack_walk_steps = 24;
    Dataset ds = fsr::generate_dataset(cfg, per_class);
    const double fraction = 0.8;
    auto [train, test] = fsr::split_dataset(ds, SplitSpec{fraction, rng.next_u64()});

    CHECK(train.size() + test.size() == ds.size());
    std::set<std::string> train_ids, test_ids;
    for (std::size_t i = 0; i < train.size(); ++i) train_ids.insert(train.sample(i).source_id);
    for (std::size_t i = 0; i < test.size(); ++i) test_ids.insert(test.sample(i).source_id);
    CHECK(train_ids.size() == train.size());
    for (const auto& id : test_ids) CHECK(train_ids.count(id) == 0);

    for (int label : {0, 1}) {
      const double got = static_cast<double>(train.class_count(label));
      CHECK(std::abs(got - fraction * per_class) < 1.0);  // within one sample
    }
  }
}

TEST_CASE("merge concatenates source first and adds class counts") {
  CrackGenConfig a = small_cfg(11);
  CrackGenConfig b = small_cfg(12);
  b.background = fsr::TextureFamily::Soil;
  Dataset source = fsr::generate_dataset(a, 8);
  Dataset target = fsr::generate_dataset(b, 2, "soil");

  Dataset merged = fsr::merge_datasets(source, target);
  CHECK(merged.size() == 20);
  CHECK(merged.class_count(1) == source.class_count(1) + target.class_count(1));
  CHECK(merged.class_count(0) == source.class_count(0) + target.class_count(0));
  CHECK(merged.sample(0).source_id == source.sample(0).source_id);
  CHECK(merged.sample(16).source_id == target.sample(0).source_id);

  Dataset empty("empty", 32);
  Dataset same = fsr::merge_datasets(source, empty);
  CHECK(ids(same) == ids(source));

  CrackGenConfig other = small_cfg(13);
  other.side = 64;
  CHECK_THROWS_AS(fsr::merge_datasets(source, fsr::generate_dataset(other, 1)),
                  std::invalid_argument);
}

TEST_CASE("disabled augmentation is the identity") {
  const ImageSample s = fsr::generate_crack_image(small_cfg(21), 1, 0);
  AugmentationPolicy off = AugmentationPolicy::disabled();
  fsr::SplitMix64 draw(1);
  const ImageSample out = fsr::augment_sample(s, off, draw);
  CHECK(out.pixels == s.pixels);
  CHECK(out.label == s.label);
}

TEST_CASE("horizontal flip applied twice restores the image") {
  const ImageSample s = fsr::generate_crack_image(small_cfg(22), 1, 3);
  AugmentationPolicy p = AugmentationPolicy::disabled();
  p.hflip_enabled = true;
  p.hflip_prob = 1.0;
  fsr::SplitMix64 draw(5);
  const ImageSample once = fsr::augment_sample(s, p, draw);
  CHECK(once.pixels != s.pixels);
  const ImageSample twice = fsr::augment_sample(once, p, draw);
  CHECK(twice.pixels == s.pixels);
}

TEST_CASE("augmentation draws are reproducible from the stream triple") {
  const ImageSample s = fsr::generate_crack_image(small_cfg(23), 0, 7);
  AugmentationPolicy p;
  p.rng_seed = 99;

  auto d1 = fsr::augmentation_stream(p, 7, 3);
  auto d2 = fsr::augmentation_stream(p, 7, 3);
  const ImageSample a = fsr::augment_sample(s, p, d1);
  const ImageSample b = fsr::augment_sample(s, p, d2);
  CHECK(a.pixels == b.pixels);

  auto d3 = fsr::augmentation_stream(p, 7, 4);  // different epoch
  const ImageSample c = fsr::augment_sample(s, p, d3);
  CHECK(a.pixels != c.pixels);
}

TEST_CASE("augmentation preserves shape, label and value range") {
  const ImageSample s = fsr::generate_crack_image(small_cfg(24), 1, 1);
  AugmentationPolicy p;
  p.center_crop_enabled = true;  // exercise every transform
  p.rng_seed = 5;
  fsr::SplitMix64 draw(17);
  for (int i = 0; i < 10000; ++i) {
    const ImageSample out = fsr::augment_sample(s, p, draw);
    REQUIRE(out.side == s.side);
    REQUIRE(out.label == s.label);
    REQUIRE(out.pixels.size() == s.pixels.size());
  }
}

TEST_CASE("augmentation policies are validated") {
  AugmentationPolicy p;
  p.hflip_prob = 1.5;
  CHECK_THROWS_AS(p.validate(), std::invalid_argument);
  p = AugmentationPolicy{};
  p.scale_min = -0.1;
  CHECK_THROWS_AS(p.validate(), std::invalid_argument);
  p = AugmentationPolicy{};
  p.crop_fraction = 0.0;
  CHECK_THROWS_AS(p.validate(), std::invalid_argument);
}

TEST_CASE("written datasets carry an auditable manifest") {
  const auto root = fresh_dir("fsr_manifest_test");
  Dataset ds = fsr::generate_dataset(small_cfg(31), 3);
  fsr::write_dataset(ds, root);

  std::ifstream f(root / "manifest.json");
  REQUIRE(f.good());
  nlohmann::json doc = nlohmann::json::parse(f);
  CHECK(doc["side"] == 32);
  CHECK(doc["counts"]["cracked"] == 3);
  CHECK(doc["counts"]["uncracked"] == 3);
  REQUIRE(doc["samples"].size() == 6);
  CHECK(doc["samples"][0] == ds.sample(0).source_id);

  Dataset reloaded = fsr::load_dataset(root, 32);
  CHECK(ids(reloaded) == ids(ds));
  CHECK(reloaded.sample(2).pixels == ds.sample(2).pixels);

  std::filesystem::remove_all(root);
}
