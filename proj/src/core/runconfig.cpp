#include "core/runconfig.hpp"

#include <fstream>
#include <set>

namespace fsr {

namespace {

using Json = nlohmann::ordered_json;

[[noreturn]] void fail(const std::string& path, const std::string& what) {
  throw ConfigError("config: " + (path.empty() ? what : path + ": " + what));
}

void check_keys(const Json& obj, const std::string& path, const std::set<std::string>& allowed) {
  for (const auto& [key, value] : obj.items())
    if (!allowed.count(key)) fail(path.empty() ? key : path + "." + key, "unknown key");
}

const Json* find(const Json& obj, const char* key) {
  const auto it = obj.find(key);
  return it == obj.end() ? nullptr : &*it;
}

template <typename T>
T get_number(const Json& j, const std::string& path) {
  if (!j.is_number()) fail(path, "expected a number");
  return j.get<T>();
}

double get_fraction(const Json& j, const std::string& path) { return get_number<double>(j, path); }

int get_int(const Json& j, const std::string& path) {
  if (!j.is_number_integer()) fail(path, "expected an integer");
  return j.get<int>();
}

std::uint64_t get_seed(const Json& j, const std::string& path) {
  if (!j.is_number_unsigned() && !j.is_number_integer()) fail(path, "expected an integer seed");
  const auto v = j.get<std::int64_t>();
  if (v < 0) fail(path, "seed must be non-negative");
  return static_cast<std::uint64_t>(v);
}

std::string get_string(const Json& j, const std::string& path) {
  if (!j.is_string()) fail(path, "expected a string");
  return j.get<std::string>();
}

bool get_bool(const Json& j, const std::string& path) {
  if (!j.is_boolean()) fail(path, "expected a boolean");
  return j.get<bool>();
}

DataSourceConfig parse_source(const Json& j, const std::string& path,
                              const std::filesystem::path& base_dir) {
  if (!j.is_object()) fail(path, "expected an object");
  check_keys(j, path, {"root", "generate"});
  DataSourceConfig out;
  out.present = true;
  if (const Json* root = find(j, "root")) {
    std::filesystem::path p = get_string(*root, path + ".root");
    out.root = p.is_absolute() ? p : base_dir / p;
  }
  if (const Json* gen = find(j, "generate")) {
    if (!gen->is_object()) fail(path + ".generate", "expected an object");
    check_keys(*gen, path + ".generate",
               {"family", "n_per_class", "seed", "walk_steps", "width_min", "width_max", "darkness",
                "noise"});
    out.has_generator = true;
    const Json* family = find(*gen, "family");
    if (!family) fail(path + ".generate.family", "required");
    try {
      out.family = family_from_string(get_string(*family, path + ".generate.family"));
    } catch (const std::invalid_argument& e) {
      fail(path + ".generate.family", e.what());
    }
    const Json* n = find(*gen, "n_per_class");
    if (!n) fail(path + ".generate.n_per_class", "required");
    out.n_per_class = get_int(*n, path + ".generate.n_per_class");
    if (out.n_per_class < 1) fail(path + ".generate.n_per_class", "must be >= 1");
    if (const Json* v = find(*gen, "seed")) out.gen_seed = get_seed(*v, path + ".generate.seed");
    if (const Json* v = find(*gen, "walk_steps"))
      out.walk_steps = get_int(*v, path + ".generate.walk_steps");
    if (const Json* v = find(*gen, "width_min"))
      out.width_min = get_fraction(*v, path + ".generate.width_min");
    if (const Json* v = find(*gen, "width_max"))
      out.width_max = get_fraction(*v, path + ".generate.width_max");
    if (const Json* v = find(*gen, "darkness"))
      out.darkness = get_fraction(*v, path + ".generate.darkness");
    if (const Json* v = find(*gen, "noise")) out.noise = get_fraction(*v, path + ".generate.noise");
  }
  if (!out.has_generator && out.root.empty()) fail(path, "needs a root or a generate block");
  return out;
}

Json echo_source(const DataSourceConfig& s) {
  Json j = Json::object();
  if (!s.root.empty()) j["root"] = s.root.string();
  if (s.has_generator) {
    Json g;
    g["family"] = to_string(s.family);
    g["n_per_class"] = s.n_per_class;
    g["seed"] = s.gen_seed;
    if (s.walk_steps > 0) g["walk_steps"] = s.walk_steps;
    if (s.width_min > 0.0) g["width_min"] = s.width_min;
    if (s.width_max > 0.0) g["width_max"] = s.width_max;
    if (s.darkness > 0.0) g["darkness"] = s.darkness;
    if (s.noise >= 0.0) g["noise"] = s.noise;
    j["generate"] = std::move(g);
  }
  return j;
}

}  // namespace

CrackGenConfig DataSourceConfig::generator(int side) const {
  CrackGenConfig cfg;
  cfg.side = side;
  cfg.background = family;
  cfg.seed = gen_seed;
  cfg.crack_walk_steps = walk_steps > 0 ? walk_steps : std::max(cfg.side * 3 / 2, 8);
  if (width_min > 0.0) cfg.crack_width_min = width_min;
  if (width_max > 0.0) cfg.crack_width_max = width_max;
  if (darkness > 0.0) cfg.crack_darkness = darkness;
  if (noise >= 0.0) cfg.noise_amplitude = noise;
  return cfg;
}

std::string RunConfig::derived_run_id(RunModeKind effective_mode, bool sweep) const {
  if (!run_id.empty()) return run_id;
  std::string id = sweep ? "compare" : to_string(effective_mode);
  if (!sweep && kinds.size() == 1) id += "-" + to_string(kinds.front());
  id += "-" + to_string(scale) + "-s" + std::to_string(train_seed);
  return id;
}

RunConfig parse_run_config(const std::string& json_text, const std::filesystem::path& base_dir) {
  Json doc;
  try {
    doc = Json::parse(json_text);
  } catch (const nlohmann::json::parse_error& e) {
    throw ConfigError(std::string("config: invalid JSON: ") + e.what());
  }
  if (!doc.is_object()) throw ConfigError("config: top level must be an object");
  check_keys(doc, "", {"run_id", "mode", "output_dir", "data", "model", "train", "augmentation"});

  RunConfig cfg;
  if (const Json* v = find(doc, "run_id")) cfg.run_id = get_string(*v, "run_id");
  if (const Json* v = find(doc, "mode")) {
    try {
      cfg.mode = run_mode_from_string(get_string(*v, "mode"));
    } catch (const std::invalid_argument& e) {
      fail("mode", e.what());
    }
  }
  if (const Json* v = find(doc, "output_dir")) {
    std::filesystem::path p = get_string(*v, "output_dir");
    cfg.output_dir = p.is_absolute() ? p : base_dir / p;
  } else {
    cfg.output_dir = base_dir / "results";
  }

  if (const Json* data = find(doc, "data")) {
    if (!data->is_object()) fail("data", "expected an object");
    check_keys(*data, "data", {"side", "source", "target", "split"});
    if (const Json* v = find(*data, "side")) {
      cfg.side = get_int(*v, "data.side");
      if (cfg.side < 8) fail("data.side", "must be at least 8");
    }
    if (const Json* v = find(*data, "source")) cfg.source = parse_source(*v, "data.source", base_dir);
    if (const Json* v = find(*data, "target")) cfg.target = parse_source(*v, "data.target", base_dir);
    if (const Json* v = find(*data, "split")) {
      if (!v->is_object()) fail("data.split", "expected an object");
      check_keys(*v, "data.split", {"train_fraction", "seed"});
      if (const Json* f = find(*v, "train_fraction")) {
        cfg.split.train_fraction = get_fraction(*f, "data.split.train_fraction");
        if (cfg.split.train_fraction <= 0.0 || cfg.split.train_fraction >= 1.0)
          fail("data.split.train_fraction", "must be in (0,1)");
      }
      if (const Json* s = find(*v, "seed")) cfg.split.seed = get_seed(*s, "data.split.seed");
    }
  }

  if (const Json* model = find(doc, "model")) {
    if (!model->is_object()) fail("model", "expected an object");
    check_keys(*model, "model", {"kind", "kinds", "scale", "num_classes", "input_channels", "input_side"});
    const Json* kind = find(*model, "kind");
    const Json* kinds = find(*model, "kinds");
    if (kind && kinds) fail("model", "give either kind or kinds, not both");
    try {
      if (kind) cfg.kinds = {model_kind_from_string(get_string(*kind, "model.kind"))};
      if (kinds) {
        if (!kinds->is_array() || kinds->empty()) fail("model.kinds", "expected a non-empty array");
        cfg.kinds.clear();
        for (const Json& k : *kinds)
          cfg.kinds.push_back(model_kind_from_string(get_string(k, "model.kinds")));
      }
      if (const Json* v = find(*model, "scale"))
        cfg.scale = scale_from_string(get_string(*v, "model.scale"));
    } catch (const ConfigError&) {
      throw;
    } catch (const std::invalid_argument& e) {
      fail("model", e.what());
    }
    if (const Json* v = find(*model, "num_classes")) cfg.num_classes = get_int(*v, "model.num_classes");
    if (const Json* v = find(*model, "input_channels"))
      cfg.input_channels = get_int(*v, "model.input_channels");
    if (const Json* v = find(*model, "input_side")) cfg.input_side = get_int(*v, "model.input_side");
  }

  if (const Json* train = find(doc, "train")) {
    if (!train->is_object()) fail("train", "expected an object");
    check_keys(*train, "train",
               {"epochs", "batch_size", "learning_rate", "momentum", "seed", "timing",
                "checkpoint_in", "save_checkpoints"});
    if (const Json* v = find(*train, "epochs")) cfg.epochs = get_int(*v, "train.epochs");
    if (const Json* v = find(*train, "batch_size")) cfg.batch_size = get_int(*v, "train.batch_size");
    if (const Json* v = find(*train, "learning_rate"))
      cfg.learning_rate = get_fraction(*v, "train.learning_rate");
    if (const Json* v = find(*train, "momentum")) cfg.momentum = get_fraction(*v, "train.momentum");
    if (const Json* v = find(*train, "seed")) cfg.train_seed = get_seed(*v, "train.seed");
    if (const Json* v = find(*train, "timing")) {
      const std::string t = get_string(*v, "train.timing");
      if (t == "wall")
        cfg.timing = TimingMode::Wall;
      else if (t == "virtual")
        cfg.timing = TimingMode::Virtual;
      else
        fail("train.timing", "expected wall or virtual");
    }
    if (const Json* v = find(*train, "checkpoint_in")) {
      std::filesystem::path p = get_string(*v, "train.checkpoint_in");
      if (!p.empty()) cfg.checkpoint_in = p.is_absolute() ? p : base_dir / p;
    }
    if (const Json* v = find(*train, "save_checkpoints"))
      cfg.save_checkpoints = get_bool(*v, "train.save_checkpoints");
    if (cfg.epochs < 1) fail("train.epochs", "must be >= 1");
    if (cfg.batch_size < 1) fail("train.batch_size", "must be >= 1");
    if (cfg.learning_rate < 0.0) fail("train.learning_rate", "must be non-negative");
    if (cfg.momentum < 0.0 || cfg.momentum >= 1.0) fail("train.momentum", "must be in [0,1)");
  }

  if (const Json* aug = find(doc, "augmentation")) {
    if (!aug->is_object()) fail("augmentation", "expected an object");
    check_keys(*aug, "augmentation",
               {"enabled", "hflip", "hflip_prob", "vflip", "vflip_prob", "rotation",
                "rotation_degrees", "scale", "scale_min", "scale_max", "random_crop",
                "crop_fraction", "center_crop", "brightness", "brightness_min", "brightness_max",
                "contrast", "contrast_min", "contrast_max", "hue", "hue_shift", "seed"});
    AugmentationPolicy& p = cfg.policy;
    if (const Json* v = find(*aug, "enabled")) cfg.augmentation_enabled = get_bool(*v, "augmentation.enabled");
    if (const Json* v = find(*aug, "hflip")) p.hflip_enabled = get_bool(*v, "augmentation.hflip");
    if (const Json* v = find(*aug, "hflip_prob")) p.hflip_prob = get_fraction(*v, "augmentation.hflip_prob");
    if (const Json* v = find(*aug, "vflip")) p.vflip_enabled = get_bool(*v, "augmentation.vflip");
    if (const Json* v = find(*aug, "vflip_prob")) p.vflip_prob = get_fraction(*v, "augmentation.vflip_prob");
    if (const Json* v = find(*aug, "rotation")) p.rotation_enabled = get_bool(*v, "augmentation.rotation");
    if (const Json* v = find(*aug, "rotation_degrees"))
      p.rotation_degrees = get_fraction(*v, "augmentation.rotation_degrees");
    if (const Json* v = find(*aug, "scale")) p.scale_enabled = get_bool(*v, "augmentation.scale");
    if (const Json* v = find(*aug, "scale_min")) p.scale_min = get_fraction(*v, "augmentation.scale_min");
    if (const Json* v = find(*aug, "scale_max")) p.scale_max = get_fraction(*v, "augmentation.scale_max");
    if (const Json* v = find(*aug, "random_crop"))
      p.random_crop_enabled = get_bool(*v, "augmentation.random_crop");
    if (const Json* v = find(*aug, "crop_fraction"))
      p.crop_fraction = get_fraction(*v, "augmentation.crop_fraction");
    if (const Json* v = find(*aug, "center_crop"))
      p.center_crop_enabled = get_bool(*v, "augmentation.center_crop");
    if (const Json* v = find(*aug, "brightness"))
      p.brightness_enabled = get_bool(*v, "augmentation.brightness");
    if (const Json* v = find(*aug, "brightness_min"))
      p.brightness_min = get_fraction(*v, "augmentation.brightness_min");
    if (const Json* v = find(*aug, "brightness_max"))
      p.brightness_max = get_fraction(*v, "augmentation.brightness_max");
    if (const Json* v = find(*aug, "contrast")) p.contrast_enabled = get_bool(*v, "augmentation.contrast");
    if (const Json* v = find(*aug, "contrast_min"))
      p.contrast_min = get_fraction(*v, "augmentation.contrast_min");
    if (const Json* v = find(*aug, "contrast_max"))
      p.contrast_max = get_fraction(*v, "augmentation.contrast_max");
    if (const Json* v = find(*aug, "hue")) p.hue_enabled = get_bool(*v, "augmentation.hue");
    if (const Json* v = find(*aug, "hue_shift")) p.hue_shift = get_fraction(*v, "augmentation.hue_shift");
    if (const Json* v = find(*aug, "seed")) p.rng_seed = get_seed(*v, "augmentation.seed");
    try {
      p.validate();
    } catch (const std::invalid_argument& e) {
      fail("augmentation", e.what());
    }
  }

  // resolved echo, defaults included
  Json echo;
  if (!cfg.run_id.empty()) echo["run_id"] = cfg.run_id;
  echo["mode"] = to_string(cfg.mode);
  echo["output_dir"] = cfg.output_dir.string();
  Json data;
  data["side"] = cfg.side;
  if (cfg.source.present) data["source"] = echo_source(cfg.source);
  if (cfg.target.present) data["target"] = echo_source(cfg.target);
  data["split"] = {{"train_fraction", cfg.split.train_fraction}, {"seed", cfg.split.seed}};
  echo["data"] = std::move(data);
  Json model;
  Json kinds_json = Json::array();
  for (ModelKind k : cfg.kinds) kinds_json.push_back(to_string(k));
  model["kinds"] = std::move(kinds_json);
  model["scale"] = to_string(cfg.scale);
  model["num_classes"] = cfg.num_classes;
  model["input_channels"] = cfg.input_channels;
  if (cfg.input_side > 0) model["input_side"] = cfg.input_side;
  echo["model"] = std::move(model);
  Json train;
  train["epochs"] = cfg.epochs;
  train["batch_size"] = cfg.batch_size;
  train["learning_rate"] = cfg.learning_rate;
  train["momentum"] = cfg.momentum;
  train["seed"] = cfg.train_seed;
  train["timing"] = cfg.timing == TimingMode::Wall ? "wall" : "virtual";
  if (!cfg.checkpoint_in.empty()) train["checkpoint_in"] = cfg.checkpoint_in.string();
  train["save_checkpoints"] = cfg.save_checkpoints;
  echo["train"] = std::move(train);
  Json aug;
  aug["enabled"] = cfg.augmentation_enabled;
  aug["hflip"] = cfg.policy.hflip_enabled;
  aug["hflip_prob"] = cfg.policy.hflip_prob;
  aug["vflip"] = cfg.policy.vflip_enabled;
  aug["vflip_prob"] = cfg.policy.vflip_prob;
  aug["rotation"] = cfg.policy.rotation_enabled;
  aug["rotation_degrees"] = cfg.policy.rotation_degrees;
  aug["scale"] = cfg.policy.scale_enabled;
  aug["scale_min"] = cfg.policy.scale_min;
  aug["scale_max"] = cfg.policy.scale_max;
  aug["random_crop"] = cfg.policy.random_crop_enabled;
  aug["crop_fraction"] = cfg.policy.crop_fraction;
  aug["center_crop"] = cfg.policy.center_crop_enabled;
  aug["brightness"] = cfg.policy.brightness_enabled;
  aug["brightness_min"] = cfg.policy.brightness_min;
  aug["brightness_max"] = cfg.policy.brightness_max;
  aug["contrast"] = cfg.policy.contrast_enabled;
  aug["contrast_min"] = cfg.policy.contrast_min;
  aug["contrast_max"] = cfg.policy.contrast_max;
  aug["hue"] = cfg.policy.hue_enabled;
  aug["hue_shift"] = cfg.policy.hue_shift;
  aug["seed"] = cfg.policy.rng_seed;
  echo["augmentation"] = std::move(aug);
  cfg.echo = std::move(echo);
  return cfg;
}

RunConfig load_run_config(const std::filesystem::path& path) {
  std::ifstream f(path);
  if (!f) throw ConfigError("config: cannot open " + path.string());
  std::string text((std::istreambuf_iterator<char>(f)), std::istreambuf_iterator<char>());
  return parse_run_config(text, std::filesystem::absolute(path).parent_path());
}

void apply_override(nlohmann::ordered_json& doc, const std::string& assignment) {
  const std::size_t eq = assignment.find('=');
  if (eq == std::string::npos || eq == 0)
    throw ConfigError("config: override must look like key.path=value, got '" + assignment + "'");
  const std::string key = assignment.substr(0, eq);
  const std::string value = assignment.substr(eq + 1);

  Json parsed;
  try {
    parsed = Json::parse(value);
  } catch (const nlohmann::json::parse_error&) {
    parsed = value;  // bare strings are fine
  }

  Json* node = &doc;
  std::size_t start = 0;
  while (true) {
    const std::size_t dot = key.find('.', start);
    const std::string part = key.substr(start, dot == std::string::npos ? dot : dot - start);
    if (part.empty()) throw ConfigError("config: empty segment in override key '" + key + "'");
    if (dot == std::string::npos) {
      (*node)[part] = std::move(parsed);
      return;
    }
    if (!node->contains(part) || !(*node)[part].is_object()) (*node)[part] = Json::object();
    node = &(*node)[part];
    start = dot + 1;
  }
}

RunConfig parse_run_config_with_overrides(const std::string& json_text,
                                          const std::filesystem::path& base_dir,
                                          const std::vector<std::string>& overrides) {
  Json doc;
  try {
    doc = Json::parse(json_text);
  } catch (const nlohmann::json::parse_error& e) {
    throw ConfigError(std::string("config: invalid JSON: ") + e.what());
  }
  for (const std::string& assignment : overrides) apply_override(doc, assignment);
  return parse_run_config(doc.dump(), base_dir);
}

}  // namespace fsr
