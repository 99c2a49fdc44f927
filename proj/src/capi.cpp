#include "fissure/fissure.h"

#include <cstdlib>
#include <cstring>
#include <filesystem>
#include <fstream>
#include <memory>
#include <optional>
#include <string>

#include "core/checkpoint.hpp"
#include "core/driver.hpp"
#include "core/runconfig.hpp"

namespace {

thread_local std::string g_last_error;

char* dup_string(const std::string& s) {
  char* out = static_cast<char*>(std::malloc(s.size() + 1));
  if (out) std::memcpy(out, s.c_str(), s.size() + 1);
  return out;
}

fsr_status fail(fsr_status code, const std::string& message) {
  g_last_error = message;
  return code;
}

fsr_status fail_argument(const char* message) { return fail(FSR_ERROR_ARGUMENT, message); }

// Maps core exceptions onto status codes.
template <typename Fn>
fsr_status guarded(Fn&& fn) {
  try {
    fn();
    return FSR_OK;
  } catch (const fsr::ConfigError& e) {
    return fail(FSR_ERROR_CONFIG, e.what());
  } catch (const std::invalid_argument& e) {
    return fail(FSR_ERROR_ARGUMENT, e.what());
  } catch (const std::filesystem::filesystem_error& e) {
    return fail(FSR_ERROR_IO, e.what());
  } catch (const std::exception& e) {
    const std::string what = e.what();
    // io-flavored runtime errors come from file loaders
    const bool io = what.find("cannot open") != std::string::npos ||
                    what.find("cannot write") != std::string::npos ||
                    what.find("png:") != std::string::npos;
    return fail(io ? FSR_ERROR_IO : FSR_ERROR_RUNTIME, what);
  }
}

}  // namespace

struct fsr_config {
  fsr::RunConfig parsed;
  nlohmann::ordered_json document;  // pre-validation form, for overrides
  std::filesystem::path base_dir;
};

struct fsr_dataset {
  fsr::Dataset data;
};

struct fsr_model {
  fsr::Network net;
};

extern "C" {

const char* fsr_version(void) { return "1.0.0"; }

const char* fsr_status_name(fsr_status status) {
  switch (status) {
    case FSR_OK: return "ok";
    case FSR_ERROR_ARGUMENT: return "argument";
    case FSR_ERROR_CONFIG: return "config";
    case FSR_ERROR_IO: return "io";
    case FSR_ERROR_RUNTIME: return "runtime";
  }
  return "unknown";
}

const char* fsr_last_error(void) { return g_last_error.c_str(); }

void fsr_string_free(char* s) { std::free(s); }

fsr_status fsr_config_open(const char* path, fsr_config** out) {
  if (!path || !out) return fail_argument("fsr_config_open: null argument");
  *out = nullptr;
  return guarded([&] {
    std::ifstream f(path);
    if (!f) throw fsr::ConfigError(std::string("config: cannot open ") + path);
    std::string text((std::istreambuf_iterator<char>(f)), std::istreambuf_iterator<char>());
    auto cfg = std::make_unique<fsr_config>();
    cfg->base_dir = std::filesystem::absolute(path).parent_path();
    cfg->document = nlohmann::ordered_json::parse(text, nullptr, false);
    if (cfg->document.is_discarded())
      throw fsr::ConfigError(std::string("config: invalid JSON in ") + path);
    cfg->parsed = fsr::parse_run_config(cfg->document.dump(), cfg->base_dir);
    *out = cfg.release();
  });
}

fsr_status fsr_config_parse(const char* json_text, const char* base_dir, fsr_config** out) {
  if (!json_text || !out) return fail_argument("fsr_config_parse: null argument");
  *out = nullptr;
  return guarded([&] {
    auto cfg = std::make_unique<fsr_config>();
    cfg->base_dir = base_dir && *base_dir ? std::filesystem::absolute(base_dir)
                                          : std::filesystem::current_path();
    cfg->document = nlohmann::ordered_json::parse(json_text, nullptr, false);
    if (cfg->document.is_discarded()) throw fsr::ConfigError("config: invalid JSON");
    cfg->parsed = fsr::parse_run_config(cfg->document.dump(), cfg->base_dir);
    *out = cfg.release();
  });
}

fsr_status fsr_config_set(fsr_config* cfg, const char* assignment) {
  if (!cfg || !assignment) return fail_argument("fsr_config_set: null argument");
  return guarded([&] {
    nlohmann::ordered_json doc = cfg->document;
    fsr::apply_override(doc, assignment);
    cfg->parsed = fsr::parse_run_config(doc.dump(), cfg->base_dir);  // validate before committing
    cfg->document = std::move(doc);
  });
}

fsr_status fsr_config_dump(const fsr_config* cfg, char** out_json) {
  if (!cfg || !out_json) return fail_argument("fsr_config_dump: null argument");
  *out_json = dup_string(cfg->parsed.echo.dump(2));
  return *out_json ? FSR_OK : fail(FSR_ERROR_RUNTIME, "out of memory");
}

void fsr_config_close(fsr_config* cfg) { delete cfg; }

fsr_status fsr_generate(const fsr_config* cfg) {
  if (!cfg) return fail_argument("fsr_generate: null config");
  return guarded([&] { fsr::drive_generate(cfg->parsed); });
}

fsr_status fsr_ingest(const fsr_config* cfg) {
  if (!cfg) return fail_argument("fsr_ingest: null config");
  return guarded([&] { fsr::drive_ingest(cfg->parsed); });
}

fsr_status fsr_run(const fsr_config* cfg, const char* mode, int jobs, char** out_run_dir) {
  if (!cfg) return fail_argument("fsr_run: null config");
  if (out_run_dir) *out_run_dir = nullptr;
  return guarded([&] {
    std::filesystem::path run_dir;
    const std::string m = mode ? mode : "";
    if (m == "compare") {
      run_dir = fsr::drive_compare(cfg->parsed, jobs);
    } else {
      std::optional<fsr::RunModeKind> mode_override;
      if (m == "transfer") {
        mode_override = cfg->parsed.mode == fsr::RunModeKind::TransferFinetune
                            ? fsr::RunModeKind::TransferFinetune
                            : fsr::RunModeKind::TransferMerge;
      } else if (!m.empty()) {
        mode_override = fsr::run_mode_from_string(m);  // throws invalid_argument on typos
      }
      run_dir = fsr::drive_run(cfg->parsed, mode_override, jobs);
    }
    if (out_run_dir) *out_run_dir = dup_string(run_dir.string());
  });
}

fsr_status fsr_report(const char* run_dir) {
  if (!run_dir) return fail_argument("fsr_report: null run_dir");
  return guarded([&] { fsr::drive_report(run_dir); });
}

fsr_status fsr_dataset_generate(const char* family, int n_per_class, int side, uint64_t seed,
                                fsr_dataset** out) {
  if (!family || !out) return fail_argument("fsr_dataset_generate: null argument");
  *out = nullptr;
  return guarded([&] {
    fsr::CrackGenConfig gen;
    gen.background = fsr::family_from_string(family);
    gen.side = side;
    gen.crack_walk_steps = std::max(side * 3 / 2, 8);
    gen.seed = seed;
    auto ds = std::make_unique<fsr_dataset>();
    ds->data = fsr::generate_dataset(gen, n_per_class);
    *out = ds.release();
  });
}

fsr_status fsr_dataset_open(const char* root, int side, fsr_dataset** out) {
  if (!root || !out) return fail_argument("fsr_dataset_open: null argument");
  *out = nullptr;
  return guarded([&] {
    auto ds = std::make_unique<fsr_dataset>();
    ds->data = fsr::load_dataset(root, side);
    *out = ds.release();
  });
}

fsr_status fsr_dataset_save(const fsr_dataset* ds, const char* root) {
  if (!ds || !root) return fail_argument("fsr_dataset_save: null argument");
  return guarded([&] { fsr::write_dataset(ds->data, root); });
}

int64_t fsr_dataset_count(const fsr_dataset* ds) {
  return ds ? static_cast<int64_t>(ds->data.size()) : -1;
}

int64_t fsr_dataset_class_count(const fsr_dataset* ds, int label) {
  if (!ds || (label != 0 && label != 1)) return -1;
  return static_cast<int64_t>(ds->data.class_count(label));
}

int32_t fsr_dataset_side(const fsr_dataset* ds) { return ds ? ds->data.side() : -1; }

void fsr_dataset_close(fsr_dataset* ds) { delete ds; }

fsr_status fsr_model_build(const char* kind, const char* scale, int num_classes, uint64_t seed,
                           fsr_model** out) {
  if (!kind || !scale || !out) return fail_argument("fsr_model_build: null argument");
  *out = nullptr;
  return guarded([&] {
    fsr::ModelSpec spec;
    spec.kind = fsr::model_kind_from_string(kind);
    spec.scale = fsr::scale_from_string(scale);
    spec.num_classes = num_classes;
    auto model = std::make_unique<fsr_model>(fsr_model{fsr::build_model(spec, seed)});
    *out = model.release();
  });
}

fsr_status fsr_model_save(const fsr_model* model, const char* path) {
  if (!model || !path) return fail_argument("fsr_model_save: null argument");
  return guarded([&] { fsr::save_checkpoint(model->net, path); });
}

fsr_status fsr_model_load(fsr_model* model, const char* path) {
  if (!model || !path) return fail_argument("fsr_model_load: null argument");
  return guarded([&] { fsr::load_checkpoint(model->net, path); });
}

int64_t fsr_model_parameter_count(const fsr_model* model) {
  return model ? static_cast<int64_t>(model->net.parameter_count()) : -1;
}

int32_t fsr_model_input_side(const fsr_model* model) {
  return model ? model->net.spec().resolved_side() : -1;
}

fsr_status fsr_model_classify(const fsr_model* model, const double* pixels, int32_t n, int32_t side,
                              int32_t* out_labels) {
  if (!model || !pixels || !out_labels) return fail_argument("fsr_model_classify: null argument");
  if (n < 1) return fail_argument("fsr_model_classify: need at least one image");
  return guarded([&] {
    const int want = model->net.spec().resolved_side();
    if (side != want)
      throw std::invalid_argument("fsr_model_classify: side " + std::to_string(side) +
                                  " does not match model input side " + std::to_string(want));
    const std::size_t numel = static_cast<std::size_t>(n) * 3 * side * side;
    fsr::Tensor batch(fsr::Shape{n, 3, side, side},
                      std::vector<double>(pixels, pixels + numel));
    const auto [logits, preds] = model->net.forward_classify(batch);
    for (int i = 0; i < n; ++i) out_labels[i] = preds[static_cast<std::size_t>(i)];
  });
}

void fsr_model_close(fsr_model* model) { delete model; }

}  // extern "C"
