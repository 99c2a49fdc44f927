#include "core/driver.hpp"

#include <atomic>
#include <mutex>
#include <thread>

#include "core/report.hpp"

namespace fsr {

namespace {

// In-memory generation when a generator block is present; otherwise the
// rooted directory is loaded from disk.
Dataset resolve_dataset(const DataSourceConfig& src, int side, const char* which) {
  if (!src.present)
    throw ConfigError(std::string("config: data.") + which + " is required for this mode");
  if (src.has_generator)
    return generate_dataset(src.generator(side), src.n_per_class, to_string(src.family));
  return load_dataset(src.root, side);
}

}  // namespace

void drive_generate(const RunConfig& cfg) {
  bool any = false;
  for (const auto& [src, which] :
       {std::pair<const DataSourceConfig*, const char*>{&cfg.source, "source"},
        {&cfg.target, "target"}}) {
    if (!src->present || !src->has_generator) continue;
    if (src->root.empty())
      throw ConfigError(std::string("config: data.") + which + ".root is required to generate to disk");
    const Dataset ds = generate_dataset(src->generator(cfg.side), src->n_per_class,
                                        to_string(src->family));
    write_dataset(ds, src->root);
    any = true;
  }
  if (!any) throw ConfigError("config: nothing to generate (no generate blocks present)");
}

void drive_ingest(const RunConfig& cfg) {
  bool any = false;
  for (const DataSourceConfig* src : {&cfg.source, &cfg.target}) {
    if (!src->present || src->root.empty()) continue;
    const Dataset ds = load_dataset(src->root, cfg.side);
    write_manifest(ds, src->root);
    any = true;
  }
  if (!any) throw ConfigError("config: nothing to ingest (no dataset roots present)");
}

std::filesystem::path drive_run(const RunConfig& cfg, std::optional<RunModeKind> mode_override,
                                int jobs) {
  const RunModeKind mode = mode_override.value_or(cfg.mode);

  const bool needs_source = mode != RunModeKind::Scratch;
  const bool needs_target = mode != RunModeKind::Pretrain;
  Dataset source_train, source_test, target_train, target_test;
  if (needs_source) {
    const Dataset source = resolve_dataset(cfg.source, cfg.side, "source");
    std::tie(source_train, source_test) = split_dataset(source, cfg.split);
  }
  if (needs_target) {
    const Dataset target = resolve_dataset(cfg.target, cfg.side, "target");
    std::tie(target_train, target_test) = split_dataset(target, cfg.split);
  }
  ExperimentDatasets data;
  if (needs_source) {
    data.source_train = &source_train;
    data.source_test = &source_test;
  }
  if (needs_target) {
    data.target_train = &target_train;
    data.target_test = &target_test;
  }

  const std::string run_id = cfg.derived_run_id(mode, false);
  const std::filesystem::path run_dir = cfg.output_dir / run_id;
  std::filesystem::create_directories(run_dir);

  std::vector<TrainConfig> train_cfgs;
  for (ModelKind kind : cfg.kinds) {
    TrainConfig tc;
    tc.model.kind = kind;
    tc.model.scale = cfg.scale;
    tc.model.num_classes = cfg.num_classes;
    tc.model.input_channels = cfg.input_channels;
    tc.model.input_side = cfg.input_side;
    tc.epochs = cfg.epochs;
    tc.batch_size = cfg.batch_size;
    tc.learning_rate = cfg.learning_rate;
    tc.momentum = cfg.momentum;
    if (cfg.augmentation_enabled) tc.augmentation = cfg.policy;
    tc.seed = cfg.train_seed;
    tc.mode = mode;
    tc.timing = cfg.timing;
    tc.checkpoint_in = cfg.checkpoint_in;
    if (cfg.save_checkpoints)
      tc.checkpoint_out =
          run_dir / "checkpoints" / (to_string(kind) + "-" + to_string(mode) + ".fsr");
    tc.validate();
    train_cfgs.push_back(std::move(tc));
  }

  std::vector<ExperimentResult> results(train_cfgs.size());
  const int workers = std::max(1, std::min<int>(jobs, static_cast<int>(train_cfgs.size())));
  if (workers == 1) {
    for (std::size_t i = 0; i < train_cfgs.size(); ++i)
      results[i] = run_experiment(train_cfgs[i], data);
  } else {
    std::atomic<std::size_t> next{0};
    std::exception_ptr failure;
    std::mutex failure_mutex;
    auto worker = [&]() {
      while (true) {
        const std::size_t i = next.fetch_add(1);
        if (i >= train_cfgs.size()) return;
        try {
          results[i] = run_experiment(train_cfgs[i], data);
        } catch (...) {
          std::lock_guard<std::mutex> lock(failure_mutex);
          if (!failure) failure = std::current_exception();
          return;
        }
      }
    };
    std::vector<std::thread> pool;
    for (int w = 0; w < workers; ++w) pool.emplace_back(worker);
    for (std::thread& t : pool) t.join();
    if (failure) std::rethrow_exception(failure);
  }

  nlohmann::ordered_json echo = cfg.echo;
  echo["mode"] = to_string(mode);  // reflect the subcommand actually run
  emit_report(results, echo, run_dir);
  return run_dir;
}

std::filesystem::path drive_compare(const RunConfig& cfg, int jobs) {
  RunConfig sweep = cfg;
  sweep.kinds = all_model_kinds();
  if (sweep.run_id.empty()) sweep.run_id = cfg.derived_run_id(cfg.mode, true);
  nlohmann::ordered_json kinds_json = nlohmann::ordered_json::array();
  for (ModelKind k : sweep.kinds) kinds_json.push_back(to_string(k));
  sweep.echo["model"]["kinds"] = std::move(kinds_json);
  return drive_run(sweep, std::nullopt, jobs);
}

void drive_report(const std::filesystem::path& run_dir) { regenerate_pivots(run_dir); }

}  // namespace fsr
