// Command-line front end for the fissure engine. Talks to the shared
// library exclusively through the C API in fissure/fissure.h.

#include <cstdio>
#include <memory>
#include <string>
#include <vector>

#include <CLI11.hpp>

#include "fissure/fissure.h"

namespace {

struct ConfigCloser {
  void operator()(fsr_config* c) const { fsr_config_close(c); }
};
using ConfigPtr = std::unique_ptr<fsr_config, ConfigCloser>;

std::string json_escape(const std::string& s) {
  std::string out;
  for (char c : s) {
    switch (c) {
      case '"': out += "\\\""; break;
      case '\\': out += "\\\\"; break;
      case '\n': out += "\\n"; break;
      case '\t': out += "\\t"; break;
      default:
        if (static_cast<unsigned char>(c) < 0x20) {
          char buf[8];
          std::snprintf(buf, sizeof(buf), "\\u%04x", c);
          out += buf;
        } else {
          out += c;
        }
    }
  }
  return out;
}

// One machine-readable error line on stderr; config problems exit 2,
// runtime problems exit 1.
int report_failure(fsr_status status) {
  std::fprintf(stderr, "{\"error\":{\"code\":\"%s\",\"message\":\"%s\"}}\n",
               fsr_status_name(status), json_escape(fsr_last_error()).c_str());
  return (status == FSR_ERROR_CONFIG || status == FSR_ERROR_ARGUMENT) ? 2 : 1;
}

int open_config(const std::string& path, const std::vector<std::string>& overrides,
                ConfigPtr& out) {
  fsr_config* raw = nullptr;
  fsr_status status = fsr_config_open(path.c_str(), &raw);
  if (status != FSR_OK) return report_failure(status);
  out.reset(raw);
  for (const std::string& assignment : overrides) {
    status = fsr_config_set(out.get(), assignment.c_str());
    if (status != FSR_OK) return report_failure(status);
  }
  return 0;
}

int run_mode(const std::string& config_path, const std::vector<std::string>& overrides,
             const char* mode, int jobs) {
  ConfigPtr cfg;
  if (int rc = open_config(config_path, overrides, cfg)) return rc;
  char* run_dir = nullptr;
  const fsr_status status = fsr_run(cfg.get(), mode, jobs, &run_dir);
  if (status != FSR_OK) return report_failure(status);
  std::printf("%s\n", run_dir);
  fsr_string_free(run_dir);
  return 0;
}

}  // namespace

int main(int argc, char** argv) {
  CLI::App app{"fissure - crack identification models, data and experiments"};
  app.set_version_flag("--version", std::string(fsr_version()));
  app.require_subcommand(1);

  std::string config_path;
  std::vector<std::string> overrides;
  int jobs = 1;
  std::string report_dir;

  auto add_config_options = [&](CLI::App* cmd) {
    cmd->add_option("-c,--config", config_path, "run configuration (JSON)")->required();
    cmd->add_option("--set", overrides, "override a config key, e.g. --set train.epochs=3");
  };

  CLI::App* generate = app.add_subcommand("generate", "materialize synthetic corpora to disk");
  add_config_options(generate);

  CLI::App* ingest = app.add_subcommand("ingest", "validate dataset directories and write manifests");
  add_config_options(ingest);

  CLI::App* pretrain = app.add_subcommand("pretrain", "train on the source corpus");
  add_config_options(pretrain);

  CLI::App* scratch = app.add_subcommand("scratch", "train on the target corpus only");
  add_config_options(scratch);

  CLI::App* transfer = app.add_subcommand("transfer", "train on the merged corpus, test on target");
  add_config_options(transfer);

  CLI::App* compare = app.add_subcommand("compare", "sweep all seven architectures");
  add_config_options(compare);
  compare->add_option("--jobs", jobs, "parallel model workers (default 1, deterministic)");

  CLI::App* report = app.add_subcommand("report", "re-emit pivots from a run directory");
  report->add_option("run_dir", report_dir, "results/<run_id> directory")->required();

  CLI11_PARSE(app, argc, argv);

  if (generate->parsed()) {
    ConfigPtr cfg;
    if (int rc = open_config(config_path, overrides, cfg)) return rc;
    const fsr_status status = fsr_generate(cfg.get());
    return status == FSR_OK ? 0 : report_failure(status);
  }
  if (ingest->parsed()) {
    ConfigPtr cfg;
    if (int rc = open_config(config_path, overrides, cfg)) return rc;
    const fsr_status status = fsr_ingest(cfg.get());
    return status == FSR_OK ? 0 : report_failure(status);
  }
  if (pretrain->parsed()) return run_mode(config_path, overrides, "pretrain", 1);
  if (scratch->parsed()) return run_mode(config_path, overrides, "scratch", 1);
  if (transfer->parsed()) return run_mode(config_path, overrides, "transfer", 1);
  if (compare->parsed()) return run_mode(config_path, overrides, "compare", jobs);
  if (report->parsed()) {
    const fsr_status status = fsr_report(report_dir.c_str());
    return status == FSR_OK ? 0 : report_failure(status);
  }
  return 0;
}
