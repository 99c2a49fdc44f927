#pragma once

#include <filesystem>
#include <optional>

#include "core/runconfig.hpp"

namespace fsr {

// Materializes every dataset entry that has both a generator and a root.
void drive_generate(const RunConfig& cfg);

// Validates every rooted dataset entry and writes its manifest.
void drive_ingest(const RunConfig& cfg);

// Trains every configured model kind under one mode and emits the report
// files into <output_dir>/<run_id>/. `jobs` bounds parallel model runs;
// results are identical regardless of the worker count.
std::filesystem::path drive_run(const RunConfig& cfg, std::optional<RunModeKind> mode_override,
                                int jobs = 1);

// The seven-architecture sweep behind one config.
std::filesystem::path drive_compare(const RunConfig& cfg, int jobs = 1);

// Re-emits the pivot files from a run directory's records.csv.
void drive_report(const std::filesystem::path& run_dir);

}  // namespace fsr
