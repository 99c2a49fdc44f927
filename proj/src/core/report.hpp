#pragma once

#include <filesystem>
#include <string>
#include <vector>

#include <json.hpp>

#include "core/train.hpp"

namespace fsr {

// One parsed line of records.csv. Numeric columns are kept as the exact
// strings on disk so re-emission is byte-identical.
struct RecordRow {
  int epoch = 0;
  std::string model;
  std::string mode;
  std::string augmented;
  std::string accuracy;
  std::string seconds;
  std::string loss;
};

std::string format_accuracy(double accuracy);  // three decimals, paper style
std::string format_double(double v);           // shortest round-trip

// Writes records.csv, pivot_accuracy.csv, pivot_seconds.csv and
// summary.json under run_dir. All results must share an epoch count.
void emit_report(const std::vector<ExperimentResult>& results,
                 const nlohmann::ordered_json& config_echo, const std::filesystem::path& run_dir);

std::vector<RecordRow> parse_records_csv(const std::filesystem::path& path);

// Rebuilds both pivot files from records.csv alone; byte-identical to
// what emit_report wrote.
void regenerate_pivots(const std::filesystem::path& run_dir);

void write_file_atomic(const std::filesystem::path& path, const std::string& content);

}  // namespace fsr
