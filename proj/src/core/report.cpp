#include "core/report.hpp"

#include <charconv>
#include <cstdio>
#include <fstream>
#include <map>
#include <sstream>
#include <stdexcept>

namespace fsr {

std::string format_accuracy(double accuracy) {
  char buf[32];
  std::snprintf(buf, sizeof(buf), "%.3f", accuracy);
  return buf;
}

std::string format_double(double v) {
  char buf[40];
  const auto res = std::to_chars(buf, buf + sizeof(buf), v);
  return std::string(buf, res.ptr);
}

void write_file_atomic(const std::filesystem::path& path, const std::string& content) {
  if (path.has_parent_path()) std::filesystem::create_directories(path.parent_path());
  const std::filesystem::path tmp = path.string() + ".tmp";
  {
    std::ofstream f(tmp, std::ios::binary | std::ios::trunc);
    if (!f) throw std::runtime_error("report: cannot write " + tmp.string());
    f.write(content.data(), static_cast<std::streamsize>(content.size()));
    if (!f) throw std::runtime_error("report: write failed for " + tmp.string());
  }
  std::filesystem::rename(tmp, path);
}

namespace {

constexpr const char* kRecordsHeader = "epoch,model,mode,augmented,accuracy,epoch_seconds,loss";

// Column labels: the model name alone when unambiguous, otherwise
// model:mode, so mixed-mode reports stay readable.
std::vector<std::string> column_labels(const std::vector<std::pair<std::string, std::string>>& keys) {
  std::map<std::string, int> model_uses;
  for (const auto& [model, mode] : keys) ++model_uses[model];
  std::vector<std::string> labels;
  for (const auto& [model, mode] : keys)
    labels.push_back(model_uses[model] == 1 ? model : model + ":" + mode);
  return labels;
}

struct PivotData {
  std::vector<std::string> labels;
  // per column, per epoch (1-based epochs, dense)
  std::vector<std::vector<std::string>> accuracy;
  std::vector<std::vector<std::string>> seconds;
  int epochs = 0;
};

std::string render_pivot(const PivotData& data, bool accuracy) {
  std::ostringstream os;
  os << "epoch";
  for (const std::string& label : data.labels) os << ',' << label;
  os << '\n';
  for (int e = 0; e < data.epochs; ++e) {
    os << (e + 1);
    for (std::size_t c = 0; c < data.labels.size(); ++c)
      os << ',' << (accuracy ? data.accuracy[c][static_cast<std::size_t>(e)]
                             : data.seconds[c][static_cast<std::size_t>(e)]);
    os << '\n';
  }
  return os.str();
}

void write_pivots(const PivotData& data, const std::filesystem::path& run_dir) {
  write_file_atomic(run_dir / "pivot_accuracy.csv", render_pivot(data, true));
  write_file_atomic(run_dir / "pivot_seconds.csv", render_pivot(data, false));
}

}  // namespace

void emit_report(const std::vector<ExperimentResult>& results,
                 const nlohmann::ordered_json& config_echo, const std::filesystem::path& run_dir) {
  if (results.empty()) throw std::invalid_argument("emit_report: no results");
  const std::size_t epochs = results.front().records.size();
  for (const ExperimentResult& r : results)
    if (r.records.size() != epochs)
      throw std::invalid_argument("emit_report: results disagree on epoch count (" +
                                  std::to_string(r.records.size()) + " vs " +
                                  std::to_string(epochs) + ")");

  std::ostringstream records;
  records << kRecordsHeader << '\n';
  PivotData pivot;
  pivot.epochs = static_cast<int>(epochs);
  std::vector<std::pair<std::string, std::string>> keys;
  for (const ExperimentResult& r : results) {
    const auto key = std::make_pair(r.model, r.mode);
    for (const auto& seen : keys)
      if (seen == key)
        throw std::invalid_argument("emit_report: duplicate result for " + r.model + "/" + r.mode);
    keys.push_back(key);
    std::vector<std::string> acc_col, sec_col;
    for (const EpochRecord& rec : r.records) {
      const std::string acc = format_accuracy(rec.test_accuracy);
      const std::string sec = format_double(rec.epoch_seconds);
      records << rec.epoch << ',' << r.model << ',' << r.mode << ','
              << (r.augmented ? "true" : "false") << ',' << acc << ',' << sec << ','
              << format_double(rec.train_loss) << '\n';
      acc_col.push_back(acc);
      sec_col.push_back(sec);
    }
    pivot.accuracy.push_back(std::move(acc_col));
    pivot.seconds.push_back(std::move(sec_col));
  }
  pivot.labels = column_labels(keys);

  write_file_atomic(run_dir / "records.csv", records.str());
  write_pivots(pivot, run_dir);

  nlohmann::ordered_json summary;
  summary["config"] = config_echo;
  nlohmann::ordered_json arr = nlohmann::ordered_json::array();
  for (const ExperimentResult& r : results) {
    nlohmann::ordered_json item;
    item["model"] = r.model;
    item["mode"] = r.mode;
    item["augmented"] = r.augmented;
    item["best_accuracy"] = nlohmann::ordered_json::parse(format_accuracy(r.best_accuracy));
    item["best_epoch"] = r.best_epoch;
    arr.push_back(std::move(item));
  }
  summary["results"] = std::move(arr);
  write_file_atomic(run_dir / "summary.json", summary.dump(2) + "\n");
}

std::vector<RecordRow> parse_records_csv(const std::filesystem::path& path) {
  std::ifstream f(path);
  if (!f) throw std::runtime_error("report: cannot open " + path.string());
  std::string line;
  if (!std::getline(f, line) || line != kRecordsHeader)
    throw std::runtime_error("report: unexpected header in " + path.string());

  std::vector<RecordRow> rows;
  while (std::getline(f, line)) {
    if (line.empty()) continue;
    std::vector<std::string> cells;
    std::size_t start = 0;
    while (true) {
      const std::size_t comma = line.find(',', start);
      cells.push_back(line.substr(start, comma == std::string::npos ? comma : comma - start));
      if (comma == std::string::npos) break;
      start = comma + 1;
    }
    if (cells.size() != 7) throw std::runtime_error("report: malformed row in " + path.string());
    RecordRow row;
    const auto res = std::from_chars(cells[0].data(), cells[0].data() + cells[0].size(), row.epoch);
    if (res.ec != std::errc()) throw std::runtime_error("report: bad epoch in " + path.string());
    row.model = cells[1];
    row.mode = cells[2];
    row.augmented = cells[3];
    row.accuracy = cells[4];
    row.seconds = cells[5];
    row.loss = cells[6];
    rows.push_back(std::move(row));
  }
  if (rows.empty()) throw std::runtime_error("report: no rows in " + path.string());
  return rows;
}

void regenerate_pivots(const std::filesystem::path& run_dir) {
  const std::vector<RecordRow> rows = parse_records_csv(run_dir / "records.csv");

  PivotData pivot;
  std::vector<std::pair<std::string, std::string>> keys;
  std::map<std::pair<std::string, std::string>, std::size_t> index;
  for (const RecordRow& row : rows) {
    const auto key = std::make_pair(row.model, row.mode);
    auto it = index.find(key);
    if (it == index.end()) {
      it = index.emplace(key, keys.size()).first;
      keys.push_back(key);
      pivot.accuracy.emplace_back();
      pivot.seconds.emplace_back();
    }
    const std::size_t col = it->second;
    if (row.epoch != static_cast<int>(pivot.accuracy[col].size()) + 1)
      throw std::runtime_error("report: epochs out of order for " + row.model);
    pivot.accuracy[col].push_back(row.accuracy);
    pivot.seconds[col].push_back(row.seconds);
  }
  pivot.epochs = static_cast<int>(pivot.accuracy.front().size());
  for (const auto& col : pivot.accuracy)
    if (static_cast<int>(col.size()) != pivot.epochs)
      throw std::runtime_error("report: results disagree on epoch count");
  pivot.labels = column_labels(keys);
  write_pivots(pivot, run_dir);
}

}  // namespace fsr
