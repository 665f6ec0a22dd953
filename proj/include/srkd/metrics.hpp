// Evaluation, sample-efficiency accounting and cross-run aggregation.
#pragma once

#include <algorithm>
#include <cstdint>
#include <cstdio>
#include <fstream>
#include <map>
#include <optional>
#include <string>
#include <tuple>
#include <vector>

#include <json.hpp>

#include "srkd/common.hpp"
#include "srkd/data.hpp"
#include "srkd/losses.hpp"
#include "srkd/model.hpp"
#include "srkd/regulation.hpp"

namespace srkd {

inline constexpr int kReportSchemaVersion = 1;

// Fraction of samples whose argmax logit matches the label. Always computed
// at temperature 1 (argmax is temperature-invariant anyway). Batch size does
// not affect the result.
inline double evaluate(const SequentialModel& model, const Dataset& data,
                       std::size_t batch_size = 512, int threads = 1) {
  if (data.size() == 0) throw InvalidParameterError("evaluate: dataset is empty");
  if (batch_size == 0) throw InvalidParameterError("evaluate: batch size must be positive");
  std::uint64_t correct = 0;
  std::vector<std::size_t> idx;
  for (std::size_t start = 0; start < data.size(); start += batch_size) {
    const std::size_t end = std::min(start + batch_size, data.size());
    idx.resize(end - start);
    std::iota(idx.begin(), idx.end(), start);
    Tensor logits = forward(model, data.batch(idx), nullptr, threads);
    for (std::size_t b = 0; b < idx.size(); ++b) {
      if (argmax_row(logits.row(b)) == data.labels[idx[b]]) ++correct;
    }
  }
  return static_cast<double>(correct) / static_cast<double>(data.size());
}

// zeta = sum(v) / (N*t), kept as the exact integer pair alongside the
// decimal so round-trips never lose precision.
struct EfficiencyRecord {
  std::uint64_t participations = 0;  // sum of the ledger counts
  std::uint64_t available = 0;       // N * t
  double value = 0.0;
  std::string percent;  // e.g. "0.713%"
};

inline std::string format_percent(double fraction) {
  char buf[32];
  std::snprintf(buf, sizeof buf, "%.3f%%", fraction * 100.0);
  return buf;
}

inline EfficiencyRecord efficiency(std::uint64_t participations, std::uint64_t epochs,
                                   std::uint64_t t) {
  if (epochs == 0 || t == 0) {
    throw InvalidParameterError("efficiency needs epochs > 0 and t > 0");
  }
  EfficiencyRecord r;
  r.participations = participations;
  r.available = epochs * t;
  r.value = static_cast<double>(participations) / static_cast<double>(r.available);
  r.percent = format_percent(r.value);
  return r;
}

inline EfficiencyRecord efficiency(const ParticipationLedger& ledger) {
  return efficiency(ledger.total(), ledger.epochs(), ledger.size());
}

// ---- aggregation of run reports into one comparison table ----

struct ReportRow {
  std::string dataset;
  std::string mode;
  std::uint64_t seed = 0;
  std::optional<double> test_accuracy;
  std::uint64_t participations = 0;
  std::uint64_t available = 0;
  std::string percent;
};

inline ReportRow report_row_from_json(const nlohmann::json& j, const std::string& path) {
  if (!j.contains("schema_version") || j["schema_version"].get<int>() != kReportSchemaVersion) {
    throw ConfigError("report '" + path + "' has unsupported schema_version (expected " +
                      std::to_string(kReportSchemaVersion) + ")");
  }
  ReportRow row;
  row.dataset = j.at("dataset").get<std::string>();
  row.mode = j.at("mode").get<std::string>();
  row.seed = j.at("seed").get<std::uint64_t>();
  const auto& fin = j.at("final");
  if (fin.contains("test_accuracy") && !fin["test_accuracy"].is_null()) {
    row.test_accuracy = fin["test_accuracy"].get<double>();
  }
  const auto& eff = fin.at("efficiency");
  row.participations = eff.at("participations").get<std::uint64_t>();
  row.available = eff.at("available").get<std::uint64_t>();
  row.percent = eff.at("percent").get<std::string>();
  return row;
}

// Deterministic (dataset, mode, seed) ordering; duplicates rejected; missing
// accuracies rendered as NA.
inline std::string aggregate_reports(const std::vector<std::string>& report_paths) {
  std::map<std::tuple<std::string, std::string, std::uint64_t>, ReportRow> rows;
  for (const std::string& path : report_paths) {
    std::ifstream f(path);
    if (!f) throw IoError("cannot open report '" + path + "'");
    nlohmann::json j;
    try {
      f >> j;
    } catch (const nlohmann::json::exception& e) {
      throw DataFormatError("report '" + path + "' is not valid JSON: " + e.what());
    }
    ReportRow row = report_row_from_json(j, path);
    auto key = std::make_tuple(row.dataset, row.mode, row.seed);
    if (!rows.emplace(key, row).second) {
      throw ConfigError("duplicate report for dataset=" + row.dataset + " mode=" + row.mode +
                        " seed=" + std::to_string(row.seed) + " ('" + path + "')");
    }
  }
  std::string out = "dataset,mode,seed,test_accuracy,participations,available,efficiency\n";
  for (const auto& [key, row] : rows) {
    out += row.dataset + ',' + row.mode + ',' + std::to_string(row.seed) + ',';
    out += row.test_accuracy ? fmt_g17(*row.test_accuracy) : std::string("NA");
    out += ',' + std::to_string(row.participations) + ',' + std::to_string(row.available) + ',' +
           row.percent + "\n";
  }
  return out;
}

}  // namespace srkd
