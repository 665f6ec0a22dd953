// Per-sample significance: class-wise min-max normalization of participation
// counts, plus the per-class histogram summaries.
#pragma once

#include <cstdint>
#include <fstream>
#include <span>
#include <string>
#include <vector>

#include "srkd/common.hpp"
#include "srkd/data.hpp"
#include "srkd/regulation.hpp"

namespace srkd {

struct SignificanceTable {
  std::vector<double> values;  // in [0, 1], one per sample
  double alpha = 0.0;
  std::uint32_t epochs = 0;
  std::string dataset;
};

// n_hat = (n - min_class) / (max_class - min_class). A degenerate class
// (max == min) maps to all ones: Eq-style min-max is 0/0 there, and full
// weight keeps the weighted losses equal to the unweighted ones for that
// class instead of silently zeroing it out of training.
inline SignificanceTable compute_significance(std::span<const std::uint32_t> counts,
                                              const ClassPartition& partition) {
  SignificanceTable table;
  table.values.assign(counts.size(), 0.0);
  for (std::size_t c = 0; c < partition.by_class.size(); ++c) {
    const auto& members = partition.by_class[c];
    if (members.empty()) {
      throw InvalidParameterError("class " + std::to_string(c) + " has no samples");
    }
    std::uint32_t lo = counts[members[0]], hi = counts[members[0]];
    for (std::size_t i : members) {
      lo = std::min(lo, counts[i]);
      hi = std::max(hi, counts[i]);
    }
    if (hi == lo) {
      for (std::size_t i : members) table.values[i] = 1.0;
    } else {
      const double range = static_cast<double>(hi - lo);
      for (std::size_t i : members) {
        table.values[i] = static_cast<double>(counts[i] - lo) / range;
      }
    }
  }
  return table;
}

inline SignificanceTable compute_significance(const ParticipationLedger& ledger,
                                              const ClassPartition& partition) {
  return compute_significance(std::span<const std::uint32_t>(ledger.counts()), partition);
}

struct SignificanceHistogram {
  int class_id = 0;
  std::vector<double> edges;        // bins + 1 uniform edges over [0, 1]
  std::vector<std::size_t> counts;  // right-open bins, last bin right-closed
};

inline std::vector<SignificanceHistogram> significance_histogram(const SignificanceTable& table,
                                                                 const ClassPartition& partition,
                                                                 int bins = 4) {
  if (bins < 1) throw InvalidParameterError("histogram needs bins >= 1");
  std::vector<SignificanceHistogram> out;
  out.reserve(partition.by_class.size());
  for (std::size_t c = 0; c < partition.by_class.size(); ++c) {
    SignificanceHistogram h;
    h.class_id = static_cast<int>(c);
    h.edges.resize(bins + 1);
    for (int b = 0; b <= bins; ++b) h.edges[b] = static_cast<double>(b) / bins;
    h.counts.assign(bins, 0);
    for (std::size_t i : partition.by_class[c]) {
      int b = static_cast<int>(table.values[i] * bins);
      if (b >= bins) b = bins - 1;  // value 1 lands in the last (right-closed) bin
      h.counts[static_cast<std::size_t>(b)] += 1;
    }
    out.push_back(std::move(h));
  }
  return out;
}

// ---- CSV serialization ----
//
//   # srkd-significance v1 dataset=<name> N=<epochs> alpha=<...> degenerate=all-ones
//   index,label,count,significance

inline void write_significance_csv(const std::string& path, const SignificanceTable& table,
                                   std::span<const std::uint32_t> counts,
                                   const std::vector<int>& labels) {
  if (table.values.size() != counts.size() || counts.size() != labels.size()) {
    throw InvalidParameterError("significance/count/label size mismatch");
  }
  std::ofstream f(path, std::ios::trunc);
  if (!f) throw IoError("cannot open '" + path + "' for writing");
  f << "# srkd-significance v1 dataset=" << (table.dataset.empty() ? "unknown" : table.dataset)
    << " N=" << table.epochs << " alpha=" << format_alpha(table.alpha) << " degenerate=all-ones\n";
  f << "index,label,count,significance\n";
  for (std::size_t i = 0; i < table.values.size(); ++i) {
    f << i << ',' << labels[i] << ',' << counts[i] << ',' << fmt_g17(table.values[i]) << "\n";
  }
  if (!f) throw IoError("short write to '" + path + "'");
}

struct SignificanceFile {
  SignificanceTable table;
  std::vector<std::uint32_t> counts;
  std::vector<int> labels;
};

inline SignificanceFile read_significance_csv(const std::string& path) {
  std::ifstream f(path);
  if (!f) throw IoError("cannot open '" + path + "'");
  std::string line;
  if (!std::getline(f, line) || line.rfind("# srkd-significance v1 ", 0) != 0) {
    throw DataFormatError("'" + path + "' is not a srkd-significance v1 CSV");
  }
  SignificanceFile out;
  {
    std::istringstream hdr(line.substr(std::string("# srkd-significance v1 ").size()));
    std::string tok;
    while (hdr >> tok) {
      if (tok.rfind("dataset=", 0) == 0) out.table.dataset = tok.substr(8);
      if (tok.rfind("N=", 0) == 0) {
        out.table.epochs = static_cast<std::uint32_t>(std::stoul(tok.substr(2)));
      }
      if (tok.rfind("alpha=", 0) == 0) out.table.alpha = parse_alpha(tok.substr(6));
    }
  }
  if (!std::getline(f, line) || line != "index,label,count,significance") {
    throw DataFormatError("significance '" + path + "' lacks the expected column header");
  }
  std::size_t expect = 0;
  while (std::getline(f, line)) {
    if (line.empty()) continue;
    std::size_t c1 = line.find(',');
    std::size_t c2 = line.find(',', c1 + 1);
    std::size_t c3 = c2 == std::string::npos ? std::string::npos : line.find(',', c2 + 1);
    if (c3 == std::string::npos) throw DataFormatError("malformed significance row '" + line + "'");
    if (std::stoul(line.substr(0, c1)) != expect++) {
      throw DataFormatError("significance '" + path + "' rows are not dense in index order");
    }
    out.labels.push_back(std::stoi(line.substr(c1 + 1, c2 - c1 - 1)));
    out.counts.push_back(static_cast<std::uint32_t>(std::stoul(line.substr(c2 + 1, c3 - c2 - 1))));
    out.table.values.push_back(std::stod(line.substr(c3 + 1)));
  }
  return out;
}

inline void write_histogram_csv(const std::string& path,
                                const std::vector<SignificanceHistogram>& histograms) {
  std::ofstream f(path, std::ios::trunc);
  if (!f) throw IoError("cannot open '" + path + "' for writing");
  f << "# srkd-histogram v1\n";
  f << "class,bin_lo,bin_hi,count\n";
  for (const auto& h : histograms) {
    for (std::size_t b = 0; b < h.counts.size(); ++b) {
      f << h.class_id << ',' << fmt_g17(h.edges[b]) << ',' << fmt_g17(h.edges[b + 1]) << ','
        << h.counts[b] << "\n";
    }
  }
  if (!f) throw IoError("short write to '" + path + "'");
}

}  // namespace srkd
