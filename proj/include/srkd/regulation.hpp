// Self-regulation gate: adaptive threshold schedule, inter-class probability
// margin, per-sample inclusion decisions and participation bookkeeping.
//
// A sample is included in training iff it is predicted incorrectly, or it is
// predicted correctly but its margin is still below the epoch threshold.
#pragma once

#include <cmath>
#include <cstdint>
#include <fstream>
#include <sstream>
#include <span>
#include <string>
#include <vector>

#include "srkd/common.hpp"
#include "srkd/losses.hpp"

namespace srkd {

// eta(n) = 1 - exp(-alpha*n): 0 at epoch 0, strictly increasing, < 1.
// Requires finite alpha > 0; the forced-open "alpha = infinity" conventional
// mode is a sentinel handled by the training loops, not a threshold value
// (eta == 1 alone would still exclude a correct sample with margin 1).
inline double regulation_threshold(double alpha, std::uint64_t epoch_index) {
  if (!(alpha > 0.0) || std::isinf(alpha)) {
    throw InvalidParameterError("regulation alpha must be finite and > 0, got " + fmt_g17(alpha));
  }
  return 1.0 - std::exp(-alpha * static_cast<double>(epoch_index));
}

inline bool forced_open_alpha(double alpha) { return std::isinf(alpha) && alpha > 0.0; }

// Difference between the largest and second-largest entries. Tied maxima
// give 0, which keeps ambiguous samples below any positive threshold.
inline double margin(std::span<const double> probabilities) {
  if (probabilities.size() < 2) {
    throw InvalidParameterError("margin needs at least two class probabilities");
  }
  double first = -std::numeric_limits<double>::infinity();
  double second = first;
  for (double p : probabilities) {
    if (p > first) {
      second = first;
      first = p;
    } else if (p > second) {
      second = p;
    }
  }
  return first - second;
}

struct GateDecision {
  bool included;
  int predicted_label;  // argmax, lowest index on ties
  double margin;
  double threshold;
};

inline GateDecision gate(std::span<const double> probabilities, int true_label, double eta) {
  const int predicted = argmax_row(probabilities);
  const double delta = margin(probabilities);
  const bool included = predicted != true_label || delta < eta;
  return {included, predicted, delta, eta};
}

// Per-sample participation counts across a training run.
class ParticipationLedger {
 public:
  explicit ParticipationLedger(std::size_t t) : counts_(t, 0) {}

  void record(std::size_t sample_index) {
    if (sample_index >= counts_.size()) {
      throw InvalidParameterError("ledger index " + std::to_string(sample_index) +
                                  " out of range [0, " + std::to_string(counts_.size()) + ")");
    }
    counts_[sample_index] += 1;
  }

  void set_epochs(std::uint32_t n) { epochs_ = n; }
  std::uint32_t epochs() const { return epochs_; }

  std::size_t size() const { return counts_.size(); }
  const std::vector<std::uint32_t>& counts() const { return counts_; }

  std::uint64_t total() const {
    std::uint64_t sum = 0;
    for (std::uint32_t c : counts_) sum += c;
    return sum;
  }

 private:
  std::vector<std::uint32_t> counts_;
  std::uint32_t epochs_ = 0;
};

// ---- CSV serialization, consumed by the significance and metrics stages ----
//
//   # srkd-ledger v1 N=<epochs> alpha=<%.17g or inf>
//   index,label,count
//   0,3,12
//   ...

struct LedgerFile {
  std::vector<std::uint32_t> counts;
  std::vector<int> labels;
  std::uint32_t epochs = 0;
  double alpha = 0.0;
};

inline std::string format_alpha(double alpha) {
  return std::isinf(alpha) ? std::string("inf") : fmt_g17(alpha);
}

inline double parse_alpha(const std::string& s) {
  if (s == "inf" || s == "infinity") return std::numeric_limits<double>::infinity();
  try {
    std::size_t pos = 0;
    double v = std::stod(s, &pos);
    if (pos != s.size()) throw std::invalid_argument(s);
    return v;
  } catch (const std::exception&) {
    throw DataFormatError("cannot parse alpha value '" + s + "'");
  }
}

inline void write_ledger_csv(const std::string& path, const ParticipationLedger& ledger,
                             const std::vector<int>& labels, double alpha) {
  if (labels.size() != ledger.size()) {
    throw InvalidParameterError("ledger/label size mismatch: " + std::to_string(ledger.size()) +
                                " vs " + std::to_string(labels.size()));
  }
  std::ofstream f(path, std::ios::trunc);
  if (!f) throw IoError("cannot open '" + path + "' for writing");
  f << "# srkd-ledger v1 N=" << ledger.epochs() << " alpha=" << format_alpha(alpha) << "\n";
  f << "index,label,count\n";
  for (std::size_t i = 0; i < ledger.size(); ++i) {
    f << i << ',' << labels[i] << ',' << ledger.counts()[i] << "\n";
  }
  if (!f) throw IoError("short write to '" + path + "'");
}

inline LedgerFile read_ledger_csv(const std::string& path) {
  std::ifstream f(path);
  if (!f) throw IoError("cannot open '" + path + "'");
  std::string line;
  if (!std::getline(f, line) || line.rfind("# srkd-ledger v1 ", 0) != 0) {
    throw DataFormatError("'" + path + "' is not a srkd-ledger v1 CSV");
  }
  LedgerFile out;
  {
    std::istringstream hdr(line.substr(std::string("# srkd-ledger v1 ").size()));
    std::string tok;
    bool have_n = false, have_a = false;
    while (hdr >> tok) {
      if (tok.rfind("N=", 0) == 0) {
        out.epochs = static_cast<std::uint32_t>(std::stoul(tok.substr(2)));
        have_n = true;
      } else if (tok.rfind("alpha=", 0) == 0) {
        out.alpha = parse_alpha(tok.substr(6));
        have_a = true;
      }
    }
    if (!have_n || !have_a) throw DataFormatError("ledger header in '" + path + "' lacks N/alpha");
  }
  if (!std::getline(f, line) || line != "index,label,count") {
    throw DataFormatError("ledger '" + path + "' lacks the index,label,count column header");
  }
  std::size_t expect = 0;
  while (std::getline(f, line)) {
    if (line.empty()) continue;
    std::size_t c1 = line.find(',');
    std::size_t c2 = c1 == std::string::npos ? std::string::npos : line.find(',', c1 + 1);
    if (c2 == std::string::npos) throw DataFormatError("malformed ledger row '" + line + "'");
    const std::size_t idx = std::stoul(line.substr(0, c1));
    if (idx != expect++) {
      throw DataFormatError("ledger '" + path + "' rows are not dense in index order");
    }
    out.labels.push_back(std::stoi(line.substr(c1 + 1, c2 - c1 - 1)));
    out.counts.push_back(static_cast<std::uint32_t>(std::stoul(line.substr(c2 + 1))));
  }
  return out;
}

}  // namespace srkd
