// Training loops: self-regulated teacher training and the four knowledge
// transfer modes (conventional, significance-based, regulated, hybrid).
//
// Gating granularity: decisions are made per sample from the forward pass of
// the current batch (pre-update model state); excluded samples are masked out
// of the batch loss, which is the mean over included samples only, and one
// optimizer step is taken per batch. A fully excluded batch takes no step.
#pragma once

#include <cmath>
#include <cstdint>
#include <functional>
#include <optional>
#include <string>
#include <vector>

#include <json.hpp>

#include "srkd/adam.hpp"
#include "srkd/common.hpp"
#include "srkd/data.hpp"
#include "srkd/losses.hpp"
#include "srkd/metrics.hpp"
#include "srkd/model.hpp"
#include "srkd/regulation.hpp"
#include "srkd/significance.hpp"

namespace srkd {

enum class DistillMode { conventional, significance, regulated, hybrid };

inline const char* distill_mode_name(DistillMode m) {
  switch (m) {
    case DistillMode::conventional: return "conventional";
    case DistillMode::significance: return "significance";
    case DistillMode::regulated: return "regulated";
    case DistillMode::hybrid: return "hybrid";
  }
  return "?";
}

inline DistillMode distill_mode_from_name(const std::string& name) {
  if (name == "conventional") return DistillMode::conventional;
  if (name == "significance") return DistillMode::significance;
  if (name == "regulated") return DistillMode::regulated;
  if (name == "hybrid") return DistillMode::hybrid;
  throw ConfigError("unknown distillation mode '" + name + "'");
}

struct TeacherConfig {
  double alpha = 0.02;  // +infinity = conventional training (gate forced open)
  std::uint32_t epochs = 1;
  std::size_t batch_size = 512;
  AdamConfig adam;
  std::uint64_t seed = 0;
  int threads = 1;
};

struct DistillConfig {
  DistillMode mode = DistillMode::conventional;
  double tau = 20.0;
  double lambda = 0.3;
  double alpha = 0.02;  // used by regulated/hybrid; +infinity forces the gate open
  std::uint32_t epochs = 1;
  std::size_t batch_size = 512;
  AdamConfig adam;
  std::uint64_t seed = 0;
  bool tau2_rescale = false;   // scale the KD term by tau^2 (off: loss used as written)
  bool cache_teacher = false;  // cache per-sample teacher logits across epochs
  int threads = 1;
};

struct EpochStats {
  std::uint32_t epoch = 0;
  std::uint64_t included = 0;  // gated-in sample visits this epoch
  std::uint64_t batches = 0;   // batches that took an optimizer step
  double mean_loss = 0.0;      // mean of stepped-batch losses (0 when no step)
  double train_accuracy = 0.0;
};

struct TrainReport {
  std::string kind;     // "teacher" or "distill"
  std::string mode;     // teacher: "teacher"; distill: the mode name
  std::string dataset;
  std::uint64_t seed = 0;
  std::vector<EpochStats> epochs;
  std::optional<double> test_accuracy;
  std::uint64_t total_participation = 0;
  EfficiencyRecord eff;
  nlohmann::json config_echo;
};

// Observer of gradient-contributing sample visits (independent event log).
struct TrainHooks {
  std::function<void(std::uint32_t epoch, std::uint64_t batch, std::size_t sample)> on_include;
};

inline nlohmann::json report_to_json(const TrainReport& r) {
  nlohmann::json epochs = nlohmann::json::array();
  for (const EpochStats& e : r.epochs) {
    epochs.push_back({{"epoch", e.epoch},
                      {"included", e.included},
                      {"batches", e.batches},
                      {"mean_loss", e.mean_loss},
                      {"train_accuracy", e.train_accuracy}});
  }
  nlohmann::json fin = {
      {"total_participation", r.total_participation},
      {"efficiency",
       {{"participations", r.eff.participations},
        {"available", r.eff.available},
        {"value", r.eff.value},
        {"percent", r.eff.percent}}}};
  fin["test_accuracy"] = r.test_accuracy ? nlohmann::json(*r.test_accuracy) : nlohmann::json();
  return nlohmann::json{{"schema_version", kReportSchemaVersion},
                        {"kind", r.kind},
                        {"mode", r.mode},
                        {"dataset", r.dataset},
                        {"seed", r.seed},
                        {"config", r.config_echo},
                        {"epochs", epochs},
                        {"final", fin}};
}

namespace detail {

inline void check_finite_loss(double loss, std::uint32_t epoch, std::uint64_t batch) {
  if (!std::isfinite(loss)) {
    throw NumericError("non-finite training loss " + fmt_g17(loss) + " at epoch " +
                       std::to_string(epoch) + ", batch " + std::to_string(batch));
  }
}

}  // namespace detail

// Batched distillation objective and its gradient w.r.t. the student logits.
//
// Per sample: l_i = CE(softmax(z_T/tau), softmax(z_S/tau))
//                 + lambda * CE(onehot(y), softmax(z_S))
// weighted mode multiplies both terms by the sample's significance n_hat.
// The batch value is the mean of w_i*l_i over included samples.
struct DistillLossResult {
  double loss = 0.0;
  Tensor dlogits;                  // dL/dz_S, zero rows for excluded samples
  std::vector<double> per_sample;  // w_i * l_i (0 for excluded)
};

inline DistillLossResult distill_loss(const Tensor& teacher_logits, const Tensor& student_logits,
                                      const std::vector<int>& labels, double tau, double lambda,
                                      const std::vector<double>* nhat, bool weighted,
                                      const std::vector<char>* included = nullptr,
                                      bool tau2_rescale = false) {
  if (!(tau > 0.0)) throw InvalidParameterError("distill tau must be positive, got " + fmt_g17(tau));
  if (!(lambda >= 0.0)) {
    throw InvalidParameterError("distill lambda must be >= 0, got " + fmt_g17(lambda));
  }
  if (teacher_logits.rank() != 2 || !same_shape(teacher_logits, student_logits)) {
    throw ShapeError("distill_loss logits must share shape [B, C], got " +
                     shape_str(teacher_logits.shape) + " vs " + shape_str(student_logits.shape));
  }
  const std::size_t B = teacher_logits.dim(0);
  const std::size_t C = teacher_logits.dim(1);
  if (labels.size() != B) throw ShapeError("distill_loss label count does not match batch");
  if (weighted && (!nhat || nhat->size() != B)) {
    throw ConfigError("weighted distillation requires one significance value per sample");
  }

  const double kd_scale = tau2_rescale ? tau * tau : 1.0;
  DistillLossResult res;
  res.dlogits = Tensor(student_logits.shape);
  res.per_sample.assign(B, 0.0);

  std::vector<double> yt(C), ys(C), ys1(C);
  std::size_t m = 0;
  double total = 0.0;
  for (std::size_t b = 0; b < B; ++b) {
    if (included && !(*included)[b]) continue;
    ++m;
    const double w = weighted ? (*nhat)[b] : 1.0;
    softmax_row(teacher_logits.row(b), yt, tau);
    softmax_row(student_logits.row(b), ys, tau);
    softmax_row(student_logits.row(b), ys1, 1.0);
    double kd = cross_entropy_row(yt, ys) * kd_scale;
    double ce = -std::log(std::max(ys1[static_cast<std::size_t>(labels[b])], kProbFloor));
    const double li = w * (kd + lambda * ce);
    res.per_sample[b] = li;
    total += li;
    double* dz = res.dlogits.data.data() + b * C;
    for (std::size_t c = 0; c < C; ++c) {
      double g = (ys[c] - yt[c]) / tau * kd_scale + lambda * ys1[c];
      if (static_cast<int>(c) == labels[b]) g -= lambda;
      dz[c] = w * g;
    }
  }
  if (m > 0) {
    const double inv_m = 1.0 / static_cast<double>(m);
    res.loss = total * inv_m;
    for (double& v : res.dlogits.data) v *= inv_m;
  }
  return res;
}

struct TeacherResult {
  ParticipationLedger ledger;
  TrainReport report;
};

// Self-regulated teacher training. The model is gated on its own temperature-1
// outputs; participation is recorded per gated-in sample visit. Conventional
// training is alpha = +infinity (gate forced open, every sample every epoch).
inline TeacherResult train_teacher(SequentialModel& model, const Dataset& train,
                                   const TeacherConfig& cfg, const Dataset* test = nullptr,
                                   const TrainHooks* hooks = nullptr) {
  if (model.num_classes() != train.classes) {
    throw ShapeError("model outputs " + std::to_string(model.num_classes()) +
                     " classes but dataset has " + std::to_string(train.classes));
  }
  if (cfg.epochs == 0) throw InvalidParameterError("epochs must be >= 1");
  if (cfg.batch_size == 0) throw InvalidParameterError("batch size must be >= 1");
  const bool forced_open = forced_open_alpha(cfg.alpha);
  if (!forced_open) regulation_threshold(cfg.alpha, 0);  // validates alpha

  const std::size_t t = train.size();
  const std::size_t C = train.classes;
  Rng init_rng(cfg.seed);
  model.init_parameters(init_rng);
  AdamState opt = AdamState::init(model.parameters(), cfg.adam);
  BatchPlan plan{cfg.seed, cfg.batch_size};
  ParticipationLedger ledger(t);
  TrainReport report;
  report.kind = "teacher";
  report.mode = "teacher";
  report.dataset = train.name;
  report.seed = cfg.seed;

  std::vector<char> included;
  std::vector<double> probs;
  for (std::uint32_t epoch = 0; epoch < cfg.epochs; ++epoch) {
    const double eta = forced_open ? 1.0 : regulation_threshold(cfg.alpha, epoch);
    const std::vector<std::size_t> order = plan.epoch_order(t, epoch);
    EpochStats stats;
    stats.epoch = epoch;
    std::uint64_t correct = 0;
    double loss_sum = 0.0;
    std::uint64_t batch_no = 0;
    for (std::size_t start = 0; start < t; start += cfg.batch_size, ++batch_no) {
      const std::size_t end = std::min(start + cfg.batch_size, t);
      const std::span<const std::size_t> idx(order.data() + start, end - start);
      const std::size_t B = idx.size();

      ForwardTrace trace;
      Tensor logits = forward(model, train.batch(idx), &trace, cfg.threads);
      probs.resize(B * C);
      included.assign(B, 1);
      std::size_t m = 0;
      for (std::size_t b = 0; b < B; ++b) {
        std::span<double> p(probs.data() + b * C, C);
        softmax_row(logits.row(b), p, 1.0);
        const int label = train.labels[idx[b]];
        if (!forced_open) {
          GateDecision d = gate(p, label, eta);
          included[b] = d.included ? 1 : 0;
          if (d.predicted_label == label) ++correct;
        } else if (argmax_row(p) == label) {
          ++correct;
        }
        if (included[b]) ++m;
      }
      if (m == 0) continue;

      // masked hard cross-entropy at temperature 1, mean over included samples
      const double inv_m = 1.0 / static_cast<double>(m);
      Tensor dlogits(logits.shape);
      double loss = 0.0;
      for (std::size_t b = 0; b < B; ++b) {
        if (!included[b]) continue;
        const double* p = probs.data() + b * C;
        const std::size_t label = static_cast<std::size_t>(train.labels[idx[b]]);
        loss -= std::log(std::max(p[label], kProbFloor));
        double* dz = dlogits.data.data() + b * C;
        for (std::size_t c = 0; c < C; ++c) dz[c] = (p[c] - (c == label ? 1.0 : 0.0)) * inv_m;
      }
      loss *= inv_m;
      detail::check_finite_loss(loss, epoch, batch_no);

      std::vector<Tensor> grads = backward(model, trace, dlogits, cfg.threads);
      adam_step(opt, model.parameters(), grads);
      for (std::size_t b = 0; b < B; ++b) {
        if (!included[b]) continue;
        ledger.record(idx[b]);
        if (hooks && hooks->on_include) hooks->on_include(epoch, batch_no, idx[b]);
      }
      stats.included += m;
      stats.batches += 1;
      loss_sum += loss;
    }
    stats.mean_loss = stats.batches ? loss_sum / static_cast<double>(stats.batches) : 0.0;
    stats.train_accuracy = static_cast<double>(correct) / static_cast<double>(t);
    report.epochs.push_back(stats);
  }
  ledger.set_epochs(cfg.epochs);
  report.total_participation = ledger.total();
  report.eff = efficiency(ledger);
  if (test) report.test_accuracy = evaluate(model, *test, cfg.batch_size, cfg.threads);
  return {std::move(ledger), std::move(report)};
}

struct DistillResult {
  ParticipationLedger ledger;
  TrainReport report;
};

// Knowledge transfer from a frozen teacher. Mode semantics:
//   conventional: every sample, unweighted loss
//   significance: every sample, per-sample losses scaled by n_hat
//   regulated:    gate on the student's temperature-tau outputs, unweighted
//   hybrid:       gate and n_hat weighting combined
// The student's participation ledger is recorded in all modes (constant-full
// for the ungated ones).
inline DistillResult distill(const SequentialModel& teacher, SequentialModel& student,
                             const Dataset& train, const DistillConfig& cfg,
                             const SignificanceTable* table, const Dataset* test = nullptr,
                             const TrainHooks* hooks = nullptr) {
  const bool weighted =
      cfg.mode == DistillMode::significance || cfg.mode == DistillMode::hybrid;
  const bool gated = cfg.mode == DistillMode::regulated || cfg.mode == DistillMode::hybrid;
  if (weighted && !table) {
    throw ConfigError(std::string(distill_mode_name(cfg.mode)) +
                      " distillation requires a significance table");
  }
  if (!weighted && table) {
    throw ConfigError(std::string(distill_mode_name(cfg.mode)) +
                      " distillation does not take a significance table");
  }
  if (weighted && table->values.size() != train.size()) {
    throw ConfigError("significance table has " + std::to_string(table->values.size()) +
                      " entries but dataset has " + std::to_string(train.size()));
  }
  if (weighted) {
    for (double v : table->values) {
      if (!(v >= 0.0 && v <= 1.0)) {
        throw InvalidParameterError("significance values must lie in [0, 1], got " + fmt_g17(v));
      }
    }
  }
  if (teacher.num_classes() != train.classes || student.num_classes() != train.classes) {
    throw ShapeError("teacher/student class width must equal the dataset's " +
                     std::to_string(train.classes));
  }
  if (cfg.epochs == 0) throw InvalidParameterError("epochs must be >= 1");
  if (cfg.batch_size == 0) throw InvalidParameterError("batch size must be >= 1");
  if (!(cfg.tau > 0.0)) throw InvalidParameterError("tau must be positive");
  if (!(cfg.lambda >= 0.0)) throw InvalidParameterError("lambda must be >= 0");
  const bool forced_open = forced_open_alpha(cfg.alpha);
  if (gated && !forced_open) regulation_threshold(cfg.alpha, 0);

  const std::size_t t = train.size();
  const std::size_t C = train.classes;
  Rng init_rng(cfg.seed);
  student.init_parameters(init_rng);
  AdamState opt = AdamState::init(student.parameters(), cfg.adam);
  BatchPlan plan{cfg.seed, cfg.batch_size};
  ParticipationLedger ledger(t);
  TrainReport report;
  report.kind = "distill";
  report.mode = distill_mode_name(cfg.mode);
  report.dataset = train.name;
  report.seed = cfg.seed;

  // The teacher is frozen, so its per-sample logits are epoch constants; the
  // cache trades memory for skipping the recomputation (bit-identical since
  // every layer is per-sample independent).
  std::vector<double> teacher_cache;
  std::vector<char> teacher_cached;
  if (cfg.cache_teacher) {
    teacher_cache.assign(t * C, 0.0);
    teacher_cached.assign(t, 0);
  }

  std::vector<char> included;
  std::vector<double> nhat_batch;
  std::vector<int> labels_batch;
  for (std::uint32_t epoch = 0; epoch < cfg.epochs; ++epoch) {
    const double eta =
        gated ? (forced_open ? 1.0 : regulation_threshold(cfg.alpha, epoch)) : 0.0;
    const std::vector<std::size_t> order = plan.epoch_order(t, epoch);
    EpochStats stats;
    stats.epoch = epoch;
    std::uint64_t correct = 0;
    double loss_sum = 0.0;
    std::uint64_t batch_no = 0;
    for (std::size_t start = 0; start < t; start += cfg.batch_size, ++batch_no) {
      const std::size_t end = std::min(start + cfg.batch_size, t);
      const std::span<const std::size_t> idx(order.data() + start, end - start);
      const std::size_t B = idx.size();
      const Tensor batch = train.batch(idx);

      Tensor teacher_logits;
      if (cfg.cache_teacher) {
        std::vector<std::size_t> missing;
        for (std::size_t i : idx) {
          if (!teacher_cached[i]) missing.push_back(i);
        }
        if (!missing.empty()) {
          Tensor z = forward(teacher, train.batch(missing), nullptr, cfg.threads);
          for (std::size_t b = 0; b < missing.size(); ++b) {
            std::copy_n(z.data.data() + b * C, C, teacher_cache.data() + missing[b] * C);
            teacher_cached[missing[b]] = 1;
          }
        }
        teacher_logits = Tensor({B, C});
        for (std::size_t b = 0; b < B; ++b) {
          std::copy_n(teacher_cache.data() + idx[b] * C, C, teacher_logits.data.data() + b * C);
        }
      } else {
        teacher_logits = forward(teacher, batch, nullptr, cfg.threads);
      }

      ForwardTrace trace;
      Tensor student_logits = forward(student, batch, &trace, cfg.threads);

      labels_batch.resize(B);
      for (std::size_t b = 0; b < B; ++b) labels_batch[b] = train.labels[idx[b]];

      // gate on the student's temperature-tau probabilities
      included.assign(B, 1);
      std::vector<double> ys(C);
      std::size_t m = 0;
      for (std::size_t b = 0; b < B; ++b) {
        softmax_row(student_logits.row(b), ys, cfg.tau);
        const int label = labels_batch[b];
        int predicted;
        if (gated && !forced_open) {
          GateDecision d = gate(ys, label, eta);
          included[b] = d.included ? 1 : 0;
          predicted = d.predicted_label;
        } else {
          predicted = argmax_row(ys);
        }
        if (predicted == label) ++correct;
        if (included[b]) ++m;
      }
      if (m == 0) continue;

      if (weighted) {
        nhat_batch.resize(B);
        for (std::size_t b = 0; b < B; ++b) nhat_batch[b] = table->values[idx[b]];
      }
      DistillLossResult lr =
          distill_loss(teacher_logits, student_logits, labels_batch, cfg.tau, cfg.lambda,
                       weighted ? &nhat_batch : nullptr, weighted, &included, cfg.tau2_rescale);
      detail::check_finite_loss(lr.loss, epoch, batch_no);

      std::vector<Tensor> grads = backward(student, trace, lr.dlogits, cfg.threads);
      adam_step(opt, student.parameters(), grads);
      for (std::size_t b = 0; b < B; ++b) {
        if (!included[b]) continue;
        ledger.record(idx[b]);
        if (hooks && hooks->on_include) hooks->on_include(epoch, batch_no, idx[b]);
      }
      stats.included += m;
      stats.batches += 1;
      loss_sum += lr.loss;
    }
    stats.mean_loss = stats.batches ? loss_sum / static_cast<double>(stats.batches) : 0.0;
    stats.train_accuracy = static_cast<double>(correct) / static_cast<double>(t);
    report.epochs.push_back(stats);
  }
  ledger.set_epochs(cfg.epochs);
  report.total_participation = ledger.total();
  report.eff = efficiency(ledger);
  if (test) report.test_accuracy = evaluate(student, *test, cfg.batch_size, cfg.threads);
  return {std::move(ledger), std::move(report)};
}

}  // namespace srkd
