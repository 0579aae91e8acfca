#pragma once

// Inference-time prediction and the evaluation metrics for multi-label
// classification (F1_Normal, F2_CIW) and unknown-sample detection (AUROC,
// AUPR, FPR95). Detection scores are oriented so higher = more unknown;
// unknown samples are the positive class.

#include <cstddef>
#include <cstdint>
#include <map>
#include <optional>
#include <span>
#include <string>
#include <vector>

#include "edl/ebra.hpp"
#include "edl/loss.hpp"
#include "edl/net.hpp"
#include "edl/sl_core.hpp"

namespace edl {

inline constexpr double kDefaultThreshold = 0.5;

class AggregationMode {
 public:
  enum class Kind { kMax, kSum, kTopM };

  static AggregationMode max() { return AggregationMode(Kind::kMax, 1); }
  static AggregationMode sum() { return AggregationMode(Kind::kSum, 1); }
  static AggregationMode top(std::size_t m);

  // Accepts "max", "sum" and "top<m>" (e.g. "top5").
  static AggregationMode parse(const std::string& name);

  Kind kind() const noexcept { return kind_; }
  std::size_t m() const noexcept { return m_; }
  std::string name() const;

 private:
  AggregationMode(Kind kind, std::size_t m) : kind_(kind), m_(m) {}
  Kind kind_;
  std::size_t m_;
};

struct Prediction {
  std::vector<double> p_pos;        // expected defective probability per head
  std::vector<double> uncertainty;  // W / S_k per head
  double aggregated = 0.0;
  MultiLabel labels;                // p_pos > threshold
};

// Max -> maximum, Sum -> total, TopM -> sum of the min(m, K) largest.
double aggregate_uncertainty(std::span<const double> u, AggregationMode mode);

Prediction predict(std::span<const EvidencePair> evidences, const BaseRateSet& base,
                   EvidenceWeight w, double threshold = kDefaultThreshold,
                   AggregationMode mode = AggregationMode::max());

// Model forward + predict over many inputs. Work is split across at most
// `threads` workers; each output slot is written by exactly one worker so the
// result does not depend on the thread count.
std::vector<Prediction> predict_batch(const Model& model,
                                      const std::vector<std::vector<double>>& inputs,
                                      double threshold, AggregationMode mode,
                                      std::size_t threads = 1);

// Thread cap from EDL_NUM_THREADS (default: hardware concurrency, min 1).
std::size_t thread_cap_from_env();

// ---------------------------------------------------------------------------
// Multi-label classification metrics

struct FScore {
  double value = 0.0;
  bool zero_denominator = false;  // value forced to 0
};

// F1 of the "normal" decision: a sample is normal iff its label set is empty.
FScore f1_normal(const std::vector<MultiLabel>& predicted,
                 const std::vector<MultiLabel>& truth);

struct ClassCounts {
  std::size_t tp = 0;
  std::size_t fp = 0;
  std::size_t fn = 0;

  double precision() const;
  double recall() const;
  // 5PR / (4P + R) in count form 5TP / (5TP + 4FN + FP); nullopt when the
  // class is absent from both truth and predictions.
  std::optional<double> f2() const;
};

std::vector<ClassCounts> per_class_counts(const std::vector<MultiLabel>& predicted,
                                          const std::vector<MultiLabel>& truth);

// sum_k ciw_k F2_k / sum_k ciw_k over classes with a defined F2. Throws
// kConfig when the table size differs from K or the weights sum to zero.
double f2_ciw(const std::vector<MultiLabel>& predicted,
              const std::vector<MultiLabel>& truth, const CiwTable& ciw);

// Unweighted mean of the defined per-class F2 values.
double macro_f2(const std::vector<MultiLabel>& predicted,
                const std::vector<MultiLabel>& truth);

// ---------------------------------------------------------------------------
// Detection metrics. labels[i] = 1 marks an unknown (positive) sample.

struct RocPoint {
  double fpr = 0.0;
  double tpr = 0.0;
};

// One point per distinct score (descending), starting at (0,0).
std::vector<RocPoint> roc_curve(std::span<const double> scores,
                                std::span<const std::uint8_t> labels);
double trapezoid_area(std::span<const RocPoint> curve);

// Mann-Whitney form: P(score_pos > score_neg) + 1/2 P(tie).
double auroc(std::span<const double> scores, std::span<const std::uint8_t> labels);

// Step-wise area under precision-recall (average precision).
double aupr(std::span<const double> scores, std::span<const std::uint8_t> labels);

// Smallest FPR over thresholds (midpoints of distinct scores plus +-inf)
// whose TPR is at least 95%.
double fpr_at_95_tpr(std::span<const double> scores,
                     std::span<const std::uint8_t> labels);

enum class BaselineMethod { kMaxLogit, kJointEnergy };

// MaxLogit: -max_k z_k. JointEnergy: -sum_k log(1 + exp(z_k)).
double baseline_ood_score(std::span<const double> logits, BaselineMethod method);
std::vector<double> baseline_ood_scores(const std::vector<std::vector<double>>& logits,
                                        BaselineMethod method);

// ---------------------------------------------------------------------------
// Reports

struct ClassReport {
  std::string class_name;
  double ciw = 1.0;
  std::size_t tp = 0;
  std::size_t fp = 0;
  std::size_t fn = 0;
  double precision = 0.0;
  double recall = 0.0;
  std::optional<double> f2;

  friend bool operator==(const ClassReport&, const ClassReport&) = default;
};

struct MetricsReport {
  std::string task;  // "msdc" or "ood"
  std::map<std::string, std::string> config;  // resolved run configuration
  std::size_t known_count = 0;
  std::size_t unknown_count = 0;

  std::optional<double> f2_ciw;
  std::optional<double> f1_normal;
  bool f1_normal_degenerate = false;
  std::vector<ClassReport> classes;

  std::optional<std::string> score_method;  // e.g. "uncertainty-max"
  std::optional<double> auroc;
  std::optional<double> aupr;
  std::optional<double> fpr95;
  std::optional<double> mean_score_known;
  std::optional<double> mean_score_unknown;

  friend bool operator==(const MetricsReport&, const MetricsReport&) = default;
};

std::string report_to_string(const MetricsReport& report);
MetricsReport report_from_string(const std::string& text);

// Human-readable multi-line summary.
std::string report_summary(const MetricsReport& report);

}  // namespace edl
