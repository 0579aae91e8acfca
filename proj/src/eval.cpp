#include "edl/eval.hpp"

#include <algorithm>
#include <cmath>
#include <cstdlib>
#include <functional>
#include <numeric>
#include <sstream>
#include <thread>

#include "edl/error.hpp"
#include "edl/text.hpp"
#include "json.hpp"

namespace edl {

// ---------------------------------------------------------------------------
// Aggregation and prediction

AggregationMode AggregationMode::top(std::size_t m) {
  if (m == 0) fail(ErrorKind::kConfig, "top-m aggregation needs m >= 1");
  return AggregationMode(Kind::kTopM, m);
}

AggregationMode AggregationMode::parse(const std::string& name) {
  if (name == "max") return max();
  if (name == "sum") return sum();
  if (name.rfind("top", 0) == 0) {
    const auto m = text::parse_int(std::string_view(name).substr(3));
    if (m && *m >= 1) return top(static_cast<std::size_t>(*m));
  }
  fail(ErrorKind::kConfig, "unknown aggregation '" + name + "' (expected max, sum or top<m>)");
}

std::string AggregationMode::name() const {
  switch (kind_) {
    case Kind::kMax: return "max";
    case Kind::kSum: return "sum";
    case Kind::kTopM: return "top" + std::to_string(m_);
  }
  return "?";
}

double aggregate_uncertainty(std::span<const double> u, AggregationMode mode) {
  if (u.empty()) fail(ErrorKind::kInvalidInput, "cannot aggregate an empty uncertainty vector");
  switch (mode.kind()) {
    case AggregationMode::Kind::kMax:
      return *std::max_element(u.begin(), u.end());
    case AggregationMode::Kind::kSum:
      return std::accumulate(u.begin(), u.end(), 0.0);
    case AggregationMode::Kind::kTopM: {
      std::vector<double> sorted(u.begin(), u.end());
      const std::size_t m = std::min(mode.m(), sorted.size());
      std::partial_sort(sorted.begin(), sorted.begin() + static_cast<std::ptrdiff_t>(m),
                        sorted.end(), std::greater<>());
      return std::accumulate(sorted.begin(), sorted.begin() + static_cast<std::ptrdiff_t>(m), 0.0);
    }
  }
  return 0.0;
}

Prediction predict(std::span<const EvidencePair> evidences, const BaseRateSet& base,
                   EvidenceWeight w, double threshold, AggregationMode mode) {
  if (evidences.size() != base.size()) {
    fail(ErrorKind::kInvalidInput, "predict: evidence and base-rate counts differ");
  }
  Prediction p;
  for (std::size_t k = 0; k < evidences.size(); ++k) {
    const DirichletPair d = dirichlet_from_evidence(evidences[k], base[k], w);
    const ProbabilityPair prob = expected_probability(d);
    const Opinion o = opinion_from_evidence(evidences[k], base[k], w);
    p.p_pos.push_back(prob.pos);
    p.uncertainty.push_back(o.u());
    p.labels.push_back(prob.pos > threshold ? 1 : 0);
  }
  p.aggregated = aggregate_uncertainty(p.uncertainty, mode);
  return p;
}

std::size_t thread_cap_from_env() {
  std::size_t cap = std::max(1u, std::thread::hardware_concurrency());
  if (const char* env = std::getenv("EDL_NUM_THREADS")) {
    const auto v = text::parse_int(env);
    if (v && *v >= 1) cap = static_cast<std::size_t>(*v);
  }
  return cap;
}

std::vector<Prediction> predict_batch(const Model& model,
                                      const std::vector<std::vector<double>>& inputs,
                                      double threshold, AggregationMode mode,
                                      std::size_t threads) {
  std::vector<Prediction> out(inputs.size());
  const EvidenceWeight w(model.evidence_weight);
  auto work = [&](std::size_t begin, std::size_t end) {
    for (std::size_t i = begin; i < end; ++i) {
      const auto e = model_evidence(model, inputs[i]);
      out[i] = predict(e, model.base_rates, w, threshold, mode);
    }
  };
  threads = std::clamp<std::size_t>(threads, 1, std::max<std::size_t>(1, inputs.size()));
  if (threads == 1) {
    work(0, inputs.size());
    return out;
  }
  std::vector<std::exception_ptr> errors(threads);
  std::vector<std::thread> pool;
  const std::size_t chunk = (inputs.size() + threads - 1) / threads;
  for (std::size_t t = 0; t < threads; ++t) {
    const std::size_t begin = std::min(inputs.size(), t * chunk);
    const std::size_t end = std::min(inputs.size(), begin + chunk);
    pool.emplace_back([&, t, begin, end] {
      try {
        work(begin, end);
      } catch (...) {
        errors[t] = std::current_exception();
      }
    });
  }
  for (auto& th : pool) th.join();
  for (auto& e : errors) {
    if (e) std::rethrow_exception(e);
  }
  return out;
}

// ---------------------------------------------------------------------------
// Classification metrics

namespace {

bool is_empty_set(const MultiLabel& y) {
  return std::all_of(y.begin(), y.end(), [](std::uint8_t b) { return b == 0; });
}

void check_pair(const std::vector<MultiLabel>& predicted, const std::vector<MultiLabel>& truth) {
  if (predicted.size() != truth.size()) {
    fail(ErrorKind::kInvalidInput, "prediction and ground-truth counts differ");
  }
  if (predicted.empty()) fail(ErrorKind::kInvalidInput, "empty evaluation set");
  const std::size_t k = truth.front().size();
  for (std::size_t i = 0; i < truth.size(); ++i) {
    if (truth[i].size() != k || predicted[i].size() != k) {
      fail(ErrorKind::kInvalidInput, "label vectors have inconsistent length");
    }
  }
}

}  // namespace

FScore f1_normal(const std::vector<MultiLabel>& predicted,
                 const std::vector<MultiLabel>& truth) {
  check_pair(predicted, truth);
  std::size_t tp = 0, fp = 0, fn = 0;
  for (std::size_t i = 0; i < truth.size(); ++i) {
    const bool pred_normal = is_empty_set(predicted[i]);
    const bool true_normal = is_empty_set(truth[i]);
    if (pred_normal && true_normal) ++tp;
    if (pred_normal && !true_normal) ++fp;
    if (!pred_normal && true_normal) ++fn;
  }
  const std::size_t denom = 2 * tp + fp + fn;
  if (denom == 0 || tp == 0) return {0.0, denom == 0};
  return {2.0 * static_cast<double>(tp) / static_cast<double>(denom), false};
}

double ClassCounts::precision() const {
  return tp + fp == 0 ? 0.0 : static_cast<double>(tp) / static_cast<double>(tp + fp);
}

double ClassCounts::recall() const {
  return tp + fn == 0 ? 0.0 : static_cast<double>(tp) / static_cast<double>(tp + fn);
}

std::optional<double> ClassCounts::f2() const {
  const std::size_t denom = 5 * tp + 4 * fn + fp;
  if (denom == 0) return std::nullopt;
  return 5.0 * static_cast<double>(tp) / static_cast<double>(denom);
}

std::vector<ClassCounts> per_class_counts(const std::vector<MultiLabel>& predicted,
                                          const std::vector<MultiLabel>& truth) {
  check_pair(predicted, truth);
  std::vector<ClassCounts> counts(truth.front().size());
  for (std::size_t i = 0; i < truth.size(); ++i) {
    for (std::size_t k = 0; k < counts.size(); ++k) {
      const bool p = predicted[i][k] != 0;
      const bool t = truth[i][k] != 0;
      if (p && t) ++counts[k].tp;
      if (p && !t) ++counts[k].fp;
      if (!p && t) ++counts[k].fn;
    }
  }
  return counts;
}

double f2_ciw(const std::vector<MultiLabel>& predicted,
              const std::vector<MultiLabel>& truth, const CiwTable& ciw) {
  const auto counts = per_class_counts(predicted, truth);
  if (ciw.size() != counts.size()) {
    fail(ErrorKind::kConfig, "CIW table covers " + std::to_string(ciw.size()) +
                                 " classes, predictions have " + std::to_string(counts.size()));
  }
  double weight_sum = 0.0;
  for (const auto& e : ciw.entries()) weight_sum += e.weight;
  if (weight_sum == 0.0) fail(ErrorKind::kConfig, "CIW weights sum to zero");

  double num = 0.0, den = 0.0;
  for (std::size_t k = 0; k < counts.size(); ++k) {
    const auto f2 = counts[k].f2();
    if (!f2) continue;
    num += ciw[k].weight * *f2;
    den += ciw[k].weight;
  }
  // Every class absent from both truth and predictions: nothing was missed.
  if (den == 0.0) return 1.0;
  return num / den;
}

double macro_f2(const std::vector<MultiLabel>& predicted,
                const std::vector<MultiLabel>& truth) {
  const auto counts = per_class_counts(predicted, truth);
  double sum = 0.0, n = 0.0;
  for (const auto& c : counts) {
    if (const auto f2 = c.f2()) {
      sum += *f2;
      n += 1.0;
    }
  }
  return n == 0.0 ? 1.0 : sum / n;
}

// ---------------------------------------------------------------------------
// Detection metrics

namespace {

struct Counts {
  std::size_t pos = 0;
  std::size_t neg = 0;
};

Counts check_scores(std::span<const double> scores, std::span<const std::uint8_t> labels,
                    bool need_negatives) {
  if (scores.size() != labels.size()) {
    fail(ErrorKind::kInvalidInput, "score and label counts differ");
  }
  Counts c;
  for (std::size_t i = 0; i < scores.size(); ++i) {
    if (std::isnan(scores[i])) fail(ErrorKind::kInvalidInput, "NaN detection score");
    (labels[i] ? c.pos : c.neg)++;
  }
  if (c.pos == 0) fail(ErrorKind::kUndefinedMetric, "no positive (unknown) samples");
  if (need_negatives && c.neg == 0) {
    fail(ErrorKind::kUndefinedMetric, "no negative (known) samples");
  }
  return c;
}

// Groups of tied scores in descending order, as cumulative (tp, fp) after
// accepting each group.
std::vector<std::pair<std::size_t, std::size_t>> cumulative_by_threshold(
    std::span<const double> scores, std::span<const std::uint8_t> labels) {
  std::vector<std::size_t> idx(scores.size());
  std::iota(idx.begin(), idx.end(), std::size_t{0});
  std::stable_sort(idx.begin(), idx.end(),
                   [&](std::size_t a, std::size_t b) { return scores[a] > scores[b]; });
  std::vector<std::pair<std::size_t, std::size_t>> out;
  std::size_t tp = 0, fp = 0;
  for (std::size_t i = 0; i < idx.size();) {
    std::size_t j = i;
    while (j < idx.size() && scores[idx[j]] == scores[idx[i]]) {
      (labels[idx[j]] ? tp : fp)++;
      ++j;
    }
    out.emplace_back(tp, fp);
    i = j;
  }
  return out;
}

}  // namespace

std::vector<RocPoint> roc_curve(std::span<const double> scores,
                                std::span<const std::uint8_t> labels) {
  const Counts c = check_scores(scores, labels, true);
  std::vector<RocPoint> curve{{0.0, 0.0}};
  for (auto [tp, fp] : cumulative_by_threshold(scores, labels)) {
    curve.push_back({static_cast<double>(fp) / static_cast<double>(c.neg),
                     static_cast<double>(tp) / static_cast<double>(c.pos)});
  }
  return curve;
}

double trapezoid_area(std::span<const RocPoint> curve) {
  double area = 0.0;
  for (std::size_t i = 1; i < curve.size(); ++i) {
    area += (curve[i].fpr - curve[i - 1].fpr) * (curve[i].tpr + curve[i - 1].tpr) / 2.0;
  }
  return area;
}

double auroc(std::span<const double> scores, std::span<const std::uint8_t> labels) {
  const Counts c = check_scores(scores, labels, true);
  std::vector<std::size_t> idx(scores.size());
  std::iota(idx.begin(), idx.end(), std::size_t{0});
  std::stable_sort(idx.begin(), idx.end(),
                   [&](std::size_t a, std::size_t b) { return scores[a] < scores[b]; });
  // Sum of (1-based, tie-averaged) ranks of the positives.
  double rank_sum = 0.0;
  for (std::size_t i = 0; i < idx.size();) {
    std::size_t j = i;
    std::size_t pos_in_group = 0;
    while (j < idx.size() && scores[idx[j]] == scores[idx[i]]) {
      pos_in_group += labels[idx[j]] ? 1 : 0;
      ++j;
    }
    const double avg_rank = (static_cast<double>(i + 1) + static_cast<double>(j)) / 2.0;
    rank_sum += avg_rank * static_cast<double>(pos_in_group);
    i = j;
  }
  const double p = static_cast<double>(c.pos);
  const double n = static_cast<double>(c.neg);
  return (rank_sum - p * (p + 1.0) / 2.0) / (p * n);
}

double aupr(std::span<const double> scores, std::span<const std::uint8_t> labels) {
  const Counts c = check_scores(scores, labels, false);
  double area = 0.0;
  double prev_recall = 0.0;
  for (auto [tp, fp] : cumulative_by_threshold(scores, labels)) {
    const double recall = static_cast<double>(tp) / static_cast<double>(c.pos);
    const double precision = static_cast<double>(tp) / static_cast<double>(tp + fp);
    area += (recall - prev_recall) * precision;
    prev_recall = recall;
  }
  return area;
}

double fpr_at_95_tpr(std::span<const double> scores, std::span<const std::uint8_t> labels) {
  const Counts c = check_scores(scores, labels, true);
  // Accepting the groups above a midpoint threshold is the same as accepting
  // every score > threshold; the +inf sentinel accepts nothing and -inf
  // accepts everything (TPR = FPR = 1).
  double best = 1.0;
  for (auto [tp, fp] : cumulative_by_threshold(scores, labels)) {
    if (100 * tp >= 95 * c.pos) {
      best = std::min(best, static_cast<double>(fp) / static_cast<double>(c.neg));
    }
  }
  return best;
}

double baseline_ood_score(std::span<const double> logits, BaselineMethod method) {
  if (logits.empty()) fail(ErrorKind::kInvalidInput, "empty logit vector");
  if (method == BaselineMethod::kMaxLogit) {
    return -*std::max_element(logits.begin(), logits.end());
  }
  double energy = 0.0;
  for (double z : logits) {
    energy += z > 0.0 ? z + std::log1p(std::exp(-z)) : std::log1p(std::exp(z));
  }
  return -energy;
}

std::vector<double> baseline_ood_scores(const std::vector<std::vector<double>>& logits,
                                        BaselineMethod method) {
  std::vector<double> out;
  out.reserve(logits.size());
  for (const auto& z : logits) out.push_back(baseline_ood_score(z, method));
  return out;
}

// ---------------------------------------------------------------------------
// Reports

namespace {

using nlohmann::ordered_json;

ordered_json opt(const std::optional<double>& v) {
  return v ? ordered_json(*v) : ordered_json(nullptr);
}

std::optional<double> get_opt(const ordered_json& j, const char* key) {
  if (!j.contains(key) || j.at(key).is_null()) return std::nullopt;
  return j.at(key).get<double>();
}

}  // namespace

std::string report_to_string(const MetricsReport& r) {
  ordered_json j;
  j["format"] = "edl-report v1";
  j["task"] = r.task;
  j["config"] = ordered_json::object();
  for (const auto& [k, v] : r.config) j["config"][k] = v;
  j["counts"] = {{"known", r.known_count}, {"unknown", r.unknown_count}};
  if (r.task == "msdc" || r.f2_ciw || r.f1_normal) {
    j["f2_ciw"] = opt(r.f2_ciw);
    j["f1_normal"] = opt(r.f1_normal);
    j["f1_normal_degenerate"] = r.f1_normal_degenerate;
    ordered_json classes = ordered_json::array();
    for (const auto& c : r.classes) {
      classes.push_back({{"class", c.class_name},
                         {"ciw", c.ciw},
                         {"tp", c.tp},
                         {"fp", c.fp},
                         {"fn", c.fn},
                         {"precision", c.precision},
                         {"recall", c.recall},
                         {"f2", opt(c.f2)}});
    }
    j["classes"] = std::move(classes);
  }
  if (r.task == "ood" || r.auroc) {
    j["score_method"] = r.score_method ? ordered_json(*r.score_method) : ordered_json(nullptr);
    j["auroc"] = opt(r.auroc);
    j["aupr"] = opt(r.aupr);
    j["fpr95"] = opt(r.fpr95);
    j["mean_score_known"] = opt(r.mean_score_known);
    j["mean_score_unknown"] = opt(r.mean_score_unknown);
  }
  return j.dump(2) + "\n";
}

MetricsReport report_from_string(const std::string& body) {
  MetricsReport r;
  try {
    const auto j = ordered_json::parse(body);
    if (j.at("format") != "edl-report v1") fail(ErrorKind::kData, "unsupported report format");
    r.task = j.at("task").get<std::string>();
    for (const auto& [k, v] : j.at("config").items()) r.config[k] = v.get<std::string>();
    r.known_count = j.at("counts").at("known").get<std::size_t>();
    r.unknown_count = j.at("counts").at("unknown").get<std::size_t>();
    r.f2_ciw = get_opt(j, "f2_ciw");
    r.f1_normal = get_opt(j, "f1_normal");
    if (j.contains("f1_normal_degenerate")) {
      r.f1_normal_degenerate = j.at("f1_normal_degenerate").get<bool>();
    }
    if (j.contains("classes")) {
      for (const auto& c : j.at("classes")) {
        ClassReport cr;
        cr.class_name = c.at("class").get<std::string>();
        cr.ciw = c.at("ciw").get<double>();
        cr.tp = c.at("tp").get<std::size_t>();
        cr.fp = c.at("fp").get<std::size_t>();
        cr.fn = c.at("fn").get<std::size_t>();
        cr.precision = c.at("precision").get<double>();
        cr.recall = c.at("recall").get<double>();
        cr.f2 = get_opt(c, "f2");
        r.classes.push_back(std::move(cr));
      }
    }
    if (j.contains("score_method") && !j.at("score_method").is_null()) {
      r.score_method = j.at("score_method").get<std::string>();
    }
    r.auroc = get_opt(j, "auroc");
    r.aupr = get_opt(j, "aupr");
    r.fpr95 = get_opt(j, "fpr95");
    r.mean_score_known = get_opt(j, "mean_score_known");
    r.mean_score_unknown = get_opt(j, "mean_score_unknown");
  } catch (const nlohmann::json::exception& e) {
    fail(ErrorKind::kData, std::string("malformed report: ") + e.what());
  }
  return r;
}

std::string report_summary(const MetricsReport& r) {
  std::ostringstream os;
  auto pct = [](const std::optional<double>& v) {
    if (!v) return std::string("n/a");
    std::ostringstream s;
    s.setf(std::ios::fixed);
    s.precision(2);
    s << *v * 100.0;
    return s.str();
  };
  os << "task: " << r.task << "  (known " << r.known_count << ", unknown "
     << r.unknown_count << ")\n";
  if (r.f2_ciw || r.f1_normal) {
    os << "  F2_CIW    " << pct(r.f2_ciw) << "\n";
    os << "  F1_Normal " << pct(r.f1_normal)
       << (r.f1_normal_degenerate ? "  (zero denominator)" : "") << "\n";
  }
  if (r.auroc) {
    os << "  score     " << r.score_method.value_or("?") << "\n";
    os << "  AUROC     " << pct(r.auroc) << "\n";
    os << "  AUPR      " << pct(r.aupr) << "\n";
    os << "  FPR95     " << pct(r.fpr95) << "\n";
  }
  return os.str();
}

}  // namespace edl
