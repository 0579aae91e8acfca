#include "edl/eval.hpp"

#include <algorithm>
#include <cmath>
#include <limits>
#include <numeric>
#include <random>

#include "doctest.h"
#include "edl/error.hpp"
#include "oracles.hpp"

using namespace edl;

namespace {

using Labels = std::vector<std::uint8_t>;

ErrorKind kind_of(const std::function<void()>& f) {
  try {
    f();
  } catch (const Error& e) {
    return e.kind();
  }
  FAIL("expected an edl::Error");
  return ErrorKind::kInvalidInput;
}

struct Scored {
  std::vector<double> scores;
  Labels labels;
};

// Scores rounded to a coarse grid so ties are common.
Scored random_scored(std::size_t n, std::mt19937_64& rng, double grid = 0.1) {
  std::uniform_real_distribution<double> u(0.0, 1.0);
  Scored s;
  for (std::size_t i = 0; i < n; ++i) {
    s.scores.push_back(std::round(u(rng) / grid) * grid);
    s.labels.push_back(u(rng) < 0.4 ? 1 : 0);
  }
  s.labels[0] = 1;
  s.labels[1] = 0;
  return s;
}

std::vector<MultiLabel> random_labels(std::size_t n, std::size_t k, std::mt19937_64& rng) {
  std::vector<MultiLabel> out(n, MultiLabel(k));
  for (auto& y : out) {
    for (auto& b : y) b = rng() % 3 == 0;
  }
  return out;
}

}  // namespace

TEST_CASE("aggregation examples") {
  const std::vector<double> u{0.2, 0.9, 0.5};
  CHECK(aggregate_uncertainty(u, AggregationMode::max()) == 0.9);
  CHECK(aggregate_uncertainty(u, AggregationMode::sum()) == doctest::Approx(1.6).epsilon(1e-15));
  CHECK(aggregate_uncertainty(u, AggregationMode::top(2)) == doctest::Approx(1.4).epsilon(1e-15));
  CHECK(aggregate_uncertainty(u, AggregationMode::top(5)) ==
        doctest::Approx(aggregate_uncertainty(u, AggregationMode::sum())).epsilon(1e-15));
  CHECK(kind_of([] { (void)aggregate_uncertainty({}, AggregationMode::max()); }) ==
        ErrorKind::kInvalidInput);
  CHECK(kind_of([] { (void)AggregationMode::top(0); }) == ErrorKind::kConfig);
}

TEST_CASE("aggregation mode names") {
  CHECK(AggregationMode::parse("max").kind() == AggregationMode::Kind::kMax);
  CHECK(AggregationMode::parse("sum").kind() == AggregationMode::Kind::kSum);
  CHECK(AggregationMode::parse("top5").m() == 5);
  CHECK(AggregationMode::parse("top5").name() == "top5");
  for (const char* bad : {"mean", "top", "top0", "topx", ""}) {
    CHECK(kind_of([&] { (void)AggregationMode::parse(bad); }) == ErrorKind::kConfig);
  }
}

TEST_CASE("property: Max <= TopM <= Sum") {
  std::mt19937_64 rng(11);
  std::uniform_real_distribution<double> u(0.0, 1.0);
  for (int t = 0; t < 2000; ++t) {
    std::vector<double> v(1 + rng() % 8);
    for (double& x : v) x = u(rng);
    const std::size_t m = 1 + rng() % v.size();
    const double mx = aggregate_uncertainty(v, AggregationMode::max());
    const double tm = aggregate_uncertainty(v, AggregationMode::top(m));
    const double sm = aggregate_uncertainty(v, AggregationMode::sum());
    CHECK(mx <= tm);
    CHECK(tm <= sm * (1 + 1e-15));
  }
}

TEST_CASE("predict examples") {
  const EvidenceWeight w;
  const std::vector<EvidencePair> zero(3);
  const auto vac = predict(zero, uniform_base_rates(3), w);
  CHECK(vac.aggregated == 1.0);
  CHECK(vac.labels == MultiLabel{0, 0, 0});

  const std::vector<EvidencePair> one{EvidencePair(2, 0)};
  const auto p = predict(one, uniform_base_rates(1), w);
  CHECK(p.p_pos[0] == 0.75);
  CHECK(p.uncertainty[0] == 0.5);
  CHECK(p.labels == MultiLabel{1});

  const BaseRateSet ebra{BaseRatePair::from_positive(0.7311)};
  const auto q = predict(std::vector<EvidencePair>(1), ebra, w);
  CHECK(q.p_pos[0] == doctest::Approx(0.7311).epsilon(1e-15));
  CHECK(q.labels == MultiLabel{1});

  CHECK(kind_of([&] { (void)predict(one, uniform_base_rates(2), w); }) == ErrorKind::kInvalidInput);
}

TEST_CASE("predict_batch is independent of the thread count") {
  ModelShape shape;
  shape.input_dim = 5;
  shape.hidden = {8};
  shape.channels = 6;
  shape.classes = 3;
  const Model m = init_model(shape, 2);
  std::mt19937_64 rng(4);
  std::normal_distribution<double> n(0.0, 2.0);
  std::vector<std::vector<double>> xs(37, std::vector<double>(5));
  for (auto& x : xs) {
    for (double& v : x) v = n(rng);
  }
  const auto one = predict_batch(m, xs, 0.5, AggregationMode::max(), 1);
  for (std::size_t threads : {2u, 3u, 8u, 64u}) {
    const auto many = predict_batch(m, xs, 0.5, AggregationMode::max(), threads);
    for (std::size_t i = 0; i < xs.size(); ++i) {
      CHECK(many[i].p_pos == one[i].p_pos);
      CHECK(many[i].aggregated == one[i].aggregated);
    }
  }
}

TEST_CASE("F1_Normal examples") {
  const std::vector<MultiLabel> truth{{0, 0}, {1, 0}, {0, 0}, {0, 1}};
  CHECK(f1_normal(truth, truth).value == 1.0);

  const std::vector<MultiLabel> all_defective(4, MultiLabel{1, 0});
  const auto none = f1_normal(all_defective, truth);
  CHECK(none.value == 0.0);

  // 8 TP, 2 FP, 2 FN on the normal decision.
  std::vector<MultiLabel> t, p;
  for (int i = 0; i < 8; ++i) { t.push_back({0}); p.push_back({0}); }
  for (int i = 0; i < 2; ++i) { t.push_back({1}); p.push_back({0}); }
  for (int i = 0; i < 2; ++i) { t.push_back({0}); p.push_back({1}); }
  CHECK(f1_normal(p, t).value == doctest::Approx(0.8).epsilon(1e-15));

  // No normal sample anywhere: zero denominator, flagged.
  const std::vector<MultiLabel> defective(3, MultiLabel{1});
  const auto degenerate = f1_normal(defective, defective);
  CHECK(degenerate.value == 0.0);
  CHECK(degenerate.zero_denominator);

  CHECK(kind_of([] { (void)f1_normal({}, {}); }) == ErrorKind::kInvalidInput);
  CHECK(kind_of([] { (void)f1_normal({{0}}, {{0}, {1}}); }) == ErrorKind::kInvalidInput);
}

TEST_CASE("F2 examples") {
  const std::vector<MultiLabel> truth{{1, 0}, {0, 1}, {1, 1}, {0, 0}};
  CHECK(f2_ciw(truth, truth, CiwTable::uniform({"a", "b"})) == 1.0);
  CHECK(f2_ciw(truth, truth, CiwTable({{"a", 7.0}, {"b", 0.1}})) == 1.0);

  // Single class with P = R = 1/2: F2 = 1/2.
  const std::vector<MultiLabel> t1{{1}, {1}, {0}};
  const std::vector<MultiLabel> p1{{1}, {0}, {1}};
  const auto counts = per_class_counts(p1, t1);
  CHECK(counts[0].precision() == 0.5);
  CHECK(counts[0].recall() == 0.5);
  CHECK(*counts[0].f2() == 0.5);

  // Class a perfect (F2 = 1), class b F2 = 1/2, weights (2, 1).
  const std::vector<MultiLabel> t2{{1, 1}, {0, 1}, {0, 0}};
  const std::vector<MultiLabel> p2{{1, 1}, {0, 0}, {0, 1}};
  CHECK(f2_ciw(p2, t2, CiwTable({{"a", 2.0}, {"b", 1.0}})) == 0.8333333333333334);

  // A class absent everywhere does not enter the average.
  const std::vector<MultiLabel> t3{{1, 0}, {0, 0}};
  CHECK(f2_ciw(t3, t3, CiwTable({{"a", 1.0}, {"b", 5.0}})) == 1.0);
  CHECK(f2_ciw({{0}}, {{0}}, CiwTable::uniform({"a"})) == 1.0);

  CHECK(kind_of([&] { (void)f2_ciw(t2, t2, CiwTable::uniform({"a"})); }) == ErrorKind::kConfig);
  CHECK(kind_of([&] { (void)f2_ciw(t2, t2, CiwTable({{"a", 1.0}, {"b", -1.0}})); }) ==
        ErrorKind::kConfig);
}

TEST_CASE("property: uniform-weight F2_CIW equals macro F2 exactly") {
  std::mt19937_64 rng(5);
  for (int t = 0; t < 300; ++t) {
    const std::size_t k = 1 + rng() % 6;
    const std::size_t n = 1 + rng() % 40;
    const auto truth = random_labels(n, k, rng);
    const auto pred = random_labels(n, k, rng);
    std::vector<std::string> names;
    for (std::size_t i = 0; i < k; ++i) names.push_back("c" + std::to_string(i));
    CHECK(f2_ciw(pred, truth, CiwTable::uniform(names)) == macro_f2(pred, truth));
  }
}

TEST_CASE("property: classification metrics are permutation invariant") {
  std::mt19937_64 rng(6);
  for (int t = 0; t < 100; ++t) {
    auto truth = random_labels(30, 4, rng);
    auto pred = random_labels(30, 4, rng);
    const double f1 = f1_normal(pred, truth).value;
    const double f2 = macro_f2(pred, truth);
    std::vector<std::size_t> perm(30);
    std::iota(perm.begin(), perm.end(), 0);
    std::shuffle(perm.begin(), perm.end(), rng);
    std::vector<MultiLabel> tp, pp;
    for (auto i : perm) {
      tp.push_back(truth[i]);
      pp.push_back(pred[i]);
    }
    CHECK(f1_normal(pp, tp).value == f1);
    CHECK(macro_f2(pp, tp) == f2);
  }
}

TEST_CASE("AUROC examples") {
  CHECK(auroc(std::vector<double>{0.1, 0.2, 0.8, 0.9}, Labels{0, 0, 1, 1}) == 1.0);
  CHECK(auroc(std::vector<double>{0.1, 0.2, 0.8, 0.9}, Labels{1, 1, 0, 0}) == 0.0);
  CHECK(auroc(std::vector<double>(6, 0.3), Labels{1, 0, 1, 0, 0, 1}) == 0.5);
  CHECK(kind_of([] { (void)auroc(std::vector<double>{1, 2}, Labels{0, 0}); }) ==
        ErrorKind::kUndefinedMetric);
  CHECK(kind_of([] { (void)auroc(std::vector<double>{1, 2}, Labels{1, 1}); }) ==
        ErrorKind::kUndefinedMetric);
  CHECK(kind_of([] { (void)auroc(std::vector<double>{1}, Labels{1, 0}); }) ==
        ErrorKind::kInvalidInput);
  CHECK(kind_of([] { (void)auroc(std::vector<double>{std::nan(""), 1}, Labels{1, 0}); }) ==
        ErrorKind::kInvalidInput);
}

TEST_CASE("AUROC: rank form, pair counting and trapezoid agree") {
  std::mt19937_64 rng(7);
  for (int t = 0; t < 50; ++t) {
    const auto s = random_scored(200, rng);
    const double rank = auroc(s.scores, s.labels);
    CHECK(std::abs(rank - oracle::auroc_pairs(s.scores, s.labels)) <= 1e-12);
    CHECK(std::abs(rank - trapezoid_area(roc_curve(s.scores, s.labels))) <= 1e-12);
  }
}

TEST_CASE("AUROC is invariant under strictly increasing transforms") {
  std::mt19937_64 rng(8);
  for (int t = 0; t < 50; ++t) {
    const auto s = random_scored(100, rng, 0.05);
    std::vector<double> transformed;
    for (double x : s.scores) transformed.push_back(std::exp(3.0 * x) - 7.0);
    CHECK(auroc(transformed, s.labels) == auroc(s.scores, s.labels));
  }
}

TEST_CASE("ROC curve shape") {
  const std::vector<double> scores{0.9, 0.8, 0.8, 0.1};
  const Labels labels{1, 0, 1, 0};
  const auto curve = roc_curve(scores, labels);
  REQUIRE(curve.size() == 4);
  CHECK(curve[0].fpr == 0.0);
  CHECK(curve[0].tpr == 0.0);
  CHECK(curve[1].tpr == 0.5);
  CHECK(curve[2].fpr == 0.5);
  CHECK(curve[2].tpr == 1.0);
  CHECK(curve[3].fpr == 1.0);
}

TEST_CASE("AUPR examples") {
  CHECK(aupr(std::vector<double>{0.9, 0.8, 0.2, 0.1}, Labels{1, 1, 0, 0}) == 1.0);
  std::vector<double> scores{5.0, 1, 2, 3, 4};
  CHECK(aupr(scores, Labels{1, 0, 0, 0, 0}) == 1.0);
  // Positive ranked last of 4: precision 1/4 at recall 1.
  CHECK(aupr(std::vector<double>{1, 2, 3, 4}, Labels{1, 0, 0, 0}) == 0.25);
  CHECK(aupr(std::vector<double>{1, 2}, Labels{1, 1}) == 1.0);
  CHECK(kind_of([] { (void)aupr(std::vector<double>{1, 2}, Labels{0, 0}); }) ==
        ErrorKind::kUndefinedMetric);
}

TEST_CASE("AUPR of random scores tracks prevalence") {
  std::mt19937_64 rng(9);
  std::uniform_real_distribution<double> u(0.0, 1.0);
  for (double prevalence : {0.1, 0.3, 0.5}) {
    std::vector<double> scores;
    Labels labels;
    for (int i = 0; i < 10000; ++i) {
      scores.push_back(u(rng));
      labels.push_back(u(rng) < prevalence ? 1 : 0);
    }
    CAPTURE(prevalence);
    CHECK(std::abs(aupr(scores, labels) - prevalence) <= 0.05);
  }
}

TEST_CASE("FPR95 examples") {
  CHECK(fpr_at_95_tpr(std::vector<double>{0.1, 0.2, 0.8, 0.9}, Labels{0, 0, 1, 1}) == 0.0);
  CHECK(fpr_at_95_tpr(std::vector<double>(10, 0.5), Labels{1, 0, 1, 0, 1, 0, 1, 0, 1, 0}) == 1.0);
  CHECK(kind_of([] { (void)fpr_at_95_tpr(std::vector<double>{1, 2}, Labels{1, 1}); }) ==
        ErrorKind::kUndefinedMetric);

  // 100 positives / 100 negatives interleaved: positive i scores 2i+1,
  // negative i scores 2i. Reaching 95 positives admits negatives 6..99.
  std::vector<double> scores;
  Labels labels;
  for (int i = 0; i < 100; ++i) {
    scores.push_back(2.0 * i + 1.0);
    labels.push_back(1);
    scores.push_back(2.0 * i);
    labels.push_back(0);
  }
  CHECK(fpr_at_95_tpr(scores, labels) == oracle::fpr95_sweep(scores, labels));
  CHECK(fpr_at_95_tpr(scores, labels) == 0.94);
}

TEST_CASE("FPR95 matches the exhaustive threshold sweep") {
  std::mt19937_64 rng(10);
  for (int t = 0; t < 200; ++t) {
    const auto s = random_scored(50 + rng() % 150, rng);
    const double f = fpr_at_95_tpr(s.scores, s.labels);
    CHECK(f == oracle::fpr95_sweep(s.scores, s.labels));
    CHECK(f >= 0.0);
    CHECK(f <= 1.0);
  }
}

TEST_CASE("FPR95 is non-increasing as the distributions separate") {
  std::mt19937_64 rng(12);
  std::normal_distribution<double> n(0.0, 1.0);
  std::vector<double> base_pos, base_neg;
  for (int i = 0; i < 500; ++i) {
    base_pos.push_back(n(rng));
    base_neg.push_back(n(rng));
  }
  double prev = 2.0;
  for (double shift = 0.0; shift <= 6.0; shift += 0.5) {
    std::vector<double> scores;
    Labels labels;
    for (double v : base_pos) {
      scores.push_back(v + shift);
      labels.push_back(1);
    }
    for (double v : base_neg) {
      scores.push_back(v);
      labels.push_back(0);
    }
    const double f = fpr_at_95_tpr(scores, labels);
    CHECK(f <= prev);
    prev = f;
  }
  CHECK(prev == 0.0);
}

TEST_CASE("property: detection metrics are permutation invariant") {
  std::mt19937_64 rng(13);
  for (int t = 0; t < 50; ++t) {
    auto s = random_scored(80, rng);
    const double a = auroc(s.scores, s.labels);
    const double p = aupr(s.scores, s.labels);
    const double f = fpr_at_95_tpr(s.scores, s.labels);
    std::vector<std::size_t> perm(s.scores.size());
    std::iota(perm.begin(), perm.end(), 0);
    std::shuffle(perm.begin(), perm.end(), rng);
    Scored q;
    for (auto i : perm) {
      q.scores.push_back(s.scores[i]);
      q.labels.push_back(s.labels[i]);
    }
    CHECK(auroc(q.scores, q.labels) == a);
    CHECK(aupr(q.scores, q.labels) == p);
    CHECK(fpr_at_95_tpr(q.scores, q.labels) == f);
  }
}

TEST_CASE("baseline OOD scores") {
  const double inf = std::numeric_limits<double>::infinity();
  const std::vector<double> dead{-inf, -inf};
  CHECK(baseline_ood_score(dead, BaselineMethod::kMaxLogit) == inf);
  CHECK(baseline_ood_score(dead, BaselineMethod::kJointEnergy) == 0.0);

  const std::vector<double> confident{50.0, -3.0};
  const std::vector<double> vague{0.1, -3.0};
  for (auto m : {BaselineMethod::kMaxLogit, BaselineMethod::kJointEnergy}) {
    CHECK(baseline_ood_score(confident, m) < baseline_ood_score(vague, m));
    CHECK(baseline_ood_score(vague, m) < baseline_ood_score(dead, m));
  }

  std::mt19937_64 rng(14);
  std::normal_distribution<double> n(0.0, 3.0);
  for (int t = 0; t < 1000; ++t) {
    std::vector<double> z(1 + rng() % 6);
    for (double& v : z) v = n(rng);
    double direct = 0.0;
    for (double v : z) direct += std::log1p(std::exp(v));
    CHECK(std::abs(baseline_ood_score(z, BaselineMethod::kJointEnergy) + direct) <= 1e-12);
    CHECK(baseline_ood_score(z, BaselineMethod::kMaxLogit) == -*std::max_element(z.begin(), z.end()));
  }
  const auto batch = baseline_ood_scores({confident, vague}, BaselineMethod::kMaxLogit);
  CHECK(batch == std::vector<double>{-50.0, -0.1});
}

TEST_CASE("report round trip") {
  MetricsReport r;
  r.task = "msdc";
  r.config = {{"threshold", "0.5"}, {"seed", "7"}};
  r.known_count = 445;
  r.unknown_count = 155;
  r.f2_ciw = 0.1 + 0.2;
  r.f1_normal = 1.0 / 3.0;
  r.f1_normal_degenerate = true;
  r.classes.push_back({"crack", 0.7310585786300049, 3, 1, 2, 0.75, 0.6, 0.625});
  r.classes.push_back({"root", 1.0, 0, 0, 0, 0.0, 0.0, std::nullopt});
  CHECK(report_from_string(report_to_string(r)) == r);
  CHECK(report_to_string(report_from_string(report_to_string(r))) == report_to_string(r));

  MetricsReport o;
  o.task = "ood";
  o.score_method = "uncertainty-max";
  o.auroc = 0.8521928234867706;
  o.aupr = 5e-324;
  o.fpr95 = 0.0;
  o.mean_score_known = 0.1;
  o.mean_score_unknown = 0.2;
  CHECK(report_from_string(report_to_string(o)) == o);

  CHECK(kind_of([] { (void)report_from_string("not json"); }) == ErrorKind::kData);
  CHECK(kind_of([] { (void)report_from_string("{\"format\": \"other\"}"); }) == ErrorKind::kData);
  CHECK(!report_summary(o).empty());
}
