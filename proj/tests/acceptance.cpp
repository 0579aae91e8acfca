// Acceptance suite: one PASS/FAIL line per criterion, nonzero exit on any
// failure.

#include <chrono>
#include <cmath>
#include <cstdio>
#include <filesystem>
#include <fstream>
#include <functional>
#include <random>
#include <sstream>
#include <string>
#include <vector>

#include "edl/cli.hpp"
#include "edl/data_io.hpp"
#include "edl/ebra.hpp"
#include "edl/eval.hpp"
#include "edl/loss.hpp"
#include "edl/net.hpp"
#include "edl/sl_core.hpp"
#include "oracles.hpp"
#include "temp_dir.hpp"

using namespace edl;
namespace fs = std::filesystem;

namespace {

struct Outcome {
  bool pass = false;
  std::string detail;
};

struct Criterion {
  int id;
  std::string name;
  double time_limit_s;  // 0: no limit
  std::function<Outcome()> run;
};

std::string num(double v, int precision = 4) {
  std::ostringstream os;
  os.precision(precision);
  os << v;
  return os.str();
}

std::string slurp(const fs::path& p) {
  std::ifstream in(p, std::ios::binary);
  return std::string(std::istreambuf_iterator<char>(in), {});
}

int cli(const std::vector<std::string>& args) {
  std::ostringstream out, err;
  const int code = run_cli(args, out, err);
  if (code != kExitOk) std::fprintf(stderr, "edl %s failed: %s", args[0].c_str(), err.str().c_str());
  return code;
}

// ---------------------------------------------------------------------------

Outcome subjective_logic_invariants() {
  std::mt19937_64 rng(1);
  std::uniform_real_distribution<double> log_e(-8.0, 8.0);
  std::uniform_real_distribution<double> unit(0.001, 0.999);
  std::uniform_real_distribution<double> weight(0.5, 10.0);
  double worst_sum = 0.0, worst_prob = 0.0;
  bool vacuous_exact = true;
  for (int t = 0; t < 10000; ++t) {
    const double ep = t % 7 == 0 ? 0.0 : std::exp(log_e(rng));
    const double en = t % 11 == 0 ? 0.0 : std::exp(log_e(rng));
    const EvidencePair e(ep, en);
    const auto a = BaseRatePair::from_positive(unit(rng));
    const EvidenceWeight w(weight(rng));
    const Opinion o = opinion_from_evidence(e, a, w);
    worst_sum = std::max(worst_sum, std::abs(o.u() + o.b_pos() + o.b_neg() - 1.0));
    const ProbabilityPair p3 = probability_from_opinion(o);
    const ProbabilityPair p6 = expected_probability(dirichlet_from_evidence(e, a, w));
    worst_prob = std::max({worst_prob, std::abs(p3.pos - p6.pos), std::abs(p3.neg - p6.neg)});

    const Opinion z = opinion_from_evidence(EvidencePair(), a, w);
    const ProbabilityPair pz = probability_from_opinion(z);
    vacuous_exact = vacuous_exact && z.u() == 1.0 && pz.pos == a.pos() && pz.neg == a.neg();
  }
  return {worst_sum <= 1e-12 && worst_prob <= 1e-12 && vacuous_exact,
          "max |u+b-1| " + num(worst_sum) + ", max |dp| " + num(worst_prob) +
              ", vacuous exact " + (vacuous_exact ? "yes" : "no")};
}

Outcome ebra_contract() {
  std::mt19937_64 rng(2);
  std::uniform_real_distribution<double> ciw(-6.0, 6.0);
  std::uniform_real_distribution<double> unit(0.05, 0.95);
  double worst = 0.0;
  bool monotone = true, identity = true;
  for (int t = 0; t < 1000; ++t) {
    std::vector<CiwEntry> entries;
    const std::size_t k = 2 + rng() % 10;
    for (std::size_t i = 0; i < k; ++i) entries.push_back({"c" + std::to_string(i), ciw(rng)});
    const CiwTable table(entries);
    const BaseRateSet rates = adjust_base_rates(table);
    for (std::size_t i = 0; i < k; ++i) {
      const double expected = 1.0 / (1.0 + std::exp(-entries[i].weight));
      worst = std::max(worst, std::abs(rates[i].pos() - expected));
      for (std::size_t j = 0; j < k; ++j) {
        if (entries[i].weight < entries[j].weight && !(rates[i].pos() < rates[j].pos())) {
          monotone = false;
        }
      }
    }
    const auto a0 = BaseRatePair::from_positive(unit(rng));
    const BaseRateSet same = adjust_base_rates(CiwTable({{"x", 0.0}}), a0);
    identity = identity && same[0] == a0;
  }
  return {worst <= 1e-12 && monotone && identity,
          "max |a+ - sigmoid| " + num(worst) + ", monotone " + (monotone ? "yes" : "no") +
              ", identity " + (identity ? "yes" : "no")};
}

std::vector<double*> model_params(Model& m) {
  std::vector<double*> out;
  auto add = [&](DenseLayer& l) {
    for (double& v : l.weight) out.push_back(&v);
    for (double& v : l.bias) out.push_back(&v);
  };
  for (auto& l : m.backbone.layers) add(l);
  add(m.egm);
  return out;
}

std::vector<double> flatten(const ModelGrad& g) {
  std::vector<double> out;
  auto add = [&](const DenseLayer& l) {
    out.insert(out.end(), l.weight.begin(), l.weight.end());
    out.insert(out.end(), l.bias.begin(), l.bias.end());
  };
  for (const auto& l : g.backbone) add(l);
  add(g.head);
  return out;
}

Outcome gradient_correctness() {
  std::mt19937_64 rng(3);
  std::normal_distribution<double> normal(0.0, 1.0);
  std::uniform_real_distribution<double> unit(0.05, 0.95);
  std::uniform_real_distribution<double> evidence(0.0, 20.0);
  double worst_head = 0.0, worst_net = 0.0;
  for (int cfg = 0; cfg < 100; ++cfg) {
    const auto a = BaseRatePair::from_positive(unit(rng));
    const EvidenceWeight w(2.0);
    for (int t = 0; t < 10; ++t) {
      const double ep = evidence(rng), en = evidence(rng);
      BinaryLabel y;
      y.pos = rng() % 2;
      y.neg = 1 - y.pos;
      const EvidenceGrad g = edl_loss_grad(EvidencePair(ep, en), y, a, w);
      const double h = 1e-5;
      const double dp = oracle::central_diff(
          [&](double x) { return edl_loss_head(EvidencePair(x, en), y, a, w); }, ep, h);
      const double dn = oracle::central_diff(
          [&](double x) { return edl_loss_head(EvidencePair(ep, x), y, a, w); }, en, h);
      worst_head = std::max({worst_head, oracle::relative_error(g.pos, dp),
                             oracle::relative_error(g.neg, dn)});
    }

    ModelShape shape;
    shape.input_dim = 4;
    shape.hidden = {6};
    shape.channels = 4;
    shape.classes = 2;
    Model m = init_model(shape, 100 + cfg);
    m.base_rates = {BaseRatePair::from_positive(unit(rng)), BaseRatePair::from_positive(unit(rng))};
    TrainingSet data;
    for (int i = 0; i < 3; ++i) {
      data.features.push_back({normal(rng), normal(rng), normal(rng), normal(rng)});
      data.labels.push_back({static_cast<std::uint8_t>(rng() % 2),
                             static_cast<std::uint8_t>(rng() % 2)});
    }
    const std::vector<std::size_t> idx{0, 1, 2};
    ModelGrad grad;
    evidential_loss_and_grad(m, data, idx, &grad);
    const auto analytic = flatten(grad);
    auto params = model_params(m);
    for (std::size_t i = 0; i < params.size(); ++i) {
      const double saved = *params[i];
      const double numeric = oracle::central_diff(
          [&](double x) {
            *params[i] = x;
            return evidential_loss_and_grad(m, data, idx, nullptr);
          },
          saved, 1e-6);
      *params[i] = saved;
      worst_net = std::max(worst_net, oracle::relative_error(analytic[i], numeric));
    }
  }
  return {worst_head < 1e-4 && worst_net < 1e-4,
          "head max rel err " + num(worst_head) + ", end-to-end max rel err " + num(worst_net)};
}

// ---------------------------------------------------------------------------
// Canonical pipeline: generate -> train (two-phase) -> eval -> ood max / sum.

struct PipelineRun {
  bool ok = false;
  double train_seconds = 0.0;
  MetricsReport msdc, ood_max, ood_sum;
};

const std::vector<std::string> kArtifacts{
    "data/train.edl",
    "data/val.edl",
    "data/ciw.tsv",
    "model/model.ckpt",
    "model/train_log.tsv",
    "report/msdc_report.json",
    "report/ood_report_uncertainty-max.json",
    "report/ood_report_uncertainty-sum.json",
    "report/ood_scores_uncertainty-max.csv",
    "report/ood_scores_uncertainty-sum.csv",
};

PipelineRun run_pipeline(const fs::path& root) {
  PipelineRun r;
  const std::string data = (root / "data").string();
  const std::string model_dir = (root / "model").string();
  const std::string model = (root / "model/model.ckpt").string();
  const std::string report = (root / "report").string();
  if (cli({"generate", "--out", data, "--seed", "7", "--known", "6", "--unknown", "2", "--train",
           "2000", "--val", "600"}) != kExitOk) {
    return r;
  }
  const auto t0 = std::chrono::steady_clock::now();
  if (cli({"train", "--data", data, "--out", model_dir, "--freeze-backbone"}) != kExitOk) return r;
  r.train_seconds =
      std::chrono::duration<double>(std::chrono::steady_clock::now() - t0).count();
  if (cli({"eval", "--model", model, "--data", data, "--out", report, "--uniform-ciw"}) !=
      kExitOk) {
    return r;
  }
  for (const char* agg : {"max", "sum"}) {
    if (cli({"ood", "--model", model, "--data", data, "--out", report, "--agg", agg}) != kExitOk) {
      return r;
    }
  }
  r.msdc = report_from_string(slurp(root / "report/msdc_report.json"));
  r.ood_max = report_from_string(slurp(root / "report/ood_report_uncertainty-max.json"));
  r.ood_sum = report_from_string(slurp(root / "report/ood_report_uncertainty-sum.json"));
  r.ok = true;
  return r;
}

struct Canonical {
  testing::TempDir first, second;
  PipelineRun a, b;
};

Canonical& canonical() {
  static Canonical c;
  static const bool started = [] {
    c.a = run_pipeline(c.first.path());
    return true;
  }();
  (void)started;
  return c;
}

Outcome msdc_trend() {
  const auto& r = canonical().a;
  if (!r.ok) return {false, "pipeline failed"};
  const double f1 = *r.msdc.f1_normal, f2 = *r.msdc.f2_ciw;
  return {r.train_seconds < 60.0 && f1 >= 0.90 && f2 >= 0.85,
          "train " + num(r.train_seconds, 3) + " s, F1_Normal " + num(f1) + ", F2_CIW(uniform) " +
              num(f2)};
}

Outcome ood_trend() {
  const auto& r = canonical().a;
  if (!r.ok) return {false, "pipeline failed"};
  const double auroc = *r.ood_max.auroc;
  const double known = *r.ood_max.mean_score_known, unknown = *r.ood_max.mean_score_unknown;
  return {auroc >= 0.80 && unknown > known,
          "AUROC(max u) " + num(auroc) + ", mean u unknown " + num(unknown) + " vs known " +
              num(known)};
}

Outcome aggregation_trend() {
  const auto& r = canonical().a;
  if (!r.ok) return {false, "pipeline failed"};
  const double fmax = *r.ood_max.fpr95, fsum = *r.ood_sum.fpr95;
  return {fmax <= fsum, "FPR95 max " + num(fmax) + ", sum " + num(fsum)};
}

Outcome metric_oracles() {
  std::mt19937_64 rng(8);
  std::uniform_real_distribution<double> unit(0.0, 1.0);
  double worst_auroc = 0.0;
  bool fpr_match = true;
  for (int t = 0; t < 50; ++t) {
    std::vector<double> s;
    std::vector<std::uint8_t> y;
    for (int i = 0; i < 200; ++i) {
      s.push_back(std::round(unit(rng) * 20.0) / 20.0);  // coarse grid: many ties
      y.push_back(unit(rng) < 0.4 ? 1 : 0);
    }
    y[0] = 1;
    y[1] = 0;
    const double rank = auroc(s, y);
    worst_auroc = std::max({worst_auroc, std::abs(rank - trapezoid_area(roc_curve(s, y))),
                            std::abs(rank - oracle::auroc_pairs(s, y))});
    fpr_match = fpr_match && fpr_at_95_tpr(s, y) == oracle::fpr95_sweep(s, y);
  }
  double worst_aupr = 0.0;
  for (double prevalence : {0.1, 0.25, 0.5, 0.75}) {
    std::vector<double> s;
    std::vector<std::uint8_t> y;
    for (int i = 0; i < 10000; ++i) {
      s.push_back(unit(rng));
      y.push_back(unit(rng) < prevalence ? 1 : 0);
    }
    worst_aupr = std::max(worst_aupr, std::abs(aupr(s, y) - prevalence));
  }
  return {worst_auroc <= 1e-12 && fpr_match && worst_aupr <= 0.05,
          "max |AUROC rank - trapezoid| " + num(worst_auroc) + ", FPR95 = sweep " +
              (fpr_match ? "yes" : "no") + ", max |AUPR - prevalence| " + num(worst_aupr)};
}

Outcome determinism() {
  auto& c = canonical();
  if (!c.a.ok) return {false, "first pipeline failed"};
  c.b = run_pipeline(c.second.path());
  if (!c.b.ok) return {false, "second pipeline failed"};
  std::string differing;
  for (const auto& rel : kArtifacts) {
    const std::string x = slurp(c.first.path() / rel);
    const std::string y = slurp(c.second.path() / rel);
    if (x.empty() || x != y) differing += (differing.empty() ? "" : ", ") + rel;
  }
  return {differing.empty(), differing.empty()
                                 ? std::to_string(kArtifacts.size()) + " artifacts byte-identical"
                                 : "differs: " + differing};
}

}  // namespace

int main() {
  const std::vector<Criterion> criteria{
      {1, "subjective-logic invariants", 1.0, subjective_logic_invariants},
      {2, "EBRA contract", 1.0, ebra_contract},
      {3, "gradient correctness", 10.0, gradient_correctness},
      {4, "desk-scale classification", 0.0, msdc_trend},
      {5, "desk-scale unknown detection", 0.0, ood_trend},
      {6, "aggregation trend", 0.0, aggregation_trend},
      {7, "metric oracles", 0.0, metric_oracles},
      {8, "determinism", 0.0, determinism},
  };
  int failed = 0;
  for (const auto& c : criteria) {
    Outcome o;
    const auto t0 = std::chrono::steady_clock::now();
    try {
      o = c.run();
    } catch (const std::exception& ex) {
      o = {false, std::string("exception: ") + ex.what()};
    }
    const double secs = std::chrono::duration<double>(std::chrono::steady_clock::now() - t0).count();
    if (c.time_limit_s > 0.0 && secs >= c.time_limit_s) {
      o.pass = false;
      o.detail += ", over the " + num(c.time_limit_s) + " s limit";
    }
    failed += o.pass ? 0 : 1;
    std::printf("%s [%d] %s: %s (%.3f s)\n", o.pass ? "PASS" : "FAIL", c.id, c.name.c_str(),
                o.detail.c_str(), secs);
  }
  std::printf("%d/%zu criteria passed\n", static_cast<int>(criteria.size()) - failed,
              criteria.size());
  return failed == 0 ? 0 : 1;
}
