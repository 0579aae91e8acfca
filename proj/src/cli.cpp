#include "edl/cli.hpp"

#include <chrono>
#include <cmath>
#include <filesystem>
#include <fstream>
#include <iomanip>
#include <map>
#include <ostream>
#include <sstream>

#include "CLI11.hpp"
#include "edl/data_io.hpp"
#include "edl/eval.hpp"
#include "edl/net.hpp"
#include "edl/text.hpp"

namespace edl {

namespace fs = std::filesystem;

int exit_code_for(ErrorKind kind) {
  switch (kind) {
    case ErrorKind::kConfig: return kExitConfig;
    case ErrorKind::kNumeric: return kExitNumeric;
    case ErrorKind::kInvalidInput:
    case ErrorKind::kData:
    case ErrorKind::kUndefinedMetric: return kExitData;
  }
  return kExitData;
}

namespace {

struct GenerateArgs {
  GenConfig gen;
  std::string out;
};

struct TrainArgs {
  std::string data;
  std::string ciw;
  std::string out;
  TrainConfig train;
  std::string hidden = "64,64";
  std::size_t channels = 64;
  bool no_ebra = false;
  bool freeze_backbone = false;
  int finetune_epochs = 200;
  double finetune_lr = 0.05;
};

struct EvalArgs {
  std::string model;
  std::string data;
  std::string ciw;
  std::string out;
  double threshold = kDefaultThreshold;
  bool uniform_ciw = false;
};

struct OodArgs {
  std::string model;
  std::string data;
  std::string out;
  std::string agg = "max";
  std::string baseline = "none";
  double threshold = kDefaultThreshold;
};

std::string fmt(double v) { return text::format_double(v); }

std::string hex64(std::uint64_t v) {
  std::ostringstream os;
  os << std::hex << std::setw(16) << std::setfill('0') << v;
  return os.str();
}

std::string read_bytes(const fs::path& p) {
  std::ifstream in(p, std::ios::binary);
  if (!in) fail(ErrorKind::kData, "cannot open " + p.string());
  std::ostringstream buf;
  buf << in.rdbuf();
  return buf.str();
}

// FNV-1a of file contents; reports reference inputs by content, not path.
std::string file_fingerprint(const std::vector<fs::path>& files) {
  std::uint64_t h = 0xcbf29ce484222325ULL;
  for (const auto& f : files) {
    for (unsigned char c : read_bytes(f)) {
      h ^= c;
      h *= 0x100000001b3ULL;
    }
  }
  return hex64(h);
}

void write_text(const fs::path& path, const std::string& body) {
  std::ofstream out(path, std::ios::binary);
  if (!out) fail(ErrorKind::kData, "cannot write " + path.string());
  out << body;
  if (!out) fail(ErrorKind::kData, "failed writing " + path.string());
}

std::vector<std::size_t> parse_hidden(const std::string& s) {
  std::vector<std::size_t> out;
  if (s.empty() || s == "none") return out;
  for (auto tok : text::split(s, ',')) {
    const auto v = text::parse_int(text::trim(tok));
    if (!v || *v < 1) fail(ErrorKind::kConfig, "bad --hidden entry '" + std::string(tok) + "'");
    out.push_back(static_cast<std::size_t>(*v));
  }
  return out;
}

// The CIW file given on the command line, else <data>/ciw.tsv when present.
std::optional<CiwTable> resolve_ciw(const std::string& explicit_path, const fs::path& data_dir) {
  if (!explicit_path.empty()) return load_ciw_config(explicit_path);
  const fs::path fallback = data_dir / "ciw.tsv";
  if (fs::exists(fallback)) return load_ciw_config(fallback);
  return std::nullopt;
}

void check_model_matches(const Model& model, const DatasetSchema& schema) {
  if (model.backbone.input_dim() != schema.dim) {
    fail(ErrorKind::kData, "checkpoint expects " + std::to_string(model.backbone.input_dim()) +
                               " features, dataset has D=" + std::to_string(schema.dim));
  }
  if (model.class_names != schema.known_classes()) {
    fail(ErrorKind::kData, "checkpoint class heads do not match the dataset's known classes");
  }
}

// ---------------------------------------------------------------------------

int cmd_generate(const GenerateArgs& a, std::ostream& out) {
  const GeneratedData data = generate_synthetic(a.gen);
  const fs::path dir(a.out);
  fs::create_directories(dir);
  save_dataset(dir, data.split);
  save_ciw_config(dir / "ciw.tsv", data.ciw);
  std::size_t unknown = 0;
  for (const auto& s : data.split.validation) unknown += s.is_unknown ? 1 : 0;
  out << "wrote " << data.split.train.size() << " train / " << data.split.validation.size()
      << " validation samples (" << unknown << " unknown) to " << dir.string() << "\n";
  return kExitOk;
}

void write_train_log(const fs::path& path, const std::vector<std::pair<std::string, EpochLog>>& log) {
  std::string body = "epoch\tphase\tlearning_rate\tmean_loss\n";
  for (const auto& [phase, e] : log) {
    body += std::to_string(e.epoch) + '\t' + phase + '\t' + fmt(e.learning_rate) + '\t' +
            fmt(e.mean_loss) + '\n';
  }
  write_text(path, body);
}

int cmd_train(const TrainArgs& a, std::ostream& out) {
  a.train.validate();
  const fs::path data_dir(a.data);
  const DatasetSplit split = load_dataset(data_dir);
  const auto known = split.schema.known_classes();
  const TrainingSet train_set = make_training_set(split.schema, split.train);

  ModelShape shape;
  shape.input_dim = split.schema.dim;
  shape.hidden = parse_hidden(a.hidden);
  shape.channels = a.channels;
  shape.classes = known.size();

  BaseRateSet base = uniform_base_rates(known.size());
  if (!a.no_ebra) {
    const auto ciw = resolve_ciw(a.ciw, data_dir);
    if (!ciw) fail(ErrorKind::kConfig, "no CIW config: pass --ciw or --no-ebra");
    base = adjust_base_rates(ciw->select(known));
  }

  const auto t0 = std::chrono::steady_clock::now();
  std::vector<std::pair<std::string, EpochLog>> log;
  Model model;
  if (a.freeze_backbone) {
    TrainResult phase1 = train_classifier(train_set, shape, a.train);
    for (const auto& e : phase1.log) log.emplace_back("classifier", e);
    Model pre = std::move(phase1.model);
    pre.base_rates = base;
    pre.egm = mirror_logit_head(*pre.logit_head);
    TrainConfig ft = a.train;
    ft.epochs = a.finetune_epochs;
    ft.learning_rate = a.finetune_lr;
    ft.lr_decay_every = std::max(1, a.finetune_epochs);
    TrainResult phase2 = freeze_and_finetune(std::move(pre), train_set, ft);
    for (const auto& e : phase2.log) log.emplace_back("finetune", e);
    model = std::move(phase2.model);
  } else {
    TrainResult r = train(train_set, shape, a.train, base);
    for (const auto& e : r.log) log.emplace_back("evidential", e);
    model = std::move(r.model);
  }
  const double seconds =
      std::chrono::duration<double>(std::chrono::steady_clock::now() - t0).count();
  model.class_names = known;

  const fs::path dir(a.out);
  fs::create_directories(dir);
  save_checkpoint(model, dir / "model.ckpt");
  write_train_log(dir / "train_log.tsv", log);
  out << "trained " << log.size() << " epochs in " << std::fixed << std::setprecision(2)
      << seconds << " s";
  if (!log.empty()) out << ", final mean loss " << fmt(log.back().second.mean_loss);
  out << "\ncheckpoint " << (dir / "model.ckpt").string() << " ("
      << hex64(fingerprint(model.backbone) ^ fingerprint(model.egm)) << ")\n";
  return kExitOk;
}

std::map<std::string, std::string> base_config(const fs::path& model, const fs::path& data) {
  return {{"edl_version", kVersion},
          {"model_fingerprint", file_fingerprint({model})},
          {"data_fingerprint", file_fingerprint({data / "train.edl", data / "val.edl"})}};
}

int cmd_eval(const EvalArgs& a, std::ostream& out) {
  const Model model = load_checkpoint(a.model);
  const fs::path data_dir(a.data);
  const DatasetSplit split = load_dataset(data_dir);
  check_model_matches(model, split.schema);
  const auto known = split.schema.known_classes();

  CiwTable ciw = CiwTable::uniform(known);
  if (!a.uniform_ciw) {
    if (const auto table = resolve_ciw(a.ciw, data_dir)) ciw = table->select(known);
  }

  std::vector<std::vector<double>> inputs;
  std::vector<MultiLabel> truth;
  std::size_t unknown = 0;
  for (const auto& s : split.validation) {
    if (s.is_unknown) {
      ++unknown;
      continue;
    }
    inputs.push_back(s.features);
    truth.push_back(known_label_vector(split.schema, s));
  }
  if (inputs.empty()) fail(ErrorKind::kData, "validation split has no known samples");
  const auto preds = predict_batch(model, inputs, a.threshold, AggregationMode::max(),
                                   thread_cap_from_env());
  std::vector<MultiLabel> predicted;
  for (const auto& p : preds) predicted.push_back(p.labels);

  MetricsReport r;
  r.task = "msdc";
  r.config = base_config(a.model, data_dir);
  r.config["threshold"] = fmt(a.threshold);
  r.config["ciw_weights"] = a.uniform_ciw ? "uniform" : "config";
  r.known_count = inputs.size();
  r.unknown_count = unknown;
  const FScore f1 = f1_normal(predicted, truth);
  r.f1_normal = f1.value;
  r.f1_normal_degenerate = f1.zero_denominator;
  r.f2_ciw = f2_ciw(predicted, truth, ciw);
  const auto counts = per_class_counts(predicted, truth);
  for (std::size_t k = 0; k < counts.size(); ++k) {
    r.classes.push_back({known[k], ciw[k].weight, counts[k].tp, counts[k].fp, counts[k].fn,
                         counts[k].precision(), counts[k].recall(), counts[k].f2()});
  }
  const fs::path dir(a.out);
  fs::create_directories(dir);
  write_text(dir / "msdc_report.json", report_to_string(r));
  out << report_summary(r);
  return kExitOk;
}

int cmd_ood(const OodArgs& a, std::ostream& out) {
  const AggregationMode mode = AggregationMode::parse(a.agg);
  std::optional<BaselineMethod> baseline;
  if (a.baseline == "maxlogit") {
    baseline = BaselineMethod::kMaxLogit;
  } else if (a.baseline == "jointenergy") {
    baseline = BaselineMethod::kJointEnergy;
  } else if (a.baseline != "none") {
    fail(ErrorKind::kConfig, "unknown baseline '" + a.baseline + "'");
  }

  const Model model = load_checkpoint(a.model);
  const fs::path data_dir(a.data);
  const DatasetSplit split = load_dataset(data_dir);
  check_model_matches(model, split.schema);
  if (baseline && !model.logit_head) {
    fail(ErrorKind::kData, "baseline scores need a checkpoint with a classifier head");
  }

  std::vector<std::vector<double>> inputs;
  std::vector<std::uint8_t> labels;
  for (const auto& s : split.validation) {
    inputs.push_back(s.features);
    labels.push_back(s.is_unknown ? 1 : 0);
  }
  const std::size_t n_unknown = std::count(labels.begin(), labels.end(), 1);
  if (n_unknown == 0) {
    fail(ErrorKind::kUndefinedMetric, "validation split contains no unknown samples");
  }
  if (n_unknown == labels.size()) {
    fail(ErrorKind::kUndefinedMetric, "validation split contains no known samples");
  }

  std::vector<double> scores;
  std::string method;
  if (baseline) {
    method = a.baseline;
    std::vector<std::vector<double>> logits;
    for (const auto& x : inputs) logits.push_back(model_logits(model, x));
    scores = baseline_ood_scores(logits, *baseline);
  } else {
    method = "uncertainty-" + mode.name();
    for (const auto& p : predict_batch(model, inputs, a.threshold, mode, thread_cap_from_env())) {
      scores.push_back(p.aggregated);
    }
  }

  MetricsReport r;
  r.task = "ood";
  r.config = base_config(a.model, data_dir);
  r.config["aggregation"] = mode.name();
  r.config["baseline"] = a.baseline;
  r.known_count = labels.size() - n_unknown;
  r.unknown_count = n_unknown;
  r.score_method = method;
  r.auroc = auroc(scores, labels);
  r.aupr = aupr(scores, labels);
  r.fpr95 = fpr_at_95_tpr(scores, labels);
  double sum_known = 0.0, sum_unknown = 0.0;
  for (std::size_t i = 0; i < scores.size(); ++i) (labels[i] ? sum_unknown : sum_known) += scores[i];
  r.mean_score_known = sum_known / static_cast<double>(r.known_count);
  r.mean_score_unknown = sum_unknown / static_cast<double>(r.unknown_count);

  const fs::path dir(a.out);
  fs::create_directories(dir);
  write_text(dir / ("ood_report_" + method + ".json"), report_to_string(r));
  std::string csv = "sample_id,score,is_unknown\n";
  for (std::size_t i = 0; i < scores.size(); ++i) {
    csv += split.validation[i].id + ',' + fmt(scores[i]) + ',' + (labels[i] ? '1' : '0') + '\n';
  }
  write_text(dir / ("ood_scores_" + method + ".csv"), csv);
  out << report_summary(r);
  return kExitOk;
}

}  // namespace

int run_cli(const std::vector<std::string>& args, std::ostream& out, std::ostream& err) {
  CLI::App app{"Evidential multi-label classification with uncertainty-based unknown detection"};
  app.set_version_flag("--version", kVersion);
  app.require_subcommand(1);

  GenerateArgs gen;
  auto* g = app.add_subcommand("generate", "Generate a synthetic dataset with unknown classes");
  g->add_option("--out", gen.out, "Output directory")->required();
  g->add_option("--seed", gen.gen.seed, "RNG seed")->capture_default_str();
  g->add_option("--known", gen.gen.k_known, "Number of known classes")->capture_default_str();
  g->add_option("--unknown", gen.gen.k_unknown, "Number of unknown classes")->capture_default_str();
  g->add_option("--dim", gen.gen.dim, "Feature dimension D")->capture_default_str();
  g->add_option("--train", gen.gen.n_train, "Training samples")->capture_default_str();
  g->add_option("--val", gen.gen.n_val, "Validation samples")->capture_default_str();
  g->add_option("--separation", gen.gen.separation, "Prototype norm")->capture_default_str();
  g->add_option("--noise", gen.gen.noise, "Noise std-dev per dimension")->capture_default_str();
  g->add_option("--cooccurrence", gen.gen.cooccurrence, "Second-label probability")->capture_default_str();
  g->add_option("--normal-fraction", gen.gen.normal_fraction, "Label-free sample share")->capture_default_str();
  g->add_option("--unknown-fraction", gen.gen.unknown_fraction, "Unknown share of validation")->capture_default_str();
  g->add_option("--unknown-anchor", gen.gen.unknown_anchor, "Unknown prototype weight on the blended known prototypes")->capture_default_str();
  g->add_option("--unknown-blend", gen.gen.unknown_blend, "Known prototypes averaged into each unknown prototype")->capture_default_str();
  g->add_option("--unknown-distance", gen.gen.unknown_distance, "Unknown prototype offset (x separation)")->capture_default_str();

  TrainArgs tr;
  auto* t = app.add_subcommand("train", "Train backbone and evidential head");
  t->add_option("--data", tr.data, "Dataset directory")->required();
  t->add_option("--out", tr.out, "Output directory")->required();
  t->add_option("--ciw", tr.ciw, "CIW config (default: <data>/ciw.tsv)");
  t->add_option("--epochs", tr.train.epochs)->capture_default_str();
  t->add_option("--batch", tr.train.batch_size)->capture_default_str();
  t->add_option("--lr", tr.train.learning_rate)->capture_default_str();
  t->add_option("--lr-decay", tr.train.lr_decay_ratio)->capture_default_str();
  t->add_option("--decay-every", tr.train.lr_decay_every)->capture_default_str();
  t->add_option("--weight-decay", tr.train.weight_decay)->capture_default_str();
  t->add_option("--seed", tr.train.seed)->capture_default_str();
  t->add_option("--hidden", tr.hidden, "Hidden widths, comma separated")->capture_default_str();
  t->add_option("--channels", tr.channels, "Feature channels C")->capture_default_str();
  t->add_flag("--no-ebra", tr.no_ebra, "Use uniform (1/2, 1/2) base rates");
  t->add_flag("--freeze-backbone", tr.freeze_backbone,
              "Two-phase: train with a logit head, then freeze and fine-tune the evidential head");
  t->add_option("--finetune-epochs", tr.finetune_epochs)->capture_default_str();
  t->add_option("--finetune-lr", tr.finetune_lr)->capture_default_str();

  EvalArgs ev;
  auto* e = app.add_subcommand("eval", "Multi-label classification metrics on known samples");
  e->add_option("--model", ev.model, "Checkpoint file")->required();
  e->add_option("--data", ev.data, "Dataset directory")->required();
  e->add_option("--out", ev.out, "Output directory")->required();
  e->add_option("--ciw", ev.ciw, "CIW config for F2_CIW (default: <data>/ciw.tsv)");
  e->add_flag("--uniform-ciw", ev.uniform_ciw, "Weight all classes equally in F2_CIW");
  e->add_option("--threshold", ev.threshold)->capture_default_str();

  OodArgs od;
  auto* o = app.add_subcommand("ood", "Unknown-sample detection metrics");
  o->add_option("--model", od.model, "Checkpoint file")->required();
  o->add_option("--data", od.data, "Dataset directory")->required();
  o->add_option("--out", od.out, "Output directory")->required();
  o->add_option("--agg", od.agg, "Uncertainty aggregation: max, sum, top<m>")->capture_default_str();
  o->add_option("--baseline", od.baseline, "none, maxlogit or jointenergy")->capture_default_str();
  o->add_option("--threshold", od.threshold)->capture_default_str();

  std::vector<std::string> argv_store{"edl"};
  argv_store.insert(argv_store.end(), args.begin(), args.end());
  std::vector<char*> argv;
  for (auto& s : argv_store) argv.push_back(s.data());

  try {
    app.parse(static_cast<int>(argv.size()), argv.data());
  } catch (const CLI::ParseError& ex) {
    const int code = app.exit(ex, out, err);
    return code == 0 ? kExitOk : kExitConfig;
  }

  try {
    if (*g) return cmd_generate(gen, out);
    if (*t) return cmd_train(tr, out);
    if (*e) return cmd_eval(ev, out);
    if (*o) return cmd_ood(od, out);
  } catch (const Error& ex) {
    err << "error: " << ex.what() << "\n";
    return exit_code_for(ex.kind());
  } catch (const fs::filesystem_error& ex) {
    err << "error: " << ex.what() << "\n";
    return kExitData;
  }
  return kExitConfig;
}

}  // namespace edl
