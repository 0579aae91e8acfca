#include "edl/net.hpp"

#include <algorithm>
#include <cmath>
#include <cstring>
#include <limits>
#include <numeric>
#include <random>
#include <string>

#include "edl/error.hpp"

namespace edl {

// ---------------------------------------------------------------------------
// Pooling and forward passes

FeatureMap::FeatureMap(std::size_t channels, std::size_t height,
                       std::size_t width, std::vector<double> data)
    : channels_(channels), height_(height), width_(width), data_(std::move(data)) {
  if (channels == 0 || height == 0 || width == 0) {
    fail(ErrorKind::kInvalidInput, "feature map dimensions must be >= 1");
  }
  if (data_.size() != channels * height * width) {
    fail(ErrorKind::kInvalidInput, "feature map data size does not match C*H*W");
  }
  for (double v : data_) {
    if (!std::isfinite(v)) fail(ErrorKind::kInvalidInput, "feature map entry not finite");
  }
}

FeatureVector global_average_pool(const FeatureMap& f) {
  FeatureVector out(f.channels(), 0.0);
  const double area = static_cast<double>(f.height() * f.width());
  for (std::size_t c = 0; c < f.channels(); ++c) {
    double sum = 0.0;
    for (std::size_t y = 0; y < f.height(); ++y) {
      for (std::size_t x = 0; x < f.width(); ++x) sum += f.at(c, y, x);
    }
    out[c] = sum / area;
  }
  return out;
}

namespace {

void dense_forward(const DenseLayer& layer, std::span<const double> in,
                   std::vector<double>& out) {
  out.assign(layer.out, 0.0);
  for (std::size_t o = 0; o < layer.out; ++o) {
    const double* row = layer.weight.data() + o * layer.in;
    double acc = layer.bias[o];
    for (std::size_t i = 0; i < layer.in; ++i) acc += row[i] * in[i];
    out[o] = acc;
  }
}

void relu_inplace(std::vector<double>& v) {
  for (double& x : v) x = x < 0.0 ? 0.0 : x;  // NaN propagates
}

void check_dim(std::size_t got, std::size_t want, const char* what) {
  if (got != want) {
    fail(ErrorKind::kInvalidInput, std::string(what) + ": expected dimension " +
                                       std::to_string(want) + ", got " +
                                       std::to_string(got));
  }
}

// Activations of every backbone layer plus the head pre-activation.
struct Trace {
  std::vector<std::vector<double>> acts;  // acts[0] = input
  std::vector<double> head_pre;
};

void trace_forward(const MlpParams& mlp, const DenseLayer& head,
                   std::span<const double> x, Trace& t) {
  t.acts.resize(mlp.layers.size() + 1);
  t.acts[0].assign(x.begin(), x.end());
  for (std::size_t l = 0; l < mlp.layers.size(); ++l) {
    dense_forward(mlp.layers[l], t.acts[l], t.acts[l + 1]);
    relu_inplace(t.acts[l + 1]);
  }
  dense_forward(head, t.acts.back(), t.head_pre);
}

}  // namespace

FeatureVector extract_features(std::span<const double> x, const MlpParams& mlp) {
  check_dim(x.size(), mlp.input_dim(), "extract_features");
  std::vector<double> cur(x.begin(), x.end());
  std::vector<double> next;
  for (const auto& layer : mlp.layers) {
    dense_forward(layer, cur, next);
    relu_inplace(next);
    cur.swap(next);
  }
  return cur;
}

std::vector<EvidencePair> egm_forward(std::span<const double> f_star,
                                      const EgmParams& egm) {
  check_dim(f_star.size(), egm.in, "egm_forward");
  if (egm.out % 2 != 0) fail(ErrorKind::kInvalidInput, "EGM output size must be 2K");
  std::vector<double> z;
  dense_forward(egm, f_star, z);
  std::vector<EvidencePair> out;
  out.reserve(egm.out / 2);
  for (std::size_t k = 0; k < egm.out / 2; ++k) {
    const double zp = z[2 * k];
    const double zn = z[2 * k + 1];
    if (!std::isfinite(zp) || !std::isfinite(zn)) {
      fail(ErrorKind::kNumeric, "non-finite EGM output for head " + std::to_string(k));
    }
    out.emplace_back(std::max(zp, 0.0), std::max(zn, 0.0));
  }
  return out;
}

std::vector<EvidencePair> model_evidence(const Model& model,
                                         std::span<const double> x) {
  FeatureVector f = extract_features(x, model.backbone);
  const std::size_t c = f.size();
  // The vector backbone yields a C x 1 x 1 map.
  const FeatureVector f_star = global_average_pool(FeatureMap(c, 1, 1, std::move(f)));
  return egm_forward(f_star, model.egm);
}

std::vector<double> model_logits(const Model& model, std::span<const double> x) {
  if (!model.logit_head) {
    fail(ErrorKind::kInvalidInput, "model has no classifier head");
  }
  const FeatureVector f = extract_features(x, model.backbone);
  std::vector<double> z;
  dense_forward(*model.logit_head, f, z);
  return z;
}

ModelShape Model::shape() const {
  ModelShape s;
  s.input_dim = backbone.input_dim();
  s.hidden.clear();
  for (std::size_t l = 0; l + 1 < backbone.layers.size(); ++l) {
    s.hidden.push_back(backbone.layers[l].out);
  }
  s.channels = backbone.output_dim();
  s.classes = classes();
  return s;
}

namespace {

void init_layer(DenseLayer& layer, std::mt19937_64& rng) {
  const double bound = 1.0 / std::sqrt(static_cast<double>(layer.in));
  std::uniform_real_distribution<double> dist(-bound, bound);
  for (double& w : layer.weight) w = dist(rng);
  for (double& b : layer.bias) b = dist(rng);
}

}  // namespace

Model init_model(const ModelShape& shape, std::uint64_t seed) {
  if (shape.input_dim == 0 || shape.channels == 0 || shape.classes == 0) {
    fail(ErrorKind::kConfig, "model dimensions must be >= 1");
  }
  std::mt19937_64 rng(seed);
  Model m;
  std::size_t prev = shape.input_dim;
  for (std::size_t h : shape.hidden) {
    if (h == 0) fail(ErrorKind::kConfig, "hidden layer width must be >= 1");
    m.backbone.layers.emplace_back(prev, h);
    prev = h;
  }
  m.backbone.layers.emplace_back(prev, shape.channels);
  for (auto& layer : m.backbone.layers) init_layer(layer, rng);
  m.egm = DenseLayer(shape.channels, 2 * shape.classes);
  init_layer(m.egm, rng);
  std::fill(m.egm.bias.begin(), m.egm.bias.end(), kEgmBiasInit);
  DenseLayer logits(shape.channels, shape.classes);
  init_layer(logits, rng);
  m.logit_head = std::move(logits);
  for (std::size_t k = 0; k < shape.classes; ++k) {
    m.class_names.push_back("c" + std::to_string(k));
  }
  m.base_rates = uniform_base_rates(shape.classes);
  return m;
}

namespace {

constexpr std::uint64_t kFnvOffset = 0xcbf29ce484222325ULL;
constexpr std::uint64_t kFnvPrime = 0x100000001b3ULL;

void fnv_mix(std::uint64_t& h, const std::vector<double>& values) {
  for (double v : values) {
    unsigned char bytes[sizeof(double)];
    std::memcpy(bytes, &v, sizeof(double));
    for (unsigned char b : bytes) {
      h ^= b;
      h *= kFnvPrime;
    }
  }
}

}  // namespace

std::uint64_t fingerprint(const DenseLayer& layer) {
  std::uint64_t h = kFnvOffset;
  fnv_mix(h, layer.weight);
  fnv_mix(h, layer.bias);
  return h;
}

std::uint64_t fingerprint(const MlpParams& mlp) {
  std::uint64_t h = kFnvOffset;
  for (const auto& layer : mlp.layers) {
    fnv_mix(h, layer.weight);
    fnv_mix(h, layer.bias);
  }
  return h;
}

// ---------------------------------------------------------------------------
// Losses and backpropagation

void TrainConfig::validate() const {
  if (epochs < 0) fail(ErrorKind::kConfig, "epochs must be >= 0");
  if (batch_size == 0) fail(ErrorKind::kConfig, "batch_size must be >= 1");
  if (!(learning_rate >= 0.0) || !std::isfinite(learning_rate)) {
    fail(ErrorKind::kConfig, "learning_rate must be finite and >= 0");
  }
  if (!(lr_decay_ratio > 0.0)) fail(ErrorKind::kConfig, "lr_decay_ratio must be > 0");
  if (lr_decay_every < 1) fail(ErrorKind::kConfig, "lr_decay_every must be >= 1");
  if (!(weight_decay >= 0.0)) fail(ErrorKind::kConfig, "weight_decay must be >= 0");
}

double TrainConfig::learning_rate_at(int epoch) const {
  return learning_rate * std::pow(lr_decay_ratio, epoch / lr_decay_every);
}

namespace {

enum class HeadKind { kEvidential, kLogit };

double softplus(double z) {
  return z > 0.0 ? z + std::log1p(std::exp(-z)) : std::log1p(std::exp(z));
}

// Per-sample loss; writes dL/dz for the head pre-activation.
double head_loss(HeadKind kind, const Model& model, const std::vector<double>& z,
                 const MultiLabel& y, std::vector<double>& dz) {
  dz.assign(z.size(), 0.0);
  double loss = 0.0;
  if (kind == HeadKind::kLogit) {
    for (std::size_t k = 0; k < z.size(); ++k) {
      loss += softplus(z[k]) - (y[k] ? z[k] : 0.0);
      dz[k] = sigmoid(z[k]) - (y[k] ? 1.0 : 0.0);
    }
    return loss;
  }
  const EvidenceWeight w(model.evidence_weight);
  for (std::size_t k = 0; k < y.size(); ++k) {
    const double zp = z[2 * k];
    const double zn = z[2 * k + 1];
    if (!std::isfinite(zp) || !std::isfinite(zn)) {
      return std::numeric_limits<double>::quiet_NaN();
    }
    const EvidencePair e(std::max(zp, 0.0), std::max(zn, 0.0));
    const BinaryLabel label = y[k] ? BinaryLabel{1, 0} : BinaryLabel{0, 1};
    loss += edl_loss_head(e, label, model.base_rates[k], w);
    const EvidenceGrad g = edl_loss_grad(e, label, model.base_rates[k], w);
    // ReLU subgradient is 0 at exactly 0.
    dz[2 * k] = zp > 0.0 ? g.pos : 0.0;
    dz[2 * k + 1] = zn > 0.0 ? g.neg : 0.0;
  }
  return loss;
}

ModelGrad zero_grad(const Model& model, const DenseLayer& head) {
  ModelGrad g;
  for (const auto& layer : model.backbone.layers) g.backbone.emplace_back(layer.in, layer.out);
  g.head = DenseLayer(head.in, head.out);
  return g;
}

void check_data(const Model& model, const TrainingSet& data) {
  if (data.labels.size() != data.features.size()) {
    fail(ErrorKind::kInvalidInput, "training set features/labels size mismatch");
  }
  for (std::size_t i = 0; i < data.size(); ++i) {
    check_dim(data.features[i].size(), model.backbone.input_dim(), "training sample features");
    check_dim(data.labels[i].size(), model.classes(), "training sample labels");
  }
  if (model.base_rates.size() != model.classes()) {
    fail(ErrorKind::kInvalidInput, "model base rates must have one entry per head");
  }
}

// Mean loss over `indices`; accumulates the mean gradient into `grad` when
// non-null. Backbone gradients are skipped when `with_backbone` is false.
double loss_and_grad(HeadKind kind, const Model& model, const DenseLayer& head,
                     const TrainingSet& data, std::span<const std::size_t> indices,
                     ModelGrad* grad, bool with_backbone) {
  Trace t;
  std::vector<double> dz, delta, back;
  double total = 0.0;
  for (std::size_t idx : indices) {
    trace_forward(model.backbone, head, data.features[idx], t);
    total += head_loss(kind, model, t.head_pre, data.labels[idx], dz);
    if (!grad) continue;

    const std::vector<double>& f = t.acts.back();
    DenseLayer& gh = grad->head;
    back.assign(head.in, 0.0);
    for (std::size_t o = 0; o < head.out; ++o) {
      if (dz[o] == 0.0) continue;
      double* grow = gh.weight.data() + o * head.in;
      const double* wrow = head.weight.data() + o * head.in;
      for (std::size_t i = 0; i < head.in; ++i) {
        grow[i] += dz[o] * f[i];
        back[i] += wrow[i] * dz[o];
      }
      gh.bias[o] += dz[o];
    }
    if (!with_backbone) continue;

    for (std::size_t l = model.backbone.layers.size(); l-- > 0;) {
      const DenseLayer& layer = model.backbone.layers[l];
      DenseLayer& gl = grad->backbone[l];
      const std::vector<double>& out = t.acts[l + 1];
      const std::vector<double>& in = t.acts[l];
      delta.assign(layer.out, 0.0);
      for (std::size_t o = 0; o < layer.out; ++o) delta[o] = out[o] > 0.0 ? back[o] : 0.0;
      back.assign(layer.in, 0.0);
      for (std::size_t o = 0; o < layer.out; ++o) {
        if (delta[o] == 0.0) continue;
        double* grow = gl.weight.data() + o * layer.in;
        const double* wrow = layer.weight.data() + o * layer.in;
        for (std::size_t i = 0; i < layer.in; ++i) {
          grow[i] += delta[o] * in[i];
          back[i] += wrow[i] * delta[o];
        }
        gl.bias[o] += delta[o];
      }
    }
  }
  const double n = static_cast<double>(indices.size());
  if (grad) {
    const double inv = 1.0 / n;
    auto scale = [inv](DenseLayer& l) {
      for (double& v : l.weight) v *= inv;
      for (double& v : l.bias) v *= inv;
    };
    scale(grad->head);
    for (auto& l : grad->backbone) scale(l);
  }
  return total / n;
}

// p <- p * (1 - lr * wd) - lr * g
void sgd_step(DenseLayer& p, const DenseLayer& g, double lr, double wd) {
  const double shrink = 1.0 - lr * wd;
  for (std::size_t i = 0; i < p.weight.size(); ++i) {
    p.weight[i] = p.weight[i] * shrink - lr * g.weight[i];
  }
  for (std::size_t i = 0; i < p.bias.size(); ++i) {
    p.bias[i] = p.bias[i] * shrink - lr * g.bias[i];
  }
}

std::vector<EpochLog> run_sgd(Model& model, const TrainingSet& data,
                              const TrainConfig& cfg, HeadKind kind,
                              bool with_backbone) {
  cfg.validate();
  if (data.size() == 0) fail(ErrorKind::kData, "training set is empty");
  check_data(model, data);

  std::mt19937_64 rng(cfg.seed ^ 0x9e3779b97f4a7c15ULL);
  std::vector<std::size_t> order(data.size());
  std::iota(order.begin(), order.end(), std::size_t{0});

  DenseLayer& head = kind == HeadKind::kLogit ? *model.logit_head : model.egm;
  std::vector<EpochLog> log;
  for (int epoch = 0; epoch < cfg.epochs; ++epoch) {
    const double lr = cfg.learning_rate_at(epoch);
    std::shuffle(order.begin(), order.end(), rng);
    double loss_sum = 0.0;
    std::size_t batch = 0;
    for (std::size_t start = 0; start < order.size(); start += cfg.batch_size, ++batch) {
      const std::size_t end = std::min(order.size(), start + cfg.batch_size);
      const std::span<const std::size_t> idx(order.data() + start, end - start);
      ModelGrad g = zero_grad(model, head);
      const double loss = loss_and_grad(kind, model, head, data, idx, &g, with_backbone);
      if (!std::isfinite(loss)) {
        fail(ErrorKind::kNumeric, "non-finite loss at epoch " + std::to_string(epoch) +
                                      ", batch " + std::to_string(batch));
      }
      loss_sum += loss * static_cast<double>(idx.size());
      sgd_step(head, g.head, lr, cfg.weight_decay);
      if (with_backbone) {
        for (std::size_t l = 0; l < model.backbone.layers.size(); ++l) {
          sgd_step(model.backbone.layers[l], g.backbone[l], lr, cfg.weight_decay);
        }
      }
    }
    log.push_back({epoch, lr, loss_sum / static_cast<double>(data.size())});
  }
  return log;
}

}  // namespace

double evidential_loss_and_grad(const Model& model, const TrainingSet& data,
                                std::span<const std::size_t> indices,
                                ModelGrad* grad) {
  check_data(model, data);
  if (indices.empty()) fail(ErrorKind::kInvalidInput, "no samples selected");
  if (grad) *grad = zero_grad(model, model.egm);
  return loss_and_grad(HeadKind::kEvidential, model, model.egm, data, indices, grad, true);
}

double evidential_loss(const Model& model, const TrainingSet& data) {
  std::vector<std::size_t> all(data.size());
  std::iota(all.begin(), all.end(), std::size_t{0});
  return evidential_loss_and_grad(model, data, all, nullptr);
}

TrainResult train_from(Model model, const TrainingSet& data, const TrainConfig& cfg) {
  auto log = run_sgd(model, data, cfg, HeadKind::kEvidential, true);
  return {std::move(model), std::move(log)};
}

TrainResult train(const TrainingSet& data, const ModelShape& shape,
                  const TrainConfig& cfg, const BaseRateSet& base, EvidenceWeight w) {
  if (base.size() != shape.classes) {
    fail(ErrorKind::kConfig, "need one base-rate pair per class head");
  }
  Model model = init_model(shape, cfg.seed);
  model.base_rates = base;
  model.evidence_weight = w.value();
  return train_from(std::move(model), data, cfg);
}

TrainResult train(const TrainingSet& data, const ModelShape& shape,
                  const TrainConfig& cfg, const CiwTable& ciw, EvidenceWeight w) {
  TrainResult r = train(data, shape, cfg, adjust_base_rates(ciw), w);
  r.model.class_names.clear();
  for (const auto& e : ciw.entries()) r.model.class_names.push_back(e.class_name);
  return r;
}

TrainResult train_classifier(const TrainingSet& data, const ModelShape& shape,
                             const TrainConfig& cfg) {
  Model model = init_model(shape, cfg.seed);
  auto log = run_sgd(model, data, cfg, HeadKind::kLogit, true);
  return {std::move(model), std::move(log)};
}

EgmParams mirror_logit_head(const DenseLayer& logits, double margin) {
  if (!std::isfinite(margin)) fail(ErrorKind::kConfig, "mirror margin must be finite");
  EgmParams egm(logits.in, 2 * logits.out);
  for (std::size_t k = 0; k < logits.out; ++k) {
    for (std::size_t i = 0; i < logits.in; ++i) {
      egm.w(2 * k, i) = logits.w(k, i);
      egm.w(2 * k + 1, i) = -logits.w(k, i);
    }
    egm.bias[2 * k] = logits.bias[k] + margin;
    egm.bias[2 * k + 1] = -logits.bias[k] + margin;
  }
  return egm;
}

TrainResult freeze_and_finetune(Model model, const TrainingSet& data,
                                const TrainConfig& cfg) {
  auto log = run_sgd(model, data, cfg, HeadKind::kEvidential, false);
  return {std::move(model), std::move(log)};
}

}  // namespace edl
