#pragma once

// Desk-scale network: MLP feature extractor -> global average pooling ->
// evidential generation module (one affine layer + ReLU emitting 2K
// evidences laid out [e1+, e1-, e2+, e2-, ...]).
//
// A plain K-logit head can sit on the same backbone. It is used by the
// two-phase protocol (train backbone + logit head, then freeze the backbone
// and fine-tune the evidential head) and by the MaxLogit / JointEnergy
// baselines.

#include <cstddef>
#include <cstdint>
#include <filesystem>
#include <optional>
#include <span>
#include <string>
#include <vector>

#include "edl/ebra.hpp"
#include "edl/loss.hpp"
#include "edl/sl_core.hpp"

namespace edl {

// C x H x W tensor, channel-major.
class FeatureMap {
 public:
  FeatureMap(std::size_t channels, std::size_t height, std::size_t width,
             std::vector<double> data);

  std::size_t channels() const noexcept { return channels_; }
  std::size_t height() const noexcept { return height_; }
  std::size_t width() const noexcept { return width_; }
  double at(std::size_t c, std::size_t y, std::size_t x) const {
    return data_[(c * height_ + y) * width_ + x];
  }

 private:
  std::size_t channels_;
  std::size_t height_;
  std::size_t width_;
  std::vector<double> data_;
};

using FeatureVector = std::vector<double>;

// Mean over the spatial dimensions of every channel.
FeatureVector global_average_pool(const FeatureMap& f);

// Fully connected layer y = W x + b, W stored row-major as out x in.
struct DenseLayer {
  std::size_t in = 0;
  std::size_t out = 0;
  std::vector<double> weight;
  std::vector<double> bias;

  DenseLayer() = default;
  DenseLayer(std::size_t in_dim, std::size_t out_dim)
      : in(in_dim), out(out_dim), weight(in_dim * out_dim, 0.0), bias(out_dim, 0.0) {}

  double& w(std::size_t o, std::size_t i) { return weight[o * in + i]; }
  double w(std::size_t o, std::size_t i) const { return weight[o * in + i]; }

  friend bool operator==(const DenseLayer&, const DenseLayer&) = default;
};

// Backbone: every layer is followed by ReLU.
struct MlpParams {
  std::vector<DenseLayer> layers;

  std::size_t input_dim() const { return layers.empty() ? 0 : layers.front().in; }
  std::size_t output_dim() const { return layers.empty() ? 0 : layers.back().out; }

  friend bool operator==(const MlpParams&, const MlpParams&) = default;
};

// Evidential generation module: C -> 2K affine, then ReLU.
using EgmParams = DenseLayer;

struct ModelShape {
  std::size_t input_dim = 16;
  std::vector<std::size_t> hidden = {64, 64};
  std::size_t channels = 64;
  std::size_t classes = 1;
};

struct Model {
  MlpParams backbone;
  EgmParams egm;
  std::optional<DenseLayer> logit_head;
  std::vector<std::string> class_names;  // one per head
  BaseRateSet base_rates;                 // one per head
  double evidence_weight = 2.0;

  ModelShape shape() const;
  std::size_t classes() const { return egm.out / 2; }

  friend bool operator==(const Model&, const Model&) = default;
};

// Weights and biases uniform in [-1/sqrt(fan_in), 1/sqrt(fan_in)], seeded,
// except the EGM bias, which starts at kEgmBiasInit so that no evidence unit
// is dead (ReLU output 0 on every input) from the first step.
// Class names default to "c0".."c{K-1}" and base rates to (1/2, 1/2).
inline constexpr double kEgmBiasInit = 0.5;

Model init_model(const ModelShape& shape, std::uint64_t seed);

// Forward pass through the backbone. Throws kInvalidInput on dim mismatch.
FeatureVector extract_features(std::span<const double> x, const MlpParams& mlp);

// ReLU(W f + b) grouped into K evidence pairs.
std::vector<EvidencePair> egm_forward(std::span<const double> f_star,
                                      const EgmParams& egm);

// Full evidential forward pass for one input.
std::vector<EvidencePair> model_evidence(const Model& model,
                                         std::span<const double> x);

// Raw logits from the classifier head. Throws kInvalidInput if absent.
std::vector<double> model_logits(const Model& model, std::span<const double> x);

// FNV-1a over the raw parameter bytes.
std::uint64_t fingerprint(const MlpParams& mlp);
std::uint64_t fingerprint(const DenseLayer& layer);

// ---------------------------------------------------------------------------
// Training

struct TrainingSet {
  std::vector<std::vector<double>> features;
  std::vector<MultiLabel> labels;

  std::size_t size() const { return features.size(); }
};

struct TrainConfig {
  int epochs = 30;
  std::size_t batch_size = 64;
  double learning_rate = 0.05;
  double lr_decay_ratio = 0.1;
  int lr_decay_every = 10;
  double weight_decay = 1e-4;
  std::uint64_t seed = 7;

  // Throws kConfig on a non-positive field (learning_rate may be 0).
  void validate() const;
  double learning_rate_at(int epoch) const;
};

struct EpochLog {
  int epoch = 0;
  double learning_rate = 0.0;
  double mean_loss = 0.0;
};

struct TrainResult {
  Model model;
  std::vector<EpochLog> log;
};

// Gradients of the mean loss over a set of samples, same layout as Model.
struct ModelGrad {
  std::vector<DenseLayer> backbone;
  DenseLayer head;
};

// Mean evidential loss over the given samples and its gradient with respect
// to every backbone and EGM parameter (weight decay excluded).
double evidential_loss_and_grad(const Model& model, const TrainingSet& data,
                                std::span<const std::size_t> indices,
                                ModelGrad* grad);

// Mean per-sample evidential loss over the whole set.
double evidential_loss(const Model& model, const TrainingSet& data);

// End-to-end minibatch SGD of backbone + EGM on the evidential loss, from a
// fresh initialization seeded by cfg.seed. Throws kNumeric on NaN loss.
TrainResult train(const TrainingSet& data, const ModelShape& shape,
                  const TrainConfig& cfg, const BaseRateSet& base,
                  EvidenceWeight w = EvidenceWeight());
TrainResult train(const TrainingSet& data, const ModelShape& shape,
                  const TrainConfig& cfg, const CiwTable& ciw,
                  EvidenceWeight w = EvidenceWeight());

// Continues training an existing model's backbone + EGM.
TrainResult train_from(Model model, const TrainingSet& data,
                       const TrainConfig& cfg);

// Phase one of the two-phase protocol: backbone + K-logit head trained with
// sigmoid binary cross-entropy. The EGM keeps its random initialization.
TrainResult train_classifier(const TrainingSet& data, const ModelShape& shape,
                             const TrainConfig& cfg);

// EGM warm start from a trained K-logit head z = V f + c: head k gets
// e+ = ReLU(z_k + margin) and e- = ReLU(-z_k + margin), so every evidence
// unit starts active on its own side of the classifier's boundary.
inline constexpr double kMirrorMargin = 1.0;
EgmParams mirror_logit_head(const DenseLayer& logits, double margin = kMirrorMargin);

// Phase two: backbone frozen (bit-identical), only the EGM is trained on the
// evidential loss using the model's base rates.
TrainResult freeze_and_finetune(Model model, const TrainingSet& data,
                                const TrainConfig& cfg);

// ---------------------------------------------------------------------------
// Checkpoints: versioned line-oriented text, decimals in shortest
// round-trip form.

inline constexpr int kCheckpointVersion = 1;

void save_checkpoint(const Model& model, const std::filesystem::path& path);
std::string checkpoint_to_string(const Model& model);
Model load_checkpoint(const std::filesystem::path& path);
Model checkpoint_from_string(const std::string& text);

}  // namespace edl
