#pragma once

// Evidential negative log-likelihood for K binary Beta heads.
//
//   L_k = sum_i y_k^i (log S_k - log alpha_k^i),   alpha_k^i = e_k^i + a_k^i W
//
// i.e. -log of the expected probability of the labeled side.

#include <cstdint>
#include <span>
#include <vector>

#include "edl/ebra.hpp"
#include "edl/sl_core.hpp"

namespace edl {

// One-hot over {defective, non-defective}.
struct BinaryLabel {
  std::uint8_t pos = 0;
  std::uint8_t neg = 1;

  friend bool operator==(const BinaryLabel&, const BinaryLabel&) = default;
};

// Multi-hot label vector of length K; entries are 0 or 1.
using MultiLabel = std::vector<std::uint8_t>;

struct LossValue {
  double total = 0.0;
  std::vector<double> per_class;
};

struct EvidenceGrad {
  double pos = 0.0;
  double neg = 0.0;
};

std::vector<BinaryLabel> binarize_labels(const MultiLabel& y);

double edl_loss_head(const EvidencePair& e, BinaryLabel y,
                     const BaseRatePair& a, EvidenceWeight w);

// dL/de_j = 1/S - y_j / alpha_j.
EvidenceGrad edl_loss_grad(const EvidencePair& e, BinaryLabel y,
                           const BaseRatePair& a, EvidenceWeight w);

// Throws kInvalidInput when the three lengths disagree.
LossValue edl_loss_total(std::span<const EvidencePair> evidences,
                         const MultiLabel& y, const BaseRateSet& base,
                         EvidenceWeight w);

}  // namespace edl
