#include "edl/loss.hpp"

#include <cmath>
#include <string>

#include "edl/error.hpp"

namespace edl {

namespace {

void check_label(BinaryLabel y) {
  if (y.pos + y.neg != 1 || y.pos > 1 || y.neg > 1) {
    fail(ErrorKind::kInvalidInput, "binary label must be one-hot");
  }
}

}  // namespace

std::vector<BinaryLabel> binarize_labels(const MultiLabel& y) {
  std::vector<BinaryLabel> out;
  out.reserve(y.size());
  for (auto bit : y) {
    if (bit > 1) fail(ErrorKind::kInvalidInput, "multi-label entries must be 0 or 1");
    out.push_back(bit ? BinaryLabel{1, 0} : BinaryLabel{0, 1});
  }
  return out;
}

double edl_loss_head(const EvidencePair& e, BinaryLabel y,
                     const BaseRatePair& a, EvidenceWeight w) {
  check_label(y);
  const DirichletPair d = dirichlet_from_evidence(e, a, w);
  const double labeled = y.pos ? d.alpha_pos : d.alpha_neg;
  // Only reachable with a zero base rate and zero evidence on that side.
  if (!(labeled > 0.0)) {
    fail(ErrorKind::kInvalidInput, "Dirichlet parameter of labeled side is zero");
  }
  return std::log(d.strength) - std::log(labeled);
}

EvidenceGrad edl_loss_grad(const EvidencePair& e, BinaryLabel y,
                           const BaseRatePair& a, EvidenceWeight w) {
  check_label(y);
  const DirichletPair d = dirichlet_from_evidence(e, a, w);
  const double inv_s = 1.0 / d.strength;
  return {inv_s - (y.pos ? 1.0 / d.alpha_pos : 0.0),
          inv_s - (y.neg ? 1.0 / d.alpha_neg : 0.0)};
}

LossValue edl_loss_total(std::span<const EvidencePair> evidences,
                         const MultiLabel& y, const BaseRateSet& base,
                         EvidenceWeight w) {
  if (evidences.size() != y.size() || base.size() != y.size()) {
    fail(ErrorKind::kInvalidInput,
         "edl_loss_total: length mismatch (evidence " +
             std::to_string(evidences.size()) + ", labels " +
             std::to_string(y.size()) + ", base rates " +
             std::to_string(base.size()) + ")");
  }
  const auto labels = binarize_labels(y);
  LossValue out;
  out.per_class.reserve(y.size());
  for (std::size_t k = 0; k < y.size(); ++k) {
    const double l = edl_loss_head(evidences[k], labels[k], base[k], w);
    out.per_class.push_back(l);
    out.total += l;
  }
  return out;
}

}  // namespace edl
