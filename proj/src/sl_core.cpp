#include "edl/sl_core.hpp"

#include <algorithm>
#include <cmath>
#include <string>

#include "edl/error.hpp"

namespace edl {

namespace {

bool in_unit(double x) { return x >= 0.0 && x <= 1.0; }

}  // namespace

EvidenceWeight::EvidenceWeight(double w) : w_(w) {
  if (!std::isfinite(w) || w <= 0.0) {
    fail(ErrorKind::kInvalidInput,
         "evidence weight W must be finite and > 0, got " + std::to_string(w));
  }
}

BaseRatePair::BaseRatePair(double a_pos, double a_neg)
    : pos_(a_pos), neg_(a_neg) {
  if (!std::isfinite(a_pos) || !std::isfinite(a_neg) || !in_unit(a_pos) ||
      !in_unit(a_neg) || std::abs(a_pos + a_neg - 1.0) > kSumTolerance) {
    fail(ErrorKind::kInvalidInput,
         "base rates must lie in [0,1] and sum to 1, got (" +
             std::to_string(a_pos) + ", " + std::to_string(a_neg) + ")");
  }
}

BaseRatePair BaseRatePair::from_positive(double a_pos) {
  return BaseRatePair(a_pos, 1.0 - a_pos);
}

EvidencePair::EvidencePair(double e_pos, double e_neg) {
  if (!std::isfinite(e_pos) || !std::isfinite(e_neg) || e_pos < 0.0 ||
      e_neg < 0.0) {
    fail(ErrorKind::kInvalidInput,
         "evidence must be finite and non-negative, got (" +
             std::to_string(e_pos) + ", " + std::to_string(e_neg) + ")");
  }
  pos_ = std::min(e_pos, kEvidenceCap);
  neg_ = std::min(e_neg, kEvidenceCap);
}

Opinion::Opinion(double b_pos, double b_neg, double u, BaseRatePair base)
    : b_pos_(b_pos), b_neg_(b_neg), u_(u), base_(base) {
  if (!in_unit(b_pos) || !in_unit(b_neg) || !in_unit(u) ||
      std::abs(b_pos + b_neg + u - 1.0) > kSumTolerance) {
    fail(ErrorKind::kInvalidInput, "opinion masses must lie in [0,1] and sum to 1");
  }
}

DirichletPair dirichlet_from_evidence(const EvidencePair& e,
                                      const BaseRatePair& a,
                                      EvidenceWeight w) {
  return DirichletPair(e.pos() + a.pos() * w.value(),
                       e.neg() + a.neg() * w.value());
}

Opinion opinion_from_evidence(const EvidencePair& e, const BaseRatePair& a,
                              EvidenceWeight w) {
  const double s = w.value() + e.pos() + e.neg();
  return Opinion(e.pos() / s, e.neg() / s, w.value() / s, a);
}

ProbabilityPair probability_from_opinion(const Opinion& o) {
  return {o.b_pos() + o.base().pos() * o.u(),
          o.b_neg() + o.base().neg() * o.u()};
}

ProbabilityPair expected_probability(const DirichletPair& d) {
  if (!(d.strength > 0.0) || !std::isfinite(d.strength)) {
    fail(ErrorKind::kInvalidInput, "Dirichlet strength must be positive");
  }
  return {d.alpha_pos / d.strength, d.alpha_neg / d.strength};
}

double beta_log_density(double p, const DirichletPair& d) {
  if (!(p > 0.0 && p < 1.0)) {
    fail(ErrorKind::kInvalidInput,
         "Beta density evaluated outside (0,1): p = " + std::to_string(p));
  }
  if (!(d.alpha_pos > 0.0) || !(d.alpha_neg > 0.0)) {
    fail(ErrorKind::kInvalidInput, "Beta parameters must be positive");
  }
  const double log_norm = std::lgamma(d.alpha_pos + d.alpha_neg) -
                          std::lgamma(d.alpha_pos) - std::lgamma(d.alpha_neg);
  return log_norm + (d.alpha_pos - 1.0) * std::log(p) +
         (d.alpha_neg - 1.0) * std::log1p(-p);
}

}  // namespace edl
