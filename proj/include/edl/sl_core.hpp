#pragma once

// Subjective-logic algebra for a single binary (defective / non-defective)
// class head: evidence -> Beta parameters -> opinion -> probability.

namespace edl {

// Evidence values above this are clamped when an EvidencePair is built.
inline constexpr double kEvidenceCap = 1e9;

// Tolerance used when checking that masses / base rates sum to one.
inline constexpr double kSumTolerance = 1e-12;

// Prior weight W of the uncertain evidence. Binary heads use W = 2.
class EvidenceWeight {
 public:
  explicit EvidenceWeight(double w = 2.0);
  double value() const noexcept { return w_; }

 private:
  double w_;
};

// Prior probabilities of the defective (+) and non-defective (-) outcomes.
class BaseRatePair {
 public:
  BaseRatePair() = default;  // (1/2, 1/2)
  BaseRatePair(double a_pos, double a_neg);

  // Builds (a, 1 - a).
  static BaseRatePair from_positive(double a_pos);

  double pos() const noexcept { return pos_; }
  double neg() const noexcept { return neg_; }

  friend bool operator==(const BaseRatePair&, const BaseRatePair&) = default;

 private:
  double pos_ = 0.5;
  double neg_ = 0.5;
};

// Non-negative evidence (e+, e-) emitted by one head. Throws on negative or
// non-finite input; clamps to kEvidenceCap.
class EvidencePair {
 public:
  EvidencePair() = default;
  EvidencePair(double e_pos, double e_neg);

  double pos() const noexcept { return pos_; }
  double neg() const noexcept { return neg_; }

 private:
  double pos_ = 0.0;
  double neg_ = 0.0;
};

struct DirichletPair {
  DirichletPair() = default;
  DirichletPair(double a_pos, double a_neg)
      : alpha_pos(a_pos), alpha_neg(a_neg), strength(a_pos + a_neg) {}

  double alpha_pos = 1.0;
  double alpha_neg = 1.0;
  double strength = 2.0;
};

struct ProbabilityPair {
  double pos = 0.5;
  double neg = 0.5;
};

// Opinion (b+, b-, u, a). Construction checks u + b+ + b- = 1.
class Opinion {
 public:
  Opinion(double b_pos, double b_neg, double u, BaseRatePair base);

  double b_pos() const noexcept { return b_pos_; }
  double b_neg() const noexcept { return b_neg_; }
  double u() const noexcept { return u_; }
  const BaseRatePair& base() const noexcept { return base_; }

 private:
  double b_pos_;
  double b_neg_;
  double u_;
  BaseRatePair base_;
};

// alpha_i = e_i + a_i * W.
DirichletPair dirichlet_from_evidence(const EvidencePair& e,
                                      const BaseRatePair& a,
                                      EvidenceWeight w);

// b_i = e_i / S, u = W / S. S is formed as W + e+ + e-, which equals
// alpha+ + alpha- because the base rates sum to one; this keeps the
// zero-evidence opinion exactly vacuous.
Opinion opinion_from_evidence(const EvidencePair& e, const BaseRatePair& a,
                              EvidenceWeight w);

// p_i = b_i + a_i * u.
ProbabilityPair probability_from_opinion(const Opinion& o);

// p_i = alpha_i / S. Throws if S <= 0.
ProbabilityPair expected_probability(const DirichletPair& d);

// log Beta(p; alpha+, alpha-) for p in (0, 1).
double beta_log_density(double p, const DirichletPair& d);

}  // namespace edl
