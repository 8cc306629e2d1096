#pragma once

// Exact inference for causal interaction models with single-variable
// mechanisms. Max and Sum have closed forms; N-of and parity go through
// bounded enumeration, which doubles as the test oracle for the closed forms.

#include <cstddef>
#include <functional>
#include <optional>
#include <span>
#include <stdexcept>
#include <vector>

#include "cim/model.hpp"

namespace cim {

/// Thrown when conditioning on an effect value that has probability zero.
class ZeroProbabilityEvidence : public std::domain_error {
 public:
  using std::domain_error::domain_error;
};

/// Thrown when brute-force enumeration would exceed its outcome cap.
class EnumerationCapExceeded : public std::length_error {
 public:
  using std::length_error::length_error;
};

inline constexpr std::size_t kDefaultEnumerationCap = 10'000'000;

/// p(E | c). Finite effects carry an explicit probability vector; counting
/// effects expose a lazily evaluated mass function.
class EffectDistribution {
 public:
  static EffectDistribution finite(std::vector<double> probs);
  static EffectDistribution lazy(std::function<double(int)> pmf, std::optional<double> poisson_rate = {});

  double pmf(int e) const;
  bool is_finite() const { return !lazy_; }
  /// Finite support only.
  std::span<const double> probs() const { return probs_; }
  /// Set when the effect is Poisson(rate).
  std::optional<double> poisson_rate() const { return rate_; }

 private:
  std::vector<double> probs_;
  std::function<double(int)> lazy_;
  std::optional<double> rate_;
};

/// probs[i][k] = p(X_i = k | c, e). Under Max and Sum the vectors stop at
/// min(r_i - 1, e); entries past e are structurally zero.
struct MechanismPosterior {
  std::vector<std::vector<double>> probs;
};

int eval_combination(const CombinationFunction& combo, std::span<const int> values);

/// p(X_i = k | Pa_i = j) and the row CDF p(X_i <= k | Pa_i = j).
double mechanism_pmf(const MechanismTable& t, std::size_t j, int k);
double mechanism_cdf(const MechanismTable& t, std::size_t j, int k);

/// p(E <= e | c) as a product of mechanism CDFs. Max combination only.
double nmi_effect_cdf(const ModelStructure& s, const ModelParams& p, std::span<const int> causes, int e);

MechanismPosterior nmi_mech_posterior(const ModelStructure& s, const ModelParams& p,
                                      std::span<const int> causes, int e);

/// E | c ~ Poisson(sum of the active rates). Sum combination, Poisson mechanisms.
EffectDistribution poisson_nai_effect(const ModelStructure& s, const ModelParams& p, std::span<const int> causes);

/// X_i | c, e ~ Binomial(e, lambda_i / Lambda).
MechanismPosterior poisson_nai_mech_posterior(const ModelStructure& s, const ModelParams& p,
                                              std::span<const int> causes, int e);

/// Enumerates all joint mechanism values consistent with e. Supports are
/// truncated to 0..e under Max and Sum, which is exact.
MechanismPosterior brute_force_posterior(const ModelStructure& s, const ModelParams& p,
                                         std::span<const int> causes, int e,
                                         std::size_t cap = kDefaultEnumerationCap);

/// Effect distribution for any combination function.
EffectDistribution effect_distribution(const ModelStructure& s, const ModelParams& p, std::span<const int> causes);

double effect_probability(const ModelStructure& s, const ModelParams& p, std::span<const int> causes, int e);

/// Closed form where one exists, enumeration otherwise.
MechanismPosterior mechanism_posterior(const ModelStructure& s, const ModelParams& p,
                                       std::span<const int> causes, int e);

/// log p(c, e | theta): cause priors plus log p(E = e | c). -inf if impossible.
double loglik_case(const ModelStructure& s, const ModelParams& p, const Case& c);
double loglik(const ModelStructure& s, const ModelParams& p, const Dataset& data);

}  // namespace cim
