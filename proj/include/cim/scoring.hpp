#pragma once

// Marginal-likelihood approximations for structure comparison: exact
// complete-data marginal, BIC, and the Cheeseman-Stutz score with its
// dimension-corrected variant.

#include <cstddef>
#include <iosfwd>
#include <span>
#include <string>
#include <vector>

#include "cim/em.hpp"
#include "cim/model.hpp"

namespace cim {

enum class Criterion { CsAdjusted, CsRaw, Bic };

std::string to_string(Criterion c);
Criterion parse_criterion(const std::string& name);  // "cs" | "cs-raw" | "bic"

/// log p(D_c | S) for (possibly fractional) counts under Dirichlet priors,
/// cause terms included. Throws std::invalid_argument for Poisson mechanisms.
/// Rows clamped in `clamps_from` are fixed and skipped.
double complete_data_log_marginal(const ModelStructure& s, const ExpectedStats& stats, const DirichletPrior& prior,
                                  const ModelParams* clamps_from = nullptr);

/// sum_ijk E[N_ijk] log theta_ijk plus cause terms, with 0 log 0 = 0.
double complete_data_loglik(const ModelStructure& s, const ExpectedStats& stats, const ModelParams& theta);

double bic_score(double loglik_at_mode, int d, std::size_t n);

/// Terms that every Cheeseman-Stutz variant is assembled from.
struct CsComponents {
  double log_marginal_imaginary = 0.0;  // log p(D' | S)
  double loglik_imaginary = 0.0;        // log p(D' | theta_hat, S)
  double loglik_observed = 0.0;         // log p(D | theta_hat, S)
  std::size_t n = 0;
};

CsComponents cs_components(const ModelStructure& s, const Dataset& data, const ModelParams& theta,
                           const DirichletPrior& prior);

double cs_raw(const ModelStructure& s, const Dataset& data, const ModelParams& theta, const DirichletPrior& prior);

/// log p(D'|S) - log p(D'|theta) + d'/2 log N + log p(D|theta) - d/2 log N.
double cs_adjusted(const CsComponents& parts, int d, int d_unadjusted);
double cs_adjusted(const ModelStructure& s, const Dataset& data, const ModelParams& theta,
                   const DirichletPrior& prior, int d, int d_unadjusted);

/// Normalized posteriors under a uniform model prior (log-sum-exp).
std::vector<double> model_posteriors(std::span<const double> log_scores);

struct Candidate {
  ModelStructure structure;
  ModelParams clamps;  // supplies clamp masks; values unused
  int d = 0;
  int d_unadjusted = 0;
};

struct CandidateScore {
  std::string model_id;
  std::size_t n = 0;
  Criterion criterion = Criterion::CsAdjusted;
  double log_score = 0.0;
  int d = 0;
  int d_unadjusted = 0;
  double posterior = 0.0;
  FitMode mode = FitMode::MAP;
  int restarts = 0;
  CsComponents parts;
  ModelParams theta;
};

struct ScoreReport {
  std::vector<CandidateScore> rows;
};

/// Fits every candidate by EM and scores it. Candidates with Poisson
/// mechanisms are always scored by BIC.
ScoreReport score_candidates(std::span<const Candidate> candidates, const Dataset& data, Criterion criterion,
                             const EmOptions& em, double alpha = 1.0);

/// Score for one fitted candidate from its components.
double criterion_score(Criterion c, const CsComponents& parts, int d, int d_unadjusted);

inline constexpr const char* kScoreCsvHeader = "model_id,N,criterion,log_score,d,d_unadjusted,posterior";
void write_score_csv(std::ostream& out, const ScoreReport& report);

}  // namespace cim
