#pragma once

// EM for ML and MAP parameter estimation with latent mechanism variables.

#include <cstdint>
#include <optional>
#include <span>
#include <string>
#include <vector>

#include "cim/model.hpp"

namespace cim {

/// Fractional sufficient statistics from one E-step: the imaginary complete
/// dataset. Causes are observed, so their counts are exact tallies.
struct ExpectedStats {
  std::vector<std::vector<double>> cause_counts;               // [cause][state]
  std::vector<std::vector<std::vector<double>>> table_counts;  // [mech][config][state], multinomial
  std::vector<std::vector<double>> poisson_totals;             // [mech][config], sum of E[X_i]
  std::vector<std::vector<double>> exposures;                  // [mech][config], cases hitting j
  double n_cases = 0.0;

  static ExpectedStats zeros(const ModelStructure& s);
};

/// A distinct case together with its multiplicity.
struct WeightedCase {
  Case value;
  double weight = 1.0;
};

/// Collapses repeated cases, ordered by case value. E-steps over the
/// compressed form are identical to per-case E-steps up to summation order.
std::vector<WeightedCase> compress(const Dataset& data);

ExpectedStats e_step(const ModelStructure& s, const ModelParams& p, const Dataset& data);
ExpectedStats e_step(const ModelStructure& s, const ModelParams& p, std::span<const WeightedCase> cases);

/// Row-normalized expected counts. Rows with no expected mass, and clamped
/// rows, keep the values in `previous`.
ModelParams m_step_ml(const ModelStructure& s, const ExpectedStats& stats, const ModelParams& previous);

/// theta_ijk = (alpha_ijk + E[N_ijk]) / sum_k (alpha_ijk + E[N_ijk]); Poisson
/// rates take the Gamma posterior mode (a - 1 + total) / (b + n).
ModelParams m_step_map(const ModelStructure& s, const ExpectedStats& stats, const DirichletPrior& prior,
                       const ModelParams& previous);

/// Log density of the parameter prior whose maximizer, combined with the
/// expected complete-data likelihood, is exactly m_step_map: each row uses
/// Dirichlet(alpha + 1), each rate Gamma(shape, rate). Clamped rows are fixed
/// and contribute nothing.
double log_prior_density(const ModelStructure& s, const ModelParams& p, const DirichletPrior& prior);

enum class FitMode { ML, MAP };

std::string to_string(FitMode mode);
FitMode parse_fit_mode(const std::string& name);  // "ml" | "map"

/// g(theta) = log p(D | theta) + log p(theta); ML drops the prior term.
double g_objective(const ModelStructure& s, const ModelParams& p, const DirichletPrior& prior,
                   const Dataset& data, FitMode mode);

struct EmOptions {
  FitMode mode = FitMode::MAP;
  double tol = 1e-6;
  int max_iter = 5000;
  int restarts = 5;
  std::uint64_t seed = 0;
  /// When set, restart 0 starts here instead of a random draw.
  std::optional<ModelParams> init;
};

struct FitResult {
  ModelParams params;
  std::vector<double> trace;  // g at the start and after each iteration
  bool converged = false;
  int iterations = 0;
  int best_restart = 0;
  double objective = 0.0;
};

/// Random interior starting point: Dirichlet(1) rows and Gamma(2, 1) rates.
/// Clamps are copied from `clamps_from` when given.
ModelParams random_init(const ModelStructure& s, std::uint64_t seed, const ModelParams* clamps_from = nullptr);

/// Runs `restarts` independent EM chains and returns the one with the best
/// final objective. A chain stops when the relative change in g drops below
/// tol and no parameter moved by more than tol, or after max_iter iterations.
FitResult em_fit(const ModelStructure& s, const Dataset& data, const DirichletPrior& prior,
                 const EmOptions& options, const ModelParams* clamps_from = nullptr);

/// Largest absolute difference over all parameters (priors, rows, rates).
double max_param_change(const ModelParams& a, const ModelParams& b);

}  // namespace cim
