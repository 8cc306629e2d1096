#include "cim/scoring.hpp"

#include <algorithm>
#include <cmath>
#include <limits>
#include <ostream>
#include <stdexcept>

#include "cim/format.hpp"
#include "cim/inference.hpp"
#include "cim/random.hpp"

namespace cim {

namespace {

// lnG(sum a) - lnG(sum a + N) + sum_k [lnG(a_k + N_k) - lnG(a_k)]
double dirichlet_multinomial_log(std::span<const double> counts, std::span<const double> alpha) {
  double a0 = 0.0, n0 = 0.0, value = 0.0;
  for (std::size_t k = 0; k < counts.size(); ++k) {
    a0 += alpha[k];
    n0 += counts[k];
    value += std::lgamma(alpha[k] + counts[k]) - std::lgamma(alpha[k]);
  }
  return value + std::lgamma(a0) - std::lgamma(a0 + n0);
}

double weighted_log(std::span<const double> counts, std::span<const double> probs) {
  double value = 0.0;
  for (std::size_t k = 0; k < counts.size(); ++k) {
    if (counts[k] == 0.0) continue;
    value += counts[k] * std::log(probs[k]);
  }
  return value;
}

bool has_poisson(const ModelStructure& s) {
  return std::any_of(s.mechanisms.begin(), s.mechanisms.end(),
                     [](const Mechanism& m) { return m.family == Family::Poisson; });
}

}  // namespace

std::string to_string(Criterion c) {
  switch (c) {
    case Criterion::CsAdjusted: return "cs";
    case Criterion::CsRaw: return "cs-raw";
    case Criterion::Bic: return "bic";
  }
  return "?";
}

Criterion parse_criterion(const std::string& name) {
  if (name == "cs") return Criterion::CsAdjusted;
  if (name == "cs-raw") return Criterion::CsRaw;
  if (name == "bic") return Criterion::Bic;
  throw std::invalid_argument("unknown criterion \"" + name + "\" (expected cs, cs-raw or bic)");
}

double complete_data_log_marginal(const ModelStructure& s, const ExpectedStats& stats, const DirichletPrior& prior,
                                  const ModelParams* clamps_from) {
  if (has_poisson(s)) throw std::invalid_argument("complete-data marginal is only available for multinomial mechanisms");
  double total = 0.0;
  for (std::size_t c = 0; c < s.causes.size(); ++c)
    total += dirichlet_multinomial_log(stats.cause_counts[c], prior.cause_alpha[c]);
  for (std::size_t i = 0; i < s.mechanisms.size(); ++i) {
    for (std::size_t j = 0; j < stats.table_counts[i].size(); ++j) {
      if (clamps_from && clamps_from->tables[i].is_clamped(j)) continue;
      total += dirichlet_multinomial_log(stats.table_counts[i][j], prior.table_alpha[i][j]);
    }
  }
  return total;
}

double complete_data_loglik(const ModelStructure& s, const ExpectedStats& stats, const ModelParams& theta) {
  if (has_poisson(s)) throw std::invalid_argument("complete-data likelihood is only available for multinomial mechanisms");
  double total = 0.0;
  for (std::size_t c = 0; c < s.causes.size(); ++c) total += weighted_log(stats.cause_counts[c], theta.cause_priors[c]);
  for (std::size_t i = 0; i < s.mechanisms.size(); ++i)
    for (std::size_t j = 0; j < stats.table_counts[i].size(); ++j)
      total += weighted_log(stats.table_counts[i][j], theta.tables[i].rows[j]);
  return total;
}

double bic_score(double loglik_at_mode, int d, std::size_t n) {
  if (n < 1) throw std::invalid_argument("bic_score needs N >= 1");
  return loglik_at_mode - 0.5 * d * std::log(static_cast<double>(n));
}

CsComponents cs_components(const ModelStructure& s, const Dataset& data, const ModelParams& theta,
                           const DirichletPrior& prior) {
  const auto cases = compress(data);
  const auto stats = e_step(s, theta, cases);
  CsComponents parts;
  parts.n = data.size();
  parts.log_marginal_imaginary = complete_data_log_marginal(s, stats, prior, &theta);
  parts.loglik_imaginary = complete_data_loglik(s, stats, theta);
  for (const auto& wc : cases) parts.loglik_observed += wc.weight * loglik_case(s, theta, wc.value);
  return parts;
}

double cs_raw(const ModelStructure& s, const Dataset& data, const ModelParams& theta, const DirichletPrior& prior) {
  return complete_data_log_marginal(s, e_step(s, theta, data), prior, &theta);
}

double cs_adjusted(const CsComponents& parts, int d, int d_unadjusted) {
  const double log_n = std::log(static_cast<double>(parts.n));
  return parts.log_marginal_imaginary - parts.loglik_imaginary + 0.5 * d_unadjusted * log_n +
         parts.loglik_observed - 0.5 * d * log_n;
}

double cs_adjusted(const ModelStructure& s, const Dataset& data, const ModelParams& theta,
                   const DirichletPrior& prior, int d, int d_unadjusted) {
  return cs_adjusted(cs_components(s, data, theta, prior), d, d_unadjusted);
}

std::vector<double> model_posteriors(std::span<const double> log_scores) {
  if (log_scores.empty()) throw std::invalid_argument("model_posteriors needs at least one candidate");
  const double top = *std::max_element(log_scores.begin(), log_scores.end());
  std::vector<double> post(log_scores.size());
  if (!std::isfinite(top)) {
    // All -inf: nothing to discriminate on.
    std::fill(post.begin(), post.end(), 1.0 / static_cast<double>(post.size()));
    return post;
  }
  double total = 0.0;
  for (std::size_t k = 0; k < post.size(); ++k) total += post[k] = std::exp(log_scores[k] - top);
  for (auto& v : post) v /= total;
  return post;
}

double criterion_score(Criterion c, const CsComponents& parts, int d, int d_unadjusted) {
  switch (c) {
    case Criterion::CsAdjusted: return cs_adjusted(parts, d, d_unadjusted);
    case Criterion::CsRaw: return parts.log_marginal_imaginary;
    case Criterion::Bic: return bic_score(parts.loglik_observed, d, parts.n);
  }
  return std::numeric_limits<double>::quiet_NaN();
}

ScoreReport score_candidates(std::span<const Candidate> candidates, const Dataset& data, Criterion criterion,
                             const EmOptions& em, double alpha) {
  ScoreReport report;
  std::vector<double> scores;
  for (std::size_t k = 0; k < candidates.size(); ++k) {
    const auto& cand = candidates[k];
    const auto& s = cand.structure;
    const auto prior = DirichletPrior::uniform(s, alpha);
    EmOptions opts = em;
    opts.seed = derive_seed(em.seed, {static_cast<std::uint64_t>(k)});
    const auto fit = em_fit(s, data, prior, opts, &cand.clamps);

    CandidateScore row;
    row.model_id = s.id;
    row.n = data.size();
    row.d = cand.d;
    row.d_unadjusted = cand.d_unadjusted;
    row.mode = em.mode;
    row.restarts = em.restarts;
    row.theta = fit.params;
    if (has_poisson(s)) {
      row.criterion = Criterion::Bic;
      row.parts.n = data.size();
      row.parts.loglik_observed = loglik(s, fit.params, data);
    } else {
      row.criterion = criterion;
      row.parts = cs_components(s, data, fit.params, prior);
    }
    row.log_score = criterion_score(row.criterion, row.parts, row.d, row.d_unadjusted);
    scores.push_back(row.log_score);
    report.rows.push_back(std::move(row));
  }
  if (!scores.empty()) {
    const auto post = model_posteriors(scores);
    for (std::size_t k = 0; k < post.size(); ++k) report.rows[k].posterior = post[k];
  }
  return report;
}

void write_score_csv(std::ostream& out, const ScoreReport& report) {
  out << "# cim-scores/1\n" << kScoreCsvHeader << '\n';
  for (const auto& r : report.rows) {
    out << r.model_id << ',' << r.n << ',' << to_string(r.criterion) << ',' << format_double(r.log_score) << ','
        << r.d << ',' << r.d_unadjusted << ',' << format_double(r.posterior) << '\n';
  }
}

}  // namespace cim
