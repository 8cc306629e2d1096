#include "cim/em.hpp"

#include <algorithm>
#include <cmath>
#include <limits>
#include <map>
#include <stdexcept>

#include "cim/inference.hpp"
#include "cim/random.hpp"

namespace cim {

namespace {

constexpr double kRateFloor = 1e-10;

double loglik_weighted(const ModelStructure& s, const ModelParams& p, std::span<const WeightedCase> cases) {
  double total = 0.0;
  for (const auto& wc : cases) total += wc.weight * loglik_case(s, p, wc.value);
  return total;
}

double objective(const ModelStructure& s, const ModelParams& p, const DirichletPrior& prior,
                 std::span<const WeightedCase> cases, FitMode mode) {
  double g = loglik_weighted(s, p, cases);
  if (mode == FitMode::MAP) g += log_prior_density(s, p, prior);
  return g;
}

double log_dirichlet_shifted(std::span<const double> row, std::span<const double> alpha) {
  // Dirichlet(alpha + 1) log density.
  double a0 = 0.0, value = 0.0;
  for (std::size_t k = 0; k < row.size(); ++k) {
    a0 += alpha[k] + 1.0;
    value += alpha[k] * std::log(row[k]) - std::lgamma(alpha[k] + 1.0);
  }
  return value + std::lgamma(a0);
}

std::vector<double> normalized(std::span<const double> counts, std::span<const double> alpha) {
  std::vector<double> row(counts.size());
  double total = 0.0;
  for (std::size_t k = 0; k < counts.size(); ++k) total += row[k] = counts[k] + (alpha.empty() ? 0.0 : alpha[k]);
  for (auto& v : row) v /= total;
  return row;
}

double row_mass(std::span<const double> counts) {
  double total = 0.0;
  for (double v : counts) total += v;
  return total;
}

ModelParams m_step(const ModelStructure& s, const ExpectedStats& stats, const DirichletPrior* prior,
                   const ModelParams& previous) {
  ModelParams next = previous;
  for (std::size_t c = 0; c < s.causes.size(); ++c) {
    const auto& counts = stats.cause_counts[c];
    if (prior) next.cause_priors[c] = normalized(counts, prior->cause_alpha[c]);
    else if (row_mass(counts) > 0.0) next.cause_priors[c] = normalized(counts, {});
  }
  for (std::size_t i = 0; i < s.mechanisms.size(); ++i) {
    auto& t = next.tables[i];
    const std::size_t q = s.config_count(i);
    for (std::size_t j = 0; j < q; ++j) {
      if (t.family == Family::Poisson) {
        const double total = stats.poisson_totals[i][j];
        const double n = stats.exposures[i][j];
        if (prior) {
          const auto& h = prior->gamma[i][j];
          t.rates[j] = std::max(kRateFloor, (h.shape - 1.0 + total) / (h.rate + n));
        } else if (n > 0.0) {
          t.rates[j] = std::max(kRateFloor, total / n);
        }
        continue;
      }
      if (t.is_clamped(j)) continue;
      const auto& counts = stats.table_counts[i][j];
      if (prior) t.rows[j] = normalized(counts, prior->table_alpha[i][j]);
      else if (row_mass(counts) > 0.0) t.rows[j] = normalized(counts, {});
    }
  }
  return next;
}

}  // namespace

ExpectedStats ExpectedStats::zeros(const ModelStructure& s) {
  ExpectedStats st;
  for (std::size_t c = 0; c < s.causes.size(); ++c)
    st.cause_counts.emplace_back(static_cast<std::size_t>(s.cause_cardinality(c)), 0.0);
  for (std::size_t i = 0; i < s.mechanisms.size(); ++i) {
    const auto& m = s.mechanisms[i];
    const std::size_t q = s.config_count(i);
    if (m.family == Family::Multinomial)
      st.table_counts.emplace_back(q, std::vector<double>(static_cast<std::size_t>(*m.domain.cardinality), 0.0));
    else
      st.table_counts.emplace_back();
    st.poisson_totals.emplace_back(q, 0.0);
    st.exposures.emplace_back(q, 0.0);
  }
  return st;
}

std::vector<WeightedCase> compress(const Dataset& data) {
  std::map<Case, double> counts;
  for (const auto& c : data.rows) counts[c] += 1.0;
  std::vector<WeightedCase> out;
  out.reserve(counts.size());
  for (auto& [c, w] : counts) out.push_back({c, w});
  return out;
}

ExpectedStats e_step(const ModelStructure& s, const ModelParams& p, const Dataset& data) {
  const auto cases = compress(data);
  return e_step(s, p, cases);
}

ExpectedStats e_step(const ModelStructure& s, const ModelParams& p, std::span<const WeightedCase> cases) {
  auto st = ExpectedStats::zeros(s);
  for (const auto& wc : cases) {
    const auto& c = wc.value;
    const double w = wc.weight;
    st.n_cases += w;
    for (std::size_t k = 0; k < s.causes.size(); ++k) st.cause_counts[k][static_cast<std::size_t>(c.causes[k])] += w;

    const auto post = mechanism_posterior(s, p, c.causes, c.effect);
    for (std::size_t i = 0; i < s.mechanisms.size(); ++i) {
      const std::size_t j = parent_config_index(s, i, c.causes);
      const auto& probs = post.probs[i];
      st.exposures[i][j] += w;
      if (s.mechanisms[i].family == Family::Multinomial) {
        auto& row = st.table_counts[i][j];
        for (std::size_t k = 0; k < probs.size(); ++k) row[k] += w * probs[k];
      } else {
        double mean = 0.0;
        for (std::size_t k = 0; k < probs.size(); ++k) mean += static_cast<double>(k) * probs[k];
        st.poisson_totals[i][j] += w * mean;
      }
    }
  }
  return st;
}

ModelParams m_step_ml(const ModelStructure& s, const ExpectedStats& stats, const ModelParams& previous) {
  return m_step(s, stats, nullptr, previous);
}

ModelParams m_step_map(const ModelStructure& s, const ExpectedStats& stats, const DirichletPrior& prior,
                       const ModelParams& previous) {
  return m_step(s, stats, &prior, previous);
}

double log_prior_density(const ModelStructure& s, const ModelParams& p, const DirichletPrior& prior) {
  double lp = 0.0;
  for (std::size_t c = 0; c < s.causes.size(); ++c) lp += log_dirichlet_shifted(p.cause_priors[c], prior.cause_alpha[c]);
  for (std::size_t i = 0; i < s.mechanisms.size(); ++i) {
    const auto& t = p.tables[i];
    for (std::size_t j = 0; j < t.config_count(); ++j) {
      if (t.family == Family::Poisson) {
        const auto& h = prior.gamma[i][j];
        const double rate = t.rates[j];
        lp += h.shape * std::log(h.rate) - std::lgamma(h.shape) + (h.shape - 1.0) * std::log(rate) - h.rate * rate;
      } else if (!t.is_clamped(j)) {
        lp += log_dirichlet_shifted(t.rows[j], prior.table_alpha[i][j]);
      }
    }
  }
  return lp;
}

double g_objective(const ModelStructure& s, const ModelParams& p, const DirichletPrior& prior,
                   const Dataset& data, FitMode mode) {
  const auto cases = compress(data);
  return objective(s, p, prior, cases, mode);
}

ModelParams random_init(const ModelStructure& s, std::uint64_t seed, const ModelParams* clamps_from) {
  Rng rng(seed);
  ModelParams p = uniform_params(s);
  for (auto& prior : p.cause_priors) prior = sample_dirichlet(rng, prior.size());
  std::gamma_distribution<double> rate_dist(2.0, 1.0);
  for (std::size_t i = 0; i < s.mechanisms.size(); ++i) {
    auto& t = p.tables[i];
    if (clamps_from && !clamps_from->tables[i].clamps.empty()) t.clamps = clamps_from->tables[i].clamps;
    if (t.family == Family::Poisson) {
      for (auto& r : t.rates) r = std::max(kRateFloor, rate_dist(rng));
      continue;
    }
    for (std::size_t j = 0; j < t.rows.size(); ++j) {
      auto draw = sample_dirichlet(rng, t.rows[j].size());
      t.rows[j] = t.is_clamped(j) ? point_mass(static_cast<int>(t.rows[j].size()), *t.clamps[j]) : std::move(draw);
    }
  }
  return p;
}

double max_param_change(const ModelParams& a, const ModelParams& b) {
  double worst = 0.0;
  const auto scan = [&worst](const std::vector<double>& x, const std::vector<double>& y) {
    for (std::size_t k = 0; k < x.size(); ++k) worst = std::max(worst, std::abs(x[k] - y[k]));
  };
  for (std::size_t c = 0; c < a.cause_priors.size(); ++c) scan(a.cause_priors[c], b.cause_priors[c]);
  for (std::size_t i = 0; i < a.tables.size(); ++i) {
    for (std::size_t j = 0; j < a.tables[i].rows.size(); ++j) scan(a.tables[i].rows[j], b.tables[i].rows[j]);
    scan(a.tables[i].rates, b.tables[i].rates);
  }
  return worst;
}

FitResult em_fit(const ModelStructure& s, const Dataset& data, const DirichletPrior& prior,
                 const EmOptions& options, const ModelParams* clamps_from) {
  if (data.empty()) throw std::invalid_argument("em_fit needs a non-empty dataset");
  if (options.restarts < 1) throw std::invalid_argument("em_fit needs at least one restart");
  const auto cases = compress(data);
  if (!clamps_from && options.init) clamps_from = &*options.init;

  std::optional<FitResult> best;
  for (int r = 0; r < options.restarts; ++r) {
    FitResult run;
    run.best_restart = r;
    ModelParams theta = (r == 0 && options.init)
                            ? *options.init
                            : random_init(s, derive_seed(options.seed, {static_cast<std::uint64_t>(r)}), clamps_from);
    double g = objective(s, theta, prior, cases, options.mode);
    run.trace.push_back(g);
    if (!std::isfinite(g)) continue;

    for (int it = 1; it <= options.max_iter; ++it) {
      const auto stats = e_step(s, theta, cases);
      ModelParams next = options.mode == FitMode::MAP ? m_step_map(s, stats, prior, theta) : m_step_ml(s, stats, theta);
      const double g_next = objective(s, next, prior, cases, options.mode);
      const double moved = max_param_change(theta, next);
      run.trace.push_back(g_next);
      run.iterations = it;
      theta = std::move(next);
      const bool flat = std::abs(g_next - g) < options.tol * (1.0 + std::abs(g_next));
      g = g_next;
      if (flat && moved < options.tol) {
        run.converged = true;
        break;
      }
    }
    if (!std::isfinite(g)) continue;
    run.params = std::move(theta);
    run.objective = g;
    if (!best || run.objective > best->objective) best = std::move(run);
  }
  if (!best) throw std::runtime_error("em_fit: no restart produced a finite objective");
  return *best;
}

std::string to_string(FitMode mode) { return mode == FitMode::ML ? "ml" : "map"; }

FitMode parse_fit_mode(const std::string& name) {
  if (name == "ml") return FitMode::ML;
  if (name == "map") return FitMode::MAP;
  throw std::invalid_argument("unknown fit mode \"" + name + "\" (expected ml or map)");
}

}  // namespace cim
