#include "cim/inference.hpp"

#include <algorithm>
#include <cmath>
#include <limits>
#include <string>

namespace cim {

namespace {

using Kind = CombinationFunction::Kind;

// Past this many factors the CDF products are accumulated in log space.
constexpr std::size_t kLogSpaceThreshold = 32;

double product(std::span<const double> factors, std::size_t skip = static_cast<std::size_t>(-1)) {
  if (factors.size() <= kLogSpaceThreshold) {
    double prod = 1.0;
    for (std::size_t a = 0; a < factors.size(); ++a)
      if (a != skip) prod *= factors[a];
    return prod;
  }
  double log_sum = 0.0;
  for (std::size_t a = 0; a < factors.size(); ++a) {
    if (a == skip) continue;
    if (factors[a] <= 0.0) return 0.0;
    log_sum += std::log(factors[a]);
  }
  return std::exp(log_sum);
}

double poisson_pmf(double rate, int k) {
  if (k < 0) return 0.0;
  return std::exp(k * std::log(rate) - rate - std::lgamma(k + 1.0));
}

double binomial_pmf(int n, double prob, int k) {
  if (prob <= 0.0) return k == 0 ? 1.0 : 0.0;
  if (prob >= 1.0) return k == n ? 1.0 : 0.0;
  const double log_choose = std::lgamma(n + 1.0) - std::lgamma(k + 1.0) - std::lgamma(n - k + 1.0);
  return std::exp(log_choose + k * std::log(prob) + (n - k) * std::log1p(-prob));
}

void require_combo(const ModelStructure& s, Kind kind, const char* op) {
  if (s.combo.kind != kind)
    throw std::invalid_argument(std::string(op) + " does not apply to combination " + to_string(s.combo));
}

void require_effect_value(const ModelStructure& s, int e) {
  if (!s.effect.domain.contains(e))
    throw std::invalid_argument("effect value " + std::to_string(e) + " outside the effect domain");
}

std::vector<std::size_t> active_configs(const ModelStructure& s, std::span<const int> causes) {
  std::vector<std::size_t> js(s.mechanisms.size());
  for (std::size_t i = 0; i < js.size(); ++i) js[i] = parent_config_index(s, i, causes);
  return js;
}

// Number of mechanism values with nonzero posterior mass under Max and Sum.
int bounded_support(const Mechanism& m, int e) {
  return m.domain.is_finite() ? std::min(*m.domain.cardinality, e + 1) : e + 1;
}

std::vector<double> effect_cdfs(const ModelParams& p, std::span<const std::size_t> js, int e) {
  std::vector<double> cdf(js.size());
  for (std::size_t i = 0; i < js.size(); ++i) cdf[i] = mechanism_cdf(p.tables[i], js[i], e);
  return cdf;
}

// Distribution of the number of mechanisms equal to 1 (binary mechanisms).
std::vector<double> count_of_ones(const ModelParams& p, std::span<const std::size_t> js) {
  std::vector<double> dist{1.0};
  for (std::size_t i = 0; i < js.size(); ++i) {
    const double on = mechanism_pmf(p.tables[i], js[i], 1);
    const double off = mechanism_pmf(p.tables[i], js[i], 0);
    std::vector<double> next(dist.size() + 1, 0.0);
    for (std::size_t t = 0; t < dist.size(); ++t) {
      next[t] += dist[t] * off;
      next[t + 1] += dist[t] * on;
    }
    dist = std::move(next);
  }
  return dist;
}

}  // namespace

EffectDistribution EffectDistribution::finite(std::vector<double> probs) {
  EffectDistribution d;
  d.probs_ = std::move(probs);
  return d;
}

EffectDistribution EffectDistribution::lazy(std::function<double(int)> pmf, std::optional<double> poisson_rate) {
  EffectDistribution d;
  d.lazy_ = std::move(pmf);
  d.rate_ = poisson_rate;
  return d;
}

double EffectDistribution::pmf(int e) const {
  if (lazy_) return e < 0 ? 0.0 : lazy_(e);
  if (e < 0 || static_cast<std::size_t>(e) >= probs_.size()) return 0.0;
  return probs_[static_cast<std::size_t>(e)];
}

int eval_combination(const CombinationFunction& combo, std::span<const int> values) {
  switch (combo.kind) {
    case Kind::Max: return values.empty() ? 0 : *std::max_element(values.begin(), values.end());
    case Kind::Sum: {
      int total = 0;
      for (int v : values) total += v;
      return total;
    }
    case Kind::NOf:
      return std::count(values.begin(), values.end(), 1) >= combo.threshold ? 1 : 0;
    case Kind::Parity:
      // Effect is 1 when an even number of mechanisms are 1, zero included.
      return std::count(values.begin(), values.end(), 1) % 2 == 0 ? 1 : 0;
  }
  return 0;
}

double mechanism_pmf(const MechanismTable& t, std::size_t j, int k) {
  if (t.family == Family::Poisson) return poisson_pmf(t.rates.at(j), k);
  const auto& row = t.rows.at(j);
  if (k < 0 || static_cast<std::size_t>(k) >= row.size()) return 0.0;
  return row[static_cast<std::size_t>(k)];
}

double mechanism_cdf(const MechanismTable& t, std::size_t j, int k) {
  if (k < 0) return 0.0;
  double cdf = 0.0;
  if (t.family == Family::Poisson) {
    for (int l = 0; l <= k; ++l) cdf += poisson_pmf(t.rates.at(j), l);
    return std::min(cdf, 1.0);
  }
  const auto& row = t.rows.at(j);
  const std::size_t top = std::min(row.size(), static_cast<std::size_t>(k) + 1);
  for (std::size_t l = 0; l < top; ++l) cdf += row[l];
  return cdf;
}

double nmi_effect_cdf(const ModelStructure& s, const ModelParams& p, std::span<const int> causes, int e) {
  require_combo(s, Kind::Max, "nmi_effect_cdf");
  if (e < 0) return 0.0;
  const auto js = active_configs(s, causes);
  const auto cdf = effect_cdfs(p, js, e);
  return product(cdf);
}

MechanismPosterior nmi_mech_posterior(const ModelStructure& s, const ModelParams& p,
                                      std::span<const int> causes, int e) {
  require_combo(s, Kind::Max, "nmi_mech_posterior");
  require_effect_value(s, e);
  const auto js = active_configs(s, causes);
  const auto at_most = effect_cdfs(p, js, e);
  const auto below = effect_cdfs(p, js, e - 1);

  const double z = product(at_most) - product(below);
  if (!(z > 0.0)) throw ZeroProbabilityEvidence("p(E = " + std::to_string(e) + " | c) is zero");

  MechanismPosterior post;
  post.probs.resize(s.mechanisms.size());
  for (std::size_t i = 0; i < s.mechanisms.size(); ++i) {
    const int support = bounded_support(s.mechanisms[i], e);
    auto& row = post.probs[i];
    row.assign(static_cast<std::size_t>(support), 0.0);
    // Any k < e requires some other mechanism to attain e.
    const double others = (product(at_most, i) - product(below, i)) / z;
    double below_e = 0.0;
    for (int k = 0; k < std::min(support, e); ++k) {
      row[static_cast<std::size_t>(k)] = mechanism_pmf(p.tables[i], js[i], k) * others;
      below_e += row[static_cast<std::size_t>(k)];
    }
    if (support == e + 1) row[static_cast<std::size_t>(e)] = std::max(0.0, 1.0 - below_e);
  }
  return post;
}

EffectDistribution poisson_nai_effect(const ModelStructure& s, const ModelParams& p, std::span<const int> causes) {
  require_combo(s, Kind::Sum, "poisson_nai_effect");
  const auto js = active_configs(s, causes);
  double total = 0.0;
  for (std::size_t i = 0; i < js.size(); ++i) {
    const auto& t = p.tables[i];
    if (t.family != Family::Poisson) throw std::invalid_argument("poisson_nai_effect requires poisson mechanisms");
    const double rate = t.rates.at(js[i]);
    if (!(rate > 0.0)) throw std::invalid_argument("poisson rate must be positive");
    total += rate;
  }
  return EffectDistribution::lazy([total](int e) { return poisson_pmf(total, e); }, total);
}

MechanismPosterior poisson_nai_mech_posterior(const ModelStructure& s, const ModelParams& p,
                                              std::span<const int> causes, int e) {
  require_effect_value(s, e);
  const auto total = *poisson_nai_effect(s, p, causes).poisson_rate();
  const auto js = active_configs(s, causes);
  MechanismPosterior post;
  post.probs.resize(js.size());
  for (std::size_t i = 0; i < js.size(); ++i) {
    const double share = p.tables[i].rates[js[i]] / total;
    auto& row = post.probs[i];
    row.resize(static_cast<std::size_t>(e) + 1);
    for (int k = 0; k <= e; ++k) row[static_cast<std::size_t>(k)] = binomial_pmf(e, share, k);
  }
  return post;
}

MechanismPosterior brute_force_posterior(const ModelStructure& s, const ModelParams& p,
                                         std::span<const int> causes, int e, std::size_t cap) {
  require_effect_value(s, e);
  const auto js = active_configs(s, causes);
  const std::size_t m = js.size();
  const bool bounded = s.combo.kind == Kind::Max || s.combo.kind == Kind::Sum;

  std::vector<int> support(m);
  std::size_t outcomes = 1;
  for (std::size_t i = 0; i < m; ++i) {
    const auto& mech = s.mechanisms[i];
    if (bounded) {
      support[i] = bounded_support(mech, e);
    } else if (mech.domain.is_finite()) {
      support[i] = *mech.domain.cardinality;
    } else {
      throw std::invalid_argument("enumeration needs finite mechanism domains for " + to_string(s.combo));
    }
    if (outcomes > cap / static_cast<std::size_t>(support[i]))
      throw EnumerationCapExceeded("joint mechanism outcomes exceed the cap of " + std::to_string(cap));
    outcomes *= static_cast<std::size_t>(support[i]);
  }

  std::vector<std::vector<double>> pmf(m);
  for (std::size_t i = 0; i < m; ++i)
    for (int k = 0; k < support[i]; ++k) pmf[i].push_back(mechanism_pmf(p.tables[i], js[i], k));

  MechanismPosterior post;
  post.probs.resize(m);
  for (std::size_t i = 0; i < m; ++i) post.probs[i].assign(static_cast<std::size_t>(support[i]), 0.0);

  std::vector<int> values(m, 0);
  double total = 0.0;
  for (std::size_t n = 0; n < outcomes; ++n) {
    if (eval_combination(s.combo, values) == e) {
      double w = 1.0;
      for (std::size_t i = 0; i < m; ++i) w *= pmf[i][static_cast<std::size_t>(values[i])];
      total += w;
      for (std::size_t i = 0; i < m; ++i) post.probs[i][static_cast<std::size_t>(values[i])] += w;
    }
    for (std::size_t i = m; i-- > 0;) {
      if (++values[i] < support[i]) break;
      values[i] = 0;
    }
  }
  if (!(total > 0.0)) throw ZeroProbabilityEvidence("p(E = " + std::to_string(e) + " | c) is zero");
  for (auto& row : post.probs)
    for (double& v : row) v /= total;
  return post;
}

EffectDistribution effect_distribution(const ModelStructure& s, const ModelParams& p, std::span<const int> causes) {
  switch (s.combo.kind) {
    case Kind::Sum: return poisson_nai_effect(s, p, causes);
    case Kind::Max: {
      const auto js = active_configs(s, causes);
      if (!s.effect.domain.is_finite()) {
        // The mass function outlives the caller's params, so it owns a copy.
        auto lazy_cdf = [tables = p.tables, js](int e) {
          if (e < 0) return 0.0;
          std::vector<double> f(js.size());
          for (std::size_t i = 0; i < js.size(); ++i) f[i] = mechanism_cdf(tables[i], js[i], e);
          return product(f);
        };
        return EffectDistribution::lazy([lazy_cdf](int e) { return lazy_cdf(e) - lazy_cdf(e - 1); });
      }
      auto cdf = [&p, &js](int e) { return e < 0 ? 0.0 : product(effect_cdfs(p, js, e)); };
      const int r = *s.effect.domain.cardinality;
      std::vector<double> probs(static_cast<std::size_t>(r));
      double prev = 0.0;
      for (int e = 0; e < r; ++e) {
        const double cur = cdf(e);
        probs[static_cast<std::size_t>(e)] = cur - prev;
        prev = cur;
      }
      return EffectDistribution::finite(std::move(probs));
    }
    case Kind::NOf:
    case Kind::Parity: {
      const auto js = active_configs(s, causes);
      const auto counts = count_of_ones(p, js);
      double on = 0.0, off = 0.0;
      for (std::size_t t = 0; t < counts.size(); ++t) {
        std::vector<int> probe(t, 1);
        probe.resize(js.size(), 0);
        (eval_combination(s.combo, probe) == 1 ? on : off) += counts[t];
      }
      return EffectDistribution::finite({off, on});
    }
  }
  return EffectDistribution::finite({});
}

double effect_probability(const ModelStructure& s, const ModelParams& p, std::span<const int> causes, int e) {
  if (!s.effect.domain.contains(e)) return 0.0;
  if (s.combo.kind == Kind::Max) {
    const auto js = active_configs(s, causes);
    return product(effect_cdfs(p, js, e)) - product(effect_cdfs(p, js, e - 1));
  }
  return effect_distribution(s, p, causes).pmf(e);
}

MechanismPosterior mechanism_posterior(const ModelStructure& s, const ModelParams& p,
                                       std::span<const int> causes, int e) {
  switch (s.combo.kind) {
    case Kind::Max: return nmi_mech_posterior(s, p, causes, e);
    case Kind::Sum: return poisson_nai_mech_posterior(s, p, causes, e);
    case Kind::NOf:
    case Kind::Parity: return brute_force_posterior(s, p, causes, e);
  }
  return {};
}

double loglik_case(const ModelStructure& s, const ModelParams& p, const Case& c) {
  double ll = 0.0;
  for (std::size_t k = 0; k < s.causes.size(); ++k) {
    const double prior = p.cause_priors.at(k).at(static_cast<std::size_t>(c.causes.at(k)));
    if (prior <= 0.0) return -std::numeric_limits<double>::infinity();
    ll += std::log(prior);
  }
  const double pe = effect_probability(s, p, c.causes, c.effect);
  if (!(pe > 0.0)) return -std::numeric_limits<double>::infinity();
  return ll + std::log(pe);
}

double loglik(const ModelStructure& s, const ModelParams& p, const Dataset& data) {
  double total = 0.0;
  for (const auto& c : data.rows) total += loglik_case(s, p, c);
  return total;
}

}  // namespace cim
