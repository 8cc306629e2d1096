#include "cim/model.hpp"

#include <cmath>
#include <set>
#include <stdexcept>

namespace cim {

namespace {

constexpr double kRowSumTol = 1e-9;

std::string mech_label(std::size_t i) { return "mechanism " + std::to_string(i); }

void check_row(std::vector<std::string>& out, const std::string& where,
               const std::vector<double>& row, bool strict_positive) {
  double sum = 0.0;
  for (double v : row) {
    if (!std::isfinite(v) || v < 0.0) {
      out.push_back(where + ": negative or non-finite entry");
      return;
    }
    if (strict_positive && v <= 0.0) {
      out.push_back(where + ": zero entry in unclamped row");
      return;
    }
    sum += v;
  }
  if (std::abs(sum - 1.0) > kRowSumTol) out.push_back(where + ": row sum != 1");
}

}  // namespace

std::string to_string(const CombinationFunction& combo) {
  switch (combo.kind) {
    case CombinationFunction::Kind::Max: return "max";
    case CombinationFunction::Kind::Sum: return "sum";
    case CombinationFunction::Kind::NOf: return "nof(" + std::to_string(combo.threshold) + ")";
    case CombinationFunction::Kind::Parity: return "parity";
  }
  return "?";
}

std::size_t ModelStructure::config_count(std::size_t mech) const {
  std::size_t q = 1;
  for (std::size_t p : mechanisms.at(mech).parents) q *= static_cast<std::size_t>(cause_cardinality(p));
  return q;
}

std::size_t ModelStructure::cause_config_count() const {
  std::size_t n = 1;
  for (std::size_t c = 0; c < causes.size(); ++c) n *= static_cast<std::size_t>(cause_cardinality(c));
  return n;
}

DirichletPrior DirichletPrior::uniform(const ModelStructure& s, double alpha, GammaHyper gamma) {
  DirichletPrior prior;
  for (std::size_t c = 0; c < s.causes.size(); ++c)
    prior.cause_alpha.emplace_back(static_cast<std::size_t>(s.cause_cardinality(c)), alpha);
  for (std::size_t i = 0; i < s.mechanisms.size(); ++i) {
    const auto& m = s.mechanisms[i];
    const std::size_t q = s.config_count(i);
    if (m.family == Family::Multinomial) {
      prior.table_alpha.emplace_back(q, std::vector<double>(static_cast<std::size_t>(*m.domain.cardinality), alpha));
      prior.gamma.emplace_back();
    } else {
      prior.table_alpha.emplace_back();
      prior.gamma.emplace_back(q, gamma);
    }
  }
  return prior;
}

std::vector<std::string> validate(const ModelStructure& s) {
  std::vector<std::string> out;
  using Kind = CombinationFunction::Kind;

  if (s.mechanisms.empty()) out.push_back("structure has no mechanisms");
  if (s.causes.empty()) out.push_back("structure has no causes");
  for (std::size_t c = 0; c < s.causes.size(); ++c) {
    const auto& d = s.causes[c].domain;
    if (!d.is_finite() || *d.cardinality < 2)
      out.push_back("cause " + s.causes[c].name + ": causes must be finite with cardinality >= 2");
  }
  if (s.effect.domain.is_finite() && *s.effect.domain.cardinality < 2)
    out.push_back("effect: finite cardinality must be >= 2");
  if (!out.empty()) return out;

  const bool binary_effect = s.effect.domain == Domain::finite(2);
  for (std::size_t i = 0; i < s.mechanisms.size(); ++i) {
    const auto& m = s.mechanisms[i];
    const std::string where = mech_label(i);
    std::set<std::size_t> seen;
    for (std::size_t p : m.parents) {
      if (p >= s.causes.size()) out.push_back(where + ": parent index " + std::to_string(p) + " does not name a cause");
      else if (!seen.insert(p).second) out.push_back(where + ": duplicate parent " + s.causes[p].name);
    }
    if (m.family == Family::Multinomial) {
      if (!m.domain.is_finite() || *m.domain.cardinality < 2)
        out.push_back(where + ": multinomial mechanism needs a finite domain of cardinality >= 2");
    } else if (m.domain.is_finite()) {
      out.push_back(where + ": poisson mechanism needs the counting domain");
    }

    switch (s.combo.kind) {
      case Kind::Max:
        if (s.effect.domain.is_finite() &&
            (!m.domain.is_finite() || *m.domain.cardinality > *s.effect.domain.cardinality))
          out.push_back(where + ": max requires the mechanism domain to be a prefix of the effect domain");
        break;
      case Kind::Sum:
        if (m.family != Family::Poisson)
          out.push_back(where + ": sum requires poisson mechanisms (domain closed under addition)");
        break;
      case Kind::NOf:
      case Kind::Parity:
        if (m.domain != Domain::finite(2))
          out.push_back(where + ": " + to_string(s.combo) + " requires binary mechanism variables");
        break;
    }
  }

  switch (s.combo.kind) {
    case Kind::Max: break;
    case Kind::Sum:
      if (s.effect.domain.is_finite()) out.push_back("sum requires a counting effect domain");
      break;
    case Kind::NOf:
      if (!binary_effect) out.push_back("nof requires binary effect");
      if (s.combo.threshold < 1) out.push_back("nof threshold must be a positive integer");
      break;
    case Kind::Parity:
      if (!binary_effect) out.push_back("parity requires binary effect");
      break;
  }
  return out;
}

std::vector<std::string> validate(const ModelStructure& s, const ModelParams& p, bool strict_positive) {
  auto out = validate(s);
  if (!out.empty()) return out;

  if (p.cause_priors.size() != s.causes.size()) {
    out.push_back("cause_priors: expected " + std::to_string(s.causes.size()) + " vectors");
  } else {
    for (std::size_t c = 0; c < s.causes.size(); ++c) {
      const std::string where = "cause " + s.causes[c].name + " prior";
      if (p.cause_priors[c].size() != static_cast<std::size_t>(s.cause_cardinality(c)))
        out.push_back(where + ": length != cardinality");
      else
        check_row(out, where, p.cause_priors[c], strict_positive);
    }
  }

  if (p.tables.size() != s.mechanisms.size()) {
    out.push_back("tables: expected " + std::to_string(s.mechanisms.size()) + " mechanism tables");
    return out;
  }
  for (std::size_t i = 0; i < s.mechanisms.size(); ++i) {
    const auto& m = s.mechanisms[i];
    const auto& t = p.tables[i];
    const std::string where = mech_label(i);
    const std::size_t q = s.config_count(i);
    if (t.family != m.family) {
      out.push_back(where + ": table family does not match mechanism family");
      continue;
    }
    if (!t.clamps.empty() && t.clamps.size() != q) out.push_back(where + ": clamp mask length != q_i");
    if (m.family == Family::Poisson) {
      if (t.rates.size() != q) out.push_back(where + ": expected " + std::to_string(q) + " rates");
      for (std::size_t j = 0; j < t.rates.size(); ++j)
        if (!std::isfinite(t.rates[j]) || t.rates[j] <= 0.0)
          out.push_back(where + " config " + std::to_string(j) + ": rate must be positive");
      for (const auto& c : t.clamps)
        if (c) out.push_back(where + ": clamps are only supported for multinomial rows");
      continue;
    }
    const int r = *m.domain.cardinality;
    if (t.rows.size() != q) {
      out.push_back(where + ": expected " + std::to_string(q) + " rows");
      continue;
    }
    for (std::size_t j = 0; j < q; ++j) {
      const std::string row_where = where + " row " + std::to_string(j);
      const auto& row = t.rows[j];
      if (row.size() != static_cast<std::size_t>(r)) {
        out.push_back(row_where + ": length != mechanism cardinality");
        continue;
      }
      if (t.is_clamped(j)) {
        const int k = *t.clamps[j];
        if (k < 0 || k >= r) out.push_back(row_where + ": clamp state out of range");
        else if (row != point_mass(r, k)) out.push_back(row_where + ": clamped row is not an exact point mass");
        continue;
      }
      check_row(out, row_where, row, strict_positive);
    }
  }
  return out;
}

std::size_t parent_config_index(const ModelStructure& s, std::size_t mech, std::span<const int> cause_states) {
  if (cause_states.size() != s.causes.size())
    throw std::invalid_argument("cause assignment has " + std::to_string(cause_states.size()) +
                                " entries, model has " + std::to_string(s.causes.size()) + " causes");
  std::size_t j = 0;
  for (std::size_t p : s.mechanisms.at(mech).parents) {
    const int r = s.cause_cardinality(p);
    const int v = cause_states[p];
    if (v < 0 || v >= r) throw std::out_of_range("state " + std::to_string(v) + " out of range for cause " + s.causes[p].name);
    j = j * static_cast<std::size_t>(r) + static_cast<std::size_t>(v);
  }
  return j;
}

std::vector<int> config_parent_states(const ModelStructure& s, std::size_t mech, std::size_t j) {
  const auto& parents = s.mechanisms.at(mech).parents;
  std::vector<int> states(parents.size());
  for (std::size_t k = parents.size(); k-- > 0;) {
    const auto r = static_cast<std::size_t>(s.cause_cardinality(parents[k]));
    states[k] = static_cast<int>(j % r);
    j /= r;
  }
  return states;
}

std::vector<std::vector<int>> enumerate_configs(const ModelStructure& s, std::size_t mech) {
  std::vector<std::vector<int>> out;
  const std::size_t q = s.config_count(mech);
  out.reserve(q);
  for (std::size_t j = 0; j < q; ++j) out.push_back(config_parent_states(s, mech, j));
  return out;
}

std::size_t cause_config_index(const ModelStructure& s, std::span<const int> cause_states) {
  std::size_t idx = 0;
  for (std::size_t c = 0; c < s.causes.size(); ++c)
    idx = idx * static_cast<std::size_t>(s.cause_cardinality(c)) + static_cast<std::size_t>(cause_states[c]);
  return idx;
}

std::vector<int> cause_config_states(const ModelStructure& s, std::size_t index) {
  std::vector<int> states(s.causes.size());
  for (std::size_t c = s.causes.size(); c-- > 0;) {
    const auto r = static_cast<std::size_t>(s.cause_cardinality(c));
    states[c] = static_cast<int>(index % r);
    index /= r;
  }
  return states;
}

int unadjusted_dimension(const ModelStructure& s, const ModelParams* clamps_from) {
  int d = 0;
  for (std::size_t c = 0; c < s.causes.size(); ++c) d += s.cause_cardinality(c) - 1;
  for (std::size_t i = 0; i < s.mechanisms.size(); ++i) {
    const auto& m = s.mechanisms[i];
    const auto q = s.config_count(i);
    for (std::size_t j = 0; j < q; ++j) {
      if (clamps_from && clamps_from->tables.at(i).is_clamped(j)) continue;
      d += m.family == Family::Multinomial ? *m.domain.cardinality - 1 : 1;
    }
  }
  return d;
}

ModelParams uniform_params(const ModelStructure& s) {
  ModelParams p;
  for (std::size_t c = 0; c < s.causes.size(); ++c) {
    const int r = s.cause_cardinality(c);
    p.cause_priors.emplace_back(static_cast<std::size_t>(r), 1.0 / r);
  }
  for (std::size_t i = 0; i < s.mechanisms.size(); ++i) {
    const auto& m = s.mechanisms[i];
    const auto q = s.config_count(i);
    MechanismTable t;
    t.family = m.family;
    if (m.family == Family::Multinomial) {
      const int r = *m.domain.cardinality;
      t.rows.assign(q, std::vector<double>(static_cast<std::size_t>(r), 1.0 / r));
    } else {
      t.rates.assign(q, 1.0);
    }
    t.clamps.assign(q, std::nullopt);
    p.tables.push_back(std::move(t));
  }
  return p;
}

std::vector<double> point_mass(int cardinality, int state) {
  std::vector<double> row(static_cast<std::size_t>(cardinality), 0.0);
  row.at(static_cast<std::size_t>(state)) = 1.0;
  return row;
}

}  // namespace cim
