#pragma once

// Small model builders shared by the unit tests.

#include <random>
#include <string>
#include <vector>

#include "cim/model.hpp"
#include "oracles.hpp"

namespace fixture {

struct MechSpec {
  std::vector<std::size_t> parents;
  int card = 2;
};

inline cim::ModelStructure make(std::vector<int> cause_cards, int effect_card, std::vector<MechSpec> mechs,
                                cim::CombinationFunction combo = cim::CombinationFunction::max(),
                                std::string id = "M") {
  cim::ModelStructure s;
  s.id = std::move(id);
  for (std::size_t c = 0; c < cause_cards.size(); ++c)
    s.causes.push_back({"C" + std::to_string(c + 1), cim::Domain::finite(cause_cards[c])});
  s.effect = {"E", cim::Domain::finite(effect_card)};
  for (auto& m : mechs) s.mechanisms.push_back({m.parents, cim::Family::Multinomial, cim::Domain::finite(m.card)});
  s.combo = combo;
  return s;
}

/// Poisson NAI: counting effect, one Poisson mechanism per parent list.
inline cim::ModelStructure make_poisson(std::vector<int> cause_cards, std::vector<std::vector<std::size_t>> parents) {
  cim::ModelStructure s;
  s.id = "P";
  for (std::size_t c = 0; c < cause_cards.size(); ++c)
    s.causes.push_back({"C" + std::to_string(c + 1), cim::Domain::finite(cause_cards[c])});
  s.effect = {"E", cim::Domain::counting()};
  for (auto& pa : parents) s.mechanisms.push_back({pa, cim::Family::Poisson, cim::Domain::counting()});
  s.combo = cim::CombinationFunction::sum();
  return s;
}

/// Strictly positive random parameters; rates uniform on [lo, hi].
inline cim::ModelParams random_params(const cim::ModelStructure& s, std::mt19937_64& rng, double floor = 0.05,
                                      double lo = 0.2, double hi = 3.0) {
  auto p = cim::uniform_params(s);
  for (auto& prior : p.cause_priors) prior = oracle::random_row(rng, prior.size(), floor);
  std::uniform_real_distribution<double> rate(lo, hi);
  for (auto& t : p.tables) {
    for (auto& row : t.rows) row = oracle::random_row(rng, row.size(), floor);
    for (auto& r : t.rates) r = rate(rng);
  }
  return p;
}

/// A random Max model with m <= max_m mechanisms of cardinality <= max_r, all
/// not exceeding the effect cardinality.
inline cim::ModelStructure random_max_structure(std::mt19937_64& rng, int max_m = 4, int max_r = 4) {
  std::uniform_int_distribution<int> n_causes(1, 3), card(2, max_r), m_dist(1, max_m), coin(0, 1);
  const int nc = n_causes(rng);
  std::vector<int> cards;
  for (int c = 0; c < nc; ++c) cards.push_back(std::uniform_int_distribution<int>(2, 3)(rng));
  const int r_e = card(rng);
  std::vector<MechSpec> mechs;
  const int m = m_dist(rng);
  for (int i = 0; i < m; ++i) {
    MechSpec spec;
    for (int c = 0; c < nc; ++c)
      if (coin(rng)) spec.parents.push_back(static_cast<std::size_t>(c));
    spec.card = std::uniform_int_distribution<int>(2, r_e)(rng);
    mechs.push_back(spec);
  }
  return make(cards, r_e, mechs);
}

}  // namespace fixture
