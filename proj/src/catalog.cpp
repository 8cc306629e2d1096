#include "cim/catalog.hpp"

#include <algorithm>
#include <cctype>
#include <random>
#include <stdexcept>

#include "cim/inference.hpp"
#include "cim/random.hpp"

namespace cim {

namespace {

ModelStructure three_cause_max(std::string id, std::vector<std::vector<std::size_t>> parent_sets) {
  ModelStructure s;
  s.id = std::move(id);
  for (const char* name : {"C1", "C2", "C3"}) s.causes.push_back({name, Domain::finite(2)});
  s.effect = {"E", Domain::finite(2)};
  for (auto& parents : parent_sets) s.mechanisms.push_back({std::move(parents), Family::Multinomial, Domain::finite(2)});
  s.combo = CombinationFunction::max();
  return s;
}

std::vector<double> clipped_row(Rng& rng, std::size_t k) {
  constexpr double lo = 0.05, hi = 0.95;
  auto row = sample_dirichlet(rng, k);
  if (k < 2) return row;
  // Repeated clip-and-renormalize settles inside the band within a few rounds.
  for (int round = 0; round < 50; ++round) {
    for (auto& v : row) v = std::clamp(v, lo, hi);
    double total = 0.0;
    for (double v : row) total += v;
    for (auto& v : row) v /= total;
    if (std::all_of(row.begin(), row.end(), [](double v) { return v >= lo - 1e-12 && v <= hi + 1e-12; })) break;
  }
  return row;
}

int sample_state(Rng& rng, const std::vector<double>& row) {
  const double u = std::uniform_real_distribution<double>(0.0, 1.0)(rng);
  double acc = 0.0;
  for (std::size_t k = 0; k < row.size(); ++k) {
    acc += row[k];
    if (u < acc) return static_cast<int>(k);
  }
  // Round-off: fall back to the last state with positive mass.
  for (std::size_t k = row.size(); k-- > 0;)
    if (row[k] > 0.0) return static_cast<int>(k);
  return 0;
}

}  // namespace

std::vector<CatalogEntry> catalog() {
  struct Spec {
    const char* id;
    std::vector<std::vector<std::size_t>> parents;
    int d, d_unadjusted;
  };
  const std::vector<Spec> specs = {
      {"F1", {{0}, {1}, {2}}, 7, 9},
      {"F2", {{0, 1}, {0}}, 7, 9},
      {"F3", {{0, 1}, {0, 2}}, 9, 11},
      {"F4", {{0, 1}, {0, 2}, {1, 2}}, 10, 15},
      {"F5", {{0, 1, 2}}, 11, 11},
  };
  std::vector<CatalogEntry> out;
  for (const auto& spec : specs) {
    CatalogEntry e;
    e.id = spec.id;
    e.structure = three_cause_max(spec.id, spec.parents);
    e.reference = reference_params(e.structure, 0);
    e.expected_d = spec.d;
    e.expected_d_unadjusted = spec.d_unadjusted;
    out.push_back(std::move(e));
  }
  return out;
}

const CatalogEntry& catalog_entry(const std::string& id) {
  static const std::vector<CatalogEntry> entries = catalog();
  std::string upper = id;
  for (auto& ch : upper) ch = static_cast<char>(std::toupper(static_cast<unsigned char>(ch)));
  for (const auto& e : entries)
    if (e.id == upper) return e;
  throw std::invalid_argument("unknown catalog model \"" + id + "\" (expected F1..F5)");
}

ModelParams reference_params(const ModelStructure& s, std::uint64_t seed, const ModelParams* clamps_from) {
  Rng rng(seed);
  ModelParams p = uniform_params(s);
  for (std::size_t c = 0; c < s.causes.size(); ++c) p.cause_priors[c] = clipped_row(rng, p.cause_priors[c].size());
  std::uniform_real_distribution<double> rate(0.5, 2.0);
  for (std::size_t i = 0; i < s.mechanisms.size(); ++i) {
    auto& t = p.tables[i];
    if (t.family == Family::Poisson) {
      for (auto& r : t.rates) r = rate(rng);
      continue;
    }
    if (clamps_from) t.clamps = clamps_from->tables[i].clamps;
    for (std::size_t j = 0; j < t.rows.size(); ++j) {
      // Draw even for clamped rows so clamping does not shift later rows.
      auto row = clipped_row(rng, t.rows[j].size());
      t.rows[j] = t.is_clamped(j) ? point_mass(static_cast<int>(row.size()), *t.clamps[j]) : std::move(row);
    }
  }
  return p;
}

Dataset forward_sample(const ModelStructure& s, const ModelParams& p, std::size_t n, std::uint64_t seed,
                       bool emit_latent) {
  Dataset data;
  for (const auto& c : s.causes) data.names.push_back(c.name);
  data.names.push_back(s.effect.name);
  data.rows.reserve(n);

  Rng rng(seed);
  std::vector<int> latent(s.mechanisms.size());
  for (std::size_t r = 0; r < n; ++r) {
    Case row;
    row.causes.resize(s.causes.size());
    for (std::size_t c = 0; c < s.causes.size(); ++c) row.causes[c] = sample_state(rng, p.cause_priors[c]);
    for (std::size_t i = 0; i < s.mechanisms.size(); ++i) {
      const auto& t = p.tables[i];
      const std::size_t j = parent_config_index(s, i, row.causes);
      if (t.family == Family::Poisson) {
        latent[i] = std::poisson_distribution<int>(t.rates[j])(rng);
      } else {
        latent[i] = sample_state(rng, t.rows[j]);
      }
    }
    row.effect = eval_combination(s.combo, latent);
    data.rows.push_back(std::move(row));
    if (emit_latent) data.latent.push_back(latent);
  }
  return data;
}

}  // namespace cim
