#pragma once

// The F1-F5 simulation models and forward sampling.

#include <cstddef>
#include <cstdint>
#include <string>
#include <vector>

#include "cim/model.hpp"

namespace cim {

struct CatalogEntry {
  std::string id;
  ModelStructure structure;
  ModelParams reference;  // reference_params(structure, 0)
  int expected_d = 0;
  int expected_d_unadjusted = 0;
};

/// Three binary causes, a binary effect and Max combination throughout.
std::vector<CatalogEntry> catalog();

/// Looks up an entry by id, case-insensitively. Throws std::invalid_argument.
const CatalogEntry& catalog_entry(const std::string& id);

/// Seeded Dirichlet(1) rows clipped to [0.05, 0.95] and renormalized; Poisson
/// rates uniform on [0.5, 2]. Clamps from `clamps_from` are kept.
ModelParams reference_params(const ModelStructure& s, std::uint64_t seed, const ModelParams* clamps_from = nullptr);

/// Draws n cases from one sequential stream, so a k-prefix of an n-sample
/// equals the k-sample with the same seed.
Dataset forward_sample(const ModelStructure& s, const ModelParams& p, std::size_t n, std::uint64_t seed,
                       bool emit_latent = false);

}  // namespace cim
