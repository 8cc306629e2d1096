#pragma once

// Effective model dimension: the generic rank of the Jacobian of the map from
// network parameters to the joint distribution of the observed variables.

#include <cstdint>
#include <iosfwd>
#include <span>
#include <string>
#include <vector>

#include "cim/model.hpp"

namespace cim {

/// Free coordinates in a fixed order: each cause prior's first r-1 entries,
/// then for every mechanism and configuration the first r_i-1 entries of each
/// unclamped multinomial row, or the Poisson rate. Clamps come from `p`.
std::vector<double> flatten_params(const ModelStructure& s, const ModelParams& p);

/// Inverse of flatten_params; clamped rows and the clamp masks are copied
/// from `templ`.
ModelParams unflatten_params(const ModelStructure& s, std::span<const double> flat, const ModelParams& templ);

struct DimensionOptions {
  int points = 10;
  std::uint64_t seed = 0;
  double fd_step = 1e-5;
  double rank_tol = 1e-7;
  int count_cells = 16;  // effect values kept for counting effects, plus a tail cell
};

/// Joint p(c, e) over every cause configuration (mixed-radix, first cause most
/// significant) times effect value, row-major, with the last cell dropped.
/// Throws std::domain_error outside the open parameter region.
std::vector<double> observable_map(const ModelStructure& s, const ModelParams& templ, std::span<const double> flat,
                                   int count_cells = DimensionOptions{}.count_cells);

struct RankResult {
  int rank = 0;
  std::vector<double> singular_values;  // descending
  /// sigma[rank-1] / sigma[rank]; infinity when nothing is cut.
  double gap = 0.0;
};

RankResult jacobian_rank(const ModelStructure& s, const ModelParams& templ, std::span<const double> theta0,
                         double fd_step = DimensionOptions{}.fd_step, double rank_tol = DimensionOptions{}.rank_tol,
                         int count_cells = DimensionOptions{}.count_cells);

/// Interior point with every probability >= 1e-3, rows drawn from Dirichlet(1).
std::vector<double> sample_interior(const ModelStructure& s, const ModelParams& templ, std::uint64_t seed);

struct DimensionReport {
  std::string model_id;
  int d = 0;
  int d_unadjusted = 0;
  std::vector<int> ranks;
  double sv_gap = 0.0;  // smallest gap among points attaining d
  int n_points = 0;
  std::uint64_t seed = 0;

  int min_rank() const;
  int max_rank() const;
};

DimensionReport regular_dimension(const ModelStructure& s, const ModelParams& templ, const DimensionOptions& opts = {});
DimensionReport regular_dimension(const ModelStructure& s, const DimensionOptions& opts = {});

inline constexpr const char* kDimensionCsvHeader = "model_id,d,d_unadjusted,n_points,min_rank,max_rank,sv_gap,seed";
void write_dimension_csv(std::ostream& out, std::span<const DimensionReport> reports);

}  // namespace cim
