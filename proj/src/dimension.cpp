#include "cim/dimension.hpp"

#include <Eigen/SVD>
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

constexpr double kInteriorFloor = 1e-3;

void take_row(std::span<const double> flat, std::size_t& pos, std::vector<double>& row) {
  double rest = 1.0;
  for (std::size_t k = 0; k + 1 < row.size(); ++k) {
    row[k] = flat[pos++];
    rest -= row[k];
  }
  row.back() = rest;
}

void require_interior(const std::vector<double>& row, const char* what) {
  for (double v : row)
    if (!(v > 0.0) || !(v < 1.0)) throw std::domain_error(std::string(what) + " outside the open simplex");
}

std::vector<double> interior_row(Rng& rng, std::size_t k) {
  while (true) {
    auto row = sample_dirichlet(rng, k);
    if (*std::min_element(row.begin(), row.end()) >= kInteriorFloor) return row;
  }
}

}  // namespace

std::vector<double> flatten_params(const ModelStructure& s, const ModelParams& p) {
  std::vector<double> flat;
  for (const auto& prior : p.cause_priors) flat.insert(flat.end(), prior.begin(), prior.end() - 1);
  for (std::size_t i = 0; i < s.mechanisms.size(); ++i) {
    const auto& t = p.tables[i];
    if (t.family == Family::Poisson) {
      flat.insert(flat.end(), t.rates.begin(), t.rates.end());
      continue;
    }
    for (std::size_t j = 0; j < t.rows.size(); ++j)
      if (!t.is_clamped(j)) flat.insert(flat.end(), t.rows[j].begin(), t.rows[j].end() - 1);
  }
  return flat;
}

ModelParams unflatten_params(const ModelStructure& s, std::span<const double> flat, const ModelParams& templ) {
  ModelParams p = templ;
  std::size_t pos = 0;
  const auto need = [&](std::size_t n) {
    if (pos + n > flat.size()) throw std::invalid_argument("flat parameter vector is too short");
  };
  for (auto& prior : p.cause_priors) {
    need(prior.size() - 1);
    take_row(flat, pos, prior);
  }
  for (std::size_t i = 0; i < s.mechanisms.size(); ++i) {
    auto& t = p.tables[i];
    if (t.family == Family::Poisson) {
      need(t.rates.size());
      for (auto& r : t.rates) r = flat[pos++];
      continue;
    }
    for (std::size_t j = 0; j < t.rows.size(); ++j) {
      if (t.is_clamped(j)) continue;
      need(t.rows[j].size() - 1);
      take_row(flat, pos, t.rows[j]);
    }
  }
  if (pos != flat.size()) throw std::invalid_argument("flat parameter vector is too long");
  return p;
}

std::vector<double> observable_map(const ModelStructure& s, const ModelParams& templ, std::span<const double> flat,
                                   int count_cells) {
  const ModelParams p = unflatten_params(s, flat, templ);
  for (const auto& prior : p.cause_priors) require_interior(prior, "cause prior");
  for (const auto& t : p.tables) {
    for (std::size_t j = 0; j < t.rows.size(); ++j)
      if (!t.is_clamped(j)) require_interior(t.rows[j], "mechanism row");
    for (double r : t.rates)
      if (!(r > 0.0)) throw std::domain_error("poisson rate must be positive");
  }

  const bool finite = s.effect.domain.is_finite();
  const int effect_cells = finite ? *s.effect.domain.cardinality : count_cells + 1;
  const std::size_t configs = s.cause_config_count();
  std::vector<double> out;
  out.reserve(configs * static_cast<std::size_t>(effect_cells));
  for (std::size_t cc = 0; cc < configs; ++cc) {
    const auto causes = cause_config_states(s, cc);
    double pc = 1.0;
    for (std::size_t k = 0; k < causes.size(); ++k) pc *= p.cause_priors[k][static_cast<std::size_t>(causes[k])];
    const auto dist = effect_distribution(s, p, causes);
    if (finite) {
      for (int e = 0; e < effect_cells; ++e) out.push_back(pc * dist.pmf(e));
    } else {
      double kept = 0.0;
      for (int e = 0; e < count_cells; ++e) {
        const double pe = dist.pmf(e);
        kept += pe;
        out.push_back(pc * pe);
      }
      out.push_back(pc * (1.0 - kept));
    }
  }
  out.pop_back();
  return out;
}

RankResult jacobian_rank(const ModelStructure& s, const ModelParams& templ, std::span<const double> theta0,
                         double fd_step, double rank_tol, int count_cells) {
  const std::vector<double> base(theta0.begin(), theta0.end());
  const auto y0 = observable_map(s, templ, base, count_cells);
  Eigen::MatrixXd jac(static_cast<Eigen::Index>(y0.size()), static_cast<Eigen::Index>(base.size()));
  for (std::size_t k = 0; k < base.size(); ++k) {
    auto plus = base, minus = base;
    plus[k] += fd_step;
    minus[k] -= fd_step;
    const auto yp = observable_map(s, templ, plus, count_cells);
    const auto ym = observable_map(s, templ, minus, count_cells);
    const double width = plus[k] - minus[k];
    for (std::size_t r = 0; r < y0.size(); ++r)
      jac(static_cast<Eigen::Index>(r), static_cast<Eigen::Index>(k)) = (yp[r] - ym[r]) / width;
  }

  Eigen::JacobiSVD<Eigen::MatrixXd> svd(jac);
  const auto& sv = svd.singularValues();
  RankResult result;
  result.singular_values.assign(sv.data(), sv.data() + sv.size());
  if (result.singular_values.empty() || !(result.singular_values.front() > 0.0))
    throw std::logic_error("jacobian is identically zero; the observable map does not depend on its parameters");
  const double cut = rank_tol * result.singular_values.front();
  for (double v : result.singular_values)
    if (v > cut) ++result.rank;
  const auto r = static_cast<std::size_t>(result.rank);
  result.gap = r < result.singular_values.size()
                   ? result.singular_values[r - 1] / std::max(result.singular_values[r], std::numeric_limits<double>::min())
                   : std::numeric_limits<double>::infinity();
  return result;
}

std::vector<double> sample_interior(const ModelStructure& s, const ModelParams& templ, std::uint64_t seed) {
  Rng rng(seed);
  ModelParams p = templ;
  for (auto& prior : p.cause_priors) prior = interior_row(rng, prior.size());
  std::uniform_real_distribution<double> rate(0.5, 3.0);
  for (auto& t : p.tables) {
    for (std::size_t j = 0; j < t.rows.size(); ++j)
      if (!t.is_clamped(j)) t.rows[j] = interior_row(rng, t.rows[j].size());
    for (auto& r : t.rates) r = rate(rng);
  }
  return flatten_params(s, p);
}

int DimensionReport::min_rank() const { return ranks.empty() ? 0 : *std::min_element(ranks.begin(), ranks.end()); }
int DimensionReport::max_rank() const { return ranks.empty() ? 0 : *std::max_element(ranks.begin(), ranks.end()); }

DimensionReport regular_dimension(const ModelStructure& s, const ModelParams& templ, const DimensionOptions& opts) {
  if (opts.points < 1) throw std::invalid_argument("regular_dimension needs at least one point");
  DimensionReport report;
  report.model_id = s.id;
  report.d_unadjusted = unadjusted_dimension(s, &templ);
  report.n_points = opts.points;
  report.seed = opts.seed;

  std::vector<double> gaps;
  for (int k = 0; k < opts.points; ++k) {
    const auto theta = sample_interior(s, templ, derive_seed(opts.seed, {static_cast<std::uint64_t>(k)}));
    const auto rank = jacobian_rank(s, templ, theta, opts.fd_step, opts.rank_tol, opts.count_cells);
    report.ranks.push_back(rank.rank);
    gaps.push_back(rank.gap);
  }
  report.d = report.max_rank();
  report.sv_gap = std::numeric_limits<double>::infinity();
  for (std::size_t k = 0; k < gaps.size(); ++k)
    if (report.ranks[k] == report.d) report.sv_gap = std::min(report.sv_gap, gaps[k]);
  return report;
}

DimensionReport regular_dimension(const ModelStructure& s, const DimensionOptions& opts) {
  return regular_dimension(s, uniform_params(s), opts);
}

void write_dimension_csv(std::ostream& out, std::span<const DimensionReport> reports) {
  out << "# cim-dimension/1\n" << kDimensionCsvHeader << '\n';
  for (const auto& r : reports) {
    out << r.model_id << ',' << r.d << ',' << r.d_unadjusted << ',' << r.n_points << ',' << r.min_rank() << ','
        << r.max_rank() << ',' << format_double(r.sv_gap) << ',' << r.seed << '\n';
  }
}

}  // namespace cim
