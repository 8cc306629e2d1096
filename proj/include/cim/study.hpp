#pragma once

// Simulation study: sample from each generating catalog model, score every
// candidate on nested initial segments, and tabulate model posteriors.
//
// Config file (JSON, format "cim-study/1"), every field optional:
//
//   {
//     "format": "cim-study/1",
//     "generating": ["F1", ...],           default F1..F5
//     "candidates": ["F1", ...],           default F1..F5
//     "segments": [100, 200, 400, 800, 1600],
//     "total_n": 6400,
//     "seed": 0,
//     "criterion": "cs" | "cs-raw" | "bic",
//     "alpha": 1.0,
//     "em": {"mode": "map", "tol": 1e-6, "max_iter": 5000, "restarts": 5},
//     "dimension": {"points": 10, "seed": 0, "fd_step": 1e-5, "rank_tol": 1e-7},
//     "jobs": 0,                           0 = hardware concurrency
//     "gnuplot": false
//   }

#include <cstddef>
#include <cstdint>
#include <filesystem>
#include <iosfwd>
#include <map>
#include <string>
#include <vector>

#include "cim/dimension.hpp"
#include "cim/em.hpp"
#include "cim/scoring.hpp"

namespace cim {

inline constexpr const char* kStudyFormat = "cim-study/1";

struct StudyConfig {
  std::vector<std::string> generating = {"F1", "F2", "F3", "F4", "F5"};
  std::vector<std::string> candidates = {"F1", "F2", "F3", "F4", "F5"};
  std::vector<std::size_t> segments = {100, 200, 400, 800, 1600};
  std::size_t total_n = 6400;
  std::uint64_t seed = 0;
  Criterion criterion = Criterion::CsAdjusted;
  double alpha = 1.0;
  EmOptions em;  // seed and init are ignored; cells derive their own seeds
  DimensionOptions dimension;
  int jobs = 0;
  bool gnuplot = false;
};

/// Empty iff the config is usable.
std::vector<std::string> validate(const StudyConfig& config);

StudyConfig parse_study_config(const std::string& json_text);
StudyConfig read_study_config(const std::filesystem::path& path);

/// One (generating, N, candidate) cell. Failed cells keep NaN scores.
struct StudyCell {
  std::string generating;
  std::size_t n = 0;
  std::string candidate;
  double log_score = 0.0;
  double posterior = 0.0;
  CsComponents parts;
  bool ok = true;
  std::string error;
};

struct StudyResult {
  StudyConfig config;
  std::map<std::string, DimensionReport> dimensions;  // by candidate id
  std::vector<StudyCell> cells;                       // generating, then N, then candidate order

  const StudyCell& cell(const std::string& generating, std::size_t n, const std::string& candidate) const;
  /// Posteriors of the candidates at (generating, n), in candidate order.
  std::vector<double> posteriors(const std::string& generating, std::size_t n) const;
};

/// Seeds: the generating parameters and its 'total_n' cases come from streams
/// keyed by the model id; each cell's EM seed is keyed by (generating, N,
/// candidate), so results do not depend on scheduling or list order.
StudyResult run_study(const StudyConfig& config);

/// Recomputes scores and posteriors from the stored components, using the
/// unadjusted dimension in place of d when `use_unadjusted` is set.
StudyResult rescore(const StudyResult& result, Criterion criterion, bool use_unadjusted);

/// Fills every cell's posterior from its log score, per (generating, N) group.
/// Failed cells get NaN; if every cell of a group failed, the group stays NaN.
void normalize_posteriors(StudyResult& result);

inline constexpr const char* kStudyScoresHeader =
    "generating,N,candidate,criterion,log_score,posterior,d,d_unadjusted,log_marginal_imaginary,loglik_imaginary,"
    "loglik_observed,status";

void write_study_scores(std::ostream& out, const StudyResult& result);
void write_study_posteriors(std::ostream& out, const StudyResult& result);
void write_study_report(std::ostream& out, const StudyResult& result);
void write_study_gnuplot(std::ostream& out, const StudyResult& result);

/// Writes study_scores.csv, study_posteriors.csv, report.txt and, when
/// requested, study_posteriors.dat into `dir`.
void write_study_outputs(const std::filesystem::path& dir, const StudyResult& result);

/// Parses study_scores.csv back into cells (dimensions and config are not
/// stored there). Throws FormatError.
std::vector<StudyCell> read_study_scores(std::istream& in);

}  // namespace cim
