#include <cmath>
#include <filesystem>
#include <fstream>
#include <limits>
#include <sstream>

#include "cim/model_io.hpp"
#include "cim/study.hpp"
#include "doctest.h"

using namespace cim;
using doctest::Approx;

namespace {

StudyConfig small_config() {
  StudyConfig c;
  c.generating = {"F1", "F5"};
  c.candidates = {"F1", "F3", "F5"};
  c.segments = {50, 100};
  c.total_n = 100;
  c.em.restarts = 2;
  c.dimension.points = 3;
  c.jobs = 1;
  return c;
}

std::string scores_csv(const StudyResult& r) {
  std::ostringstream out;
  write_study_scores(out, r);
  return out.str();
}

}  // namespace

TEST_CASE("config parsing") {
  const auto c = parse_study_config(R"({"format": "cim-study/1", "generating": ["f2"], "segments": [10, 20],
      "total_n": 40, "seed": 9, "criterion": "bic", "alpha": 2.5,
      "em": {"mode": "ml", "tol": 1e-5, "max_iter": 100, "restarts": 1},
      "dimension": {"points": 4, "seed": 3, "fd_step": 1e-4, "rank_tol": 1e-6}, "jobs": 2, "gnuplot": true})");
  CHECK(c.generating == std::vector<std::string>{"f2"});
  CHECK(c.candidates.size() == 5);
  CHECK(c.segments == std::vector<std::size_t>{10, 20});
  CHECK(c.total_n == 40);
  CHECK(c.seed == 9);
  CHECK(c.criterion == Criterion::Bic);
  CHECK(c.alpha == 2.5);
  CHECK(c.em.mode == FitMode::ML);
  CHECK(c.em.max_iter == 100);
  CHECK(c.em.restarts == 1);
  CHECK(c.dimension.points == 4);
  CHECK(c.dimension.fd_step == 1e-4);
  CHECK(c.jobs == 2);
  CHECK(c.gnuplot);
  CHECK(validate(c).empty());

  const auto d = parse_study_config("{}");
  CHECK(d.total_n == 6400);
  CHECK(d.segments.back() == 1600);
}

TEST_CASE("config rejection") {
  CHECK_THROWS_AS(parse_study_config(R"({"format": "cim-study/2"})"), FormatError);
  CHECK_THROWS_AS(parse_study_config(R"({"segmnets": [1]})"), FormatError);
  CHECK_THROWS_AS(parse_study_config(R"({"em": {"restart": 2}})"), FormatError);
  CHECK_THROWS_AS(parse_study_config(R"({"criterion": "aic"})"), FormatError);
  CHECK_THROWS_AS(parse_study_config("[1, 2"), FormatError);
  CHECK_THROWS_AS(parse_study_config(R"({"segments": [200, 100]})"), FormatError);
  CHECK_THROWS_AS(parse_study_config(R"({"segments": [100], "total_n": 50})"), FormatError);

  StudyConfig c;
  c.candidates = {"F1", "F9"};
  CHECK(!validate(c).empty());
  c.candidates = {"F1", "f1"};
  CHECK(!validate(c).empty());
  c = StudyConfig{};
  c.segments = {};
  CHECK(!validate(c).empty());
  CHECK_THROWS(run_study(c));
}

TEST_CASE("small study: posteriors, dimensions, layout") {
  const auto r = run_study(small_config());
  CHECK(r.cells.size() == 2 * 2 * 3);
  CHECK(r.dimensions.at("F1").d == 7);
  CHECK(r.dimensions.at("F3").d == 9);
  CHECK(r.dimensions.at("F5").d == 11);
  for (const auto& g : {"F1", "F5"})
    for (std::size_t n : {50u, 100u}) {
      const auto p = r.posteriors(g, n);
      REQUIRE(p.size() == 3);
      double total = 0.0;
      for (double v : p) {
        CHECK(v >= 0.0);
        total += v;
      }
      CHECK(std::abs(total - 1.0) <= 1e-12);
    }
  CHECK(r.cells[0].generating == "F1");
  CHECK(r.cells[0].n == 50);
  CHECK(r.cells[0].candidate == "F1");
  CHECK(r.cell("F5", 100, "F3").parts.n == 100);
}

TEST_CASE("a single candidate gets posterior one") {
  auto c = small_config();
  c.generating = {"F2"};
  c.candidates = {"F4"};
  const auto r = run_study(c);
  for (const auto& cell : r.cells) CHECK(cell.posterior == 1.0);
}

TEST_CASE("results do not depend on the number of workers") {
  auto c = small_config();
  const auto one = scores_csv(run_study(c));
  c.jobs = 4;
  CHECK(scores_csv(run_study(c)) == one);
  c.candidates = {"F5", "F1", "F3"};
  const auto reordered = run_study(c);
  const auto base = run_study(small_config());
  CHECK(reordered.cell("F1", 100, "F3").log_score == base.cell("F1", 100, "F3").log_score);
}

TEST_CASE("scores CSV round trip") {
  const auto r = run_study(small_config());
  const auto text = scores_csv(r);
  CHECK(text.rfind(std::string("# cim-study/1\n") + kStudyScoresHeader + "\n", 0) == 0);
  std::istringstream in(text);
  const auto back = read_study_scores(in);
  REQUIRE(back.size() == r.cells.size());
  for (std::size_t k = 0; k < back.size(); ++k) {
    CHECK(back[k].generating == r.cells[k].generating);
    CHECK(back[k].n == r.cells[k].n);
    CHECK(back[k].candidate == r.cells[k].candidate);
    CHECK(back[k].log_score == Approx(r.cells[k].log_score).epsilon(1e-15));
    CHECK(back[k].posterior == Approx(r.cells[k].posterior).epsilon(1e-15).scale(1e-300));
    CHECK(back[k].ok);
  }
  std::istringstream bad("generating,N\nF1,1\n");
  CHECK_THROWS_AS(read_study_scores(bad), FormatError);
}

TEST_CASE("failed cells render as NA and are excluded from posteriors") {
  auto r = run_study(small_config());
  auto& cell = r.cells[1];
  cell.ok = false;
  cell.error = "synthetic failure";
  cell.log_score = std::numeric_limits<double>::quiet_NaN();
  normalize_posteriors(r);
  CHECK(std::isnan(r.cells[1].posterior));
  CHECK(r.cells[0].posterior + r.cells[2].posterior == Approx(1.0).epsilon(1e-12));

  std::ostringstream report;
  write_study_report(report, r);
  CHECK(report.str().find("NA") != std::string::npos);
  CHECK(report.str().find("synthetic failure") != std::string::npos);
  CHECK(scores_csv(r).find("error: synthetic failure") != std::string::npos);
}

TEST_CASE("rescoring from stored components") {
  const auto r = run_study(small_config());
  const auto bic = rescore(r, Criterion::Bic, false);
  const auto& cell = bic.cell("F1", 100, "F5");
  CHECK(cell.log_score == Approx(bic_score(cell.parts.loglik_observed, 11, 100)).epsilon(1e-14));
  const auto same = rescore(r, Criterion::CsAdjusted, false);
  for (std::size_t k = 0; k < r.cells.size(); ++k)
    CHECK(same.cells[k].log_score == Approx(r.cells[k].log_score).epsilon(1e-14));
  const auto naive = rescore(r, Criterion::CsAdjusted, true);
  const auto& f3 = naive.cell("F5", 50, "F3");
  CHECK(f3.log_score == Approx(cs_adjusted(f3.parts, 11, 11)).epsilon(1e-14));
}

TEST_CASE("study outputs on disk") {
  auto c = small_config();
  c.gnuplot = true;
  const auto r = run_study(c);
  const auto dir = std::filesystem::temp_directory_path() / "cim_test_study_outputs";
  std::filesystem::remove_all(dir);
  write_study_outputs(dir, r);
  for (const char* name : {"study_scores.csv", "study_posteriors.csv", "report.txt", "study_posteriors.dat"})
    CHECK(std::filesystem::exists(dir / name));
  std::ifstream report(dir / "report.txt");
  std::stringstream text;
  text << report.rdbuf();
  CHECK(text.str().find("Generating model F5") != std::string::npos);
  std::filesystem::remove_all(dir);
}
