#include <random>
#include <sstream>

#include "cim/catalog.hpp"
#include "cim/dimension.hpp"
#include "cim/model.hpp"
#include "cim/model_io.hpp"
#include "doctest.h"
#include "fixtures.hpp"

using namespace cim;

namespace {

bool mentions(const std::vector<std::string>& errors, const std::string& text) {
  for (const auto& e : errors)
    if (e.find(text) != std::string::npos) return true;
  return false;
}

}  // namespace

TEST_CASE("validate accepts a well-formed three-cause binary max model") {
  const auto s = fixture::make({2, 2, 2}, 2, {{{0}}, {{1}}, {{2}}});
  CHECK(validate(s).empty());
  CHECK(validate(s, uniform_params(s)).empty());
}

TEST_CASE("validate reports a row that does not sum to one") {
  const auto s = fixture::make({2}, 2, {{{0}}});
  auto p = uniform_params(s);
  p.tables[0].rows[0] = {0.5, 0.6};
  const auto errors = validate(s, p);
  CHECK(errors.size() == 1);
  CHECK(mentions(errors, "row sum != 1"));
}

TEST_CASE("parity and n-of require a binary effect") {
  auto s = fixture::make({2}, 3, {{{0}}}, CombinationFunction::parity());
  auto errors = validate(s);
  CHECK(errors.size() == 1);
  CHECK(mentions(errors, "parity requires binary effect"));
  s.combo = CombinationFunction::n_of(1);
  CHECK(mentions(validate(s), "nof requires binary effect"));
}

TEST_CASE("structural violations") {
  auto s = fixture::make({2}, 2, {});
  CHECK(mentions(validate(s), "no mechanisms"));
  s = fixture::make({2}, 2, {{{3}}});
  CHECK_FALSE(validate(s).empty());
  // Max needs mechanism values inside the effect domain.
  s = fixture::make({2}, 2, {{{0}, 3}});
  CHECK_FALSE(validate(s).empty());
}

TEST_CASE("clamped rows must be exact point masses") {
  const auto s = fixture::make({2}, 2, {{{0}}});
  auto p = uniform_params(s);
  p.tables[0].clamps = {0, std::nullopt};
  CHECK_FALSE(validate(s, p).empty());
  p.tables[0].rows[0] = point_mass(2, 0);
  CHECK(validate(s, p).empty());
}

TEST_CASE("unclamped entries must be strictly positive unless relaxed") {
  const auto s = fixture::make({2}, 2, {{{0}}});
  auto p = uniform_params(s);
  p.tables[0].rows[1] = {1.0, 0.0};
  CHECK_FALSE(validate(s, p).empty());
  CHECK(validate(s, p, false).empty());
}

TEST_CASE("parent configuration index examples") {
  const auto s = fixture::make({2, 2, 2}, 2, {{{0, 1}}, {{0, 2}}, {{}}});
  const std::vector<int> a{0, 0, 1};
  CHECK(parent_config_index(s, 0, a) == 0);
  const std::vector<int> b{1, 0, 1};
  CHECK(parent_config_index(s, 1, b) == 3);
  CHECK(parent_config_index(s, 2, b) == 0);
  const std::vector<int> bad{2, 0, 0};
  CHECK_THROWS_AS(parent_config_index(s, 0, bad), std::out_of_range);
}

TEST_CASE("parent configuration index matches an independent enumeration") {
  // Enumerate all 8 assignments and compare with c1 * 2 + c3.
  const auto s = fixture::make({2, 2, 2}, 2, {{{0, 2}}});
  for (int c1 = 0; c1 < 2; ++c1)
    for (int c2 = 0; c2 < 2; ++c2)
      for (int c3 = 0; c3 < 2; ++c3) {
        const std::vector<int> a{c1, c2, c3};
        CHECK(parent_config_index(s, 0, a) == static_cast<std::size_t>(c1 * 2 + c3));
      }
}

TEST_CASE("property: parent configuration index is a bijection") {
  std::mt19937_64 rng(7);
  for (int trial = 0; trial < 50; ++trial) {
    std::vector<int> cards;
    const int nc = std::uniform_int_distribution<int>(1, 4)(rng);
    for (int c = 0; c < nc; ++c) cards.push_back(std::uniform_int_distribution<int>(2, 4)(rng));
    fixture::MechSpec spec;
    for (int c = 0; c < nc; ++c)
      if (rng() % 2) spec.parents.push_back(static_cast<std::size_t>(c));
    std::shuffle(spec.parents.begin(), spec.parents.end(), rng);
    const auto s = fixture::make(cards, 2, {spec});
    const auto q = s.config_count(0);
    if (q > 64) continue;
    const auto configs = enumerate_configs(s, 0);
    REQUIRE(configs.size() == q);
    for (std::size_t j = 0; j < q; ++j) {
      CHECK(config_parent_states(s, 0, j) == configs[j]);
      std::vector<int> causes(cards.size(), 0);
      for (std::size_t k = 0; k < spec.parents.size(); ++k) causes[spec.parents[k]] = configs[j][k];
      CHECK(parent_config_index(s, 0, causes) == j);
    }
  }
}

TEST_CASE("cause configuration index round-trips") {
  const auto s = fixture::make({2, 3, 2}, 2, {{{0}}});
  CHECK(s.cause_config_count() == 12);
  for (std::size_t k = 0; k < 12; ++k) CHECK(cause_config_index(s, cause_config_states(s, k)) == k);
  CHECK(cause_config_states(s, 5) == std::vector<int>{0, 2, 1});
}

TEST_CASE("unadjusted dimension of catalog structures") {
  CHECK(unadjusted_dimension(catalog_entry("F5").structure) == 11);
  CHECK(unadjusted_dimension(catalog_entry("F1").structure) == 9);
  CHECK(unadjusted_dimension(catalog_entry("F4").structure) == 15);
}

TEST_CASE("unadjusted dimension counts Poisson rates and skips clamped rows") {
  const auto p = fixture::make_poisson({2, 3}, {{0}, {1}, {}});
  CHECK(unadjusted_dimension(p) == 1 + 2 + 2 + 3 + 1);
  const auto s = fixture::make({2}, 3, {{{0}, 3}});
  auto params = uniform_params(s);
  CHECK(unadjusted_dimension(s, &params) == 1 + 4);
  params.tables[0].clamps = {0, std::nullopt};
  params.tables[0].rows[0] = point_mass(3, 0);
  CHECK(unadjusted_dimension(s, &params) == 1 + 2);
}

TEST_CASE("property: unadjusted dimension equals flattened parameter length") {
  std::mt19937_64 rng(11);
  for (int trial = 0; trial < 40; ++trial) {
    const auto s = fixture::random_max_structure(rng);
    auto p = fixture::random_params(s, rng);
    if (trial % 2) {
      auto& t = p.tables[0];
      t.clamps.assign(t.rows.size(), std::nullopt);
      t.clamps[0] = 0;
      t.rows[0] = point_mass(static_cast<int>(t.rows[0].size()), 0);
    }
    CHECK(unadjusted_dimension(s, &p) == static_cast<int>(flatten_params(s, p).size()));
  }
}

TEST_CASE("validate accepts every catalog model") {
  for (const auto& e : catalog()) {
    CHECK(validate(e.structure).empty());
    CHECK(validate(e.structure, e.reference).empty());
  }
}

TEST_CASE("model file round trip keeps structure, params and clamps") {
  const auto s = fixture::make({2, 3}, 3, {{{0, 1}, 3}, {{}, 2}}, CombinationFunction::max(), "demo");
  std::mt19937_64 rng(3);
  auto p = fixture::random_params(s, rng);
  p.tables[0].clamps.assign(p.tables[0].rows.size(), std::nullopt);
  p.tables[0].clamps[2] = 1;
  p.tables[0].rows[2] = point_mass(3, 1);
  const auto text = format_model(s, &p);
  CHECK(text.find("cim-model/1") != std::string::npos);
  const auto back = parse_model(text);
  CHECK(back.structure.id == "demo");
  CHECK(back.structure.mechanisms.size() == 2);
  CHECK(back.structure.mechanisms[0].parents == s.mechanisms[0].parents);
  REQUIRE(back.params);
  CHECK(back.params->cause_priors == p.cause_priors);
  CHECK(back.params->tables[0].rows == p.tables[0].rows);
  CHECK(back.params->tables[0].clamps == p.tables[0].clamps);
  CHECK(back.params->tables[1].rows == p.tables[1].rows);
}

TEST_CASE("model file round trip for Poisson, n-of and parity") {
  const auto pois = fixture::make_poisson({2}, {{0}, {}});
  auto p = uniform_params(pois);
  p.tables[0].rates = {0.25, 1.5};
  const auto back = parse_model(format_model(pois, &p));
  CHECK_FALSE(back.structure.effect.domain.is_finite());
  CHECK(back.structure.combo == CombinationFunction::sum());
  CHECK(back.params->tables[0].rates == p.tables[0].rates);

  const auto nof = fixture::make({2}, 2, {{{0}}, {{}}}, CombinationFunction::n_of(2));
  CHECK(parse_model(format_model(nof, nullptr)).structure.combo == CombinationFunction::n_of(2));
  const auto par = fixture::make({2}, 2, {{{0}}}, CombinationFunction::parity());
  CHECK(parse_model(format_model(par, nullptr)).structure.combo == CombinationFunction::parity());
}

TEST_CASE("model parser rejects unknown fields and bad references") {
  const std::string base = R"({"causes":[{"name":"A","cardinality":2}],"effect":{"name":"E","cardinality":2},
    "combo":"max","mechanisms":[{"parents":["A"]}])";
  CHECK_NOTHROW(parse_model(base + "}"));
  CHECK_THROWS_AS(parse_model(base + R"(,"extra":1})"), FormatError);
  const std::string bad_parent = R"({"causes":[{"name":"A","cardinality":2}],"effect":{"name":"E","cardinality":2},
    "combo":"max","mechanisms":[{"parents":["B"]}]})";
  CHECK_THROWS_AS(parse_model(bad_parent), FormatError);
  CHECK_THROWS_AS(parse_model("{"), FormatError);
}

TEST_CASE("dataset round trip and diagnostics") {
  const auto s = fixture::make({2, 2}, 2, {{{0}}, {{1}}});
  Dataset d;
  d.names = dataset_header(s);
  d.rows = {{{0, 1}, 1}, {{1, 1}, 0}};
  std::stringstream ss;
  write_dataset(ss, d);
  CHECK(ss.str().rfind("# cim-data/1\nC1,C2,E\n", 0) == 0);
  const auto back = read_dataset(ss, s);
  CHECK(back.rows == d.rows);

  std::stringstream bad("C1,C2,E\n0,1,1\n0,2,1\n");
  try {
    read_dataset(bad, s);
    FAIL("expected FormatError");
  } catch (const FormatError& e) {
    CHECK(std::string(e.what()).find("line 3") != std::string::npos);
  }
  std::stringstream missing("C1,C2,E\n0,,1\n");
  CHECK_THROWS_AS(read_dataset(missing, s), FormatError);
  std::stringstream wrong_header("C2,C1,E\n");
  CHECK_THROWS_AS(read_dataset(wrong_header, s), FormatError);
}

TEST_CASE("dataset with latent columns reads back") {
  const auto& e = catalog_entry("F1");
  const auto d = forward_sample(e.structure, e.reference, 20, 5, true);
  std::stringstream ss;
  write_dataset(ss, d);
  CHECK(ss.str().find("C1,C2,C3,E,X1,X2,X3\n") != std::string::npos);
  CHECK(read_dataset(ss, e.structure).rows == d.rows);
}

TEST_CASE("prior file overrides scalar defaults") {
  const auto s = fixture::make({2}, 2, {{{0}}});
  const auto prior = parse_prior(R"({"alpha": 2.5, "gamma": {"shape": 3, "rate": 0.5}})", s);
  CHECK(prior.cause_alpha[0] == std::vector<double>{2.5, 2.5});
  CHECK(prior.table_alpha[0][1] == std::vector<double>{2.5, 2.5});
  CHECK(prior.gamma[0].empty());
  const auto pois = fixture::make_poisson({2}, {{0}});
  const auto gp = parse_prior(R"({"gamma": {"shape": 3, "rate": 0.5}})", pois);
  CHECK(gp.gamma[0][1].shape == 3.0);
  CHECK(gp.gamma[0][1].rate == 0.5);
  CHECK_THROWS_AS(parse_prior(R"({"alpha": -1})", s), FormatError);
  CHECK_THROWS_AS(parse_prior(R"({"beta": 1})", s), FormatError);
}
