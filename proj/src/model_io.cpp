#include "cim/model_io.hpp"

#include <algorithm>
#include <charconv>
#include <cmath>
#include <fstream>
#include <map>
#include <sstream>

#include "json.hpp"

namespace cim {

namespace {

using json = nlohmann::json;

[[noreturn]] void fail(const std::string& where, const std::string& what) {
  throw FormatError(where + ": " + what);
}

void reject_unknown(const json& obj, const std::string& where, std::initializer_list<const char*> allowed) {
  if (!obj.is_object()) fail(where, "expected an object");
  for (const auto& [key, _] : obj.items()) {
    if (std::none_of(allowed.begin(), allowed.end(), [&](const char* a) { return key == a; }))
      fail(where, "unknown field \"" + key + "\"");
  }
}

const json& require(const json& obj, const char* key, const std::string& where) {
  auto it = obj.find(key);
  if (it == obj.end()) fail(where, std::string("missing field \"") + key + "\"");
  return *it;
}

int as_int(const json& v, const std::string& where) {
  if (!v.is_number_integer()) fail(where, "expected an integer");
  return v.get<int>();
}

double as_number(const json& v, const std::string& where) {
  if (!v.is_number()) fail(where, "expected a number");
  return v.get<double>();
}

std::string as_string(const json& v, const std::string& where) {
  if (!v.is_string()) fail(where, "expected a string");
  return v.get<std::string>();
}

const json& as_array(const json& v, const std::string& where) {
  if (!v.is_array()) fail(where, "expected an array");
  return v;
}

std::vector<double> number_vector(const json& v, const std::string& where) {
  std::vector<double> out;
  std::size_t k = 0;
  for (const auto& x : as_array(v, where)) out.push_back(as_number(x, where + "[" + std::to_string(k++) + "]"));
  return out;
}

Domain parse_domain(const json& v, const std::string& where) {
  if (v.is_string()) {
    if (v.get<std::string>() != "count") fail(where, "cardinality must be an integer or \"count\"");
    return Domain::counting();
  }
  return Domain::finite(as_int(v, where));
}

CombinationFunction parse_combo(const json& v, const std::string& where) {
  if (v.is_string()) {
    const auto name = v.get<std::string>();
    if (name == "max") return CombinationFunction::max();
    if (name == "sum") return CombinationFunction::sum();
    if (name == "parity") return CombinationFunction::parity();
    fail(where, "unknown combination \"" + name + "\"");
  }
  reject_unknown(v, where, {"nof"});
  return CombinationFunction::n_of(as_int(require(v, "nof", where), where + ".nof"));
}

json combo_json(const CombinationFunction& c) {
  switch (c.kind) {
    case CombinationFunction::Kind::Max: return "max";
    case CombinationFunction::Kind::Sum: return "sum";
    case CombinationFunction::Kind::Parity: return "parity";
    case CombinationFunction::Kind::NOf: return json{{"nof", c.threshold}};
  }
  return nullptr;
}

json domain_json(const Domain& d) {
  if (d.is_finite()) return *d.cardinality;
  return "count";
}

ModelParams parse_params(const json& v, const ModelStructure& s) {
  const std::string where = "params";
  reject_unknown(v, where, {"cause_priors", "tables", "rates", "clamps"});
  ModelParams p = uniform_params(s);

  const auto& priors = as_array(require(v, "cause_priors", where), where + ".cause_priors");
  if (priors.size() != s.causes.size()) fail(where + ".cause_priors", "expected one vector per cause");
  for (std::size_t c = 0; c < s.causes.size(); ++c)
    p.cause_priors[c] = number_vector(priors[c], where + ".cause_priors[" + std::to_string(c) + "]");

  const auto per_mech = [&](const char* key) -> const json* {
    auto it = v.find(key);
    if (it == v.end()) return nullptr;
    if (!it->is_array() || it->size() != s.mechanisms.size())
      fail(where + "." + key, "expected one entry per mechanism");
    return &*it;
  };
  const json* tables = per_mech("tables");
  const json* rates = per_mech("rates");
  const json* clamps = per_mech("clamps");

  for (std::size_t i = 0; i < s.mechanisms.size(); ++i) {
    const std::string idx = "[" + std::to_string(i) + "]";
    auto& t = p.tables[i];
    if (s.mechanisms[i].family == Family::Multinomial) {
      if (!tables || (*tables)[i].is_null()) fail(where + ".tables" + idx, "multinomial mechanism needs a table");
      t.rows.clear();
      std::size_t j = 0;
      for (const auto& row : as_array((*tables)[i], where + ".tables" + idx))
        t.rows.push_back(number_vector(row, where + ".tables" + idx + "[" + std::to_string(j++) + "]"));
      if (rates && !(*rates)[i].is_null()) fail(where + ".rates" + idx, "multinomial mechanism takes no rates");
    } else {
      if (!rates || (*rates)[i].is_null()) fail(where + ".rates" + idx, "poisson mechanism needs rates");
      t.rates = number_vector((*rates)[i], where + ".rates" + idx);
      if (tables && !(*tables)[i].is_null()) fail(where + ".tables" + idx, "poisson mechanism takes no table");
    }
    if (clamps && !(*clamps)[i].is_null()) {
      t.clamps.clear();
      std::size_t j = 0;
      for (const auto& c : as_array((*clamps)[i], where + ".clamps" + idx)) {
        const std::string cw = where + ".clamps" + idx + "[" + std::to_string(j++) + "]";
        t.clamps.push_back(c.is_null() ? Clamp{} : Clamp{as_int(c, cw)});
      }
    }
  }
  return p;
}

}  // namespace

std::string read_text(const std::filesystem::path& path) {
  std::ifstream in(path);
  if (!in) throw FormatError(path.string() + ": cannot open file");
  std::stringstream ss;
  ss << in.rdbuf();
  return ss.str();
}

ModelFile parse_model(const std::string& json_text) {
  json doc;
  try {
    doc = json::parse(json_text);
  } catch (const json::parse_error& e) {
    throw FormatError(std::string("model: invalid JSON: ") + e.what());
  }
  reject_unknown(doc, "model", {"format", "id", "causes", "effect", "combo", "mechanisms", "params"});
  if (auto it = doc.find("format"); it != doc.end() && as_string(*it, "format") != kModelFormat)
    fail("format", "unsupported format \"" + it->get<std::string>() + "\"");

  ModelFile file;
  auto& s = file.structure;
  if (auto it = doc.find("id"); it != doc.end()) s.id = as_string(*it, "id");

  std::map<std::string, std::size_t> cause_index;
  std::size_t c = 0;
  for (const auto& cv : as_array(require(doc, "causes", "model"), "causes")) {
    const std::string where = "causes[" + std::to_string(c) + "]";
    reject_unknown(cv, where, {"name", "cardinality"});
    VariableSpec spec{as_string(require(cv, "name", where), where + ".name"),
                      Domain::finite(as_int(require(cv, "cardinality", where), where + ".cardinality"))};
    if (!cause_index.emplace(spec.name, c).second) fail(where + ".name", "duplicate cause name");
    s.causes.push_back(std::move(spec));
    ++c;
  }

  const auto& ev = require(doc, "effect", "model");
  reject_unknown(ev, "effect", {"name", "cardinality"});
  s.effect = {as_string(require(ev, "name", "effect"), "effect.name"),
              parse_domain(require(ev, "cardinality", "effect"), "effect.cardinality")};
  s.combo = parse_combo(require(doc, "combo", "model"), "combo");

  std::size_t i = 0;
  for (const auto& mv : as_array(require(doc, "mechanisms", "model"), "mechanisms")) {
    const std::string where = "mechanisms[" + std::to_string(i++) + "]";
    reject_unknown(mv, where, {"name", "parents", "family", "cardinality"});
    Mechanism m;
    for (const auto& pv : as_array(require(mv, "parents", where), where + ".parents")) {
      const auto name = as_string(pv, where + ".parents");
      auto it = cause_index.find(name);
      if (it == cause_index.end()) fail(where + ".parents", "unknown cause \"" + name + "\"");
      m.parents.push_back(it->second);
    }
    const auto family = mv.contains("family") ? as_string(mv["family"], where + ".family") : "multinomial";
    if (family == "multinomial") {
      m.family = Family::Multinomial;
      m.domain = Domain::finite(mv.contains("cardinality") ? as_int(mv["cardinality"], where + ".cardinality") : 2);
    } else if (family == "poisson") {
      if (mv.contains("cardinality")) fail(where + ".cardinality", "poisson mechanisms take no cardinality");
      m.family = Family::Poisson;
      m.domain = Domain::counting();
    } else {
      fail(where + ".family", "unknown family \"" + family + "\"");
    }
    s.mechanisms.push_back(std::move(m));
  }

  if (auto problems = validate(s); !problems.empty()) throw FormatError("model: " + problems.front());
  if (auto it = doc.find("params"); it != doc.end() && !it->is_null()) {
    file.params = parse_params(*it, s);
    if (auto problems = validate(s, *file.params, false); !problems.empty())
      throw FormatError("params: " + problems.front());
  }
  return file;
}

ModelFile read_model(const std::filesystem::path& path) {
  try {
    return parse_model(read_text(path));
  } catch (const FormatError& e) {
    throw FormatError(path.string() + ": " + e.what());
  }
}

std::string format_model(const ModelStructure& s, const ModelParams* params) {
  json doc = json::object();
  doc["format"] = kModelFormat;
  if (!s.id.empty()) doc["id"] = s.id;
  doc["causes"] = json::array();
  for (const auto& c : s.causes) doc["causes"].push_back({{"name", c.name}, {"cardinality", *c.domain.cardinality}});
  doc["effect"] = {{"name", s.effect.name}, {"cardinality", domain_json(s.effect.domain)}};
  doc["combo"] = combo_json(s.combo);
  doc["mechanisms"] = json::array();
  for (const auto& m : s.mechanisms) {
    json mj = json::object();
    mj["parents"] = json::array();
    for (std::size_t p : m.parents) mj["parents"].push_back(s.causes[p].name);
    mj["family"] = m.family == Family::Multinomial ? "multinomial" : "poisson";
    if (m.family == Family::Multinomial) mj["cardinality"] = *m.domain.cardinality;
    doc["mechanisms"].push_back(std::move(mj));
  }
  if (params) {
    json pj = json::object();
    pj["cause_priors"] = params->cause_priors;
    json tables = json::array(), rates = json::array(), clamps = json::array();
    bool any_clamp = false;
    for (const auto& t : params->tables) {
      tables.push_back(t.family == Family::Multinomial ? json(t.rows) : json(nullptr));
      rates.push_back(t.family == Family::Poisson ? json(t.rates) : json(nullptr));
      json cj = json::array();
      for (const auto& c : t.clamps) {
        cj.push_back(c ? json(*c) : json(nullptr));
        any_clamp = any_clamp || c.has_value();
      }
      clamps.push_back(std::move(cj));
    }
    pj["tables"] = std::move(tables);
    pj["rates"] = std::move(rates);
    if (any_clamp) pj["clamps"] = std::move(clamps);
    doc["params"] = std::move(pj);
  }
  return doc.dump(2) + "\n";
}

void write_model(const std::filesystem::path& path, const ModelStructure& s, const ModelParams* params) {
  std::ofstream out(path);
  if (!out) throw FormatError(path.string() + ": cannot open for writing");
  out << format_model(s, params);
}

std::vector<std::string> dataset_header(const ModelStructure& s, bool with_latent) {
  std::vector<std::string> names;
  for (const auto& c : s.causes) names.push_back(c.name);
  names.push_back(s.effect.name);
  if (with_latent)
    for (std::size_t i = 0; i < s.mechanisms.size(); ++i) names.push_back("X" + std::to_string(i + 1));
  return names;
}

void write_dataset(std::ostream& out, const Dataset& data) {
  out << "# " << kDataFormat << "\n";
  for (std::size_t k = 0; k < data.names.size(); ++k) out << (k ? "," : "") << data.names[k];
  const bool latent = !data.latent.empty();
  if (latent)
    for (std::size_t i = 0; i < data.latent.front().size(); ++i) out << ",X" << i + 1;
  out << "\n";
  for (std::size_t n = 0; n < data.rows.size(); ++n) {
    const auto& row = data.rows[n];
    for (std::size_t k = 0; k < row.causes.size(); ++k) out << row.causes[k] << ',';
    out << row.effect;
    if (latent)
      for (int x : data.latent[n]) out << ',' << x;
    out << '\n';
  }
}

void write_dataset(const std::filesystem::path& path, const Dataset& data) {
  std::ofstream out(path);
  if (!out) throw FormatError(path.string() + ": cannot open for writing");
  write_dataset(out, data);
}

Dataset read_dataset(std::istream& in, const ModelStructure& s) {
  Dataset data;
  std::string line;
  std::size_t line_no = 0;
  bool have_header = false;
  std::size_t columns = 0;
  const std::size_t n_causes = s.causes.size();

  while (std::getline(in, line)) {
    ++line_no;
    if (!line.empty() && line.back() == '\r') line.pop_back();
    if (line.empty() || line.front() == '#') continue;
    std::vector<std::string> fields;
    std::stringstream ss(line);
    std::string field;
    while (std::getline(ss, field, ',')) fields.push_back(field);
    if (!line.empty() && line.back() == ',') fields.emplace_back();
    const std::string where = "line " + std::to_string(line_no);

    if (!have_header) {
      const auto expected = dataset_header(s);
      if (fields.size() < expected.size() ||
          !std::equal(expected.begin(), expected.end(), fields.begin()))
        throw FormatError(where + ": header must start with the model's cause names then the effect name");
      if (fields.size() != expected.size() && fields != dataset_header(s, true))
        throw FormatError(where + ": unexpected extra columns in header");
      data.names = expected;
      columns = fields.size();
      have_header = true;
      continue;
    }
    if (fields.size() != columns)
      throw FormatError(where + ": expected " + std::to_string(columns) + " values, found " + std::to_string(fields.size()));
    Case c;
    c.causes.resize(n_causes);
    for (std::size_t k = 0; k < n_causes + 1; ++k) {
      const auto& f = fields[k];
      int value = 0;
      auto [ptr, ec] = std::from_chars(f.data(), f.data() + f.size(), value);
      if (f.empty()) throw FormatError(where + ": missing value in column " + data.names[k]);
      if (ec != std::errc() || ptr != f.data() + f.size())
        throw FormatError(where + ": column " + data.names[k] + " is not an integer");
      const Domain& dom = k < n_causes ? s.causes[k].domain : s.effect.domain;
      if (!dom.contains(value))
        throw FormatError(where + ": value " + f + " outside the domain of " + data.names[k]);
      (k < n_causes ? c.causes[k] : c.effect) = value;
    }
    data.rows.push_back(std::move(c));
  }
  if (!have_header) throw FormatError("dataset: missing header row");
  return data;
}

Dataset read_dataset(const std::filesystem::path& path, const ModelStructure& s) {
  std::ifstream in(path);
  if (!in) throw FormatError(path.string() + ": cannot open file");
  try {
    return read_dataset(in, s);
  } catch (const FormatError& e) {
    throw FormatError(path.string() + ": " + e.what());
  }
}

DirichletPrior parse_prior(const std::string& json_text, const ModelStructure& s) {
  json doc;
  try {
    doc = json::parse(json_text);
  } catch (const json::parse_error& e) {
    throw FormatError(std::string("prior: invalid JSON: ") + e.what());
  }
  reject_unknown(doc, "prior", {"format", "alpha", "gamma", "cause_alpha", "table_alpha"});
  if (auto it = doc.find("format"); it != doc.end() && as_string(*it, "format") != kPriorFormat)
    fail("format", "unsupported format");
  const double alpha = doc.contains("alpha") ? as_number(doc["alpha"], "alpha") : 1.0;
  DirichletPrior::GammaHyper gamma;
  if (auto it = doc.find("gamma"); it != doc.end()) {
    reject_unknown(*it, "gamma", {"shape", "rate"});
    if (it->contains("shape")) gamma.shape = as_number((*it)["shape"], "gamma.shape");
    if (it->contains("rate")) gamma.rate = as_number((*it)["rate"], "gamma.rate");
  }
  auto prior = DirichletPrior::uniform(s, alpha, gamma);
  if (auto it = doc.find("cause_alpha"); it != doc.end()) {
    if (!it->is_array() || it->size() != s.causes.size()) fail("cause_alpha", "expected one vector per cause");
    for (std::size_t c = 0; c < s.causes.size(); ++c) {
      auto v = number_vector((*it)[c], "cause_alpha[" + std::to_string(c) + "]");
      if (v.size() != prior.cause_alpha[c].size()) fail("cause_alpha[" + std::to_string(c) + "]", "length != cardinality");
      prior.cause_alpha[c] = std::move(v);
    }
  }
  if (auto it = doc.find("table_alpha"); it != doc.end()) {
    if (!it->is_array() || it->size() != s.mechanisms.size()) fail("table_alpha", "expected one entry per mechanism");
    for (std::size_t i = 0; i < s.mechanisms.size(); ++i) {
      if ((*it)[i].is_null()) continue;
      const std::string where = "table_alpha[" + std::to_string(i) + "]";
      const auto& rows = as_array((*it)[i], where);
      if (rows.size() != prior.table_alpha[i].size()) fail(where, "expected q_i rows");
      for (std::size_t j = 0; j < rows.size(); ++j) {
        auto v = number_vector(rows[j], where + "[" + std::to_string(j) + "]");
        if (v.size() != prior.table_alpha[i][j].size()) fail(where, "row length != mechanism cardinality");
        prior.table_alpha[i][j] = std::move(v);
      }
    }
  }
  const auto positive = [](double v) { return v > 0.0 && std::isfinite(v); };
  bool ok = positive(gamma.shape) && positive(gamma.rate);
  for (const auto& v : prior.cause_alpha) ok = ok && std::all_of(v.begin(), v.end(), positive);
  for (const auto& t : prior.table_alpha)
    for (const auto& v : t) ok = ok && std::all_of(v.begin(), v.end(), positive);
  if (!ok) fail("prior", "all hyperparameters must be strictly positive");
  return prior;
}

DirichletPrior read_prior(const std::filesystem::path& path, const ModelStructure& s) {
  return parse_prior(read_text(path), s);
}

}  // namespace cim
