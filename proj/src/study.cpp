#include "cim/study.hpp"

#include <algorithm>
#include <atomic>
#include <cmath>
#include <fstream>
#include <iomanip>
#include <limits>
#include <ostream>
#include <sstream>
#include <stdexcept>
#include <thread>

#include "cim/catalog.hpp"
#include "cim/format.hpp"
#include "cim/model_io.hpp"
#include "cim/random.hpp"
#include "json.hpp"

namespace cim {

namespace {

using nlohmann::json;

constexpr double kNaN = std::numeric_limits<double>::quiet_NaN();

void reject_unknown(const json& obj, std::initializer_list<const char*> known, const std::string& where) {
  for (const auto& [key, value] : obj.items()) {
    if (std::none_of(known.begin(), known.end(), [&](const char* k) { return key == k; }))
      throw FormatError(where + ": unknown field \"" + key + "\"");
  }
}

template <class T>
T get_field(const json& obj, const char* key, const std::string& where) {
  try {
    return obj.at(key).get<T>();
  } catch (const json::exception& e) {
    throw FormatError(where + "." + key + ": " + e.what());
  }
}

std::string sanitize(std::string text) {
  for (auto& ch : text)
    if (ch == ',' || ch == '\n' || ch == '\r') ch = ';';
  return text;
}

double parse_number(const std::string& field, std::size_t line) {
  if (field == "NA") return kNaN;
  try {
    std::size_t used = 0;
    const double v = std::stod(field, &used);
    if (used != field.size()) throw std::invalid_argument(field);
    return v;
  } catch (const std::exception&) {
    throw FormatError("line " + std::to_string(line) + ": bad number \"" + field + "\"");
  }
}

std::vector<std::string> split_csv(const std::string& line) {
  std::vector<std::string> out;
  std::stringstream ss(line);
  std::string field;
  while (std::getline(ss, field, ',')) out.push_back(field);
  if (!line.empty() && line.back() == ',') out.emplace_back();
  return out;
}

std::string posterior_text(double p) {
  if (std::isnan(p)) return "NA";
  std::ostringstream os;
  os << std::fixed << std::setprecision(3) << p;
  return os.str();
}

}  // namespace

std::vector<std::string> validate(const StudyConfig& c) {
  std::vector<std::string> errors;
  const auto check_ids = [&](const std::vector<std::string>& ids, const char* what) {
    if (ids.empty()) errors.push_back(std::string(what) + " list is empty");
    std::vector<std::string> seen;
    for (const auto& id : ids) {
      try {
        const auto& canonical = catalog_entry(id).id;
        if (std::find(seen.begin(), seen.end(), canonical) != seen.end())
          errors.push_back(std::string(what) + ": duplicate model " + canonical);
        seen.push_back(canonical);
      } catch (const std::invalid_argument& e) {
        errors.push_back(std::string(what) + ": " + e.what());
      }
    }
  };
  check_ids(c.generating, "generating");
  check_ids(c.candidates, "candidates");
  if (c.segments.empty()) errors.push_back("segments list is empty");
  for (std::size_t k = 0; k < c.segments.size(); ++k) {
    if (c.segments[k] < 1) errors.push_back("segment sizes must be >= 1");
    if (k > 0 && c.segments[k] < c.segments[k - 1]) errors.push_back("segment sizes must be non-decreasing");
    if (c.segments[k] > c.total_n) errors.push_back("segment size exceeds total_n");
  }
  if (!(c.em.tol > 0.0)) errors.push_back("em.tol must be positive");
  if (c.em.max_iter < 1) errors.push_back("em.max_iter must be >= 1");
  if (c.em.restarts < 1) errors.push_back("em.restarts must be >= 1");
  if (!(c.alpha > 0.0)) errors.push_back("alpha must be positive");
  if (c.dimension.points < 1) errors.push_back("dimension.points must be >= 1");
  if (c.jobs < 0) errors.push_back("jobs must be >= 0");
  return errors;
}

StudyConfig parse_study_config(const std::string& json_text) {
  json root;
  try {
    root = json::parse(json_text);
  } catch (const json::parse_error& e) {
    throw FormatError(std::string("study config: ") + e.what());
  }
  if (!root.is_object()) throw FormatError("study config: top level must be an object");
  reject_unknown(root,
                 {"format", "generating", "candidates", "segments", "total_n", "seed", "criterion", "alpha", "em",
                  "dimension", "jobs", "gnuplot"},
                 "study config");
  StudyConfig c;
  const std::string where = "study config";
  if (root.contains("format") && get_field<std::string>(root, "format", where) != kStudyFormat)
    throw FormatError(where + ".format: expected \"" + std::string(kStudyFormat) + "\"");
  if (root.contains("generating")) c.generating = get_field<std::vector<std::string>>(root, "generating", where);
  if (root.contains("candidates")) c.candidates = get_field<std::vector<std::string>>(root, "candidates", where);
  if (root.contains("segments")) c.segments = get_field<std::vector<std::size_t>>(root, "segments", where);
  if (root.contains("total_n")) c.total_n = get_field<std::size_t>(root, "total_n", where);
  if (root.contains("seed")) c.seed = get_field<std::uint64_t>(root, "seed", where);
  if (root.contains("alpha")) c.alpha = get_field<double>(root, "alpha", where);
  if (root.contains("jobs")) c.jobs = get_field<int>(root, "jobs", where);
  if (root.contains("gnuplot")) c.gnuplot = get_field<bool>(root, "gnuplot", where);
  try {
    if (root.contains("criterion")) c.criterion = parse_criterion(get_field<std::string>(root, "criterion", where));
  } catch (const std::invalid_argument& e) {
    throw FormatError(where + ".criterion: " + e.what());
  }
  if (root.contains("em")) {
    const auto& em = root.at("em");
    const std::string w = where + ".em";
    if (!em.is_object()) throw FormatError(w + ": must be an object");
    reject_unknown(em, {"mode", "tol", "max_iter", "restarts"}, w);
    try {
      if (em.contains("mode")) c.em.mode = parse_fit_mode(get_field<std::string>(em, "mode", w));
    } catch (const std::invalid_argument& e) {
      throw FormatError(w + ".mode: " + e.what());
    }
    if (em.contains("tol")) c.em.tol = get_field<double>(em, "tol", w);
    if (em.contains("max_iter")) c.em.max_iter = get_field<int>(em, "max_iter", w);
    if (em.contains("restarts")) c.em.restarts = get_field<int>(em, "restarts", w);
  }
  if (root.contains("dimension")) {
    const auto& dim = root.at("dimension");
    const std::string w = where + ".dimension";
    if (!dim.is_object()) throw FormatError(w + ": must be an object");
    reject_unknown(dim, {"points", "seed", "fd_step", "rank_tol"}, w);
    if (dim.contains("points")) c.dimension.points = get_field<int>(dim, "points", w);
    if (dim.contains("seed")) c.dimension.seed = get_field<std::uint64_t>(dim, "seed", w);
    if (dim.contains("fd_step")) c.dimension.fd_step = get_field<double>(dim, "fd_step", w);
    if (dim.contains("rank_tol")) c.dimension.rank_tol = get_field<double>(dim, "rank_tol", w);
  }
  const auto errors = validate(c);
  if (!errors.empty()) throw FormatError(where + ": " + errors.front());
  return c;
}

StudyConfig read_study_config(const std::filesystem::path& path) {
  try {
    return parse_study_config(read_text(path));
  } catch (const FormatError& e) {
    throw FormatError(path.string() + ": " + e.what());
  }
}

const StudyCell& StudyResult::cell(const std::string& generating, std::size_t n, const std::string& candidate) const {
  for (const auto& c : cells)
    if (c.generating == generating && c.n == n && c.candidate == candidate) return c;
  throw std::out_of_range("no study cell " + generating + "/" + std::to_string(n) + "/" + candidate);
}

std::vector<double> StudyResult::posteriors(const std::string& generating, std::size_t n) const {
  std::vector<double> out;
  for (const auto& cand : config.candidates) out.push_back(cell(generating, n, cand).posterior);
  return out;
}

void normalize_posteriors(StudyResult& result) {
  for (std::size_t start = 0; start < result.cells.size();) {
    std::size_t end = start;
    while (end < result.cells.size() && result.cells[end].generating == result.cells[start].generating &&
           result.cells[end].n == result.cells[start].n)
      ++end;
    std::vector<double> scores;
    std::vector<std::size_t> index;
    for (std::size_t k = start; k < end; ++k) {
      result.cells[k].posterior = kNaN;
      if (result.cells[k].ok && !std::isnan(result.cells[k].log_score)) {
        scores.push_back(result.cells[k].log_score);
        index.push_back(k);
      }
    }
    if (!scores.empty()) {
      const auto post = model_posteriors(scores);
      for (std::size_t k = 0; k < post.size(); ++k) result.cells[index[k]].posterior = post[k];
    }
    start = end;
  }
}

StudyResult run_study(const StudyConfig& config) {
  if (const auto errors = validate(config); !errors.empty())
    throw std::invalid_argument("invalid study config: " + errors.front());

  StudyResult result;
  result.config = config;
  for (auto& id : result.config.generating) id = catalog_entry(id).id;
  for (auto& id : result.config.candidates) id = catalog_entry(id).id;

  std::vector<Candidate> candidates;
  for (const auto& id : result.config.candidates) {
    const auto& entry = catalog_entry(id);
    result.dimensions.emplace(entry.id, regular_dimension(entry.structure, config.dimension));
    const auto& dim = result.dimensions.at(entry.id);
    candidates.push_back({entry.structure, uniform_params(entry.structure), dim.d, dim.d_unadjusted});
  }

  std::map<std::string, Dataset> samples;
  for (const auto& id : result.config.generating) {
    const auto& entry = catalog_entry(id);
    const auto key = hash_name(entry.id);
    const auto params = reference_params(entry.structure, derive_seed(config.seed, {key, 0}));
    samples.emplace(entry.id, forward_sample(entry.structure, params, config.total_n, derive_seed(config.seed, {key, 1})));
  }

  for (const auto& gen : result.config.generating)
    for (std::size_t n : config.segments)
      for (std::size_t k = 0; k < candidates.size(); ++k)
        result.cells.push_back({gen, n, candidates[k].structure.id, kNaN, kNaN, {}, true, {}});

  std::vector<std::size_t> cell_candidate(result.cells.size());
  for (std::size_t k = 0; k < result.cells.size(); ++k) cell_candidate[k] = k % candidates.size();

  const auto run_cell = [&](std::size_t k) {
    auto& cell = result.cells[k];
    const auto& cand = candidates[cell_candidate[k]];
    try {
      const auto& full = samples.at(cell.generating);
      Dataset segment;
      segment.names = full.names;
      segment.rows.assign(full.rows.begin(), full.rows.begin() + static_cast<std::ptrdiff_t>(cell.n));

      EmOptions em = config.em;
      em.init.reset();
      em.seed = derive_seed(config.seed, {hash_name(cell.generating), cell.n, hash_name(cell.candidate), 2});
      const auto prior = DirichletPrior::uniform(cand.structure, config.alpha);
      const auto fit = em_fit(cand.structure, segment, prior, em, &cand.clamps);
      cell.parts = cs_components(cand.structure, segment, fit.params, prior);
      cell.log_score = criterion_score(config.criterion, cell.parts, cand.d, cand.d_unadjusted);
      if (!std::isfinite(cell.log_score)) throw std::runtime_error("non-finite score");
    } catch (const std::exception& e) {
      cell.ok = false;
      cell.error = e.what();
      cell.log_score = kNaN;
    }
  };

  const unsigned hw = std::max(1u, std::thread::hardware_concurrency());
  const std::size_t workers =
      std::min<std::size_t>(config.jobs > 0 ? static_cast<std::size_t>(config.jobs) : hw, result.cells.size());
  if (workers <= 1) {
    for (std::size_t k = 0; k < result.cells.size(); ++k) run_cell(k);
  } else {
    std::atomic<std::size_t> next{0};
    std::vector<std::jthread> pool;
    for (std::size_t w = 0; w < workers; ++w)
      pool.emplace_back([&] {
        for (std::size_t k = next++; k < result.cells.size(); k = next++) run_cell(k);
      });
  }

  normalize_posteriors(result);
  return result;
}

StudyResult rescore(const StudyResult& result, Criterion criterion, bool use_unadjusted) {
  StudyResult out = result;
  out.config.criterion = criterion;
  for (auto& cell : out.cells) {
    if (!cell.ok) continue;
    const auto& dim = out.dimensions.at(cell.candidate);
    const int d = use_unadjusted ? dim.d_unadjusted : dim.d;
    cell.log_score = criterion_score(criterion, cell.parts, d, dim.d_unadjusted);
  }
  normalize_posteriors(out);
  return out;
}

void write_study_scores(std::ostream& out, const StudyResult& result) {
  out << "# " << kStudyFormat << '\n' << kStudyScoresHeader << '\n';
  for (const auto& c : result.cells) {
    const auto dim = result.dimensions.find(c.candidate);
    const int d = dim == result.dimensions.end() ? 0 : dim->second.d;
    const int du = dim == result.dimensions.end() ? 0 : dim->second.d_unadjusted;
    out << c.generating << ',' << c.n << ',' << c.candidate << ',' << to_string(result.config.criterion) << ','
        << format_double(c.log_score) << ',' << format_double(c.posterior) << ',' << d << ',' << du << ',';
    if (c.ok) {
      out << format_double(c.parts.log_marginal_imaginary) << ',' << format_double(c.parts.loglik_imaginary) << ','
          << format_double(c.parts.loglik_observed) << ",ok\n";
    } else {
      out << "NA,NA,NA,error: " << sanitize(c.error) << '\n';
    }
  }
}

std::vector<StudyCell> read_study_scores(std::istream& in) {
  std::string line;
  std::size_t lineno = 0;
  const auto next_line = [&]() -> bool {
    while (std::getline(in, line)) {
      ++lineno;
      if (!line.empty() && line.back() == '\r') line.pop_back();
      if (line.empty() || line.front() == '#') continue;
      return true;
    }
    return false;
  };
  if (!next_line() || line != kStudyScoresHeader)
    throw FormatError("line " + std::to_string(lineno) + ": expected header \"" + kStudyScoresHeader + "\"");
  std::vector<StudyCell> cells;
  while (next_line()) {
    const auto f = split_csv(line);
    if (f.size() != 12) throw FormatError("line " + std::to_string(lineno) + ": expected 12 fields");
    StudyCell c;
    c.generating = f[0];
    c.n = static_cast<std::size_t>(parse_number(f[1], lineno));
    c.candidate = f[2];
    c.log_score = parse_number(f[4], lineno);
    c.posterior = parse_number(f[5], lineno);
    c.parts.n = c.n;
    c.parts.log_marginal_imaginary = parse_number(f[8], lineno);
    c.parts.loglik_imaginary = parse_number(f[9], lineno);
    c.parts.loglik_observed = parse_number(f[10], lineno);
    if (f[11] == "ok") {
      c.ok = true;
    } else if (f[11].rfind("error: ", 0) == 0) {
      c.ok = false;
      c.error = f[11].substr(7);
      c.parts = CsComponents{};
    } else {
      throw FormatError("line " + std::to_string(lineno) + ": bad status \"" + f[11] + "\"");
    }
    cells.push_back(std::move(c));
  }
  return cells;
}

void write_study_posteriors(std::ostream& out, const StudyResult& result) {
  out << "# " << kStudyFormat << "\ngenerating,N";
  for (const auto& cand : result.config.candidates) out << ',' << cand;
  out << '\n';
  for (const auto& gen : result.config.generating) {
    for (std::size_t n : result.config.segments) {
      out << gen << ',' << n;
      for (double p : result.posteriors(gen, n)) out << ',' << format_double(p);
      out << '\n';
    }
  }
}

void write_study_report(std::ostream& out, const StudyResult& result) {
  const auto& c = result.config;
  out << "# " << kStudyFormat << " report\n";
  out << "criterion " << to_string(c.criterion) << ", EM " << to_string(c.em.mode) << " (alpha " << format_double(c.alpha)
      << ", tol " << format_double(c.em.tol) << ", max_iter " << c.em.max_iter << ", restarts " << c.em.restarts
      << "), seed " << c.seed << ", total_n " << c.total_n << '\n';
  out << "dimensions (" << c.dimension.points << " points, seed " << c.dimension.seed << "):";
  for (const auto& id : c.candidates) {
    const auto& d = result.dimensions.at(id);
    out << ' ' << id << " d=" << d.d << " d'=" << d.d_unadjusted << ';';
  }
  out << "\n";

  for (const auto& gen : c.generating) {
    out << "\nGenerating model " << gen << "\n";
    out << std::setw(6) << "N";
    for (const auto& cand : c.candidates) out << std::setw(8) << cand;
    out << '\n';
    for (std::size_t n : c.segments) {
      out << std::setw(6) << n;
      for (double p : result.posteriors(gen, n)) out << std::setw(8) << posterior_text(p);
      out << '\n';
    }
  }

  bool header = false;
  for (const auto& cell : result.cells) {
    if (cell.ok) continue;
    if (!header) out << "\nFailed cells\n";
    header = true;
    out << cell.generating << " N=" << cell.n << ' ' << cell.candidate << ": " << cell.error << '\n';
  }
}

void write_study_gnuplot(std::ostream& out, const StudyResult& result) {
  out << "# " << kStudyFormat << " posteriors; one index block per generating model\n";
  out << "# columns: N";
  for (const auto& cand : result.config.candidates) out << ' ' << cand;
  out << '\n';
  bool first = true;
  for (const auto& gen : result.config.generating) {
    if (!first) out << "\n\n";
    first = false;
    out << "# generating " << gen << '\n';
    for (std::size_t n : result.config.segments) {
      out << n;
      for (double p : result.posteriors(gen, n)) out << ' ' << (std::isnan(p) ? std::string("NaN") : format_double(p));
      out << '\n';
    }
  }
}

void write_study_outputs(const std::filesystem::path& dir, const StudyResult& result) {
  std::filesystem::create_directories(dir);
  const auto write = [&](const char* name, void (*fn)(std::ostream&, const StudyResult&)) {
    std::ofstream out(dir / name, std::ios::binary);
    if (!out) throw std::runtime_error("cannot write " + (dir / name).string());
    fn(out, result);
  };
  write("study_scores.csv", write_study_scores);
  write("study_posteriors.csv", write_study_posteriors);
  write("report.txt", write_study_report);
  if (result.config.gnuplot) write("study_posteriors.dat", write_study_gnuplot);
}

}  // namespace cim
