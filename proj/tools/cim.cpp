// cim: command-line front end for causal interaction models.
//
// Exit codes: 0 success, 1 computational or file-format failure, 2 usage error.

#include <algorithm>
#include <cctype>
#include <filesystem>
#include <fstream>
#include <iostream>

#include "CLI11.hpp"
#include "cim/catalog.hpp"
#include "cim/dimension.hpp"
#include "cim/em.hpp"
#include "cim/format.hpp"
#include "cim/model_io.hpp"
#include "cim/scoring.hpp"
#include "cim/study.hpp"

namespace fs = std::filesystem;
using namespace cim;

namespace {

constexpr int kExitFailure = 1;
constexpr int kExitUsage = 2;

constexpr const char* kFormats = R"(File formats:
  model     JSON, "cim-model/1"      (catalog, fit --out, inputs to generate/fit/score/dim)
  data      CSV,  "# cim-data/1"     header of cause names then effect name, one case per row
  prior     JSON, "cim-prior/1"      {"alpha", "gamma": {"shape","rate"}, "cause_alpha", "table_alpha"}
  trace     CSV,  "# cim-trace/1"    iteration,g
  scores    CSV,  "# cim-scores/1"   model_id,N,criterion,log_score,d,d_unadjusted,posterior
  dimension CSV,  "# cim-dimension/1" model_id,d,d_unadjusted,n_points,min_rank,max_rank,sv_gap,seed
  study     JSON config "cim-study/1"; writes study_scores.csv, study_posteriors.csv, report.txt)";

std::ofstream open_out(const fs::path& path) {
  if (path.has_parent_path()) fs::create_directories(path.parent_path());
  std::ofstream out(path, std::ios::binary);
  if (!out) throw std::runtime_error(path.string() + ": cannot open for writing");
  return out;
}

ModelFile load_model_with_params(const fs::path& path) {
  auto file = read_model(path);
  if (!file.params) throw FormatError(path.string() + ": model has no params");
  if (const auto errors = validate(file.structure, *file.params); !errors.empty())
    throw FormatError(path.string() + ": " + errors.front());
  return file;
}

struct FitFlags {
  std::string mode = "map";
  double tol = EmOptions{}.tol;
  int max_iter = EmOptions{}.max_iter;
  int restarts = EmOptions{}.restarts;
  std::uint64_t seed = 0;
  double alpha = 1.0;

  void add(CLI::App* cmd) {
    cmd->add_option("--mode", mode, "ml or map")->check(CLI::IsMember({"ml", "map"}))->capture_default_str();
    cmd->add_option("--tol", tol, "relative tolerance on g and on parameter moves")->capture_default_str();
    cmd->add_option("--max-iter", max_iter, "iterations per restart")->capture_default_str();
    cmd->add_option("--restarts", restarts, "random restarts")->check(CLI::PositiveNumber)->capture_default_str();
    cmd->add_option("--seed", seed, "seed for initialization")->capture_default_str();
    cmd->add_option("--alpha", alpha, "Dirichlet hyperparameter when no prior file is given")->capture_default_str();
  }

  EmOptions options() const {
    EmOptions o;
    o.mode = parse_fit_mode(mode);
    o.tol = tol;
    o.max_iter = max_iter;
    o.restarts = restarts;
    o.seed = seed;
    return o;
  }
};

}  // namespace

int main(int argc, char** argv) {
  CLI::App app{"Causal interaction models: sampling, EM fitting, scoring, dimension and the simulation study."};
  app.footer(kFormats);
  app.require_subcommand(1);

  // generate
  auto* gen = app.add_subcommand("generate", "Forward-sample a dataset from a parameterized model");
  fs::path gen_model, gen_out;
  std::size_t gen_n = 0;
  std::uint64_t gen_seed = 0;
  bool gen_latent = false;
  gen->add_option("--model", gen_model, "model file with params")->required();
  gen->add_option("--n", gen_n, "number of cases")->required();
  gen->add_option("--seed", gen_seed, "sampling seed")->required();
  gen->add_option("--out", gen_out, "output dataset CSV")->required();
  gen->add_flag("--emit-latent", gen_latent, "append latent mechanism columns X1..Xm (debugging)");

  // fit
  auto* fit = app.add_subcommand("fit", "Fit model parameters by EM");
  fs::path fit_model, fit_data, fit_prior, fit_out, fit_trace;
  bool fit_init = false;
  FitFlags fit_flags;
  fit->add_option("--model", fit_model, "model file; clamps in its params are respected")->required();
  fit->add_option("--data", fit_data, "dataset CSV")->required();
  fit->add_option("--prior", fit_prior, "prior file (cim-prior/1)");
  fit->add_option("--out", fit_out, "fitted model file")->required();
  fit->add_option("--trace", fit_trace, "objective trace CSV (default: <out>.trace.csv)");
  fit->add_flag("--init-from-model", fit_init, "start restart 0 from the model's params");
  fit_flags.add(fit);

  // score
  auto* score = app.add_subcommand("score", "Fit and score every model in a directory");
  fs::path score_models, score_data, score_out;
  std::string score_criterion = "cs";
  FitFlags score_flags;
  DimensionOptions score_dim;
  score->add_option("--models", score_models, "directory of model files (*.json)")->required()->check(CLI::ExistingDirectory);
  score->add_option("--data", score_data, "dataset CSV")->required();
  score->add_option("--criterion", score_criterion, "cs, cs-raw or bic")
      ->check(CLI::IsMember({"cs", "cs-raw", "bic"}))
      ->capture_default_str();
  score->add_option("--out", score_out, "scores CSV")->required();
  score->add_option("--points", score_dim.points, "dimension sample points")->capture_default_str();
  score->add_option("--dim-seed", score_dim.seed, "dimension sampling seed")->capture_default_str();
  score_flags.add(score);

  // dim
  auto* dim = app.add_subcommand("dim", "Adjusted dimension by Jacobian rank");
  fs::path dim_model, dim_out;
  DimensionOptions dim_opts;
  dim->add_option("--model", dim_model, "model file")->required();
  dim->add_option("--points", dim_opts.points, "interior sample points")->check(CLI::PositiveNumber)->capture_default_str();
  dim->add_option("--seed", dim_opts.seed, "sampling seed")->capture_default_str();
  dim->add_option("--fd-step", dim_opts.fd_step, "central-difference step")->capture_default_str();
  dim->add_option("--rank-tol", dim_opts.rank_tol, "rank cut relative to the largest singular value")->capture_default_str();
  dim->add_option("--count-cells", dim_opts.count_cells, "kept values of a counting effect")->capture_default_str();
  dim->add_option("--out", dim_out, "dimension CSV (default: stdout)");

  // study
  auto* study = app.add_subcommand("study", "Run the simulation study");
  fs::path study_config, study_out;
  int study_jobs = -1;
  study->add_option("--config", study_config, "study config (cim-study/1); defaults apply when omitted");
  study->add_option("--out", study_out, "output directory")->required();
  study->add_option("--jobs", study_jobs, "worker threads (default: config value, else available parallelism)");

  // catalog
  auto* cat = app.add_subcommand("catalog", "Write the F1-F5 model files with reference params");
  fs::path cat_out;
  std::uint64_t cat_seed = 0;
  cat->add_option("--out", cat_out, "output directory")->required();
  cat->add_option("--seed", cat_seed, "seed for the reference params")->capture_default_str();

  try {
    app.parse(argc, argv);
  } catch (const CLI::ParseError& e) {
    const int code = app.exit(e);
    return code == 0 ? 0 : kExitUsage;
  }

  try {
    if (*gen) {
      const auto file = load_model_with_params(gen_model);
      const auto data = forward_sample(file.structure, *file.params, gen_n, gen_seed, gen_latent);
      auto out = open_out(gen_out);
      write_dataset(out, data);
      std::cerr << "wrote " << data.size() << " cases to " << gen_out.string() << '\n';
    } else if (*fit) {
      const auto file = read_model(fit_model);
      const auto& s = file.structure;
      if (const auto errors = validate(s); !errors.empty()) throw FormatError(fit_model.string() + ": " + errors.front());
      const auto data = read_dataset(fit_data, s);
      const auto prior = fit_prior.empty() ? DirichletPrior::uniform(s, fit_flags.alpha) : read_prior(fit_prior, s);
      auto opts = fit_flags.options();
      if (fit_init) {
        if (!file.params) throw FormatError(fit_model.string() + ": --init-from-model needs params");
        opts.init = *file.params;
      }
      const auto result = em_fit(s, data, prior, opts, file.params ? &*file.params : nullptr);
      open_out(fit_out) << format_model(s, &result.params);
      const fs::path trace_path = fit_trace.empty() ? fs::path(fit_out.string() + ".trace.csv") : fit_trace;
      auto trace = open_out(trace_path);
      trace << "# cim-trace/1 restart=" << result.best_restart << " converged=" << (result.converged ? 1 : 0)
            << " iterations=" << result.iterations << "\niteration,g\n";
      for (std::size_t k = 0; k < result.trace.size(); ++k) trace << k << ',' << format_double(result.trace[k]) << '\n';
      std::cerr << "fit " << (result.converged ? "converged" : "stopped") << " after " << result.iterations
                << " iterations, g = " << format_double(result.objective) << '\n';
    } else if (*score) {
      std::vector<fs::path> paths;
      for (const auto& entry : fs::directory_iterator(score_models))
        if (entry.is_regular_file() && entry.path().extension() == ".json") paths.push_back(entry.path());
      std::sort(paths.begin(), paths.end());
      if (paths.empty()) throw FormatError(score_models.string() + ": no model files");

      std::vector<Candidate> candidates;
      Dataset data;
      for (const auto& path : paths) {
        auto file = read_model(path);
        auto& s = file.structure;
        if (s.id.empty()) s.id = path.stem().string();
        if (const auto errors = validate(s); !errors.empty()) throw FormatError(path.string() + ": " + errors.front());
        const ModelParams clamps = file.params ? *file.params : uniform_params(s);
        if (candidates.empty()) {
          data = read_dataset(score_data, s);
        } else if (dataset_header(s) != dataset_header(candidates.front().structure)) {
          throw FormatError(path.string() + ": causes and effect differ from " + paths.front().string());
        }
        const auto report = regular_dimension(s, clamps, score_dim);
        candidates.push_back({s, clamps, report.d, report.d_unadjusted});
        std::cerr << s.id << ": d=" << report.d << " d'=" << report.d_unadjusted << '\n';
      }
      const auto report = score_candidates(candidates, data, parse_criterion(score_criterion), score_flags.options(),
                                           score_flags.alpha);
      auto out = open_out(score_out);
      write_score_csv(out, report);
    } else if (*dim) {
      const auto file = read_model(dim_model);
      if (const auto errors = validate(file.structure); !errors.empty())
        throw FormatError(dim_model.string() + ": " + errors.front());
      const auto templ = file.params ? *file.params : uniform_params(file.structure);
      auto report = regular_dimension(file.structure, templ, dim_opts);
      if (report.model_id.empty()) report.model_id = dim_model.stem().string();
      if (dim_out.empty()) {
        write_dimension_csv(std::cout, std::span(&report, 1));
      } else {
        auto out = open_out(dim_out);
        write_dimension_csv(out, std::span(&report, 1));
      }
      std::cerr << report.model_id << ": d=" << report.d << " d'=" << report.d_unadjusted
                << " sv_gap=" << format_double(report.sv_gap) << '\n';
    } else if (*study) {
      StudyConfig config = study_config.empty() ? StudyConfig{} : read_study_config(study_config);
      if (study_jobs >= 0) config.jobs = study_jobs;
      const auto result = run_study(config);
      write_study_outputs(study_out, result);
      const auto failed = std::count_if(result.cells.begin(), result.cells.end(), [](const StudyCell& c) { return !c.ok; });
      std::cerr << "study: " << result.cells.size() << " cells, " << failed << " failed; wrote " << study_out.string() << '\n';
    } else if (*cat) {
      fs::create_directories(cat_out);
      for (const auto& entry : catalog()) {
        const auto params = reference_params(entry.structure, cat_seed);
        std::string name = entry.id;
        std::transform(name.begin(), name.end(), name.begin(), [](unsigned char ch) { return std::tolower(ch); });
        const auto path = cat_out / (name + ".json");
        open_out(path) << format_model(entry.structure, &params);
        std::cerr << "wrote " << path.string() << '\n';
      }
    }
  } catch (const std::exception& e) {
    std::cerr << "error: " << e.what() << '\n';
    return kExitFailure;
  }
  return 0;
}
