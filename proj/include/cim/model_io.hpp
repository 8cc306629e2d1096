#pragma once

// File formats.
//
// Model file (JSON, format "cim-model/1"):
//
//   {
//     "format": "cim-model/1",                 optional
//     "id": "F1",                              optional
//     "causes": [{"name": "C1", "cardinality": 2}, ...],
//     "effect": {"name": "E", "cardinality": 2 | "count"},
//     "combo": "max" | "sum" | "parity" | {"nof": N},
//     "mechanisms": [{"name": "X1",            optional
//                     "parents": ["C1", ...],
//                     "family": "multinomial" | "poisson",
//                     "cardinality": r}],      multinomial only, default 2
//     "params": {                              optional
//       "cause_priors": [[p0, p1, ...], ...],
//       "tables": [[[row for config 0], ...] | null, ...],   one per mechanism
//       "rates":  [[rate for config 0, ...] | null, ...],    one per mechanism
//       "clamps": [[state | null, ...] | null, ...]          one per mechanism
//     }
//   }
//
// Parent configurations are indexed mixed-radix over the mechanism's parents
// in declared order, first parent most significant. Unknown fields are
// rejected everywhere.
//
// Dataset file (CSV, format "cim-data/1"): a "# cim-data/1" comment line, a
// header of cause names then the effect name (optionally followed by latent
// mechanism columns when emitted for debugging), then one integer row per case.
//
// Prior file (JSON, format "cim-prior/1"): {"alpha": a, "gamma": {"shape": s,
// "rate": r}, "cause_alpha": [[...]], "table_alpha": [[[...]]]}, all optional;
// explicit arrays override the scalar defaults.

#include <filesystem>
#include <iosfwd>
#include <optional>
#include <stdexcept>
#include <string>

#include "cim/model.hpp"

namespace cim {

inline constexpr const char* kModelFormat = "cim-model/1";
inline constexpr const char* kDataFormat = "cim-data/1";
inline constexpr const char* kPriorFormat = "cim-prior/1";

/// Malformed input file. The message carries the field path or line number.
class FormatError : public std::runtime_error {
 public:
  using std::runtime_error::runtime_error;
};

struct ModelFile {
  ModelStructure structure;
  std::optional<ModelParams> params;
};

ModelFile parse_model(const std::string& json_text);
ModelFile read_model(const std::filesystem::path& path);
std::string format_model(const ModelStructure& s, const ModelParams* params);
void write_model(const std::filesystem::path& path, const ModelStructure& s, const ModelParams* params);

/// Header for a dataset of `s`, optionally with latent mechanism columns.
std::vector<std::string> dataset_header(const ModelStructure& s, bool with_latent = false);

void write_dataset(std::ostream& out, const Dataset& data);
void write_dataset(const std::filesystem::path& path, const Dataset& data);
/// Reads a dataset and checks it against `s`: header names, completeness,
/// and every value inside its domain.
Dataset read_dataset(std::istream& in, const ModelStructure& s);
Dataset read_dataset(const std::filesystem::path& path, const ModelStructure& s);

DirichletPrior parse_prior(const std::string& json_text, const ModelStructure& s);
DirichletPrior read_prior(const std::filesystem::path& path, const ModelStructure& s);

std::string read_text(const std::filesystem::path& path);

}  // namespace cim
