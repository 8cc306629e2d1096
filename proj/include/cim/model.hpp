#pragma once

// Domain types for causal interaction models: causes, hidden mechanism
// variables, the deterministic combination function producing the effect,
// and the parameter tables attached to each mechanism.

#include <cstddef>
#include <cstdint>
#include <optional>
#include <span>
#include <string>
#include <vector>

namespace cim {

/// Domain of a variable: finite with states 0..cardinality-1, or the counting
/// numbers when `cardinality` is empty. State order is integer order.
struct Domain {
  std::optional<int> cardinality;

  static Domain finite(int r) { return Domain{r}; }
  static Domain counting() { return Domain{std::nullopt}; }

  bool is_finite() const { return cardinality.has_value(); }
  bool contains(int value) const {
    return value >= 0 && (!cardinality || value < *cardinality);
  }
  bool operator==(const Domain&) const = default;
};

struct VariableSpec {
  std::string name;
  Domain domain;
};

enum class Family { Multinomial, Poisson };

/// A mechanism is represented by its single mechanism variable X_i. An empty
/// parent list is a leak term with exactly one parent configuration.
struct Mechanism {
  std::vector<std::size_t> parents;
  Family family = Family::Multinomial;
  Domain domain = Domain::finite(2);
};

struct CombinationFunction {
  enum class Kind { Max, Sum, NOf, Parity };
  Kind kind = Kind::Max;
  int threshold = 0;  // NOf only

  static CombinationFunction max() { return {Kind::Max, 0}; }
  static CombinationFunction sum() { return {Kind::Sum, 0}; }
  static CombinationFunction n_of(int n) { return {Kind::NOf, n}; }
  static CombinationFunction parity() { return {Kind::Parity, 0}; }

  bool operator==(const CombinationFunction&) const = default;
};

std::string to_string(const CombinationFunction& combo);

struct ModelStructure {
  std::string id;
  std::vector<VariableSpec> causes;
  VariableSpec effect;
  std::vector<Mechanism> mechanisms;
  CombinationFunction combo;

  /// q_i: product of the parent cardinalities of mechanism i.
  std::size_t config_count(std::size_t mech) const;
  /// Number of joint cause configurations.
  std::size_t cause_config_count() const;
  int cause_cardinality(std::size_t cause) const { return *causes.at(cause).domain.cardinality; }
};

/// Per-row clamp: the row is a point mass on the given state.
using Clamp = std::optional<int>;

struct MechanismTable {
  Family family = Family::Multinomial;
  std::vector<std::vector<double>> rows;  // multinomial: q_i rows of length r_i
  std::vector<double> rates;              // poisson: q_i rates
  std::vector<Clamp> clamps;              // q_i entries, multinomial only

  std::size_t config_count() const {
    return family == Family::Multinomial ? rows.size() : rates.size();
  }
  bool is_clamped(std::size_t j) const { return j < clamps.size() && clamps[j].has_value(); }
};

struct ModelParams {
  std::vector<std::vector<double>> cause_priors;
  std::vector<MechanismTable> tables;
};

struct GammaHyper {
  double shape = 2.0;
  double rate = 1.0;
};

/// Conjugate hyperparameters: Dirichlet for cause priors and multinomial
/// rows, Gamma(shape, rate) for Poisson rates.
struct DirichletPrior {
  using GammaHyper = cim::GammaHyper;

  std::vector<std::vector<double>> cause_alpha;
  std::vector<std::vector<std::vector<double>>> table_alpha;  // [mech][config][state]
  std::vector<std::vector<GammaHyper>> gamma;                 // [mech][config]

  static DirichletPrior uniform(const ModelStructure& s, double alpha = 1.0,
                                GammaHyper gamma = {});
};

struct Case {
  std::vector<int> causes;
  int effect = 0;

  auto operator<=>(const Case&) const = default;
};

struct Dataset {
  std::vector<std::string> names;  // causes then effect
  std::vector<Case> rows;
  // Optional latent mechanism values, one vector per row (debug output only).
  std::vector<std::vector<int>> latent;

  std::size_t size() const { return rows.size(); }
  bool empty() const { return rows.empty(); }
};

// ---------------------------------------------------------------------------

/// Empty iff every structural and parameter invariant holds. With
/// `strict_positive`, unclamped multinomial entries must be > 0; otherwise
/// zeros are tolerated (ML estimates can legitimately hit the boundary).
std::vector<std::string> validate(const ModelStructure& s, const ModelParams& p,
                                  bool strict_positive = true);
std::vector<std::string> validate(const ModelStructure& s);

/// Mixed-radix index of mechanism `mech`'s parent states, first-declared parent
/// most significant. Throws std::out_of_range for a state outside its domain.
std::size_t parent_config_index(const ModelStructure& s, std::size_t mech,
                                std::span<const int> cause_states);

/// Inverse of parent_config_index: the parent states (in declared order) of
/// configuration j.
std::vector<int> config_parent_states(const ModelStructure& s, std::size_t mech, std::size_t j);

/// All parent-state tuples of mechanism `mech` in index order.
std::vector<std::vector<int>> enumerate_configs(const ModelStructure& s, std::size_t mech);

/// Mixed-radix index over all causes (first cause most significant), and its inverse.
std::size_t cause_config_index(const ModelStructure& s, std::span<const int> cause_states);
std::vector<int> cause_config_states(const ModelStructure& s, std::size_t index);

/// Number of free parameters including hidden-mechanism parameters; clamped
/// rows contribute nothing.
int unadjusted_dimension(const ModelStructure& s, const ModelParams* clamps_from = nullptr);

/// Parameters with uniform rows, rate 1 and no clamps; shaped for `s`.
ModelParams uniform_params(const ModelStructure& s);

/// Point-mass row with all weight on `state`.
std::vector<double> point_mass(int cardinality, int state);

}  // namespace cim
