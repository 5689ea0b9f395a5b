#pragma once

// Configuration search: given a trained performance map and the features of
// a new instance, pick the feasible configuration maximising one of several
// objectives. The feasible set is enumerated, so every solve is exact in c;
// the performance variable r is optimised analytically (performance-as-output
// forms are affine in r) or by grid + golden-section search
// (performance-as-input form).

#include <array>
#include <optional>
#include <span>
#include <string>
#include <string_view>
#include <variant>
#include <vector>

#include "cfglearn/config_space.hpp"
#include "cfglearn/logreg.hpp"

namespace cfglearn {

enum class Formulation {
  pao_direct,              // max s(z(c))
  pao_log,                 // max ln s(z(c)); same argmax as pao_direct
  pao_likelihood,          // max r ln s + (1-r) ln(1-s) + r
  pao_likelihood_literal,  // max r ln s + (1-r)(1 - ln s) + r, as printed
  pao_weighted,            // max r s + (1-r)(1-s)
  pai,                     // max sum_j c_j s_j(r) + (1-c_j)(1-s_j(r))
};

std::string_view to_string(Formulation f) noexcept;
/// Accepts the names produced by to_string, e.g. "pao-weighted". Throws ArgumentError.
Formulation parse_formulation(std::string_view name);
bool is_pao(Formulation f) noexcept;

inline constexpr std::size_t kDefaultRGridPoints = 101;
inline constexpr double kGoldenTolerance = 1e-6;

struct CsspProblem {
  Formulation formulation = Formulation::pao_weighted;
  /// LinearModel over (features, c) for PaO; MultiOutputModel over
  /// (features, r) with one output per configuration bit for PaI.
  std::variant<LinearModel, MultiOutputModel> model;
  std::vector<double> features;
  /// Candidate configurations. Ties go to the earliest entry, which is the
  /// lexicographically smallest setting tuple for enumerate_feasible output.
  std::span<const Configuration> feasible;
  std::size_t r_grid_points = kDefaultRGridPoints;
  /// When set, the chosen configuration is re-checked against A c <= d.
  const ConstraintSystem* constraints = nullptr;
};

struct CsspSolution {
  Configuration config;
  std::size_t config_index = 0;  // position in CsspProblem::feasible
  double r = 0.0;
  double objective = 0.0;
  /// s(z(c*)) for PaO forms; unset for PaI.
  std::optional<double> predicted;
  Formulation formulation = Formulation::pao_weighted;
};

/// Dispatches on problem.formulation. Throws SolveError on an empty feasible
/// set or a chosen configuration violating the constraints, DimensionError on
/// model/feature/configuration size mismatch.
CsspSolution solve(const CsspProblem& problem);

CsspSolution solve_pao_direct(const CsspProblem& problem);
CsspSolution solve_pao_log(const CsspProblem& problem);
CsspSolution solve_pao_likelihood(const CsspProblem& problem);
CsspSolution solve_pao_likelihood_literal(const CsspProblem& problem);
CsspSolution solve_pao_weighted(const CsspProblem& problem);
CsspSolution solve_pai(const CsspProblem& problem);

/// Objective of the PaI form at (c, r).
double pai_objective(const MultiOutputModel& model, std::span<const double> features,
                     const Configuration& c, double r);

/// Requiring every output s_j(r) to be exactly 0 or 1 has no solution: a
/// logistic output never reaches either bound. The certificate records
/// min_j min(s_j(r), 1 - s_j(r)) at the probed r values, in log form so that
/// strict positivity survives where the margin underflows.
struct MarginProbe {
  double r = 0.0;
  double log_margin = 0.0;  // finite <=> margin > 0
  double margin = 0.0;      // exp(log_margin); may underflow to 0
};

struct InfeasibilityCertificate {
  bool infeasible = true;
  std::vector<MarginProbe> probes;
};

double pai_log_margin(const MultiOutputModel& model, std::span<const double> features, double r);

InfeasibilityCertificate pai_direct_feasibility(const MultiOutputModel& model,
                                                std::span<const double> features,
                                                std::span<const double> probe_r = {});

}  // namespace cfglearn
