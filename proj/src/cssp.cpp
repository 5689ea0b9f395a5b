#include "cfglearn/cssp.hpp"

#include <cmath>
#include <limits>

#include <fmt/format.h>

#include "cfglearn/error.hpp"

namespace cfglearn {

namespace {

constexpr std::array<std::pair<Formulation, std::string_view>, 6> kNames{{
    {Formulation::pao_direct, "pao-direct"},
    {Formulation::pao_log, "pao-log"},
    {Formulation::pao_likelihood, "pao-likelihood"},
    {Formulation::pao_likelihood_literal, "pao-likelihood-literal"},
    {Formulation::pao_weighted, "pao-weighted"},
    {Formulation::pai, "pai"},
}};

std::size_t check_feasible_list(const CsspProblem& p) {
  if (p.feasible.empty()) throw SolveError("feasible configuration set is empty");
  const std::size_t s = p.feasible.front().size();
  for (const Configuration& c : p.feasible)
    if (c.size() != s) throw DimensionError("feasible configurations differ in length");
  return s;
}

const LinearModel& pao_model(const CsspProblem& p) {
  if (!is_pao(p.formulation))
    throw ArgumentError(fmt::format("{} is not a performance-as-output formulation",
                                    to_string(p.formulation)));
  const auto* m = std::get_if<LinearModel>(&p.model);
  if (m == nullptr)
    throw ArgumentError(fmt::format("{} needs a single-output (PaO) model",
                                    to_string(p.formulation)));
  return *m;
}

const MultiOutputModel& pai_model(const CsspProblem& p) {
  const auto* m = std::get_if<MultiOutputModel>(&p.model);
  if (m == nullptr) throw ArgumentError("pai needs a multi-output (PaI) model");
  return *m;
}

CsspSolution finish(const CsspProblem& p, std::size_t index, double r, double objective,
                    std::optional<double> predicted) {
  CsspSolution sol{p.feasible[index], index, r, objective, predicted, p.formulation};
  if (p.constraints != nullptr && !is_feasible(*p.constraints, sol.config))
    throw SolveError(fmt::format("chosen configuration {} violates the constraint system",
                                 sol.config.to_string()));
  return sol;
}

/// z(c) = w.(f, c) + b for every candidate, sharing the feature part.
std::vector<double> pao_scores(const CsspProblem& p, const LinearModel& m) {
  const std::size_t s = check_feasible_list(p);
  const std::size_t t = p.features.size();
  if (m.input_dim() != t + s)
    throw DimensionError(fmt::format(
        "PaO model has {} inputs, expected {} features + {} configuration bits", m.input_dim(),
        t, s));
  double base = m.b;
  for (std::size_t j = 0; j < t; ++j) base += m.w[j] * p.features[j];
  std::vector<double> z;
  z.reserve(p.feasible.size());
  for (const Configuration& c : p.feasible) {
    double acc = base;
    for (std::size_t j = 0; j < s; ++j)
      if (c[j]) acc += m.w[t + j];
    z.push_back(acc);
  }
  return z;
}

struct Choice {
  double r;
  double objective;
};

/// Index-ordered argmax of `eval(z)`; the first maximiser wins.
template <typename Eval>
CsspSolution pao_argmax(const CsspProblem& p, Eval eval) {
  const LinearModel& m = pao_model(p);
  const std::vector<double> z = pao_scores(p, m);
  std::size_t best = 0;
  Choice best_choice = eval(z[0]);
  for (std::size_t i = 1; i < z.size(); ++i) {
    Choice c = eval(z[i]);
    if (c.objective > best_choice.objective) {
      best = i;
      best_choice = c;
    }
  }
  return finish(p, best, best_choice.r, best_choice.objective, sigmoid(z[best]));
}

// Per-output pieces of the PaI objective: s_j(r) = s(a_j + k_j r).
struct PaiTerms {
  std::vector<double> offset;  // a_j
  std::vector<double> slope;   // k_j
};

PaiTerms pai_terms(const MultiOutputModel& m, std::span<const double> f) {
  const std::size_t t = f.size();
  PaiTerms terms;
  for (const LinearModel& out : m.outputs) {
    if (out.input_dim() != t + 1)
      throw DimensionError(fmt::format("PaI output has {} inputs, expected {} features + r",
                                       out.input_dim(), t));
    double a = out.b;
    for (std::size_t j = 0; j < t; ++j) a += out.w[j] * f[j];
    terms.offset.push_back(a);
    terms.slope.push_back(out.w[t]);
  }
  return terms;
}

double pai_value(const PaiTerms& terms, const Configuration& c, double r) {
  double total = 0.0;
  for (std::size_t j = 0; j < terms.offset.size(); ++j) {
    const double z = terms.offset[j] + terms.slope[j] * r;
    total += c[j] ? sigmoid(z) : sigmoid(-z);
  }
  return total;
}

class PaiSearch {
 public:
  PaiSearch(const PaiTerms& terms, std::span<const Configuration> feasible)
      : terms_(terms), feasible_(feasible), on_(terms.offset.size()), off_(terms.offset.size()) {}

  /// Best candidate at fixed r; first index wins ties.
  std::pair<std::size_t, double> best_config(double r) {
    const std::size_t s = terms_.offset.size();
    for (std::size_t j = 0; j < s; ++j) {
      const double z = terms_.offset[j] + terms_.slope[j] * r;
      on_[j] = sigmoid(z);
      off_[j] = sigmoid(-z);
    }
    std::size_t best = 0;
    double best_value = -std::numeric_limits<double>::infinity();
    for (std::size_t i = 0; i < feasible_.size(); ++i) {
      const Configuration& c = feasible_[i];
      double v = 0.0;
      for (std::size_t j = 0; j < s; ++j) v += c[j] ? on_[j] : off_[j];
      if (v > best_value) {
        best_value = v;
        best = i;
      }
    }
    return {best, best_value};
  }

 private:
  const PaiTerms& terms_;
  std::span<const Configuration> feasible_;
  std::vector<double> on_, off_;
};

/// Golden-section maximisation of f on [lo, hi].
template <typename F>
double golden_maximize(F f, double lo, double hi, double tol) {
  const double inv_phi = (std::sqrt(5.0) - 1.0) / 2.0;
  double a = lo, b = hi;
  double c = b - inv_phi * (b - a), d = a + inv_phi * (b - a);
  double fc = f(c), fd = f(d);
  while (b - a > tol) {
    if (fc >= fd) {
      b = d;
      d = c;
      fd = fc;
      c = b - inv_phi * (b - a);
      fc = f(c);
    } else {
      a = c;
      c = d;
      fc = fd;
      d = a + inv_phi * (b - a);
      fd = f(d);
    }
  }
  return 0.5 * (a + b);
}

}  // namespace

std::string_view to_string(Formulation f) noexcept {
  for (const auto& [value, name] : kNames)
    if (value == f) return name;
  return "unknown";
}

Formulation parse_formulation(std::string_view name) {
  for (const auto& [value, label] : kNames)
    if (label == name) return value;
  throw ArgumentError(fmt::format("unknown formulation '{}'", name));
}

bool is_pao(Formulation f) noexcept { return f != Formulation::pai; }

CsspSolution solve(const CsspProblem& problem) {
  switch (problem.formulation) {
    case Formulation::pao_direct:
      return solve_pao_direct(problem);
    case Formulation::pao_log:
      return solve_pao_log(problem);
    case Formulation::pao_likelihood:
      return solve_pao_likelihood(problem);
    case Formulation::pao_likelihood_literal:
      return solve_pao_likelihood_literal(problem);
    case Formulation::pao_weighted:
      return solve_pao_weighted(problem);
    case Formulation::pai:
      return solve_pai(problem);
  }
  throw ArgumentError("unknown formulation");
}

CsspSolution solve_pao_direct(const CsspProblem& problem) {
  // s is strictly increasing, so comparing scores avoids ties created by
  // sigmoid saturating in floating point.
  CsspSolution sol = pao_argmax(problem, [](double z) { return Choice{0.0, z}; });
  sol.objective = *sol.predicted;
  sol.r = sol.objective;
  return sol;
}

CsspSolution solve_pao_log(const CsspProblem& problem) {
  CsspSolution sol =
      pao_argmax(problem, [](double z) { return Choice{0.0, log_sigmoid(z)}; });
  sol.r = *sol.predicted;
  return sol;
}

CsspSolution solve_pao_likelihood(const CsspProblem& problem) {
  // Affine in r with slope ln s(z) - ln(1 - s(z)) + 1 = z + 1.
  return pao_argmax(problem, [](double z) {
    if (z >= -1.0) return Choice{1.0, log_sigmoid(z) + 1.0};
    return Choice{0.0, log_sigmoid(-z)};
  });
}

CsspSolution solve_pao_likelihood_literal(const CsspProblem& problem) {
  // r ln s + (1 - r)(1 - ln s) + r has slope 2 ln s <= 0.
  return pao_argmax(problem, [](double z) {
    const double ls = log_sigmoid(z);
    if (ls >= 0.0) return Choice{1.0, ls + 1.0};
    return Choice{0.0, 1.0 - ls};
  });
}

CsspSolution solve_pao_weighted(const CsspProblem& problem) {
  // Affine in r with slope 2 s(z) - 1.
  return pao_argmax(problem, [](double z) {
    if (z >= 0.0) return Choice{1.0, sigmoid(z)};
    return Choice{0.0, sigmoid(-z)};
  });
}

CsspSolution solve_pai(const CsspProblem& problem) {
  if (problem.formulation != Formulation::pai)
    throw ArgumentError(fmt::format("solve_pai called with {}", to_string(problem.formulation)));
  const MultiOutputModel& m = pai_model(problem);
  const std::size_t s = check_feasible_list(problem);
  if (m.output_dim() != s)
    throw DimensionError(fmt::format("PaI model has {} outputs, configurations have {} bits",
                                     m.output_dim(), s));
  if (problem.r_grid_points < 2) throw ArgumentError("r_grid_points must be at least 2");

  const PaiTerms terms = pai_terms(m, problem.features);
  PaiSearch search(terms, problem.feasible);

  const std::size_t grid = problem.r_grid_points;
  auto grid_r = [&](std::size_t i) {
    return static_cast<double>(i) / static_cast<double>(grid - 1);
  };

  std::size_t best_index = 0, best_grid = 0;
  double best_r = 0.0;
  double best_value = -std::numeric_limits<double>::infinity();
  for (std::size_t g = 0; g < grid; ++g) {
    const double r = grid_r(g);
    auto [idx, value] = search.best_config(r);
    value = pai_value(terms, problem.feasible[idx], r);
    const bool better = value > best_value || (value == best_value && idx < best_index);
    if (better) {
      best_index = idx;
      best_value = value;
      best_r = r;
      best_grid = g;
    }
  }

  // Refine r between the neighbouring grid points at the chosen configuration.
  const double lo = grid_r(best_grid == 0 ? 0 : best_grid - 1);
  const double hi = grid_r(std::min(grid - 1, best_grid + 1));
  const Configuration& chosen = problem.feasible[best_index];
  const double refined = golden_maximize(
      [&](double r) { return pai_value(terms, chosen, r); }, lo, hi, kGoldenTolerance);
  if (const double v = pai_value(terms, chosen, refined); v > best_value) {
    best_value = v;
    best_r = refined;
    // A different configuration may do better at the refined r.
    auto [idx, approx] = search.best_config(refined);
    (void)approx;
    if (const double alt = pai_value(terms, problem.feasible[idx], refined); alt > best_value) {
      best_index = idx;
      best_value = alt;
    }
  }

  return finish(problem, best_index, best_r, best_value, std::nullopt);
}

double pai_objective(const MultiOutputModel& model, std::span<const double> features,
                     const Configuration& c, double r) {
  if (c.size() != model.output_dim())
    throw DimensionError("configuration length does not match PaI output count");
  return pai_value(pai_terms(model, features), c, r);
}

double pai_log_margin(const MultiOutputModel& model, std::span<const double> features, double r) {
  const PaiTerms terms = pai_terms(model, features);
  double worst = std::numeric_limits<double>::infinity();
  for (std::size_t j = 0; j < terms.offset.size(); ++j) {
    const double z = terms.offset[j] + terms.slope[j] * r;
    // ln min(s(z), 1 - s(z)) = ln s(-|z|)
    worst = std::min(worst, log_sigmoid(-std::abs(z)));
  }
  return worst;
}

InfeasibilityCertificate pai_direct_feasibility(const MultiOutputModel& model,
                                                std::span<const double> features,
                                                std::span<const double> probe_r) {
  static constexpr std::array<double, 3> kDefaultProbes{0.0, 0.5, 1.0};
  if (probe_r.empty()) probe_r = kDefaultProbes;
  InfeasibilityCertificate cert;
  for (double r : probe_r) {
    const double lm = pai_log_margin(model, features, r);
    cert.probes.push_back({r, lm, std::exp(lm)});
  }
  return cert;
}

}  // namespace cfglearn
