#pragma once

#include "grawa/layered.hpp"
#include "grawa/objective.hpp"

#include <nlohmann/json.hpp>

#include <cstdint>
#include <functional>
#include <optional>
#include <vector>

namespace grawa {

// Euclidean norm of the mean gradient over the whole training set.
double full_gradient_norm(const Objective& objective, const LayeredParams& params);

// Hessian-vector product. Uses the closed-form Hessian when the objective has
// one, otherwise a central difference of full-set gradients with step
// h = 1e-4 (1 + |x|) / |v|.
Eigen::VectorXd hvp(const Objective& objective, const LayeredParams& params, const Eigen::VectorXd& v);

using LinearOperator = std::function<Eigen::VectorXd(const Eigen::VectorXd&)>;

struct SpectrumReport {
    // Ritz values, descending by magnitude.
    std::vector<double> eigenvalues;
    double frobenius_proxy = 0.0;
    int k = 0;
    int iterations = 0;
    // |beta_j * s_j| for each reported Ritz pair.
    std::vector<double> residuals;
    bool breakdown = false;
};

// Lanczos with full reorthogonalization from a seeded random start vector.
// Runs min(dim, max(2k, k + 20)) iterations and reports the k Ritz values
// of largest magnitude. An invariant subspace restarts the recurrence from a
// fresh random vector orthogonal to the basis and sets `breakdown`.
SpectrumReport lanczos_spectrum(const LinearOperator& op, Eigen::Index dim, int k, std::uint64_t seed);

SpectrumReport hessian_spectrum(const Objective& objective, const LayeredParams& params, int k, std::uint64_t seed);

int default_spectrum_k(Eigen::Index dim);

// test error (%) - train error (%)
double generalization_gap(double train_err_pct, double test_err_pct);

struct DominanceReport {
    // Share of trials with f(x_C) <= min_i f(x_i).
    double dominance_fraction = 0.0;
    // Share of trials with f(x_C) <= sum_i beta_i f(x_i).
    double jensen_fraction = 0.0;
    int trials = 0;
};

// Places M workers at random around the minimizer, forms the GRAWA center
// from exact gradient norms and checks both inequalities. Only defined for
// convex objectives.
DominanceReport center_dominance_probe(const Objective& objective, int workers, int trials, std::uint64_t seed,
                                       double spread = 1.0);

// Assumption constants of the convergence analysis. Unknown entries stay
// empty.
struct TheoreticalConstants {
    std::optional<double> smoothness;
    std::optional<double> strong_convexity;
    std::optional<double> spl;
    std::optional<double> cone_slope;
    std::optional<double> sigma;
    std::optional<double> nu;
    std::optional<double> zeta;
    std::optional<double> rho_bound;
};

TheoreticalConstants theoretical_constants(const Objective& objective);

nlohmann::json to_json(const SpectrumReport& report);
nlohmann::json to_json(const TheoreticalConstants& c);

}  // namespace grawa
