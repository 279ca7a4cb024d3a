#include "grawa/flatness.hpp"

#include "grawa/center_policy.hpp"
#include "grawa/errors.hpp"
#include "grawa/objective.hpp"

#include <algorithm>
#include <cmath>
#include <numeric>

namespace grawa {

namespace {

constexpr double kJensenSlack = 1e-10;

Eigen::VectorXd random_unit(Eigen::Index dim, Rng& rng) {
    std::normal_distribution<double> normal;
    Eigen::VectorXd v(dim);
    for (Eigen::Index i = 0; i < dim; ++i) v(i) = normal(rng);
    return v.normalized();
}

// Orthogonalize v against the first `cols` columns of basis, twice.
void reorthogonalize(Eigen::VectorXd& v, const Eigen::MatrixXd& basis, Eigen::Index cols) {
    for (int pass = 0; pass < 2; ++pass) {
        for (Eigen::Index j = 0; j < cols; ++j) v -= basis.col(j).dot(v) * basis.col(j);
    }
}

}  // namespace

double full_gradient_norm(const Objective& objective, const LayeredParams& params) {
    const Batch all = objective.full_batch();
    if (all.size() < 1) throw ConfigError("full_gradient_norm: empty dataset");
    return objective.grad(params, all, nullptr).norm();
}

Eigen::VectorXd hvp(const Objective& objective, const LayeredParams& params, const Eigen::VectorXd& v) {
    objective.check_signature(params);
    if (v.size() != params.total_dim()) throw SignatureError("hvp: direction does not match parameter dimension");
    const double vnorm = v.norm();
    if (vnorm == 0.0) return Eigen::VectorXd::Zero(v.size());
    if (auto h = objective.hessian()) return (*h) * v;

    const ShapeSignature sig = params.signature();
    const Eigen::VectorXd x = params.flatten();
    const double step = 1e-4 * (1.0 + x.norm()) / vnorm;
    const Batch all = objective.full_batch();
    const LayeredParams plus(LayerStack::from_flat(x + step * v, sig));
    const LayeredParams minus(LayerStack::from_flat(x - step * v, sig));
    return (objective.grad(plus, all, nullptr).flatten() - objective.grad(minus, all, nullptr).flatten()) /
           (2.0 * step);
}

int default_spectrum_k(Eigen::Index dim) { return static_cast<int>(std::min<Eigen::Index>(dim, 100)); }

SpectrumReport lanczos_spectrum(const LinearOperator& op, Eigen::Index dim, int k, std::uint64_t seed) {
    if (dim < 1 || k < 1 || k > dim) throw ConfigError("lanczos_spectrum: need 1 <= k <= dim");
    const Eigen::Index steps = std::min<Eigen::Index>(dim, std::max<Eigen::Index>(2 * k, k + 20));

    Rng rng(seed);
    Eigen::MatrixXd basis(dim, steps);
    Eigen::VectorXd alpha = Eigen::VectorXd::Zero(steps);
    Eigen::VectorXd beta = Eigen::VectorXd::Zero(steps);
    SpectrumReport report;

    basis.col(0) = random_unit(dim, rng);
    Eigen::Index built = 0;
    double last_beta = 0.0;
    for (Eigen::Index j = 0; j < steps; ++j) {
        Eigen::VectorXd w = op(basis.col(j));
        if (w.size() != dim) throw SignatureError("lanczos_spectrum: operator output has wrong dimension");
        if (!w.allFinite()) throw NumericError("lanczos_spectrum: operator returned non-finite values");
        alpha(j) = basis.col(j).dot(w);
        w -= alpha(j) * basis.col(j);
        if (j > 0) w -= beta(j - 1) * basis.col(j - 1);
        reorthogonalize(w, basis, j + 1);
        built = j + 1;
        const double b = w.norm();
        last_beta = b;
        if (j + 1 == steps) break;

        const double scale = std::max(1.0, std::abs(alpha(j)) + (j > 0 ? beta(j - 1) : 0.0));
        if (b > 1e-10 * scale) {
            beta(j) = b;
            basis.col(j + 1) = w / b;
            continue;
        }
        // Invariant subspace reached: continue from a fresh orthogonal direction.
        report.breakdown = true;
        beta(j) = 0.0;
        last_beta = 0.0;
        Eigen::VectorXd fresh;
        bool found = false;
        for (int attempt = 0; attempt < 8 && !found; ++attempt) {
            fresh = random_unit(dim, rng);
            reorthogonalize(fresh, basis, j + 1);
            const double n = fresh.norm();
            if (n > 1e-8) {
                fresh /= n;
                found = true;
            }
        }
        if (!found) break;
        basis.col(j + 1) = fresh;
    }

    Eigen::MatrixXd t = Eigen::MatrixXd::Zero(built, built);
    for (Eigen::Index i = 0; i < built; ++i) {
        t(i, i) = alpha(i);
        if (i + 1 < built) t(i, i + 1) = t(i + 1, i) = beta(i);
    }
    Eigen::SelfAdjointEigenSolver<Eigen::MatrixXd> eig(t);
    const Eigen::VectorXd& theta = eig.eigenvalues();
    std::vector<Eigen::Index> order(static_cast<std::size_t>(built));
    std::iota(order.begin(), order.end(), Eigen::Index{0});
    std::stable_sort(order.begin(), order.end(),
                     [&](Eigen::Index a, Eigen::Index b) { return std::abs(theta(a)) > std::abs(theta(b)); });

    const auto take = std::min<std::size_t>(static_cast<std::size_t>(k), order.size());
    double sq = 0.0;
    for (std::size_t i = 0; i < take; ++i) {
        const Eigen::Index idx = order[i];
        report.eigenvalues.push_back(theta(idx));
        report.residuals.push_back(std::abs(last_beta * eig.eigenvectors()(built - 1, idx)));
        sq += theta(idx) * theta(idx);
    }
    report.frobenius_proxy = std::sqrt(sq);
    report.k = static_cast<int>(take);
    report.iterations = static_cast<int>(built);
    return report;
}

SpectrumReport hessian_spectrum(const Objective& objective, const LayeredParams& params, int k, std::uint64_t seed) {
    const Eigen::Index dim = params.total_dim();
    return lanczos_spectrum([&](const Eigen::VectorXd& v) { return hvp(objective, params, v); }, dim, k, seed);
}

double generalization_gap(double train_err_pct, double test_err_pct) {
    auto in_range = [](double v) { return v >= 0.0 && v <= 100.0; };
    if (!in_range(train_err_pct)) throw ConfigError("train_err_pct: must lie in [0, 100]");
    if (!in_range(test_err_pct)) throw ConfigError("test_err_pct: must lie in [0, 100]");
    return test_err_pct - train_err_pct;
}

DominanceReport center_dominance_probe(const Objective& objective, int workers, int trials, std::uint64_t seed,
                                       double spread) {
    if (!objective.is_convex()) throw ConfigError("center_dominance_probe: objective is not convex");
    if (workers < 1) throw ConfigError("workers: must be >= 1");
    if (trials < 1) throw ConfigError("trials: must be >= 1");

    Rng rng(seed);
    std::normal_distribution<double> normal(0.0, spread);
    const ShapeSignature sig = objective.signature();
    const Eigen::Index dim = objective.total_dim();
    const Batch batch = objective.full_batch();

    int dominated = 0;
    int jensen = 0;
    std::vector<LayeredParams> xs(static_cast<std::size_t>(workers));
    std::vector<double> norms(static_cast<std::size_t>(workers));
    std::vector<double> losses(static_cast<std::size_t>(workers));
    for (int trial = 0; trial < trials; ++trial) {
        for (std::size_t i = 0; i < xs.size(); ++i) {
            Eigen::VectorXd v(dim);
            for (Eigen::Index d = 0; d < dim; ++d) v(d) = normal(rng);
            xs[i] = LayeredParams(LayerStack::from_flat(v, sig));
            norms[i] = objective.grad(xs[i], batch, nullptr).norm();
            losses[i] = objective.eval(xs[i], batch);
        }
        const std::vector<double> beta = grawa_weights(norms);
        const LayeredParams center(weighted_sum(xs, beta));
        const double fc = objective.eval(center, batch);
        double mixed = 0.0;
        for (std::size_t i = 0; i < xs.size(); ++i) mixed += beta[i] * losses[i];
        const double best = *std::min_element(losses.begin(), losses.end());
        const double slack = kJensenSlack * std::max(1.0, std::abs(mixed));
        if (fc <= mixed + slack) ++jensen;
        if (fc <= best + slack) ++dominated;
    }
    DominanceReport r;
    r.trials = trials;
    r.dominance_fraction = static_cast<double>(dominated) / trials;
    r.jensen_fraction = static_cast<double>(jensen) / trials;
    return r;
}

TheoreticalConstants theoretical_constants(const Objective& objective) {
    TheoreticalConstants c;
    if (const auto* q = dynamic_cast<const Quadratic*>(&objective)) {
        c.smoothness = q->smoothness();
        c.strong_convexity = q->strong_convexity();
        // Additive Gaussian noise: Var <= sigma^2 * dim with nu = 0.
        c.sigma = q->noise_sigma() * std::sqrt(static_cast<double>(q->matrix().rows()));
        c.nu = 0.0;
    }
    return c;
}

nlohmann::json to_json(const SpectrumReport& report) {
    return nlohmann::json{{"eigenvalues", report.eigenvalues},
                          {"frobenius_proxy", report.frobenius_proxy},
                          {"k", report.k},
                          {"iterations", report.iterations},
                          {"residuals", report.residuals},
                          {"breakdown", report.breakdown}};
}

nlohmann::json to_json(const TheoreticalConstants& c) {
    nlohmann::json j = nlohmann::json::object();
    auto put = [&](const char* key, const std::optional<double>& v) {
        j[key] = v ? nlohmann::json(*v) : nlohmann::json(nullptr);
    };
    put("L", c.smoothness);
    put("m", c.strong_convexity);
    put("mu_spl", c.spl);
    put("k_cone", c.cone_slope);
    put("sigma", c.sigma);
    put("nu", c.nu);
    put("zeta", c.zeta);
    put("rho_bound", c.rho_bound);
    return j;
}

}  // namespace grawa
