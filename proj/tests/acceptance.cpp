// Acceptance suite: one PASS/FAIL line per criterion; exit status 1 if any fail.
#include "grawa/center_policy.hpp"
#include "grawa/config.hpp"
#include "grawa/experiments.hpp"
#include "grawa/flatness.hpp"
#include "grawa/objective.hpp"
#include "grawa/sim_harness.hpp"

#include <Eigen/Dense>

#include <algorithm>
#include <chrono>
#include <cmath>
#include <cstdio>
#include <functional>
#include <numeric>
#include <random>
#include <sstream>
#include <string>
#include <vector>

using namespace grawa;

namespace {

struct Outcome {
    bool pass = false;
    std::string detail;
};

struct Criterion {
    int id;
    const char* name;
    double limit_seconds;
    std::function<Outcome()> body;
};

std::string fmt(const char* f, auto... args) {
    char buf[512];
    std::snprintf(buf, sizeof buf, f, args...);
    return buf;
}

LayeredParams random_params(const ShapeSignature& sig, std::mt19937_64& rng, double scale = 1.0) {
    std::normal_distribution<double> n(0.0, scale);
    std::vector<Eigen::MatrixXd> layers;
    for (const auto& s : sig) {
        Eigen::MatrixXd m(s.rows, s.cols);
        for (Eigen::Index i = 0; i < m.size(); ++i) m.data()[i] = n(rng);
        layers.push_back(m);
    }
    return LayeredParams(std::move(layers));
}

Outcome weight_algebra() {
    std::mt19937_64 rng(1);
    std::uniform_int_distribution<int> count(1, 12);
    std::uniform_real_distribution<double> u(1e-3, 1e3);
    double worst_sum = 0, worst_recip = 0, worst_theta = 0;
    for (int trial = 0; trial < 1000; ++trial) {
        std::vector<double> a(static_cast<std::size_t>(count(rng)));
        for (auto& x : a) x = u(rng);
        const auto w = grawa_weights(a);
        double inv = 0;
        for (double x : a) inv += 1.0 / x;
        worst_sum = std::max(worst_sum, std::abs(std::accumulate(w.begin(), w.end(), 0.0) - 1.0));
        for (std::size_t i = 0; i < a.size(); ++i)
            worst_recip = std::max(worst_recip, std::abs(w[i] - (1.0 / a[i]) / inv));
        worst_theta = std::max(worst_theta, std::abs(grawa_theta(a) - 1.0 / inv));
    }
    return {worst_sum <= 1e-12 && worst_recip <= 1e-12 && worst_theta <= 1e-12,
            fmt("max |sum-1|=%.2e, max |w-recip|=%.2e, max |theta-oracle|=%.2e", worst_sum, worst_recip, worst_theta)};
}

Outcome layer_algebra() {
    std::mt19937_64 rng(2);
    std::uniform_int_distribution<int> count(1, 12);
    std::uniform_real_distribution<double> u(0.01, 10);
    int k1_mismatch = 0, equal_mismatch = 0;
    const int trials = 200;
    for (int trial = 0; trial < trials; ++trial) {
        const int m = count(rng);
        std::vector<LayeredParams> single, multi;
        std::vector<GradNormProfile> single_prof, equal_prof;
        const double shared = u(rng);
        for (int i = 0; i < m; ++i) {
            single.push_back(random_params({{6, 3}}, rng));
            multi.push_back(random_params({{4, 3}, {2, 5}, {1, 1}}, rng));
            single_prof.push_back(GradNormProfile::from_layer_norms({u(rng)}));
            equal_prof.push_back(GradNormProfile::from_layer_norms({shared, shared, shared}));
        }
        if (!(center_lgrawa(single, single_prof).params == center_mgrawa(single, single_prof).params)) ++k1_mismatch;
        const auto mean = uniform_mean(multi);
        if (!(center_lgrawa(multi, equal_prof).params == mean) || !(center_mgrawa(multi, equal_prof).params == mean))
            ++equal_mismatch;
    }
    return {k1_mismatch == 0 && equal_mismatch == 0,
            fmt("K=1 mismatches %d/%d, equal-profile mismatches %d/%d", k1_mismatch, trials, equal_mismatch, trials)};
}

Outcome gradient_correctness() {
    MlpSpec spec;
    spec.widths = {2, 16, 16, 2};
    spec.train_size = 128;
    spec.test_size = 16;
    MlpClassifier mlp(spec, 3);
    std::mt19937_64 rng(3);
    std::uniform_int_distribution<Eigen::Index> pick(0, mlp.train_set()->size() - 1);
    double worst = 0;
    const double h = 1e-5;
    for (int draw = 0; draw < 20; ++draw) {
        const auto x = random_params(mlp.signature(), rng, 0.5);
        std::vector<Eigen::Index> idx(16);
        for (auto& i : idx) i = pick(rng);
        const Batch b = mlp.train_set()->gather(idx);
        const Eigen::VectorXd g = mlp.grad(x, b).flatten();
        const Eigen::VectorXd flat = x.flatten();
        const auto sig = x.signature();
        for (Eigen::Index i = 0; i < flat.size(); ++i) {
            Eigen::VectorXd p = flat, m = flat;
            p(i) += h;
            m(i) -= h;
            const double fd = (mlp.eval(LayeredParams(LayerStack::from_flat(p, sig)), b) -
                               mlp.eval(LayeredParams(LayerStack::from_flat(m, sig)), b)) /
                              (2 * h);
            // relative error with a 1e-4 floor on the scale
            const double err = std::abs(g(i) - fd) / std::max({std::abs(g(i)), std::abs(fd), 1e-4});
            worst = std::max(worst, err);
        }
    }
    return {worst < 1e-5, fmt("max per-coordinate relative error %.2e over 20 draws", worst)};
}

Outcome vincent_replication() {
    const std::vector<PolicyKind> policies{PolicyKind::easgd, PolicyKind::lsgd, PolicyKind::grawa, PolicyKind::mgrawa,
                                           PolicyKind::lgrawa};
    const std::vector<std::uint64_t> seeds{0, 1, 2};
    std::vector<VincentResult> results(policies.size() * seeds.size());
    parallel_for(results.size(), [&](std::size_t i) {
        results[i] = run_vincent(policies[i / seeds.size()], seeds[i % seeds.size()]);
        results[i].record.rows.clear();
    });
    auto at = [&](std::size_t p, std::size_t s) -> const VincentResult& { return results[p * seeds.size() + s]; };

    bool all_converged = true;
    std::string detail;
    for (std::size_t p = 0; p < policies.size(); ++p) {
        int ok = 0;
        for (std::size_t s = 0; s < seeds.size(); ++s) ok += at(p, s).converged;
        all_converged &= ok == static_cast<int>(seeds.size());
        detail += fmt("%s %d/3 ", to_string(policies[p]).c_str(), ok);
    }
    bool flatter = true;
    for (std::size_t p = 2; p < policies.size(); ++p) {
        int wins = 0;
        for (std::size_t s = 0; s < seeds.size(); ++s) wins += at(p, s).curvature_score < at(1, s).curvature_score;
        flatter &= wins >= 2;
        detail += fmt("| %s flatter than lsgd on %d/3 ", to_string(policies[p]).c_str(), wins);
    }
    return {all_converged && flatter, detail};
}

Outcome convex_rate_probe() {
    ConvexRateOptions o;
    o.base.objective.kind = ObjectiveKind::quadratic;
    o.base.objective.seed = 7;
    o.base.objective.quadratic.dims = 10;
    o.base.objective.quadratic.min_eig = 1;
    o.base.objective.quadratic.max_eig = 4;
    o.base.objective.quadratic.rotate = true;
    o.base.objective.quadratic.noise_sigma = 0.1;
    o.base.policy.policy = PolicyKind::grawa;
    o.base.policy.lambda = 0.5;
    o.base.policy.tau = 4;
    o.base.local.lr_schedule = LrSchedule::inverse_t;
    o.base.local.lr_c = 2.0;
    o.base.local.lr_offset = 10.0;
    o.base.workers = 4;
    o.base.total_steps = 20000;
    o.base.seed = 1;
    o.seeds = 10;
    const auto r = convex_rate(o);
    if (!r.slope) return {false, "run diverged, no slope"};
    return {*r.slope >= -1.3 && *r.slope <= -0.7,
            fmt("log-log slope %.3f +/- %.3f (10 seeds), target [-1.3, -0.7]", *r.slope, r.half_width)};
}

Outcome jensen_dominance() {
    Quadratic identity(Eigen::MatrixXd::Identity(10, 10));
    QuadraticSpec spec;
    spec.dims = 10;
    spec.min_eig = 0.1;
    spec.max_eig = 10;
    spec.rotate = true;
    Quadratic rotated(spec, 5);
    const auto a = center_dominance_probe(identity, 4, 10000, 1);
    const auto b = center_dominance_probe(rotated, 4, 10000, 2);
    return {a.jensen_fraction == 1.0 && b.jensen_fraction == 1.0,
            fmt("jensen fraction %.4f (A=I), %.4f (rotated, cond 100); dominance fraction %.4f / %.4f",
                a.jensen_fraction, b.jensen_fraction, a.dominance_fraction, b.dominance_fraction)};
}

Outcome nonconvex_diagnostic() {
    bool ok = true;
    std::string detail;
    for (std::uint64_t seed : {1, 2, 3}) {
        RunConfig c;
        c.objective.kind = ObjectiveKind::mlp_classifier;
        c.objective.seed = seed;
        c.objective.mlp.widths = {2, 16, 16, 2};
        c.policy.policy = PolicyKind::mgrawa;
        c.policy.lambda = 0.5;
        c.policy.tau = 4;
        c.local.eta = 0.005;
        c.workers = 4;
        c.batch_size = 32;
        c.total_steps = 4000;
        c.diagnostic_every = 40;
        c.seed = seed;
        auto obj = make_objective(c.objective);
        const auto r = run(*obj, c.workers, c.policy, c.local, c.schedule, c.total_steps, c.seed, c.run_options());
        if (r.aborted || r.diagnostics.empty()) return {false, "run aborted"};
        std::vector<double> avg;
        double sum = 0;
        bool finite = true;
        for (const auto& d : r.diagnostics) {
            finite &= std::isfinite(d.mean_sq_full_grad);
            sum += d.mean_sq_full_grad;
            avg.push_back(sum / static_cast<double>(avg.size() + 1));
        }
        const std::size_t start = avg.size() / 2;
        int rises = 0;
        for (std::size_t i = start + 1; i < avg.size(); ++i) rises += avg[i] > avg[i - 1];
        ok &= finite && rises == 0;
        detail += fmt("seed %d: %.4g -> %.4g, %d increases; ", static_cast<int>(seed), avg[start], avg.back(), rises);
    }
    return {ok, detail + "eta 0.005, 100 checkpoints, last half"};
}

Outcome lanczos_fidelity() {
    std::mt19937_64 rng(8);
    std::normal_distribution<double> n;
    double worst_ritz = 0, worst_frob = 0;
    for (int trial = 0; trial < 50; ++trial) {
        Eigen::MatrixXd m(10, 10);
        for (Eigen::Index i = 0; i < m.size(); ++i) m.data()[i] = n(rng);
        const Eigen::MatrixXd a = 0.5 * (m + m.transpose());
        Eigen::SelfAdjointEigenSolver<Eigen::MatrixXd> es(a);
        std::vector<double> want(es.eigenvalues().data(), es.eigenvalues().data() + 10);
        std::sort(want.begin(), want.end(), [](double x, double y) { return std::abs(x) > std::abs(y); });
        const auto r = lanczos_spectrum([&](const Eigen::VectorXd& v) -> Eigen::VectorXd { return a * v; }, 10, 10,
                                        static_cast<std::uint64_t>(trial));
        for (int i = 0; i < 10; ++i) worst_ritz = std::max(worst_ritz, std::abs(r.eigenvalues[i] - want[i]));
        worst_frob = std::max(worst_frob, std::abs(r.frobenius_proxy - a.norm()));
    }
    return {worst_ritz <= 1e-6 && worst_frob <= 1e-6,
            fmt("max Ritz error %.2e, max Frobenius error %.2e (50 operators)", worst_ritz, worst_frob)};
}

Outcome communication_accounting() {
    QuadraticSpec spec;
    spec.dims = 10;
    spec.noise_sigma = 0.1;
    Quadratic q(spec, 1);
    LocalOptConfig local;
    local.eta = 0.05;
    const long steps = 1024;
    auto rounds = [&](PolicyKind kind, int tau) {
        PolicyConfig p;
        p.policy = kind;
        p.tau = tau;
        return run(q, 4, p, local, {ScheduleKind::jittered, 2, 1}, steps, 1).ledger.rounds;
    };
    bool ok = true;
    std::string detail;
    for (auto g : {PolicyKind::mgrawa, PolicyKind::lgrawa})
        for (int tg : {16, 32})
            for (auto b : {PolicyKind::easgd, PolicyKind::lsgd})
                for (int tb : {4, 8, 16}) {
                    const long rg = rounds(g, tg), rb = rounds(b, tb);
                    if (!(rg < rb)) {
                        ok = false;
                        detail += fmt("%s@%d=%ld !< %s@%d=%ld; ", to_string(g).c_str(), tg, rg, to_string(b).c_str(),
                                      tb, rb);
                    }
                }
    detail += fmt("rounds at T=%ld: tau 4->%ld, 8->%ld, 16->%ld, 32->%ld", steps, rounds(PolicyKind::easgd, 4),
                  rounds(PolicyKind::easgd, 8), rounds(PolicyKind::mgrawa, 16), rounds(PolicyKind::mgrawa, 32));
    return {ok, detail};
}

Outcome determinism() {
    std::vector<RunConfig> configs;
    RunConfig mlp;
    mlp.objective.kind = ObjectiveKind::mlp_classifier;
    mlp.policy.policy = PolicyKind::lgrawa;
    mlp.policy.mu = 0.5;
    mlp.local.eta = 0.05;
    mlp.local.momentum = 0.9;
    mlp.schedule = {ScheduleKind::jittered, 3, 4};
    mlp.total_steps = 300;
    configs.push_back(mlp);
    RunConfig quad;
    quad.objective.quadratic = {10, {}, 1, 4, true, 0.1};
    for (auto p : all_policies()) {
        quad.policy.policy = p;
        quad.local.sam_rho = p == PolicyKind::dp_sam ? 0.05 : 0.0;
        quad.schedule = {ScheduleKind::jittered, 2, 9};
        quad.total_steps = 200;
        configs.push_back(quad);
    }
    int identical = 0;
    for (const auto& c : configs) {
        std::string out[2];
        for (auto& s : out) {
            auto obj = make_objective(c.objective);
            std::ostringstream os;
            write_trajectory_csv(run(*obj, c.workers, c.policy, c.local, c.schedule, c.total_steps, c.seed,
                                     c.run_options()),
                                 os);
            s = os.str();
        }
        identical += out[0] == out[1] && !out[0].empty();
    }
    std::ostringstream v[2];
    for (auto& os : v) write_vincent_trajectory(run_vincent(PolicyKind::lgrawa, 5), os);
    identical += v[0].str() == v[1].str();
    const int total = static_cast<int>(configs.size()) + 1;
    return {identical == total, fmt("%d/%d repeated runs byte-identical", identical, total)};
}

}  // namespace

int main() {
    const std::vector<Criterion> criteria{
        {1, "weight algebra", 1, weight_algebra},
        {2, "layer algebra", 1, layer_algebra},
        {3, "gradient correctness", 10, gradient_correctness},
        {4, "vincent replication", 30, vincent_replication},
        {5, "convex rate", 60, convex_rate_probe},
        {6, "jensen dominance", 10, jensen_dominance},
        {7, "non-convex diagnostic", 120, nonconvex_diagnostic},
        {8, "lanczos fidelity", 1, lanczos_fidelity},
        {9, "communication accounting", 5, communication_accounting},
        {10, "determinism", 60, determinism},
    };
    int failed = 0;
    for (const auto& c : criteria) {
        const auto t0 = std::chrono::steady_clock::now();
        Outcome o;
        try {
            o = c.body();
        } catch (const std::exception& e) {
            o = {false, std::string("exception: ") + e.what()};
        }
        const double secs = std::chrono::duration<double>(std::chrono::steady_clock::now() - t0).count();
        const bool in_time = secs < c.limit_seconds;
        const bool pass = o.pass && in_time;
        failed += !pass;
        std::printf("%s  [%2d] %-26s %7.2fs (limit %gs%s)  %s\n", pass ? "PASS" : "FAIL", c.id, c.name, secs,
                    c.limit_seconds, in_time ? "" : ", exceeded", o.detail.c_str());
        std::fflush(stdout);
    }
    std::printf("%d/%zu criteria passed\n", static_cast<int>(criteria.size()) - failed, criteria.size());
    return failed == 0 ? 0 : 1;
}
