#include "grawa/center_policy.hpp"

#include "grawa/errors.hpp"

#include <algorithm>
#include <array>
#include <cmath>
#include <numeric>

namespace grawa {

namespace {

constexpr std::array<PolicyKind, 9> kPolicies{PolicyKind::grawa,        PolicyKind::mgrawa, PolicyKind::lgrawa,
                                              PolicyKind::local_mgrawa, PolicyKind::local_lgrawa,
                                              PolicyKind::easgd,        PolicyKind::lsgd,   PolicyKind::dp_sgd,
                                              PolicyKind::dp_sam};

std::vector<double> floored(std::span<const double> norms, double floor) {
    if (norms.empty()) throw ConfigError("grawa_weights: empty norm list");
    std::vector<double> a(norms.begin(), norms.end());
    for (double& v : a) {
        if (std::isnan(v) || v < 0.0) throw NumericError("grawa_weights: norms must be >= 0");
        v = std::max(v, floor);
    }
    return a;
}

void require_workers(std::span<const LayeredParams> workers, std::size_t profiles, const char* what) {
    if (workers.empty()) throw ConfigError(std::string(what) + ": no workers");
    if (profiles != workers.size()) throw SignatureError(std::string(what) + ": one profile per worker required");
    for (const auto& w : workers) require_same_signature(workers.front(), w, what);
}

}  // namespace

std::string to_string(PolicyKind p) {
    switch (p) {
        case PolicyKind::grawa: return "grawa";
        case PolicyKind::mgrawa: return "mgrawa";
        case PolicyKind::lgrawa: return "lgrawa";
        case PolicyKind::local_mgrawa: return "local_mgrawa";
        case PolicyKind::local_lgrawa: return "local_lgrawa";
        case PolicyKind::easgd: return "easgd";
        case PolicyKind::lsgd: return "lsgd";
        case PolicyKind::dp_sgd: return "dp_sgd";
        case PolicyKind::dp_sam: return "dp_sam";
    }
    return "?";
}

PolicyKind policy_from_string(const std::string& s) {
    for (PolicyKind p : kPolicies)
        if (to_string(p) == s) return p;
    throw ConfigError("policy: unknown policy '" + s + "'");
}

std::span<const PolicyKind> all_policies() { return kPolicies; }

bool is_data_parallel(PolicyKind p) { return p == PolicyKind::dp_sgd || p == PolicyKind::dp_sam; }

bool is_local_grawa(PolicyKind p) { return p == PolicyKind::local_mgrawa || p == PolicyKind::local_lgrawa; }

bool uses_shared_batch(PolicyKind p) { return p == PolicyKind::mgrawa || p == PolicyKind::lgrawa; }

bool applies_proximity(PolicyKind p) {
    return p == PolicyKind::grawa || p == PolicyKind::mgrawa || p == PolicyKind::lgrawa || p == PolicyKind::lsgd ||
           is_local_grawa(p);
}

void PolicyConfig::validate() const {
    if (!(lambda >= 0.0 && lambda <= 1.0)) throw ConfigError("lambda: must lie in [0, 1]");
    if (tau < 1) throw ConfigError("tau: must be an integer >= 1");
    if (!(mu >= 0.0)) throw ConfigError("mu: must be >= 0");
    if (mu / tau > 1.0) throw ConfigError("mu: mu / tau must lie in [0, 1]");
    if (!(gamma >= 0.0 && gamma < 1.0)) throw ConfigError("gamma: must lie in [0, 1)");
    if (!(easgd_rho >= 0.0 && easgd_rho <= 1.0)) throw ConfigError("easgd_rho: must lie in [0, 1]");
    if (!(epsilon_norm > 0.0)) throw ConfigError("epsilon_norm: must be > 0");
}

std::vector<double> grawa_weights(std::span<const double> norms, double floor) {
    const std::vector<double> a = floored(norms, floor);
    // beta_i = (1/a_i) / sum_j (1/a_j) = 1 / sum_j (a_i / a_j); the ratio
    // form keeps equal norms exactly uniform.
    std::vector<double> beta(a.size());
    for (std::size_t i = 0; i < a.size(); ++i) {
        double s = 0.0;
        for (double aj : a) s += a[i] / aj;
        beta[i] = 1.0 / s;
    }
    return beta;
}

double grawa_theta(std::span<const double> norms, double floor) {
    const std::vector<double> a = floored(norms, floor);
    double s = 0.0;
    for (double v : a) s += 1.0 / v;
    return 1.0 / s;
}

double grawa_theta_product_form(std::span<const double> norms, double floor) {
    const std::vector<double> a = floored(norms, floor);
    const double prod = std::accumulate(a.begin(), a.end(), 1.0, std::multiplies<>());
    double denom = 0.0;
    for (double v : a) denom += prod / v;
    return prod / denom;
}

GradNormProfile GradNormProfile::from_layer_norms(std::vector<double> norms) {
    GradNormProfile p;
    p.per_layer = std::move(norms);
    p.model_total = std::accumulate(p.per_layer.begin(), p.per_layer.end(), 0.0);
    return p;
}

GradNormProfile GradNormProfile::flattened(const LayerStack& gradient) {
    return from_layer_norms({gradient.norm()});
}

GradNormProfile accumulate_profile(const Objective& objective, const LayeredParams& params, const Batch& shared_batch,
                                   Rng* noise) {
    if (shared_batch.size() < 1) throw ConfigError("accumulate_profile: empty batch");
    // grad() returns the batch mean, so G_k = N * mean_k.
    LayeredGradient g = objective.grad(params, shared_batch, noise);
    const auto n = static_cast<double>(shared_batch.size());
    if (shared_batch.size() > 1) g.scale(n);
    if (!g.all_finite()) throw NumericError("accumulate_profile: non-finite accumulated gradient");
    return GradNormProfile::from_layer_norms(g.layer_norms());
}

GradNormProfile smooth_profile(const GradNormProfile& current, const GradNormProfile& previous, double gamma, long step,
                               bool drop_leading_gamma) {
    if (!(gamma >= 0.0 && gamma < 1.0)) throw ConfigError("gamma: must lie in [0, 1)");
    if (step < 1) throw ConfigError("smooth_profile: step must be >= 1");
    if (gamma == 0.0) {
        GradNormProfile out = current;
        out.momentum_state = current.per_layer;
        out.step_count = step;
        return out;
    }
    const std::size_t k = current.per_layer.size();
    std::vector<double> mvg = previous.momentum_state;
    if (mvg.empty()) mvg.assign(k, 0.0);
    if (mvg.size() != k) throw SignatureError("smooth_profile: layer count changed between steps");

    const double correction = 1.0 - std::pow(gamma, static_cast<double>(step));
    const double lead = drop_leading_gamma ? 1.0 : gamma;
    std::vector<double> est(k);
    for (std::size_t i = 0; i < k; ++i) {
        mvg[i] = gamma * mvg[i] + (1.0 - gamma) * current.per_layer[i];
        est[i] = lead * mvg[i] / correction;
    }
    GradNormProfile out = GradNormProfile::from_layer_norms(std::move(est));
    out.momentum_state = std::move(mvg);
    out.step_count = step;
    return out;
}

std::string to_string(CenterProvenance p) {
    switch (p) {
        case CenterProvenance::weighted_average: return "weighted_average";
        case CenterProvenance::per_layer_weighted: return "per_layer_weighted";
        case CenterProvenance::moving_average: return "moving_average";
        case CenterProvenance::leader_copy: return "leader_copy";
        case CenterProvenance::initial: return "initial";
    }
    return "?";
}

LayeredParams uniform_mean(std::span<const LayeredParams> workers) {
    if (workers.empty()) throw ConfigError("uniform_mean: no workers");
    const std::vector<double> w(workers.size(), 1.0 / static_cast<double>(workers.size()));
    return LayeredParams(weighted_sum(workers, w));
}

CenterVariable center_mgrawa(std::span<const LayeredParams> workers, std::span<const GradNormProfile> profiles,
                             double floor) {
    require_workers(workers, profiles.size(), "center_mgrawa");
    std::vector<double> totals;
    totals.reserve(profiles.size());
    for (const auto& p : profiles) totals.push_back(p.model_total);
    std::vector<double> beta = grawa_weights(totals, floor);
    CenterVariable c;
    c.params = LayeredParams(weighted_sum(workers, beta));
    c.provenance = CenterProvenance::weighted_average;
    c.weights = {std::move(beta)};
    return c;
}

CenterVariable center_lgrawa(std::span<const LayeredParams> workers, std::span<const GradNormProfile> profiles,
                             double floor) {
    require_workers(workers, profiles.size(), "center_lgrawa");
    const std::size_t layers = workers.front().layer_count();
    for (const auto& p : profiles)
        if (p.per_layer.size() != layers)
            throw SignatureError("center_lgrawa: profile layer count differs from model layer count");

    CenterVariable c;
    c.params = LayeredParams(LayerStack::zeros(workers.front().signature()));
    c.provenance = CenterProvenance::per_layer_weighted;
    std::vector<double> column(workers.size());
    for (std::size_t k = 0; k < layers; ++k) {
        for (std::size_t m = 0; m < workers.size(); ++m) column[m] = profiles[m].per_layer[k];
        std::vector<double> beta = grawa_weights(column, floor);
        auto& out = c.params.layer(k);
        for (std::size_t m = 0; m < workers.size(); ++m) out += beta[m] * workers[m].layer(k);
        c.weights.push_back(std::move(beta));
    }
    return c;
}

CenterVariable center_easgd(std::span<const LayeredParams> workers, const LayeredParams& previous_center, double rho) {
    if (!(rho >= 0.0 && rho <= 1.0)) throw ConfigError("easgd_rho: must lie in [0, 1]");
    require_workers(workers, workers.size(), "center_easgd");
    require_same_signature(previous_center, workers.front(), "center_easgd");
    CenterVariable c;
    c.params = LayeredParams(lerp(previous_center, uniform_mean(workers), rho));
    c.provenance = CenterProvenance::moving_average;
    c.weights = {std::vector<double>(workers.size(), 1.0 / static_cast<double>(workers.size()))};
    return c;
}

std::size_t lsgd_leader(std::span<const double> losses) {
    std::optional<std::size_t> best;
    for (std::size_t i = 0; i < losses.size(); ++i) {
        if (std::isnan(losses[i])) continue;
        if (!best || losses[i] < losses[*best]) best = i;
    }
    if (!best) throw NumericError("center_lsgd: every worker loss is NaN");
    return *best;
}

CenterVariable center_lsgd(std::span<const LayeredParams> workers, std::span<const double> losses) {
    require_workers(workers, losses.size(), "center_lsgd");
    const std::size_t leader = lsgd_leader(losses);
    CenterVariable c;
    c.params = workers[leader];
    c.provenance = CenterProvenance::leader_copy;
    c.leader = leader;
    std::vector<double> w(workers.size(), 0.0);
    w[leader] = 1.0;
    c.weights = {std::move(w)};
    return c;
}

LayeredParams pull_update(const LayeredParams& worker, const LayeredParams& center, double lambda) {
    if (!(lambda >= 0.0 && lambda <= 1.0)) throw ConfigError("lambda: must lie in [0, 1]");
    require_same_signature(worker, center, "pull_update");
    if (lambda == 0.0) return worker;
    if (lambda == 1.0) return center;
    return LayeredParams(lerp(worker, center, lambda));
}

void pull_update(std::span<LayeredParams> workers, const LayeredParams& center, double lambda) {
    for (auto& w : workers) w = pull_update(w, center, lambda);
}

LayeredGradient dp_allreduce(std::span<const LayeredGradient> grads) {
    if (grads.empty()) throw ConfigError("dp_allreduce: no gradients");
    if (grads.size() == 1) return grads.front();
    LayerStack sum = LayerStack::zeros(grads.front().signature());
    for (const auto& g : grads) sum.axpy(1.0, g);
    sum.scale(1.0 / static_cast<double>(grads.size()));
    return LayeredGradient(std::move(sum), GradientSource::batch_accumulated);
}

}  // namespace grawa
