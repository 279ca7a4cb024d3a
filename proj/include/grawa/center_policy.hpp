#pragma once

#include "grawa/layered.hpp"
#include "grawa/objective.hpp"

#include <cstddef>
#include <optional>
#include <span>
#include <string>
#include <vector>

namespace grawa {

inline constexpr double kNormFloor = 1e-12;

enum class PolicyKind { grawa, mgrawa, lgrawa, local_mgrawa, local_lgrawa, easgd, lsgd, dp_sgd, dp_sam };

std::string to_string(PolicyKind p);
PolicyKind policy_from_string(const std::string& s);
std::span<const PolicyKind> all_policies();

bool is_data_parallel(PolicyKind p);
bool is_local_grawa(PolicyKind p);
bool uses_shared_batch(PolicyKind p);
// Policies that pull toward a stale center between rounds.
bool applies_proximity(PolicyKind p);

struct PolicyConfig {
    PolicyKind policy = PolicyKind::mgrawa;
    double lambda = 0.5;
    int tau = 4;
    double mu = 0.0;
    // Momentum on gradient-norm scores; 0 disables smoothing.
    double gamma = 0.0;
    double easgd_rho = 1.0;
    double epsilon_norm = kNormFloor;
    // Drops the leading gamma of the running-norm bias correction.
    bool drop_leading_gamma = false;

    void validate() const;
    friend bool operator==(const PolicyConfig&, const PolicyConfig&) = default;
};

// Weights proportional to 1 / norm, summing to one. Norms below `floor` are
// raised to `floor` first.
std::vector<double> grawa_weights(std::span<const double> norms, double floor = kNormFloor);

// Normalizer Theta with beta_i = Theta / a_i, via the reciprocal sum.
double grawa_theta(std::span<const double> norms, double floor = kNormFloor);
// Same quantity through the product form prod(a) / sum_i(prod(a) / a_i).
double grawa_theta_product_form(std::span<const double> norms, double floor = kNormFloor);

struct GradNormProfile {
    std::vector<double> per_layer;
    double model_total = 0.0;
    // Exponential moving average of per_layer (g_mvg).
    std::vector<double> momentum_state;
    long step_count = 0;

    static GradNormProfile from_layer_norms(std::vector<double> norms);
    // Single entry holding the norm of the flattened gradient.
    static GradNormProfile flattened(const LayerStack& gradient);
};

// Per-layer Frobenius norms of the gradient summed over the samples of a
// shared batch (sum taken before the norm).
GradNormProfile accumulate_profile(const Objective& objective, const LayeredParams& params, const Batch& shared_batch,
                                   Rng* noise = nullptr);

// g_mvg <- gamma g_mvg + (1 - gamma) g_cur
// g_est <- gamma g_mvg / (1 - gamma^step)     (leading gamma optional)
// gamma = 0 passes the current profile through unchanged.
GradNormProfile smooth_profile(const GradNormProfile& current, const GradNormProfile& previous, double gamma, long step,
                               bool drop_leading_gamma = false);

enum class CenterProvenance { weighted_average, per_layer_weighted, moving_average, leader_copy, initial };

std::string to_string(CenterProvenance p);

struct CenterVariable {
    LayeredParams params;
    CenterProvenance provenance = CenterProvenance::initial;
    long round_index = 0;
    // Weights used to form the center: one row per layer for per-layer
    // weighting, a single row otherwise.
    std::vector<std::vector<double>> weights;
    std::optional<std::size_t> leader;
};

LayeredParams uniform_mean(std::span<const LayeredParams> workers);

CenterVariable center_mgrawa(std::span<const LayeredParams> workers, std::span<const GradNormProfile> profiles,
                             double floor = kNormFloor);
CenterVariable center_lgrawa(std::span<const LayeredParams> workers, std::span<const GradNormProfile> profiles,
                             double floor = kNormFloor);
CenterVariable center_easgd(std::span<const LayeredParams> workers, const LayeredParams& previous_center, double rho);
// Leader = lowest finite loss, ties to the lowest index.
std::size_t lsgd_leader(std::span<const double> losses);
CenterVariable center_lsgd(std::span<const LayeredParams> workers, std::span<const double> losses);

// x_m <- (1 - lambda) x_m + lambda x_C for every worker.
void pull_update(std::span<LayeredParams> workers, const LayeredParams& center, double lambda);
LayeredParams pull_update(const LayeredParams& worker, const LayeredParams& center, double lambda);

LayeredGradient dp_allreduce(std::span<const LayeredGradient> grads);

}  // namespace grawa
