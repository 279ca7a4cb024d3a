#pragma once

#include "grawa/config.hpp"
#include "grawa/flatness.hpp"
#include "grawa/sim_harness.hpp"

#include <nlohmann/json.hpp>

#include <cstdint>
#include <functional>
#include <iosfwd>
#include <map>
#include <optional>
#include <string>
#include <vector>

namespace grawa {

// Upper bound on concurrently executing runs: GRAWA_MAX_PARALLEL when set,
// otherwise the hardware concurrency.
int max_parallel_runs();

// Calls fn(i) for i in [0, n) on up to max_parallel_runs() threads.
void parallel_for(std::size_t n, const std::function<void(std::size_t)>& fn);

// ------------------------------------------------------------- vincent

inline constexpr double kVincentConvergedLoss = -1.99;
inline constexpr long kVincentStepBudget = 5000;

struct VincentProtocol {
    long total_steps = kVincentStepBudget;
    double eta = 0.01;
    int tau = 4;
    double lambda = 0.2;
    double mu = 0.0;
    double easgd_rho = 1.0;
    // Seeds drive the jittered worker interleaving.
    int max_skew = 2;
};

std::vector<LayeredParams> vincent_corner_inits();

struct VincentResult {
    PolicyKind policy = PolicyKind::grawa;
    std::uint64_t seed = 0;
    double center_x = 0.0;
    double center_y = 0.0;
    double center_loss = 0.0;
    std::vector<double> worker_losses;
    double curvature_score = 0.0;
    bool converged = false;
    RunRecord record;
};

VincentResult run_vincent(PolicyKind policy, std::uint64_t seed, const VincentProtocol& protocol = {});

// CSV with one row per (step, worker): step,worker_id,x,y,loss,event
void write_vincent_trajectory(const VincentResult& result, std::ostream& out);

// ------------------------------------------------------------- convex rate

struct ConvexRateOptions {
    RunConfig base;
    int seeds = 10;
    // Fit window is [fit_start * T, T]; 0.1 covers the final decade.
    double fit_start = 0.1;
    int checkpoints = 40;
};

struct ConvexRateReport {
    // Least-squares slope of log E[f - f*] against log t.
    std::optional<double> slope;
    double half_width = 0.0;
    std::vector<double> seed_slopes;
    // Least-squares slope of log E[f - f*] against t (linear-rate probe).
    std::optional<double> semilog_slope;
    bool diverged = false;
    std::vector<std::pair<long, double>> curve;
};

ConvexRateReport convex_rate(const ConvexRateOptions& options);

// Mean suboptimality per local step, averaged over workers, from a run.
std::vector<double> suboptimality_curve(const RunRecord& record, double optimal_value);

nlohmann::json to_json(const ConvexRateReport& report);

// Least-squares slope of ys against xs.
double least_squares_slope(const std::vector<double>& xs, const std::vector<double>& ys);

// ------------------------------------------------------------- flatness

struct FlatnessOptions {
    RunConfig base;
    std::vector<PolicyKind> policies;
    std::vector<std::uint64_t> seeds;
    // Lanczos directions; 0 selects min(dim, 100).
    int spectrum_k = 0;
};

struct FlatnessRow {
    PolicyKind policy = PolicyKind::mgrawa;
    std::uint64_t seed = 0;
    int best_worker = 0;
    double train_error = 0.0;
    double test_error = 0.0;
    double generalization_gap = 0.0;
    double best_full_grad_norm = 0.0;
    double best_frobenius = 0.0;
    double center_train_error = 0.0;
    double center_test_error = 0.0;
    double center_full_grad_norm = 0.0;
    double center_frobenius = 0.0;
};

std::vector<FlatnessRow> flatness_compare(const FlatnessOptions& options);
void write_flatness_csv(const std::vector<FlatnessRow>& rows, std::ostream& out);

// ------------------------------------------------------------- sweep

struct SweepOptions {
    nlohmann::json base;
    // Dotted config key -> candidate values; runs the Cartesian product.
    std::map<std::string, std::vector<nlohmann::json>> grid;
    std::vector<std::uint64_t> seeds{0};
};

struct SweepRow {
    std::map<std::string, nlohmann::json> assignment;
    std::uint64_t seed = 0;
    double final_loss = 0.0;
    double center_loss = 0.0;
    long rounds = 0;
    double comm_cost = 0.0;
    bool aborted = false;
};

SweepOptions parse_sweep(const nlohmann::json& doc);
std::vector<SweepRow> sweep(const SweepOptions& options);
void write_sweep_csv(const std::vector<SweepRow>& rows, std::ostream& out);

}  // namespace grawa
