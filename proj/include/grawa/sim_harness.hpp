#pragma once

#include "grawa/center_policy.hpp"
#include "grawa/local_opt.hpp"
#include "grawa/objective.hpp"

#include <nlohmann/json.hpp>

#include <cstdint>
#include <iosfwd>
#include <optional>
#include <span>
#include <string>
#include <vector>

namespace grawa {

inline constexpr int kRunRecordSchemaVersion = 1;

struct WorkerState {
    int id = 0;
    LayeredParams params;
    OptBuffers opt_buffers;
    // Local steps taken so far.
    long t_m = 0;
    std::optional<ShardStream> shard;
    GradNormProfile last_profile;
    // Running gradient-norm estimate for the Local-GRAWA policies.
    GradNormProfile running_profile;
    long steps_since_round = 0;
    Batch last_batch;
    Rng noise;
};

// True iff sum(t_m) > 0 and M * tau divides sum(t_m).
bool should_communicate(std::span<const long> counters, int workers, int tau);

enum class ScheduleKind { round_robin, jittered };

std::string to_string(ScheduleKind k);
ScheduleKind schedule_kind_from_string(const std::string& s);

struct ScheduleConfig {
    ScheduleKind kind = ScheduleKind::round_robin;
    int max_skew = 0;
    std::uint64_t seed = 0;

    friend bool operator==(const ScheduleConfig&, const ScheduleConfig&) = default;
};

// Chooses which worker takes the next local step. Under `jittered`, the pick
// is uniform among workers that would stay within max_skew steps of the
// slowest one; max_skew = 0 is strict round-robin.
class StepScheduler {
public:
    StepScheduler(int workers, ScheduleConfig config);

    // Next worker given current counters; workers at `cap` are never picked.
    // Returns -1 when every worker is at the cap.
    int next(std::span<const long> counters, long cap);

private:
    int workers_;
    ScheduleConfig config_;
    int cursor_ = 0;
    Rng rng_;
};

// Convenience form of the jittered schedule: the first `steps` picks for
// `workers` workers without a step cap.
std::vector<int> jittered_schedule(int workers, std::uint64_t seed, int max_skew, long steps);

struct CommCostModel {
    double a = 1.0;
    double b = 0.0;
    double round_cost(Eigen::Index total_dim) const { return a + b * static_cast<double>(total_dim); }

    friend bool operator==(const CommCostModel&, const CommCostModel&) = default;
};

struct CommEvent {
    long global_step = 0;
    PolicyKind policy = PolicyKind::mgrawa;
    double simulated_cost = 0.0;
};

struct CommLedger {
    long rounds = 0;
    std::vector<CommEvent> events;
    double total_cost = 0.0;
    // Sum of local steps at the most recent round.
    long steps_at_last_round = 0;
};

struct StepRow {
    long step = 0;
    int worker_id = 0;
    double loss = 0.0;
    double grad_norm = 0.0;
    std::string event;
    // Flattened parameters after the step; filled only when tracing.
    std::vector<double> params;
};

struct CenterSnapshot {
    long round = 0;
    long global_step = 0;
    CenterProvenance provenance = CenterProvenance::initial;
    std::vector<double> params;
    std::vector<std::vector<double>> weights;
};

struct DiagnosticPoint {
    long step = 0;
    // Mean over workers of the squared full-training-set gradient norm.
    double mean_sq_full_grad = 0.0;
};

struct RunMetrics {
    std::vector<double> worker_losses;
    double center_loss = 0.0;
    double consensus_objective = 0.0;
    std::vector<double> final_center;
    double max_worker_spread = 0.0;
};

struct RunRecord {
    PolicyKind policy = PolicyKind::mgrawa;
    int workers = 0;
    long total_steps = 0;
    std::vector<StepRow> rows;
    std::vector<CenterSnapshot> centers;
    std::vector<DiagnosticPoint> diagnostics;
    CommLedger ledger;
    RunMetrics metrics;
    std::vector<LayeredParams> final_params;
    LayeredParams final_center;
    bool aborted = false;
    std::string abort_reason;
    double wall_time_seconds = 0.0;
};

struct RunOptions {
    int batch_size = 32;
    CommCostModel cost;
    // Per-worker starting points; empty means every worker starts from the
    // objective's shared initial model.
    std::vector<LayeredParams> initial_params;
    bool trace_params = false;
    // Full-gradient diagnostic cadence in local steps; 0 disables it.
    long diagnostic_every = 0;
};

// Simulated asynchronous distributed training of `workers` replicas for
// `total_steps` local steps each. Identical inputs give identical records.
RunRecord run(const Objective& objective, int workers, const PolicyConfig& policy, const LocalOptConfig& local,
              const ScheduleConfig& schedule, long total_steps, std::uint64_t seed, const RunOptions& options = {});

void write_trajectory_csv(const RunRecord& record, std::ostream& out);
nlohmann::json summary_json(const RunRecord& record);

struct CsvRow {
    long step = 0;
    int worker_id = 0;
    double loss = 0.0;
    double grad_norm = 0.0;
    std::string event;
};

// Reads a trajectory CSV written by write_trajectory_csv.
std::vector<CsvRow> read_trajectory_csv(std::istream& in);

std::string format_double(double v);

}  // namespace grawa
