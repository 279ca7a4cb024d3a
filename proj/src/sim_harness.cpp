#include "grawa/sim_harness.hpp"

#include "grawa/errors.hpp"

#include <algorithm>
#include <charconv>
#include <chrono>
#include <cmath>
#include <istream>
#include <limits>
#include <numeric>
#include <ostream>
#include <sstream>

namespace grawa {

bool should_communicate(std::span<const long> counters, int workers, int tau) {
    if (workers < 1 || tau < 1) throw ConfigError("should_communicate: workers and tau must be >= 1");
    const long sum = std::accumulate(counters.begin(), counters.end(), 0L);
    return sum > 0 && sum % (static_cast<long>(workers) * tau) == 0;
}

std::string to_string(ScheduleKind k) { return k == ScheduleKind::round_robin ? "round_robin" : "jittered"; }

ScheduleKind schedule_kind_from_string(const std::string& s) {
    if (s == "round_robin") return ScheduleKind::round_robin;
    if (s == "jittered") return ScheduleKind::jittered;
    throw ConfigError("schedule: unknown schedule '" + s + "'");
}

StepScheduler::StepScheduler(int workers, ScheduleConfig config)
    : workers_(workers), config_(config), rng_(derive_seed(config.seed, 0x5c4edu)) {
    if (workers_ < 1) throw ConfigError("workers: must be >= 1");
    if (config_.max_skew < 0) throw ConfigError("max_skew: must be >= 0");
}

int StepScheduler::next(std::span<const long> counters, long cap) {
    if (config_.kind == ScheduleKind::round_robin || config_.max_skew == 0) {
        for (int tries = 0; tries < workers_; ++tries) {
            const int w = cursor_;
            cursor_ = (cursor_ + 1) % workers_;
            if (counters[static_cast<std::size_t>(w)] < cap) return w;
        }
        return -1;
    }
    const long slowest = *std::min_element(counters.begin(), counters.end());
    std::vector<int> eligible;
    for (int w = 0; w < workers_; ++w) {
        const long t = counters[static_cast<std::size_t>(w)];
        if (t < cap && t + 1 - slowest <= config_.max_skew) eligible.push_back(w);
    }
    if (eligible.empty()) return -1;
    std::uniform_int_distribution<std::size_t> pick(0, eligible.size() - 1);
    return eligible[pick(rng_)];
}

std::vector<int> jittered_schedule(int workers, std::uint64_t seed, int max_skew, long steps) {
    StepScheduler scheduler(workers, ScheduleConfig{ScheduleKind::jittered, max_skew, seed});
    std::vector<long> counters(static_cast<std::size_t>(workers), 0);
    std::vector<int> order;
    order.reserve(static_cast<std::size_t>(steps));
    for (long s = 0; s < steps; ++s) {
        const int w = scheduler.next(counters, std::numeric_limits<long>::max());
        order.push_back(w);
        ++counters[static_cast<std::size_t>(w)];
    }
    return order;
}

namespace {

void append_event(std::string& event, const std::string& tag) {
    if (!event.empty()) event += ';';
    event += tag;
}

Batch draw_shared_batch(const Objective& objective, std::uint64_t seed, long round, int batch_size) {
    const Dataset* data = objective.train_set();
    if (data == nullptr) return Batch::placeholder();
    Rng rng(derive_seed(seed, 0x4000u + static_cast<std::uint64_t>(round)));
    std::vector<Eigen::Index> idx(static_cast<std::size_t>(data->size()));
    std::iota(idx.begin(), idx.end(), Eigen::Index{0});
    const std::size_t n = std::min(idx.size(), static_cast<std::size_t>(batch_size));
    // partial Fisher-Yates
    for (std::size_t i = 0; i < n; ++i) {
        std::uniform_int_distribution<std::size_t> pick(i, idx.size() - 1);
        std::swap(idx[i], idx[pick(rng)]);
    }
    idx.resize(n);
    return data->gather(idx);
}

class Simulation {
public:
    Simulation(const Objective& objective, int workers, const PolicyConfig& policy, const LocalOptConfig& local,
               const ScheduleConfig& schedule, long total_steps, std::uint64_t seed, const RunOptions& options)
        : objective_(objective),
          policy_(policy),
          local_(local),
          schedule_(schedule),
          total_steps_(total_steps),
          seed_(seed),
          options_(options),
          full_batch_(objective.full_batch()) {
        if (workers < 1) throw ConfigError("workers: must be >= 1");
        if (total_steps < 0) throw ConfigError("total_steps: must be >= 0");
        if (options.batch_size < 1) throw ConfigError("batch_size: must be >= 1");
        policy_.validate();
        local_.validate();

        record_.policy = policy.policy;
        record_.workers = workers;
        record_.total_steps = total_steps;

        if (!options.initial_params.empty() && static_cast<int>(options.initial_params.size()) != workers)
            throw ConfigError("initial_params: expected one starting point per worker");

        std::vector<ShardStream> shards;
        if (const Dataset* data = objective.train_set()) shards = make_shards(data->size(), workers, derive_seed(seed, 0x3000u));

        const LayeredParams shared = objective.initial_params(derive_seed(seed, 0xa11u));
        for (int m = 0; m < workers; ++m) {
            WorkerState w;
            w.id = m;
            w.params = options.initial_params.empty() ? shared : options.initial_params[static_cast<std::size_t>(m)];
            objective.check_signature(w.params);
            w.opt_buffers = OptBuffers::for_params(w.params);
            if (!shards.empty()) w.shard = std::move(shards[static_cast<std::size_t>(m)]);
            w.noise = Rng(derive_seed(seed, 0x2000u + static_cast<std::uint64_t>(m)));
            w.last_batch = Batch::placeholder();
            workers_.push_back(std::move(w));
        }
        center_.params = options.initial_params.empty() ? shared : uniform_mean(params_view());
        center_.provenance = CenterProvenance::initial;
        next_diagnostic_ = options.diagnostic_every;
    }

    RunRecord execute() {
        const auto start = std::chrono::steady_clock::now();
        try {
            if (is_data_parallel(policy_.policy))
                run_data_parallel();
            else
                run_parameter_sharing();
        } catch (const NumericError& e) {
            record_.aborted = true;
            record_.abort_reason = e.what();
        }
        finish();
        record_.wall_time_seconds =
            std::chrono::duration<double>(std::chrono::steady_clock::now() - start).count();
        return std::move(record_);
    }

private:
    std::vector<LayeredParams> params_view() const {
        std::vector<LayeredParams> out;
        out.reserve(workers_.size());
        for (const auto& w : workers_) out.push_back(w.params);
        return out;
    }

    std::vector<long> counters() const {
        std::vector<long> c;
        c.reserve(workers_.size());
        for (const auto& w : workers_) c.push_back(w.t_m);
        return c;
    }

    Batch next_batch(WorkerState& w) {
        if (w.shard) return w.shard->next_batch(*objective_.train_set(), static_cast<std::size_t>(options_.batch_size));
        return Batch::placeholder();
    }

    double sam_radius() const {
        if (policy_.policy == PolicyKind::dp_sgd) return 0.0;
        return local_.sam_rho;
    }

    StepRow& push_row(const WorkerState& w, double loss, double grad_norm) {
        if (std::isnan(loss) || !std::isfinite(loss))
            throw NumericError("worker " + std::to_string(w.id) + ": non-finite loss at step " + std::to_string(w.t_m));
        record_.rows.push_back(StepRow{w.t_m, w.id, loss, grad_norm, {}, {}});
        return record_.rows.back();
    }

    void trace(StepRow& row, const WorkerState& w) const {
        if (!options_.trace_params) return;
        const Eigen::VectorXd flat = w.params.flatten();
        row.params.assign(flat.data(), flat.data() + flat.size());
    }

    void local_step(WorkerState& w) {
        w.last_batch = next_batch(w);
        SamGradient g = sam_gradient(objective_, w.params, w.last_batch, sam_radius(), &w.noise);

        if (is_local_grawa(policy_.policy)) {
            // Scores come from the plain batch gradient the optimizer sees.
            GradNormProfile current = GradNormProfile::from_layer_norms(g.gradient.layer_norms());
            ++w.steps_since_round;
            w.running_profile = smooth_profile(current, w.running_profile, policy_.gamma, w.steps_since_round,
                                               policy_.drop_leading_gamma);
        }

        w.params = sgd_step(w.params, g.gradient, w.opt_buffers, local_, w.t_m + 1);
        if (applies_proximity(policy_.policy) && policy_.mu > 0.0)
            w.params = proximity_step(w.params, center_.params, policy_.mu, static_cast<double>(policy_.tau));
        objective_.project(w.params);
        if (!w.params.all_finite())
            throw NumericError("worker " + std::to_string(w.id) + ": non-finite parameters");
        ++w.t_m;

        StepRow& row = push_row(w, g.loss, g.raw_grad_norm);
        if (g.ascend_skipped) append_event(row.event, "ascend_skipped");
        trace(row, w);
    }

    void run_parameter_sharing() {
        StepScheduler scheduler(static_cast<int>(workers_.size()), schedule_);
        const int m = static_cast<int>(workers_.size());
        while (true) {
            const auto c = counters();
            const int w = scheduler.next(c, total_steps_);
            if (w < 0) break;
            local_step(workers_[static_cast<std::size_t>(w)]);
            const auto after = counters();
            if (should_communicate(after, m, policy_.tau)) communicate(record_.rows.back());
            maybe_diagnose();
        }
    }

    void run_data_parallel() {
        const double rho = sam_radius();
        std::vector<LayeredGradient> grads(workers_.size());
        for (long step = 0; step < total_steps_; ++step) {
            std::vector<SamGradient> local(workers_.size());
            for (std::size_t i = 0; i < workers_.size(); ++i) {
                auto& w = workers_[i];
                w.last_batch = next_batch(w);
                local[i] = sam_gradient(objective_, w.params, w.last_batch, rho, &w.noise);
                grads[i] = local[i].gradient;
            }
            const LayeredGradient averaged = dp_allreduce(grads);
            for (std::size_t i = 0; i < workers_.size(); ++i) {
                auto& w = workers_[i];
                w.params = sgd_step(w.params, averaged, w.opt_buffers, local_, w.t_m + 1);
                objective_.project(w.params);
                ++w.t_m;
                StepRow& row = push_row(w, local[i].loss, local[i].raw_grad_norm);
                if (local[i].ascend_skipped) append_event(row.event, "ascend_skipped");
                if (i + 1 == workers_.size()) append_event(row.event, "allreduce");
                trace(row, w);
            }
            log_round(workers_.back().t_m * static_cast<long>(workers_.size()));
            center_.params = workers_.front().params;
            center_.round_index = record_.ledger.rounds;
            maybe_diagnose();
        }
    }

    std::vector<GradNormProfile> round_profiles(long round) {
        std::vector<GradNormProfile> profiles;
        profiles.reserve(workers_.size());
        switch (policy_.policy) {
            case PolicyKind::grawa:
                for (auto& w : workers_)
                    profiles.push_back(GradNormProfile::flattened(objective_.grad(w.params, full_batch_, nullptr)));
                break;
            case PolicyKind::mgrawa:
            case PolicyKind::lgrawa: {
                const Batch shared = draw_shared_batch(objective_, seed_, round, options_.batch_size);
                for (auto& w : workers_) {
                    Rng profile_noise(derive_seed(derive_seed(seed_, 0x6000u + static_cast<std::uint64_t>(round)),
                                                  static_cast<std::uint64_t>(w.id)));
                    GradNormProfile p = accumulate_profile(objective_, w.params, shared, &profile_noise);
                    if (policy_.gamma > 0.0)
                        p = smooth_profile(p, w.last_profile, policy_.gamma, round + 1, policy_.drop_leading_gamma);
                    profiles.push_back(std::move(p));
                }
                break;
            }
            case PolicyKind::local_mgrawa:
            case PolicyKind::local_lgrawa:
                for (auto& w : workers_) {
                    if (w.steps_since_round == 0 && w.running_profile.per_layer.empty())
                        w.running_profile = GradNormProfile::from_layer_norms(
                            objective_.grad(w.params, w.last_batch, nullptr).layer_norms());
                    profiles.push_back(w.running_profile);
                }
                break;
            default: break;
        }
        for (std::size_t i = 0; i < profiles.size(); ++i) workers_[i].last_profile = profiles[i];
        return profiles;
    }

    void communicate(StepRow& trigger_row) {
        const long round = record_.ledger.rounds;
        const std::vector<LayeredParams> xs = params_view();
        CenterVariable next;
        switch (policy_.policy) {
            case PolicyKind::grawa:
            case PolicyKind::mgrawa:
            case PolicyKind::local_mgrawa:
                next = center_mgrawa(xs, round_profiles(round), policy_.epsilon_norm);
                break;
            case PolicyKind::lgrawa:
            case PolicyKind::local_lgrawa:
                next = center_lgrawa(xs, round_profiles(round), policy_.epsilon_norm);
                break;
            case PolicyKind::easgd:
                next = center_easgd(xs, center_.params, policy_.easgd_rho);
                break;
            case PolicyKind::lsgd: {
                std::vector<double> losses;
                losses.reserve(workers_.size());
                for (const auto& w : workers_) losses.push_back(objective_.eval(w.params, w.last_batch));
                next = center_lsgd(xs, losses);
                break;
            }
            default: throw ConfigError("communicate: data-parallel policies have no center round");
        }
        next.round_index = round + 1;
        center_ = std::move(next);

        for (auto& w : workers_) {
            w.params = pull_update(w.params, center_.params, policy_.lambda);
            objective_.project(w.params);
            if (is_local_grawa(policy_.policy)) {
                w.running_profile.momentum_state.assign(w.running_profile.per_layer.size(), 0.0);
                w.steps_since_round = 0;
            }
        }

        const auto c = counters();
        log_round(std::accumulate(c.begin(), c.end(), 0L));
        std::string tag = "round:" + std::to_string(center_.round_index);
        if (center_.leader) tag += ";leader=" + std::to_string(*center_.leader);
        append_event(trigger_row.event, tag);

        CenterSnapshot snap;
        snap.round = center_.round_index;
        snap.global_step = record_.ledger.steps_at_last_round;
        snap.provenance = center_.provenance;
        const Eigen::VectorXd flat = center_.params.flatten();
        snap.params.assign(flat.data(), flat.data() + flat.size());
        snap.weights = center_.weights;
        record_.centers.push_back(std::move(snap));
    }

    void log_round(long global_step) {
        auto& ledger = record_.ledger;
        const double cost = options_.cost.round_cost(objective_.total_dim());
        ++ledger.rounds;
        ledger.total_cost += cost;
        ledger.steps_at_last_round = global_step;
        ledger.events.push_back(CommEvent{global_step, policy_.policy, cost});
    }

    void maybe_diagnose() {
        if (options_.diagnostic_every <= 0) return;
        long slowest = workers_.front().t_m;
        for (const auto& w : workers_) slowest = std::min(slowest, w.t_m);
        while (slowest >= next_diagnostic_) {
            double sum = 0.0;
            for (const auto& w : workers_) sum += objective_.grad(w.params, full_batch_, nullptr).squared_norm();
            record_.diagnostics.push_back({next_diagnostic_, sum / static_cast<double>(workers_.size())});
            next_diagnostic_ += options_.diagnostic_every;
        }
    }

    void finish() {
        std::stable_sort(record_.rows.begin(), record_.rows.end(), [](const StepRow& a, const StepRow& b) {
            return a.step != b.step ? a.step < b.step : a.worker_id < b.worker_id;
        });
        auto& metrics = record_.metrics;
        double consensus = 0.0;
        for (const auto& w : workers_) {
            double loss = std::numeric_limits<double>::quiet_NaN();
            try {
                loss = objective_.eval(w.params, full_batch_);
            } catch (const DomainError&) {
            }
            metrics.worker_losses.push_back(loss);
            consensus += loss + 0.5 * policy_.lambda * distance(w.params, center_.params) *
                                    distance(w.params, center_.params);
            record_.final_params.push_back(w.params);
        }
        try {
            metrics.center_loss = objective_.eval(center_.params, full_batch_);
        } catch (const DomainError&) {
            metrics.center_loss = std::numeric_limits<double>::quiet_NaN();
        }
        metrics.consensus_objective = consensus;
        const Eigen::VectorXd flat = center_.params.flatten();
        metrics.final_center.assign(flat.data(), flat.data() + flat.size());
        for (std::size_t i = 0; i < workers_.size(); ++i)
            for (std::size_t j = i + 1; j < workers_.size(); ++j)
                metrics.max_worker_spread =
                    std::max(metrics.max_worker_spread, distance(workers_[i].params, workers_[j].params));
        record_.final_center = center_.params;
    }

    const Objective& objective_;
    PolicyConfig policy_;
    LocalOptConfig local_;
    ScheduleConfig schedule_;
    long total_steps_;
    std::uint64_t seed_;
    RunOptions options_;
    Batch full_batch_;
    std::vector<WorkerState> workers_;
    CenterVariable center_;
    RunRecord record_;
    long next_diagnostic_ = 0;
};

}  // namespace

RunRecord run(const Objective& objective, int workers, const PolicyConfig& policy, const LocalOptConfig& local,
              const ScheduleConfig& schedule, long total_steps, std::uint64_t seed, const RunOptions& options) {
    Simulation sim(objective, workers, policy, local, schedule, total_steps, seed, options);
    return sim.execute();
}

std::string format_double(double v) {
    char buf[64];
    const auto res = std::to_chars(buf, buf + sizeof(buf), v);
    return std::string(buf, res.ptr);
}

void write_trajectory_csv(const RunRecord& record, std::ostream& out) {
    out << "step,worker_id,loss,grad_norm,event\n";
    for (const auto& r : record.rows)
        out << r.step << ',' << r.worker_id << ',' << format_double(r.loss) << ',' << format_double(r.grad_norm) << ','
            << r.event << '\n';
}

nlohmann::json summary_json(const RunRecord& record) {
    nlohmann::json j;
    j["schema_version"] = kRunRecordSchemaVersion;
    j["policy"] = to_string(record.policy);
    j["workers"] = record.workers;
    j["total_steps"] = record.total_steps;
    j["rounds"] = record.ledger.rounds;
    j["simulated_comm_cost"] = record.ledger.total_cost;
    j["final_losses"] = record.metrics.worker_losses;
    j["final_loss"] = record.metrics.worker_losses.empty()
                          ? 0.0
                          : *std::min_element(record.metrics.worker_losses.begin(), record.metrics.worker_losses.end());
    j["center_loss"] = record.metrics.center_loss;
    j["consensus_objective"] = record.metrics.consensus_objective;
    j["max_worker_spread"] = record.metrics.max_worker_spread;
    if (record.metrics.final_center.size() <= 64) j["final_center"] = record.metrics.final_center;
    j["aborted"] = record.aborted;
    if (record.aborted) j["abort_reason"] = record.abort_reason;
    j["wall_time_seconds"] = record.wall_time_seconds;
    return j;
}

std::vector<CsvRow> read_trajectory_csv(std::istream& in) {
    std::string line;
    if (!std::getline(in, line) || line != "step,worker_id,loss,grad_norm,event")
        throw ConfigError("trajectory csv: missing or unexpected header");
    std::vector<CsvRow> rows;
    while (std::getline(in, line)) {
        if (line.empty()) continue;
        std::vector<std::string> cells;
        std::stringstream ss(line);
        std::string cell;
        while (std::getline(ss, cell, ',')) cells.push_back(cell);
        if (line.back() == ',') cells.emplace_back();
        if (cells.size() != 5) throw ConfigError("trajectory csv: expected 5 columns in '" + line + "'");
        CsvRow r;
        r.step = std::stol(cells[0]);
        r.worker_id = std::stoi(cells[1]);
        r.loss = std::stod(cells[2]);
        r.grad_norm = std::stod(cells[3]);
        r.event = cells[4];
        rows.push_back(std::move(r));
    }
    return rows;
}

}  // namespace grawa
