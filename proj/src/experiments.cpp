#include "grawa/experiments.hpp"

#include "grawa/errors.hpp"

#include <algorithm>
#include <atomic>
#include <cmath>
#include <cstdlib>
#include <mutex>
#include <ostream>
#include <thread>

namespace grawa {

int max_parallel_runs() {
    if (const char* env = std::getenv("GRAWA_MAX_PARALLEL")) {
        try {
            const int v = std::stoi(env);
            if (v >= 1) return v;
        } catch (const std::exception&) {
        }
        throw ConfigError("GRAWA_MAX_PARALLEL: expected a positive integer");
    }
    return std::max(1u, std::thread::hardware_concurrency());
}

void parallel_for(std::size_t n, const std::function<void(std::size_t)>& fn) {
    const std::size_t threads = std::min<std::size_t>(n, static_cast<std::size_t>(max_parallel_runs()));
    if (threads <= 1) {
        for (std::size_t i = 0; i < n; ++i) fn(i);
        return;
    }
    std::atomic<std::size_t> next{0};
    std::exception_ptr failure;
    std::mutex failure_mutex;
    std::vector<std::thread> pool;
    for (std::size_t t = 0; t < threads; ++t) {
        pool.emplace_back([&] {
            for (std::size_t i = next++; i < n; i = next++) {
                try {
                    fn(i);
                } catch (...) {
                    std::lock_guard lock(failure_mutex);
                    if (!failure) failure = std::current_exception();
                }
            }
        });
    }
    for (auto& th : pool) th.join();
    if (failure) std::rethrow_exception(failure);
}

// ------------------------------------------------------------- vincent

std::vector<LayeredParams> vincent_corner_inits() {
    return {Vincent2d::point(0.25, 0.25), Vincent2d::point(0.25, 10.0), Vincent2d::point(10.0, 0.25),
            Vincent2d::point(10.0, 10.0)};
}

VincentResult run_vincent(PolicyKind policy, std::uint64_t seed, const VincentProtocol& protocol) {
    if (is_data_parallel(policy)) throw ConfigError("policy: vincent protocol needs a parameter-sharing policy");
    const Vincent2d objective;
    PolicyConfig pc;
    pc.policy = policy;
    pc.lambda = protocol.lambda;
    pc.tau = protocol.tau;
    pc.mu = protocol.mu;
    pc.easgd_rho = protocol.easgd_rho;
    LocalOptConfig lc;
    lc.eta = protocol.eta;
    ScheduleConfig sc{protocol.max_skew > 0 ? ScheduleKind::jittered : ScheduleKind::round_robin, protocol.max_skew,
                      seed};
    RunOptions options;
    options.batch_size = 1;
    options.initial_params = vincent_corner_inits();
    options.trace_params = true;

    VincentResult r;
    r.policy = policy;
    r.seed = seed;
    r.record = run(objective, 4, pc, lc, sc, protocol.total_steps, seed, options);
    r.center_x = r.record.final_center.layer(0)(0, 0);
    r.center_y = r.record.final_center.layer(1)(0, 0);
    r.center_loss = r.record.metrics.center_loss;
    r.worker_losses = r.record.metrics.worker_losses;
    r.curvature_score = Vincent2d::curvature_score(r.center_x, r.center_y);
    r.converged = !r.record.aborted && r.center_loss <= kVincentConvergedLoss;
    for (double l : r.worker_losses) r.converged = r.converged && l <= kVincentConvergedLoss;
    return r;
}

void write_vincent_trajectory(const VincentResult& result, std::ostream& out) {
    out << "step,worker_id,x,y,loss,event\n";
    for (const auto& row : result.record.rows) {
        const double x = row.params.size() == 2 ? row.params[0] : std::nan("");
        const double y = row.params.size() == 2 ? row.params[1] : std::nan("");
        out << row.step << ',' << row.worker_id << ',' << format_double(x) << ',' << format_double(y) << ','
            << format_double(row.loss) << ',' << row.event << '\n';
    }
}

// ------------------------------------------------------------- convex rate

double least_squares_slope(const std::vector<double>& xs, const std::vector<double>& ys) {
    if (xs.size() != ys.size() || xs.size() < 2) throw ConfigError("least_squares_slope: need >= 2 paired points");
    const double n = static_cast<double>(xs.size());
    double mx = 0.0;
    double my = 0.0;
    for (std::size_t i = 0; i < xs.size(); ++i) {
        mx += xs[i];
        my += ys[i];
    }
    mx /= n;
    my /= n;
    double sxy = 0.0;
    double sxx = 0.0;
    for (std::size_t i = 0; i < xs.size(); ++i) {
        sxy += (xs[i] - mx) * (ys[i] - my);
        sxx += (xs[i] - mx) * (xs[i] - mx);
    }
    if (sxx == 0.0) throw ConfigError("least_squares_slope: degenerate abscissae");
    return sxy / sxx;
}

std::vector<double> suboptimality_curve(const RunRecord& record, double optimal_value) {
    // index t holds the mean suboptimality of the iterates entering step t
    std::vector<double> sum(static_cast<std::size_t>(record.total_steps + 1), 0.0);
    std::vector<int> count(sum.size(), 0);
    for (const auto& row : record.rows) {
        const auto t = static_cast<std::size_t>(row.step);
        if (t >= sum.size()) continue;
        sum[t] += row.loss - optimal_value;
        ++count[t];
    }
    for (std::size_t t = 0; t < sum.size(); ++t) sum[t] = count[t] > 0 ? sum[t] / count[t] : std::nan("");
    return sum;
}

namespace {

struct WindowFit {
    std::vector<long> ts;
    std::vector<double> values;
};

// Log-spaced checkpoints over [start, end], each averaging a +/-2.5% window.
WindowFit windowed(const std::vector<double>& curve, long start, long end, int checkpoints) {
    WindowFit fit;
    const double ls = std::log(static_cast<double>(start));
    const double le = std::log(static_cast<double>(end));
    for (int i = 0; i < checkpoints; ++i) {
        const double frac = checkpoints == 1 ? 1.0 : static_cast<double>(i) / (checkpoints - 1);
        const auto t = static_cast<long>(std::lround(std::exp(ls + frac * (le - ls))));
        const long lo = std::max(start, static_cast<long>(std::floor(t * 0.975)));
        const long hi = std::min(end, static_cast<long>(std::ceil(t * 1.025)));
        double s = 0.0;
        int n = 0;
        for (long u = lo; u <= hi; ++u) {
            const double v = curve[static_cast<std::size_t>(u)];
            if (std::isfinite(v)) {
                s += v;
                ++n;
            }
        }
        if (n == 0) continue;
        if (!fit.ts.empty() && fit.ts.back() == t) continue;
        fit.ts.push_back(t);
        fit.values.push_back(s / n);
    }
    return fit;
}

std::optional<double> loglog_slope(const WindowFit& fit) {
    std::vector<double> xs;
    std::vector<double> ys;
    for (std::size_t i = 0; i < fit.ts.size(); ++i) {
        if (!(fit.values[i] > 0.0)) return std::nullopt;
        xs.push_back(std::log(static_cast<double>(fit.ts[i])));
        ys.push_back(std::log(fit.values[i]));
    }
    if (xs.size() < 2) return std::nullopt;
    return least_squares_slope(xs, ys);
}

std::optional<double> semilog_slope(const WindowFit& fit) {
    std::vector<double> xs;
    std::vector<double> ys;
    for (std::size_t i = 0; i < fit.ts.size(); ++i) {
        if (!(fit.values[i] > 0.0)) return std::nullopt;
        xs.push_back(static_cast<double>(fit.ts[i]));
        ys.push_back(std::log(fit.values[i]));
    }
    if (xs.size() < 2) return std::nullopt;
    return least_squares_slope(xs, ys);
}

RunConfig with_seed(RunConfig config, std::uint64_t seed) {
    config.seed = seed;
    config.schedule.seed = seed;
    return config;
}

}  // namespace

ConvexRateReport convex_rate(const ConvexRateOptions& options) {
    const RunConfig& base = options.base;
    if (base.objective.kind != ObjectiveKind::quadratic)
        throw ConfigError("objective.kind: convex-rate probe needs a quadratic objective");
    if (options.seeds < 1) throw ConfigError("seeds: must be >= 1");
    if (!(options.fit_start > 0.0 && options.fit_start < 1.0)) throw ConfigError("fit_start: must lie in (0, 1)");
    base.validate();

    const auto objective = make_objective(base.objective);
    const double fstar = objective->optimal_value().value_or(0.0);
    const long total = base.total_steps;
    const long start = std::max(1L, static_cast<long>(std::floor(options.fit_start * static_cast<double>(total))));
    if (total < start + 2) throw ConfigError("total_steps: too few steps for a rate fit");

    std::vector<std::vector<double>> curves(static_cast<std::size_t>(options.seeds));
    std::vector<char> aborted(curves.size(), 0);
    parallel_for(curves.size(), [&](std::size_t s) {
        const RunConfig cfg = with_seed(base, base.seed + s);
        const RunRecord rec =
            run(*objective, cfg.workers, cfg.policy, cfg.local, cfg.schedule, cfg.total_steps, cfg.seed, cfg.run_options());
        aborted[s] = rec.aborted ? 1 : 0;
        curves[s] = suboptimality_curve(rec, fstar);
    });

    ConvexRateReport report;
    report.diverged = std::any_of(aborted.begin(), aborted.end(), [](char a) { return a != 0; });
    std::vector<double> mean(static_cast<std::size_t>(total + 1), 0.0);
    for (const auto& c : curves)
        for (std::size_t t = 0; t < mean.size(); ++t) mean[t] += c[t] / static_cast<double>(curves.size());
    for (std::size_t t = 1; t < mean.size(); ++t)
        if (!std::isfinite(mean[t])) report.diverged = true;
    if (report.diverged) return report;

    const WindowFit fit = windowed(mean, start, total, options.checkpoints);
    for (std::size_t i = 0; i < fit.ts.size(); ++i) report.curve.emplace_back(fit.ts[i], fit.values[i]);
    report.slope = loglog_slope(fit);
    report.semilog_slope = semilog_slope(fit);
    for (const auto& c : curves)
        if (auto s = loglog_slope(windowed(c, start, total, options.checkpoints))) report.seed_slopes.push_back(*s);
    if (report.seed_slopes.size() > 1) {
        const double n = static_cast<double>(report.seed_slopes.size());
        double m = 0.0;
        for (double s : report.seed_slopes) m += s / n;
        double var = 0.0;
        for (double s : report.seed_slopes) var += (s - m) * (s - m) / (n - 1.0);
        report.half_width = 1.96 * std::sqrt(var / n);
    }
    return report;
}

nlohmann::json to_json(const ConvexRateReport& report) {
    nlohmann::json j;
    j["slope"] = report.slope ? nlohmann::json(*report.slope) : nlohmann::json(nullptr);
    j["half_width"] = report.half_width;
    j["seed_slopes"] = report.seed_slopes;
    j["semilog_slope"] = report.semilog_slope ? nlohmann::json(*report.semilog_slope) : nlohmann::json(nullptr);
    j["diverged"] = report.diverged;
    nlohmann::json curve = nlohmann::json::array();
    for (const auto& [t, v] : report.curve) curve.push_back({{"t", t}, {"suboptimality", v}});
    j["curve"] = curve;
    return j;
}

// ------------------------------------------------------------- flatness

std::vector<FlatnessRow> flatness_compare(const FlatnessOptions& options) {
    if (options.base.objective.kind != ObjectiveKind::mlp_classifier)
        throw ConfigError("objective.kind: flatness comparison needs an mlp_classifier objective");
    if (options.policies.empty()) throw ConfigError("policies: need at least one policy");
    if (options.seeds.empty()) throw ConfigError("seeds: need at least one seed");
    options.base.validate();

    const auto objective = make_objective(options.base.objective);
    const auto& mlp = dynamic_cast<const MlpClassifier&>(*objective);
    const Dataset& train = *mlp.train_set();
    const Dataset& test = *mlp.test_set();
    const Batch all = train.all();
    const int k = options.spectrum_k > 0 ? options.spectrum_k : default_spectrum_k(objective->total_dim());

    std::vector<FlatnessRow> rows(options.policies.size() * options.seeds.size());
    parallel_for(rows.size(), [&](std::size_t i) {
        const PolicyKind policy = options.policies[i / options.seeds.size()];
        const std::uint64_t seed = options.seeds[i % options.seeds.size()];
        RunConfig cfg = with_seed(options.base, seed);
        cfg.policy.policy = policy;
        const RunRecord rec =
            run(*objective, cfg.workers, cfg.policy, cfg.local, cfg.schedule, cfg.total_steps, cfg.seed, cfg.run_options());
        if (rec.aborted) throw NumericError("flatness: run " + to_string(policy) + " aborted: " + rec.abort_reason);

        FlatnessRow row;
        row.policy = policy;
        row.seed = seed;
        double best = std::numeric_limits<double>::infinity();
        for (std::size_t w = 0; w < rec.final_params.size(); ++w) {
            const double l = objective->eval(rec.final_params[w], all);
            if (l < best) {
                best = l;
                row.best_worker = static_cast<int>(w);
            }
        }
        const LayeredParams& bw = rec.final_params[static_cast<std::size_t>(row.best_worker)];
        row.train_error = mlp.error_percent(bw, train);
        row.test_error = mlp.error_percent(bw, test);
        row.generalization_gap = generalization_gap(row.train_error, row.test_error);
        row.best_full_grad_norm = full_gradient_norm(*objective, bw);
        row.best_frobenius = hessian_spectrum(*objective, bw, k, derive_seed(seed, 0x1a2c)).frobenius_proxy;
        row.center_train_error = mlp.error_percent(rec.final_center, train);
        row.center_test_error = mlp.error_percent(rec.final_center, test);
        row.center_full_grad_norm = full_gradient_norm(*objective, rec.final_center);
        row.center_frobenius =
            hessian_spectrum(*objective, rec.final_center, k, derive_seed(seed, 0x1a2c)).frobenius_proxy;
        rows[i] = row;
    });
    return rows;
}

void write_flatness_csv(const std::vector<FlatnessRow>& rows, std::ostream& out) {
    out << "policy,seed,best_worker,train_error,test_error,generalization_gap,best_full_grad_norm,best_frobenius,"
           "center_train_error,center_test_error,center_full_grad_norm,center_frobenius\n";
    for (const auto& r : rows)
        out << to_string(r.policy) << ',' << r.seed << ',' << r.best_worker << ',' << format_double(r.train_error)
            << ',' << format_double(r.test_error) << ',' << format_double(r.generalization_gap) << ','
            << format_double(r.best_full_grad_norm) << ',' << format_double(r.best_frobenius) << ','
            << format_double(r.center_train_error) << ',' << format_double(r.center_test_error) << ','
            << format_double(r.center_full_grad_norm) << ',' << format_double(r.center_frobenius) << '\n';
}

// ------------------------------------------------------------- sweep

SweepOptions parse_sweep(const nlohmann::json& doc) {
    if (!doc.is_object()) throw ConfigError("sweep: expected a JSON object");
    SweepOptions o;
    for (auto it = doc.begin(); it != doc.end(); ++it) {
        if (it.key() == "base") {
            o.base = it.value();
        } else if (it.key() == "grid") {
            if (!it.value().is_object()) throw ConfigError("grid: expected an object of value lists");
            for (auto g = it.value().begin(); g != it.value().end(); ++g) {
                if (!g.value().is_array() || g.value().empty())
                    throw ConfigError("grid." + g.key() + ": expected a non-empty list");
                o.grid[g.key()] = g.value().get<std::vector<nlohmann::json>>();
            }
        } else if (it.key() == "seeds") {
            try {
                o.seeds = it.value().get<std::vector<std::uint64_t>>();
            } catch (const std::exception&) {
                throw ConfigError("seeds: expected a list of non-negative integers");
            }
        } else {
            throw ConfigError(it.key() + ": unknown key");
        }
    }
    if (o.base.is_null()) o.base = nlohmann::json::object();
    // validates the base and every grid key up front
    parse_run_config(o.base);
    for (const auto& [key, values] : o.grid) {
        nlohmann::json probe = o.base;
        set_dotted(probe, key, values.front());
        parse_run_config(probe);
    }
    return o;
}

std::vector<SweepRow> sweep(const SweepOptions& options) {
    std::vector<std::map<std::string, nlohmann::json>> combos{{}};
    for (const auto& [key, values] : options.grid) {
        std::vector<std::map<std::string, nlohmann::json>> next;
        for (const auto& combo : combos)
            for (const auto& v : values) {
                auto c = combo;
                c[key] = v;
                next.push_back(std::move(c));
            }
        combos = std::move(next);
    }

    std::vector<RunConfig> configs;
    std::vector<SweepRow> rows;
    for (const auto& combo : combos)
        for (std::uint64_t seed : options.seeds) {
            nlohmann::json doc = options.base;
            for (const auto& [key, v] : combo) set_dotted(doc, key, v);
            configs.push_back(with_seed(parse_run_config(doc), seed));
            SweepRow row;
            row.assignment = combo;
            row.seed = seed;
            rows.push_back(std::move(row));
        }

    parallel_for(rows.size(), [&](std::size_t i) {
        const RunConfig& cfg = configs[i];
        const auto objective = make_objective(cfg.objective);
        const RunRecord rec =
            run(*objective, cfg.workers, cfg.policy, cfg.local, cfg.schedule, cfg.total_steps, cfg.seed, cfg.run_options());
        const auto& losses = rec.metrics.worker_losses;
        rows[i].final_loss = losses.empty() ? 0.0 : *std::min_element(losses.begin(), losses.end());
        rows[i].center_loss = rec.metrics.center_loss;
        rows[i].rounds = rec.ledger.rounds;
        rows[i].comm_cost = rec.ledger.total_cost;
        rows[i].aborted = rec.aborted;
    });
    return rows;
}

void write_sweep_csv(const std::vector<SweepRow>& rows, std::ostream& out) {
    std::vector<std::string> keys;
    if (!rows.empty())
        for (const auto& [k, v] : rows.front().assignment) keys.push_back(k);
    for (const auto& k : keys) out << k << ',';
    out << "seed,final_loss,center_loss,rounds,comm_cost,aborted\n";
    for (const auto& r : rows) {
        for (const auto& k : keys) {
            const auto& v = r.assignment.at(k);
            out << (v.is_string() ? v.get<std::string>() : v.dump()) << ',';
        }
        out << r.seed << ',' << format_double(r.final_loss) << ',' << format_double(r.center_loss) << ',' << r.rounds
            << ',' << format_double(r.comm_cost) << ',' << (r.aborted ? 1 : 0) << '\n';
    }
}

}  // namespace grawa
