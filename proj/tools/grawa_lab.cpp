// grawa_lab: command-line front end for the distributed-optimization lab.
//
//   grawa_lab run        --config run.json [--out DIR] [--seed N] [--steps N] [--policy NAME]
//   grawa_lab vincent    [--policy NAME]... [--seed N]... [--steps N] [--out DIR] [--config protocol.json]
//   grawa_lab convex-rate --config rate.json [--out DIR] [--seed N] [--steps N]
//   grawa_lab flatness   --config flatness.json [--policy NAME]... [--seed N]... [--out DIR]
//   grawa_lab sweep      --config sweep.json [--out DIR]
//
// Exit codes: 0 success, 2 configuration error, 3 numeric error.

#include "grawa/config.hpp"
#include "grawa/errors.hpp"
#include "grawa/experiments.hpp"

#include <CLI11.hpp>
#include <nlohmann/json.hpp>

#include <filesystem>
#include <fstream>
#include <iomanip>
#include <iostream>
#include <optional>

namespace fs = std::filesystem;
using nlohmann::json;

namespace {

constexpr int kExitConfig = 2;
constexpr int kExitNumeric = 3;

struct CommonFlags {
    std::string config;
    std::string out;
    std::vector<std::uint64_t> seeds;
    std::vector<std::string> policies;
    std::optional<long> steps;
};

fs::path prepare_out(const std::string& out, const std::string& fallback) {
    fs::path dir = out.empty() ? fs::path(fallback) : fs::path(out);
    std::error_code ec;
    fs::create_directories(dir, ec);
    if (ec) throw grawa::ConfigError("out: cannot create '" + dir.string() + "': " + ec.message());
    return dir;
}

std::ofstream open_out(const fs::path& path) {
    std::ofstream f(path, std::ios::binary);
    if (!f) throw grawa::ConfigError("out: cannot write '" + path.string() + "'");
    return f;
}

void write_json(const fs::path& path, const json& j) { open_out(path) << j.dump(2) << '\n'; }

void write_centers_csv(const grawa::RunRecord& rec, std::ostream& out) {
    out << "round,global_step,provenance,weights,params\n";
    for (const auto& c : rec.centers) {
        out << c.round << ',' << c.global_step << ',' << grawa::to_string(c.provenance) << ',';
        for (std::size_t r = 0; r < c.weights.size(); ++r) {
            if (r) out << '|';
            for (std::size_t i = 0; i < c.weights[r].size(); ++i)
                out << (i ? " " : "") << grawa::format_double(c.weights[r][i]);
        }
        out << ',';
        for (std::size_t i = 0; i < c.params.size(); ++i) out << (i ? " " : "") << grawa::format_double(c.params[i]);
        out << '\n';
    }
}

int cmd_run(const CommonFlags& f) {
    if (f.config.empty()) throw grawa::ConfigError("--config: required for run");
    json doc = grawa::load_json_file(f.config);
    if (!f.seeds.empty()) {
        doc["seed"] = f.seeds.front();
        if (doc.contains("schedule") && doc["schedule"].is_object()) doc["schedule"]["seed"] = f.seeds.front();
    }
    if (f.steps) doc["total_steps"] = *f.steps;
    if (!f.policies.empty()) grawa::set_dotted(doc, "policy.name", f.policies.front());
    const grawa::RunConfig cfg = grawa::parse_run_config(doc);
    const fs::path dir = prepare_out(f.out, cfg.output_dir);

    const auto objective = grawa::make_objective(cfg.objective);
    const grawa::RunRecord rec = grawa::run(*objective, cfg.workers, cfg.policy, cfg.local, cfg.schedule,
                                            cfg.total_steps, cfg.seed, cfg.run_options());
    {
        auto csv = open_out(dir / "trajectory.csv");
        grawa::write_trajectory_csv(rec, csv);
    }
    {
        auto csv = open_out(dir / "centers.csv");
        write_centers_csv(rec, csv);
    }
    json summary = grawa::summary_json(rec);
    summary["config"] = grawa::to_json(cfg);
    write_json(dir / "summary.json", summary);

    std::cout << "policy=" << grawa::to_string(rec.policy) << " rounds=" << rec.ledger.rounds
              << " final_loss=" << summary["final_loss"].get<double>() << " center_loss=" << rec.metrics.center_loss
              << " -> " << dir.string() << '\n';
    if (rec.aborted) {
        std::cerr << "numeric error: " << rec.abort_reason << '\n';
        return kExitNumeric;
    }
    return 0;
}

int cmd_vincent(const CommonFlags& f) {
    grawa::VincentProtocol protocol;
    if (!f.config.empty()) {
        const json doc = grawa::load_json_file(f.config);
        for (auto it = doc.begin(); it != doc.end(); ++it) {
            const std::string& k = it.key();
            try {
                if (k == "lambda") protocol.lambda = it->get<double>();
                else if (k == "mu") protocol.mu = it->get<double>();
                else if (k == "tau") protocol.tau = it->get<int>();
                else if (k == "eta") protocol.eta = it->get<double>();
                else if (k == "easgd_rho") protocol.easgd_rho = it->get<double>();
                else if (k == "max_skew") protocol.max_skew = it->get<int>();
                else if (k == "total_steps") protocol.total_steps = it->get<long>();
                else throw grawa::ConfigError(k + ": unknown key");
            } catch (const json::exception&) {
                throw grawa::ConfigError(k + ": wrong type");
            }
        }
    }
    if (f.steps) protocol.total_steps = *f.steps;

    std::vector<grawa::PolicyKind> policies;
    for (const auto& p : f.policies) policies.push_back(grawa::policy_from_string(p));
    if (policies.empty())
        policies = {grawa::PolicyKind::easgd, grawa::PolicyKind::lsgd, grawa::PolicyKind::grawa,
                    grawa::PolicyKind::mgrawa, grawa::PolicyKind::lgrawa};
    const std::vector<std::uint64_t> seeds = f.seeds.empty() ? std::vector<std::uint64_t>{0, 1, 2} : f.seeds;
    const fs::path dir = prepare_out(f.out, "out/vincent");

    std::vector<grawa::VincentResult> results(policies.size() * seeds.size());
    grawa::parallel_for(results.size(), [&](std::size_t i) {
        results[i] = grawa::run_vincent(policies[i / seeds.size()], seeds[i % seeds.size()], protocol);
    });

    json report = json::array();
    bool all_ok = true;
    std::cout << std::left << std::setw(14) << "policy" << std::setw(6) << "seed" << std::setw(12) << "center_x"
              << std::setw(12) << "center_y" << std::setw(14) << "center_loss" << std::setw(12) << "curvature"
              << "converged\n";
    for (const auto& r : results) {
        auto csv = open_out(dir / ("vincent_" + grawa::to_string(r.policy) + "_seed" + std::to_string(r.seed) + ".csv"));
        grawa::write_vincent_trajectory(r, csv);
        report.push_back({{"policy", grawa::to_string(r.policy)},
                          {"seed", r.seed},
                          {"center", {r.center_x, r.center_y}},
                          {"center_loss", r.center_loss},
                          {"worker_losses", r.worker_losses},
                          {"curvature_score", r.curvature_score},
                          {"rounds", r.record.ledger.rounds},
                          {"converged", r.converged}});
        std::cout << std::setw(14) << grawa::to_string(r.policy) << std::setw(6) << r.seed << std::setw(12)
                  << r.center_x << std::setw(12) << r.center_y << std::setw(14) << r.center_loss << std::setw(12)
                  << r.curvature_score << (r.converged ? "yes" : "no") << '\n';
        if (r.record.aborted) all_ok = false;
    }
    write_json(dir / "vincent_report.json", report);
    return all_ok ? 0 : kExitNumeric;
}

int cmd_convex_rate(const CommonFlags& f) {
    if (f.config.empty()) throw grawa::ConfigError("--config: required for convex-rate");
    json doc = grawa::load_json_file(f.config);
    grawa::ConvexRateOptions options;
    json base = doc;
    if (doc.contains("base")) {
        base = doc["base"];
        for (auto it = doc.begin(); it != doc.end(); ++it) {
            const std::string& k = it.key();
            if (k == "base") continue;
            try {
                if (k == "seeds") options.seeds = it->get<int>();
                else if (k == "fit_start") options.fit_start = it->get<double>();
                else if (k == "checkpoints") options.checkpoints = it->get<int>();
                else throw grawa::ConfigError(k + ": unknown key");
            } catch (const json::exception&) {
                throw grawa::ConfigError(k + ": wrong type");
            }
        }
    }
    if (!f.seeds.empty()) base["seed"] = f.seeds.front();
    if (f.steps) base["total_steps"] = *f.steps;
    options.base = grawa::parse_run_config(base);
    const fs::path dir = prepare_out(f.out, options.base.output_dir);

    const grawa::ConvexRateReport report = grawa::convex_rate(options);
    json j = grawa::to_json(report);
    j["config"] = grawa::to_json(options.base);
    j["seeds"] = options.seeds;
    write_json(dir / "convex_rate.json", j);
    if (report.diverged) {
        std::cerr << "numeric error: run diverged, slope omitted\n";
        return kExitNumeric;
    }
    std::cout << "loglog_slope=" << (report.slope ? *report.slope : std::nan(""))
              << " half_width=" << report.half_width
              << " semilog_slope=" << (report.semilog_slope ? *report.semilog_slope : std::nan("")) << " -> "
              << dir.string() << '\n';
    return 0;
}

int cmd_flatness(const CommonFlags& f) {
    if (f.config.empty()) throw grawa::ConfigError("--config: required for flatness");
    const json doc = grawa::load_json_file(f.config);
    grawa::FlatnessOptions options;
    json base = json::object();
    for (auto it = doc.begin(); it != doc.end(); ++it) {
        const std::string& k = it.key();
        try {
            if (k == "base") base = *it;
            else if (k == "policies")
                for (const auto& p : it->get<std::vector<std::string>>()) options.policies.push_back(grawa::policy_from_string(p));
            else if (k == "seeds") options.seeds = it->get<std::vector<std::uint64_t>>();
            else if (k == "spectrum_k") options.spectrum_k = it->get<int>();
            else throw grawa::ConfigError(k + ": unknown key");
        } catch (const json::exception&) {
            throw grawa::ConfigError(k + ": wrong type");
        }
    }
    if (!f.policies.empty()) {
        options.policies.clear();
        for (const auto& p : f.policies) options.policies.push_back(grawa::policy_from_string(p));
    }
    if (!f.seeds.empty()) options.seeds = f.seeds;
    if (f.steps) base["total_steps"] = *f.steps;
    options.base = grawa::parse_run_config(base);
    const fs::path dir = prepare_out(f.out, options.base.output_dir);

    const auto rows = grawa::flatness_compare(options);
    auto csv = open_out(dir / "flatness.csv");
    grawa::write_flatness_csv(rows, csv);
    grawa::write_flatness_csv(rows, std::cout);
    return 0;
}

int cmd_sweep(const CommonFlags& f) {
    if (f.config.empty()) throw grawa::ConfigError("--config: required for sweep");
    const grawa::SweepOptions options = grawa::parse_sweep(grawa::load_json_file(f.config));
    const fs::path dir = prepare_out(f.out, grawa::parse_run_config(options.base).output_dir);
    const auto rows = grawa::sweep(options);
    auto csv = open_out(dir / "sweep.csv");
    grawa::write_sweep_csv(rows, csv);
    grawa::write_sweep_csv(rows, std::cout);
    for (const auto& r : rows)
        if (r.aborted) return kExitNumeric;
    return 0;
}

void add_common(CLI::App* cmd, CommonFlags& f, bool multi) {
    cmd->add_option("--config", f.config, "JSON configuration file");
    cmd->add_option("--out", f.out, "output directory");
    cmd->add_option("--steps", f.steps, "local steps per worker");
    if (multi) {
        cmd->add_option("--seed", f.seeds, "seed (repeatable)")->take_all();
        cmd->add_option("--policy", f.policies, "policy name (repeatable)")->take_all();
    } else {
        cmd->add_option("--seed", f.seeds, "seed")->expected(1);
        cmd->add_option("--policy", f.policies, "policy name")->expected(1);
    }
}

}  // namespace

int main(int argc, char** argv) {
    CLI::App app{"GRAWA distributed-optimization lab"};
    app.require_subcommand(1);
    CommonFlags flags;
    auto* run = app.add_subcommand("run", "execute one distributed run from a config file");
    auto* vincent = app.add_subcommand("vincent", "Vincent-function protocol across policies and seeds");
    auto* rate = app.add_subcommand("convex-rate", "fit the suboptimality decay rate on a noisy quadratic");
    auto* flat = app.add_subcommand("flatness", "compare flatness and generalization across policies");
    auto* sweep = app.add_subcommand("sweep", "grid sweep over config keys");
    add_common(run, flags, false);
    add_common(vincent, flags, true);
    add_common(rate, flags, false);
    add_common(flat, flags, true);
    add_common(sweep, flags, false);

    try {
        app.parse(argc, argv);
    } catch (const CLI::CallForHelp& e) {
        return app.exit(e);
    } catch (const CLI::ParseError& e) {
        app.exit(e);
        return kExitConfig;
    }

    try {
        if (run->parsed()) return cmd_run(flags);
        if (vincent->parsed()) return cmd_vincent(flags);
        if (rate->parsed()) return cmd_convex_rate(flags);
        if (flat->parsed()) return cmd_flatness(flags);
        if (sweep->parsed()) return cmd_sweep(flags);
    } catch (const grawa::NumericError& e) {
        std::cerr << "numeric error: " << e.what() << '\n';
        return kExitNumeric;
    } catch (const grawa::ConfigError& e) {
        std::cerr << "config error: " << e.what() << '\n';
        return kExitConfig;
    } catch (const grawa::SignatureError& e) {
        std::cerr << "config error: " << e.what() << '\n';
        return kExitConfig;
    } catch (const grawa::DomainError& e) {
        std::cerr << "config error: " << e.what() << '\n';
        return kExitConfig;
    }
    return kExitConfig;
}
