#pragma once

#include "grawa/center_policy.hpp"
#include "grawa/local_opt.hpp"
#include "grawa/objective.hpp"
#include "grawa/sim_harness.hpp"

#include <nlohmann/json.hpp>

#include <cstdint>
#include <filesystem>
#include <string>

namespace grawa {

// Everything one distributed run needs. Parsed from a JSON document in which
// every key is optional (defaults below) and unknown keys are rejected.
struct RunConfig {
    ObjectiveSpec objective;
    PolicyConfig policy;
    LocalOptConfig local;
    int workers = 4;
    long total_steps = 1000;
    int batch_size = 32;
    ScheduleConfig schedule;
    std::uint64_t seed = 0;
    CommCostModel comm_cost;
    long diagnostic_every = 0;
    std::string output_dir = "out";

    void validate() const;
    RunOptions run_options() const;

    friend bool operator==(const RunConfig&, const RunConfig&) = default;
};

RunConfig parse_run_config(const nlohmann::json& doc);
nlohmann::json to_json(const RunConfig& config);

nlohmann::json load_json_file(const std::filesystem::path& path);
RunConfig load_run_config(const std::filesystem::path& path);

// Sets a dotted key ("policy.lambda") inside a config document.
void set_dotted(nlohmann::json& doc, const std::string& dotted_key, const nlohmann::json& value);

}  // namespace grawa
