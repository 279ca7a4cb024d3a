#include "doctest.h"

#include "grawa/config.hpp"
#include "grawa/errors.hpp"
#include "grawa/experiments.hpp"

#include <sstream>

using namespace grawa;
using nlohmann::json;

TEST_CASE("defaults parse from an empty document") {
    auto c = parse_run_config(json::object());
    CHECK(c == RunConfig{});
}

TEST_CASE("config round trip") {
    json doc = {{"objective", {{"kind", "mlp_classifier"}, {"seed", 3}, {"mlp", {{"widths", {2, 4, 2}}, {"activation", "relu"}}}}},
                {"policy", {{"name", "lgrawa"}, {"lambda", 0.25}, {"tau", 8}, {"mu", 0.5}, {"gamma", 0.9}}},
                {"local", {{"eta", 0.03}, {"momentum", 0.9}, {"sam_rho", 0.05}}},
                {"workers", 6},
                {"total_steps", 77},
                {"schedule", {{"kind", "jittered"}, {"max_skew", 3}}},
                {"seed", 12}};
    auto a = parse_run_config(doc);
    CHECK(a.policy.policy == PolicyKind::lgrawa);
    CHECK(a.schedule.seed == 12);
    auto b = parse_run_config(to_json(a));
    CHECK(a == b);
    CHECK(to_json(a) == to_json(b));
}

TEST_CASE("lambda out of range names the key") {
    json doc = {{"policy", {{"lambda", 1.5}}}};
    CHECK_THROWS_WITH_AS(parse_run_config(doc), doctest::Contains("lambda"), ConfigError);
}

TEST_CASE("unknown and mistyped keys are rejected") {
    CHECK_THROWS_WITH_AS(parse_run_config(json{{"polcy", {}}}), doctest::Contains("polcy"), ConfigError);
    CHECK_THROWS_WITH_AS(parse_run_config(json{{"policy", {{"lamda", 0.1}}}}), doctest::Contains("policy.lamda"),
                         ConfigError);
    CHECK_THROWS_WITH_AS(parse_run_config(json{{"workers", "four"}}), doctest::Contains("workers"), ConfigError);
    CHECK_THROWS_WITH_AS(parse_run_config(json{{"policy", {{"name", "fedavg"}}}}), doctest::Contains("policy.name"),
                         ConfigError);
    CHECK_THROWS_AS(parse_run_config(json{{"workers", 0}}), ConfigError);
}

TEST_CASE("set_dotted") {
    json doc = json::object();
    set_dotted(doc, "policy.lambda", 0.3);
    set_dotted(doc, "workers", 2);
    CHECK(doc["policy"]["lambda"] == 0.3);
    CHECK(parse_run_config(doc).workers == 2);
}

TEST_CASE("sweep runs the grid") {
    json doc = {{"base", {{"objective", {{"kind", "quadratic"}}}, {"total_steps", 20}, {"workers", 2}}},
                {"grid", {{"policy.tau", {2, 5}}, {"policy.name", {"easgd", "mgrawa"}}}},
                {"seeds", {1, 2}}};
    auto opts = parse_sweep(doc);
    auto rows = sweep(opts);
    CHECK(rows.size() == 8);
    for (const auto& r : rows) CHECK(r.rounds == 20 / r.assignment.at("policy.tau").get<int>());
    std::ostringstream out;
    write_sweep_csv(rows, out);
    CHECK(out.str().find("policy.tau") != std::string::npos);
}

TEST_CASE("least squares slope") {
    std::vector<double> xs{0, 1, 2, 3}, ys{1, 3, 5, 7};
    CHECK(least_squares_slope(xs, ys) == doctest::Approx(2.0));
}

TEST_CASE("linear convergence without noise at constant step") {
    ConvexRateOptions o;
    o.base.objective.kind = ObjectiveKind::quadratic;
    o.base.objective.quadratic.dims = 10;
    o.base.objective.quadratic.min_eig = 1;
    o.base.objective.quadratic.max_eig = 4;
    o.base.policy.policy = PolicyKind::grawa;
    o.base.local.eta = 0.2;
    o.base.total_steps = 200;
    o.seeds = 2;
    auto r = convex_rate(o);
    REQUIRE(r.semilog_slope.has_value());
    CHECK(*r.semilog_slope < 0);
    CHECK_FALSE(r.diverged);
}

TEST_CASE("diverging convex-rate runs are flagged") {
    ConvexRateOptions o;
    o.base.objective.quadratic.dims = 3;
    o.base.objective.quadratic.min_eig = 1;
    o.base.objective.quadratic.max_eig = 4;
    o.base.policy.policy = PolicyKind::grawa;
    o.base.local.eta = 3.0;
    o.base.total_steps = 400;
    o.seeds = 1;
    auto r = convex_rate(o);
    CHECK(r.diverged);
    CHECK_FALSE(r.slope.has_value());
}

TEST_CASE("seeds accept non-negative integers only") {
    CHECK(parse_run_config(json{{"seed", 5}}).seed == 5);
    CHECK(parse_run_config(json::parse(R"({"seed": 18446744073709551615})")).seed == 18446744073709551615ull);
    CHECK_THROWS_WITH_AS(parse_run_config(json{{"seed", -1}}), doctest::Contains("seed"), ConfigError);
}
