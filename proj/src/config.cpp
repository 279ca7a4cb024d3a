#include "grawa/config.hpp"

#include "grawa/errors.hpp"

#include <fstream>
#include <set>
#include <sstream>

namespace grawa {

namespace {

using nlohmann::json;

// Reads typed fields out of one JSON object and remembers which keys were
// consumed, so leftovers can be reported as unknown.
class FieldReader {
public:
    FieldReader(const json& obj, std::string path) : obj_(obj), path_(std::move(path)) {
        if (!obj_.is_object()) throw ConfigError(name("") + ": expected a JSON object");
    }

    template <typename T>
    void read(const char* key, T& out) {
        seen_.insert(key);
        auto it = obj_.find(key);
        if (it == obj_.end()) return;
        try {
            if constexpr (std::is_same_v<T, bool>) {
                if (!it->is_boolean()) throw ConfigError("");
            } else if constexpr (std::is_integral_v<T>) {
                if (!it->is_number_integer()) throw ConfigError("");
                if constexpr (std::is_unsigned_v<T>) {
                    if (!it->is_number_unsigned() && it->get<long long>() < 0) throw ConfigError("");
                }
            } else if constexpr (std::is_floating_point_v<T>) {
                if (!it->is_number()) throw ConfigError("");
            } else if constexpr (std::is_same_v<T, std::string>) {
                if (!it->is_string()) throw ConfigError("");
            }
            out = it->get<T>();
        } catch (const std::exception&) {
            throw ConfigError(name(key) + ": wrong type (" + it->dump() + ")");
        }
    }

    const json* child(const char* key) {
        seen_.insert(key);
        auto it = obj_.find(key);
        return it == obj_.end() ? nullptr : &*it;
    }

    std::string name(const std::string& key) const {
        if (path_.empty()) return key;
        return key.empty() ? path_ : path_ + "." + key;
    }

    void finish() const {
        for (auto it = obj_.begin(); it != obj_.end(); ++it)
            if (!seen_.contains(it.key())) throw ConfigError(name(it.key()) + ": unknown key");
    }

private:
    const json& obj_;
    std::string path_;
    std::set<std::string> seen_;
};

template <typename Enum, typename Parse>
void read_enum(FieldReader& r, const char* key, Enum& out, Parse parse) {
    std::string s;
    bool present = false;
    if (const json* node = r.child(key)) {
        if (!node->is_string()) throw ConfigError(r.name(key) + ": expected a string");
        s = node->get<std::string>();
        present = true;
    }
    if (!present) return;
    try {
        out = parse(s);
    } catch (const ConfigError&) {
        throw ConfigError(r.name(key) + ": unknown value '" + s + "'");
    }
}

QuadraticSpec parse_quadratic(const json& j) {
    FieldReader r(j, "objective.quadratic");
    QuadraticSpec q;
    r.read("dims", q.dims);
    r.read("eigenvalues", q.eigenvalues);
    r.read("min_eig", q.min_eig);
    r.read("max_eig", q.max_eig);
    r.read("rotate", q.rotate);
    r.read("noise_sigma", q.noise_sigma);
    r.finish();
    return q;
}

MlpSpec parse_mlp(const json& j) {
    FieldReader r(j, "objective.mlp");
    MlpSpec m;
    r.read("widths", m.widths);
    read_enum(r, "activation", m.activation, activation_from_string);
    read_enum(r, "dataset", m.dataset, dataset_kind_from_string);
    r.read("train_size", m.train_size);
    r.read("test_size", m.test_size);
    r.read("input_noise", m.input_noise);
    r.read("init_scale", m.init_scale);
    r.finish();
    return m;
}

ObjectiveSpec parse_objective(const json& j) {
    FieldReader r(j, "objective");
    ObjectiveSpec o;
    read_enum(r, "kind", o.kind, objective_kind_from_string);
    r.read("seed", o.seed);
    if (const json* q = r.child("quadratic")) o.quadratic = parse_quadratic(*q);
    if (const json* m = r.child("mlp")) o.mlp = parse_mlp(*m);
    r.finish();
    return o;
}

PolicyConfig parse_policy(const json& j) {
    FieldReader r(j, "policy");
    PolicyConfig p;
    read_enum(r, "name", p.policy, policy_from_string);
    r.read("lambda", p.lambda);
    r.read("tau", p.tau);
    r.read("mu", p.mu);
    r.read("gamma", p.gamma);
    r.read("easgd_rho", p.easgd_rho);
    r.read("epsilon_norm", p.epsilon_norm);
    r.read("drop_leading_gamma", p.drop_leading_gamma);
    r.finish();
    return p;
}

LocalOptConfig parse_local(const json& j) {
    FieldReader r(j, "local");
    LocalOptConfig l;
    r.read("eta", l.eta);
    r.read("momentum", l.momentum);
    r.read("nesterov", l.nesterov);
    r.read("weight_decay", l.weight_decay);
    r.read("sam_rho", l.sam_rho);
    read_enum(r, "lr_schedule", l.lr_schedule, lr_schedule_from_string);
    r.read("lr_c", l.lr_c);
    r.read("lr_offset", l.lr_offset);
    r.finish();
    return l;
}

// Validation failures name the offending key with its config path.
template <typename F>
void validate_section(const char* section, F&& check) {
    try {
        check();
    } catch (const ConfigError& e) {
        throw ConfigError(std::string(section) + "." + e.what());
    }
}

}  // namespace

void RunConfig::validate() const {
    validate_section("policy", [&] { policy.validate(); });
    validate_section("local", [&] { local.validate(); });
    if (workers < 1) throw ConfigError("workers: must be >= 1");
    if (total_steps < 0) throw ConfigError("total_steps: must be >= 0");
    if (batch_size < 1) throw ConfigError("batch_size: must be >= 1");
    if (schedule.max_skew < 0) throw ConfigError("schedule.max_skew: must be >= 0");
    if (diagnostic_every < 0) throw ConfigError("diagnostic_every: must be >= 0");
    if (objective.kind == ObjectiveKind::quadratic && objective.quadratic.dims < 1)
        throw ConfigError("objective.quadratic.dims: must be >= 1");
    if (objective.kind == ObjectiveKind::mlp_classifier && objective.mlp.train_size < workers)
        throw ConfigError("objective.mlp.train_size: dataset smaller than worker count");
}

RunOptions RunConfig::run_options() const {
    RunOptions o;
    o.batch_size = batch_size;
    o.cost = comm_cost;
    o.diagnostic_every = diagnostic_every;
    return o;
}

RunConfig parse_run_config(const json& doc) {
    FieldReader r(doc, "");
    RunConfig c;
    if (const json* o = r.child("objective")) c.objective = parse_objective(*o);
    if (const json* p = r.child("policy")) c.policy = parse_policy(*p);
    if (const json* l = r.child("local")) c.local = parse_local(*l);
    r.read("workers", c.workers);
    r.read("total_steps", c.total_steps);
    r.read("batch_size", c.batch_size);
    r.read("seed", c.seed);
    c.schedule.seed = c.seed;
    if (const json* s = r.child("schedule")) {
        FieldReader sr(*s, "schedule");
        read_enum(sr, "kind", c.schedule.kind, schedule_kind_from_string);
        sr.read("max_skew", c.schedule.max_skew);
        sr.read("seed", c.schedule.seed);
        sr.finish();
    }
    if (const json* cc = r.child("comm_cost")) {
        FieldReader cr(*cc, "comm_cost");
        cr.read("a", c.comm_cost.a);
        cr.read("b", c.comm_cost.b);
        cr.finish();
    }
    r.read("diagnostic_every", c.diagnostic_every);
    r.read("output_dir", c.output_dir);
    r.finish();
    c.validate();
    return c;
}

json to_json(const RunConfig& c) {
    json objective = {{"kind", to_string(c.objective.kind)}, {"seed", c.objective.seed}};
    const auto& q = c.objective.quadratic;
    objective["quadratic"] = {{"dims", q.dims},       {"eigenvalues", q.eigenvalues}, {"min_eig", q.min_eig},
                              {"max_eig", q.max_eig}, {"rotate", q.rotate},           {"noise_sigma", q.noise_sigma}};
    const auto& m = c.objective.mlp;
    objective["mlp"] = {{"widths", m.widths},
                        {"activation", to_string(m.activation)},
                        {"dataset", to_string(m.dataset)},
                        {"train_size", m.train_size},
                        {"test_size", m.test_size},
                        {"input_noise", m.input_noise},
                        {"init_scale", m.init_scale}};
    const auto& p = c.policy;
    const auto& l = c.local;
    return json{{"objective", objective},
                {"policy",
                 {{"name", to_string(p.policy)},
                  {"lambda", p.lambda},
                  {"tau", p.tau},
                  {"mu", p.mu},
                  {"gamma", p.gamma},
                  {"easgd_rho", p.easgd_rho},
                  {"epsilon_norm", p.epsilon_norm},
                  {"drop_leading_gamma", p.drop_leading_gamma}}},
                {"local",
                 {{"eta", l.eta},
                  {"momentum", l.momentum},
                  {"nesterov", l.nesterov},
                  {"weight_decay", l.weight_decay},
                  {"sam_rho", l.sam_rho},
                  {"lr_schedule", to_string(l.lr_schedule)},
                  {"lr_c", l.lr_c},
                  {"lr_offset", l.lr_offset}}},
                {"workers", c.workers},
                {"total_steps", c.total_steps},
                {"batch_size", c.batch_size},
                {"seed", c.seed},
                {"schedule",
                 {{"kind", to_string(c.schedule.kind)}, {"max_skew", c.schedule.max_skew}, {"seed", c.schedule.seed}}},
                {"comm_cost", {{"a", c.comm_cost.a}, {"b", c.comm_cost.b}}},
                {"diagnostic_every", c.diagnostic_every},
                {"output_dir", c.output_dir}};
}

json load_json_file(const std::filesystem::path& path) {
    std::ifstream in(path);
    if (!in) throw ConfigError("config: cannot open '" + path.string() + "'");
    try {
        return json::parse(in);
    } catch (const json::parse_error& e) {
        throw ConfigError("config: parse error in '" + path.string() + "': " + e.what());
    }
}

RunConfig load_run_config(const std::filesystem::path& path) { return parse_run_config(load_json_file(path)); }

void set_dotted(json& doc, const std::string& dotted_key, const json& value) {
    json* node = &doc;
    std::stringstream ss(dotted_key);
    std::string part;
    std::vector<std::string> parts;
    while (std::getline(ss, part, '.')) parts.push_back(part);
    if (parts.empty()) throw ConfigError("grid: empty key");
    for (std::size_t i = 0; i + 1 < parts.size(); ++i) {
        if (!node->is_object()) throw ConfigError(dotted_key + ": path crosses a non-object value");
        node = &(*node)[parts[i]];
        if (node->is_null()) *node = json::object();
    }
    (*node)[parts.back()] = value;
}

}  // namespace grawa
