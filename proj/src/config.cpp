#include "ttsenkf/config.hpp"

#include <cstdio>
#include <filesystem>
#include <fstream>
#include <set>
#include <sstream>

#include "json.hpp"

namespace ttsenkf {

using nlohmann::json;

namespace {

// Walks one section, remembering which keys were consumed so the leftovers
// can be reported as unknown.
class Section {
public:
    Section(const json* obj, std::string path, std::vector<std::string>& errors)
        : obj_(obj), path_(std::move(path)), errors_(errors) {}

    bool present(const char* key) const { return obj_ && obj_->contains(key); }

    template <class T, class Check>
    void get(const char* key, T& out, bool required, Check ok, const char* type) {
        used_.insert(key);
        if (!present(key)) {
            if (required) errors_.push_back("missing required key " + full(key));
            return;
        }
        const json& v = obj_->at(key);
        if (!ok(v)) {
            errors_.push_back(full(key) + " must be " + type);
            return;
        }
        out = v.get<T>();
    }

    void number(const char* key, double& out, bool required = false) {
        get(key, out, required, [](const json& v) { return v.is_number(); }, "a number");
    }
    template <class I>
    void integer(const char* key, I& out, bool required = false) {
        get(key, out, required, [](const json& v) { return v.is_number_integer(); }, "an integer");
    }
    void unsigned_int(const char* key, std::uint64_t& out, bool required = false) {
        get(key, out, required, [](const json& v) { return v.is_number_unsigned(); }, "a nonnegative integer");
    }
    void boolean(const char* key, bool& out) {
        get(key, out, false, [](const json& v) { return v.is_boolean(); }, "true or false");
    }
    void string(const char* key, std::string& out, bool required = false) {
        get(key, out, required, [](const json& v) { return v.is_string(); }, "a string");
    }

    const json* child(const char* key) {
        used_.insert(key);
        if (!present(key)) return nullptr;
        const json& v = obj_->at(key);
        if (!v.is_object()) {
            errors_.push_back(full(key) + " must be an object");
            return nullptr;
        }
        return &v;
    }

    const json* raw(const char* key) {
        used_.insert(key);
        return present(key) ? &obj_->at(key) : nullptr;
    }

    std::string full(const std::string& key) const { return path_.empty() ? key : path_ + "." + key; }

    void report_unknown() const {
        if (!obj_) return;
        for (auto it = obj_->begin(); it != obj_->end(); ++it)
            if (!used_.count(it.key())) errors_.push_back("unknown key " + full(it.key()));
    }

private:
    const json* obj_;
    std::string path_;
    std::vector<std::string>& errors_;
    std::set<std::string> used_;
};

std::optional<Matrix> read_matrix(const json* v, const std::string& path, std::vector<std::string>& errors) {
    if (!v) return std::nullopt;
    const auto bad = [&] {
        errors.push_back(path + " must be a list of numbers (diagonal) or a list of equal-length rows");
        return std::nullopt;
    };
    if (!v->is_array() || v->empty()) return bad();
    if ((*v)[0].is_number()) {
        Vector d(v->size());
        for (std::size_t i = 0; i < v->size(); ++i) {
            if (!(*v)[i].is_number()) return bad();
            d(i) = (*v)[i].get<double>();
        }
        return Matrix(d.asDiagonal());
    }
    const std::size_t cols = (*v)[0].is_array() ? (*v)[0].size() : 0;
    if (cols == 0) return bad();
    Matrix M(v->size(), cols);
    for (std::size_t r = 0; r < v->size(); ++r) {
        const json& row = (*v)[r];
        if (!row.is_array() || row.size() != cols) return bad();
        for (std::size_t c = 0; c < cols; ++c) {
            if (!row[c].is_number()) return bad();
            M(r, c) = row[c].get<double>();
        }
    }
    return M;
}

json matrix_json(const Matrix& M) {
    json rows = json::array();
    for (Eigen::Index r = 0; r < M.rows(); ++r) {
        json row = json::array();
        for (Eigen::Index c = 0; c < M.cols(); ++c) row.push_back(M(r, c));
        rows.push_back(row);
    }
    return rows;
}

}  // namespace

ScenarioConfig parse_config(const std::string& text) {
    json doc;
    try {
        doc = json::parse(text);
    } catch (const json::parse_error& e) {
        throw ConfigError(std::string("malformed JSON: ") + e.what());
    }
    if (!doc.is_object()) throw ConfigError("config must be a JSON object");

    ScenarioConfig c;
    std::vector<std::string> errors;
    Section root(&doc, "", errors);

    const json* plant_j = root.child("plant");
    const json* filter_j = root.child("filter");
    const json* noise_j = root.child("noise");
    const json* run_j = root.child("run");
    const json* ef_j = root.child("ef");
    if (!plant_j) errors.push_back("missing required section plant");
    if (!filter_j) errors.push_back("missing required section filter");
    if (!run_j) errors.push_back("missing required section run");

    Section plant(plant_j, "plant", errors);
    plant.string("id", c.plant, plant_j != nullptr);
    plant.string("preset", c.preset);
    plant.number("epsilon", c.epsilon, plant_j != nullptr);
    if (const json* params = plant.child("params")) {
        const auto names = turbine_param_names();
        for (auto it = params->begin(); it != params->end(); ++it) {
            const std::string path = "plant.params." + it.key();
            if (std::find(names.begin(), names.end(), it.key()) == names.end())
                errors.push_back("unknown key " + path);
            else if (!it.value().is_number())
                errors.push_back(path + " must be a number");
            else
                c.plant_params.emplace_back(it.key(), it.value().get<double>());
        }
    }
    plant.report_unknown();

    Section filter(filter_j, "filter", errors);
    std::string kind;
    filter.string("kind", kind, filter_j != nullptr);
    if (!kind.empty()) {
        try {
            c.filter = filter_kind_from_string(kind);
        } catch (const ConfigError& e) {
            errors.push_back(std::string("filter.kind: ") + e.what());
        }
    }
    filter.integer("N", c.N, filter_j != nullptr);
    filter.boolean("perturbed_observations", c.options.perturbed_observations);
    filter.boolean("psi_at_prior", c.options.psi_at_prior);
    std::string freeze;
    filter.string("freeze", freeze);
    if (freeze == "prior")
        c.options.freeze = FreezePoint::Prior;
    else if (!freeze.empty() && freeze != "posterior")
        errors.push_back("filter.freeze must be 'posterior' or 'prior'");
    filter.number("condition_limit", c.options.condition_limit);
    filter.number("innovation_growth", c.options.innovation_growth);
    filter.integer("innovation_strikes", c.options.innovation_strikes);
    filter.number("resample_fraction", c.options.resample_fraction);
    filter.boolean("regularize", c.options.regularize);
    filter.number("jitter_scale", c.options.jitter_scale);
    filter.number("init_spread", c.init_spread);
    if (const json* b = filter.raw("init_bias")) {
        if (!b->is_array()) {
            errors.push_back("filter.init_bias must be a list of numbers");
        } else {
            c.init_bias.resize(b->size());
            for (std::size_t i = 0; i < b->size(); ++i) {
                if (!(*b)[i].is_number()) {
                    errors.push_back("filter.init_bias must be a list of numbers");
                    break;
                }
                c.init_bias(i) = (*b)[i].get<double>();
            }
        }
    }
    filter.report_unknown();

    Section noise(noise_j, "noise", errors);
    c.Q1 = read_matrix(noise.raw("Q1"), "noise.Q1", errors);
    c.Q2 = read_matrix(noise.raw("Q2"), "noise.Q2", errors);
    c.R = read_matrix(noise.raw("R"), "noise.R", errors);
    noise.report_unknown();

    Section run(run_j, "run", errors);
    run.number("iota", c.iota, run_j != nullptr);
    run.integer("horizon", c.horizon, run_j != nullptr);
    run.unsigned_int("seed", c.seed, run_j != nullptr);
    run.integer("l", c.l);
    if (const json* w = run.raw("windows")) {
        if (!w->is_array()) errors.push_back("run.windows must be a list of integers");
        else
            for (const auto& x : *w) {
                if (!x.is_number_integer()) {
                    errors.push_back("run.windows must be a list of integers");
                    break;
                }
                c.windows.push_back(x.get<int>());
            }
    }
    run.boolean("truth_process_noise", c.truth_process_noise);
    run.boolean("truth_measurement_noise", c.truth_measurement_noise);
    run.integer("truth_substeps", c.truth_substeps);
    run.boolean("measure_time", c.measure_time);
    run.integer("repetitions", c.repetitions);
    run.string("time_unit", c.time_unit);
    {
        Section pred(run.child("prediction"), "run.prediction", errors);
        pred.boolean("pseudo_update", c.prediction.pseudo_update);
        pred.boolean("fast_obs_previous_offset", c.prediction.fast_obs_previous_offset);
        pred.report_unknown();
    }
    run.report_unknown();

    Section ef(ef_j, "ef", errors);
    ef.unsigned_int("c1", c.ef.c1);
    ef.unsigned_int("c2", c.ef.c2);
    ef.unsigned_int("c3", c.ef.c3);
    ef.unsigned_int("c4", c.ef.c4);
    ef.report_unknown();

    root.report_unknown();

    if (!errors.empty()) {
        std::string msg = "config schema errors:";
        for (const auto& e : errors) msg += "\n  " + e;
        throw ConfigError(msg);
    }
    return c;
}

ScenarioConfig load_config(const std::string& path) {
    std::ifstream in(path);
    if (!in) throw ConfigError("cannot read config file " + path);
    std::stringstream ss;
    ss << in.rdbuf();
    return parse_config(ss.str());
}

std::string config_to_json(const ScenarioConfig& c) {
    json plant = {{"id", c.plant}, {"epsilon", c.epsilon}};
    if (!c.preset.empty()) plant["preset"] = c.preset;
    if (!c.plant_params.empty()) {
        json p = json::object();
        for (const auto& [k, v] : c.plant_params) p[k] = v;
        plant["params"] = p;
    }
    json filter = {{"kind", to_string(c.filter)},
                   {"N", c.N},
                   {"perturbed_observations", c.options.perturbed_observations},
                   {"psi_at_prior", c.options.psi_at_prior},
                   {"freeze", c.options.freeze == FreezePoint::Prior ? "prior" : "posterior"},
                   {"condition_limit", c.options.condition_limit},
                   {"innovation_growth", c.options.innovation_growth},
                   {"innovation_strikes", c.options.innovation_strikes},
                   {"resample_fraction", c.options.resample_fraction},
                   {"regularize", c.options.regularize},
                   {"jitter_scale", c.options.jitter_scale},
                   {"init_spread", c.init_spread}};
    if (c.init_bias.size()) filter["init_bias"] = std::vector<double>(c.init_bias.begin(), c.init_bias.end());
    json noise = json::object();
    if (c.Q1) noise["Q1"] = matrix_json(*c.Q1);
    if (c.Q2) noise["Q2"] = matrix_json(*c.Q2);
    if (c.R) noise["R"] = matrix_json(*c.R);
    json run = {{"iota", c.iota},
                {"horizon", c.horizon},
                {"seed", c.seed},
                {"l", c.l},
                {"windows", c.windows},
                {"truth_process_noise", c.truth_process_noise},
                {"truth_measurement_noise", c.truth_measurement_noise},
                {"truth_substeps", c.truth_substeps},
                {"measure_time", c.measure_time},
                {"repetitions", c.repetitions},
                {"time_unit", c.time_unit},
                {"prediction",
                 {{"pseudo_update", c.prediction.pseudo_update},
                  {"fast_obs_previous_offset", c.prediction.fast_obs_previous_offset}}}};
    json ef = {{"c1", c.ef.c1}, {"c2", c.ef.c2}, {"c3", c.ef.c3}, {"c4", c.ef.c4}};
    json doc = {{"plant", plant}, {"filter", filter}, {"noise", noise}, {"run", run}, {"ef", ef}};
    return doc.dump(2) + "\n";
}

void write_file_atomic(const std::string& path, const std::string& content) {
    namespace fs = std::filesystem;
    const fs::path target(path);
    const fs::path tmp = target.string() + ".tmp";
    {
        std::ofstream out(tmp, std::ios::binary | std::ios::trunc);
        if (!out) throw std::runtime_error("cannot write " + tmp.string());
        out << content;
        out.flush();
        if (!out) throw std::runtime_error("write failed for " + tmp.string());
    }
    std::error_code ec;
    fs::rename(tmp, target, ec);
    if (ec) {
        fs::remove(tmp);
        throw std::runtime_error("cannot rename " + tmp.string() + " to " + path + ": " + ec.message());
    }
}

const std::vector<PresetInfo>& shipped_presets() {
    static const std::vector<PresetInfo> presets = {
        {"linear-v1", "linear_tts.json", "two-time-scale linear verification plant, 2 slow + 2 fast states"},
        {"turbine-v1", "turbine_erosion.json", "single-spool turbine with efficiency and flow-capacity erosion"},
    };
    return presets;
}

}  // namespace ttsenkf
