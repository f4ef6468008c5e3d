#include "ttsenkf/bench.hpp"

#include <atomic>
#include <chrono>
#include <cmath>
#include <cstdio>
#include <cstdlib>
#include <limits>
#include <sstream>
#include <thread>

#include "ttsenkf/linear_plant.hpp"
#include "ttsenkf/turbine.hpp"

namespace ttsenkf {

std::vector<double> mae_percent(const Matrix& truth, const Matrix& est) {
    if (truth.rows() != est.rows() || truth.cols() != est.cols())
        throw InvalidInput("mae_percent: truth and estimate have different shapes");
    if (truth.cols() == 0) throw InvalidInput("mae_percent: empty trajectory");
    std::vector<double> out(truth.rows());
    for (Eigen::Index c = 0; c < truth.rows(); ++c) {
        double num = 0.0, den = 0.0;
        for (Eigen::Index t = 0; t < truth.cols(); ++t) {
            num += std::abs(truth(c, t) - est(c, t));
            den += std::abs(truth(c, t));
        }
        if (!(den > 0.0))
            throw InvalidInput("mae_percent: undefined normalization, channel " + std::to_string(c) +
                               " has zero mean absolute truth");
        out[c] = 100.0 * num / den;
    }
    return out;
}

std::uint64_t ef_complexity(EfMethod method, const EfParams& p) {
    const std::uint64_t ns = p.n_s, nf = p.n_f, ny = p.n_y;
    std::uint64_t per = 0;
    switch (method) {
        case EfMethod::Dlm:
            per = 3 * ns * ns + 5 * nf * nf + 6 * nf + 2 * nf * ny + 7 * ny + 3 * ns + p.c1 * (ns + nf) +
                  p.c2 * (ns + nf) + p.c3 * ns;
            break;
        case EfMethod::Pf:
            per = 3 * ns * ns + 3 * nf * nf + 6 * ns * nf + (1 + p.c1 + p.c3) * ns + (1 + p.c1 + p.c3) * nf + ny;
            break;
        case EfMethod::TtsEnkf:
            per = ns * ns + nf * nf + 2 * ny * ny + 2 * ns * nf + 3 * ns * ny + 3 * nf * ny + (9 + p.c1) * ns +
                  (11 + p.c1) * nf + 9 * ny;
            break;
    }
    return p.N * per;
}

std::vector<std::string> validate(const ScenarioConfig& c) {
    std::vector<std::string> v;
    if (c.plant != "linear" && c.plant != "turbine") v.push_back("plant.id must be 'linear' or 'turbine'");
    const char* preset = c.plant == "turbine" ? "turbine-v1" : "linear-v1";
    if (!c.preset.empty() && c.preset != preset)
        v.push_back("unknown preset '" + c.preset + "' for plant " + c.plant + " (available: " + preset + ")");
    if (c.filter != FilterKind::Pf && c.N < 2) v.push_back("N >= 2 required for EnKF filters");
    if (c.filter == FilterKind::Pf && c.N < 1) v.push_back("N >= 1 required");
    if (!(c.epsilon > 0.0 && c.epsilon < 1.0)) v.push_back("0 < epsilon < 1 required");
    if (!(c.iota > 0.0)) v.push_back("iota > 0 required");
    if (c.horizon < 1) v.push_back("horizon >= 1 required");
    if (c.l < 0) v.push_back("l >= 0 required");
    for (int w : c.windows)
        if (w < 1 || w > c.l) v.push_back("prediction window " + std::to_string(w) + " must lie in [1, l]");
    if (c.truth_substeps < 0) v.push_back("truth_substeps >= 0 required");
    if (!(c.init_spread >= 0.0)) v.push_back("init_spread >= 0 required");
    if (c.repetitions < 1) v.push_back("repetitions >= 1 required");
    if (!(c.options.resample_fraction >= 0.0 && c.options.resample_fraction <= 1.0))
        v.push_back("resample_fraction must lie in [0, 1]");
    return v;
}

namespace {

struct ParamRef {
    const char* name;
    double TurbineParams::*member;
};

constexpr ParamRef kTurbineParams[] = {
    {"cp", &TurbineParams::cp},          {"cv", &TurbineParams::cv},
    {"gamma", &TurbineParams::gamma},    {"R", &TurbineParams::R},
    {"Hu", &TurbineParams::Hu},          {"eta_cc", &TurbineParams::eta_cc},
    {"m_f", &TurbineParams::m_f},        {"T_diffuser", &TurbineParams::T_diffuser},
    {"P_diffuser", &TurbineParams::P_diffuser}, {"eta_c", &TurbineParams::eta_c},
    {"T_d", &TurbineParams::T_d},        {"eta_mech", &TurbineParams::eta_mech},
    {"m_cc", &TurbineParams::m_cc},      {"J", &TurbineParams::J},
    {"V_cc", &TurbineParams::V_cc},      {"V_m", &TurbineParams::V_m},
    {"T_m", &TurbineParams::T_m},        {"S0", &TurbineParams::S0},
    {"P0", &TurbineParams::P0},          {"m_c0", &TurbineParams::m_c0},
    {"beta0", &TurbineParams::beta0},    {"eta_t0", &TurbineParams::eta_t0},
    {"kappa", &TurbineParams::kappa},    {"speed_exponent", &TurbineParams::speed_exponent},
    {"a_s", &TurbineParams::a_s},        {"a_b", &TurbineParams::a_b},
    {"a_ss", &TurbineParams::a_ss},      {"a_bb", &TurbineParams::a_bb},
    {"c_s", &TurbineParams::c_s},        {"c_b", &TurbineParams::c_b},
    {"c_ss", &TurbineParams::c_ss},      {"c_bb", &TurbineParams::c_bb},
    {"time_scale", &TurbineParams::time_scale},
    {"q_slow", &TurbineParams::q_slow},  {"q_fast", &TurbineParams::q_fast},
    {"r_rel", &TurbineParams::r_rel},
};

void apply_noise_overrides(const ScenarioConfig& cfg, NspModel& m) {
    if (cfg.Q1) m.noise.Q1 = *cfg.Q1;
    if (cfg.Q2) m.noise.Q2 = *cfg.Q2;
    if (cfg.R) m.noise.R = *cfg.R;
    try {
        m.validate();
    } catch (const InvalidInput& e) {
        throw ConfigError(std::string("noise: ") + e.what());
    }
}

Matrix initial_cov(const Vector& x0, double rel) {
    const double big = x0.size() ? x0.cwiseAbs().maxCoeff() : 0.0;
    Vector s(x0.size());
    for (Eigen::Index i = 0; i < x0.size(); ++i) s(i) = rel * (x0(i) != 0.0 ? std::abs(x0(i)) : big);
    return s.array().square().matrix().asDiagonal();
}

}  // namespace

std::vector<std::string> turbine_param_names() {
    std::vector<std::string> out;
    for (const auto& p : kTurbineParams) out.emplace_back(p.name);
    return out;
}

Scenario build_scenario(const ScenarioConfig& cfg) {
    const auto errs = validate(cfg);
    if (!errs.empty()) throw ConfigError(errs.front());
    Scenario s;
    if (cfg.plant == "linear") {
        if (!cfg.plant_params.empty()) throw ConfigError("plant.params is only supported for the turbine");
        const LinearTtsPlant p = default_linear_plant(cfg.epsilon);
        s.model = p.model();
        s.init.x1 = p.x1_0;
        s.init.x2 = p.x2_0;
        s.state_names = {"x1_1", "x1_2", "x2_1", "x2_2"};
        s.output_names = {"y1", "y2", "y3"};
    } else {
        TurbineParams tp = turbine_v1();
        for (const auto& [name, value] : cfg.plant_params) {
            bool found = false;
            for (const auto& ref : kTurbineParams)
                if (name == ref.name) {
                    tp.*(ref.member) = value;
                    found = true;
                }
            if (!found) throw ConfigError("plant.params." + name + " is not a turbine parameter");
        }
        tp.epsilon = cfg.epsilon;
        try {
            const TurbinePlant plant(tp);
            s.model = plant.model(cfg.epsilon);
            s.init.x1 = plant.design_x1();
            s.init.x2 = plant.design_x2();
        } catch (const InvalidInput& e) {
            throw ConfigError(std::string("plant: ") + e.what());
        }
        s.state_names = {"theta_eta_T", "theta_m_T", "T_CC", "S", "P_CC", "P_NLT"};
        s.output_names = {"y_T_C", "y_P_CC", "y_S", "y_P_NLT", "y_T_T"};
    }
    apply_noise_overrides(cfg, s.model);
    Vector x0(s.model.n());
    x0 << s.init.x1, s.init.x2;
    s.init.P0 = initial_cov(x0, cfg.init_spread);
    if (cfg.init_bias.size()) {
        if (cfg.init_bias.size() != x0.size()) throw ConfigError("filter.init_bias has the wrong dimension");
        s.init.bias = cfg.init_bias;
    }
    return s;
}

TruthRun simulate_truth(const NspModel& m, const Vector& x1_0, const Vector& x2_0, double iota, long steps,
                        std::uint64_t seed, bool process_noise, bool measurement_noise, int substeps) {
    const DiscreteStepper st(m, iota);
    const NoiseFactors nf(m.noise);
    if (substeps <= 0) substeps = std::max(1, static_cast<int>(std::ceil(st.alpha() / 0.25 - 1e-12)));
    TruthRun t;
    t.x = Matrix::Zero(m.n(), steps + 1);
    t.y = Matrix::Zero(m.n_y, steps + 1);
    t.y_clean = Matrix::Zero(m.n_y, steps + 1);
    Vector x1 = x1_0, x2 = x2_0;
    t.x.col(0) << x1, x2;
    t.y_clean.col(0) = m.h(x1, x2, m.epsilon);
    t.y.col(0) = t.y_clean.col(0);
    const Vector z1 = Vector::Zero(m.q1), z2 = Vector::Zero(m.q2);
    for (long k = 1; k <= steps; ++k) {
        Vector w1 = z1, w2 = z2;
        if (process_noise) {
            Rng r1 = stream_key(seed, Stream::TruthSlow, k).member(0);
            Rng r2 = stream_key(seed, Stream::TruthFast, k).member(0);
            w1 = gaussian_draw(nf.L1, r1);
            w2 = gaussian_draw(nf.L2, r2);
        }
        std::tie(x1, x2) = discrete_step_substepped(st, x1, x2, w1, w2, substeps);
        if (m.check_domain) m.check_domain(x1, x2);
        t.x.col(k) << x1, x2;
        t.y_clean.col(k) = m.h(x1, x2, m.epsilon);
        t.y.col(k) = t.y_clean.col(k);
        if (measurement_noise) {
            Rng rv = stream_key(seed, Stream::TruthMeasurement, k).member(0);
            t.y.col(k) += gaussian_draw(nf.LR, rv);
        }
    }
    return t;
}

namespace {

using Clock = std::chrono::steady_clock;

struct FilterRun {
    std::unique_ptr<Filter> filter;
    Matrix est;
    std::vector<double> times;
};

FilterRun run_filter(const ScenarioConfig& cfg, const Scenario& sc, const TruthRun& truth) {
    FilterRun r;
    r.filter = make_filter(cfg.filter, sc.model, cfg.iota, cfg.N, cfg.seed, sc.init, cfg.options);
    r.est = Matrix::Constant(sc.model.n(), cfg.horizon + 1, std::numeric_limits<double>::quiet_NaN());
    r.est.col(0) = r.filter->estimate();
    // the first few iterations warm caches and the psi0 Newton starts
    const long warmup = cfg.horizon >= 210 ? 10 : 0;
    for (long k = 1; k <= cfg.horizon; ++k) {
        const auto t0 = Clock::now();
        r.filter->step(truth.y.col(k));
        if (cfg.measure_time && k > warmup) r.times.push_back(std::chrono::duration<double>(Clock::now() - t0).count());
        if (r.filter->diverged()) break;
        r.est.col(k) = r.filter->estimate();
    }
    return r;
}

std::optional<std::uint64_t> ef_for(const ScenarioConfig& cfg, const NspModel& m) {
    EfParams p = cfg.ef;
    p.n_s = m.n_s;
    p.n_f = m.n_f;
    p.n_y = m.n_y;
    p.N = static_cast<std::uint64_t>(cfg.N);
    if (cfg.filter == FilterKind::TtsEnkf) return ef_complexity(EfMethod::TtsEnkf, p);
    if (cfg.filter == FilterKind::Pf) return ef_complexity(EfMethod::Pf, p);
    return std::nullopt;
}

}  // namespace

RunReport run_scenario(const ScenarioConfig& cfg) {
    RunReport rep;
    rep.config = cfg;
    rep.method = to_string(cfg.filter);
    const Scenario sc = build_scenario(cfg);
    const NspModel& m = sc.model;
    rep.state_names = sc.state_names;
    rep.output_names = sc.output_names;
    rep.ef_flops = ef_for(cfg, m);

    const long total = cfg.horizon + cfg.l;
    TruthRun truth;
    try {
        truth = simulate_truth(m, sc.init.x1, sc.init.x2, cfg.iota, total, cfg.seed, cfg.truth_process_noise,
                               cfg.truth_measurement_noise, cfg.truth_substeps);
    } catch (const std::exception& e) {
        rep.plant_error = std::string("truth simulation failed: ") + e.what();
        rep.diverged = true;
        rep.divergence_reason = rep.plant_error;
        return rep;
    }
    rep.truth_x = truth.x.leftCols(cfg.horizon + 1);
    rep.truth_y = truth.y_clean.leftCols(cfg.horizon + 1);

    FilterRun run = run_filter(cfg, sc, truth);
    std::vector<double> times = run.times;
    if (cfg.measure_time)
        for (int r = 1; r < cfg.repetitions; ++r) {
            FilterRun again = run_filter(cfg, sc, truth);
            times.insert(times.end(), again.times.begin(), again.times.end());
        }
    if (!times.empty()) {
        rep.timing.measured = true;
        rep.timing.iterations = static_cast<long>(times.size());
        rep.timing.best = *std::min_element(times.begin(), times.end());
        rep.timing.worst = *std::max_element(times.begin(), times.end());
        double s = 0.0;
        for (double t : times) s += t;
        rep.timing.average = s / static_cast<double>(times.size());
    }

    const Filter& f = *run.filter;
    const Diagnostics& d = f.state().diag;
    rep.diverged = d.diverged;
    rep.diverged_step = d.diverged_step;
    rep.divergence_reason = d.reason;
    rep.substitutions = d.substitutions;
    rep.resamples = d.resamples;
    rep.degenerate = d.degenerate;
    rep.estimate_x = run.est;

    rep.estimate_y = Matrix::Constant(m.n_y, cfg.horizon + 1, std::numeric_limits<double>::quiet_NaN());
    bool outputs_ok = !rep.diverged;
    for (long k = 0; k <= cfg.horizon && outputs_ok; ++k) {
        try {
            rep.estimate_y.col(k) = m.h(run.est.col(k).head(m.n_s), run.est.col(k).tail(m.n_f), m.epsilon);
        } catch (const std::exception& e) {
            rep.plant_error = std::string("estimate left the plant domain: ") + e.what();
            outputs_ok = false;
        }
    }

    if (!rep.diverged) {
        rep.mae_state = mae_percent(rep.truth_x.rightCols(cfg.horizon), rep.estimate_x.rightCols(cfg.horizon));
        if (outputs_ok)
            rep.mae_output =
                mae_percent(rep.truth_y.rightCols(cfg.horizon), rep.estimate_y.rightCols(cfg.horizon));
    }

    if (cfg.l > 0 && !rep.diverged) {
        rep.has_prediction = true;
        if (cfg.filter == FilterKind::TtsEnkf)
            rep.prediction = predict_l_steps(static_cast<TtsEnkf&>(*run.filter), cfg.l, cfg.prediction);
        else
            rep.prediction = open_loop_predict(*run.filter, cfg.l, cfg.prediction);
        rep.prediction_truth_x1 = truth.x.block(0, cfg.horizon, m.n_s, cfg.l + 1);
        rep.prediction_truth_x2 = truth.x.block(m.n_s, cfg.horizon, m.n_f, cfg.l + 1);
        const int available = rep.prediction.length();
        std::vector<int> ws = cfg.windows.empty() ? std::vector<int>{cfg.l} : cfg.windows;
        for (int w : ws) {
            PredictionWindow pw;
            pw.l = w;
            if (w <= available) {
                pw.mae_slow = mae_percent(rep.prediction_truth_x1.middleCols(1, w), rep.prediction.x1.middleCols(1, w));
                pw.mae_fast = mae_percent(rep.prediction_truth_x2.middleCols(1, w), rep.prediction.x2.middleCols(1, w));
            }
            rep.windows.push_back(pw);
        }
    }
    return rep;
}

SweepAxis parse_axis(const std::string& spec) {
    const auto eq = spec.find('=');
    if (eq == std::string::npos || eq == 0) throw ConfigError("axis must look like KEY=V1,V2,...");
    SweepAxis a;
    a.key = spec.substr(0, eq);
    if (a.key != "N" && a.key != "epsilon" && a.key != "method")
        throw ConfigError("unknown sweep axis '" + a.key + "' (expected N, epsilon or method)");
    std::stringstream ss(spec.substr(eq + 1));
    std::string item;
    while (std::getline(ss, item, ','))
        if (!item.empty()) a.values.push_back(item);
    if (a.values.empty()) throw ConfigError("sweep axis has no values");
    return a;
}

int thread_cap() {
    int cap = static_cast<int>(std::thread::hardware_concurrency());
    if (cap < 1) cap = 1;
    if (const char* env = std::getenv("TTS_ENKF_THREADS")) {
        char* end = nullptr;
        const long v = std::strtol(env, &end, 10);
        if (end != env && v >= 1) cap = static_cast<int>(v);
    }
    return cap;
}

namespace {

ScenarioConfig cell_config(const ScenarioConfig& base, const SweepAxis& axis, std::size_t i, int repetitions) {
    ScenarioConfig c = base;
    const std::string& v = axis.values[i];
    try {
        if (axis.key == "N") {
            std::size_t pos = 0;
            c.N = std::stoi(v, &pos);
            if (pos != v.size()) throw std::invalid_argument(v);
        } else if (axis.key == "epsilon") {
            std::size_t pos = 0;
            c.epsilon = std::stod(v, &pos);
            if (pos != v.size()) throw std::invalid_argument(v);
        } else {
            c.filter = filter_kind_from_string(v);
        }
    } catch (const ConfigError&) {
        throw;
    } catch (const std::exception&) {
        throw ConfigError("bad value '" + v + "' on sweep axis " + axis.key);
    }
    c.seed = base.seed + i;
    c.repetitions = repetitions;
    if (repetitions > 1) c.measure_time = true;
    return c;
}

}  // namespace

SweepResult run_sweep(const ScenarioConfig& base, const SweepAxis& axis, int repetitions, int threads) {
    if (axis.values.empty()) throw ConfigError("sweep axis has no values");
    if (repetitions < 1) throw ConfigError("repetitions >= 1 required");
    SweepResult res;
    res.axis = axis;
    std::vector<ScenarioConfig> cells;
    for (std::size_t i = 0; i < axis.values.size(); ++i) cells.push_back(cell_config(base, axis, i, repetitions));
    for (const auto& c : cells) {
        const auto errs = validate(c);
        if (!errs.empty()) throw ConfigError(axis.key + "=" + axis.values[&c - cells.data()] + ": " + errs.front());
    }
    res.reports.resize(cells.size());

    const bool timed = cells.front().measure_time;
    int workers = threads > 0 ? threads : thread_cap();
    if (timed) workers = 1;  // timings are only meaningful without contention
    workers = std::max(1, std::min<int>(workers, static_cast<int>(cells.size())));

    auto run_cell = [&](std::size_t i) {
        try {
            res.reports[i] = run_scenario(cells[i]);
        } catch (const ConfigError&) {
            throw;
        } catch (const std::exception& e) {
            RunReport r;
            r.config = cells[i];
            r.method = to_string(cells[i].filter);
            r.diverged = true;
            r.divergence_reason = e.what();
            res.reports[i] = std::move(r);
        }
    };
    if (workers == 1) {
        for (std::size_t i = 0; i < cells.size(); ++i) run_cell(i);
        return res;
    }
    std::atomic<std::size_t> next{0};
    std::vector<std::exception_ptr> errors(workers);
    std::vector<std::thread> pool;
    for (int w = 0; w < workers; ++w)
        pool.emplace_back([&, w] {
            try {
                for (std::size_t i = next++; i < cells.size(); i = next++) run_cell(i);
            } catch (...) {
                errors[w] = std::current_exception();
            }
        });
    for (auto& t : pool) t.join();
    for (auto& e : errors)
        if (e) std::rethrow_exception(e);
    return res;
}

// ---------------------------------------------------------------- CSV

namespace {

std::string num(double v) {
    if (std::isnan(v)) return "nan";
    char buf[64];
    std::snprintf(buf, sizeof buf, "%.10g", v);
    return buf;
}

std::string time_cell(const Timing& t, double v) { return t.measured ? num(v) : ""; }

std::string mae_cell(const RunReport& r, const std::vector<double>& v, std::size_t i) {
    if (r.diverged || i >= v.size()) return "N/C";
    return num(v[i]);
}

}  // namespace

std::string trajectory_csv(const RunReport& r) {
    std::string out = "step,time,channel,truth,estimate,abs_error\n";
    const long steps = r.truth_x.cols();
    for (long k = 0; k < steps; ++k) {
        const std::string head = std::to_string(k) + "," + num(static_cast<double>(k) * r.config.iota) + ",";
        auto row = [&](const std::string& name, double tr, double es) {
            out += head + name + "," + num(tr) + "," + num(es) + "," + num(std::abs(tr - es)) + "\n";
        };
        for (std::size_t c = 0; c < r.state_names.size(); ++c)
            row(r.state_names[c], r.truth_x(c, k), r.estimate_x(c, k));
        for (std::size_t c = 0; c < r.output_names.size(); ++c)
            row(r.output_names[c], r.truth_y(c, k), r.estimate_y(c, k));
    }
    return out;
}

std::string summary_csv(const std::vector<RunReport>& reports) {
    std::string out = "method,N,epsilon,channel,mae_percent,ef_flops,time_best,time_avg,time_worst,diverged\n";
    for (const auto& r : reports) {
        const std::string head = r.method + "," + std::to_string(r.config.N) + "," + num(r.config.epsilon) + ",";
        const std::string ef = r.ef_flops ? std::to_string(*r.ef_flops) : "";
        const std::string tail = "," + ef + "," + time_cell(r.timing, r.timing.best) + "," +
                                 time_cell(r.timing, r.timing.average) + "," + time_cell(r.timing, r.timing.worst) +
                                 "," + (r.diverged ? "true" : "false") + "\n";
        for (std::size_t c = 0; c < r.state_names.size(); ++c)
            out += head + r.state_names[c] + "," + mae_cell(r, r.mae_state, c) + tail;
        for (std::size_t c = 0; c < r.output_names.size(); ++c)
            out += head + r.output_names[c] + "," + mae_cell(r, r.mae_output, c) + tail;
        if (r.state_names.empty()) out += head + "all,N/C" + tail;
    }
    return out;
}

std::string prediction_csv(const RunReport& r) {
    std::string out = "offset,time,channel,truth,prediction,abs_error\n";
    if (!r.has_prediction) return out;
    const auto& p = r.prediction;
    const int ns = static_cast<int>(p.x1.rows());
    for (int j = 0; j <= p.length(); ++j) {
        const std::string head = std::to_string(j) + "," + num((r.config.horizon + j) * r.config.iota) + ",";
        for (int c = 0; c < ns; ++c) {
            const double tr = r.prediction_truth_x1(c, j), pr = p.x1(c, j);
            out += head + r.state_names[c] + "," + num(tr) + "," + num(pr) + "," + num(std::abs(tr - pr)) + "\n";
        }
        for (int c = 0; c < p.x2.rows(); ++c) {
            const double tr = r.prediction_truth_x2(c, j), pr = p.x2(c, j);
            out += head + r.state_names[ns + c] + "," + num(tr) + "," + num(pr) + "," + num(std::abs(tr - pr)) +
                   "\n";
        }
    }
    return out;
}

std::string prediction_summary_csv(const std::vector<RunReport>& reports) {
    std::string out = "method,N,epsilon,window,channel,mae_percent,failed_offset\n";
    for (const auto& r : reports) {
        if (!r.has_prediction) continue;
        const std::string head = r.method + "," + std::to_string(r.config.N) + "," + num(r.config.epsilon) + ",";
        const std::size_t ns = r.prediction.x1.rows();
        for (const auto& w : r.windows) {
            for (std::size_t c = 0; c < r.state_names.size(); ++c) {
                const auto& v = c < ns ? w.mae_slow : w.mae_fast;
                const std::size_t i = c < ns ? c : c - ns;
                out += head + std::to_string(w.l) + "," + r.state_names[c] + "," +
                       (i < v.size() ? num(v[i]) : std::string("N/C")) + "," +
                       std::to_string(r.prediction.failed_offset) + "\n";
            }
        }
    }
    return out;
}

std::string comparison_csv(const SweepResult& s) {
    std::string out = "channel";
    for (const auto& v : s.axis.values) out += "," + s.axis.key + "=" + v;
    out += "\n";
    const RunReport* ref = nullptr;
    for (const auto& r : s.reports)
        if (!r.state_names.empty()) {
            ref = &r;
            break;
        }
    auto line = [&](const std::string& label, auto cell) {
        out += label;
        for (const auto& r : s.reports) out += "," + cell(r);
        out += "\n";
    };
    if (ref) {
        for (std::size_t c = 0; c < ref->state_names.size(); ++c)
            line(ref->state_names[c], [&](const RunReport& r) { return mae_cell(r, r.mae_state, c); });
        for (std::size_t c = 0; c < ref->output_names.size(); ++c)
            line(ref->output_names[c], [&](const RunReport& r) { return mae_cell(r, r.mae_output, c); });
        for (std::size_t w = 0; w < ref->windows.size(); ++w)
            for (std::size_t c = 0; c < ref->state_names.size(); ++c) {
                const std::size_t ns = ref->prediction.x1.rows();
                line("pred" + std::to_string(ref->windows[w].l) + ":" + ref->state_names[c],
                     [&](const RunReport& r) -> std::string {
                         if (w >= r.windows.size()) return "N/C";
                         const auto& v = c < ns ? r.windows[w].mae_slow : r.windows[w].mae_fast;
                         const std::size_t i = c < ns ? c : c - ns;
                         return i < v.size() ? num(v[i]) : "N/C";
                     });
            }
    }
    line("ef_flops", [](const RunReport& r) { return r.ef_flops ? std::to_string(*r.ef_flops) : std::string(); });
    bool timed = false;
    for (const auto& r : s.reports) timed = timed || r.timing.measured;
    if (timed) {
        line("time_best", [](const RunReport& r) { return time_cell(r.timing, r.timing.best); });
        line("time_avg", [](const RunReport& r) { return time_cell(r.timing, r.timing.average); });
        line("time_worst", [](const RunReport& r) { return time_cell(r.timing, r.timing.worst); });
    }
    line("diverged", [](const RunReport& r) { return std::string(r.diverged ? "true" : "false"); });
    return out;
}

}  // namespace ttsenkf
