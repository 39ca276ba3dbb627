// SPDX-License-Identifier: Apache-2.0
//
// ckm: dynamic channel knowledge map construction for MIMO-OFDM
//
// Licensed under the Apache License, Version 2.0 (the "License");
// you may not use this file except in compliance with the License.
// You may obtain a copy of the License at
// http://www.apache.org/licenses/LICENSE-2.0
//
// Unless required by applicable law or agreed to in writing, software
// distributed under the License is distributed on an "AS IS" BASIS,
// WITHOUT WARRANTIES OR CONDITIONS OF ANY KIND, either express or implied.
// See the License for the specific language governing permissions and
// limitations under the License.
// ------------------------------------------------------------------------

#include <ckm/dataset_io.hpp>
#include <ckm/experiment.hpp>

#include <json.hpp>

#include <algorithm>
#include <atomic>
#include <bit>
#include <chrono>
#include <cmath>
#include <cstdio>
#include <limits>
#include <map>
#include <memory>
#include <sstream>
#include <thread>

namespace ckm
{
namespace
{
using json = nlohmann::ordered_json;

const std::vector<std::pair<Baseline, const char*>> kBaselineNames = {
    {Baseline::Full, "full"},
    {Baseline::NoSyncCal, "no_sync_cal"},
    {Baseline::NoDynamicEst, "no_dynamic_est"},
    {Baseline::NoPrior, "no_prior"},
    {Baseline::SeparateEst, "separate_est"},
    {Baseline::OmpInit, "omp_init"},
    {Baseline::IdealPrior, "ideal_prior"},
};

const std::vector<std::pair<SweepAxis, const char*>> kAxisNames = {
    {SweepAxis::Ls, "L_s"},
    {SweepAxis::Iterations, "iterations"},
    {SweepAxis::PilotRatio, "pilot_ratio"},
    {SweepAxis::Ld, "L_d"},
};

std::string format_double(const char* fmt, double v)
{
    if (std::isnan(v))
        return "nan";
    char buf[64];
    std::snprintf(buf, sizeof buf, fmt, v);
    return buf;
}

// Which Stage-I run a baseline builds its table from.
Baseline stage1_variant(Baseline b)
{
    switch (b) {
    case Baseline::NoSyncCal:
    case Baseline::SeparateEst:
    case Baseline::OmpInit:
        return b;
    default:
        return Baseline::Full;
    }
}

double elapsed_ms(std::chrono::steady_clock::time_point t0)
{
    return std::chrono::duration<double, std::milli>(std::chrono::steady_clock::now() - t0).count();
}

struct TrialRunner
{
    const ExperimentSpec& spec;
    int trial;
    bool record_runtime;
    ScenarioConfig cfg;
    Dataset stage1_data;
    std::map<std::pair<Baseline, int>, Stage1Result> stage1_cache;
    std::map<double, Dataset> stage2_data;
    std::map<std::tuple<Baseline, int, int, double>, std::pair<Stage2Result, double>> stage2_cache;

    TrialRunner(const ExperimentSpec& s, int t, bool rt) : spec(s), trial(t), record_runtime(rt), cfg(s.scenario)
    {
        cfg.rng_seed = trial_seed(spec.master_seed, trial);
        stage1_data = synthesize_measurements(cfg, Stage::I, spec.stage1_slots, 1.0);
    }

    std::pair<const Stage1Result*, double> stage1(Baseline variant, int ls, int iters)
    {
        const auto key = std::make_pair(variant, ls * 100000 + iters);
        auto it = stage1_cache.find(key);
        double ms = 0.0;
        if (it == stage1_cache.end()) {
            const auto t0 = std::chrono::steady_clock::now();
            Stage1Result r = run_stage1(stage1_data.measurements, stage1_options_for(variant, ls, iters));
            ms = elapsed_ms(t0);
            it = stage1_cache.emplace(key, std::move(r)).first;
        }
        return {&it->second, ms};
    }

    const Dataset& stage2_dataset(double ratio)
    {
        auto it = stage2_data.find(ratio);
        if (it == stage2_data.end())
            it = stage2_data.emplace(ratio, synthesize_measurements(cfg, Stage::II, 1, 1.0 / ratio)).first;
        return it->second;
    }

    void cell(CellResult& c)
    {
        const double v = c.value;
        const bool sweep_ls = spec.axis == SweepAxis::Ls;
        const int ls = sweep_ls ? static_cast<int>(v) : spec.L_s;
        if (spec.stage == 1) {
            const int iters = spec.axis == SweepAxis::Iterations ? static_cast<int>(v) : spec.stage1_iters;
            const auto t0 = std::chrono::steady_clock::now();
            const Stage1Result r = run_stage1(stage1_data.measurements, stage1_options_for(c.baseline, ls, iters));
            c.runtime_ms = record_runtime ? elapsed_ms(t0) : 0.0;
            c.nmse_db = stage1_nmse_db(r.state, stage1_data);
            c.sync_rmse_rad = stage1_sync_rmse(r.state, stage1_data);
            c.iterations = r.state.iteration;
            return;
        }
        const int ld = spec.axis == SweepAxis::Ld ? static_cast<int>(v) : spec.L_d;
        const double ratio = spec.axis == SweepAxis::PilotRatio ? v : spec.pilot_ratio;
        int iters = spec.stage2_iters;
        if (spec.axis == SweepAxis::Iterations)
            iters = static_cast<int>(*std::max_element(spec.values.begin(), spec.values.end()));
        const Dataset& data = stage2_dataset(ratio);
        const SlotTruth& truth = data.truth.slots.front();

        const auto key = std::make_tuple(c.baseline, ls, ld, ratio);
        auto it = stage2_cache.find(key);
        if (it == stage2_cache.end()) {
            const Stage1Result* s1 = nullptr;
            if (c.baseline != Baseline::NoPrior && c.baseline != Baseline::IdealPrior)
                s1 = stage1(stage1_variant(c.baseline), ls, spec.stage1_iters).first;
            Stage2Options opt;
            opt.max_dynamic = ld;
            opt.max_iters = iters;
            const auto t0 = std::chrono::steady_clock::now();
            Stage2Result r = run_stage2_baseline(c.baseline, data, s1 ? &s1->entry : nullptr, opt, ls);
            const double ms = elapsed_ms(t0);
            double err = std::numeric_limits<double>::quiet_NaN();
            if (c.baseline == Baseline::IdealPrior)
                err = std::abs(angle_diff(r.state.sync.mu, truth.epsilon));
            else if (s1 != nullptr)
                err = std::abs(angle_diff(r.state.sync.mu - sync_gauge(s1->state, stage1_data), truth.epsilon));
            it = stage2_cache.emplace(key, std::make_pair(std::move(r), ms)).first;
            c.sync_rmse_rad = err;
        } else {
            const auto& cached = it->second.first;
            // recompute the error from the cached run for later axis values
            if (c.baseline == Baseline::IdealPrior) {
                c.sync_rmse_rad = std::abs(angle_diff(cached.state.sync.mu, truth.epsilon));
            } else if (c.baseline != Baseline::NoPrior) {
                const Stage1Result* s1 = stage1(stage1_variant(c.baseline), ls, spec.stage1_iters).first;
                c.sync_rmse_rad =
                    std::abs(angle_diff(cached.state.sync.mu - sync_gauge(s1->state, stage1_data), truth.epsilon));
            } else {
                c.sync_rmse_rad = std::numeric_limits<double>::quiet_NaN();
            }
        }
        const Stage2Result& r = it->second.first;
        c.runtime_ms = record_runtime ? it->second.second : 0.0;
        if (spec.axis == SweepAxis::Iterations) {
            const int k = static_cast<int>(v);
            c.nmse_db = nmse_db(r.history[static_cast<size_t>(k - 1)], truth.channel);
            c.iterations = std::min(k, r.state.iterations);
        } else {
            c.nmse_db = nmse_db(r.reconstruction, truth.channel);
            c.iterations = r.state.iterations;
        }
    }
};

std::vector<CellResult> run_trial(const ExperimentSpec& spec, int trial, bool record_runtime)
{
    std::vector<CellResult> out;
    std::unique_ptr<TrialRunner> runner;
    std::string setup_error;
    try {
        runner = std::make_unique<TrialRunner>(spec, trial, record_runtime);
    } catch (const std::exception& e) {
        setup_error = e.what();
    }
    for (const double v : spec.values)
        for (const Baseline b : spec.baselines) {
            CellResult c;
            c.value = v;
            c.baseline = b;
            c.trial = trial;
            c.seed = cell_seed(spec.master_seed, v, b, trial);
            try {
                if (!runner)
                    throw Error(setup_error);
                runner->cell(c);
            } catch (const std::exception& e) {
                c.error = e.what();
                c.nmse_db = std::numeric_limits<double>::quiet_NaN();
                c.sync_rmse_rad = std::numeric_limits<double>::quiet_NaN();
            }
            out.push_back(c);
        }
    return out;
}

size_t index_of(const std::vector<double>& v, double x)
{
    return static_cast<size_t>(std::find(v.begin(), v.end(), x) - v.begin());
}

size_t index_of(const std::vector<Baseline>& v, Baseline x)
{
    return static_cast<size_t>(std::find(v.begin(), v.end(), x) - v.begin());
}

} // namespace

std::string to_string(Baseline b)
{
    for (const auto& [k, name] : kBaselineNames)
        if (k == b)
            return name;
    return "unknown";
}

Baseline baseline_from_string(const std::string& name)
{
    for (const auto& [k, n] : kBaselineNames)
        if (name == n)
            return k;
    throw InvalidArgument("unknown baseline '" + name + "'");
}

std::string to_string(SweepAxis a)
{
    for (const auto& [k, name] : kAxisNames)
        if (k == a)
            return name;
    return "unknown";
}

SweepAxis axis_from_string(const std::string& name)
{
    for (const auto& [k, n] : kAxisNames)
        if (name == n)
            return k;
    throw InvalidArgument("unknown sweep axis '" + name + "'");
}

std::uint64_t trial_seed(std::uint64_t master, int trial)
{
    return mix_seed(master, 0x747269616cULL, static_cast<std::uint64_t>(trial));
}

std::uint64_t cell_seed(std::uint64_t master, double value, Baseline baseline, int trial)
{
    return mix_seed(master, std::bit_cast<std::uint64_t>(value), static_cast<std::uint64_t>(baseline),
                    static_cast<std::uint64_t>(trial));
}

void validate(const ExperimentSpec& spec)
{
    std::vector<std::string> bad;
    if (spec.values.empty())
        bad.emplace_back("values: empty");
    for (const double v : spec.values)
        if (!(v > 0.0)) {
            bad.emplace_back("values: must be positive");
            break;
        }
    if (spec.axis != SweepAxis::PilotRatio)
        for (const double v : spec.values)
            if (v != std::floor(v)) {
                bad.emplace_back("values: must be integers on this axis");
                break;
            }
    if (spec.n_trials < 1)
        bad.emplace_back("n_trials: must be >= 1");
    if (spec.baselines.empty())
        bad.emplace_back("baselines: empty");
    if (spec.stage != 1 && spec.stage != 2)
        bad.emplace_back("stage: must be 1 or 2");
    if (spec.stage == 1 && (spec.axis == SweepAxis::PilotRatio || spec.axis == SweepAxis::Ld))
        bad.emplace_back("axis: stage 1 sweeps L_s or iterations only");
    for (const Baseline b : spec.baselines) {
        const bool stage1_ok = b == Baseline::Full || b == Baseline::NoSyncCal || b == Baseline::SeparateEst ||
                               b == Baseline::OmpInit;
        if (spec.stage == 1 && !stage1_ok)
            bad.emplace_back("baselines: " + to_string(b) + " is a stage 2 baseline");
    }
    if (spec.L_s < 0 || spec.L_d < 0)
        bad.emplace_back("L_s/L_d: must be >= 0");
    if (spec.stage1_slots < 1)
        bad.emplace_back("stage1_slots: must be >= 1");
    if (spec.stage1_iters < 1 || spec.stage2_iters < 1)
        bad.emplace_back("stage1_iters/stage2_iters: must be >= 1");
    if (!(spec.pilot_ratio >= 1.0))
        bad.emplace_back("pilot_ratio: must be >= 1");
    if (spec.axis == SweepAxis::PilotRatio)
        for (const double v : spec.values)
            if (v < 1.0) {
                bad.emplace_back("values: pilot ratios must be >= 1");
                break;
            }
    if (!bad.empty()) {
        std::ostringstream msg;
        msg << "invalid experiment spec:";
        for (const auto& b : bad)
            msg << "\n  " << b;
        throw InvalidArgument(msg.str());
    }
    ckm::validate(spec.scenario);
}

std::string spec_to_json(const ExperimentSpec& spec)
{
    json j = json::object();
    j["figure_id"] = spec.figure_id;
    j["scenario"] = json::parse(scenario_to_json(spec.scenario));
    j["stage"] = spec.stage;
    j["axis"] = to_string(spec.axis);
    j["values"] = spec.values;
    j["n_trials"] = spec.n_trials;
    json b = json::array();
    for (const Baseline x : spec.baselines)
        b.push_back(to_string(x));
    j["baselines"] = b;
    j["master_seed"] = spec.master_seed;
    j["L_s"] = spec.L_s;
    j["L_d"] = spec.L_d;
    j["stage1_slots"] = spec.stage1_slots;
    j["stage1_iters"] = spec.stage1_iters;
    j["stage2_iters"] = spec.stage2_iters;
    j["pilot_ratio"] = spec.pilot_ratio;
    return j.dump(2) + "\n";
}

std::string spec_hash(const ExperimentSpec& spec)
{
    std::uint64_t h = 0xcbf29ce484222325ULL;
    for (const unsigned char c : spec_to_json(spec)) {
        h ^= c;
        h *= 0x100000001b3ULL;
    }
    char buf[17];
    std::snprintf(buf, sizeof buf, "%016llx", static_cast<unsigned long long>(h));
    return buf;
}

ExperimentSpec spec_from_json(const std::string& text)
{
    ExperimentSpec spec;
    json j;
    try {
        j = json::parse(text);
    } catch (const json::parse_error& e) {
        throw FormatError(std::string("spec is not valid JSON: ") + e.what());
    }
    if (!j.is_object())
        throw FormatError("spec must be a JSON object");
    static const std::vector<std::string> known = {"figure_id",    "scenario",     "stage",        "axis",
                                                   "values",       "n_trials",     "baselines",    "master_seed",
                                                   "L_s",          "L_d",          "stage1_slots", "stage1_iters",
                                                   "stage2_iters", "pilot_ratio"};
    for (const auto& item : j.items())
        if (std::find(known.begin(), known.end(), item.key()) == known.end())
            throw FormatError("unknown spec field '" + item.key() + "'");
    try {
        if (j.contains("scenario")) {
            const json& s = j["scenario"];
            spec.scenario = s.is_string() ? preset(s.get<std::string>()) : scenario_from_json(s.dump());
        } else {
            spec.scenario = preset("los-desk");
        }
        spec.axis = axis_from_string(j.at("axis").get<std::string>());
        spec.stage = j.value("stage", spec.axis == SweepAxis::Ls ? 1 : 2);
        spec.values = j.at("values").get<std::vector<double>>();
        spec.n_trials = j.value("n_trials", 1);
        if (j.contains("baselines")) {
            spec.baselines.clear();
            for (const auto& b : j["baselines"])
                spec.baselines.push_back(baseline_from_string(b.get<std::string>()));
        }
        spec.master_seed = j.value("master_seed", std::uint64_t{1});
        spec.L_s = j.value("L_s", spec.L_s);
        spec.L_d = j.value("L_d", spec.L_d);
        spec.stage1_slots = j.value("stage1_slots", spec.stage1_slots);
        spec.stage1_iters = j.value("stage1_iters", spec.stage1_iters);
        spec.stage2_iters = j.value("stage2_iters", spec.stage2_iters);
        spec.pilot_ratio = j.value("pilot_ratio", spec.pilot_ratio);
        spec.figure_id = j.value("figure_id", spec.scenario.name + "-" + to_string(spec.axis));
    } catch (const json::exception& e) {
        throw FormatError(std::string("malformed spec: ") + e.what());
    }
    validate(spec);
    return spec;
}

Stage1Options stage1_options_for(Baseline b, int max_paths, int max_iters)
{
    Stage1Options o;
    o.max_paths = max_paths;
    o.max_iters = std::max(max_iters, 1);
    switch (b) {
    case Baseline::NoSyncCal:
        o.estimate_sync = false;
        break;
    case Baseline::SeparateEst:
        o.coupled = false;
        break;
    case Baseline::OmpInit:
        o.init = Stage1Init::Omp;
        break;
    default:
        break;
    }
    return o;
}

double stage1_nmse_db(const Stage1State& state, const Dataset& data)
{
    double err = 0.0, ref = 0.0;
    for (int t = 0; t < state.n_slots(); ++t) {
        const CMatrix& h = data.truth.slots[static_cast<size_t>(t)].static_channel;
        err += (reconstruct_slot(state, t) - h).squaredNorm();
        ref += h.squaredNorm();
    }
    if (!(ref > 0.0))
        throw InvalidArgument("nmse: truth has zero norm");
    if (err <= 0.0)
        return kNmseFloorDb;
    return std::max(kNmseFloorDb, 10.0 * std::log10(err / ref));
}

double sync_gauge(const Stage1State& state, const Dataset& data)
{
    cdouble acc{0.0, 0.0};
    for (int t = 0; t < state.n_slots(); ++t)
        acc += std::polar(1.0, state.sync[static_cast<size_t>(t)].mu - data.truth.slots[static_cast<size_t>(t)].epsilon);
    return std::arg(acc);
}

double stage1_sync_rmse(const Stage1State& state, const Dataset& data)
{
    const double g = sync_gauge(state, data);
    double acc = 0.0;
    for (int t = 0; t < state.n_slots(); ++t) {
        const double d =
            angle_diff(state.sync[static_cast<size_t>(t)].mu - g, data.truth.slots[static_cast<size_t>(t)].epsilon);
        acc += d * d;
    }
    return std::sqrt(acc / std::max(1, state.n_slots()));
}

Stage2Result run_stage2_baseline(Baseline b, const Dataset& data, const CkmEntry* entry, Stage2Options options,
                                 int L_s)
{
    const MeasurementSet& ms = data.measurements;
    switch (b) {
    case Baseline::NoSyncCal:
        options.fixed_sync = 0.0;
        return run_stage2(ms, entry, options);
    case Baseline::NoDynamicEst:
        options.max_dynamic = 0;
        return run_stage2(ms, entry, options);
    case Baseline::NoPrior:
        options.max_dynamic += L_s;
        return run_stage2(ms, nullptr, options);
    case Baseline::IdealPrior: {
        const SlotTruth& t = data.truth.slots.front();
        CkmEntry ideal;
        ideal.grid_id = ms.grid_index;
        ideal.paths = t.static_paths;
        for (const auto& c : t.static_coeffs)
            ideal.powers.push_back(std::norm(c));
        options.fixed_sync = t.epsilon;
        return run_stage2(ms, &ideal, options);
    }
    default:
        return run_stage2(ms, entry, options);
    }
}

std::vector<CellResult> run_experiment(const ExperimentSpec& spec, int threads, bool record_runtime)
{
    validate(spec);
    const int n = spec.n_trials;
    std::vector<std::vector<CellResult>> per_trial(static_cast<size_t>(n));
    std::atomic<int> next{0};
    auto worker = [&] {
        for (int t = next++; t < n; t = next++)
            per_trial[static_cast<size_t>(t)] = run_trial(spec, t, record_runtime);
    };
    const int workers = std::clamp(threads, 1, n);
    std::vector<std::thread> pool;
    for (int i = 1; i < workers; ++i)
        pool.emplace_back(worker);
    worker();
    for (auto& th : pool)
        th.join();

    std::vector<CellResult> rows;
    for (auto& v : per_trial)
        rows.insert(rows.end(), v.begin(), v.end());
    std::stable_sort(rows.begin(), rows.end(), [&](const CellResult& a, const CellResult& b) {
        const auto ka = std::make_tuple(index_of(spec.values, a.value), index_of(spec.baselines, a.baseline), a.trial);
        const auto kb = std::make_tuple(index_of(spec.values, b.value), index_of(spec.baselines, b.baseline), b.trial);
        return ka < kb;
    });
    return rows;
}

std::string results_to_csv(const ExperimentSpec& spec, const std::vector<CellResult>& rows)
{
    std::ostringstream out;
    out << kCsvHeader << '\n';
    const std::string axis = to_string(spec.axis);
    for (const auto& r : rows) {
        out << axis << ',' << format_double("%g", r.value) << ',' << to_string(r.baseline) << ',' << r.trial << ','
            << r.seed << ',' << format_double("%.6f", r.nmse_db) << ',' << format_double("%.6g", r.sync_rmse_rad)
            << ',' << format_double("%.3f", r.runtime_ms) << ',' << r.iterations << '\n';
    }
    return out.str();
}

SeriesPoint summarize(const std::vector<CellResult>& rows, double value, Baseline b)
{
    double sum = 0.0, sq = 0.0;
    int n = 0;
    for (const auto& r : rows)
        if (r.value == value && r.baseline == b && r.error.empty() && std::isfinite(r.nmse_db)) {
            sum += r.nmse_db;
            sq += r.nmse_db * r.nmse_db;
            ++n;
        }
    SeriesPoint p;
    p.count = n;
    if (n == 0) {
        p.mean = std::numeric_limits<double>::quiet_NaN();
        p.stderr_ = std::numeric_limits<double>::quiet_NaN();
        return p;
    }
    p.mean = sum / n;
    const double var = n > 1 ? std::max(0.0, (sq - n * p.mean * p.mean) / (n - 1)) : 0.0;
    p.stderr_ = std::sqrt(var / n);
    return p;
}

std::string plot_json(const ExperimentSpec& spec, const std::vector<CellResult>& rows)
{
    static const std::map<SweepAxis, const char*> labels = {
        {SweepAxis::Ls, "L_s"},
        {SweepAxis::Iterations, "iteration"},
        {SweepAxis::PilotRatio, "N/P"},
        {SweepAxis::Ld, "L_d"},
    };
    json j = json::object();
    j["figure_id"] = spec.figure_id;
    j["config_hash"] = spec_hash(spec);
    j["master_seed"] = spec.master_seed;
    j["x_label"] = labels.at(spec.axis);
    j["y_label"] = spec.stage == 1 ? "representation NMSE (dB)" : "channel NMSE (dB)";
    json series = json::array();
    for (const Baseline b : spec.baselines) {
        json s = json::object();
        s["name"] = to_string(b);
        json x = json::array(), mean = json::array(), se = json::array();
        for (const double v : spec.values) {
            const SeriesPoint p = summarize(rows, v, b);
            x.push_back(v);
            mean.push_back(std::isfinite(p.mean) ? json(p.mean) : json(nullptr));
            se.push_back(std::isfinite(p.stderr_) ? json(p.stderr_) : json(nullptr));
        }
        s["x"] = x;
        s["mean"] = mean;
        s["stderr"] = se;
        series.push_back(s);
    }
    j["series"] = series;
    return j.dump(2) + "\n";
}

} // namespace ckm
