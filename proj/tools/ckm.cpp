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

#include <ckm/ckm_table.hpp>
#include <ckm/dataset_io.hpp>
#include <ckm/experiment.hpp>

#include <CLI11.hpp>
#include <json.hpp>

#include <chrono>
#include <cstdio>
#include <filesystem>
#include <iostream>
#include <optional>

namespace fs = std::filesystem;
using json = nlohmann::ordered_json;

namespace
{
struct GenerateArgs
{
    std::string preset = "los-desk";
    std::string config;
    std::optional<std::uint64_t> seed;
    int stage = 1;
    int slots = 0;
    double pilot_fraction = 1.0;
    int grid = 0;
    std::string out;
};

struct Stage1Args
{
    std::string data;
    std::string out;
    std::string baseline = "full";
    int max_paths = 12;
    int iters = 30;
    bool append = false;
};

struct Stage2Args
{
    std::string data;
    std::string table;
    std::string out;
    std::string baseline = "full";
    int max_dynamic = 4;
    int iters = 10;
    int static_budget = -1;
};

struct BenchArgs
{
    std::string config;
    std::string out;
    std::string plot;
    std::optional<std::uint64_t> seed;
    int threads = 1;
    bool record_runtime = false;
};

double ms_since(std::chrono::steady_clock::time_point t0)
{
    return std::chrono::duration<double, std::milli>(std::chrono::steady_clock::now() - t0).count();
}

std::string snr_text(double db)
{
    if (std::isinf(db))
        return "inf";
    char buf[32];
    std::snprintf(buf, sizeof buf, "%g dB", db);
    return buf;
}

void print_summary(const ckm::Dataset& d, std::ostream& os)
{
    const auto& ms = d.measurements;
    const bool s1 = ms.stage == ckm::Stage::I;
    os << "scenario " << d.config.name << ", stage " << (s1 ? "I" : "II") << ", grid " << ms.grid_index << "\n"
       << "  N=" << ms.dims.n_subcarriers << " M=" << ms.dims.m1 << "x" << ms.dims.m2 << " T=" << ms.n_slots()
       << " P=" << ms.pilots.size() << "\n"
       << "  SNR=" << snr_text(s1 ? d.config.snr_db : d.config.stage2_snr_db) << " seed=" << d.config.rng_seed
       << "\n";
    if (!d.truth.slots.empty()) {
        const auto& t = d.truth.slots.front();
        int active = 0;
        for (const bool a : t.dynamic_active)
            active += a ? 1 : 0;
        os << "  static paths=" << t.static_paths.size() << " dynamic subpaths=" << t.dynamic_paths.size()
           << " (active " << active << ")\n";
    }
}

int cmd_generate(const GenerateArgs& a)
{
    ckm::ScenarioConfig cfg = a.config.empty() ? ckm::preset(a.preset) : ckm::load_scenario(a.config);
    if (a.seed)
        cfg.rng_seed = *a.seed;
    ckm::validate(cfg);
    if (!(a.pilot_fraction > 0.0 && a.pilot_fraction <= 1.0))
        throw ckm::InvalidArgument("--pilot-fraction must be in (0, 1], got " + std::to_string(a.pilot_fraction));
    const ckm::Stage stage = a.stage == 2 ? ckm::Stage::II : ckm::Stage::I;
    const int slots = a.slots > 0 ? a.slots : (stage == ckm::Stage::I ? 8 : 1);
    const ckm::Dataset d = ckm::synthesize_measurements(cfg, stage, slots, a.pilot_fraction, a.grid);
    ckm::write_dataset(a.out, d);
    print_summary(d, std::cout);
    std::cout << "wrote " << a.out << " and " << a.out << ".truth.json\n";
    return 0;
}

int cmd_stage1(const Stage1Args& a)
{
    const ckm::Dataset d = ckm::read_dataset(a.data);
    if (d.measurements.stage != ckm::Stage::I)
        throw ckm::InvalidArgument("stage1 expects a stage I dataset (generate --stage 1)");
    const ckm::Baseline b = ckm::baseline_from_string(a.baseline);
    if (b != ckm::Baseline::Full && b != ckm::Baseline::NoSyncCal && b != ckm::Baseline::SeparateEst &&
        b != ckm::Baseline::OmpInit)
        throw ckm::InvalidArgument("baseline '" + a.baseline + "' has no stage I variant");
    const auto t0 = std::chrono::steady_clock::now();
    const ckm::Stage1Result r = ckm::run_stage1(d.measurements, ckm::stage1_options_for(b, a.max_paths, a.iters));
    const double ms = ms_since(t0);

    ckm::CkmTable table;
    table.dims = d.measurements.dims;
    if (a.append && fs::exists(a.out)) {
        table = ckm::read_table(a.out);
        if (!(table.dims == d.measurements.dims))
            throw ckm::InvalidArgument("existing table dimensions do not match the dataset");
    }
    table.put(r.entry);
    ckm::write_table(a.out, table);

    std::printf("paths %d, iterations %d, noise variance %.4g, %.1f ms\n", r.entry.size(), r.state.iteration,
                r.state.noise_variance, ms);
    if (!d.truth.slots.empty()) {
        std::printf("representation NMSE %.2f dB\n", ckm::stage1_nmse_db(r.state, d));
        std::printf("sync RMSE %.4g rad\n", ckm::stage1_sync_rmse(r.state, d));
    }
    std::cout << "wrote " << a.out << "\n";
    return 0;
}

json path_json(const ckm::PathParams& p)
{
    return json{{"tau", p.tau}, {"theta", p.theta}, {"phi", p.phi}};
}

int cmd_stage2(const Stage2Args& a)
{
    const ckm::Dataset d = ckm::read_dataset(a.data);
    if (d.measurements.stage != ckm::Stage::II)
        throw ckm::InvalidArgument("stage2 expects a stage II dataset (generate --stage 2)");
    const ckm::Baseline b = ckm::baseline_from_string(a.baseline);
    std::optional<ckm::CkmTable> table;
    const ckm::CkmEntry* entry = nullptr;
    const bool needs_table = b != ckm::Baseline::NoPrior && b != ckm::Baseline::IdealPrior;
    if (!a.table.empty()) {
        table = ckm::read_table(a.table);
        const auto& td = table->dims;
        const auto& dd = d.measurements.dims;
        if (!(td == dd)) {
            std::ostringstream msg;
            msg << "table dimensions N=" << td.n_subcarriers << " M=" << td.m1 << "x" << td.m2
                << " do not match dataset N=" << dd.n_subcarriers << " M=" << dd.m1 << "x" << dd.m2;
            throw ckm::InvalidArgument(msg.str());
        }
        entry = table->find(d.measurements.grid_index);
        if (entry == nullptr && needs_table)
            throw ckm::InvalidArgument("table has no entry for grid " + std::to_string(d.measurements.grid_index));
    } else if (needs_table) {
        throw ckm::InvalidArgument("stage2 needs --table unless --baseline no_prior or ideal_prior");
    }
    ckm::Stage2Options opt;
    opt.max_dynamic = a.max_dynamic;
    opt.max_iters = a.iters;
    const int ls = a.static_budget >= 0 ? a.static_budget : (entry ? entry->size() : 12);
    const auto t0 = std::chrono::steady_clock::now();
    const ckm::Stage2Result r = ckm::run_stage2_baseline(b, d, entry, opt, ls);
    const double ms = ms_since(t0);

    json out = json::object();
    out["baseline"] = a.baseline;
    out["epsilon"] = r.state.sync.mu;
    out["noise_variance"] = r.state.noise_variance;
    json st = json::array();
    for (int l = 0; l < r.state.n_static(); ++l) {
        json p = path_json(r.state.static_paths[static_cast<size_t>(l)]);
        const auto c = r.state.static_coeffs.mean(l);
        p["coeff"] = {c.real(), c.imag()};
        st.push_back(p);
    }
    out["static_paths"] = st;
    json dy = json::array();
    for (const auto& p : r.state.dynamic) {
        json j = path_json(p.belief.mean());
        j["lambda"] = p.coeff.lambda;
        j["coeff"] = {p.coeff.mean.real(), p.coeff.mean.imag()};
        j["variance"] = p.coeff.variance;
        dy.push_back(j);
    }
    out["dynamic_paths"] = dy;
    out["iterations"] = r.state.iterations;
    out["converged"] = r.converged;
    out["wall_ms"] = ms;
    if (!d.truth.slots.empty()) {
        const double nmse = ckm::nmse_db(r.reconstruction, d.truth.slots.front().channel);
        out["nmse_db"] = nmse;
        std::printf("channel NMSE %.2f dB\n", nmse);
    }
    std::printf("sync %.5f rad, dynamic paths %d, iterations %d, %.1f ms\n", r.state.sync.mu, r.state.n_dynamic(),
                r.state.iterations, ms);
    if (!a.out.empty()) {
        ckm::write_file(a.out, out.dump(2) + "\n");
        std::cout << "wrote " << a.out << "\n";
    }
    return 0;
}

int cmd_bench(const BenchArgs& a)
{
    ckm::ExperimentSpec spec = ckm::spec_from_json(ckm::read_file(a.config));
    if (a.seed)
        spec.master_seed = *a.seed;
    if (a.threads < 1)
        throw ckm::InvalidArgument("--threads must be >= 1");
    const auto rows = ckm::run_experiment(spec, a.threads, a.record_runtime);
    ckm::write_file(a.out, ckm::results_to_csv(spec, rows));
    const std::string plot = a.plot.empty() ? fs::path(a.out).replace_extension(".plot.json").string() : a.plot;
    ckm::write_file(plot, ckm::plot_json(spec, rows));

    int failed = 0;
    for (const auto& r : rows)
        if (!r.error.empty()) {
            ++failed;
            std::cerr << "cell " << ckm::to_string(spec.axis) << "=" << r.value << " " << ckm::to_string(r.baseline)
                      << " trial " << r.trial << " failed: " << r.error << "\n";
        }
    std::cout << spec.figure_id << " (config " << ckm::spec_hash(spec) << ")\n";
    for (const double v : spec.values)
        for (const auto b : spec.baselines) {
            const auto p = ckm::summarize(rows, v, b);
            std::printf("  %s=%-6g %-15s %8.2f dB +- %.2f (%d trials)\n", ckm::to_string(spec.axis).c_str(), v,
                        ckm::to_string(b).c_str(), p.mean, p.stderr_, p.count);
        }
    std::cout << "wrote " << a.out << " and " << plot << "\n";
    if (failed > 0)
        std::cerr << failed << " of " << rows.size() << " cells failed\n";
    return 0;
}

int cmd_inspect(const std::string& path)
{
    const std::string bytes = ckm::read_file(path);
    if (bytes.rfind("CKMD", 0) == 0) {
        const ckm::Dataset d = ckm::decode_dataset(bytes);
        print_summary(d, std::cout);
        for (int t = 0; t < d.measurements.n_slots(); ++t) {
            const auto& s = d.truth.slots[static_cast<size_t>(t)];
            std::printf("  slot %d: eps=%.5f noise=%.4g |y|^2=%.4g\n", t, s.epsilon, s.noise_variance,
                        d.measurements.observations[static_cast<size_t>(t)].squaredNorm());
        }
        return 0;
    }
    json j;
    try {
        j = json::parse(bytes);
    } catch (const json::parse_error&) {
        throw ckm::FormatError("'" + path + "' is neither a dataset nor a JSON document");
    }
    if (j.is_object() && j.value("format", "") == "ckm-table") {
        const ckm::CkmTable t = ckm::read_table(path);
        std::printf("ckm table N=%d M=%dx%d, %zu grid(s)\n", t.dims.n_subcarriers, t.dims.m1, t.dims.m2,
                    t.grids.size());
        for (const auto& g : t.grids) {
            std::printf("  grid %d: %d paths, noise %.4g, gram cache %s\n", g.grid_id, g.size(), g.noise_variance,
                        g.gram_inverse.size() ? "yes" : "no");
            for (int l = 0; l < g.size(); ++l) {
                const auto& p = g.paths[static_cast<size_t>(l)];
                std::printf("    tau=%.5f theta=%.5f phi=%.5f rho=%.4g\n", p.tau, p.theta, p.phi,
                            g.powers[static_cast<size_t>(l)]);
            }
        }
        return 0;
    }
    if (j.is_object() && j.contains("axis")) {
        const ckm::ExperimentSpec s = ckm::spec_from_json(bytes);
        std::cout << "experiment spec " << s.figure_id << " (config " << ckm::spec_hash(s) << ")\n"
                  << "  stage " << s.stage << ", axis " << ckm::to_string(s.axis) << ", " << s.values.size()
                  << " values x " << s.baselines.size() << " baselines x " << s.n_trials << " trials\n";
        return 0;
    }
    const ckm::ScenarioConfig cfg = ckm::scenario_from_json(bytes);
    ckm::validate(cfg);
    std::cout << ckm::scenario_to_json(cfg);
    return 0;
}

} // namespace

int main(int argc, char** argv)
{
    CLI::App app{"Dynamic channel knowledge map construction"};
    app.require_subcommand(1);
    app.set_version_flag("--version", "ckm 0.1.0");

    GenerateArgs gen;
    auto* g = app.add_subcommand("generate", "synthesize a measurement dataset");
    g->add_option("--preset", gen.preset, "scenario preset")->check(CLI::IsMember(ckm::preset_names()));
    g->add_option("--config", gen.config, "scenario JSON (overrides --preset)")->check(CLI::ExistingFile);
    g->add_option("--seed", gen.seed, "scenario RNG seed");
    g->add_option("--stage", gen.stage, "1: historical slots, 2: one real-time slot")->check(CLI::Range(1, 2));
    g->add_option("--slots", gen.slots, "number of slots (default 8 for stage 1)");
    g->add_option("--pilot-fraction", gen.pilot_fraction, "P / N");
    g->add_option("--grid", gen.grid, "grid index")->check(CLI::NonNegativeNumber);
    g->add_option("--out", gen.out, "output dataset path")->required();

    Stage1Args s1;
    auto* c1 = app.add_subcommand("stage1", "build a table entry from historical data");
    c1->add_option("--data", s1.data, "stage I dataset")->required()->check(CLI::ExistingFile);
    c1->add_option("--out", s1.out, "table path")->required();
    c1->add_option("--baseline", s1.baseline, "full, no_sync_cal, separate_est or omp_init");
    c1->add_option("--max-paths", s1.max_paths, "path budget L_s")->check(CLI::NonNegativeNumber);
    c1->add_option("--iters", s1.iters, "iteration cap")->check(CLI::PositiveNumber);
    c1->add_flag("--append", s1.append, "merge into an existing table");

    Stage2Args s2;
    auto* c2 = app.add_subcommand("stage2", "estimate one real-time slot");
    c2->add_option("--data", s2.data, "stage II dataset")->required()->check(CLI::ExistingFile);
    c2->add_option("--table", s2.table, "table from stage1")->check(CLI::ExistingFile);
    c2->add_option("--out", s2.out, "result JSON");
    c2->add_option("--baseline", s2.baseline, "estimator variant");
    c2->add_option("--max-dynamic", s2.max_dynamic, "dynamic budget L_d")->check(CLI::NonNegativeNumber);
    c2->add_option("--iters", s2.iters, "iteration cap")->check(CLI::PositiveNumber);
    c2->add_option("--static-budget", s2.static_budget, "L_s for no_prior (default: table size or 12)");

    BenchArgs bench;
    auto* cb = app.add_subcommand("bench", "run a Monte-Carlo sweep");
    cb->add_option("--config", bench.config, "experiment spec JSON")->required()->check(CLI::ExistingFile);
    cb->add_option("--out", bench.out, "CSV output")->required();
    cb->add_option("--plot", bench.plot, "plot-data JSON (default: <out>.plot.json)");
    cb->add_option("--seed", bench.seed, "override the master seed");
    cb->add_option("--threads", bench.threads, "worker threads");
    cb->add_flag("--record-runtime", bench.record_runtime, "fill runtime_ms (makes CSVs machine dependent)");

    std::string inspect_path;
    auto* ci = app.add_subcommand("inspect", "summarize a dataset, table, spec or scenario file");
    ci->add_option("file", inspect_path, "file to inspect")->required()->check(CLI::ExistingFile);

    try {
        app.parse(argc, argv);
    } catch (const CLI::ParseError& e) {
        const int code = app.exit(e);
        return code == 0 ? 0 : 2;
    }

    try {
        if (*g)
            return cmd_generate(gen);
        if (*c1)
            return cmd_stage1(s1);
        if (*c2)
            return cmd_stage2(s2);
        if (*cb)
            return cmd_bench(bench);
        return cmd_inspect(inspect_path);
    } catch (const ckm::Error& e) {
        std::cerr << "error: " << e.what() << "\n";
        return 1;
    } catch (const std::exception& e) {
        std::cerr << "error: " << e.what() << "\n";
        return 1;
    }
}
