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
#include <ckm/experiment.hpp>
#include <ckm/types.hpp>

#include <gtest/gtest.h>

#include <algorithm>
#include <cmath>
#include <json.hpp>
#include <sstream>
#include <string>
#include <vector>

namespace
{
using namespace ckm;

ExperimentSpec small_stage1()
{
    ExperimentSpec s;
    s.figure_id = "t1";
    s.scenario = preset("single-path");
    s.stage = 1;
    s.axis = SweepAxis::Ls;
    s.values = {1, 2};
    s.n_trials = 2;
    s.baselines = {Baseline::Full, Baseline::NoSyncCal};
    s.stage1_slots = 4;
    s.stage1_iters = 5;
    s.master_seed = 5;
    return s;
}

ExperimentSpec small_stage2()
{
    ExperimentSpec s = small_stage1();
    s.figure_id = "t2";
    s.stage = 2;
    s.axis = SweepAxis::Ld;
    s.values = {1};
    s.L_s = 2;
    s.stage2_iters = 3;
    s.baselines = {Baseline::Full, Baseline::NoDynamicEst, Baseline::NoPrior};
    return s;
}

std::vector<std::string> lines(const std::string& text)
{
    std::vector<std::string> out;
    std::istringstream in(text);
    for (std::string l; std::getline(in, l);)
        out.push_back(l);
    return out;
}

} // namespace

TEST(Experiment, NamesRoundTrip)
{
    for (Baseline b : {Baseline::Full, Baseline::NoSyncCal, Baseline::NoDynamicEst, Baseline::NoPrior,
                       Baseline::SeparateEst, Baseline::OmpInit, Baseline::IdealPrior})
        EXPECT_EQ(baseline_from_string(to_string(b)), b);
    for (SweepAxis a : {SweepAxis::Ls, SweepAxis::Iterations, SweepAxis::PilotRatio, SweepAxis::Ld})
        EXPECT_EQ(axis_from_string(to_string(a)), a);
    EXPECT_THROW(baseline_from_string("bogus"), Error);
    EXPECT_THROW(axis_from_string("bogus"), Error);
}

TEST(Experiment, SpecJsonRoundTrip)
{
    const ExperimentSpec a = small_stage2();
    const std::string text = spec_to_json(a);
    const ExperimentSpec b = spec_from_json(text);
    EXPECT_EQ(spec_to_json(b), text);
    EXPECT_EQ(spec_hash(a), spec_hash(b));
    EXPECT_EQ(b.values, a.values);
    EXPECT_EQ(b.baselines, a.baselines);
    EXPECT_EQ(b.master_seed, a.master_seed);
}

TEST(Experiment, HashTracksContent)
{
    ExperimentSpec a = small_stage1();
    ExperimentSpec b = a;
    b.master_seed += 1;
    EXPECT_NE(spec_hash(a), spec_hash(b));
    EXPECT_EQ(spec_hash(a).size(), 16u);
}

TEST(Experiment, MinimalSpecUsesDefaults)
{
    const ExperimentSpec s = spec_from_json(R"({"axis":"L_s","values":[4,8]})");
    EXPECT_EQ(s.stage, 1);
    EXPECT_EQ(s.scenario.name, "los-desk");
    EXPECT_EQ(s.n_trials, 1);
    ASSERT_EQ(s.baselines.size(), 1u);
    EXPECT_EQ(s.baselines[0], Baseline::Full);
}

TEST(Experiment, PresetNameAccepted)
{
    const ExperimentSpec s = spec_from_json(R"({"axis":"L_s","values":[1],"scenario":"three-path"})");
    EXPECT_EQ(s.scenario.name, "three-path");
}

TEST(Experiment, RejectsBadSpecs)
{
    EXPECT_THROW(spec_from_json("not json"), FormatError);
    EXPECT_THROW(spec_from_json("[1,2]"), FormatError);
    EXPECT_THROW(spec_from_json(R"({"axis":"L_s","values":[4],"typo":1})"), FormatError);
    EXPECT_THROW(spec_from_json(R"({"values":[4]})"), FormatError);
    EXPECT_THROW(spec_from_json(R"({"axis":"L_s","values":[]})"), InvalidArgument);
    EXPECT_THROW(spec_from_json(R"({"axis":"L_s","values":[2.5]})"), InvalidArgument);
    EXPECT_THROW(spec_from_json(R"({"axis":"L_s","values":[4],"n_trials":0})"), InvalidArgument);
    EXPECT_THROW(spec_from_json(R"({"axis":"pilot_ratio","stage":1,"values":[1]})"), Error);
    EXPECT_THROW(spec_from_json(R"({"axis":"L_s","values":[4],"baselines":["no_prior"]})"), InvalidArgument);
    EXPECT_THROW(spec_from_json(R"({"axis":"L_s","values":[4],"pilot_ratio":0.5})"), InvalidArgument);
}

TEST(Experiment, ValidateListsEveryProblem)
{
    ExperimentSpec s = small_stage1();
    s.values.clear();
    s.n_trials = 0;
    try {
        validate(s);
        FAIL() << "expected throw";
    } catch (const InvalidArgument& e) {
        const std::string what = e.what();
        EXPECT_NE(what.find("values"), std::string::npos);
        EXPECT_NE(what.find("n_trials"), std::string::npos);
    }
}

TEST(Experiment, CsvLayout)
{
    const ExperimentSpec s = small_stage1();
    const auto rows = run_experiment(s);
    ASSERT_EQ(rows.size(), s.values.size() * s.baselines.size() * static_cast<size_t>(s.n_trials));
    const auto ls = lines(results_to_csv(s, rows));
    ASSERT_EQ(ls.size(), rows.size() + 1);
    EXPECT_EQ(ls[0], kCsvHeader);
    for (size_t i = 1; i < ls.size(); ++i) {
        EXPECT_EQ(std::count(ls[i].begin(), ls[i].end(), ','), 8) << ls[i];
        EXPECT_EQ(ls[i].rfind(to_string(s.axis) + ",", 0), 0u) << ls[i];
    }
    // value-major, then baseline, then trial
    EXPECT_EQ(rows[0].value, 1.0);
    EXPECT_EQ(rows[0].baseline, Baseline::Full);
    EXPECT_EQ(rows[0].trial, 0);
    EXPECT_EQ(rows[1].trial, 1);
    EXPECT_EQ(rows[2].baseline, Baseline::NoSyncCal);
    EXPECT_EQ(rows.back().value, 2.0);
    for (const auto& r : rows) {
        EXPECT_TRUE(r.error.empty()) << r.error;
        EXPECT_TRUE(std::isfinite(r.nmse_db));
        EXPECT_EQ(r.runtime_ms, 0.0);
    }
}

TEST(Experiment, CellSeedsDistinct)
{
    const auto rows = run_experiment(small_stage1());
    for (size_t i = 0; i < rows.size(); ++i)
        for (size_t j = i + 1; j < rows.size(); ++j)
            EXPECT_NE(rows[i].seed, rows[j].seed);
}

TEST(Experiment, DeterministicAcrossRunsAndThreads)
{
    const ExperimentSpec s = small_stage2();
    const std::string a = results_to_csv(s, run_experiment(s, 1));
    const std::string b = results_to_csv(s, run_experiment(s, 1));
    const std::string c = results_to_csv(s, run_experiment(s, 2));
    EXPECT_EQ(a, b);
    EXPECT_EQ(a, c);
}

TEST(Experiment, SeedChangesResults)
{
    ExperimentSpec s = small_stage2();
    const std::string a = results_to_csv(s, run_experiment(s));
    s.master_seed = 6;
    EXPECT_NE(a, results_to_csv(s, run_experiment(s)));
}

TEST(Experiment, RecordRuntimeFillsColumn)
{
    ExperimentSpec s = small_stage1();
    s.values = {1};
    s.n_trials = 1;
    for (const auto& r : run_experiment(s, 1, true))
        EXPECT_GT(r.runtime_ms, 0.0);
}

TEST(Experiment, LdZeroMatchesNoDynamicEst)
{
    ExperimentSpec s = small_stage2();
    s.L_d = 0;
    s.axis = SweepAxis::Iterations;
    s.values = {3};
    s.baselines = {Baseline::Full, Baseline::NoDynamicEst};
    const auto rows = run_experiment(s);
    for (const auto& a : rows)
        for (const auto& b : rows)
            if (a.trial == b.trial && a.baseline != b.baseline) {
                EXPECT_EQ(a.nmse_db, b.nmse_db);
                EXPECT_EQ(a.sync_rmse_rad, b.sync_rmse_rad);
            }
}

TEST(Experiment, SummarizeMeanAndStderr)
{
    std::vector<CellResult> rows(4);
    const double v[] = {-10.0, -12.0, -14.0, 99.0};
    for (int i = 0; i < 4; ++i) {
        rows[static_cast<size_t>(i)].value = 4;
        rows[static_cast<size_t>(i)].nmse_db = v[i];
        rows[static_cast<size_t>(i)].trial = i;
    }
    rows[3].error = "boom";
    const SeriesPoint p = summarize(rows, 4, Baseline::Full);
    EXPECT_EQ(p.count, 3);
    EXPECT_NEAR(p.mean, -12.0, 1e-12);
    EXPECT_NEAR(p.stderr_, 2.0 / std::sqrt(3.0), 1e-12);
    EXPECT_TRUE(std::isnan(summarize(rows, 8, Baseline::Full).mean));
    EXPECT_EQ(summarize(rows, 4, Baseline::NoPrior).count, 0);
}

TEST(Experiment, PlotJsonShape)
{
    const ExperimentSpec s = small_stage1();
    const auto rows = run_experiment(s);
    const auto j = nlohmann::json::parse(plot_json(s, rows));
    EXPECT_EQ(j["figure_id"], s.figure_id);
    EXPECT_EQ(j["config_hash"], spec_hash(s));
    EXPECT_EQ(j["x_label"], "L_s");
    ASSERT_EQ(j["series"].size(), s.baselines.size());
    for (const auto& series : j["series"]) {
        EXPECT_EQ(series["x"].size(), s.values.size());
        EXPECT_EQ(series["mean"].size(), s.values.size());
        EXPECT_EQ(series["stderr"].size(), s.values.size());
        for (const auto& m : series["mean"])
            EXPECT_TRUE(m.is_number());
    }
}
