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

#include <gtest/gtest.h>

#include <filesystem>

namespace ckm
{
namespace
{
std::filesystem::path temp_path(const std::string& name)
{
    return std::filesystem::temp_directory_path() / ("ckm_io_" + std::to_string(::testing::UnitTest::GetInstance()->random_seed()) + "_" + name);
}

void expect_same(const Dataset& a, const Dataset& b)
{
    EXPECT_EQ(scenario_to_json(a.config), scenario_to_json(b.config));
    EXPECT_EQ(a.measurements.dims, b.measurements.dims);
    EXPECT_EQ(a.measurements.stage, b.measurements.stage);
    EXPECT_EQ(a.measurements.pilots, b.measurements.pilots);
    ASSERT_EQ(a.measurements.n_slots(), b.measurements.n_slots());
    for (int t = 0; t < a.measurements.n_slots(); ++t) {
        const auto& x = a.truth.slots[static_cast<size_t>(t)];
        const auto& y = b.truth.slots[static_cast<size_t>(t)];
        EXPECT_EQ(a.measurements.observations[static_cast<size_t>(t)], b.measurements.observations[static_cast<size_t>(t)]);
        EXPECT_EQ(x.channel, y.channel);
        EXPECT_EQ(x.static_channel, y.static_channel);
        EXPECT_EQ(x.epsilon, y.epsilon);
        EXPECT_EQ(x.static_paths, y.static_paths);
        EXPECT_EQ(x.static_coeffs, y.static_coeffs);
        EXPECT_EQ(x.dynamic_paths, y.dynamic_paths);
        EXPECT_EQ(x.dynamic_active, y.dynamic_active);
        EXPECT_EQ(a.measurements.poses[static_cast<size_t>(t)].position,
                  b.measurements.poses[static_cast<size_t>(t)].position);
    }
}

TEST(ScenarioJson, RoundTripsEveryPreset)
{
    for (const auto& name : preset_names()) {
        ScenarioConfig cfg = preset(name);
        cfg.rng_seed = 0xfeedbeefcafeULL;
        const std::string text = scenario_to_json(cfg);
        EXPECT_EQ(scenario_to_json(scenario_from_json(text)), text) << name;
    }
}

TEST(ScenarioJson, PresetWithOverrides)
{
    const ScenarioConfig cfg = scenario_from_json(R"({"preset": "nlos-desk", "m1": 4, "random_pilots": true})");
    EXPECT_EQ(cfg.n_static_clusters, preset("nlos-desk").n_static_clusters);
    EXPECT_EQ(cfg.m1, 4);
    EXPECT_TRUE(cfg.random_pilots);
}

TEST(ScenarioJson, InfiniteSnrSurvives)
{
    const ScenarioConfig cfg = scenario_from_json(scenario_to_json(preset("single-path")));
    EXPECT_TRUE(std::isinf(cfg.snr_db));
}

TEST(ScenarioJson, RejectsBadFields)
{
    EXPECT_THROW(scenario_from_json(R"({"bogus": 1})"), FormatError);
    EXPECT_THROW(scenario_from_json(R"({"m1": 1.5})"), FormatError);
    EXPECT_THROW(scenario_from_json(R"({"random_pilots": 1})"), FormatError);
    EXPECT_THROW(scenario_from_json(R"({"rng_seed": -3})"), FormatError);
    EXPECT_THROW(scenario_from_json("[1,2]"), FormatError);
    EXPECT_THROW(scenario_from_json("{not json"), FormatError);
    EXPECT_THROW(scenario_from_json(R"({"preset": "unknown"})"), InvalidArgument);
}

TEST(DatasetCodec, RoundTripIsExact)
{
    const Dataset ds = synthesize_measurements(preset("los-desk"), Stage::II, 1, 0.5);
    expect_same(ds, decode_dataset(encode_dataset(ds)));
    const Dataset s1 = synthesize_measurements(preset("three-path"), Stage::I, 4, 1.0);
    expect_same(s1, decode_dataset(encode_dataset(s1)));
}

TEST(DatasetCodec, FileRoundTrip)
{
    const Dataset ds = synthesize_measurements(preset("los-desk"), Stage::I, 2, 1.0);
    const auto path = temp_path("round.ckmd");
    write_dataset(path, ds);
    expect_same(ds, read_dataset(path));
    std::filesystem::remove(path);
}

TEST(DatasetCodec, RejectsCorruptInput)
{
    const std::string good = encode_dataset(synthesize_measurements(preset("single-path"), Stage::II, 1, 1.0));
    std::string bad_magic = good;
    bad_magic[0] = 'X';
    EXPECT_THROW(decode_dataset(bad_magic), FormatError);
    std::string bad_version = good;
    bad_version[4] = 99;
    EXPECT_THROW(decode_dataset(bad_version), FormatError);
    EXPECT_THROW(decode_dataset(good.substr(0, good.size() - 3)), FormatError);
    EXPECT_THROW(decode_dataset(good + "x"), FormatError);
    EXPECT_THROW(decode_dataset(""), FormatError);
}

TEST(DatasetIo, MissingFileIsAnError)
{
    EXPECT_THROW(read_dataset("/nonexistent/dir/x.ckmd"), Error);
}

TEST(TruthJson, ListsSlotsAndPaths)
{
    const Dataset ds = synthesize_measurements(preset("three-path"), Stage::I, 2, 1.0);
    const std::string text = truth_to_json(ds);
    EXPECT_NE(text.find("\"slots\""), std::string::npos);
    EXPECT_NE(text.find("\"static_paths\""), std::string::npos);
    EXPECT_NE(text.find("\"epsilon\""), std::string::npos);
}

} // namespace
} // namespace ckm
