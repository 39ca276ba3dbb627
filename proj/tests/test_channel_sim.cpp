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

#include <ckm/channel_sim.hpp>

#include "test_util.hpp"

#include <gtest/gtest.h>

#include <set>

namespace ckm
{
namespace
{
constexpr double kPi = std::numbers::pi;

CMatrix rebuild(const SlotTruth& s, const ArrayDims& dims)
{
    CMatrix h = CMatrix::Zero(dims.n_subcarriers, dims.antennas());
    for (size_t i = 0; i < s.static_paths.size(); ++i)
        add_path(h, s.static_paths[i], s.static_coeffs[i], s.epsilon, dims);
    for (size_t i = 0; i < s.dynamic_paths.size(); ++i)
        add_path(h, s.dynamic_paths[i], s.dynamic_coeffs[i], 0.0, dims);
    return h;
}

TEST(Presets, AllValidAndNamed)
{
    for (const auto& name : preset_names()) {
        const ScenarioConfig cfg = preset(name);
        EXPECT_EQ(cfg.name, name);
        EXPECT_NO_THROW(validate(cfg));
    }
    EXPECT_THROW(preset("nope"), InvalidArgument);
}

TEST(Validate, ListsEveryOffendingField)
{
    ScenarioConfig cfg;
    cfg.m1 = 0;
    cfg.dynamic_activity_prob = 2.0;
    try {
        validate(cfg);
        FAIL();
    } catch (const InvalidArgument& e) {
        const std::string msg = e.what();
        EXPECT_NE(msg.find("m1"), std::string::npos);
        EXPECT_NE(msg.find("dynamic_activity_prob"), std::string::npos);
    }
}

TEST(Validate, RejectsDelaysBeyondCyclicPrefix)
{
    ScenarioConfig cfg;
    cfg.dynamic_delay_max_us = 20.0;
    EXPECT_THROW(validate(cfg), InvalidArgument);
}

TEST(NormalizePath, MapsPhysicalToNormalized)
{
    ScenarioConfig cfg;
    const PathParams p = normalize_path(cfg, 1e-6, kPi / 6.0, 0.0);
    EXPECT_NEAR(p.tau, wrap_angle(kTwoPi * cfg.subcarrier_spacing_hz * 1e-6), 1e-12);
    EXPECT_NEAR(p.theta, kPi * 0.5, 1e-12);
    EXPECT_NEAR(p.phi, 0.0, 1e-12);
    const PathParams q = normalize_path(cfg, 0.0, 0.0, -kPi / 2.0);
    EXPECT_NEAR(q.phi, kPi, 1e-12);
}

TEST(PatternGain, FrontAndBack)
{
    EXPECT_DOUBLE_EQ(pattern_gain(0.0, 10.0), 1.0);
    EXPECT_NEAR(pattern_gain(kPi, 10.0), 0.1, 1e-12);
    EXPECT_NEAR(pattern_gain(kPi, 0.0), 1.0, 1e-12);
}

TEST(PilotMask, UniformStride)
{
    EXPECT_EQ(pilot_mask(8, 0.5, false, 1), (std::vector<int>{0, 2, 4, 6}));
    EXPECT_EQ(pilot_mask(8, 1.0, false, 1), all_rows(8));
    EXPECT_EQ(pilot_mask(8, 0.01, false, 1), (std::vector<int>{0}));
    EXPECT_THROW(pilot_mask(8, 0.0, false, 1), InvalidArgument);
    EXPECT_THROW(pilot_mask(8, 1.5, false, 1), InvalidArgument);
}

TEST(PilotMask, RandomIsSortedUniqueAndSeeded)
{
    const auto a = pilot_mask(64, 0.25, true, 9);
    ASSERT_EQ(a.size(), 16u);
    EXPECT_TRUE(std::is_sorted(a.begin(), a.end()));
    EXPECT_EQ(std::set<int>(a.begin(), a.end()).size(), a.size());
    EXPECT_EQ(a, pilot_mask(64, 0.25, true, 9));
    EXPECT_NE(a, pilot_mask(64, 0.25, true, 10));
}

TEST(Synthesize, NoiselessObservationEqualsChannelRows)
{
    ScenarioConfig cfg = preset("three-path");
    cfg.rng_seed = 3;
    const Dataset ds = synthesize_measurements(cfg, Stage::I, 3, 0.5);
    const auto& ms = ds.measurements;
    ASSERT_EQ(ms.n_slots(), 3);
    for (int t = 0; t < 3; ++t) {
        const auto& s = ds.truth.slots[static_cast<size_t>(t)];
        EXPECT_EQ(s.noise_variance, 0.0);
        EXPECT_EQ(s.static_paths.size(), 3u);
        EXPECT_LT((rebuild(s, ms.dims) - s.channel).norm(), 1e-10 * s.channel.norm());
        for (size_t i = 0; i < ms.pilots.size(); ++i)
            EXPECT_LT((ms.observations[static_cast<size_t>(t)].row(static_cast<Eigen::Index>(i)) -
                       s.channel.row(ms.pilots[i]))
                          .norm(),
                      1e-12);
    }
}

TEST(Synthesize, SyncErrorWithinConfiguredRange)
{
    ScenarioConfig cfg = preset("los-desk");
    cfg.sync_error_min_us = 0.2;
    cfg.sync_error_max_us = 0.4;
    const Dataset ds = synthesize_measurements(cfg, Stage::I, 20, 1.0);
    const double scale = kTwoPi * cfg.subcarrier_spacing_hz * 1e-6;
    for (const auto& s : ds.truth.slots) {
        EXPECT_GE(s.epsilon, 0.2 * scale - 1e-12);
        EXPECT_LE(s.epsilon, 0.4 * scale + 1e-12);
    }
}

TEST(Synthesize, NoiseVarianceMatchesSnr)
{
    ScenarioConfig cfg = preset("los-desk");
    cfg.n_dynamic_scatterers = 0;
    cfg.snr_db = 10.0;
    const Dataset ds = synthesize_measurements(cfg, Stage::I, 30, 1.0);
    double emp = 0.0, expect = 0.0;
    for (int t = 0; t < 30; ++t) {
        const auto& s = ds.truth.slots[static_cast<size_t>(t)];
        emp += (ds.measurements.observations[static_cast<size_t>(t)] - s.channel).squaredNorm();
        expect += s.noise_variance * static_cast<double>(s.channel.size());
        EXPECT_NEAR(s.noise_variance, s.static_channel.squaredNorm() / s.channel.size() / 10.0, 1e-12);
    }
    EXPECT_NEAR(emp / expect, 1.0, 0.05);
}

TEST(Synthesize, PilotBoostScalesNoise)
{
    ScenarioConfig cfg = preset("los-desk");
    cfg.n_dynamic_scatterers = 0;
    const double full = synthesize_measurements(cfg, Stage::II, 1, 1.0).truth.slots[0].noise_variance;
    const double quarter = synthesize_measurements(cfg, Stage::II, 1, 0.25).truth.slots[0].noise_variance;
    EXPECT_NEAR(quarter / full, 0.25, 1e-12);
    cfg.pilot_power_boost = false;
    const double flat = synthesize_measurements(cfg, Stage::II, 1, 0.25).truth.slots[0].noise_variance;
    EXPECT_NEAR(flat / full, 1.0, 1e-12);
}

TEST(Synthesize, DynamicPowerFollowsRatio)
{
    ScenarioConfig cfg = preset("los-desk");
    cfg.dynamic_activity_prob = 1.0;
    cfg.static_dynamic_power_ratio = 4.0;
    const Dataset ds = synthesize_measurements(cfg, Stage::II, 1, 1.0);
    const auto& s = ds.truth.slots[0];
    ASSERT_FALSE(s.dynamic_paths.empty());
    const double dyn = (s.channel - s.static_channel).squaredNorm();
    EXPECT_NEAR(s.static_channel.squaredNorm() / dyn, 4.0, 1e-9);
}

TEST(Synthesize, StageOneOmitsDynamicsByDefault)
{
    const ScenarioConfig cfg = preset("los-desk");
    const Dataset ds = synthesize_measurements(cfg, Stage::I, 4, 1.0);
    for (const auto& s : ds.truth.slots)
        EXPECT_TRUE(s.dynamic_paths.empty());
    ScenarioConfig with = cfg;
    with.stage1_dynamics = true;
    const Dataset d2 = synthesize_measurements(with, Stage::I, 4, 1.0);
    EXPECT_FALSE(d2.truth.slots[0].dynamic_paths.empty());
}

TEST(Synthesize, DeterministicPerSeed)
{
    ScenarioConfig cfg = preset("los-desk");
    const Dataset a = synthesize_measurements(cfg, Stage::II, 1, 0.5);
    const Dataset b = synthesize_measurements(cfg, Stage::II, 1, 0.5);
    EXPECT_EQ(a.measurements.observations[0], b.measurements.observations[0]);
    cfg.rng_seed = 2;
    const Dataset c = synthesize_measurements(cfg, Stage::II, 1, 0.5);
    EXPECT_NE(a.measurements.observations[0], c.measurements.observations[0]);
}

TEST(Synthesize, StaticGeometrySharedAcrossStages)
{
    ScenarioConfig cfg = preset("three-path");
    const Dataset s1 = synthesize_measurements(cfg, Stage::I, 2, 1.0);
    const Dataset s2 = synthesize_measurements(cfg, Stage::II, 1, 1.0);
    for (size_t i = 0; i < 3; ++i)
        EXPECT_NEAR(angle_diff(s1.truth.slots[0].static_paths[i].theta, s2.truth.slots[0].static_paths[i].theta),
                    0.0, 1e-12);
}

TEST(Synthesize, RejectsBadArguments)
{
    const ScenarioConfig cfg = preset("los-desk");
    EXPECT_THROW(synthesize_measurements(cfg, Stage::II, 2, 1.0), InvalidArgument);
    EXPECT_THROW(synthesize_measurements(cfg, Stage::I, 0, 1.0), InvalidArgument);
    EXPECT_THROW(synthesize_measurements(cfg, Stage::I, 1, 1.0, cfg.n_grids), InvalidArgument);
}

TEST(Geometry, PowersSumToOne)
{
    const auto clusters = generate_static_geometry(preset("nlos-desk"), 0);
    double total = 0.0;
    for (const auto& c : clusters)
        for (const auto& s : c.subpaths)
            total += s.power;
    EXPECT_NEAR(total, 1.0, 1e-12);
}

TEST(MixSeed, SensitiveToEveryWord)
{
    const auto base = mix_seed(1, 2, 3, 4);
    EXPECT_NE(base, mix_seed(2, 2, 3, 4));
    EXPECT_NE(base, mix_seed(1, 3, 3, 4));
    EXPECT_NE(base, mix_seed(1, 2, 4, 4));
    EXPECT_NE(base, mix_seed(1, 2, 3, 5));
    EXPECT_EQ(base, mix_seed(1, 2, 3, 4));
}

} // namespace
} // namespace ckm
