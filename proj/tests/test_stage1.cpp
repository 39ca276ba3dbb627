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

#include <ckm/stage1.hpp>

#include "stage_fixtures.hpp"

#include <gtest/gtest.h>

namespace ckm
{
namespace
{
std::vector<double> true_syncs(const Dataset& ds)
{
    std::vector<double> e;
    for (const auto& s : ds.truth.slots)
        e.push_back(s.epsilon);
    return e;
}

std::vector<double> est_syncs(const Stage1State& s)
{
    std::vector<double> e;
    for (const auto& b : s.sync)
        e.push_back(b.mu);
    return e;
}

Dataset single_path_data(std::uint64_t seed, int slots)
{
    ScenarioConfig cfg = preset("single-path");
    cfg.rng_seed = seed;
    return synthesize_measurements(cfg, Stage::I, slots, 1.0);
}

TEST(SyncObjective, DiagonalSumEqualsDirectForm)
{
    std::mt19937_64 rng(31);
    const ArrayDims dims{64, 2, 4};
    for (const bool half : {false, true}) {
        std::vector<int> rows = half ? pilot_mask(64, 0.5, true, 5) : all_rows(64);
        auto fx = test::random_stage1(rng, dims, rows, 3, 2);
        const CMatrix gram = expected_gram(fx.state.paths, dims, fx.state.rows);
        for (const bool coupled : {true, false}) {
            const SpectralObjective f = sync_objective(fx.state, fx.ms, 1, gram, coupled);
            for (int i = 0; i < 20; ++i) {
                const double eps = test::uniform_angle(rng);
                const double direct = test::direct_sync_objective(fx.state, fx.ms, 1, gram, eps, coupled);
                EXPECT_NEAR(f.value(eps), direct, 1e-8 * std::abs(direct)) << "half " << half;
            }
        }
    }
}

TEST(DetectPath, EmptyResidualStops)
{
    const ArrayDims dims{16, 2, 2};
    const std::vector<CMatrix> r(2, CMatrix::Zero(16, 4));
    const std::vector<double> sync(2, 0.0);
    EXPECT_FALSE(detect_path(r, sync, dims, {}, 1e-3, 3.0, {}).has_value());
}

TEST(DetectPath, RecoversSinglePathUnderPerSlotShifts)
{
    const Dataset ds = single_path_data(11, 4);
    const auto& truth = ds.truth.slots[0].static_paths[0];
    const std::vector<double> sync = true_syncs(ds);
    const auto found = detect_path(ds.measurements.observations, sync, ds.measurements.dims, ds.measurements.pilots,
                                   1e-6, 3.0, {});
    ASSERT_TRUE(found.has_value());
    EXPECT_NEAR(angle_diff(found->belief.tau.mu, truth.tau), 0.0, 1e-5);
    EXPECT_NEAR(angle_diff(found->belief.theta.mu, truth.theta), 0.0, 1e-5);
    EXPECT_NEAR(angle_diff(found->belief.phi.mu, truth.phi), 0.0, 1e-5);
}

TEST(DetectPath, StrongerOfTwoPathsFirst)
{
    const ArrayDims dims{64, 2, 4};
    const PathParams strong(1.0, 0.5, 2.0), weak(3.5, 4.0, 5.0);
    std::vector<CMatrix> r;
    std::vector<double> sync;
    for (int t = 0; t < 3; ++t) {
        CMatrix h = CMatrix::Zero(64, 8);
        add_path(h, strong, std::sqrt(10.0), 0.0, dims);
        add_path(h, weak, 1.0, 0.0, dims);
        r.push_back(h);
        sync.push_back(0.0);
    }
    const auto found = detect_path(r, sync, dims, {}, 1e-4, 3.0, {});
    ASSERT_TRUE(found.has_value());
    EXPECT_NEAR(angle_diff(found->belief.tau.mu, strong.tau), 0.0, 0.05);
    EXPECT_NEAR(angle_diff(found->belief.theta.mu, strong.theta), 0.0, 0.2);
}

TEST(DetectPath, ThresholdScalesWithNoise)
{
    const Dataset ds = single_path_data(12, 2);
    const double energy = ds.measurements.observations[0].squaredNorm();
    const std::vector<double> sync(2, 0.0);
    // a noise level far above the signal energy hides the path
    EXPECT_FALSE(detect_path(ds.measurements.observations, sync, ds.measurements.dims, {}, 10.0 * energy, 3.0, {}));
}

TEST(ResidualPerSlot, ExcludeLeavesPathIn)
{
    std::mt19937_64 rng(32);
    const ArrayDims dims{16, 2, 2};
    auto fx = test::random_stage1(rng, dims, all_rows(16), 2, 1);
    const CMatrix all = residual_per_slot(fx.state, fx.ms, 0);
    const CMatrix keep1 = residual_per_slot(fx.state, fx.ms, 0, 1);
    const auto& p = fx.state.paths[1];
    const CVector a = expected_shifted_steering(SteeringLength(16), p.tau, fx.state.sync[0]);
    const CVector b = expected_spatial_steering(p, dims);
    const CMatrix contrib = fx.state.coeffs[0].mean(1) * a * b.transpose();
    EXPECT_LT((keep1 - all - contrib).norm(), 1e-12);
}

TEST(EmUpdate, PowerAndNoiseFormulas)
{
    std::mt19937_64 rng(33);
    const ArrayDims dims{8, 1, 2};
    auto fx = test::random_stage1(rng, dims, all_rows(8), 2, 3);
    Stage1State s = fx.state;
    em_update(s, fx.ms);
    for (int l = 0; l < 2; ++l) {
        double acc = 0.0;
        for (const auto& c : fx.state.coeffs)
            acc += std::norm(c.mean(l)) + c.covariance(l, l).real();
        EXPECT_NEAR(s.powers[static_cast<size_t>(l)], acc / 3.0, 1e-12);
    }
    EXPECT_NEAR(s.noise_variance, residual_energy(fx.state, fx.ms) / (8.0 * 2.0 * 3.0), 1e-12);
}

TEST(RecenterSync, KeepsDelayPlusSyncAndZeroesMean)
{
    std::mt19937_64 rng(34);
    auto fx = test::random_stage1(rng, {16, 2, 2}, all_rows(16), 2, 4);
    for (auto& e : fx.state.sync)
        e = VonMisesBelief(0.3 + 0.1 * test::uniform_angle(rng), 100.0);
    Stage1State s = fx.state;
    recenter_sync(s);
    cdouble acc{0.0, 0.0};
    for (const auto& e : s.sync)
        acc += std::polar(1.0, e.mu);
    EXPECT_NEAR(std::arg(acc), 0.0, 1e-12);
    for (int t = 0; t < 4; ++t)
        EXPECT_LT((reconstruct_slot(s, t) - reconstruct_slot(fx.state, t)).norm(), 1e-10);
}

TEST(DelayObjective, PriorEntersFirstHarmonic)
{
    std::mt19937_64 rng(35);
    auto fx = test::random_stage1(rng, {16, 2, 2}, all_rows(16), 1, 2);
    std::vector<CMatrix> r{fx.ms.observations[0], fx.ms.observations[1]};
    std::vector<cdouble> c{fx.state.coeffs[0].mean(0), fx.state.coeffs[1].mean(0)};
    const PathEvidence ev{r, c, fx.state.sync, fx.state.dims, {}, 0.3};
    const VonMisesBelief prior(1.2, 5.0);
    CVector diff = delay_objective(ev, fx.state.paths[0], prior).eta() - delay_objective(ev, fx.state.paths[0]).eta();
    EXPECT_NEAR(std::abs(diff(1) - 4.0 * std::polar(5.0, -1.2)), 0.0, 1e-12);
    diff(1) = 0.0;
    EXPECT_EQ(diff.norm(), 0.0);
}

TEST(RunStage1, SinglePathExactUpToGauge)
{
    const Dataset ds = single_path_data(13, 4);
    const Stage1Result r = run_stage1(ds.measurements);
    ASSERT_EQ(r.entry.size(), 1);
    const double d = test::sync_shift(est_syncs(r.state), true_syncs(ds));
    const auto& truth = ds.truth.slots[0].static_paths[0];
    EXPECT_NEAR(angle_diff(r.entry.paths[0].tau + d, truth.tau), 0.0, 1e-4);
    EXPECT_NEAR(angle_diff(r.entry.paths[0].theta, truth.theta), 0.0, 1e-4);
    EXPECT_NEAR(angle_diff(r.entry.paths[0].phi, truth.phi), 0.0, 1e-4);
    for (int t = 0; t < 4; ++t) {
        EXPECT_NEAR(angle_diff(r.state.sync[static_cast<size_t>(t)].mu - d, ds.truth.slots[static_cast<size_t>(t)].epsilon),
                    0.0, 1e-4);
        EXPECT_LT(nmse_db(reconstruct_slot(r.state, t), ds.truth.slots[static_cast<size_t>(t)].channel), -60.0);
    }
    EXPECT_EQ(r.entry.gram_inverse.rows(), 1);
}

TEST(RunStage1, ThreePathNoiselessReconstructs)
{
    ScenarioConfig cfg = preset("three-path");
    cfg.rng_seed = 5;
    const Dataset ds = synthesize_measurements(cfg, Stage::I, 4, 1.0);
    Stage1Options opt;
    opt.max_paths = 3;
    const Stage1Result r = run_stage1(ds.measurements, opt);
    EXPECT_EQ(r.entry.size(), 3);
    for (int t = 0; t < 4; ++t)
        EXPECT_LT(nmse_db(reconstruct_slot(r.state, t), ds.truth.slots[static_cast<size_t>(t)].channel), -30.0);
}

TEST(RunStage1, BudgetZeroGivesEmptyEntry)
{
    const Dataset ds = single_path_data(14, 2);
    Stage1Options opt;
    opt.max_paths = 0;
    const Stage1Result r = run_stage1(ds.measurements, opt);
    EXPECT_EQ(r.entry.size(), 0);
    EXPECT_EQ(r.entry.gram_inverse.size(), 0);
    opt.max_paths = -1;
    EXPECT_THROW(run_stage1(ds.measurements, opt), InvalidArgument);
}

TEST(RunStage1, NoSyncEstimationKeepsZeroSync)
{
    const Dataset ds = single_path_data(15, 3);
    Stage1Options opt;
    opt.estimate_sync = false;
    const Stage1Result r = run_stage1(ds.measurements, opt);
    for (const auto& e : r.state.sync)
        EXPECT_EQ(e.mu, 0.0);
}

TEST(RunStage1, OmpInitFindsSinglePath)
{
    const Dataset ds = single_path_data(16, 3);
    Stage1Options opt;
    opt.init = Stage1Init::Omp;
    opt.max_paths = 1;
    const Stage1Result r = run_stage1(ds.measurements, opt);
    ASSERT_EQ(r.entry.size(), 1);
    EXPECT_NEAR(angle_diff(r.entry.paths[0].theta, ds.truth.slots[0].static_paths[0].theta), 0.0, 1e-3);
}

TEST(RunStage1, ResidualHistoryNonIncreasingOnNoiselessData)
{
    ScenarioConfig cfg = preset("three-path");
    cfg.rng_seed = 6;
    const Dataset ds = synthesize_measurements(cfg, Stage::I, 3, 1.0);
    const Stage1Result r = run_stage1(ds.measurements);
    const auto& h = r.state.residual_history;
    ASSERT_GE(h.size(), 3u);
    EXPECT_LT(h.back(), 1e-3 * h.front());
}

TEST(InitStage1, RequiresSlots)
{
    MeasurementSet ms;
    ms.dims = {4, 1, 1};
    EXPECT_THROW(init_stage1(ms), InvalidArgument);
}

} // namespace
} // namespace ckm
