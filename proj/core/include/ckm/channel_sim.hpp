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

#ifndef CKM_CHANNEL_SIM_HPP
#define CKM_CHANNEL_SIM_HPP

#include <ckm/array_manifold.hpp>
#include <ckm/types.hpp>

#include <array>
#include <cstdint>
#include <string>
#include <vector>

namespace ckm
{
/// Parametric user-side radiation pattern: per-axis power gain
/// g(x) = a + (1 - a) cos^2(x / 2) with a = 10^(-front_back_ratio_db / 10).
/// A ratio of 0 dB gives an isotropic antenna.
struct RotationGainModel
{
    double front_back_ratio_db = 10.0;
    double vertical_front_back_ratio_db = 3.0;
};

struct ScenarioConfig
{
    std::string name = "custom";
    double carrier_frequency_hz = 28e9;
    double subcarrier_spacing_hz = 90e3;
    int n_subcarriers = 64;
    int m1 = 2;
    int m2 = 4;

    double grid_size_m = 1.0;
    int n_grids = 4;
    /// Base station distance from the first grid centre.
    double bs_distance_m = 60.0;

    int n_static_clusters = 4;
    int subpaths_per_cluster = 3;
    /// Intra-cluster angular spread of static clusters.
    double angular_spread_deg = 4.0;
    /// Mean of the exponential cluster-delay distribution.
    double delay_spread_us = 0.3;
    /// Intra-cluster delay spread.
    double cluster_delay_spread_us = 0.03;
    /// Rician boost of the first cluster (LoS); <= 0 disables.
    double los_k_factor_db = 6.0;

    /// Exponential kernel distance of the cluster-mean random field.
    double correlation_distance_m = 10.0;
    /// Standard deviations of the random field.
    double field_delay_std_us = 0.01;
    double field_angle_std_deg = 1.0;

    int n_dynamic_scatterers = 1;
    double dynamic_activity_prob = 0.5;
    int dynamic_subpaths_min = 10;
    int dynamic_subpaths_max = 20;
    double dynamic_angular_spread_deg = 15.0;
    double dynamic_delay_min_us = 0.0;
    double dynamic_delay_max_us = 1.0;
    double static_dynamic_power_ratio = 10.0;

    /// SNR of Stage-I (historical) data and of Stage-II (real-time) data.
    /// Infinite values switch noise off.
    double snr_db = 25.0;
    double stage2_snr_db = 5.0;

    double sync_error_min_us = 0.0;
    double sync_error_max_us = 1.0;

    RotationGainModel rotation_gain;
    /// Random-walk step between historical slots.
    double walk_step_m = 0.15;

    /// Keep dynamic scatterers in Stage-I data (off: dynamics-free history).
    bool stage1_dynamics = false;
    /// Random pilot subset instead of a uniform stride.
    bool random_pilots = false;
    /// Keep the energy of an OFDM symbol fixed when fewer pilots are sent:
    /// pilot power grows by N/P, so the noise on each observed entry shrinks
    /// by P/N. Off: every pilot sees the full-band per-entry noise.
    bool pilot_power_boost = true;

    std::uint64_t rng_seed = 1;

    ArrayDims dims() const { return {n_subcarriers, m1, m2}; }
};

/// Throws InvalidArgument listing every offending field.
void validate(const ScenarioConfig& cfg);

/// Named scenario presets: los-desk, nlos-desk, single-path, three-path.
ScenarioConfig preset(const std::string& name);
std::vector<std::string> preset_names();

struct UserPose
{
    std::array<double, 3> position{0.0, 0.0, 0.0};
    double rotation_h = 0.0;
    double rotation_v = 0.0;
};

/// One static subpath at the grid centre.
struct SubpathDescriptor
{
    double delay_s = 0.0;
    double azimuth_rad = 0.0;
    double elevation_rad = 0.0;
    /// Power share; sums to one over the grid.
    double power = 0.0;
    double departure_h = 0.0;
    double departure_v = 0.0;
    /// Unit-modulus polarization coupling.
    cdouble coupling{1.0, 0.0};
};

struct ClusterDescriptor
{
    double delay_s = 0.0;
    double azimuth_rad = 0.0;
    double elevation_rad = 0.0;
    /// Random-field offsets of the cluster mean at every grid centre.
    std::vector<double> field_delay_s;
    std::vector<double> field_azimuth_rad;
    std::vector<double> field_elevation_rad;
    std::vector<SubpathDescriptor> subpaths;
};

/// Static clusters of a grid, seeded by cfg.rng_seed. The cluster means are
/// a Gaussian random field over grid centres; the descriptors returned hold
/// the means evaluated at the centre of grid_index.
std::vector<ClusterDescriptor> generate_static_geometry(const ScenarioConfig& cfg, int grid_index);

/// Centre of a grid cell (grids form one row along x).
std::array<double, 3> grid_center(const ScenarioConfig& cfg, int grid_index);

/// Normalized (tau, theta, phi) of a subpath given its physical delay and angles.
PathParams normalize_path(const ScenarioConfig& cfg, double delay_s, double azimuth_rad,
                          double elevation_rad);

/// Per-axis pattern power gain at a departure angle relative to boresight.
double pattern_gain(double angle, double front_back_ratio_db);

/// Complex gain of one subpath seen from a pose. path_length_m is the
/// propagation distance used for the carrier phase.
cdouble path_gain(const SubpathDescriptor& sub, const UserPose& pose, const ScenarioConfig& cfg,
                  double path_length_m);

enum class Stage
{
    I = 1,
    II = 2
};

struct MeasurementSet
{
    ArrayDims dims;
    Stage stage = Stage::I;
    int grid_index = 0;
    /// Selected subcarriers, strictly increasing.
    std::vector<int> pilots;
    /// One P x M matrix per slot.
    std::vector<CMatrix> observations;
    std::vector<UserPose> poses;

    int n_slots() const { return static_cast<int>(observations.size()); }
};

struct SlotTruth
{
    /// Normalized sync error of the slot.
    double epsilon = 0.0;
    double noise_variance = 0.0;
    std::vector<PathParams> static_paths;
    std::vector<cdouble> static_coeffs;
    /// Dynamic delays are effective delays: the slot's sync shift is included.
    std::vector<PathParams> dynamic_paths;
    std::vector<cdouble> dynamic_coeffs;
    std::vector<bool> dynamic_active;
    /// Full-band N x M channels.
    CMatrix static_channel;
    CMatrix channel;
};

struct GroundTruth
{
    std::vector<SlotTruth> slots;
};

struct Dataset
{
    ScenarioConfig config;
    MeasurementSet measurements;
    GroundTruth truth;
};

/// Strictly increasing pilot subcarriers for a fraction in (0, 1].
std::vector<int> pilot_mask(int n_subcarriers, double pilot_fraction, bool random, std::uint64_t seed);

/// Draw measurements for one grid. Stage II requires n_slots == 1.
Dataset synthesize_measurements(const ScenarioConfig& cfg, Stage stage, int n_slots,
                                double pilot_fraction, int grid_index = 0);

/// Deterministic 64-bit mix of a seed with extra words.
std::uint64_t mix_seed(std::uint64_t seed, std::uint64_t a, std::uint64_t b = 0, std::uint64_t c = 0);

} // namespace ckm

#endif
