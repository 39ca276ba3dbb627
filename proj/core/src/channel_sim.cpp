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

#include <algorithm>
#include <cmath>
#include <limits>
#include <numbers>
#include <random>
#include <sstream>

namespace ckm
{
namespace
{
constexpr double kPi = std::numbers::pi;
constexpr double kLightSpeed = 299792458.0;
constexpr double kDeg = kPi / 180.0;

// stream tags
constexpr std::uint64_t kGeometryTag = 0x6765;
constexpr std::uint64_t kSlotTag = 0x736c;
constexpr std::uint64_t kPilotTag = 0x7069;

using Rng = std::mt19937_64;

double uniform(Rng& rng, double lo, double hi)
{
    return std::uniform_real_distribution<double>(lo, hi)(rng);
}

double normal(Rng& rng)
{
    return std::normal_distribution<double>(0.0, 1.0)(rng);
}

cdouble complex_normal(Rng& rng)
{
    const double s = std::sqrt(0.5);
    const double re = normal(rng);
    const double im = normal(rng);
    return {s * re, s * im};
}

// Square root of the exponential-kernel covariance over grid centres.
Eigen::MatrixXd field_factor(const ScenarioConfig& cfg)
{
    const int g = cfg.n_grids;
    Eigen::MatrixXd k(g, g);
    for (int i = 0; i < g; ++i)
        for (int j = 0; j < g; ++j) {
            const double d = std::abs(i - j) * cfg.grid_size_m;
            if (i == j)
                k(i, j) = 1.0;
            else
                k(i, j) = cfg.correlation_distance_m > 0.0 ? std::exp(-d / cfg.correlation_distance_m) : 0.0;
        }
    // eigen square root tolerates the rank-one limit of an infinite distance
    Eigen::SelfAdjointEigenSolver<Eigen::MatrixXd> es(k);
    const Eigen::VectorXd root = es.eigenvalues().cwiseMax(0.0).cwiseSqrt();
    return es.eigenvectors() * root.asDiagonal();
}

std::vector<double> draw_field(Rng& rng, const Eigen::MatrixXd& factor, double std_dev)
{
    Eigen::VectorXd n(factor.cols());
    for (Eigen::Index i = 0; i < n.size(); ++i)
        n(i) = normal(rng);
    const Eigen::VectorXd v = std_dev * (factor * n);
    return {v.data(), v.data() + v.size()};
}

// Field value at a position inside grid g, linearly interpolated towards the
// neighbouring grid centre along x.
double interpolate(const std::vector<double>& field, const ScenarioConfig& cfg, int g, double x)
{
    const double u = (x - grid_center(cfg, g)[0]) / cfg.grid_size_m;
    const int nb = u >= 0.0 ? g + 1 : g - 1;
    if (nb < 0 || nb >= cfg.n_grids)
        return field[static_cast<size_t>(g)];
    const double w = std::min(1.0, std::abs(u));
    return (1.0 - w) * field[static_cast<size_t>(g)] + w * field[static_cast<size_t>(nb)];
}

std::array<double, 3> departure_direction(const SubpathDescriptor& s)
{
    return {std::cos(s.departure_v) * std::cos(s.departure_h),
            std::cos(s.departure_v) * std::sin(s.departure_h), std::sin(s.departure_v)};
}

UserPose step_walk(const ScenarioConfig& cfg, int grid, UserPose pose, Rng& rng)
{
    const auto c = grid_center(cfg, grid);
    const double half = 0.5 * cfg.grid_size_m;
    pose.rotation_h = wrap_angle(pose.rotation_h + 0.5 * normal(rng));
    for (int axis = 0; axis < 2; ++axis) {
        const double dir = axis == 0 ? std::cos(pose.rotation_h) : std::sin(pose.rotation_h);
        double p = pose.position[static_cast<size_t>(axis)] + cfg.walk_step_m * dir;
        const double lo = c[static_cast<size_t>(axis)] - half;
        const double hi = c[static_cast<size_t>(axis)] + half;
        // reflect off the grid border
        if (p < lo)
            p = std::min(hi, 2.0 * lo - p);
        if (p > hi)
            p = std::max(lo, 2.0 * hi - p);
        pose.position[static_cast<size_t>(axis)] = p;
    }
    return pose;
}

UserPose random_pose(const ScenarioConfig& cfg, int grid, Rng& rng)
{
    const auto c = grid_center(cfg, grid);
    const double half = 0.5 * cfg.grid_size_m;
    UserPose p;
    p.position = {uniform(rng, c[0] - half, c[0] + half), uniform(rng, c[1] - half, c[1] + half), c[2]};
    p.rotation_h = uniform(rng, 0.0, kTwoPi);
    p.rotation_v = uniform(rng, -10.0 * kDeg, 10.0 * kDeg);
    return p;
}

struct DynamicDraw
{
    std::vector<PathParams> paths;
    std::vector<cdouble> coeffs;
    std::vector<bool> active;
};

DynamicDraw draw_dynamics(const ScenarioConfig& cfg, double epsilon, double static_energy, Rng& rng)
{
    DynamicDraw out;
    const ArrayDims dims = cfg.dims();
    const double expected_active = cfg.n_dynamic_scatterers * cfg.dynamic_activity_prob;
    for (int s = 0; s < cfg.n_dynamic_scatterers; ++s) {
        const bool active = uniform(rng, 0.0, 1.0) < cfg.dynamic_activity_prob;
        const double delay = uniform(rng, cfg.dynamic_delay_min_us, cfg.dynamic_delay_max_us) * 1e-6;
        const double az = uniform(rng, -60.0 * kDeg, 60.0 * kDeg);
        const double el = uniform(rng, -15.0 * kDeg, 15.0 * kDeg);
        const int count = std::uniform_int_distribution<int>(cfg.dynamic_subpaths_min, cfg.dynamic_subpaths_max)(rng);
        const double spread = cfg.dynamic_angular_spread_deg * kDeg;
        std::vector<PathParams> paths;
        std::vector<cdouble> coeffs;
        for (int k = 0; k < count; ++k) {
            const double d = delay + uniform(rng, 0.0, cfg.cluster_delay_spread_us) * 1e-6;
            const double a = az + uniform(rng, -0.5 * spread, 0.5 * spread);
            const double e = el + uniform(rng, -0.5 * spread, 0.5 * spread);
            PathParams p = normalize_path(cfg, d, a, e);
            p = PathParams(p.tau + epsilon, p.theta, p.phi);
            paths.push_back(p);
            coeffs.push_back(complex_normal(rng));
        }
        if (active && expected_active > 0.0) {
            CMatrix h = CMatrix::Zero(dims.n_subcarriers, dims.antennas());
            for (size_t k = 0; k < paths.size(); ++k)
                add_path(h, paths[k], coeffs[k], 0.0, dims);
            const double energy = h.squaredNorm();
            const double target = static_energy / (cfg.static_dynamic_power_ratio * expected_active);
            const double scale = energy > 0.0 ? std::sqrt(target / energy) : 0.0;
            for (auto& c : coeffs)
                c *= scale;
        } else {
            std::fill(coeffs.begin(), coeffs.end(), cdouble(0.0, 0.0));
        }
        for (size_t k = 0; k < paths.size(); ++k) {
            out.paths.push_back(paths[k]);
            out.coeffs.push_back(coeffs[k]);
            out.active.push_back(active);
        }
    }
    return out;
}

} // namespace

std::uint64_t mix_seed(std::uint64_t seed, std::uint64_t a, std::uint64_t b, std::uint64_t c)
{
    // splitmix64 finalizer folded over the words
    auto mix = [](std::uint64_t z) {
        z += 0x9e3779b97f4a7c15ULL;
        z = (z ^ (z >> 30)) * 0xbf58476d1ce4e5b9ULL;
        z = (z ^ (z >> 27)) * 0x94d049bb133111ebULL;
        return z ^ (z >> 31);
    };
    std::uint64_t h = mix(seed);
    h = mix(h ^ a);
    h = mix(h ^ b);
    h = mix(h ^ c);
    return h;
}

void validate(const ScenarioConfig& cfg)
{
    std::vector<std::string> bad;
    auto need = [&](bool ok, const char* field) {
        if (!ok)
            bad.emplace_back(field);
    };
    need(cfg.carrier_frequency_hz > 0.0, "carrier_frequency_hz");
    need(cfg.subcarrier_spacing_hz > 0.0, "subcarrier_spacing_hz");
    need(cfg.n_subcarriers >= 1, "n_subcarriers");
    need(cfg.m1 >= 1, "m1");
    need(cfg.m2 >= 1, "m2");
    need(cfg.grid_size_m > 0.0, "grid_size_m");
    need(cfg.n_grids >= 1, "n_grids");
    need(cfg.bs_distance_m > 0.0, "bs_distance_m");
    need(cfg.n_static_clusters >= 1, "n_static_clusters");
    need(cfg.subpaths_per_cluster >= 1, "subpaths_per_cluster");
    need(cfg.angular_spread_deg >= 0.0, "angular_spread_deg");
    need(cfg.delay_spread_us >= 0.0, "delay_spread_us");
    need(cfg.cluster_delay_spread_us >= 0.0, "cluster_delay_spread_us");
    need(cfg.correlation_distance_m >= 0.0, "correlation_distance_m");
    need(cfg.field_delay_std_us >= 0.0, "field_delay_std_us");
    need(cfg.field_angle_std_deg >= 0.0, "field_angle_std_deg");
    need(cfg.n_dynamic_scatterers >= 0, "n_dynamic_scatterers");
    need(cfg.dynamic_activity_prob >= 0.0 && cfg.dynamic_activity_prob <= 1.0, "dynamic_activity_prob");
    need(cfg.dynamic_subpaths_min >= 1 && cfg.dynamic_subpaths_min <= cfg.dynamic_subpaths_max,
         "dynamic_subpaths_min/max");
    need(cfg.dynamic_angular_spread_deg >= 0.0, "dynamic_angular_spread_deg");
    need(cfg.dynamic_delay_min_us >= 0.0 && cfg.dynamic_delay_min_us <= cfg.dynamic_delay_max_us,
         "dynamic_delay_min_us/max_us");
    need(cfg.static_dynamic_power_ratio > 0.0, "static_dynamic_power_ratio");
    need(!std::isnan(cfg.snr_db), "snr_db");
    need(!std::isnan(cfg.stage2_snr_db), "stage2_snr_db");
    need(cfg.sync_error_min_us <= cfg.sync_error_max_us, "sync_error_min_us/max_us");
    need(cfg.walk_step_m >= 0.0, "walk_step_m");
    // the cyclic prefix is assumed to cover every delay
    const double max_delay_us = cfg.dynamic_delay_max_us + cfg.cluster_delay_spread_us + cfg.sync_error_max_us;
    need(max_delay_us * 1e-6 * cfg.subcarrier_spacing_hz < 1.0, "dynamic_delay_max_us (exceeds 1/subcarrier_spacing)");
    if (!bad.empty()) {
        std::ostringstream msg;
        msg << "invalid scenario config, offending fields:";
        for (const auto& b : bad)
            msg << ' ' << b;
        throw InvalidArgument(msg.str());
    }
}

std::vector<std::string> preset_names()
{
    return {"los-desk", "nlos-desk", "single-path", "three-path"};
}

ScenarioConfig preset(const std::string& name)
{
    ScenarioConfig cfg;
    cfg.name = name;
    if (name == "los-desk")
        return cfg;
    if (name == "nlos-desk") {
        cfg.carrier_frequency_hz = 6.5e9;
        cfg.n_static_clusters = 8;
        cfg.subpaths_per_cluster = 3;
        cfg.los_k_factor_db = 0.0;
        cfg.delay_spread_us = 0.4;
        cfg.angular_spread_deg = 6.0;
        return cfg;
    }
    if (name == "single-path" || name == "three-path") {
        cfg.n_static_clusters = name == "single-path" ? 1 : 3;
        cfg.subpaths_per_cluster = 1;
        cfg.angular_spread_deg = 0.0;
        cfg.cluster_delay_spread_us = 0.0;
        cfg.field_delay_std_us = 0.0;
        cfg.field_angle_std_deg = 0.0;
        cfg.los_k_factor_db = 0.0;
        cfg.delay_spread_us = 1.0;
        cfg.n_dynamic_scatterers = 0;
        cfg.snr_db = std::numeric_limits<double>::infinity();
        cfg.stage2_snr_db = std::numeric_limits<double>::infinity();
        return cfg;
    }
    throw InvalidArgument("unknown preset '" + name + "'");
}

std::array<double, 3> grid_center(const ScenarioConfig& cfg, int grid_index)
{
    return {cfg.bs_distance_m + (grid_index + 0.5) * cfg.grid_size_m, 0.5 * cfg.grid_size_m, 1.5};
}

PathParams normalize_path(const ScenarioConfig& cfg, double delay_s, double azimuth_rad, double elevation_rad)
{
    return {kTwoPi * cfg.subcarrier_spacing_hz * delay_s,
            kPi * std::sin(azimuth_rad) * std::cos(elevation_rad), kPi * std::sin(elevation_rad)};
}

double pattern_gain(double angle, double front_back_ratio_db)
{
    const double a = std::pow(10.0, -front_back_ratio_db / 10.0);
    const double c = std::cos(0.5 * angle);
    return a + (1.0 - a) * c * c;
}

std::vector<ClusterDescriptor> generate_static_geometry(const ScenarioConfig& cfg, int grid_index)
{
    validate(cfg);
    if (grid_index < 0 || grid_index >= cfg.n_grids)
        throw InvalidArgument("grid index " + std::to_string(grid_index) + " outside [0, n_grids)");
    Rng rng(mix_seed(cfg.rng_seed, kGeometryTag));
    const Eigen::MatrixXd factor = field_factor(cfg);
    const bool los = cfg.los_k_factor_db > 0.0;

    std::vector<ClusterDescriptor> clusters(static_cast<size_t>(cfg.n_static_clusters));
    std::vector<double> power(clusters.size());
    for (size_t c = 0; c < clusters.size(); ++c) {
        auto& cl = clusters[c];
        double delay = -cfg.delay_spread_us * std::log(1.0 - uniform(rng, 0.0, 1.0));
        if (los && c == 0)
            delay = 0.0;
        cl.delay_s = std::min(delay, 0.5 / cfg.subcarrier_spacing_hz * 1e6) * 1e-6;
        cl.azimuth_rad = uniform(rng, -60.0 * kDeg, 60.0 * kDeg);
        cl.elevation_rad = uniform(rng, -15.0 * kDeg, 15.0 * kDeg);
        const double shadow = 3.0 * normal(rng);
        power[c] = std::exp(-cl.delay_s * 1e6 / std::max(cfg.delay_spread_us, 1e-3)) * std::pow(10.0, -shadow / 10.0);
        if (los && c == 0)
            power[c] *= std::pow(10.0, cfg.los_k_factor_db / 10.0);
        cl.field_delay_s = draw_field(rng, factor, cfg.field_delay_std_us * 1e-6);
        cl.field_azimuth_rad = draw_field(rng, factor, cfg.field_angle_std_deg * kDeg);
        cl.field_elevation_rad = draw_field(rng, factor, cfg.field_angle_std_deg * kDeg);

        const double spread = cfg.angular_spread_deg * kDeg;
        std::vector<double> share(static_cast<size_t>(cfg.subpaths_per_cluster));
        for (auto& s : share)
            s = uniform(rng, 0.5, 1.0);
        for (int k = 0; k < cfg.subpaths_per_cluster; ++k) {
            SubpathDescriptor s;
            s.delay_s = uniform(rng, 0.0, cfg.cluster_delay_spread_us) * 1e-6;
            s.azimuth_rad = uniform(rng, -spread, spread);
            s.elevation_rad = uniform(rng, -spread, spread);
            s.power = share[static_cast<size_t>(k)];
            s.departure_h = uniform(rng, 0.0, kTwoPi);
            s.departure_v = uniform(rng, -kPi / 6.0, kPi / 6.0);
            s.coupling = std::polar(1.0, uniform(rng, 0.0, kTwoPi));
            cl.subpaths.push_back(s);
        }
    }

    double total = 0.0;
    for (size_t c = 0; c < clusters.size(); ++c) {
        double sum = 0.0;
        for (const auto& s : clusters[c].subpaths)
            sum += s.power;
        for (auto& s : clusters[c].subpaths)
            s.power *= power[c] / sum;
        total += power[c];
    }
    // shift to the grid centre: subpath values become absolute
    const auto g = static_cast<size_t>(grid_index);
    for (auto& cl : clusters) {
        cl.delay_s += cl.field_delay_s[g];
        cl.azimuth_rad += cl.field_azimuth_rad[g];
        cl.elevation_rad += cl.field_elevation_rad[g];
        for (auto& s : cl.subpaths) {
            s.power /= total;
            s.delay_s += cl.delay_s;
            s.azimuth_rad += cl.azimuth_rad;
            s.elevation_rad += cl.elevation_rad;
        }
    }
    return clusters;
}

cdouble path_gain(const SubpathDescriptor& sub, const UserPose& pose, const ScenarioConfig& cfg,
                  double path_length_m)
{
    const double gh = pattern_gain(sub.departure_h - pose.rotation_h, cfg.rotation_gain.front_back_ratio_db);
    const double gv = pattern_gain(sub.departure_v - pose.rotation_v, cfg.rotation_gain.vertical_front_back_ratio_db);
    const double lambda = kLightSpeed / cfg.carrier_frequency_hz;
    const double amp = std::sqrt(sub.power * gh * gv);
    return amp * sub.coupling * std::polar(1.0, -kTwoPi * std::fmod(path_length_m / lambda, 1.0));
}

std::vector<int> pilot_mask(int n_subcarriers, double pilot_fraction, bool random, std::uint64_t seed)
{
    if (!(pilot_fraction > 0.0 && pilot_fraction <= 1.0))
        throw InvalidArgument("pilot_fraction must be in (0, 1]");
    if (n_subcarriers < 1)
        throw InvalidArgument("n_subcarriers must be >= 1");
    const int p = std::clamp(static_cast<int>(std::lround(pilot_fraction * n_subcarriers)), 1, n_subcarriers);
    std::vector<int> rows;
    if (!random) {
        for (int i = 0; i < p; ++i)
            rows.push_back(static_cast<int>((static_cast<long long>(i) * n_subcarriers) / p));
        return rows;
    }
    rows = all_rows(n_subcarriers);
    Rng rng(mix_seed(seed, kPilotTag));
    std::shuffle(rows.begin(), rows.end(), rng);
    rows.resize(static_cast<size_t>(p));
    std::sort(rows.begin(), rows.end());
    return rows;
}

Dataset synthesize_measurements(const ScenarioConfig& cfg, Stage stage, int n_slots, double pilot_fraction,
                                int grid_index)
{
    validate(cfg);
    if (n_slots < 1)
        throw InvalidArgument("n_slots must be >= 1");
    if (stage == Stage::II && n_slots != 1)
        throw InvalidArgument("stage II measurements use exactly one slot");
    const auto clusters = generate_static_geometry(cfg, grid_index);
    const ArrayDims dims = cfg.dims();
    const auto stage_id = static_cast<std::uint64_t>(stage);

    Dataset ds;
    ds.config = cfg;
    auto& ms = ds.measurements;
    ms.dims = dims;
    ms.stage = stage;
    ms.grid_index = grid_index;
    ms.pilots = pilot_mask(dims.n_subcarriers, pilot_fraction, cfg.random_pilots,
                           mix_seed(cfg.rng_seed, stage_id, static_cast<std::uint64_t>(grid_index)));

    Rng rng(mix_seed(cfg.rng_seed, kSlotTag, stage_id, static_cast<std::uint64_t>(grid_index)));
    const auto centre = grid_center(cfg, grid_index);
    const double snr = stage == Stage::I ? cfg.snr_db : cfg.stage2_snr_db;
    const bool dynamics = stage == Stage::II || cfg.stage1_dynamics;

    UserPose pose = random_pose(cfg, grid_index, rng);
    for (int t = 0; t < n_slots; ++t) {
        if (t > 0)
            pose = step_walk(cfg, grid_index, pose, rng);
        ms.poses.push_back(pose);

        SlotTruth slot;
        slot.epsilon = kTwoPi * cfg.subcarrier_spacing_hz * 1e-6 *
                       uniform(rng, cfg.sync_error_min_us, cfg.sync_error_max_us);
        slot.static_channel = CMatrix::Zero(dims.n_subcarriers, dims.antennas());
        for (const auto& cl : clusters) {
            const double d_off = interpolate(cl.field_delay_s, cfg, grid_index, pose.position[0]) -
                                 cl.field_delay_s[static_cast<size_t>(grid_index)];
            const double a_off = interpolate(cl.field_azimuth_rad, cfg, grid_index, pose.position[0]) -
                                 cl.field_azimuth_rad[static_cast<size_t>(grid_index)];
            const double e_off = interpolate(cl.field_elevation_rad, cfg, grid_index, pose.position[0]) -
                                 cl.field_elevation_rad[static_cast<size_t>(grid_index)];
            for (const auto& s : cl.subpaths) {
                const double delay = s.delay_s + d_off;
                const auto u = departure_direction(s);
                double length = kLightSpeed * delay + cfg.bs_distance_m;
                for (size_t i = 0; i < 3; ++i)
                    length += u[i] * (pose.position[i] - centre[i]);
                const PathParams p = normalize_path(cfg, delay, s.azimuth_rad + a_off, s.elevation_rad + e_off);
                const cdouble beta = path_gain(s, pose, cfg, length);
                slot.static_paths.push_back(p);
                slot.static_coeffs.push_back(beta);
                add_path(slot.static_channel, p, beta, slot.epsilon, dims);
            }
        }
        const double static_energy = slot.static_channel.squaredNorm();
        slot.channel = slot.static_channel;
        if (dynamics && cfg.n_dynamic_scatterers > 0) {
            DynamicDraw dyn = draw_dynamics(cfg, slot.epsilon, static_energy, rng);
            for (size_t k = 0; k < dyn.paths.size(); ++k)
                add_path(slot.channel, dyn.paths[k], dyn.coeffs[k], 0.0, dims);
            slot.dynamic_paths = std::move(dyn.paths);
            slot.dynamic_coeffs = std::move(dyn.coeffs);
            slot.dynamic_active = std::move(dyn.active);
        }
        const double boost =
            cfg.pilot_power_boost ? static_cast<double>(dims.n_subcarriers) / static_cast<double>(ms.pilots.size()) : 1.0;
        slot.noise_variance = std::isinf(snr) && snr > 0.0 ? 0.0
                                                           : static_energy / (dims.n_subcarriers * dims.antennas()) /
                                                                 std::pow(10.0, snr / 10.0) / boost;
        CMatrix y(static_cast<Eigen::Index>(ms.pilots.size()), dims.antennas());
        const double sd = std::sqrt(slot.noise_variance);
        for (Eigen::Index i = 0; i < y.rows(); ++i)
            for (Eigen::Index m = 0; m < y.cols(); ++m) {
                const cdouble w = complex_normal(rng);
                y(i, m) = slot.channel(ms.pilots[static_cast<size_t>(i)], m) + sd * w;
            }
        ms.observations.push_back(std::move(y));
        ds.truth.slots.push_back(std::move(slot));
    }
    return ds;
}

} // namespace ckm
