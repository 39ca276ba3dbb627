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

#include <algorithm>
#include <cmath>
#include <numeric>

namespace ckm
{
namespace
{
std::vector<int> resolve_rows(RowSelection rows, int n)
{
    return rows.empty() ? all_rows(n) : std::vector<int>(rows.begin(), rows.end());
}

// E[exp(-j p eps)] for every selected row.
CVector sync_moments(const VonMisesBelief& eps, int n, RowSelection rows)
{
    return std::sqrt(static_cast<double>(n)) *
           expected_shifted_steering(SteeringLength(n), VonMisesBelief::point_mass(0.0), eps, rows);
}

// Row-major M1 x M2 view of an antenna-indexed vector.
CMatrix antenna_grid(const CVector& w, const ArrayDims& dims)
{
    CMatrix g(dims.m1, dims.m2);
    for (int i = 0; i < dims.m1; ++i)
        for (int k = 0; k < dims.m2; ++k)
            g(i, k) = w(i * dims.m2 + k);
    return g;
}

VonMisesBelief search_or_keep(const SpectralObjective& obj, const VonMisesBelief& old, const SearchOptions& search)
{
    if (obj.is_zero())
        return obj.length() == 1 ? VonMisesBelief::uniform() : old;
    return spectral_search(obj, search).belief;
}

double observation_energy(const MeasurementSet& ms)
{
    double e = 0.0;
    for (const auto& y : ms.observations)
        e += y.squaredNorm();
    return e;
}

void append_path(Stage1State& state, const PathBelief& belief, double power)
{
    state.paths.push_back(belief);
    state.powers.push_back(power);
    for (auto& c : state.coeffs) {
        const Eigen::Index l = c.mean.size();
        c.mean.conservativeResize(l + 1);
        c.mean(l) = 0.0;
        CMatrix cov = CMatrix::Zero(l + 1, l + 1);
        cov.topLeftCorner(l, l) = c.covariance;
        cov(l, l) = power;
        c.covariance = std::move(cov);
    }
}

void sweep_slots(Stage1State& state, const MeasurementSet& ms, const Stage1Options& options)
{
    const CMatrix gram = expected_gram(state.paths, state.dims, state.rows);
    // slots only read the shared path beliefs
    std::vector<std::pair<VonMisesBelief, GaussianBelief>> out;
    out.reserve(static_cast<size_t>(state.n_slots()));
    for (int t = 0; t < state.n_slots(); ++t)
        out.push_back(joint_sync_coeff_update(state, ms, t, gram, options));
    for (int t = 0; t < state.n_slots(); ++t) {
        state.sync[static_cast<size_t>(t)] = out[static_cast<size_t>(t)].first;
        state.coeffs[static_cast<size_t>(t)] = std::move(out[static_cast<size_t>(t)].second);
    }
}

PathEvidence evidence_for(const Stage1State& state, int l, const std::vector<CMatrix>& residuals,
                          std::vector<cdouble>& coeffs)
{
    coeffs.clear();
    for (const auto& c : state.coeffs)
        coeffs.push_back(c.mean(l));
    return {residuals, coeffs, state.sync, state.dims, state.rows, state.noise_variance};
}

std::vector<CMatrix> residuals_without(const Stage1State& state, const MeasurementSet& ms, int l)
{
    std::vector<CMatrix> r;
    r.reserve(static_cast<size_t>(state.n_slots()));
    for (int t = 0; t < state.n_slots(); ++t)
        r.push_back(residual_per_slot(state, ms, t, l));
    return r;
}

void omp_initialize(Stage1State& state, const MeasurementSet& ms, const Stage1Options& options)
{
    Stage1Options ls = options;
    ls.estimate_sync = false;
    ls.coupled = false;
    while (state.n_paths() < options.max_paths) {
        if (!generate_path(state, ms, ls))
            break;
        sweep_slots(state, ms, ls);
    }
    if (state.n_paths() > 0)
        em_update(state, ms);
}

// Paths whose power collapsed onto the floor carry nothing; drop them so the
// table does not list numerical dust.
void prune_negligible(Stage1State& state)
{
    double top = 0.0;
    for (const double p : state.powers)
        top = std::max(top, p);
    std::vector<Eigen::Index> keep;
    for (int l = 0; l < state.n_paths(); ++l)
        if (state.powers[static_cast<size_t>(l)] > 1e-10 * top)
            keep.push_back(l);
    if (static_cast<int>(keep.size()) == state.n_paths())
        return;
    std::vector<PathBelief> paths;
    std::vector<double> powers;
    for (const auto l : keep) {
        paths.push_back(state.paths[static_cast<size_t>(l)]);
        powers.push_back(state.powers[static_cast<size_t>(l)]);
    }
    for (auto& c : state.coeffs) {
        c.mean = CVector(c.mean(keep));
        c.covariance = CMatrix(c.covariance(keep, keep));
    }
    state.paths = std::move(paths);
    state.powers = std::move(powers);
}

} // namespace

SpectralObjective delay_objective(const PathEvidence& ev, const PathBelief& path, const VonMisesBelief& prior)
{
    const int n = ev.dims.n_subcarriers;
    const std::vector<int> rows = resolve_rows(ev.rows, n);
    const CVector b = expected_spatial_steering(path, ev.dims).conjugate();
    CVector eta = CVector::Zero(n);
    for (size_t t = 0; t < ev.residuals.size(); ++t) {
        const CVector u = sync_moments(ev.sync[t], n, ev.rows);
        const CVector v = ev.residuals[t] * b;
        const cdouble beta = std::conj(ev.coeffs[t]);
        for (size_t i = 0; i < rows.size(); ++i) {
            const auto ii = static_cast<Eigen::Index>(i);
            eta(rows[i]) += beta * std::conj(u(ii)) * v(ii);
        }
    }
    eta *= 2.0 / ev.noise_variance;
    if (n > 1)
        eta(1) += std::sqrt(static_cast<double>(n)) * std::polar(prior.kappa, -prior.mu);
    return SpectralObjective(std::move(eta));
}

CMatrix angle_evidence(const PathEvidence& ev, const PathBelief& path)
{
    const int n = ev.dims.n_subcarriers;
    CVector w = CVector::Zero(ev.dims.antennas());
    for (size_t t = 0; t < ev.residuals.size(); ++t) {
        const CVector a = expected_shifted_steering(SteeringLength(n), path.tau, ev.sync[t], ev.rows);
        w += std::conj(ev.coeffs[t]) * (ev.residuals[t].transpose() * a.conjugate());
    }
    w *= 2.0 / ev.noise_variance;
    return antenna_grid(w, ev.dims);
}

PathBelief refine_path(const PathEvidence& ev, const PathBelief& path, const SearchOptions& search)
{
    PathBelief out = path;
    out.tau = search_or_keep(delay_objective(ev, out), out.tau, search);
    const CMatrix w = angle_evidence(ev, out);
    const CVector a2 = expected_steering(SteeringLength(ev.dims.m2), out.phi);
    out.theta = search_or_keep(SpectralObjective(w * a2.conjugate()), out.theta, search);
    const CVector a1 = expected_steering(SteeringLength(ev.dims.m1), out.theta);
    out.phi = search_or_keep(SpectralObjective(w.transpose() * a1.conjugate()), out.phi, search);
    return out;
}

std::optional<GeneratedPath> detect_path(std::span<const CMatrix> residuals, std::span<const double> sync,
                                         const ArrayDims& dims, RowSelection rows, double noise_variance,
                                         double detection_factor, const SearchOptions& search)
{
    const int n = dims.n_subcarriers;
    const std::vector<int> r = resolve_rows(rows, n);
    const auto rc = static_cast<Eigen::Index>(r.size());
    const double s2 = std::max(noise_variance, kNoiseFloor);

    CMatrix k = CMatrix::Zero(rc, rc);
    for (size_t t = 0; t < residuals.size(); ++t) {
        const CVector phase = sync_phase(n, sync[t], rows).conjugate();
        const CMatrix s = phase.asDiagonal() * residuals[t];
        k.noalias() += s * s.adjoint();
    }
    const SpectralObjective delay = steering_energy_objective(k / s2, r, n);
    if (delay.is_zero())
        return std::nullopt;
    const SearchResult tau = spectral_search(delay, search);
    const double peak = tau.value * s2;
    const double threshold = detection_factor * s2 * dims.antennas() * static_cast<double>(residuals.size()) *
                             static_cast<double>(rc) / n;
    if (!(peak > threshold))
        return std::nullopt;

    std::vector<CMatrix> z;
    CMatrix k1 = CMatrix::Zero(dims.m1, dims.m1);
    for (size_t t = 0; t < residuals.size(); ++t) {
        const CVector a = compressed_steering(SteeringLength(n), tau.belief.mu + sync[t], rows);
        z.push_back(antenna_grid(residuals[t].transpose() * a.conjugate(), dims));
        k1.noalias() += z.back() * z.back().adjoint();
    }
    const std::vector<int> r1 = all_rows(dims.m1);
    const SpectralObjective az = steering_energy_objective(k1 / s2, r1, dims.m1);
    const VonMisesBelief theta = az.is_zero() ? VonMisesBelief::uniform() : spectral_search(az, search).belief;

    const CVector a1 = steering(SteeringLength(dims.m1), theta.mu).conjugate();
    CMatrix k2 = CMatrix::Zero(dims.m2, dims.m2);
    for (const auto& zt : z) {
        const CVector c = zt.transpose() * a1;
        k2.noalias() += c * c.adjoint();
    }
    const std::vector<int> r2 = all_rows(dims.m2);
    const SpectralObjective zen = steering_energy_objective(k2 / s2, r2, dims.m2);
    const VonMisesBelief phi = zen.is_zero() ? VonMisesBelief::uniform() : spectral_search(zen, search).belief;

    return GeneratedPath{{tau.belief, theta, phi}, peak};
}

Stage1State init_stage1(const MeasurementSet& ms)
{
    if (ms.n_slots() < 1)
        throw InvalidArgument("stage I needs at least one slot");
    Stage1State s;
    s.dims = ms.dims;
    s.rows = ms.pilots;
    s.sync.assign(static_cast<size_t>(ms.n_slots()), VonMisesBelief::point_mass(0.0));
    s.coeffs.assign(static_cast<size_t>(ms.n_slots()), GaussianBelief{CVector(0), CMatrix(0, 0)});
    const double entries = static_cast<double>(ms.pilots.size()) * ms.dims.antennas() * ms.n_slots();
    // 0 dB SNR assumption: half the energy is noise
    s.noise_variance = std::max(0.5 * observation_energy(ms) / entries, kNoiseFloor);
    return s;
}

CMatrix residual_per_slot(const Stage1State& state, const MeasurementSet& ms, int t, int exclude)
{
    const auto ut = static_cast<size_t>(t);
    CMatrix r = ms.observations[ut];
    const SteeringLength n(state.dims.n_subcarriers);
    for (int l = 0; l < state.n_paths(); ++l) {
        if (l == exclude)
            continue;
        const cdouble beta = state.coeffs[ut].mean(l);
        if (beta == cdouble(0.0, 0.0))
            continue;
        const auto& p = state.paths[static_cast<size_t>(l)];
        const CVector a = expected_shifted_steering(n, p.tau, state.sync[ut], state.rows);
        const CVector b = expected_spatial_steering(p, state.dims);
        r.noalias() -= (beta * a) * b.transpose();
    }
    return r;
}

VonMisesBelief update_delay_belief(const Stage1State& state, const MeasurementSet& ms, int l,
                                   const SearchOptions& search)
{
    const auto residuals = residuals_without(state, ms, l);
    std::vector<cdouble> coeffs;
    const PathEvidence ev = evidence_for(state, l, residuals, coeffs);
    const auto& p = state.paths[static_cast<size_t>(l)];
    return spectral_search(delay_objective(ev, p), search).belief;
}

std::pair<VonMisesBelief, VonMisesBelief> update_angle_beliefs(const Stage1State& state, const MeasurementSet& ms,
                                                               int l, const SearchOptions& search)
{
    const auto residuals = residuals_without(state, ms, l);
    std::vector<cdouble> coeffs;
    const PathEvidence ev = evidence_for(state, l, residuals, coeffs);
    const PathBelief refined = refine_path(ev, state.paths[static_cast<size_t>(l)], search);
    return {refined.theta, refined.phi};
}

SpectralObjective sync_objective(const Stage1State& state, const MeasurementSet& ms, int t, const CMatrix& gram,
                                 bool coupled)
{
    const int n = state.dims.n_subcarriers;
    const std::vector<int> rows = resolve_rows(state.rows, n);
    const auto rc = static_cast<Eigen::Index>(rows.size());
    const Eigen::Index m = state.dims.antennas();
    const auto l = static_cast<Eigen::Index>(state.n_paths());
    const CMatrix a0 = expected_dictionary(state.paths, VonMisesBelief::point_mass(0.0), state.dims, state.rows);
    const CMatrix& y = ms.observations[static_cast<size_t>(t)];

    CMatrix b = CMatrix::Zero(l, rc);
    for (Eigen::Index j = 0; j < l; ++j)
        for (Eigen::Index mm = 0; mm < m; ++mm)
            b.row(j) += (a0.col(j).segment(mm * rc, rc).conjugate().cwiseProduct(y.col(mm))).transpose();

    const double s2 = state.noise_variance;
    CMatrix reg = gram;
    if (coupled)
        for (Eigen::Index j = 0; j < l; ++j)
            reg(j, j) += s2 / std::max(state.powers[static_cast<size_t>(j)], kNoiseFloor);
    const CMatrix c = hermitian_inverse(reg, 1e14, "sync objective") / s2;
    return hermitian_form_objective(b.adjoint() * c * b, rows, n);
}

std::pair<VonMisesBelief, GaussianBelief> joint_sync_coeff_update(const Stage1State& state, const MeasurementSet& ms,
                                                                  int t, const CMatrix& gram,
                                                                  const Stage1Options& options)
{
    const auto ut = static_cast<size_t>(t);
    const auto l = static_cast<Eigen::Index>(state.n_paths());
    VonMisesBelief eps = VonMisesBelief::point_mass(0.0);
    if (options.estimate_sync) {
        const SpectralObjective f = sync_objective(state, ms, t, gram, options.coupled);
        eps = search_or_keep(f, state.sync[ut], options.search);
    }
    const CMatrix a = expected_dictionary(state.paths, VonMisesBelief::point_mass(eps.mu), state.dims, state.rows);
    const CVector proj = a.adjoint() * vec(ms.observations[ut]);
    CMatrix prior = CMatrix::Zero(l, l);
    double biggest = 0.0;
    for (const double p : state.powers)
        biggest = std::max(biggest, p);
    for (Eigen::Index j = 0; j < l; ++j) {
        const double rho = std::max(state.powers[static_cast<size_t>(j)], kNoiseFloor);
        // least squares: a prior far wider than any path power
        prior(j, j) = options.coupled ? rho : 1e6 * std::max(biggest, rho);
    }
    GaussianBelief beta = gaussian_condition_gram(CVector::Zero(l), prior, gram, proj, state.noise_variance);
    return {eps, std::move(beta)};
}

bool generate_path(Stage1State& state, const MeasurementSet& ms, const Stage1Options& options)
{
    if (state.n_paths() >= options.max_paths)
        return false;
    std::vector<CMatrix> residuals;
    std::vector<double> sync;
    for (int t = 0; t < state.n_slots(); ++t) {
        residuals.push_back(residual_per_slot(state, ms, t));
        sync.push_back(options.estimate_sync ? state.sync[static_cast<size_t>(t)].mu : 0.0);
    }
    const auto found = detect_path(residuals, sync, state.dims, state.rows, state.noise_variance,
                                   options.detection_factor, options.search);
    if (!found)
        return false;
    const double fraction = static_cast<double>(state.rows.size()) / state.dims.n_subcarriers;
    append_path(state, found->belief, found->peak / (fraction * state.n_slots()));
    return true;
}

void recenter_sync(Stage1State& state)
{
    cdouble acc{0.0, 0.0};
    for (const auto& e : state.sync)
        acc += std::polar(1.0, e.mu);
    if (std::abs(acc) <= 1e-9 * std::max<size_t>(state.sync.size(), 1))
        return;
    const double m = std::arg(acc);
    if (m == 0.0)
        return;
    for (auto& e : state.sync)
        e = VonMisesBelief(e.mu - m, e.kappa);
    for (auto& p : state.paths)
        p.tau = VonMisesBelief(p.tau.mu + m, p.tau.kappa);
}

void em_update(Stage1State& state, const MeasurementSet& ms)
{
    const double slots = state.n_slots();
    for (int l = 0; l < state.n_paths(); ++l) {
        double acc = 0.0;
        for (const auto& c : state.coeffs)
            acc += std::norm(c.mean(l)) + c.covariance(l, l).real();
        state.powers[static_cast<size_t>(l)] = std::max(acc / slots, kNoiseFloor);
    }
    const double entries = static_cast<double>(state.rows.size()) * state.dims.antennas() * slots;
    state.noise_variance = std::max(residual_energy(state, ms) / entries, kNoiseFloor);
}

double residual_energy(const Stage1State& state, const MeasurementSet& ms)
{
    double e = 0.0;
    for (int t = 0; t < state.n_slots(); ++t)
        e += residual_per_slot(state, ms, t).squaredNorm();
    return e;
}

CMatrix reconstruct_slot(const Stage1State& state, int t)
{
    const auto ut = static_cast<size_t>(t);
    CMatrix h = CMatrix::Zero(state.dims.n_subcarriers, state.dims.antennas());
    for (int l = 0; l < state.n_paths(); ++l)
        add_path(h, state.paths[static_cast<size_t>(l)].mean(), state.coeffs[ut].mean(l), state.sync[ut].mu,
                 state.dims);
    return h;
}

Stage1Result run_stage1(const MeasurementSet& ms, const Stage1Options& options)
{
    if (options.max_paths < 0)
        throw InvalidArgument("path budget must be >= 0");
    Stage1State state = init_stage1(ms);
    if (options.init == Stage1Init::Omp)
        omp_initialize(state, ms, options);

    double prev = std::numeric_limits<double>::infinity();
    for (int it = 0; it < options.max_iters; ++it) {
        state.iteration = it + 1;
        bool generated = false;
        if (options.init == Stage1Init::Generate)
            generated = generate_path(state, ms, options);
        if (state.n_paths() == 0)
            break;
        sweep_slots(state, ms, options);

        std::vector<int> order(static_cast<size_t>(state.n_paths()));
        std::iota(order.begin(), order.end(), 0);
        std::stable_sort(order.begin(), order.end(), [&](int a, int b) {
            return state.powers[static_cast<size_t>(a)] > state.powers[static_cast<size_t>(b)];
        });
        std::vector<cdouble> coeffs;
        for (const int l : order) {
            const auto residuals = residuals_without(state, ms, l);
            const PathEvidence ev = evidence_for(state, l, residuals, coeffs);
            state.paths[static_cast<size_t>(l)] = refine_path(ev, state.paths[static_cast<size_t>(l)], options.search);
        }
        sweep_slots(state, ms, options);
        em_update(state, ms);

        const double res = residual_energy(state, ms);
        state.residual_history.push_back(res);
        if (!generated && std::isfinite(prev) && std::abs(prev - res) <= options.tolerance * std::max(prev, 1e-300))
            break;
        prev = res;
    }

    prune_negligible(state);
    recenter_sync(state);
    Stage1Result out;
    out.entry.grid_id = ms.grid_index;
    out.entry.noise_variance = state.noise_variance;
    for (int l = 0; l < state.n_paths(); ++l) {
        out.entry.paths.push_back(state.paths[static_cast<size_t>(l)].mean());
        out.entry.powers.push_back(state.powers[static_cast<size_t>(l)]);
    }
    if (!out.entry.paths.empty()) {
        std::vector<PathBelief> points;
        for (const auto& p : out.entry.paths)
            points.push_back(PathBelief::point_mass(p));
        try {
            out.entry.gram_inverse = hermitian_inverse(expected_gram(points, state.dims), 1e14, "ckm gram");
        } catch (const NumericalError&) {
            // near-duplicate paths: leave the cache empty
        }
    }
    out.state = std::move(state);
    return out;
}

} // namespace ckm
