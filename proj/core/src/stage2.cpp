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

#include <ckm/stage2.hpp>

#include <algorithm>
#include <cmath>
#include <numeric>
#include <sstream>

namespace ckm
{
namespace
{
double pilot_entries(const Stage2State& s)
{
    return static_cast<double>(s.rows.size()) * s.dims.antennas();
}

CMatrix matched_rows(const CMatrix& a0, const CMatrix& y, Eigen::Index rows, Eigen::Index antennas)
{
    // B(l, i) = sum_m conj(A0(m R + i, l)) y(i, m)
    CMatrix b = CMatrix::Zero(a0.cols(), rows);
    for (Eigen::Index l = 0; l < a0.cols(); ++l)
        for (Eigen::Index m = 0; m < antennas; ++m)
            b.row(l) += (a0.col(l).segment(m * rows, rows).conjugate().cwiseProduct(y.col(m))).transpose();
    return b;
}

// With pilots on a stride S the sync objective repeats every 2pi/S, so its
// maxima are exact ties. Take the copy nearest the table's zero-mean sync.
double nearest_alias(double eps, const std::vector<int>& rows)
{
    int stride = 0;
    for (size_t i = 1; i < rows.size(); ++i)
        stride = std::gcd(stride, rows[i] - rows[0]);
    if (stride <= 1)
        return eps;
    const double period = kTwoPi / stride;
    double best = eps;
    for (int k = 1; k < stride; ++k) {
        const double c = wrap_angle(eps + k * period);
        if (std::abs(angle_diff(c, 0.0)) < std::abs(angle_diff(best, 0.0)))
            best = c;
    }
    return best;
}

BernoulliGaussianBelief coefficient_update(const DynamicPath& p, const CMatrix& atom, const CMatrix& r, double s2)
{
    const double energy = atom.squaredNorm();
    const cdouble mu_g = (atom.conjugate().cwiseProduct(r)).sum() / energy;
    const double v_g = s2 / energy;
    BernoulliGaussianBelief prior{p.lambda_prior, cdouble(0.0, 0.0), p.v_prior};
    return bg_posterior(prior, mu_g, v_g);
}

// Profile gain of a dynamic atom once the flat-prior static coefficients are
// maximized out: |a^H r_perp|^2 / |P_perp a|^2. r_perp already lies outside
// the static span, so a^H r_perp = (P_perp a)^H r_perp.
struct StaticProjector
{
    CMatrix a;
    const CMatrix* gram_inverse = nullptr;

    CVector apply(const CVector& v) const
    {
        if (a.size() == 0)
            return v;
        return v - a * (*gram_inverse * (a.adjoint() * v));
    }
};

double profile_gain(const PathParams& p, const CVector& r_perp, const StaticProjector& proj, const ArrayDims& dims,
                    const std::vector<int>& rows)
{
    const CVector u = vec(path_atom(p, 0.0, dims, rows));
    const double den = proj.apply(u).squaredNorm();
    if (den <= 1e-12 * u.squaredNorm())
        return 0.0;
    return std::norm(u.dot(r_perp)) / den;
}

// Coordinate ascent of the profile gain within one resolution cell of each
// parameter: coarse grid, then golden section.
PathParams polish_dynamic(PathParams p, const CVector& r_perp, const StaticProjector& proj, const ArrayDims& dims,
                          const std::vector<int>& rows)
{
    constexpr int kGrid = 16;
    constexpr int kGolden = 24;
    const double lengths[3] = {static_cast<double>(dims.n_subcarriers), static_cast<double>(dims.m1),
                               static_cast<double>(dims.m2)};
    auto with = [&](int c, double v) {
        PathParams q = p;
        (c == 0 ? q.tau : c == 1 ? q.theta : q.phi) = wrap_angle(v);
        return q;
    };
    for (int sweep = 0; sweep < 2; ++sweep) {
        for (int c = 0; c < 3; ++c) {
            if (lengths[c] < 2.0)
                continue;
            const double centre = c == 0 ? p.tau : c == 1 ? p.theta : p.phi;
            const double half = kTwoPi / lengths[c];
            const double step = 2.0 * half / kGrid;
            double best = centre;
            double best_val = profile_gain(p, r_perp, proj, dims, rows);
            for (int k = 0; k <= kGrid; ++k) {
                const double v = centre - half + k * step;
                const double g = profile_gain(with(c, v), r_perp, proj, dims, rows);
                if (g > best_val) {
                    best_val = g;
                    best = v;
                }
            }
            const double phi = 0.5 * (std::sqrt(5.0) - 1.0);
            double lo = best - step, hi = best + step;
            double x1 = hi - phi * (hi - lo), x2 = lo + phi * (hi - lo);
            double g1 = profile_gain(with(c, x1), r_perp, proj, dims, rows);
            double g2 = profile_gain(with(c, x2), r_perp, proj, dims, rows);
            for (int it = 0; it < kGolden; ++it) {
                if (g1 > g2) {
                    hi = x2;
                    x2 = x1;
                    g2 = g1;
                    x1 = hi - phi * (hi - lo);
                    g1 = profile_gain(with(c, x1), r_perp, proj, dims, rows);
                } else {
                    lo = x1;
                    x1 = x2;
                    g1 = g2;
                    x2 = lo + phi * (hi - lo);
                    g2 = profile_gain(with(c, x2), r_perp, proj, dims, rows);
                }
            }
            const double mid = 0.5 * (lo + hi);
            if (profile_gain(with(c, mid), r_perp, proj, dims, rows) > best_val)
                best = mid;
            p = with(c, best);
        }
    }
    return p;
}

} // namespace

Stage2State init_stage2(const MeasurementSet& ms, const CkmEntry* entry)
{
    if (ms.n_slots() != 1)
        throw InvalidArgument("stage II works on exactly one slot");
    Stage2State s;
    s.dims = ms.dims;
    s.rows = ms.pilots;
    s.sync = VonMisesBelief::point_mass(0.0);
    const CMatrix& y = ms.observations.front();
    if (y.rows() != static_cast<Eigen::Index>(s.rows.size()) || y.cols() != s.dims.antennas())
        throw InvalidArgument("observation size does not match the pilot mask");
    s.noise_variance = std::max(0.5 * y.squaredNorm() / pilot_entries(s), kNoiseFloor);
    if (entry != nullptr)
        s.static_paths = entry->paths;
    const auto l = static_cast<Eigen::Index>(s.static_paths.size());
    s.static_coeffs = {CVector::Zero(l), CMatrix::Zero(l, l)};
    if (l > 0) {
        const CMatrix a0 = dictionary(s.static_paths, 0.0, s.dims, s.rows);
        try {
            s.gram_inverse = hermitian_inverse(a0.adjoint() * a0, 1e10, "pilot gram");
        } catch (const NumericalError& e) {
            std::ostringstream msg;
            msg << "pilot Gram is rank deficient for L_s=" << l << " and P=" << s.rows.size()
                << " pilots; use more pilot subcarriers or a smaller L_s (" << e.what() << ")";
            throw NumericalError(msg.str());
        }
        ++s.gram_inversions;
    }
    return s;
}

CMatrix static_part(const Stage2State& state)
{
    CMatrix h = CMatrix::Zero(static_cast<Eigen::Index>(state.rows.size()), state.dims.antennas());
    for (int l = 0; l < state.n_static(); ++l)
        add_path(h, state.static_paths[static_cast<size_t>(l)], state.static_coeffs.mean(l), state.sync.mu, state.dims,
                 state.rows);
    return h;
}

CMatrix dynamic_part(const Stage2State& state, int exclude)
{
    CMatrix h = CMatrix::Zero(static_cast<Eigen::Index>(state.rows.size()), state.dims.antennas());
    for (int l = 0; l < state.n_dynamic(); ++l) {
        if (l == exclude)
            continue;
        const auto& d = state.dynamic[static_cast<size_t>(l)];
        add_path(h, d.belief.mean(), d.coeff.estimate(), 0.0, state.dims, state.rows);
    }
    return h;
}

CMatrix static_residual(const Stage2State& state, const CMatrix& y)
{
    return y - dynamic_part(state);
}

std::pair<VonMisesBelief, GaussianBelief> calibrate_sync_and_static(const Stage2State& state, const CMatrix& y_res,
                                                                    const Stage2Options& options)
{
    const int n = state.dims.n_subcarriers;
    const auto l = static_cast<Eigen::Index>(state.n_static());
    if (l == 0)
        return {options.fixed_sync ? VonMisesBelief::point_mass(*options.fixed_sync) : state.sync,
                GaussianBelief{CVector(0), CMatrix(0, 0)}};
    const double s2 = state.noise_variance;
    VonMisesBelief eps;
    if (options.fixed_sync) {
        eps = VonMisesBelief::point_mass(*options.fixed_sync);
    } else {
        const CMatrix a0 = dictionary(state.static_paths, 0.0, state.dims, state.rows);
        const CMatrix b = matched_rows(a0, y_res, static_cast<Eigen::Index>(state.rows.size()), state.dims.antennas());
        // search the unscaled form so the argmax does not move when only the
        // noise estimate changed; s2 enters through the curvature alone
        const SpectralObjective f = hermitian_form_objective(b.adjoint() * state.gram_inverse * b, state.rows, n);
        if (f.is_zero()) {
            eps = state.sync;
        } else {
            const SearchResult r = spectral_search(f, options.search);
            const double mu = nearest_alias(r.belief.mu, state.rows);
            eps = r.curvature < 0.0 ? vm_from_curvature(mu, r.curvature / s2) : VonMisesBelief(mu, 0.0);
        }
    }
    const CMatrix a = dictionary(state.static_paths, eps.mu, state.dims, state.rows);
    GaussianBelief beta;
    beta.mean = state.gram_inverse * (a.adjoint() * vec(y_res));
    beta.covariance = s2 * state.gram_inverse;
    return {eps, std::move(beta)};
}

std::vector<PathParams> init_dynamic_paths(Stage2State& state, const CMatrix& y, int budget,
                                           const Stage2Options& options)
{
    std::vector<PathParams> found;
    if (budget <= 0)
        return found;
    const CMatrix base = y - static_part(state);
    CMatrix r = base;
    const std::vector<double> zero{0.0};
    std::vector<PathBelief> beliefs;
    CVector beta;
    const double s2 = state.noise_variance;
    while (static_cast<int>(beliefs.size()) < budget) {
        const std::vector<CMatrix> res{r};
        const auto g = detect_path(res, zero, state.dims, state.rows, s2, options.detection_factor, options.search);
        if (!g)
            break;
        beliefs.push_back(g->belief);
        std::vector<PathParams> means;
        for (const auto& b : beliefs)
            means.push_back(b.mean());
        const CMatrix d = dictionary(means, 0.0, state.dims, state.rows);
        CMatrix inv;
        try {
            inv = hermitian_inverse(d.adjoint() * d, 1e10, "dynamic init");
        } catch (const NumericalError&) {
            beliefs.pop_back();
            break;
        }
        beta = inv * (d.adjoint() * vec(base));
        r = base - unvec(d * beta, base.rows(), base.cols());
    }
    for (size_t k = 0; k < beliefs.size(); ++k) {
        DynamicPath p;
        p.belief = beliefs[k];
        const cdouble b = beta(static_cast<Eigen::Index>(k));
        p.lambda_prior = 0.5;
        p.v_prior = std::max(std::norm(b), kNoiseFloor);
        const CMatrix atom = path_atom(p.belief.mean(), 0.0, state.dims, state.rows);
        // evidence of the fitted coefficient against the spike
        p.coeff = bg_posterior({p.lambda_prior, cdouble(0.0, 0.0), p.v_prior}, b, s2 / atom.squaredNorm());
        state.dynamic.push_back(p);
        found.push_back(p.belief.mean());
    }
    return found;
}

DynamicPath update_dynamic_path(const Stage2State& state, int l, const CMatrix& y, const Stage2Options& options)
{
    DynamicPath p = state.dynamic[static_cast<size_t>(l)];
    const CMatrix r = y - static_part(state) - dynamic_part(state, l);
    const double s2 = state.noise_variance;
    const cdouble direction = p.coeff.mean;
    if (std::norm(direction) > 0.0) {
        const std::vector<CMatrix> res{r};
        const std::vector<cdouble> coeffs{direction};
        const std::vector<VonMisesBelief> sync{VonMisesBelief::point_mass(0.0)};
        const PathEvidence ev{res, coeffs, sync, state.dims, state.rows, s2};
        p.belief = refine_path(ev, p.belief, options.search);
    }
    if (state.n_static() == 0) {
        const CMatrix atom = path_atom(p.belief.mean(), 0.0, state.dims, state.rows);
        p.coeff = coefficient_update(p, atom, r, s2);
        return p;
    }

    // With static paths present, the static coefficients (flat prior) are
    // maximized out: alternating the two fits otherwise lets the static part
    // soak up the path and the pair crawls toward each other over many
    // iterations.
    const StaticProjector proj{dictionary(state.static_paths, state.sync.mu, state.dims, state.rows),
                               &state.gram_inverse};
    const CVector r_perp = proj.apply(vec(y - dynamic_part(state, l)));
    if (std::norm(direction) > 0.0) {
        const PathParams polished = polish_dynamic(p.belief.mean(), r_perp, proj, state.dims, state.rows);
        p.belief.tau.mu = polished.tau;
        p.belief.theta.mu = polished.theta;
        p.belief.phi.mu = polished.phi;
    }
    const CVector u = vec(path_atom(p.belief.mean(), 0.0, state.dims, state.rows));
    const CVector perp = proj.apply(u);
    const double energy = perp.squaredNorm();
    const BernoulliGaussianBelief prior{p.lambda_prior, cdouble(0.0, 0.0), p.v_prior};
    if (energy <= 1e-12 * u.squaredNorm()) {
        // the atom lies in the static span: no evidence either way
        p.coeff = prior;
        return p;
    }
    p.coeff = bg_posterior(prior, perp.dot(r_perp) / energy, s2 / energy);
    return p;
}

void em_update_dynamic(Stage2State& state, const CMatrix& y)
{
    for (auto& d : state.dynamic) {
        d.lambda_prior = d.coeff.lambda;
        d.v_prior = std::max(std::norm(d.coeff.mean) + d.coeff.variance, kNoiseFloor);
    }
    const CMatrix r = y - static_part(state) - dynamic_part(state);
    state.noise_variance = std::max(r.squaredNorm() / pilot_entries(state), kNoiseFloor);
}

CMatrix reconstruct_stage2(const Stage2State& state)
{
    CMatrix h = CMatrix::Zero(state.dims.n_subcarriers, state.dims.antennas());
    for (int l = 0; l < state.n_static(); ++l)
        add_path(h, state.static_paths[static_cast<size_t>(l)], state.static_coeffs.mean(l), state.sync.mu, state.dims);
    for (const auto& d : state.dynamic)
        add_path(h, d.belief.mean(), d.coeff.estimate(), 0.0, state.dims);
    return h;
}

Stage2Result run_stage2(const MeasurementSet& ms, const CkmEntry* entry, const Stage2Options& options)
{
    Stage2Result out;
    Stage2State& state = out.state;
    state = init_stage2(ms, entry);
    const CMatrix& y = ms.observations.front();

    auto cal = calibrate_sync_and_static(state, y, options);
    state.sync = cal.first;
    state.static_coeffs = std::move(cal.second);
    const double entries = pilot_entries(state);
    if (state.n_static() > 0)
        state.noise_variance = std::max((y - static_part(state)).squaredNorm() / entries, kNoiseFloor);
    init_dynamic_paths(state, y, options.max_dynamic, options);

    double prev = (y - static_part(state) - dynamic_part(state)).squaredNorm();
    for (int it = 0; it < options.max_iters; ++it) {
        state.iterations = it + 1;
        cal = calibrate_sync_and_static(state, static_residual(state, y), options);
        state.sync = cal.first;
        state.static_coeffs = std::move(cal.second);

        std::vector<int> order(static_cast<size_t>(state.n_dynamic()));
        std::iota(order.begin(), order.end(), 0);
        std::stable_sort(order.begin(), order.end(), [&](int a, int b) {
            const auto& pa = state.dynamic[static_cast<size_t>(a)].coeff;
            const auto& pb = state.dynamic[static_cast<size_t>(b)].coeff;
            return pa.lambda * std::norm(pa.mean) > pb.lambda * std::norm(pb.mean);
        });
        for (const int l : order)
            state.dynamic[static_cast<size_t>(l)] = update_dynamic_path(state, l, y, options);
        if (state.n_dynamic() > 0 && state.n_static() > 0) {
            // static coefficients catch up with the new dynamic part at the
            // current sync estimate
            Stage2Options keep = options;
            keep.fixed_sync = state.sync.mu;
            state.static_coeffs = calibrate_sync_and_static(state, static_residual(state, y), keep).second;
        }
        em_update_dynamic(state, y);
        out.history.push_back(reconstruct_stage2(state));

        const double res = (y - static_part(state) - dynamic_part(state)).squaredNorm();
        if (std::abs(prev - res) < options.tolerance * std::max(prev, 1e-300)) {
            out.converged = true;
            break;
        }
        prev = res;
    }
    out.reconstruction = out.history.empty() ? reconstruct_stage2(state) : out.history.back();
    while (static_cast<int>(out.history.size()) < options.max_iters)
        out.history.push_back(out.reconstruction);
    return out;
}

} // namespace ckm
