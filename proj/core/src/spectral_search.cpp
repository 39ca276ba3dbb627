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

#include <ckm/spectral_search.hpp>

#include <unsupported/Eigen/FFT>

#include <algorithm>
#include <numbers>
#include <vector>

namespace ckm
{
namespace
{
constexpr double kPi = std::numbers::pi;

// Objective values on the offset grid, index g = n Q + q <-> omega = 2 pi g / (x Q).
std::vector<double> grid_values(const SpectralObjective& obj, int offsets)
{
    const int x = obj.length();
    const CVector& eta = obj.eta();
    const double scale = 1.0 / std::sqrt(static_cast<double>(x));
    std::vector<double> values(static_cast<size_t>(x) * static_cast<size_t>(offsets));

    thread_local Eigen::FFT<double> fft;
    std::vector<cdouble> in(static_cast<size_t>(x)), out;
    for (int q = 0; q < offsets; ++q) {
        const double shift = kTwoPi * q / (static_cast<double>(x) * offsets);
        for (int k = 0; k < x; ++k)
            in[static_cast<size_t>(k)] = std::conj(eta(k)) * std::polar(1.0, -shift * k);
        fft.fwd(out, in);
        for (int n = 0; n < x; ++n)
            values[static_cast<size_t>(n) * offsets + q] = out[static_cast<size_t>(n)].real() * scale;
    }
    return values;
}

double grid_omega(size_t g, int x, int offsets)
{
    return kTwoPi * static_cast<double>(g) / (static_cast<double>(x) * offsets);
}

// Relative tolerance for treating two grid values as tied.
double tie_tolerance(const SpectralObjective& obj)
{
    return 1e-12 * obj.eta().cwiseAbs().sum() / std::sqrt(static_cast<double>(obj.length()));
}

size_t best_index(const std::vector<double>& values, double tol)
{
    const double top = *std::max_element(values.begin(), values.end());
    for (size_t g = 0; g < values.size(); ++g)
        if (values[g] >= top - tol)
            return g;
    return 0;
}

} // namespace

SpectralObjective::SpectralObjective(CVector eta) : eta_(std::move(eta))
{
    if (eta_.size() < 1)
        throw InvalidArgument("spectral objective needs at least one coefficient");
    if (!eta_.allFinite())
        throw InvalidArgument("spectral objective has non-finite coefficients");
}

double SpectralObjective::value(double omega) const
{
    cdouble s{0.0, 0.0};
    const cdouble step = std::polar(1.0, -omega);
    cdouble ph{1.0, 0.0};
    for (Eigen::Index k = 0; k < eta_.size(); ++k) {
        s += std::conj(eta_(k)) * ph;
        ph *= step;
    }
    return s.real() / std::sqrt(static_cast<double>(eta_.size()));
}

SpectralObjective::Derivatives SpectralObjective::evaluate(double omega) const
{
    double f = 0.0, d1 = 0.0, d2 = 0.0;
    for (Eigen::Index k = 0; k < eta_.size(); ++k) {
        const cdouble t = std::conj(eta_(k)) * std::polar(1.0, -omega * static_cast<double>(k));
        const auto kk = static_cast<double>(k);
        f += t.real();
        // d/dw of Re{t} = Re{-j k t} = k Im{t}
        d1 += kk * t.imag();
        d2 -= kk * kk * t.real();
    }
    const double s = 1.0 / std::sqrt(static_cast<double>(eta_.size()));
    return {f * s, d1 * s, d2 * s};
}

bool SpectralObjective::is_zero() const
{
    return eta_.cwiseAbs().maxCoeff() == 0.0;
}

SpectralObjective& SpectralObjective::operator+=(const SpectralObjective& other)
{
    if (other.length() != length())
        throw InvalidArgument("spectral objective lengths differ");
    eta_ += other.eta_;
    return *this;
}

SpectralObjective hermitian_form_objective(const CMatrix& K, std::span<const int> positions, int length)
{
    const auto r = static_cast<Eigen::Index>(positions.size());
    if (K.rows() != r || K.cols() != r)
        throw InvalidArgument("hermitian form size does not match the position list");
    // lag sums over p_i - p_k = d >= 0; the d < 0 half is the conjugate mirror
    CVector lag = CVector::Zero(length);
    for (Eigen::Index i = 0; i < r; ++i) {
        for (Eigen::Index k = 0; k < r; ++k) {
            const int d = positions[static_cast<size_t>(i)] - positions[static_cast<size_t>(k)];
            if (d < 0)
                continue;
            if (d >= length)
                throw InvalidArgument("position difference exceeds objective length");
            lag(d) += K(i, k);
        }
    }
    const double root = std::sqrt(static_cast<double>(length));
    CVector eta(length);
    eta(0) = root * lag(0).real();
    for (int d = 1; d < length; ++d)
        eta(d) = 2.0 * root * std::conj(lag(d));
    return SpectralObjective(std::move(eta));
}

SpectralObjective steering_energy_objective(const CMatrix& K, std::span<const int> positions, int length)
{
    // a^H K a = (1/x) sum_{i,k} exp(-j (p_k - p_i) w) K(i,k)
    const CMatrix kt = K.transpose() / static_cast<double>(length);
    return hermitian_form_objective(kt, positions, length);
}

double coarse_search(const SpectralObjective& obj, int offsets)
{
    if (offsets < 1)
        throw InvalidArgument("grid offset count must be >= 1");
    if (obj.is_zero())
        throw DegenerateObjective();
    const std::vector<double> values = grid_values(obj, offsets);
    return grid_omega(best_index(values, tie_tolerance(obj)), obj.length(), offsets);
}

NewtonResult newton_refine(const SpectralObjective& obj, double omega0, int max_iters, int offsets,
                           double step_tolerance)
{
    if (offsets < 1)
        throw InvalidArgument("grid offset count must be >= 1");
    const int x = obj.length();
    const double h = kTwoPi / (static_cast<double>(x) * offsets);
    const double radius = 0.5 * h;
    const double lo = omega0 - radius;
    const double hi = omega0 + radius;

    NewtonResult res;
    double w = omega0;
    auto d = obj.evaluate(w);
    const double f0 = d.value;

    if (d.second >= 0.0) {
        const double fl = obj.value(omega0 - h);
        const double fr = obj.value(omega0 + h);
        const double mid = fl > fr ? omega0 - radius : omega0 + radius;
        const auto dm = obj.evaluate(mid);
        if (dm.value >= d.value) {
            w = mid;
            d = dm;
        }
        if (d.second >= 0.0) {
            res.omega = wrap_angle(w);
            res.value = d.value;
            res.curvature = (fl - 2.0 * f0 + fr) / (h * h);
            res.concave = false;
            return res;
        }
    }

    int it = 0;
    for (; it < max_iters; ++it) {
        double step = -d.first / d.second;
        double cand = std::clamp(w + step, lo, hi);
        double fc = obj.value(cand);
        int halvings = 0;
        while (fc < d.value && halvings < 50) {
            step *= 0.5;
            cand = std::clamp(w + step, lo, hi);
            fc = obj.value(cand);
            ++halvings;
        }
        if (fc < d.value)
            break;
        const double moved = cand - w;
        w = cand;
        d = obj.evaluate(w);
        if (std::abs(moved) < step_tolerance || d.second >= 0.0)
            break;
    }
    res.omega = wrap_angle(w);
    res.value = d.value;
    res.iterations = it;
    if (d.second < 0.0) {
        res.curvature = d.second;
    } else {
        const double e = 1e-4;
        res.curvature = (obj.value(w - e) - 2.0 * d.value + obj.value(w + e)) / (e * e);
        res.concave = false;
    }
    return res;
}

SearchResult spectral_search(const SpectralObjective& obj, const SearchOptions& options)
{
    if (obj.length() == 1)
        return {VonMisesBelief::uniform(), obj.value(0.0), 0.0};
    if (obj.is_zero())
        throw DegenerateObjective();
    const int x = obj.length();
    const int q = std::max(1, options.offsets);
    const std::vector<double> values = grid_values(obj, q);
    const size_t count = values.size();
    const double tol = tie_tolerance(obj);

    // grid local maxima, strongest first; the global argmax (tie rule) leads
    const size_t top = best_index(values, tol);
    std::vector<size_t> peaks{top};
    std::vector<size_t> others;
    for (size_t g = 0; g < count; ++g) {
        if (g == top)
            continue;
        const double v = values[g];
        if (v >= values[(g + count - 1) % count] && v > values[(g + 1) % count])
            others.push_back(g);
    }
    // rank by the parabola through the three grid samples; the raw sample
    // can sit up to half a cell off the true peak and misorder near-ties
    std::vector<double> height(count, 0.0);
    for (const size_t g : others) {
        const double l = values[(g + count - 1) % count], c = values[g], r = values[(g + 1) % count];
        const double den = l - 2.0 * c + r;
        height[g] = den < 0.0 ? c - (r - l) * (r - l) / (8.0 * den) : c;
    }
    std::stable_sort(others.begin(), others.end(), [&](size_t a, size_t b) { return height[a] > height[b]; });
    for (size_t i = 0; i < others.size() && peaks.size() < static_cast<size_t>(std::max(1, options.candidates)); ++i)
        peaks.push_back(others[i]);

    NewtonResult best;
    bool have = false;
    const double radius = kPi / (static_cast<double>(x) * q);
    for (size_t g : peaks) {
        const double start = grid_omega(g, x, q);
        NewtonResult r = newton_refine(obj, start, options.newton_iters, q, options.step_tolerance);
        // a refinement pinned to the trust boundary gets one re-centred retry
        if (r.concave && std::abs(angle_diff(r.omega, start)) >= radius * (1.0 - 1e-9)) {
            NewtonResult again = newton_refine(obj, r.omega, options.newton_iters, q, options.step_tolerance);
            if (again.value >= r.value)
                r = again;
        }
        if (!have || r.value > best.value + tol) {
            best = r;
            have = true;
        }
    }

    VonMisesBelief belief = best.curvature < 0.0 ? vm_from_curvature(best.omega, best.curvature)
                                                 : VonMisesBelief(best.omega, 0.0);
    return {belief, best.value, best.curvature};
}

VonMisesBelief search_and_project(const SpectralObjective& obj, int offsets, int max_iters)
{
    SearchOptions opt;
    opt.offsets = offsets;
    opt.newton_iters = max_iters;
    return spectral_search(obj, opt).belief;
}

} // namespace ckm
