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

#ifndef CKM_TEST_UTIL_HPP
#define CKM_TEST_UTIL_HPP

#include <ckm/types.hpp>

#include <algorithm>
#include <cmath>
#include <limits>
#include <utility>
#include <vector>
#include <numbers>
#include <random>

namespace ckm::test
{
inline cdouble cnormal(std::mt19937_64& rng)
{
    std::normal_distribution<double> n(0.0, std::sqrt(0.5));
    return {n(rng), n(rng)};
}

inline CVector random_cvector(std::mt19937_64& rng, Eigen::Index n)
{
    CVector v(n);
    for (Eigen::Index i = 0; i < n; ++i)
        v(i) = cnormal(rng);
    return v;
}

inline CMatrix random_cmatrix(std::mt19937_64& rng, Eigen::Index r, Eigen::Index c)
{
    CMatrix m(r, c);
    for (Eigen::Index i = 0; i < r; ++i)
        for (Eigen::Index j = 0; j < c; ++j)
            m(i, j) = cnormal(rng);
    return m;
}

inline double uniform_angle(std::mt19937_64& rng)
{
    return std::uniform_real_distribution<double>(0.0, 2.0 * std::numbers::pi)(rng);
}

// Best & Fisher (1979) rejection sampler for the von Mises density.
inline double sample_von_mises(std::mt19937_64& rng, double mu, double kappa)
{
    std::uniform_real_distribution<double> u(0.0, 1.0);
    if (kappa < 1e-8)
        return 2.0 * std::numbers::pi * u(rng);
    const double tau = 1.0 + std::sqrt(1.0 + 4.0 * kappa * kappa);
    const double rho = (tau - std::sqrt(2.0 * tau)) / (2.0 * kappa);
    const double r = (1.0 + rho * rho) / (2.0 * rho);
    while (true) {
        const double z = std::cos(std::numbers::pi * u(rng));
        const double f = (1.0 + r * z) / (r + z);
        const double c = kappa * (r - f);
        const double u2 = u(rng);
        if (c * (2.0 - c) - u2 > 0.0 || std::log(c / u2) + 1.0 - c >= 0.0) {
            const double theta = std::acos(std::clamp(f, -1.0, 1.0));
            return mu + (u(rng) > 0.5 ? theta : -theta);
        }
    }
}

// Trapezoid rule over the circle of g(x) * VM(x; mu, kappa); spectrally
// accurate for smooth periodic integrands.
template <class F>
auto von_mises_expectation(F g, double mu, double kappa, int points = 20000)
{
    using R = decltype(g(0.0));
    R acc{};
    double norm = 0.0;
    for (int i = 0; i < points; ++i) {
        const double x = 2.0 * std::numbers::pi * i / points;
        const double w = std::exp(kappa * (std::cos(x - mu) - 1.0));
        acc += w * g(x);
        norm += w;
    }
    return acc / norm;
}

// Direct f(omega) = Re{eta^H a_x(omega)}.
inline double direct_objective(const CVector& eta, double omega)
{
    const double scale = 1.0 / std::sqrt(static_cast<double>(eta.size()));
    double f = 0.0;
    for (Eigen::Index k = 0; k < eta.size(); ++k)
        f += (std::conj(eta(k)) * std::polar(scale, -omega * static_cast<double>(k))).real();
    return f;
}

struct DenseMax
{
    double omega = 0.0;
    double value = 0.0;
};

// Exact argmax of f over the grid 2 pi i / points. Blocks are pruned with the
// Lipschitz bound sum k |eta_k| / sqrt(x) and survivors are scanned in full.
inline DenseMax dense_argmax(const CVector& eta, long points, long block = 1000)
{
    const double scale = 1.0 / std::sqrt(static_cast<double>(eta.size()));
    double lip = 0.0;
    for (Eigen::Index k = 0; k < eta.size(); ++k)
        lip += static_cast<double>(k) * std::abs(eta(k)) * scale;
    const double step = 2.0 * std::numbers::pi / static_cast<double>(points);
    const long blocks = (points + block - 1) / block;
    std::vector<std::pair<double, long>> bounds;
    bounds.reserve(static_cast<size_t>(blocks));
    for (long b = 0; b < blocks; ++b) {
        const long first = b * block;
        const long last = std::min(points, first + block) - 1;
        const double mid = 0.5 * static_cast<double>(first + last) * step;
        const double half = 0.5 * static_cast<double>(last - first) * step;
        bounds.emplace_back(direct_objective(eta, mid) + lip * half, b);
    }
    std::sort(bounds.begin(), bounds.end(), [](const auto& a, const auto& b) { return a.first > b.first; });
    DenseMax best{0.0, -std::numeric_limits<double>::infinity()};
    for (const auto& [bound, b] : bounds) {
        if (bound < best.value)
            break;
        const long first = b * block;
        const long last = std::min(points, first + block);
        for (long i = first; i < last; ++i) {
            const double w = static_cast<double>(i) * step;
            const double v = direct_objective(eta, w);
            if (v > best.value)
                best = {w, v};
        }
    }
    return best;
}

} // namespace ckm::test

#endif
