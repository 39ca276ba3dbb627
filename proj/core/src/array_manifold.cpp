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

#include <ckm/array_manifold.hpp>

#include <numeric>

namespace ckm
{
namespace
{
int row_count(int n, RowSelection rows)
{
    return rows.empty() ? n : static_cast<int>(rows.size());
}

int row_index(RowSelection rows, int i)
{
    return rows.empty() ? i : rows[static_cast<size_t>(i)];
}

void check_paths(std::span<const PathParams> paths, std::span<const cdouble> coeffs)
{
    if (paths.size() != coeffs.size())
        throw InvalidArgument("reconstruct: coefficient count must match path count");
}

} // namespace

std::vector<int> all_rows(int n)
{
    std::vector<int> rows(static_cast<size_t>(n));
    std::iota(rows.begin(), rows.end(), 0);
    return rows;
}

CVector steering(SteeringLength x, double omega)
{
    const double w = wrap_angle(omega);
    const double scale = 1.0 / std::sqrt(static_cast<double>(x.x));
    CVector a(x.x);
    for (int k = 0; k < x.x; ++k)
        a(k) = std::polar(scale, -w * k);
    return a;
}

CVector compressed_steering(SteeringLength n, double omega, RowSelection rows)
{
    if (rows.empty())
        return steering(n, omega);
    const double w = wrap_angle(omega);
    const double scale = 1.0 / std::sqrt(static_cast<double>(n.x));
    CVector a(static_cast<Eigen::Index>(rows.size()));
    for (size_t i = 0; i < rows.size(); ++i)
        a(static_cast<Eigen::Index>(i)) = std::polar(scale, -w * rows[i]);
    return a;
}

CVector spatial_steering(double theta, double phi, SteeringLength m1, SteeringLength m2)
{
    const CVector a1 = steering(m1, theta);
    const CVector a2 = steering(m2, phi);
    CVector b(m1.x * m2.x);
    for (int i = 0; i < m1.x; ++i)
        b.segment(i * m2.x, m2.x) = a1(i) * a2;
    return b;
}

CVector expected_steering(SteeringLength x, const VonMisesBelief& belief)
{
    if (belief.kappa >= kMaxConcentration)
        return steering(x, belief.mu);
    const RVector ratios = bessel_moment_ratios(belief.kappa, x.x);
    const double scale = 1.0 / std::sqrt(static_cast<double>(x.x));
    CVector a(x.x);
    for (int k = 0; k < x.x; ++k)
        a(k) = std::polar(scale * ratios(k), -belief.mu * k);
    return a;
}

CVector expected_shifted_steering(SteeringLength n, const VonMisesBelief& tau,
                                  const VonMisesBelief& eps, RowSelection rows)
{
    const int count = row_count(n.x, rows);
    const bool tau_point = tau.kappa >= kMaxConcentration;
    const bool eps_point = eps.kappa >= kMaxConcentration;
    RVector rt, re;
    if (!tau_point)
        rt = bessel_moment_ratios(tau.kappa, n.x);
    if (!eps_point)
        re = bessel_moment_ratios(eps.kappa, n.x);
    const double scale = 1.0 / std::sqrt(static_cast<double>(n.x));
    const double mu = tau.mu + eps.mu;
    CVector a(count);
    for (int i = 0; i < count; ++i) {
        const int p = row_index(rows, i);
        double mag = scale;
        if (!tau_point)
            mag *= rt(p);
        if (!eps_point)
            mag *= re(p);
        a(i) = std::polar(mag, -mu * p);
    }
    return a;
}

CVector expected_spatial_steering(const PathBelief& path, const ArrayDims& dims)
{
    const CVector a1 = expected_steering(SteeringLength(dims.m1), path.theta);
    const CVector a2 = expected_steering(SteeringLength(dims.m2), path.phi);
    CVector b(dims.antennas());
    for (int i = 0; i < dims.m1; ++i)
        b.segment(i * dims.m2, dims.m2) = a1(i) * a2;
    return b;
}

CVector sync_phase(int n_subcarriers, double epsilon, RowSelection rows)
{
    const int count = row_count(n_subcarriers, rows);
    const double w = wrap_angle(epsilon);
    CVector d(count);
    for (int i = 0; i < count; ++i)
        d(i) = std::polar(1.0, -w * row_index(rows, i));
    return d;
}

CMatrix path_atom(const PathParams& path, double epsilon, const ArrayDims& dims, RowSelection rows)
{
    const CVector a = compressed_steering(SteeringLength(dims.n_subcarriers), path.tau + epsilon, rows);
    const CVector b = spatial_steering(path.theta, path.phi, SteeringLength(dims.m1), SteeringLength(dims.m2));
    return a * b.transpose();
}

void add_path(CMatrix& target, const PathParams& path, cdouble coeff, double epsilon,
              const ArrayDims& dims, RowSelection rows)
{
    if (coeff == cdouble(0.0, 0.0))
        return;
    const CVector a = compressed_steering(SteeringLength(dims.n_subcarriers), path.tau + epsilon, rows);
    const CVector b = spatial_steering(path.theta, path.phi, SteeringLength(dims.m1), SteeringLength(dims.m2));
    target.noalias() += (coeff * a) * b.transpose();
}

CMatrix dictionary(std::span<const PathParams> paths, double epsilon, const ArrayDims& dims,
                   RowSelection rows)
{
    const int r = row_count(dims.n_subcarriers, rows);
    CMatrix out(static_cast<Eigen::Index>(r) * dims.antennas(), static_cast<Eigen::Index>(paths.size()));
    for (size_t l = 0; l < paths.size(); ++l)
        out.col(static_cast<Eigen::Index>(l)) = vec(path_atom(paths[l], epsilon, dims, rows));
    return out;
}

CMatrix expected_dictionary(std::span<const PathBelief> paths, const VonMisesBelief& epsilon,
                            const ArrayDims& dims, RowSelection rows)
{
    const int r = row_count(dims.n_subcarriers, rows);
    CMatrix out(static_cast<Eigen::Index>(r) * dims.antennas(), static_cast<Eigen::Index>(paths.size()));
    for (size_t l = 0; l < paths.size(); ++l) {
        const CVector a = expected_shifted_steering(SteeringLength(dims.n_subcarriers), paths[l].tau, epsilon, rows);
        const CVector b = expected_spatial_steering(paths[l], dims);
        const CMatrix atom = a * b.transpose();
        out.col(static_cast<Eigen::Index>(l)) = vec(atom);
    }
    return out;
}

CMatrix expected_gram(std::span<const PathBelief> paths, const ArrayDims& dims, RowSelection rows)
{
    const auto count = static_cast<Eigen::Index>(paths.size());
    const int r = row_count(dims.n_subcarriers, rows);
    std::vector<CVector> delay(paths.size()), az(paths.size()), zen(paths.size());
    const VonMisesBelief no_shift = VonMisesBelief::point_mass(0.0);
    for (size_t l = 0; l < paths.size(); ++l) {
        delay[l] = expected_shifted_steering(SteeringLength(dims.n_subcarriers), paths[l].tau, no_shift, rows);
        az[l] = expected_steering(SteeringLength(dims.m1), paths[l].theta);
        zen[l] = expected_steering(SteeringLength(dims.m2), paths[l].phi);
    }
    CMatrix gram(count, count);
    const double diag = static_cast<double>(r) / dims.n_subcarriers;
    for (Eigen::Index i = 0; i < count; ++i) {
        gram(i, i) = diag;
        for (Eigen::Index j = i + 1; j < count; ++j) {
            const auto ui = static_cast<size_t>(i);
            const auto uj = static_cast<size_t>(j);
            const cdouble v = delay[ui].dot(delay[uj]) * az[ui].dot(az[uj]) * zen[ui].dot(zen[uj]);
            gram(i, j) = v;
            gram(j, i) = std::conj(v);
        }
    }
    return gram;
}

CMatrix reconstruct(std::span<const PathParams> static_paths,
                    std::span<const cdouble> static_coeffs, double epsilon,
                    std::span<const PathParams> dynamic_paths,
                    std::span<const cdouble> dynamic_coeffs, const ArrayDims& dims)
{
    check_paths(static_paths, static_coeffs);
    check_paths(dynamic_paths, dynamic_coeffs);
    CMatrix h = CMatrix::Zero(dims.n_subcarriers, dims.antennas());
    for (size_t l = 0; l < static_paths.size(); ++l)
        add_path(h, static_paths[l], static_coeffs[l], epsilon, dims);
    for (size_t l = 0; l < dynamic_paths.size(); ++l)
        add_path(h, dynamic_paths[l], dynamic_coeffs[l], 0.0, dims);
    return h;
}

double nmse_db(const CMatrix& estimate, const CMatrix& truth)
{
    if (estimate.rows() != truth.rows() || estimate.cols() != truth.cols())
        throw InvalidArgument("nmse: estimate and truth dimensions differ");
    const double denom = truth.squaredNorm();
    if (!(denom > 0.0))
        throw InvalidArgument("nmse: truth has zero norm");
    const double ratio = (estimate - truth).squaredNorm() / denom;
    if (ratio <= 0.0)
        return kNmseFloorDb;
    return std::max(kNmseFloorDb, 10.0 * std::log10(ratio));
}

} // namespace ckm
