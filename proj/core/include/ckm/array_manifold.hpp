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

#ifndef CKM_ARRAY_MANIFOLD_HPP
#define CKM_ARRAY_MANIFOLD_HPP

#include <ckm/beliefs.hpp>
#include <ckm/types.hpp>

#include <span>
#include <vector>

namespace ckm
{
/// NMSE reported for an exact match.
inline constexpr double kNmseFloorDb = -300.0;

/// Beliefs over the three circular parameters of one path.
struct PathBelief
{
    VonMisesBelief tau;
    VonMisesBelief theta;
    VonMisesBelief phi;

    PathParams mean() const { return {tau.mu, theta.mu, phi.mu}; }
    static PathBelief point_mass(const PathParams& p)
    {
        return {VonMisesBelief::point_mass(p.tau), VonMisesBelief::point_mass(p.theta),
                VonMisesBelief::point_mass(p.phi)};
    }
};

/// Subcarrier rows observed by a measurement; empty means all N rows.
using RowSelection = std::span<const int>;

/// a_x(omega): entry k is exp(-j k omega) / sqrt(x).
CVector steering(SteeringLength x, double omega);

/// S a_N(omega) for the selected rows (still normalized by sqrt(N)).
CVector compressed_steering(SteeringLength n, double omega, RowSelection rows);

/// b(theta, phi) = a_M1(theta) kron a_M2(phi).
CVector spatial_steering(double theta, double phi, SteeringLength m1, SteeringLength m2);

/// E[a_x(omega)] under a von Mises belief on omega.
CVector expected_steering(SteeringLength x, const VonMisesBelief& belief);

/// E[S a_N(tau + eps)] for independent beliefs on tau and eps.
CVector expected_shifted_steering(SteeringLength n, const VonMisesBelief& tau,
                                  const VonMisesBelief& eps, RowSelection rows = {});

/// E[b(theta, phi)] for independent beliefs.
CVector expected_spatial_steering(const PathBelief& path, const ArrayDims& dims);

/// exp(-j p eps) for every selected row p: the diagonal of D(eps) restricted
/// to one antenna block.
CVector sync_phase(int n_subcarriers, double epsilon, RowSelection rows = {});

/// Rank-one matrix a_N(tau + eps) b(theta, phi)^T on the selected rows.
CMatrix path_atom(const PathParams& path, double epsilon, const ArrayDims& dims,
                  RowSelection rows = {});

/// Dictionary with columns vec(S a_N(tau_l + eps) b_l^T) = b_l kron S a_N(tau_l + eps).
/// vec() is column-major: subcarrier index runs fastest.
CMatrix dictionary(std::span<const PathParams> paths, double epsilon, const ArrayDims& dims,
                   RowSelection rows = {});

/// Dictionary built from expected steering vectors.
CMatrix expected_dictionary(std::span<const PathBelief> paths, const VonMisesBelief& epsilon,
                            const ArrayDims& dims, RowSelection rows = {});

/// E[A^H A] over independent path beliefs; does not depend on eps.
CMatrix expected_gram(std::span<const PathBelief> paths, const ArrayDims& dims,
                      RowSelection rows = {});

/// sum_l beta^s_l a_N(tau^s_l + eps) b_l^T + sum_l beta^d_l a_N(tau^d_l) b_l^T
/// over all N subcarriers.
CMatrix reconstruct(std::span<const PathParams> static_paths,
                    std::span<const cdouble> static_coeffs, double epsilon,
                    std::span<const PathParams> dynamic_paths,
                    std::span<const cdouble> dynamic_coeffs, const ArrayDims& dims);

/// Accumulate coeff * atom into target (rows as in path_atom).
void add_path(CMatrix& target, const PathParams& path, cdouble coeff, double epsilon,
              const ArrayDims& dims, RowSelection rows = {});

/// 10 log10(||estimate - truth||^2 / ||truth||^2), floored at kNmseFloorDb.
double nmse_db(const CMatrix& estimate, const CMatrix& truth);

/// Column-major vec() of a matrix.
inline CVector vec(const CMatrix& m)
{
    return Eigen::Map<const CVector>(m.data(), m.size());
}

/// Inverse of vec() for an r x c matrix.
inline CMatrix unvec(const CVector& v, Eigen::Index rows, Eigen::Index cols)
{
    return Eigen::Map<const CMatrix>(v.data(), rows, cols);
}

/// All-row selection 0..n-1.
std::vector<int> all_rows(int n);

} // namespace ckm

#endif
