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

#ifndef CKM_TYPES_HPP
#define CKM_TYPES_HPP

#include <Eigen/Dense>

#include <cmath>
#include <complex>
#include <numbers>
#include <stdexcept>
#include <string>

namespace ckm
{
using cdouble = std::complex<double>;
using CVector = Eigen::VectorXcd;
using CMatrix = Eigen::MatrixXcd;
using RVector = Eigen::VectorXd;

inline constexpr double kTwoPi = 2.0 * std::numbers::pi;

/// Base class for all errors raised by the library.
class Error : public std::runtime_error
{
public:
    using std::runtime_error::runtime_error;
};

/// Invalid arguments or configuration (bad sizes, out-of-range values).
class InvalidArgument : public Error
{
public:
    using Error::Error;
};

/// A linear system or objective could not be handled numerically.
class NumericalError : public Error
{
public:
    using Error::Error;
};

/// File format problems: bad magic, version mismatch, truncation.
class FormatError : public Error
{
public:
    using Error::Error;
};

/// Reduce an angle to [0, 2pi).
inline double wrap_angle(double omega)
{
    double r = std::fmod(omega, kTwoPi);
    if (r < 0.0)
        r += kTwoPi;
    // fmod can return exactly 2pi after the shift for tiny negatives
    if (r >= kTwoPi)
        r = 0.0;
    return r;
}

/// Signed circular difference a - b mapped to (-pi, pi].
inline double angle_diff(double a, double b)
{
    double d = wrap_angle(a - b);
    return d > std::numbers::pi ? d - kTwoPi : d;
}

/// Number of elements of a steering vector (subcarriers or antennas).
struct SteeringLength
{
    explicit SteeringLength(int n) : x(n)
    {
        if (n < 1)
            throw InvalidArgument("steering length must be >= 1, got " +
                                  std::to_string(n));
    }
    int x;
};

/// Array and band dimensions shared by every matrix in a scenario.
struct ArrayDims
{
    int n_subcarriers = 1;
    int m1 = 1;
    int m2 = 1;

    int antennas() const { return m1 * m2; }
    bool operator==(const ArrayDims&) const = default;
};

/// Normalized delay, azimuth and zenith of one propagation path.
struct PathParams
{
    double tau = 0.0;
    double theta = 0.0;
    double phi = 0.0;

    PathParams() = default;
    PathParams(double tau_, double theta_, double phi_)
        : tau(wrap_angle(tau_)), theta(wrap_angle(theta_)), phi(wrap_angle(phi_))
    {
    }
    bool operator==(const PathParams&) const = default;
};

} // namespace ckm

#endif
