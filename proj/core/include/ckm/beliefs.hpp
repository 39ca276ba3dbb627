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

#ifndef CKM_BELIEFS_HPP
#define CKM_BELIEFS_HPP

#include <ckm/types.hpp>

#include <span>

namespace ckm
{
/// Concentration used to represent a point mass without infinities.
inline constexpr double kMaxConcentration = 1e12;

/// Circular belief VM(x; mu, kappa). kappa == 0 is the uniform density on
/// [0, 2pi).
struct VonMisesBelief
{
    double mu = 0.0;
    double kappa = 0.0;

    VonMisesBelief() = default;
    VonMisesBelief(double mu_, double kappa_);

    static VonMisesBelief uniform() { return {}; }
    static VonMisesBelief point_mass(double mu_) { return {mu_, kMaxConcentration}; }

    /// kappa * exp(j mu)
    cdouble resultant() const { return std::polar(kappa, mu); }

    /// E[exp(-j k x)] = I_k(kappa) / I_0(kappa) * exp(-j k mu)
    cdouble moment(int k) const;
};

/// Complex Gaussian belief CN(mean, covariance).
struct GaussianBelief
{
    CVector mean;
    CMatrix covariance;

    Eigen::Index size() const { return mean.size(); }
};

/// Spike-and-slab belief (1 - lambda) delta(x) + lambda CN(x; mean, variance).
struct BernoulliGaussianBelief
{
    double lambda = 0.5;
    cdouble mean{0.0, 0.0};
    double variance = 1.0;

    /// Posterior mean lambda * mean.
    cdouble estimate() const { return lambda * mean; }
};

// -- Bessel machinery -----------------------------------------------------

/// A(kappa) = I_1(kappa) / I_0(kappa), in [0, 1).
double bessel_ratio(double kappa);

/// Derivative of A: 1 - A/kappa - A^2 (1/2 at kappa = 0).
double bessel_ratio_derivative(double kappa);

/// Inverse of bessel_ratio. Throws InvalidArgument unless 0 <= r < 1.
/// Values of r beyond A(kMaxConcentration) map to kMaxConcentration.
double bessel_ratio_inverse(double r);

/// I_k(kappa) / I_0(kappa) for k = 0 .. count-1.
RVector bessel_moment_ratios(double kappa, int count);

// -- projections and products ---------------------------------------------

/// Laplace-to-von Mises conversion of a local maximum with curvature
/// second_derivative < 0 of the log-density. kappa solves
/// A(kappa) = exp(-sigma^2 / 2) with sigma^2 = -1 / second_derivative.
VonMisesBelief vm_from_curvature(double mu_hat, double second_derivative);

/// Product of two von Mises densities (resultant-vector sum).
VonMisesBelief vm_multiply(const VonMisesBelief& a, const VonMisesBelief& b);

/// Moment-matched von Mises from circular samples (E[cos], E[sin]).
VonMisesBelief project_von_mises(std::span<const double> samples);

/// Moment-matched scalar complex Gaussian from samples (mean, E|x|^2).
GaussianBelief project_gaussian(std::span<const cdouble> samples);

/// Moment-matched Bernoulli-Gaussian from samples: P(x = 0) plus the first
/// and second moments of the nonzero part.
BernoulliGaussianBelief project_bernoulli_gaussian(std::span<const cdouble> samples);

/// Log of the complex Gaussian density CN(x; mean, variance) for scalars.
double log_cn_density(cdouble x, cdouble mean, double variance);

/// Fuse a BG prior with a Gaussian likelihood message CN(mean, variance).
BernoulliGaussianBelief bg_posterior(const BernoulliGaussianBelief& prior,
                                     cdouble likelihood_mean,
                                     double likelihood_variance);

/// Linear-Gaussian update written in terms of the Gram matrix and the
/// projected observation design^H y:
///   Sigma = (gram / s2 + prior_cov^-1)^-1
///   mean  = Sigma (projection / s2 + prior_cov^-1 prior_mean)
/// Throws NumericalError when the combined precision is singular.
GaussianBelief gaussian_condition_gram(const CVector& prior_mean,
                                       const CMatrix& prior_cov,
                                       const CMatrix& gram,
                                       const CVector& projection,
                                       double noise_variance);

/// Inverse of a Hermitian positive definite matrix. Throws NumericalError
/// naming `what` and the condition number when it exceeds max_condition.
CMatrix hermitian_inverse(const CMatrix& m, double max_condition, const char* what);

/// Same update from an explicit design matrix and observation.
GaussianBelief gaussian_condition(const CVector& prior_mean,
                                  const CMatrix& prior_cov,
                                  const CMatrix& design,
                                  const CVector& observation,
                                  double noise_variance);

} // namespace ckm

#endif
