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

#include <ckm/beliefs.hpp>

#include <algorithm>
#include <limits>
#include <sstream>
#include <vector>

namespace ckm
{
namespace
{
// Above this concentration A(kappa) comes from its asymptotic series; the
// truncation error there is below 1e-15 relative.
constexpr double kAsymptoticThreshold = 1e3;

// 1 - A(kappa), accurate also when A is close to one.
double one_minus_bessel_ratio(double kappa)
{
    if (kappa > kAsymptoticThreshold) {
        const double u = 1.0 / kappa;
        return u * (0.5 + u * (0.125 + u * (0.125 + u * (25.0 / 128.0 + u * (13.0 / 32.0)))));
    }
    return 1.0 - bessel_ratio(kappa);
}

// Ratio r_k = I_k / I_{k-1} satisfies r_k = kappa / (2k + kappa r_{k+1});
// running it downward from a deep enough start converges to the minimal
// solution.
double ratio_by_backward_recurrence(double kappa)
{
    const int start = 50 + static_cast<int>(std::ceil(8.0 * std::sqrt(kappa)));
    double r = 0.0;
    for (int k = start; k >= 1; --k)
        r = kappa / (2.0 * k + kappa * r);
    return r;
}

double initial_concentration_guess(double r)
{
    // Best & Fisher approximation to A^-1.
    if (r < 0.53)
        return 2.0 * r + r * r * r + 5.0 * std::pow(r, 5) / 6.0;
    if (r < 0.85)
        return -0.4 + 1.39 * r + 0.43 / (1.0 - r);
    return 1.0 / (r * r * r - 4.0 * r * r + 3.0 * r);
}

// Solve 1 - A(kappa) = s for kappa with a bracketed Newton iteration.
double concentration_from_complement(double s)
{
    if (s >= 1.0)
        return 0.0;
    if (s <= one_minus_bessel_ratio(kMaxConcentration))
        return kMaxConcentration;

    double lo = 0.0;
    double hi = 1.0;
    while (one_minus_bessel_ratio(hi) > s)
        hi = std::min(hi * 4.0, kMaxConcentration);

    double kappa = std::clamp(initial_concentration_guess(1.0 - s), lo, hi);
    if (s < 1e-3)
        kappa = std::clamp(0.5 / s, lo, hi);

    for (int iter = 0; iter < 200; ++iter) {
        const double h = one_minus_bessel_ratio(kappa) - s;
        if (h == 0.0)
            return kappa;
        // 1 - A is decreasing: positive h means kappa is too small.
        if (h > 0.0)
            lo = kappa;
        else
            hi = kappa;
        const double slope = -bessel_ratio_derivative(kappa);
        double next = slope < 0.0 ? kappa - h / slope : 0.5 * (lo + hi);
        if (!(next > lo && next < hi))
            next = 0.5 * (lo + hi);
        if (std::abs(next - kappa) <= 1e-15 * std::max(1.0, kappa) || hi - lo <= 1e-15 * hi)
            return next;
        kappa = next;
    }
    return kappa;
}

} // namespace

VonMisesBelief::VonMisesBelief(double mu_, double kappa_)
    : mu(wrap_angle(mu_)), kappa(std::clamp(kappa_, 0.0, kMaxConcentration))
{
    if (!std::isfinite(mu_) || std::isnan(kappa_) || kappa_ < 0.0)
        throw InvalidArgument("von Mises belief needs finite mu and kappa >= 0");
}

cdouble VonMisesBelief::moment(int k) const
{
    if (k == 0)
        return 1.0;
    const int order = std::abs(k);
    const RVector ratios = bessel_moment_ratios(kappa, order + 1);
    return ratios(order) * std::polar(1.0, -k * mu);
}

double bessel_ratio(double kappa)
{
    if (!(kappa >= 0.0))
        throw InvalidArgument("bessel_ratio needs kappa >= 0");
    if (kappa == 0.0)
        return 0.0;
    if (kappa > kAsymptoticThreshold)
        return 1.0 - one_minus_bessel_ratio(kappa);
    return ratio_by_backward_recurrence(kappa);
}

double bessel_ratio_derivative(double kappa)
{
    if (kappa == 0.0)
        return 0.5;
    if (kappa > kAsymptoticThreshold) {
        const double u = 1.0 / kappa;
        return u * u * (0.5 + u * (0.25 + u * (0.375 + u * (25.0 / 32.0 + u * (65.0 / 32.0)))));
    }
    const double a = bessel_ratio(kappa);
    return 1.0 - a / kappa - a * a;
}

double bessel_ratio_inverse(double r)
{
    if (!(r >= 0.0) || !(r < 1.0))
        throw InvalidArgument("bessel_ratio_inverse needs 0 <= r < 1");
    if (r == 0.0)
        return 0.0;
    return concentration_from_complement(1.0 - r);
}

RVector bessel_moment_ratios(double kappa, int count)
{
    if (count < 1)
        return RVector();
    RVector out = RVector::Zero(count);
    out(0) = 1.0;
    if (kappa <= 0.0 || count == 1)
        return out;
    const double x = std::min(kappa, kMaxConcentration);
    const double n = count;
    if (x >= n * n) {
        // Upward recurrence r_{k+1} = 1/r_k - 2k/x. The growing solution
        // K_k only gains a factor of about exp(k^2/x) <= e over this range.
        double r = bessel_ratio(x);
        out(1) = r;
        for (int k = 1; k + 1 < count; ++k) {
            r = 1.0 / r - 2.0 * k / x;
            out(k + 1) = std::clamp(out(k) * r, 0.0, 1.0);
        }
        return out;
    }
    // Downward recurrence; the start index leaves exp(-40) of the unwanted
    // solution at k = count.
    const int start = count + 20 + static_cast<int>(std::ceil(std::sqrt(40.0 * x)));
    std::vector<double> r(static_cast<size_t>(count));
    double next = 0.0;
    for (int k = start; k >= 1; --k) {
        next = x / (2.0 * k + x * next);
        if (k < count)
            r[static_cast<size_t>(k)] = next;
    }
    for (int k = 1; k < count; ++k)
        out(k) = out(k - 1) * r[static_cast<size_t>(k)];
    return out;
}

VonMisesBelief vm_from_curvature(double mu_hat, double second_derivative)
{
    if (!(second_derivative < 0.0) || !std::isfinite(mu_hat))
        throw InvalidArgument("vm_from_curvature needs a strictly negative curvature");
    if (!std::isfinite(second_derivative))
        return VonMisesBelief::point_mass(mu_hat);
    const double variance = -1.0 / second_derivative;
    // A(kappa) = exp(-variance / 2); work with the complement for accuracy.
    const double complement = -std::expm1(-0.5 * variance);
    return {mu_hat, concentration_from_complement(complement)};
}

VonMisesBelief vm_multiply(const VonMisesBelief& a, const VonMisesBelief& b)
{
    const cdouble z = a.resultant() + b.resultant();
    const double kappa = std::abs(z);
    if (kappa <= std::numeric_limits<double>::min())
        return VonMisesBelief::uniform();
    return {std::arg(z), kappa};
}

VonMisesBelief project_von_mises(std::span<const double> samples)
{
    if (samples.empty())
        throw InvalidArgument("project_von_mises needs samples");
    double c = 0.0;
    double s = 0.0;
    for (double x : samples) {
        c += std::cos(x);
        s += std::sin(x);
    }
    c /= static_cast<double>(samples.size());
    s /= static_cast<double>(samples.size());
    const double length = std::hypot(c, s);
    if (length >= 1.0)
        return VonMisesBelief::point_mass(std::atan2(s, c));
    return {std::atan2(s, c), bessel_ratio_inverse(length)};
}

GaussianBelief project_gaussian(std::span<const cdouble> samples)
{
    if (samples.empty())
        throw InvalidArgument("project_gaussian needs samples");
    cdouble mean = 0.0;
    double second = 0.0;
    for (const cdouble& x : samples) {
        mean += x;
        second += std::norm(x);
    }
    const double n = static_cast<double>(samples.size());
    mean /= n;
    second /= n;
    GaussianBelief out;
    out.mean = CVector::Constant(1, mean);
    out.covariance = CMatrix::Constant(1, 1, std::max(0.0, second - std::norm(mean)));
    return out;
}

BernoulliGaussianBelief project_bernoulli_gaussian(std::span<const cdouble> samples)
{
    if (samples.empty())
        throw InvalidArgument("project_bernoulli_gaussian needs samples");
    std::vector<cdouble> active;
    for (const cdouble& x : samples)
        if (x != cdouble(0.0, 0.0))
            active.push_back(x);
    BernoulliGaussianBelief out;
    out.lambda = static_cast<double>(active.size()) / static_cast<double>(samples.size());
    if (active.empty()) {
        out.mean = 0.0;
        out.variance = 0.0;
        return out;
    }
    const GaussianBelief slab = project_gaussian(active);
    out.mean = slab.mean(0);
    out.variance = slab.covariance(0, 0).real();
    return out;
}

double log_cn_density(cdouble x, cdouble mean, double variance)
{
    return -std::log(std::numbers::pi * variance) - std::norm(x - mean) / variance;
}

BernoulliGaussianBelief bg_posterior(const BernoulliGaussianBelief& prior,
                                     cdouble likelihood_mean,
                                     double likelihood_variance)
{
    if (!(likelihood_variance > 0.0))
        throw InvalidArgument("bg_posterior needs a positive likelihood variance");
    if (!(prior.lambda >= 0.0 && prior.lambda <= 1.0) || !(prior.variance >= 0.0))
        throw InvalidArgument("bg_posterior needs 0 <= lambda <= 1 and variance >= 0");

    BernoulliGaussianBelief post;
    if (prior.variance == 0.0) {
        // degenerate slab: both hypotheses put all mass at the prior mean
        post.variance = 0.0;
        post.mean = prior.mean;
    } else {
        post.variance = 1.0 / (1.0 / prior.variance + 1.0 / likelihood_variance);
        post.mean = post.variance * (prior.mean / prior.variance + likelihood_mean / likelihood_variance);
    }

    if (prior.lambda == 0.0 || prior.lambda == 1.0) {
        post.lambda = prior.lambda;
        return post;
    }
    const double log_c0 = std::log1p(-prior.lambda) + log_cn_density(likelihood_mean, 0.0, likelihood_variance);
    const double log_c1 = std::log(prior.lambda) +
                          log_cn_density(likelihood_mean, prior.mean, prior.variance + likelihood_variance);
    post.lambda = 1.0 / (1.0 + std::exp(log_c0 - log_c1));
    return post;
}

CMatrix hermitian_inverse(const CMatrix& m, double max_condition, const char* what)
{
    if (m.rows() != m.cols())
        throw InvalidArgument(std::string(what) + ": matrix is not square");
    if (m.rows() == 0)
        return m;
    const Eigen::SelfAdjointEigenSolver<CMatrix> eig(0.5 * (m + m.adjoint()));
    const double lmin = eig.eigenvalues().minCoeff();
    const double lmax = eig.eigenvalues().maxCoeff();
    if (eig.info() != Eigen::Success || !(lmin > 0.0) || lmax / lmin > max_condition) {
        std::ostringstream msg;
        msg << what << ": matrix is singular (condition number "
            << (lmin > 0.0 ? lmax / lmin : std::numeric_limits<double>::infinity()) << ")";
        throw NumericalError(msg.str());
    }
    return eig.eigenvectors() * eig.eigenvalues().cwiseInverse().asDiagonal() * eig.eigenvectors().adjoint();
}

GaussianBelief gaussian_condition_gram(const CVector& prior_mean,
                                       const CMatrix& prior_cov,
                                       const CMatrix& gram,
                                       const CVector& projection,
                                       double noise_variance)
{
    const Eigen::Index n = gram.rows();
    if (gram.cols() != n || prior_cov.rows() != n || prior_cov.cols() != n ||
        prior_mean.size() != n || projection.size() != n)
        throw InvalidArgument("gaussian_condition: inconsistent dimensions");
    if (!(noise_variance > 0.0))
        throw InvalidArgument("gaussian_condition: noise variance must be positive");

    const Eigen::SelfAdjointEigenSolver<CMatrix> prior_eig(0.5 * (prior_cov + prior_cov.adjoint()));
    if (prior_eig.info() != Eigen::Success || prior_eig.eigenvalues().minCoeff() <= 0.0)
        throw NumericalError("gaussian_condition: prior covariance is not positive definite");
    const CMatrix prior_precision = prior_eig.eigenvectors() *
                                    prior_eig.eigenvalues().cwiseInverse().asDiagonal() *
                                    prior_eig.eigenvectors().adjoint();

    CMatrix precision = gram / noise_variance + prior_precision;
    precision = 0.5 * (precision + precision.adjoint()).eval();
    const Eigen::SelfAdjointEigenSolver<CMatrix> eig(precision);
    const double lmin = eig.eigenvalues().minCoeff();
    const double lmax = eig.eigenvalues().maxCoeff();
    if (eig.info() != Eigen::Success || !(lmin > 0.0) || lmax / lmin > 1e14) {
        std::ostringstream msg;
        msg << "gaussian_condition: combined precision is singular (condition number "
            << (lmin > 0.0 ? lmax / lmin : std::numeric_limits<double>::infinity()) << ")";
        throw NumericalError(msg.str());
    }

    GaussianBelief out;
    out.covariance = eig.eigenvectors() * eig.eigenvalues().cwiseInverse().asDiagonal() *
                     eig.eigenvectors().adjoint();
    out.mean = out.covariance * (projection / noise_variance + prior_precision * prior_mean);
    return out;
}

GaussianBelief gaussian_condition(const CVector& prior_mean,
                                  const CMatrix& prior_cov,
                                  const CMatrix& design,
                                  const CVector& observation,
                                  double noise_variance)
{
    if (design.rows() != observation.size())
        throw InvalidArgument("gaussian_condition: design rows must match observation length");
    return gaussian_condition_gram(prior_mean, prior_cov, design.adjoint() * design,
                                   design.adjoint() * observation, noise_variance);
}

} // namespace ckm
