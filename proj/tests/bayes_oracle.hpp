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

#ifndef CKM_BAYES_ORACLE_HPP
#define CKM_BAYES_ORACLE_HPP

#include <ckm/beliefs.hpp>

#include <algorithm>
#include <cmath>

namespace ckm::test
{
struct GridPosterior
{
    double lambda;
    cdouble mean;
    double variance;
};

// Bernoulli-Gaussian prior times CN(m; x, s), integrated on a square grid
// over the complex plane.
inline GridPosterior grid_bayes(const BernoulliGaussianBelief& prior, cdouble m, double s, int n = 1200)
{
    const double half = 8.0 * std::sqrt(std::max(prior.variance, s)) + std::abs(m) + std::abs(prior.mean);
    const double h = 2.0 * half / n;
    double z1 = 0.0;
    cdouble first = 0.0;
    double second = 0.0;
    for (int i = 0; i < n; ++i)
        for (int k = 0; k < n; ++k) {
            const cdouble x(-half + (i + 0.5) * h, -half + (k + 0.5) * h);
            const double w = std::exp(log_cn_density(x, prior.mean, prior.variance) + log_cn_density(m, x, s)) * h * h;
            z1 += w;
            first += w * x;
            second += w * std::norm(x);
        }
    const double z0 = std::exp(log_cn_density(m, 0.0, s));
    GridPosterior out;
    out.lambda = prior.lambda * z1 / (prior.lambda * z1 + (1.0 - prior.lambda) * z0);
    out.mean = first / z1;
    out.variance = second / z1 - std::norm(out.mean);
    return out;
}

} // namespace ckm::test

#endif
