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

#ifndef CKM_SPECTRAL_SEARCH_HPP
#define CKM_SPECTRAL_SEARCH_HPP

#include <ckm/beliefs.hpp>
#include <ckm/types.hpp>

#include <span>

namespace ckm
{
/// Raised when an objective carries no information about its argument.
class DegenerateObjective : public NumericalError
{
public:
    DegenerateObjective() : NumericalError("degenerate objective") {}
};

/// f(omega) = Re{eta^H a_x(omega)}, a trigonometric polynomial of degree
/// x - 1 on the circle.
class SpectralObjective
{
public:
    struct Derivatives
    {
        double value;
        double first;
        double second;
    };

    explicit SpectralObjective(CVector eta);

    int length() const { return static_cast<int>(eta_.size()); }
    const CVector& eta() const { return eta_; }

    double value(double omega) const;
    Derivatives evaluate(double omega) const;

    /// True when every coefficient is zero.
    bool is_zero() const;

    SpectralObjective& operator+=(const SpectralObjective& other);

private:
    CVector eta_;
};

/// Objective equal to sum_{i,k} exp(-j (p_i - p_k) omega) K(i,k) for a
/// Hermitian K indexed by the (distinct) positions p in [0, length). The
/// constant lag-0 part is kept so that the objective reproduces the form
/// exactly.
SpectralObjective hermitian_form_objective(const CMatrix& K, std::span<const int> positions,
                                           int length);

/// Objective equal to S a_x(omega)^H K S a_x(omega), i.e. the energy of a
/// Hermitian form probed by a (row-selected) steering vector.
SpectralObjective steering_energy_objective(const CMatrix& K, std::span<const int> positions,
                                            int length);

struct SearchOptions
{
    /// Grid offsets per FFT bin.
    int offsets = 4;
    /// Newton iterations per candidate.
    int newton_iters = 10;
    /// Early exit once |step| falls below this.
    double step_tolerance = 1e-10;
    /// Number of grid peaks refined; the best refined peak wins.
    int candidates = 6;
};

/// Argmax of the objective over the grid 2 pi (n / x + q / (x Q)),
/// n < x, q < Q. Ties go to the smallest omega. Throws DegenerateObjective
/// for eta == 0.
double coarse_search(const SpectralObjective& obj, int offsets = 4);

struct NewtonResult
{
    double omega = 0.0;
    double value = 0.0;
    /// f''(omega); for a non-concave fallback, the discrete second difference.
    double curvature = 0.0;
    int iterations = 0;
    bool concave = true;
};

/// Safeguarded Newton refinement from a grid point. Never decreases the
/// objective and never moves further than pi / (x Q) from omega0.
NewtonResult newton_refine(const SpectralObjective& obj, double omega0, int max_iters = 10,
                           int offsets = 4, double step_tolerance = 1e-10);

struct SearchResult
{
    VonMisesBelief belief;
    double value = 0.0;
    double curvature = 0.0;
};

/// Coarse search, Newton refinement of the strongest grid peaks, and
/// Laplace-to-von Mises projection of the winner.
SearchResult spectral_search(const SpectralObjective& obj, const SearchOptions& options = {});

/// Belief-only shorthand for spectral_search.
VonMisesBelief search_and_project(const SpectralObjective& obj, int offsets = 4, int max_iters = 10);

} // namespace ckm

#endif
