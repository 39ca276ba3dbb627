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

#ifndef CKM_STAGE1_HPP
#define CKM_STAGE1_HPP

#include <ckm/array_manifold.hpp>
#include <ckm/beliefs.hpp>
#include <ckm/channel_sim.hpp>
#include <ckm/ckm_table.hpp>
#include <ckm/spectral_search.hpp>

#include <optional>
#include <span>
#include <utility>
#include <vector>

namespace ckm
{
inline constexpr double kNoiseFloor = 1e-12;

// -- building blocks shared with Stage II -----------------------------------

/// Multi-slot view of the data a single path is refined against.
struct PathEvidence
{
    /// Residuals with the path itself left in (P x M each).
    std::span<const CMatrix> residuals;
    /// Current coefficient estimate of the path per slot.
    std::span<const cdouble> coeffs;
    /// Sync belief per slot.
    std::span<const VonMisesBelief> sync;
    ArrayDims dims;
    RowSelection rows;
    double noise_variance = 1.0;
};

/// Delay objective (2 / s2) sum_t conj(beta_t) conj(E[u_t]) .* (R_t conj(b)),
/// with the von Mises prior added on the first harmonic.
SpectralObjective delay_objective(const PathEvidence& ev, const PathBelief& path,
                                  const VonMisesBelief& prior = {});

/// w = (2 / s2) sum_t conj(beta_t) R_t^T conj(a_t), reshaped M1 x M2.
CMatrix angle_evidence(const PathEvidence& ev, const PathBelief& path);

/// Refines the delay and then azimuth and zenith of one path.
PathBelief refine_path(const PathEvidence& ev, const PathBelief& path, const SearchOptions& search);

struct GeneratedPath
{
    PathBelief belief;
    /// Peak of the pooled delay-projection energy.
    double peak = 0.0;
};

/// Greedy detection of one new path from multi-slot residuals, compensating
/// each slot by its sync estimate. Returns nothing when the peak energy is
/// below factor * s2 * M * T * (P / N).
std::optional<GeneratedPath> detect_path(std::span<const CMatrix> residuals, std::span<const double> sync,
                                         const ArrayDims& dims, RowSelection rows, double noise_variance,
                                         double detection_factor, const SearchOptions& search);

// -- Stage I ----------------------------------------------------------------

enum class Stage1Init
{
    /// Interleaved path generation.
    Generate,
    /// All paths first by orthogonal matching pursuit ignoring sync errors.
    Omp
};

struct Stage1Options
{
    /// Path budget L^s.
    int max_paths = 12;
    /// Outer iterations I_sta.
    int max_iters = 30;
    /// Relative residual change that ends the run once generation stopped.
    double tolerance = 1e-6;
    double detection_factor = 3.0;
    SearchOptions search;
    /// false forces eps(t) = 0 throughout.
    bool estimate_sync = true;
    /// false decouples the sync search from the coefficient prior and fits
    /// the coefficients by least squares.
    bool coupled = true;
    Stage1Init init = Stage1Init::Generate;
};

struct Stage1State
{
    ArrayDims dims;
    std::vector<int> rows;
    std::vector<PathBelief> paths;
    std::vector<double> powers;
    /// Coefficient belief per slot.
    std::vector<GaussianBelief> coeffs;
    /// Sync belief per slot.
    std::vector<VonMisesBelief> sync;
    double noise_variance = 1.0;
    int iteration = 0;
    std::vector<double> residual_history;

    int n_paths() const { return static_cast<int>(paths.size()); }
    int n_slots() const { return static_cast<int>(sync.size()); }
};

/// Empty state for a measurement set; noise from the data at an assumed 0 dB SNR.
Stage1State init_stage1(const MeasurementSet& ms);

/// Y(t) minus every path except `exclude` (-1 keeps none out), built from
/// expected steering vectors and coefficient means.
CMatrix residual_per_slot(const Stage1State& state, const MeasurementSet& ms, int t, int exclude = -1);

VonMisesBelief update_delay_belief(const Stage1State& state, const MeasurementSet& ms, int l,
                                   const SearchOptions& search = {});
std::pair<VonMisesBelief, VonMisesBelief> update_angle_beliefs(const Stage1State& state,
                                                               const MeasurementSet& ms, int l,
                                                               const SearchOptions& search = {});

/// Sync objective of slot t: f(eps) = y^H D(eps) A0 C A0^H D(eps)^H y with
/// C = s2^-1 (Gamma + s2 Lambda^-1)^-1, as a trigonometric polynomial.
SpectralObjective sync_objective(const Stage1State& state, const MeasurementSet& ms, int t,
                                 const CMatrix& gram, bool coupled = true);

/// Joint sync / coefficient update of slot t. gram is expected_gram() of the
/// current path beliefs.
std::pair<VonMisesBelief, GaussianBelief> joint_sync_coeff_update(const Stage1State& state,
                                                                  const MeasurementSet& ms, int t,
                                                                  const CMatrix& gram,
                                                                  const Stage1Options& options = {});

/// Adds a detected path to the state, or returns false.
bool generate_path(Stage1State& state, const MeasurementSet& ms, const Stage1Options& options = {});

/// rho_l = mean_t |beta_l(t)|^2 + Sigma_ll(t); noise from residual energy.
void em_update(Stage1State& state, const MeasurementSet& ms);

/// Total residual energy over slots.
double residual_energy(const Stage1State& state, const MeasurementSet& ms);

/// Move the common delay/sync offset so the sync estimates have zero
/// circular mean. Only tau + eps enters the model, so the fit is unchanged.
void recenter_sync(Stage1State& state);

struct Stage1Result
{
    CkmEntry entry;
    Stage1State state;
};

Stage1Result run_stage1(const MeasurementSet& ms, const Stage1Options& options = {});

/// Full-band reconstruction of slot t from the state's point estimates.
CMatrix reconstruct_slot(const Stage1State& state, int t);

} // namespace ckm

#endif
