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

#ifndef CKM_STAGE2_HPP
#define CKM_STAGE2_HPP

#include <ckm/stage1.hpp>

#include <optional>
#include <vector>

namespace ckm
{
struct DynamicPath
{
    PathBelief belief;
    BernoulliGaussianBelief coeff;
    double lambda_prior = 0.5;
    double v_prior = 1.0;
};

struct Stage2Options
{
    /// Dynamic path budget L^d.
    int max_dynamic = 4;
    /// Iterations I_dyn.
    int max_iters = 10;
    /// Relative change of the pilot residual energy that ends the run.
    double tolerance = 1e-4;
    double detection_factor = 3.0;
    SearchOptions search;
    /// Known or forced sync error; disables the sync search.
    std::optional<double> fixed_sync;
};

struct Stage2State
{
    ArrayDims dims;
    std::vector<int> rows;
    std::vector<PathParams> static_paths;
    GaussianBelief static_coeffs;
    VonMisesBelief sync;
    std::vector<DynamicPath> dynamic;
    double noise_variance = 1.0;
    /// (A(0)^H A(0))^-1 over the pilot rows.
    CMatrix gram_inverse;
    /// Number of Gram inversions performed.
    int gram_inversions = 0;
    int iterations = 0;

    int n_static() const { return static_cast<int>(static_paths.size()); }
    int n_dynamic() const { return static_cast<int>(dynamic.size()); }
};

/// State for one Stage-II observation. entry may be null (no prior): the
/// run then works with dynamic paths only. Inverts the pilot Gram once and
/// throws NumericalError when it is rank deficient.
Stage2State init_stage2(const MeasurementSet& ms, const CkmEntry* entry);

/// Observation minus the dynamic reconstruction from BG point estimates.
CMatrix static_residual(const Stage2State& state, const CMatrix& y);

/// Sync search on f(eps) = s2^-1 y^H A(eps) G0^-1 A(eps)^H y, then
/// mu = G0^-1 A(eps)^H y, Sigma = s2 G0^-1.
std::pair<VonMisesBelief, GaussianBelief> calibrate_sync_and_static(const Stage2State& state, const CMatrix& y_res,
                                                                    const Stage2Options& options = {});

/// Pilot-row reconstruction of the static part at the current sync estimate.
CMatrix static_part(const Stage2State& state);
/// Pilot-row reconstruction of the dynamic part, skipping path `exclude`.
CMatrix dynamic_part(const Stage2State& state, int exclude = -1);

/// Greedy extraction of up to `budget` dynamic paths from y minus the
/// static part, with a joint least-squares refit after each detection.
/// Appends the paths to the state and returns their parameters.
std::vector<PathParams> init_dynamic_paths(Stage2State& state, const CMatrix& y, int budget,
                                           const Stage2Options& options = {});

/// Triple refinement and BG coefficient update of dynamic path l.
DynamicPath update_dynamic_path(const Stage2State& state, int l, const CMatrix& y,
                                const Stage2Options& options = {});

/// lambda_pri <- lambda_post, v_pri <- |mu|^2 + v, noise from the residual.
void em_update_dynamic(Stage2State& state, const CMatrix& y);

/// Full-band reconstruction.
CMatrix reconstruct_stage2(const Stage2State& state);

struct Stage2Result
{
    Stage2State state;
    CMatrix reconstruction;
    /// Full-band reconstruction after each iteration, padded with the final
    /// one when the run converges early.
    std::vector<CMatrix> history;
    bool converged = false;
};

Stage2Result run_stage2(const MeasurementSet& ms, const CkmEntry* entry, const Stage2Options& options = {});

} // namespace ckm

#endif
