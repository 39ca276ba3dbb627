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

#ifndef CKM_EXPERIMENT_HPP
#define CKM_EXPERIMENT_HPP

#include <ckm/channel_sim.hpp>
#include <ckm/stage1.hpp>
#include <ckm/stage2.hpp>

#include <cstdint>
#include <string>
#include <vector>

namespace ckm
{
enum class Baseline
{
    Full,
    NoSyncCal,
    NoDynamicEst,
    NoPrior,
    SeparateEst,
    OmpInit,
    IdealPrior
};

std::string to_string(Baseline b);
Baseline baseline_from_string(const std::string& name);

enum class SweepAxis
{
    Ls,
    Iterations,
    PilotRatio,
    Ld
};

std::string to_string(SweepAxis a);
SweepAxis axis_from_string(const std::string& name);

struct ExperimentSpec
{
    std::string figure_id;
    ScenarioConfig scenario;
    /// 1: Stage-I representation error; 2: Stage-II channel error.
    int stage = 1;
    SweepAxis axis = SweepAxis::Ls;
    std::vector<double> values;
    int n_trials = 1;
    std::vector<Baseline> baselines{Baseline::Full};
    std::uint64_t master_seed = 1;

    // values held fixed when not swept
    int L_s = 12;
    int L_d = 4;
    int stage1_slots = 8;
    int stage1_iters = 30;
    int stage2_iters = 10;
    /// N / P of Stage-II data.
    double pilot_ratio = 1.0;
};

/// Throws InvalidArgument with every problem found.
void validate(const ExperimentSpec& spec);

std::string spec_to_json(const ExperimentSpec& spec);
/// 64-bit FNV-1a of the canonical spec JSON, as 16 hex digits.
std::string spec_hash(const ExperimentSpec& spec);
ExperimentSpec spec_from_json(const std::string& text);

struct CellResult
{
    double value = 0.0;
    Baseline baseline = Baseline::Full;
    int trial = 0;
    std::uint64_t seed = 0;
    double nmse_db = 0.0;
    double sync_rmse_rad = 0.0;
    double runtime_ms = 0.0;
    int iterations = 0;
    /// Non-empty when the cell failed.
    std::string error;
};

/// Scenario seed of a trial; shared by every cell of the trial.
std::uint64_t trial_seed(std::uint64_t master, int trial);
/// Provenance seed of one cell.
std::uint64_t cell_seed(std::uint64_t master, double value, Baseline baseline, int trial);

// -- single-trial building blocks ------------------------------------------

Stage1Options stage1_options_for(Baseline b, int max_paths, int max_iters);

/// Stage-I representation NMSE over all slots of the dataset.
double stage1_nmse_db(const Stage1State& state, const Dataset& data);
/// Common offset between estimated and true sync errors (circular mean).
double sync_gauge(const Stage1State& state, const Dataset& data);
/// RMS sync error after removing the gauge offset.
double stage1_sync_rmse(const Stage1State& state, const Dataset& data);

/// Runs Stage II for a baseline. `entry` is the Stage-I table entry matching
/// the baseline (ignored by no_prior and ideal_prior).
Stage2Result run_stage2_baseline(Baseline b, const Dataset& data, const CkmEntry* entry, Stage2Options options,
                                 int L_s);

// -- sweeps ------------------------------------------------------------------

/// Runs every (value, baseline, trial) cell. Results are ordered by value,
/// baseline and trial independently of the thread count. Runtime is only
/// measured with record_runtime (otherwise 0, keeping outputs reproducible).
std::vector<CellResult> run_experiment(const ExperimentSpec& spec, int threads = 1, bool record_runtime = false);

inline constexpr const char* kCsvHeader = "axis,value,baseline,trial,seed,nmse_db,sync_rmse_rad,runtime_ms,iterations";

std::string results_to_csv(const ExperimentSpec& spec, const std::vector<CellResult>& rows);
std::string plot_json(const ExperimentSpec& spec, const std::vector<CellResult>& rows);

struct SeriesPoint
{
    double mean = 0.0;
    double stderr_ = 0.0;
    int count = 0;
};

/// Mean and standard error of nmse_db for one (value, baseline) over
/// successful trials.
SeriesPoint summarize(const std::vector<CellResult>& rows, double value, Baseline b);

} // namespace ckm

#endif
