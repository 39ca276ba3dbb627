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

#ifndef CKM_DATASET_IO_HPP
#define CKM_DATASET_IO_HPP

#include <ckm/channel_sim.hpp>

#include <cstdint>
#include <filesystem>
#include <string>

namespace ckm
{
inline constexpr std::uint16_t kDatasetVersion = 1;

/// Scenario config as pretty-printed JSON. Non-finite numbers are written as
/// the strings "inf" / "-inf".
std::string scenario_to_json(const ScenarioConfig& cfg);

/// Parse a scenario config. Missing keys keep their defaults; unknown keys
/// and wrong types raise FormatError. A "preset" key selects the base preset.
ScenarioConfig scenario_from_json(const std::string& text);

ScenarioConfig load_scenario(const std::filesystem::path& path);

/// Binary dataset container ("CKMD"). Also writes <path>.truth.json.
void write_dataset(const std::filesystem::path& path, const Dataset& data);
Dataset read_dataset(const std::filesystem::path& path);

/// In-memory encoding used by write_dataset.
std::string encode_dataset(const Dataset& data);
Dataset decode_dataset(const std::string& bytes);

/// Human-readable ground truth.
std::string truth_to_json(const Dataset& data);

/// Whole file as bytes.
std::string read_file(const std::filesystem::path& path);
void write_file(const std::filesystem::path& path, const std::string& bytes);

} // namespace ckm

#endif
