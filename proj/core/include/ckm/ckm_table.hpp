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

#ifndef CKM_CKM_TABLE_HPP
#define CKM_CKM_TABLE_HPP

#include <ckm/types.hpp>

#include <filesystem>
#include <string>
#include <vector>

namespace ckm
{
/// Representative quasi-static paths of one grid.
struct CkmEntry
{
    int grid_id = 0;
    std::vector<PathParams> paths;
    std::vector<double> powers;
    double noise_variance = 0.0;
    /// Inverse expected Gram over all subcarriers; empty when not cached.
    CMatrix gram_inverse;

    int size() const { return static_cast<int>(paths.size()); }
};

struct CkmTable
{
    ArrayDims dims;
    std::vector<CkmEntry> grids;

    /// nullptr when the grid is absent.
    const CkmEntry* find(int grid_id) const;
    /// Replace or append.
    void put(CkmEntry entry);
};

std::string table_to_json(const CkmTable& table);
CkmTable table_from_json(const std::string& text);

/// Writes the JSON table; cached Gram inverses go to <path>.gram when present.
void write_table(const std::filesystem::path& path, const CkmTable& table);
/// Reads the table and, if it exists, the .gram sidecar.
CkmTable read_table(const std::filesystem::path& path);

} // namespace ckm

#endif
