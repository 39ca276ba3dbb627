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

#include <ckm/ckm_table.hpp>
#include <ckm/dataset_io.hpp>

#include <json.hpp>

#include <cstring>

namespace ckm
{
namespace
{
using json = nlohmann::ordered_json;

constexpr char kGramMagic[4] = {'C', 'K', 'M', 'G'};
constexpr std::uint16_t kTableVersion = 1;

template <class T>
void put_scalar(std::string& out, T v)
{
    out.append(reinterpret_cast<const char*>(&v), sizeof v);
}

template <class T>
T get_scalar(const std::string& in, size_t& pos)
{
    if (pos + sizeof(T) > in.size())
        throw FormatError("truncated gram sidecar");
    T v;
    std::memcpy(&v, in.data() + pos, sizeof v);
    pos += sizeof v;
    return v;
}

} // namespace

const CkmEntry* CkmTable::find(int grid_id) const
{
    for (const auto& e : grids)
        if (e.grid_id == grid_id)
            return &e;
    return nullptr;
}

void CkmTable::put(CkmEntry entry)
{
    for (auto& e : grids)
        if (e.grid_id == entry.grid_id) {
            e = std::move(entry);
            return;
        }
    grids.push_back(std::move(entry));
}

std::string table_to_json(const CkmTable& table)
{
    json j = json::object();
    j["format"] = "ckm-table";
    j["version"] = kTableVersion;
    j["n_subcarriers"] = table.dims.n_subcarriers;
    j["m1"] = table.dims.m1;
    j["m2"] = table.dims.m2;
    json grids = json::array();
    for (const auto& e : table.grids) {
        json g = json::object();
        g["grid_id"] = e.grid_id;
        g["L_s"] = e.size();
        g["noise_variance"] = e.noise_variance;
        json rows = json::array();
        for (size_t l = 0; l < e.paths.size(); ++l)
            rows.push_back({e.paths[l].tau, e.paths[l].theta, e.paths[l].phi, e.powers[l]});
        g["paths"] = rows;
        grids.push_back(g);
    }
    j["grids"] = grids;
    return j.dump(2) + "\n";
}

CkmTable table_from_json(const std::string& text)
{
    CkmTable t;
    try {
        const json j = json::parse(text);
        if (j.at("format").get<std::string>() != "ckm-table")
            throw FormatError("not a CKM table");
        const int version = j.at("version").get<int>();
        if (version != kTableVersion)
            throw FormatError("unsupported CKM table version " + std::to_string(version));
        t.dims = {j.at("n_subcarriers").get<int>(), j.at("m1").get<int>(), j.at("m2").get<int>()};
        for (const auto& g : j.at("grids")) {
            CkmEntry e;
            e.grid_id = g.at("grid_id").get<int>();
            e.noise_variance = g.at("noise_variance").get<double>();
            for (const auto& row : g.at("paths")) {
                if (row.size() != 4)
                    throw FormatError("CKM path rows need (tau, theta, phi, rho)");
                e.paths.emplace_back(row[0].get<double>(), row[1].get<double>(), row[2].get<double>());
                const double rho = row[3].get<double>();
                if (rho < 0.0)
                    throw FormatError("CKM path power must be non-negative");
                e.powers.push_back(rho);
            }
            if (g.at("L_s").get<int>() != e.size())
                throw FormatError("CKM grid " + std::to_string(e.grid_id) + ": L_s disagrees with path rows");
            t.grids.push_back(std::move(e));
        }
    } catch (const json::exception& e) {
        throw FormatError(std::string("malformed CKM table: ") + e.what());
    }
    return t;
}

void write_table(const std::filesystem::path& path, const CkmTable& table)
{
    write_file(path, table_to_json(table));
    std::string side;
    std::uint32_t count = 0;
    for (const auto& e : table.grids)
        count += e.gram_inverse.size() > 0 ? 1 : 0;
    const std::filesystem::path gram = path.string() + ".gram";
    if (count == 0) {
        std::filesystem::remove(gram);
        return;
    }
    side.append(kGramMagic, 4);
    put_scalar(side, kTableVersion);
    put_scalar(side, count);
    for (const auto& e : table.grids) {
        if (e.gram_inverse.size() == 0)
            continue;
        put_scalar(side, static_cast<std::int32_t>(e.grid_id));
        put_scalar(side, static_cast<std::uint32_t>(e.gram_inverse.rows()));
        side.append(reinterpret_cast<const char*>(e.gram_inverse.data()),
                    static_cast<size_t>(e.gram_inverse.size()) * sizeof(cdouble));
    }
    write_file(gram, side);
}

CkmTable read_table(const std::filesystem::path& path)
{
    CkmTable t = table_from_json(read_file(path));
    const std::filesystem::path gram = path.string() + ".gram";
    if (!std::filesystem::exists(gram))
        return t;
    const std::string in = read_file(gram);
    size_t pos = 0;
    if (in.size() < 4 || std::memcmp(in.data(), kGramMagic, 4) != 0)
        throw FormatError("bad magic in gram sidecar");
    pos = 4;
    if (get_scalar<std::uint16_t>(in, pos) != kTableVersion)
        throw FormatError("unsupported gram sidecar version");
    const auto count = get_scalar<std::uint32_t>(in, pos);
    for (std::uint32_t i = 0; i < count; ++i) {
        const auto id = get_scalar<std::int32_t>(in, pos);
        const auto l = get_scalar<std::uint32_t>(in, pos);
        const size_t bytes = static_cast<size_t>(l) * l * sizeof(cdouble);
        if (pos + bytes > in.size())
            throw FormatError("truncated gram sidecar");
        CMatrix g(l, l);
        std::memcpy(g.data(), in.data() + pos, bytes);
        pos += bytes;
        for (auto& e : t.grids)
            if (e.grid_id == id) {
                if (e.size() != static_cast<int>(l))
                    throw FormatError("gram sidecar size disagrees with grid " + std::to_string(id));
                e.gram_inverse = std::move(g);
            }
    }
    return t;
}

} // namespace ckm
