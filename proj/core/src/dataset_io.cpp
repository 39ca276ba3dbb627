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

#include <ckm/dataset_io.hpp>

#include <json.hpp>

#include <bit>
#include <cmath>
#include <cstring>
#include <fstream>
#include <limits>
#include <sstream>

namespace ckm
{
namespace
{
using json = nlohmann::ordered_json;

static_assert(std::endian::native == std::endian::little, "dataset files are little-endian");

constexpr char kMagic[4] = {'C', 'K', 'M', 'D'};

json number(double v)
{
    if (std::isfinite(v))
        return v;
    if (std::isnan(v))
        return "nan";
    return v > 0 ? "inf" : "-inf";
}

double to_double(const json& j, const std::string& key)
{
    if (j.is_number())
        return j.get<double>();
    if (j.is_string()) {
        const auto s = j.get<std::string>();
        if (s == "inf")
            return std::numeric_limits<double>::infinity();
        if (s == "-inf")
            return -std::numeric_limits<double>::infinity();
        if (s == "nan")
            return std::numeric_limits<double>::quiet_NaN();
    }
    throw FormatError("field '" + key + "' must be a number");
}

// One visitor over every config field keeps reader and writer in step.
template <class Cfg, class F>
void visit_fields(Cfg& c, F&& f)
{
    f("name", c.name);
    f("carrier_frequency_hz", c.carrier_frequency_hz);
    f("subcarrier_spacing_hz", c.subcarrier_spacing_hz);
    f("n_subcarriers", c.n_subcarriers);
    f("m1", c.m1);
    f("m2", c.m2);
    f("grid_size_m", c.grid_size_m);
    f("n_grids", c.n_grids);
    f("bs_distance_m", c.bs_distance_m);
    f("n_static_clusters", c.n_static_clusters);
    f("subpaths_per_cluster", c.subpaths_per_cluster);
    f("angular_spread_deg", c.angular_spread_deg);
    f("delay_spread_us", c.delay_spread_us);
    f("cluster_delay_spread_us", c.cluster_delay_spread_us);
    f("los_k_factor_db", c.los_k_factor_db);
    f("correlation_distance_m", c.correlation_distance_m);
    f("field_delay_std_us", c.field_delay_std_us);
    f("field_angle_std_deg", c.field_angle_std_deg);
    f("n_dynamic_scatterers", c.n_dynamic_scatterers);
    f("dynamic_activity_prob", c.dynamic_activity_prob);
    f("dynamic_subpaths_min", c.dynamic_subpaths_min);
    f("dynamic_subpaths_max", c.dynamic_subpaths_max);
    f("dynamic_angular_spread_deg", c.dynamic_angular_spread_deg);
    f("dynamic_delay_min_us", c.dynamic_delay_min_us);
    f("dynamic_delay_max_us", c.dynamic_delay_max_us);
    f("static_dynamic_power_ratio", c.static_dynamic_power_ratio);
    f("snr_db", c.snr_db);
    f("stage2_snr_db", c.stage2_snr_db);
    f("sync_error_min_us", c.sync_error_min_us);
    f("sync_error_max_us", c.sync_error_max_us);
    f("front_back_ratio_db", c.rotation_gain.front_back_ratio_db);
    f("vertical_front_back_ratio_db", c.rotation_gain.vertical_front_back_ratio_db);
    f("walk_step_m", c.walk_step_m);
    f("stage1_dynamics", c.stage1_dynamics);
    f("random_pilots", c.random_pilots);
    f("pilot_power_boost", c.pilot_power_boost);
    f("rng_seed", c.rng_seed);
}

json scenario_json(const ScenarioConfig& cfg)
{
    json j = json::object();
    visit_fields(cfg, [&](const char* key, const auto& v) {
        using T = std::decay_t<decltype(v)>;
        if constexpr (std::is_same_v<T, double>)
            j[key] = number(v);
        else
            j[key] = v;
    });
    return j;
}

ScenarioConfig scenario_from(const json& j)
{
    if (!j.is_object())
        throw FormatError("scenario config must be a JSON object");
    ScenarioConfig cfg;
    if (j.contains("preset")) {
        if (!j["preset"].is_string())
            throw FormatError("field 'preset' must be a string");
        cfg = preset(j["preset"].get<std::string>());
    }
    std::vector<std::string> known{"preset"};
    visit_fields(cfg, [&](const char* key, auto& v) {
        known.emplace_back(key);
        if (!j.contains(key))
            return;
        const json& x = j[key];
        using T = std::decay_t<decltype(v)>;
        if constexpr (std::is_same_v<T, double>) {
            v = to_double(x, key);
        } else if constexpr (std::is_same_v<T, bool>) {
            if (!x.is_boolean())
                throw FormatError(std::string("field '") + key + "' must be a boolean");
            v = x.get<bool>();
        } else if constexpr (std::is_same_v<T, std::string>) {
            if (!x.is_string())
                throw FormatError(std::string("field '") + key + "' must be a string");
            v = x.get<std::string>();
        } else {
            if (!x.is_number_integer())
                throw FormatError(std::string("field '") + key + "' must be an integer");
            if constexpr (std::is_unsigned_v<T>) {
                if (x.is_number_unsigned() || x.get<long long>() >= 0)
                    v = x.get<T>();
                else
                    throw FormatError(std::string("field '") + key + "' must be non-negative");
            } else {
                v = x.get<T>();
            }
        }
    });
    for (const auto& item : j.items())
        if (std::find(known.begin(), known.end(), item.key()) == known.end())
            throw FormatError("unknown scenario field '" + item.key() + "'");
    return cfg;
}

class Writer
{
public:
    void raw(const void* p, size_t n) { out_.append(static_cast<const char*>(p), n); }
    template <class T>
    void scalar(T v)
    {
        raw(&v, sizeof v);
    }
    void matrix(const CMatrix& m)
    {
        scalar(static_cast<std::uint32_t>(m.rows()));
        scalar(static_cast<std::uint32_t>(m.cols()));
        // std::complex<double> is layout-compatible with double[2]
        raw(m.data(), static_cast<size_t>(m.size()) * sizeof(cdouble));
    }
    std::string take() { return std::move(out_); }

private:
    std::string out_;
};

class Reader
{
public:
    explicit Reader(const std::string& bytes) : bytes_(bytes) {}
    void raw(void* p, size_t n)
    {
        if (pos_ + n > bytes_.size())
            throw FormatError("truncated dataset");
        std::memcpy(p, bytes_.data() + pos_, n);
        pos_ += n;
    }
    template <class T>
    T scalar()
    {
        T v;
        raw(&v, sizeof v);
        return v;
    }
    CMatrix matrix()
    {
        const auto r = scalar<std::uint32_t>();
        const auto c = scalar<std::uint32_t>();
        const size_t count = static_cast<size_t>(r) * c;
        if (count > (bytes_.size() - pos_) / sizeof(cdouble))
            throw FormatError("truncated dataset");
        CMatrix m(r, c);
        raw(m.data(), count * sizeof(cdouble));
        return m;
    }
    bool done() const { return pos_ == bytes_.size(); }

private:
    const std::string& bytes_;
    size_t pos_ = 0;
};

void write_paths(Writer& w, const std::vector<PathParams>& p, const std::vector<cdouble>& c,
                 const std::vector<bool>* active)
{
    w.scalar(static_cast<std::uint32_t>(p.size()));
    for (size_t i = 0; i < p.size(); ++i) {
        w.scalar(p[i].tau);
        w.scalar(p[i].theta);
        w.scalar(p[i].phi);
        w.scalar(c[i].real());
        w.scalar(c[i].imag());
        if (active)
            w.scalar(static_cast<std::uint8_t>((*active)[i] ? 1 : 0));
    }
}

void read_paths(Reader& r, std::vector<PathParams>& p, std::vector<cdouble>& c, std::vector<bool>* active)
{
    const auto n = r.scalar<std::uint32_t>();
    for (std::uint32_t i = 0; i < n; ++i) {
        PathParams q;
        q.tau = r.scalar<double>();
        q.theta = r.scalar<double>();
        q.phi = r.scalar<double>();
        const double re = r.scalar<double>();
        const double im = r.scalar<double>();
        p.push_back(q);
        c.emplace_back(re, im);
        if (active)
            active->push_back(r.scalar<std::uint8_t>() != 0);
    }
}

} // namespace

std::string scenario_to_json(const ScenarioConfig& cfg)
{
    return scenario_json(cfg).dump(2) + "\n";
}

ScenarioConfig scenario_from_json(const std::string& text)
{
    json j;
    try {
        j = json::parse(text);
    } catch (const json::parse_error& e) {
        throw FormatError(std::string("config is not valid JSON: ") + e.what());
    }
    return scenario_from(j);
}

ScenarioConfig load_scenario(const std::filesystem::path& path)
{
    return scenario_from_json(read_file(path));
}

std::string read_file(const std::filesystem::path& path)
{
    std::ifstream in(path, std::ios::binary);
    if (!in)
        throw Error("cannot open '" + path.string() + "' for reading");
    std::ostringstream ss;
    ss << in.rdbuf();
    return ss.str();
}

void write_file(const std::filesystem::path& path, const std::string& bytes)
{
    std::ofstream out(path, std::ios::binary | std::ios::trunc);
    if (!out)
        throw Error("cannot open '" + path.string() + "' for writing");
    out.write(bytes.data(), static_cast<std::streamsize>(bytes.size()));
    if (!out)
        throw Error("write to '" + path.string() + "' failed");
}

std::string encode_dataset(const Dataset& data)
{
    const auto& ms = data.measurements;
    json header = json::object();
    header["scenario"] = scenario_json(data.config);
    header["stage"] = static_cast<int>(ms.stage);
    header["grid_index"] = ms.grid_index;
    header["n_subcarriers"] = ms.dims.n_subcarriers;
    header["m1"] = ms.dims.m1;
    header["m2"] = ms.dims.m2;
    header["n_slots"] = ms.n_slots();
    header["n_pilots"] = ms.pilots.size();
    header["pilots"] = ms.pilots;
    header["seed"] = data.config.rng_seed;
    json poses = json::array();
    for (const auto& p : ms.poses)
        poses.push_back({p.position[0], p.position[1], p.position[2], p.rotation_h, p.rotation_v});
    header["poses"] = poses;
    const std::string text = header.dump();

    Writer w;
    w.raw(kMagic, 4);
    w.scalar(kDatasetVersion);
    w.scalar(static_cast<std::uint32_t>(text.size()));
    w.raw(text.data(), text.size());
    if (data.truth.slots.size() != ms.observations.size())
        throw InvalidArgument("dataset truth and observations disagree on slot count");
    for (size_t t = 0; t < ms.observations.size(); ++t) {
        const auto& s = data.truth.slots[t];
        w.matrix(ms.observations[t]);
        w.matrix(s.static_channel);
        w.matrix(s.channel);
        w.scalar(s.epsilon);
        w.scalar(s.noise_variance);
        write_paths(w, s.static_paths, s.static_coeffs, nullptr);
        write_paths(w, s.dynamic_paths, s.dynamic_coeffs, &s.dynamic_active);
    }
    return w.take();
}

Dataset decode_dataset(const std::string& bytes)
{
    Reader r(bytes);
    char magic[4];
    r.raw(magic, 4);
    if (std::memcmp(magic, kMagic, 4) != 0)
        throw FormatError("not a dataset file (bad magic)");
    const auto version = r.scalar<std::uint16_t>();
    if (version != kDatasetVersion)
        throw FormatError("unsupported dataset version " + std::to_string(version) + " (expected " +
                          std::to_string(kDatasetVersion) + ")");
    const auto len = r.scalar<std::uint32_t>();
    std::string text(len, '\0');
    r.raw(text.data(), len);

    Dataset ds;
    json h;
    try {
        h = json::parse(text);
        ds.config = scenario_from(h.at("scenario"));
        auto& ms = ds.measurements;
        ms.stage = h.at("stage").get<int>() == 2 ? Stage::II : Stage::I;
        ms.grid_index = h.at("grid_index").get<int>();
        ms.dims = {h.at("n_subcarriers").get<int>(), h.at("m1").get<int>(), h.at("m2").get<int>()};
        ms.pilots = h.at("pilots").get<std::vector<int>>();
        for (const auto& p : h.at("poses")) {
            UserPose pose;
            pose.position = {p.at(0).get<double>(), p.at(1).get<double>(), p.at(2).get<double>()};
            pose.rotation_h = p.at(3).get<double>();
            pose.rotation_v = p.at(4).get<double>();
            ms.poses.push_back(pose);
        }
    } catch (const json::exception& e) {
        throw FormatError(std::string("malformed dataset header: ") + e.what());
    }
    const int slots = h["n_slots"].get<int>();
    for (int t = 0; t < slots; ++t) {
        SlotTruth s;
        ds.measurements.observations.push_back(r.matrix());
        s.static_channel = r.matrix();
        s.channel = r.matrix();
        s.epsilon = r.scalar<double>();
        s.noise_variance = r.scalar<double>();
        read_paths(r, s.static_paths, s.static_coeffs, nullptr);
        read_paths(r, s.dynamic_paths, s.dynamic_coeffs, &s.dynamic_active);
        ds.truth.slots.push_back(std::move(s));
    }
    if (!r.done())
        throw FormatError("trailing bytes after dataset payload");
    return ds;
}

std::string truth_to_json(const Dataset& data)
{
    json j = json::object();
    j["grid_index"] = data.measurements.grid_index;
    j["stage"] = static_cast<int>(data.measurements.stage);
    j["note"] = "dynamic delays include the slot sync shift";
    json slots = json::array();
    for (const auto& s : data.truth.slots) {
        json o = json::object();
        o["epsilon"] = s.epsilon;
        o["noise_variance"] = s.noise_variance;
        json st = json::array();
        for (size_t i = 0; i < s.static_paths.size(); ++i) {
            const auto& p = s.static_paths[i];
            st.push_back({p.tau, p.theta, p.phi, s.static_coeffs[i].real(), s.static_coeffs[i].imag()});
        }
        o["static_paths"] = st;
        json dy = json::array();
        for (size_t i = 0; i < s.dynamic_paths.size(); ++i) {
            const auto& p = s.dynamic_paths[i];
            dy.push_back({p.tau, p.theta, p.phi, s.dynamic_coeffs[i].real(), s.dynamic_coeffs[i].imag(),
                          static_cast<bool>(s.dynamic_active[i])});
        }
        o["dynamic_paths"] = dy;
        slots.push_back(o);
    }
    j["slots"] = slots;
    return j.dump(2) + "\n";
}

void write_dataset(const std::filesystem::path& path, const Dataset& data)
{
    write_file(path, encode_dataset(data));
    write_file(path.string() + ".truth.json", truth_to_json(data));
}

Dataset read_dataset(const std::filesystem::path& path)
{
    return decode_dataset(read_file(path));
}

} // namespace ckm
