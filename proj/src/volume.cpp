#include "voxseg/volume.hpp"

#include <cmath>
#include <cstring>
#include <fstream>
#include <stdexcept>

#include "json.hpp"
#include "voxseg/nifti.hpp"

namespace voxseg {

namespace {

using nlohmann::json;

bool ends_with(const std::string& s, const std::string& suf) {
    return s.size() >= suf.size() && s.compare(s.size() - suf.size(), suf.size(), suf) == 0;
}

// Accepts <base>, <base>.f32raw or <base>.json and returns <base>.
std::string base_path(const std::string& path) {
    if (path.empty()) throw std::runtime_error("volume path is empty");
    if (ends_with(path, ".f32raw")) return path.substr(0, path.size() - 7);
    if (ends_with(path, ".json")) return path.substr(0, path.size() - 5);
    return path;
}

VolumeMeta read_sidecar(const std::string& json_path) {
    std::ifstream in(json_path);
    if (!in) throw std::runtime_error("cannot open sidecar: " + json_path);
    json j;
    try {
        in >> j;
    } catch (const json::exception& e) {
        throw std::runtime_error("bad sidecar " + json_path + ": " + e.what());
    }
    for (const char* key : {"dims", "spacing", "kind", "order"})
        if (!j.contains(key))
            throw std::runtime_error("sidecar " + json_path + " missing field: " + key);
    if (j["order"].get<std::string>() != "xyz")
        throw std::runtime_error("sidecar " + json_path + ": unsupported axis order");
    VolumeMeta m;
    auto dims = j["dims"];
    auto sp = j["spacing"];
    if (dims.size() != 3 || sp.size() != 3)
        throw std::runtime_error("sidecar " + json_path + ": dims/spacing must have 3 entries");
    m.dims = {dims[0].get<int64_t>(), dims[1].get<int64_t>(), dims[2].get<int64_t>()};
    m.spacing = {sp[0].get<double>(), sp[1].get<double>(), sp[2].get<double>()};
    if (m.dims.x < 1 || m.dims.y < 1 || m.dims.z < 1)
        throw std::runtime_error("sidecar " + json_path + ": non-positive dims");
    if (m.spacing.x <= 0 || m.spacing.y <= 0 || m.spacing.z <= 0)
        throw std::runtime_error("sidecar " + json_path + ": non-positive spacing");
    const std::string kind = j["kind"].get<std::string>();
    if (kind == "intensity")
        m.kind = ValueKind::intensity;
    else if (kind == "mask")
        m.kind = ValueKind::mask;
    else
        throw std::runtime_error("sidecar " + json_path + ": unknown kind " + kind);
    if (j.contains("case_id")) m.case_id = j["case_id"].get<std::string>();
    return m;
}

std::vector<float> read_payload(const std::string& raw_path, int64_t expected) {
    std::ifstream in(raw_path, std::ios::binary);
    if (!in) throw std::runtime_error("cannot open volume payload: " + raw_path);
    in.seekg(0, std::ios::end);
    const int64_t bytes = in.tellg();
    in.seekg(0, std::ios::beg);
    if (bytes != expected * static_cast<int64_t>(sizeof(float)))
        throw std::runtime_error("payload size mismatch for " + raw_path + ": header wants " +
                                 std::to_string(expected) + " voxels, file holds " +
                                 std::to_string(bytes / sizeof(float)));
    std::vector<float> data(static_cast<size_t>(expected));
    in.read(reinterpret_cast<char*>(data.data()), bytes);
    if (!in) throw std::runtime_error("short read on " + raw_path);
    return data;
}

void write_pair(const VolumeMeta& m, const float* data, const std::string& path) {
    const std::string base = base_path(path);
    json j;
    j["dims"] = {m.dims.x, m.dims.y, m.dims.z};
    j["spacing"] = {m.spacing.x, m.spacing.y, m.spacing.z};
    j["kind"] = m.kind == ValueKind::mask ? "mask" : "intensity";
    j["order"] = "xyz";
    if (!m.case_id.empty()) j["case_id"] = m.case_id;
    {
        std::ofstream out(base + ".json");
        if (!out) throw std::runtime_error("cannot write sidecar: " + base + ".json");
        out << j.dump(2) << "\n";
    }
    std::ofstream out(base + ".f32raw", std::ios::binary);
    if (!out) throw std::runtime_error("cannot write payload: " + base + ".f32raw");
    out.write(reinterpret_cast<const char*>(data),
              static_cast<std::streamsize>(m.dims.count() * sizeof(float)));
    if (!out) throw std::runtime_error("short write on " + base + ".f32raw");
}

} // namespace

AnyVolume load_volume(const std::string& path) {
    if (path.empty()) throw std::runtime_error("volume path is empty");
    if (ends_with(path, ".nii")) return nifti_load(path);
    const std::string base = base_path(path);
    const VolumeMeta m = read_sidecar(base + ".json");
    std::vector<float> data = read_payload(base + ".f32raw", m.dims.count());
    if (m.kind == ValueKind::mask) {
        LabelVolume lv;
        lv.dims = m.dims;
        lv.spacing = m.spacing;
        lv.case_id = m.case_id;
        lv.mask.resize(data.size());
        for (size_t i = 0; i < data.size(); ++i) {
            if (data[i] != 0.0f && data[i] != 1.0f)
                throw std::runtime_error("mask volume " + path + " has non-binary value");
            lv.mask[i] = data[i] == 1.0f ? 1 : 0;
        }
        return lv;
    }
    CtVolume v;
    v.dims = m.dims;
    v.spacing = m.spacing;
    v.case_id = m.case_id;
    v.voxels = std::move(data);
    return v;
}

CtVolume load_ct(const std::string& path) {
    AnyVolume av = load_volume(path);
    if (auto* p = std::get_if<CtVolume>(&av)) return std::move(*p);
    throw std::runtime_error(path + " is a mask, expected an intensity volume");
}

LabelVolume load_label(const std::string& path) {
    AnyVolume av = load_volume(path);
    if (auto* p = std::get_if<LabelVolume>(&av)) return std::move(*p);
    throw std::runtime_error(path + " is an intensity volume, expected a mask");
}

void save_volume(const CtVolume& v, const std::string& path) {
    if (path.empty()) throw std::runtime_error("volume path is empty");
    if (v.dims.count() != static_cast<int64_t>(v.voxels.size()))
        throw std::runtime_error("volume voxel count does not match dims");
    if (ends_with(path, ".nii")) {
        nifti_save(v, path);
        return;
    }
    VolumeMeta m{v.dims, v.spacing, ValueKind::intensity, v.case_id};
    write_pair(m, v.voxels.data(), path);
}

void save_volume(const LabelVolume& v, const std::string& path) {
    if (path.empty()) throw std::runtime_error("volume path is empty");
    if (v.dims.count() != static_cast<int64_t>(v.mask.size()))
        throw std::runtime_error("mask voxel count does not match dims");
    if (ends_with(path, ".nii")) {
        nifti_save(v, path);
        return;
    }
    std::vector<float> data(v.mask.size());
    for (size_t i = 0; i < v.mask.size(); ++i) data[i] = v.mask[i] ? 1.0f : 0.0f;
    VolumeMeta m{v.dims, v.spacing, ValueKind::mask, v.case_id};
    write_pair(m, data.data(), path);
}

CtVolume truncate_intensity(const CtVolume& v, float lo, float hi) {
    if (!(lo < hi)) throw std::invalid_argument("truncate_intensity: lo must be < hi");
    CtVolume out = v;
    for (float& x : out.voxels) x = x < lo ? lo : (x > hi ? hi : x);
    return out;
}

CtVolume normalize_zero_mean_unit_var(const CtVolume& v) {
    CtVolume out = v;
    const size_t n = v.voxels.size();
    if (n == 0) return out;
    double sum = 0.0;
    for (float x : v.voxels) sum += x;
    const double mean = sum / static_cast<double>(n);
    double ss = 0.0;
    for (float x : v.voxels) {
        const double d = x - mean;
        ss += d * d;
    }
    const double var = ss / static_cast<double>(n);
    if (var == 0.0) {
        for (float& x : out.voxels) x = 0.0f;
        return out;
    }
    const double inv = 1.0 / std::sqrt(var);
    for (float& x : out.voxels) x = static_cast<float>((x - mean) * inv);
    return out;
}

} // namespace voxseg
