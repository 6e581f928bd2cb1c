#include "voxseg/synth.hpp"

#include <cmath>
#include <filesystem>
#include <stdexcept>

#include "voxseg/rng.hpp"

namespace voxseg {

namespace {

constexpr uint64_t kStreamShape = 0x5e11;
constexpr uint64_t kStreamField = 0xf1e1d;
constexpr uint64_t kStreamNoise = 0x9015e;

struct Mat3 {
    double m[3][3];
};

// rotation matrix from a uniformly random unit quaternion
Mat3 random_rotation(Rng& r) {
    double q[4];
    double norm = 0.0;
    do {
        norm = 0.0;
        for (double& v : q) {
            v = r.next_normal();
            norm += v * v;
        }
    } while (norm < 1e-12);
    norm = std::sqrt(norm);
    for (double& v : q) v /= norm;
    const double w = q[0], x = q[1], y = q[2], z = q[3];
    Mat3 R;
    R.m[0][0] = 1 - 2 * (y * y + z * z);
    R.m[0][1] = 2 * (x * y - w * z);
    R.m[0][2] = 2 * (x * z + w * y);
    R.m[1][0] = 2 * (x * y + w * z);
    R.m[1][1] = 1 - 2 * (x * x + z * z);
    R.m[1][2] = 2 * (y * z - w * x);
    R.m[2][0] = 2 * (x * z - w * y);
    R.m[2][1] = 2 * (y * z + w * x);
    R.m[2][2] = 1 - 2 * (x * x + y * y);
    return R;
}

// value of a low-resolution noise grid, trilinearly interpolated
struct SmoothField {
    static constexpr int kGrid = 5;
    double node[kGrid][kGrid][kGrid];
    Dims3 dims;

    void init(Rng& r, const Dims3& d, double sigma) {
        dims = d;
        for (auto& pz : node)
            for (auto& py : pz)
                for (double& v : py) v = r.next_normal() * sigma;
    }

    double at(int64_t x, int64_t y, int64_t z) const {
        const double fx = static_cast<double>(x) / static_cast<double>(dims.x - 1) * (kGrid - 1);
        const double fy = static_cast<double>(y) / static_cast<double>(dims.y - 1) * (kGrid - 1);
        const double fz = static_cast<double>(z) / static_cast<double>(dims.z - 1) * (kGrid - 1);
        const int ix = std::min(static_cast<int>(fx), kGrid - 2);
        const int iy = std::min(static_cast<int>(fy), kGrid - 2);
        const int iz = std::min(static_cast<int>(fz), kGrid - 2);
        const double tx = fx - ix, ty = fy - iy, tz = fz - iz;
        double acc = 0.0;
        for (int dz = 0; dz < 2; ++dz)
            for (int dy = 0; dy < 2; ++dy)
                for (int dx = 0; dx < 2; ++dx) {
                    const double wgt = (dx ? tx : 1 - tx) * (dy ? ty : 1 - ty) *
                                       (dz ? tz : 1 - tz);
                    acc += wgt * node[iz + dz][iy + dy][ix + dx];
                }
        return acc;
    }
};

} // namespace

std::pair<CtVolume, LabelVolume> synth_case(const SynthOptions& opt, int64_t index) {
    const Dims3& d = opt.dims;
    if (d.x < 32 || d.y < 32 || d.z < 32)
        throw std::invalid_argument("synth: dims must be at least 32 per axis");

    Rng root(opt.seed);
    Rng rs = root.stream(kStreamShape, static_cast<uint64_t>(index));

    // semi-axes with bounded anisotropy, scaled to the target occupancy
    const double frac = rs.next_range(opt.occupancy_lo, opt.occupancy_hi);
    const double target = 3.0 * frac * static_cast<double>(d.count()) / (4.0 * M_PI);
    double s[3];
    for (double& v : s) v = std::exp(rs.next_range(-0.3, 0.3)); // aspect <= ~1.8
    const double scale = std::cbrt(target / (s[0] * s[1] * s[2]));
    const double semi[3] = {s[0] * scale, s[1] * scale, s[2] * scale};
    const double rmax = std::max({semi[0], semi[1], semi[2]});

    const Mat3 R = random_rotation(rs);
    const int64_t dim[3] = {d.x, d.y, d.z};
    double center[3];
    for (int a = 0; a < 3; ++a) {
        const double lo = rmax + 2.0, hi = static_cast<double>(dim[a]) - 1.0 - rmax - 2.0;
        if (hi <= lo)
            throw std::invalid_argument("synth: ellipsoid does not fit the volume");
        center[a] = rs.next_range(lo, hi);
    }

    LabelVolume lab;
    lab.dims = d;
    lab.mask.assign(static_cast<size_t>(d.count()), 0);
    for (int64_t z = 0; z < d.z; ++z)
        for (int64_t y = 0; y < d.y; ++y)
            for (int64_t x = 0; x < d.x; ++x) {
                const double p[3] = {static_cast<double>(x) - center[0],
                                     static_cast<double>(y) - center[1],
                                     static_cast<double>(z) - center[2]};
                double q = 0.0;
                for (int a = 0; a < 3; ++a) {
                    // body frame coordinate: R^T * p
                    const double v =
                        R.m[0][a] * p[0] + R.m[1][a] * p[1] + R.m[2][a] * p[2];
                    q += (v / semi[a]) * (v / semi[a]);
                }
                if (q <= 1.0) lab.mask[linear_index(d, x, y, z)] = 1;
            }

    SmoothField field;
    Rng rf = root.stream(kStreamField, static_cast<uint64_t>(index));
    field.init(rf, d, 25.0);
    Rng rn = root.stream(kStreamNoise, static_cast<uint64_t>(index));

    CtVolume img;
    img.dims = d;
    img.voxels.resize(static_cast<size_t>(d.count()));
    for (int64_t z = 0; z < d.z; ++z)
        for (int64_t y = 0; y < d.y; ++y)
            for (int64_t x = 0; x < d.x; ++x) {
                const int64_t i = linear_index(d, x, y, z);
                double v = 40.0 + field.at(x, y, z) + rn.next_normal() * opt.noise_sigma;
                if (lab.mask[i]) v += opt.foreground_offset;
                img.voxels[i] = static_cast<float>(v);
            }

    char id[32];
    std::snprintf(id, sizeof id, "case%03lld", static_cast<long long>(index));
    img.case_id = id;
    lab.case_id = id;
    return {std::move(img), std::move(lab)};
}

void generate_synthetic(const SynthOptions& opt, const std::string& out_dir) {
    namespace fs = std::filesystem;
    std::error_code ec;
    fs::create_directories(out_dir, ec);
    if (!fs::is_directory(out_dir))
        throw std::runtime_error("synth: cannot create output directory " + out_dir);
    for (int64_t i = 0; i < opt.count; ++i) {
        auto [img, lab] = synth_case(opt, i);
        const std::string base = out_dir + "/" + img.case_id;
        save_volume(img, base + "_img");
        save_volume(lab, base + "_lab");
    }
}

} // namespace voxseg
