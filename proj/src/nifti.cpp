#include "voxseg/nifti.hpp"

#include <cstring>
#include <fstream>
#include <stdexcept>

namespace voxseg {

namespace {

// The NIfTI-1 header fields this reader touches, at their fixed offsets
// inside the 348-byte header.
constexpr int64_t kHeaderSize = 348;
constexpr int64_t kVoxOffsetDefault = 352;

constexpr int16_t kDtUint8 = 2;
constexpr int16_t kDtInt16 = 4;
constexpr int16_t kDtFloat32 = 16;

template <typename T>
T read_le(const unsigned char* p) {
    T v;
    std::memcpy(&v, p, sizeof(T)); // little-endian host assumed (x86/aarch64)
    return v;
}

template <typename T>
void write_le(unsigned char* p, T v) {
    std::memcpy(p, &v, sizeof(T));
}

struct Header {
    int16_t dim[8] = {};
    int16_t datatype = 0;
    int16_t bitpix = 0;
    float pixdim[8] = {};
    float vox_offset = 0;
    float scl_slope = 0;
    float scl_inter = 0;
    char magic[4] = {};
};

Header parse_header(const unsigned char* h) {
    if (read_le<int32_t>(h) != kHeaderSize)
        throw std::runtime_error("NIfTI: sizeof_hdr != 348 (big-endian or not NIfTI-1)");
    Header out;
    for (int i = 0; i < 8; ++i) out.dim[i] = read_le<int16_t>(h + 40 + 2 * i);
    out.datatype = read_le<int16_t>(h + 70);
    out.bitpix = read_le<int16_t>(h + 72);
    for (int i = 0; i < 8; ++i) out.pixdim[i] = read_le<float>(h + 76 + 4 * i);
    out.vox_offset = read_le<float>(h + 108);
    out.scl_slope = read_le<float>(h + 112);
    out.scl_inter = read_le<float>(h + 116);
    std::memcpy(out.magic, h + 344, 4);
    return out;
}

} // namespace

AnyVolume nifti_load(const std::string& path) {
    std::ifstream in(path, std::ios::binary);
    if (!in) throw std::runtime_error("cannot open NIfTI file: " + path);
    unsigned char hbuf[kHeaderSize];
    in.read(reinterpret_cast<char*>(hbuf), kHeaderSize);
    if (!in) throw std::runtime_error("NIfTI: short header in " + path);
    const Header h = parse_header(hbuf);

    if (std::strncmp(h.magic, "n+1", 3) != 0)
        throw std::runtime_error("NIfTI: only single-file n+1 images are supported: " + path);
    if (h.dim[0] < 3)
        throw std::runtime_error("NIfTI: need a 3-d image: " + path);
    for (int i = 4; i <= h.dim[0]; ++i)
        if (h.dim[i] > 1)
            throw std::runtime_error("NIfTI: multi-volume images are not supported: " + path);

    Dims3 dims{h.dim[1], h.dim[2], h.dim[3]};
    if (dims.x < 1 || dims.y < 1 || dims.z < 1)
        throw std::runtime_error("NIfTI: non-positive dims in " + path);
    Spacing3 spacing{h.pixdim[1], h.pixdim[2], h.pixdim[3]};
    if (spacing.x <= 0) spacing.x = 1.0;
    if (spacing.y <= 0) spacing.y = 1.0;
    if (spacing.z <= 0) spacing.z = 1.0;

    int bytes_per = 0;
    switch (h.datatype) {
        case kDtUint8: bytes_per = 1; break;
        case kDtInt16: bytes_per = 2; break;
        case kDtFloat32: bytes_per = 4; break;
        default:
            throw std::runtime_error("NIfTI: unsupported datatype code " +
                                     std::to_string(h.datatype) + " in " + path);
    }

    const int64_t n = dims.count();
    const int64_t off = static_cast<int64_t>(h.vox_offset);
    if (off < kHeaderSize) throw std::runtime_error("NIfTI: bad vox_offset in " + path);
    in.seekg(0, std::ios::end);
    const int64_t fsize = in.tellg();
    if (fsize < off + n * bytes_per)
        throw std::runtime_error("NIfTI: payload size mismatch in " + path);
    in.seekg(off, std::ios::beg);

    std::vector<unsigned char> raw(static_cast<size_t>(n * bytes_per));
    in.read(reinterpret_cast<char*>(raw.data()), static_cast<std::streamsize>(raw.size()));
    if (!in) throw std::runtime_error("NIfTI: short payload in " + path);

    const bool scaled = h.scl_slope != 0.0f && !(h.scl_slope == 1.0f && h.scl_inter == 0.0f);

    if (h.datatype == kDtUint8 && !scaled) {
        LabelVolume lv;
        lv.dims = dims;
        lv.spacing = spacing;
        lv.mask.resize(static_cast<size_t>(n));
        for (int64_t i = 0; i < n; ++i) {
            const unsigned char v = raw[static_cast<size_t>(i)];
            if (v > 1)
                throw std::runtime_error("NIfTI: uint8 volume has non-binary value in " + path);
            lv.mask[static_cast<size_t>(i)] = v;
        }
        return lv;
    }

    CtVolume v;
    v.dims = dims;
    v.spacing = spacing;
    v.voxels.resize(static_cast<size_t>(n));
    for (int64_t i = 0; i < n; ++i) {
        float f;
        if (h.datatype == kDtUint8)
            f = static_cast<float>(raw[static_cast<size_t>(i)]);
        else if (h.datatype == kDtInt16)
            f = static_cast<float>(read_le<int16_t>(raw.data() + 2 * i));
        else
            f = read_le<float>(raw.data() + 4 * i);
        if (scaled) f = h.scl_slope * f + h.scl_inter;
        v.voxels[static_cast<size_t>(i)] = f;
    }
    return v;
}

namespace {

void write_nifti(const std::string& path, const Dims3& dims, const Spacing3& sp,
                 int16_t datatype, int16_t bitpix, const void* payload,
                 int64_t payload_bytes) {
    unsigned char h[kVoxOffsetDefault] = {};
    write_le<int32_t>(h, kHeaderSize);
    write_le<int16_t>(h + 40, 3); // dim[0]
    write_le<int16_t>(h + 42, static_cast<int16_t>(dims.x));
    write_le<int16_t>(h + 44, static_cast<int16_t>(dims.y));
    write_le<int16_t>(h + 46, static_cast<int16_t>(dims.z));
    for (int i = 4; i < 8; ++i) write_le<int16_t>(h + 40 + 2 * i, 1);
    write_le<int16_t>(h + 70, datatype);
    write_le<int16_t>(h + 72, bitpix);
    write_le<float>(h + 76, 1.0f); // pixdim[0]
    write_le<float>(h + 80, static_cast<float>(sp.x));
    write_le<float>(h + 84, static_cast<float>(sp.y));
    write_le<float>(h + 88, static_cast<float>(sp.z));
    write_le<float>(h + 108, static_cast<float>(kVoxOffsetDefault));
    write_le<float>(h + 112, 1.0f); // scl_slope
    write_le<float>(h + 116, 0.0f); // scl_inter
    std::memcpy(h + 344, "n+1", 4);

    std::ofstream out(path, std::ios::binary);
    if (!out) throw std::runtime_error("cannot write NIfTI file: " + path);
    out.write(reinterpret_cast<const char*>(h), kVoxOffsetDefault);
    out.write(reinterpret_cast<const char*>(payload), payload_bytes);
    if (!out) throw std::runtime_error("short write on " + path);
}

} // namespace

void nifti_save(const CtVolume& v, const std::string& path) {
    if (v.dims.x > 32767 || v.dims.y > 32767 || v.dims.z > 32767)
        throw std::runtime_error("NIfTI: dims exceed int16 range");
    write_nifti(path, v.dims, v.spacing, kDtFloat32, 32, v.voxels.data(),
                static_cast<int64_t>(v.voxels.size() * sizeof(float)));
}

void nifti_save(const LabelVolume& v, const std::string& path) {
    if (v.dims.x > 32767 || v.dims.y > 32767 || v.dims.z > 32767)
        throw std::runtime_error("NIfTI: dims exceed int16 range");
    write_nifti(path, v.dims, v.spacing, kDtUint8, 8, v.mask.data(),
                static_cast<int64_t>(v.mask.size()));
}

} // namespace voxseg
