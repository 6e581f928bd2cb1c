#include "voxseg/png.hpp"

#include <algorithm>
#include <fstream>
#include <stdexcept>

namespace voxseg {

namespace {

uint32_t crc32_update(uint32_t crc, const uint8_t* p, size_t n) {
    static uint32_t table[256];
    static bool init = false;
    if (!init) {
        for (uint32_t i = 0; i < 256; ++i) {
            uint32_t c = i;
            for (int k = 0; k < 8; ++k) c = (c & 1) ? 0xedb88320u ^ (c >> 1) : c >> 1;
            table[i] = c;
        }
        init = true;
    }
    crc ^= 0xffffffffu;
    for (size_t i = 0; i < n; ++i) crc = table[(crc ^ p[i]) & 0xff] ^ (crc >> 8);
    return crc ^ 0xffffffffu;
}

void put_be32(std::vector<uint8_t>& v, uint32_t x) {
    v.push_back(static_cast<uint8_t>(x >> 24));
    v.push_back(static_cast<uint8_t>(x >> 16));
    v.push_back(static_cast<uint8_t>(x >> 8));
    v.push_back(static_cast<uint8_t>(x));
}

void write_chunk(std::ofstream& out, const char type[4], const std::vector<uint8_t>& data) {
    std::vector<uint8_t> hdr;
    put_be32(hdr, static_cast<uint32_t>(data.size()));
    out.write(reinterpret_cast<const char*>(hdr.data()), 4);
    std::vector<uint8_t> body(type, type + 4);
    body.insert(body.end(), data.begin(), data.end());
    out.write(reinterpret_cast<const char*>(body.data()),
              static_cast<std::streamsize>(body.size()));
    std::vector<uint8_t> crc;
    put_be32(crc, crc32_update(0, body.data(), body.size()));
    out.write(reinterpret_cast<const char*>(crc.data()), 4);
}

// zlib stream with stored (uncompressed) deflate blocks
std::vector<uint8_t> zlib_store(const std::vector<uint8_t>& raw) {
    std::vector<uint8_t> out;
    out.push_back(0x78);
    out.push_back(0x01);
    size_t pos = 0;
    while (pos < raw.size() || raw.empty()) {
        const size_t len = std::min<size_t>(65535, raw.size() - pos);
        const bool final = pos + len == raw.size();
        out.push_back(final ? 1 : 0);
        out.push_back(static_cast<uint8_t>(len & 0xff));
        out.push_back(static_cast<uint8_t>(len >> 8));
        out.push_back(static_cast<uint8_t>(~len & 0xff));
        out.push_back(static_cast<uint8_t>((~len >> 8) & 0xff));
        out.insert(out.end(), raw.begin() + static_cast<long>(pos),
                   raw.begin() + static_cast<long>(pos + len));
        pos += len;
        if (final) break;
    }
    uint32_t a = 1, b = 0;
    for (uint8_t c : raw) {
        a = (a + c) % 65521;
        b = (b + a) % 65521;
    }
    put_be32(out, (b << 16) | a);
    return out;
}

} // namespace

void write_png_rgb(const std::string& path, int64_t width, int64_t height,
                   const std::vector<uint8_t>& rgb) {
    if (static_cast<int64_t>(rgb.size()) != width * height * 3)
        throw std::invalid_argument("write_png_rgb: buffer size mismatch");
    std::ofstream out(path, std::ios::binary);
    if (!out) throw std::runtime_error("cannot write PNG: " + path);
    static const uint8_t sig[8] = {0x89, 'P', 'N', 'G', 0x0d, 0x0a, 0x1a, 0x0a};
    out.write(reinterpret_cast<const char*>(sig), 8);

    std::vector<uint8_t> ihdr;
    put_be32(ihdr, static_cast<uint32_t>(width));
    put_be32(ihdr, static_cast<uint32_t>(height));
    ihdr.push_back(8);  // bit depth
    ihdr.push_back(2);  // truecolor
    ihdr.push_back(0);
    ihdr.push_back(0);
    ihdr.push_back(0);
    write_chunk(out, "IHDR", ihdr);

    std::vector<uint8_t> raw;
    raw.reserve(static_cast<size_t>(height * (1 + width * 3)));
    for (int64_t yy = 0; yy < height; ++yy) {
        raw.push_back(0); // filter: none
        const uint8_t* row = rgb.data() + yy * width * 3;
        raw.insert(raw.end(), row, row + width * 3);
    }
    write_chunk(out, "IDAT", zlib_store(raw));
    write_chunk(out, "IEND", {});
    if (!out) throw std::runtime_error("short write on PNG: " + path);
}

void write_overlay_png(const std::string& path, const CtVolume& vol,
                       const LabelVolume& pred, const LabelVolume& truth) {
    if (vol.dims != pred.dims || vol.dims != truth.dims)
        throw std::invalid_argument("overlay: dim mismatch");
    const int64_t z = vol.dims.z / 2;
    float lo = vol.voxels[0], hi = vol.voxels[0];
    for (int64_t y = 0; y < vol.dims.y; ++y)
        for (int64_t x = 0; x < vol.dims.x; ++x) {
            const float v = vol.at(x, y, z);
            lo = std::min(lo, v);
            hi = std::max(hi, v);
        }
    const float scale = hi > lo ? 255.0f / (hi - lo) : 0.0f;
    std::vector<uint8_t> rgb(static_cast<size_t>(vol.dims.x * vol.dims.y * 3));
    for (int64_t y = 0; y < vol.dims.y; ++y)
        for (int64_t x = 0; x < vol.dims.x; ++x) {
            const auto g = static_cast<uint8_t>((vol.at(x, y, z) - lo) * scale);
            uint8_t r = g, gg = g, b = g;
            const bool p = pred.at(x, y, z), t = truth.at(x, y, z);
            if (p && t) { r = 255; gg = 255; b = 0; }
            else if (t) { r = 255; gg = g / 2; b = g / 2; }
            else if (p) { r = g / 2; gg = 255; b = g / 2; }
            const size_t i = static_cast<size_t>((y * vol.dims.x + x) * 3);
            rgb[i] = r;
            rgb[i + 1] = gg;
            rgb[i + 2] = b;
        }
    write_png_rgb(path, vol.dims.x, vol.dims.y, rgb);
}

} // namespace voxseg
