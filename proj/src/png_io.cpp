#include "cdsl/png_io.hpp"

#include <cstdlib>
#include <cstring>
#include <fstream>

#include <zlib.h>

#include "cdsl/common.hpp"

namespace cdsl {

namespace {

constexpr std::uint8_t kSignature[8] = {137, 80, 78, 71, 13, 10, 26, 10};

std::uint32_t be32(const std::uint8_t* p) {
    return (std::uint32_t(p[0]) << 24) | (std::uint32_t(p[1]) << 16) |
           (std::uint32_t(p[2]) << 8) | std::uint32_t(p[3]);
}

void put_be32(std::vector<std::uint8_t>& out, std::uint32_t v) {
    out.push_back(static_cast<std::uint8_t>(v >> 24));
    out.push_back(static_cast<std::uint8_t>(v >> 16));
    out.push_back(static_cast<std::uint8_t>(v >> 8));
    out.push_back(static_cast<std::uint8_t>(v));
}

void append_chunk(std::vector<std::uint8_t>& out, const char type[4],
                  const std::vector<std::uint8_t>& payload) {
    put_be32(out, static_cast<std::uint32_t>(payload.size()));
    const std::size_t crc_start = out.size();
    out.insert(out.end(), type, type + 4);
    out.insert(out.end(), payload.begin(), payload.end());
    const uLong crc = ::crc32(::crc32(0L, Z_NULL, 0), out.data() + crc_start,
                              static_cast<uInt>(out.size() - crc_start));
    put_be32(out, static_cast<std::uint32_t>(crc));
}

int paeth(int a, int b, int c) {
    const int p = a + b - c;
    const int pa = std::abs(p - a), pb = std::abs(p - b), pc = std::abs(p - c);
    if (pa <= pb && pa <= pc) return a;
    if (pb <= pc) return b;
    return c;
}

std::vector<std::uint8_t> zlib_inflate(const std::vector<std::uint8_t>& in,
                                       std::size_t expected_size, const std::string& path) {
    std::vector<std::uint8_t> out(expected_size);
    z_stream zs{};
    if (inflateInit(&zs) != Z_OK) throw DataError(path + ": zlib init failed");
    zs.next_in = const_cast<Bytef*>(in.data());
    zs.avail_in = static_cast<uInt>(in.size());
    zs.next_out = out.data();
    zs.avail_out = static_cast<uInt>(out.size());
    const int rc = inflate(&zs, Z_FINISH);
    inflateEnd(&zs);
    if (rc != Z_STREAM_END || zs.total_out != expected_size)
        throw DataError(path + ": corrupt PNG pixel data");
    return out;
}

std::vector<std::uint8_t> zlib_deflate(const std::vector<std::uint8_t>& in) {
    uLongf bound = compressBound(static_cast<uLong>(in.size()));
    std::vector<std::uint8_t> out(bound);
    if (compress2(out.data(), &bound, in.data(), static_cast<uLong>(in.size()), 6) != Z_OK)
        throw DataError("PNG write: compression failed");
    out.resize(bound);
    return out;
}

} // namespace

GrayImage read_png_gray8(const std::string& path) {
    std::ifstream f(path, std::ios::binary);
    if (!f) throw DataError("cannot open " + path);
    std::vector<std::uint8_t> bytes((std::istreambuf_iterator<char>(f)),
                                    std::istreambuf_iterator<char>());
    if (bytes.size() < 8 || std::memcmp(bytes.data(), kSignature, 8) != 0)
        throw DataError(path + ": not a PNG file");

    GrayImage img;
    int bit_depth = -1, color_type = -1, interlace = -1;
    std::vector<std::uint8_t> idat;
    bool seen_ihdr = false, seen_iend = false;
    std::size_t pos = 8;
    while (pos + 8 <= bytes.size() && !seen_iend) {
        const std::uint32_t len = be32(&bytes[pos]);
        if (pos + 12 + len > bytes.size()) throw DataError(path + ": truncated PNG chunk");
        const char* type = reinterpret_cast<const char*>(&bytes[pos + 4]);
        const std::uint8_t* payload = &bytes[pos + 8];
        if (std::memcmp(type, "IHDR", 4) == 0) {
            if (len != 13) throw DataError(path + ": malformed IHDR");
            img.width = static_cast<int>(be32(payload));
            img.height = static_cast<int>(be32(payload + 4));
            bit_depth = payload[8];
            color_type = payload[9];
            interlace = payload[12];
            seen_ihdr = true;
        } else if (std::memcmp(type, "IDAT", 4) == 0) {
            idat.insert(idat.end(), payload, payload + len);
        } else if (std::memcmp(type, "IEND", 4) == 0) {
            seen_iend = true;
        }
        pos += 12 + len;
    }
    if (!seen_ihdr || !seen_iend) throw DataError(path + ": incomplete PNG");
    if (img.width <= 0 || img.height <= 0) throw DataError(path + ": bad dimensions");
    if (color_type != 0)
        throw DataError(path + ": only 8-bit grayscale PNG accepted "
                               "(multi-channel input rejected)");
    if (bit_depth != 8) throw DataError(path + ": only bit depth 8 supported");
    if (interlace != 0) throw DataError(path + ": interlaced PNG not supported");

    const std::size_t stride = static_cast<std::size_t>(img.width);
    const std::vector<std::uint8_t> raw =
        zlib_inflate(idat, (stride + 1) * img.height, path);

    img.pixels.resize(stride * img.height);
    std::vector<std::uint8_t> prev(stride, 0);
    for (int y = 0; y < img.height; ++y) {
        const std::uint8_t filter = raw[(stride + 1) * y];
        const std::uint8_t* src = &raw[(stride + 1) * y + 1];
        std::uint8_t* dst = &img.pixels[stride * y];
        for (std::size_t x = 0; x < stride; ++x) {
            const int a = x > 0 ? dst[x - 1] : 0;
            const int b = prev[x];
            const int c = x > 0 ? prev[x - 1] : 0;
            int v = src[x];
            switch (filter) {
            case 0: break;
            case 1: v += a; break;
            case 2: v += b; break;
            case 3: v += (a + b) / 2; break;
            case 4: v += paeth(a, b, c); break;
            default: throw DataError(path + ": unknown PNG filter type");
            }
            dst[x] = static_cast<std::uint8_t>(v & 0xff);
        }
        std::memcpy(prev.data(), dst, stride);
    }
    return img;
}

void write_png_gray8(const std::string& path, const GrayImage& img) {
    if (img.width <= 0 || img.height <= 0 ||
        img.pixels.size() != static_cast<std::size_t>(img.width) * img.height)
        throw DataError("PNG write: inconsistent image buffer");

    // filter 0 on every scanline
    std::vector<std::uint8_t> raw;
    raw.reserve((static_cast<std::size_t>(img.width) + 1) * img.height);
    for (int y = 0; y < img.height; ++y) {
        raw.push_back(0);
        const std::uint8_t* row = &img.pixels[static_cast<std::size_t>(y) * img.width];
        raw.insert(raw.end(), row, row + img.width);
    }

    std::vector<std::uint8_t> out(kSignature, kSignature + 8);
    std::vector<std::uint8_t> ihdr;
    put_be32(ihdr, static_cast<std::uint32_t>(img.width));
    put_be32(ihdr, static_cast<std::uint32_t>(img.height));
    ihdr.push_back(8); // bit depth
    ihdr.push_back(0); // grayscale
    ihdr.push_back(0); // compression
    ihdr.push_back(0); // filter
    ihdr.push_back(0); // no interlace
    append_chunk(out, "IHDR", ihdr);
    append_chunk(out, "IDAT", zlib_deflate(raw));
    append_chunk(out, "IEND", {});

    std::ofstream f(path, std::ios::binary | std::ios::trunc);
    if (!f) throw DataError("cannot write " + path);
    f.write(reinterpret_cast<const char*>(out.data()), static_cast<std::streamsize>(out.size()));
    if (!f) throw DataError("short write to " + path);
}

} // namespace cdsl
