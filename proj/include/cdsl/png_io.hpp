#ifndef CDSL_PNG_IO_HPP
#define CDSL_PNG_IO_HPP

#include <cstdint>
#include <string>
#include <vector>

namespace cdsl {

struct GrayImage {
    int width = 0;
    int height = 0;
    std::vector<std::uint8_t> pixels; // row-major, height*width
};

// 8-bit single-channel PNG only; anything else (RGB, palette, alpha, 16-bit,
// interlaced) is rejected with a DataError.
GrayImage read_png_gray8(const std::string& path);

void write_png_gray8(const std::string& path, const GrayImage& img);

} // namespace cdsl

#endif
