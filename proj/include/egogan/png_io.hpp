#pragma once

#include <string>
#include <vector>

#include "egogan/common.hpp"

namespace egogan {

// 8-bit image, rows top to bottom, channels interleaved (1 = gray, 3 = RGB)
struct ImageU8 {
    int h = 0, w = 0, channels = 1;
    std::vector<u8> pix;

    ImageU8() = default;
    ImageU8(int h_, int w_, int c) : h(h_), w(w_), channels(c), pix(static_cast<size_t>(h_) * w_ * c, 0) {}

    u8& at(int y, int x, int c = 0) { return pix[(static_cast<size_t>(y) * w + x) * channels + c]; }
    u8 at(int y, int x, int c = 0) const { return pix[(static_cast<size_t>(y) * w + x) * channels + c]; }
};

struct PngText {
    std::string keyword;
    std::string text;
};

void write_png(const std::string& path, const ImageU8& img, const std::vector<PngText>& texts = {});
ImageU8 read_png(const std::string& path);
std::vector<PngText> read_png_texts(const std::string& path);

} // namespace egogan
