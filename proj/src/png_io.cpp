#include "egogan/png_io.hpp"

#include <zlib.h>

#include <cstring>
#include <fstream>

namespace egogan {

namespace {

void put_be32(std::vector<u8>& out, u32 v) {
    out.push_back(static_cast<u8>(v >> 24));
    out.push_back(static_cast<u8>(v >> 16));
    out.push_back(static_cast<u8>(v >> 8));
    out.push_back(static_cast<u8>(v));
}

u32 get_be32(const u8* p) { return (u32(p[0]) << 24) | (u32(p[1]) << 16) | (u32(p[2]) << 8) | u32(p[3]); }

void write_chunk(std::vector<u8>& out, const char type[4], const std::vector<u8>& payload) {
    put_be32(out, static_cast<u32>(payload.size()));
    const size_t crc_start = out.size();
    out.insert(out.end(), type, type + 4);
    out.insert(out.end(), payload.begin(), payload.end());
    const u32 crc = static_cast<u32>(
        ::crc32(0, out.data() + crc_start, static_cast<uInt>(out.size() - crc_start)));
    put_be32(out, crc);
}

constexpr u8 kSig[8] = {0x89, 'P', 'N', 'G', '\r', '\n', 0x1a, '\n'};

int paeth(int a, int b, int c) {
    const int p = a + b - c;
    const int pa = std::abs(p - a), pb = std::abs(p - b), pc = std::abs(p - c);
    if (pa <= pb && pa <= pc) return a;
    if (pb <= pc) return b;
    return c;
}

} // namespace

void write_png(const std::string& path, const ImageU8& img, const std::vector<PngText>& texts) {
    if (img.channels != 1 && img.channels != 3) throw IoError("write_png: only gray or RGB images supported");
    if (img.h <= 0 || img.w <= 0) throw IoError("write_png: empty image");
    std::vector<u8> out(kSig, kSig + 8);

    std::vector<u8> ihdr;
    put_be32(ihdr, static_cast<u32>(img.w));
    put_be32(ihdr, static_cast<u32>(img.h));
    ihdr.push_back(8);                                 // bit depth
    ihdr.push_back(img.channels == 1 ? 0 : 2);         // color type
    ihdr.push_back(0);                                 // compression
    ihdr.push_back(0);                                 // filter
    ihdr.push_back(0);                                 // interlace
    write_chunk(out, "IHDR", ihdr);

    for (const auto& t : texts) {
        std::vector<u8> payload(t.keyword.begin(), t.keyword.end());
        payload.push_back(0);
        payload.insert(payload.end(), t.text.begin(), t.text.end());
        write_chunk(out, "tEXt", payload);
    }

    // filter 0 on every scanline
    const size_t row = static_cast<size_t>(img.w) * img.channels;
    std::vector<u8> raw(static_cast<size_t>(img.h) * (row + 1));
    for (int y = 0; y < img.h; ++y) {
        raw[static_cast<size_t>(y) * (row + 1)] = 0;
        std::memcpy(raw.data() + static_cast<size_t>(y) * (row + 1) + 1, img.pix.data() + static_cast<size_t>(y) * row,
                    row);
    }
    uLongf bound = compressBound(static_cast<uLong>(raw.size()));
    std::vector<u8> idat(bound);
    if (compress2(idat.data(), &bound, raw.data(), static_cast<uLong>(raw.size()), 6) != Z_OK)
        throw IoError("write_png: deflate failed");
    idat.resize(bound);
    write_chunk(out, "IDAT", idat);
    write_chunk(out, "IEND", {});

    std::ofstream f(path, std::ios::binary);
    if (!f) throw IoError("write_png: cannot open " + path);
    f.write(reinterpret_cast<const char*>(out.data()), static_cast<std::streamsize>(out.size()));
    if (!f) throw IoError("write_png: write failed for " + path);
}

namespace {

struct PngParsed {
    u32 w = 0, h = 0;
    int channels = 0;
    std::vector<u8> idat;
    std::vector<PngText> texts;
};

PngParsed parse_png(const std::string& path) {
    std::ifstream f(path, std::ios::binary);
    if (!f) throw IoError("read_png: cannot open " + path);
    std::vector<u8> bytes((std::istreambuf_iterator<char>(f)), std::istreambuf_iterator<char>());
    if (bytes.size() < 8 || std::memcmp(bytes.data(), kSig, 8) != 0)
        throw IoError("read_png: not a PNG file: " + path);
    PngParsed p;
    size_t pos = 8;
    bool saw_ihdr = false;
    while (pos + 12 <= bytes.size()) {
        const u32 len = get_be32(bytes.data() + pos);
        if (pos + 12 + len > bytes.size()) throw IoError("read_png: truncated chunk in " + path);
        const char* type = reinterpret_cast<const char*>(bytes.data() + pos + 4);
        const u8* data = bytes.data() + pos + 8;
        if (std::memcmp(type, "IHDR", 4) == 0) {
            if (len != 13) throw IoError("read_png: bad IHDR in " + path);
            p.w = get_be32(data);
            p.h = get_be32(data + 4);
            const u8 depth = data[8], color = data[9], interlace = data[12];
            if (depth != 8) throw IoError("read_png: only 8-bit images supported: " + path);
            if (color == 0)
                p.channels = 1;
            else if (color == 2)
                p.channels = 3;
            else
                throw IoError("read_png: only gray/RGB supported: " + path);
            if (interlace != 0) throw IoError("read_png: interlaced PNG not supported: " + path);
            saw_ihdr = true;
        } else if (std::memcmp(type, "IDAT", 4) == 0) {
            p.idat.insert(p.idat.end(), data, data + len);
        } else if (std::memcmp(type, "tEXt", 4) == 0) {
            const u8* nul = static_cast<const u8*>(std::memchr(data, 0, len));
            if (nul) {
                p.texts.push_back({std::string(data, nul),
                                   std::string(nul + 1, data + len)});
            }
        } else if (std::memcmp(type, "IEND", 4) == 0) {
            break;
        }
        pos += 12 + len;
    }
    if (!saw_ihdr || p.idat.empty()) throw IoError("read_png: missing IHDR/IDAT in " + path);
    return p;
}

} // namespace

ImageU8 read_png(const std::string& path) {
    PngParsed p = parse_png(path);
    const size_t row = static_cast<size_t>(p.w) * p.channels;
    std::vector<u8> raw(static_cast<size_t>(p.h) * (row + 1));
    uLongf raw_len = static_cast<uLongf>(raw.size());
    int rc = uncompress(raw.data(), &raw_len, p.idat.data(), static_cast<uLong>(p.idat.size()));
    if (rc != Z_OK || raw_len != raw.size()) throw IoError("read_png: inflate failed for " + path);

    ImageU8 img(static_cast<int>(p.h), static_cast<int>(p.w), p.channels);
    const int bpp = p.channels;
    std::vector<u8> prev(row, 0);
    for (u32 y = 0; y < p.h; ++y) {
        const u8 filter = raw[static_cast<size_t>(y) * (row + 1)];
        const u8* src = raw.data() + static_cast<size_t>(y) * (row + 1) + 1;
        u8* dst = img.pix.data() + static_cast<size_t>(y) * row;
        switch (filter) {
            case 0:
                std::memcpy(dst, src, row);
                break;
            case 1:
                for (size_t x = 0; x < row; ++x)
                    dst[x] = static_cast<u8>(src[x] + (x >= static_cast<size_t>(bpp) ? dst[x - bpp] : 0));
                break;
            case 2:
                for (size_t x = 0; x < row; ++x) dst[x] = static_cast<u8>(src[x] + prev[x]);
                break;
            case 3:
                for (size_t x = 0; x < row; ++x) {
                    const int a = x >= static_cast<size_t>(bpp) ? dst[x - bpp] : 0;
                    dst[x] = static_cast<u8>(src[x] + ((a + prev[x]) >> 1));
                }
                break;
            case 4:
                for (size_t x = 0; x < row; ++x) {
                    const int a = x >= static_cast<size_t>(bpp) ? dst[x - bpp] : 0;
                    const int c = x >= static_cast<size_t>(bpp) ? prev[x - bpp] : 0;
                    dst[x] = static_cast<u8>(src[x] + paeth(a, prev[x], c));
                }
                break;
            default: throw IoError("read_png: unknown filter type in " + path);
        }
        std::memcpy(prev.data(), dst, row);
    }
    return img;
}

std::vector<PngText> read_png_texts(const std::string& path) { return parse_png(path).texts; }

} // namespace egogan
