#pragma once

#include <array>
#include <cstring>
#include <string>
#include <vector>

#include "egogan/common.hpp"

namespace egogan {

// SHA-1, used for content hashes in artifact headers and for the
// parameter-group freeze checks in tests.
struct Sha1 {
    void update(const void* data, size_t len) {
        const u8* p = static_cast<const u8*>(data);
        total_ += len;
        while (len > 0) {
            size_t take = std::min(len, size_t(64) - fill_);
            std::memcpy(buf_.data() + fill_, p, take);
            fill_ += take;
            p += take;
            len -= take;
            if (fill_ == 64) {
                block(buf_.data());
                fill_ = 0;
            }
        }
    }

    std::string hex() {
        Sha1 copy = *this;
        u64 bits = copy.total_ * 8;
        u8 pad = 0x80;
        copy.update(&pad, 1);
        u8 z = 0;
        while (copy.fill_ != 56) copy.update(&z, 1);
        u8 len_be[8];
        for (int i = 0; i < 8; ++i) len_be[i] = static_cast<u8>(bits >> (56 - 8 * i));
        copy.update(len_be, 8);
        static const char* k = "0123456789abcdef";
        std::string out;
        for (u32 w : copy.h_) {
            for (int i = 28; i >= 0; i -= 4) out.push_back(k[(w >> i) & 0xf]);
        }
        return out;
    }

  private:
    static u32 rol(u32 v, int s) { return (v << s) | (v >> (32 - s)); }

    void block(const u8* p) {
        u32 w[80];
        for (int i = 0; i < 16; ++i)
            w[i] = (u32(p[4 * i]) << 24) | (u32(p[4 * i + 1]) << 16) | (u32(p[4 * i + 2]) << 8) | u32(p[4 * i + 3]);
        for (int i = 16; i < 80; ++i) w[i] = rol(w[i - 3] ^ w[i - 8] ^ w[i - 14] ^ w[i - 16], 1);
        u32 a = h_[0], b = h_[1], c = h_[2], d = h_[3], e = h_[4];
        for (int i = 0; i < 80; ++i) {
            u32 f, k;
            if (i < 20) {
                f = (b & c) | ((~b) & d);
                k = 0x5a827999;
            } else if (i < 40) {
                f = b ^ c ^ d;
                k = 0x6ed9eba1;
            } else if (i < 60) {
                f = (b & c) | (b & d) | (c & d);
                k = 0x8f1bbcdc;
            } else {
                f = b ^ c ^ d;
                k = 0xca62c1d6;
            }
            u32 t = rol(a, 5) + f + e + k + w[i];
            e = d;
            d = c;
            c = rol(b, 30);
            b = a;
            a = t;
        }
        h_[0] += a;
        h_[1] += b;
        h_[2] += c;
        h_[3] += d;
        h_[4] += e;
    }

    std::array<u32, 5> h_ = {0x67452301, 0xefcdab89, 0x98badcfe, 0x10325476, 0xc3d2e1f0};
    std::array<u8, 64> buf_{};
    size_t fill_ = 0;
    u64 total_ = 0;
};

inline std::string sha1_hex(const void* data, size_t len) {
    Sha1 h;
    h.update(data, len);
    return h.hex();
}

inline std::string sha1_hex(const std::string& s) { return sha1_hex(s.data(), s.size()); }

template <class T>
std::string sha1_hex(const std::vector<T>& v) {
    return sha1_hex(v.data(), v.size() * sizeof(T));
}

} // namespace egogan
