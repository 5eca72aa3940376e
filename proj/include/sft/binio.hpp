#pragma once

#include <cstdint>
#include <cstring>
#include <istream>
#include <ostream>
#include <stdexcept>

namespace sft::binio {

// All on-disk formats are little-endian regardless of host order.

inline void put_u8(std::ostream& os, std::uint8_t v) {
    os.put(static_cast<char>(v));
}

inline void put_u16(std::ostream& os, std::uint16_t v) {
    char b[2] = {static_cast<char>(v & 0xff), static_cast<char>((v >> 8) & 0xff)};
    os.write(b, 2);
}

inline void put_u32(std::ostream& os, std::uint32_t v) {
    char b[4];
    for (int i = 0; i < 4; ++i) b[i] = static_cast<char>((v >> (8 * i)) & 0xff);
    os.write(b, 4);
}

inline void put_f64(std::ostream& os, double v) {
    std::uint64_t bits;
    std::memcpy(&bits, &v, 8);
    char b[8];
    for (int i = 0; i < 8; ++i) b[i] = static_cast<char>((bits >> (8 * i)) & 0xff);
    os.write(b, 8);
}

inline std::uint8_t get_u8(std::istream& is) {
    int c = is.get();
    if (c < 0) throw std::runtime_error("unexpected end of file");
    return static_cast<std::uint8_t>(c);
}

inline std::uint16_t get_u16(std::istream& is) {
    std::uint16_t v = get_u8(is);
    v |= static_cast<std::uint16_t>(get_u8(is)) << 8;
    return v;
}

inline std::uint32_t get_u32(std::istream& is) {
    std::uint32_t v = 0;
    for (int i = 0; i < 4; ++i) v |= static_cast<std::uint32_t>(get_u8(is)) << (8 * i);
    return v;
}

inline double get_f64(std::istream& is) {
    std::uint64_t bits = 0;
    for (int i = 0; i < 8; ++i) bits |= static_cast<std::uint64_t>(get_u8(is)) << (8 * i);
    double v;
    std::memcpy(&v, &bits, 8);
    return v;
}

}  // namespace sft::binio
