#pragma once

#include <bit>
#include <cstdint>
#include <filesystem>
#include <fstream>
#include <stdexcept>
#include <string>
#include <string_view>
#include <vector>

namespace rankodo::flow {

struct BadMagicError : std::runtime_error {
    BadMagicError() : std::runtime_error(".flo magic number mismatch") {}
};

struct TruncatedFileError : std::runtime_error {
    using std::runtime_error::runtime_error;
};

struct DimensionOverflowError : std::runtime_error {
    using std::runtime_error::runtime_error;
};

// Dense per-pixel displacement in pixels/frame; channels (u, v) interleaved,
// row-major.
struct FlowField {
    int width = 0;
    int height = 0;
    std::vector<float> data;

    static FlowField zeros(int w, int h) {
        FlowField f;
        f.width = w;
        f.height = h;
        f.data.assign(static_cast<std::size_t>(w) * static_cast<std::size_t>(h) * 2, 0.0f);
        return f;
    }

    std::size_t index(int x, int y) const {
        return 2 * (static_cast<std::size_t>(y) * static_cast<std::size_t>(width) +
                    static_cast<std::size_t>(x));
    }
    float u(int x, int y) const { return data[index(x, y)]; }
    float v(int x, int y) const { return data[index(x, y) + 1]; }
    float& u(int x, int y) { return data[index(x, y)]; }
    float& v(int x, int y) { return data[index(x, y) + 1]; }
};

inline bool same_shape(const FlowField& a, const FlowField& b) {
    return a.width == b.width && a.height == b.height;
}

constexpr float kFloMagic = 202021.25f;  // reads as "PIEH" in the file
constexpr std::int32_t kMaxFloDimension = 100000;

namespace detail {

inline void put_u32le(std::string& out, std::uint32_t v) {
    out.push_back(static_cast<char>(v & 0xff));
    out.push_back(static_cast<char>((v >> 8) & 0xff));
    out.push_back(static_cast<char>((v >> 16) & 0xff));
    out.push_back(static_cast<char>((v >> 24) & 0xff));
}

inline std::uint32_t get_u32le(std::string_view bytes, std::size_t off) {
    return static_cast<std::uint32_t>(static_cast<unsigned char>(bytes[off])) |
           (static_cast<std::uint32_t>(static_cast<unsigned char>(bytes[off + 1])) << 8) |
           (static_cast<std::uint32_t>(static_cast<unsigned char>(bytes[off + 2])) << 16) |
           (static_cast<std::uint32_t>(static_cast<unsigned char>(bytes[off + 3])) << 24);
}

}  // namespace detail

// Middlebury .flo layout: float32 magic 202021.25, int32 width, int32
// height, then row-major interleaved (u, v) float32 — all little-endian.
inline std::string write_flo(const FlowField& f) {
    std::string out;
    out.reserve(12 + f.data.size() * 4);
    detail::put_u32le(out, std::bit_cast<std::uint32_t>(kFloMagic));
    detail::put_u32le(out, static_cast<std::uint32_t>(f.width));
    detail::put_u32le(out, static_cast<std::uint32_t>(f.height));
    for (float v : f.data) detail::put_u32le(out, std::bit_cast<std::uint32_t>(v));
    return out;
}

inline FlowField read_flo(std::string_view bytes) {
    if (bytes.size() < 4) throw TruncatedFileError("file shorter than .flo magic");
    if (std::bit_cast<float>(detail::get_u32le(bytes, 0)) != kFloMagic) throw BadMagicError{};
    if (bytes.size() < 12) throw TruncatedFileError("file shorter than .flo header");
    const auto w = static_cast<std::int32_t>(detail::get_u32le(bytes, 4));
    const auto h = static_cast<std::int32_t>(detail::get_u32le(bytes, 8));
    if (w < 1 || h < 1 || w > kMaxFloDimension || h > kMaxFloDimension)
        throw DimensionOverflowError(".flo dimensions out of range: " + std::to_string(w) + "x" +
                                     std::to_string(h));
    const std::size_t expected =
        12 + static_cast<std::size_t>(w) * static_cast<std::size_t>(h) * 8;
    if (bytes.size() != expected)
        throw TruncatedFileError(".flo size mismatch: expected " + std::to_string(expected) +
                                 " bytes, got " + std::to_string(bytes.size()));
    FlowField f;
    f.width = w;
    f.height = h;
    f.data.resize(static_cast<std::size_t>(w) * static_cast<std::size_t>(h) * 2);
    for (std::size_t i = 0; i < f.data.size(); ++i)
        f.data[i] = std::bit_cast<float>(detail::get_u32le(bytes, 12 + 4 * i));
    return f;
}

inline void write_flo_file(const FlowField& f, const std::filesystem::path& path) {
    std::ofstream out(path, std::ios::binary);
    if (!out) throw std::runtime_error("cannot open for writing: " + path.string());
    const std::string bytes = write_flo(f);
    out.write(bytes.data(), static_cast<std::streamsize>(bytes.size()));
    if (!out) throw std::runtime_error("write failed: " + path.string());
}

inline FlowField read_flo_file(const std::filesystem::path& path) {
    std::ifstream in(path, std::ios::binary);
    if (!in) throw std::runtime_error("cannot open: " + path.string());
    std::string bytes((std::istreambuf_iterator<char>(in)), std::istreambuf_iterator<char>());
    return read_flo(bytes);
}

}  // namespace rankodo::flow
