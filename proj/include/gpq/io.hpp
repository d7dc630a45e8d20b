#pragma once

// Little-endian binary stream helpers shared by the on-disk formats
// (feature files, encoder/model checkpoints, retrieval indexes).

#include <bit>
#include <cstdint>
#include <cstring>
#include <fstream>
#include <istream>
#include <ostream>
#include <string>
#include <vector>

#include "gpq/error.hpp"

namespace gpq {

class ByteWriter {
public:
    explicit ByteWriter(std::ostream& out) : out_(out) {}

    void write_bytes(const void* src, std::size_t n) {
        out_.write(static_cast<const char*>(src), static_cast<std::streamsize>(n));
        if (!out_) throw IoError("write failed at byte offset " + std::to_string(offset_));
        offset_ += n;
    }

    void write_u8(std::uint8_t v) { write_bytes(&v, 1); }

    void write_u16(std::uint16_t v) { write_uint(v, 2); }
    void write_u32(std::uint32_t v) { write_uint(v, 4); }
    void write_u64(std::uint64_t v) { write_uint(v, 8); }

    void write_f32(float v) { write_uint(std::bit_cast<std::uint32_t>(v), 4); }

    void write_magic(const char magic[4]) { write_bytes(magic, 4); }

    std::size_t offset() const { return offset_; }

private:
    void write_uint(std::uint64_t v, int nbytes) {
        std::uint8_t buf[8];
        for (int i = 0; i < nbytes; ++i) buf[i] = static_cast<std::uint8_t>(v >> (8 * i));
        write_bytes(buf, static_cast<std::size_t>(nbytes));
    }

    std::ostream& out_;
    std::size_t offset_ = 0;
};

class ByteReader {
public:
    explicit ByteReader(std::istream& in) : in_(in) {}

    void read_bytes(void* dst, std::size_t n) {
        in_.read(static_cast<char*>(dst), static_cast<std::streamsize>(n));
        if (static_cast<std::size_t>(in_.gcount()) != n)
            throw TruncatedError("unexpected end of stream", offset_ + static_cast<std::size_t>(in_.gcount()));
        offset_ += n;
    }

    std::uint8_t read_u8() {
        std::uint8_t v;
        read_bytes(&v, 1);
        return v;
    }

    std::uint16_t read_u16() { return static_cast<std::uint16_t>(read_uint(2)); }
    std::uint32_t read_u32() { return static_cast<std::uint32_t>(read_uint(4)); }
    std::uint64_t read_u64() { return read_uint(8); }

    float read_f32() { return std::bit_cast<float>(static_cast<std::uint32_t>(read_uint(4))); }

    // Reads 4 bytes and checks them against `expect`; throws BadMagicError.
    void expect_magic(const char expect[4], const std::string& format_name) {
        char got[4];
        read_bytes(got, 4);
        if (std::memcmp(got, expect, 4) != 0)
            throw BadMagicError("not a " + format_name + " file (bad magic)");
    }

    void expect_version(std::uint16_t expect, const std::string& format_name) {
        std::uint16_t got = read_u16();
        if (got != expect)
            throw VersionMismatchError(format_name + " version " + std::to_string(got) +
                                       " unsupported (expected " + std::to_string(expect) + ")");
    }

    // True if at least one more byte is available.
    bool has_more() {
        return in_.peek() != std::char_traits<char>::eof();
    }

    std::size_t offset() const { return offset_; }

private:
    std::uint64_t read_uint(int nbytes) {
        std::uint8_t buf[8];
        read_bytes(buf, static_cast<std::size_t>(nbytes));
        std::uint64_t v = 0;
        for (int i = 0; i < nbytes; ++i) v |= static_cast<std::uint64_t>(buf[i]) << (8 * i);
        return v;
    }

    std::istream& in_;
    std::size_t offset_ = 0;
};

inline std::ofstream open_output(const std::string& path) {
    std::ofstream out(path, std::ios::binary | std::ios::trunc);
    if (!out) throw IoError("cannot open for writing: " + path);
    return out;
}

inline std::ifstream open_input(const std::string& path) {
    std::ifstream in(path, std::ios::binary);
    if (!in) throw IoError("cannot open for reading: " + path);
    return in;
}

inline std::vector<std::uint8_t> read_file_bytes(const std::string& path) {
    std::ifstream in = open_input(path);
    in.seekg(0, std::ios::end);
    auto size = static_cast<std::size_t>(in.tellg());
    in.seekg(0, std::ios::beg);
    std::vector<std::uint8_t> bytes(size);
    if (size > 0) {
        in.read(reinterpret_cast<char*>(bytes.data()), static_cast<std::streamsize>(size));
        if (!in) throw IoError("cannot read: " + path);
    }
    return bytes;
}

}  // namespace gpq
