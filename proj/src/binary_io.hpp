#pragma once

// Little-endian byte buffers with a CRC32 trailer, shared by the dataset and
// checkpoint containers.

#include <zlib.h>

#include <array>
#include <bit>
#include <cstdint>
#include <cstring>
#include <filesystem>
#include <fstream>
#include <iterator>
#include <string>
#include <vector>

#include "inscorr/errors.hpp"

namespace inscorr::io {

static_assert(std::endian::native == std::endian::little, "containers assume a little-endian host");

class ByteWriter {
public:
    void magic(const char (&tag)[5]) { raw(tag, 4); }
    void u8(std::uint8_t v) { raw(&v, 1); }
    void u32(std::uint32_t v) { raw(&v, 4); }
    void u64(std::uint64_t v) { raw(&v, 8); }
    void f64(double v) { raw(&v, 8); }
    void f64s(const double* data, std::size_t n) { raw(data, n * 8); }

    void write_with_crc(const std::filesystem::path& path) {
        const auto crc = static_cast<std::uint32_t>(
            ::crc32(0L, reinterpret_cast<const Bytef*>(buf_.data()), static_cast<uInt>(buf_.size())));
        u32(crc);
        std::ofstream out(path, std::ios::binary | std::ios::trunc);
        if (!out) throw Error("cannot open " + path.string() + " for writing");
        out.write(reinterpret_cast<const char*>(buf_.data()), static_cast<std::streamsize>(buf_.size()));
        if (!out) throw Error("write failed for " + path.string());
    }

private:
    void raw(const void* p, std::size_t n) {
        const auto* b = static_cast<const std::uint8_t*>(p);
        buf_.insert(buf_.end(), b, b + n);
    }
    std::vector<std::uint8_t> buf_;
};

class ByteReader {
public:
    explicit ByteReader(const std::filesystem::path& path) : what_(path.string()) {
        std::ifstream in(path, std::ios::binary);
        if (!in) throw Error("cannot open " + what_);
        buf_.assign(std::istreambuf_iterator<char>(in), std::istreambuf_iterator<char>());
    }

    void expect_magic(const char (&tag)[5]) {
        if (buf_.size() < 4 || std::memcmp(buf_.data(), tag, 4) != 0)
            throw FormatError(what_ + ": bad magic bytes (expected " + std::string(tag, 4) + ")");
        pos_ = 4;
    }
    void expect_version(std::uint32_t supported) {
        const auto v = u32();
        if (v != supported)
            throw VersionError(what_ + ": format version " + std::to_string(v) + ", this build reads version " +
                               std::to_string(supported));
    }
    // Call once the header is parsed: verifies the trailer before trusting the body.
    void verify_crc() {
        if (buf_.size() < pos_ + 4) throw TruncatedError(what_ + ": file truncated");
        const std::size_t body = buf_.size() - 4;
        std::uint32_t stored;
        std::memcpy(&stored, buf_.data() + body, 4);
        const auto crc =
            static_cast<std::uint32_t>(::crc32(0L, reinterpret_cast<const Bytef*>(buf_.data()), static_cast<uInt>(body)));
        if (crc != stored) throw ChecksumError(what_ + ": checksum mismatch");
        end_ = body;
    }

    std::uint8_t u8() { return scalar<std::uint8_t>(); }
    std::uint32_t u32() { return scalar<std::uint32_t>(); }
    std::uint64_t u64() { return scalar<std::uint64_t>(); }
    double f64() { return scalar<double>(); }
    void f64s(double* out, std::size_t n) {
        need(n * 8);
        std::memcpy(out, buf_.data() + pos_, n * 8);
        pos_ += n * 8;
    }
    bool at_end() const { return pos_ == limit(); }
    std::size_t remaining() const { return limit() - pos_; }
    const std::string& name() const { return what_; }

private:
    std::size_t limit() const { return end_ ? end_ : buf_.size(); }
    void need(std::size_t n) const {
        if (pos_ + n > limit()) throw TruncatedError(what_ + ": file truncated");
    }
    template <class T>
    T scalar() {
        need(sizeof(T));
        T v;
        std::memcpy(&v, buf_.data() + pos_, sizeof(T));
        pos_ += sizeof(T);
        return v;
    }

    std::string what_;
    std::vector<std::uint8_t> buf_;
    std::size_t pos_ = 0;
    std::size_t end_ = 0;
};

}  // namespace inscorr::io
