#pragma once
// Binary serialization helpers: little-endian primitives over in-memory
// buffers, whole-file IO, and SHA-256 content hashing. All cmr binary
// artifacts are little-endian and carry a 32-byte SHA-256 trailer unless
// documented otherwise.

#include "cmr/types.hpp"

#include <array>
#include <cstdint>
#include <cstring>
#include <string>
#include <vector>

namespace cmr {

using Sha256 = std::array<std::uint8_t, 32>;

Sha256 sha256(const std::uint8_t* data, std::size_t size);
Sha256 sha256(const std::vector<std::uint8_t>& data);
Sha256 sha256_of_string(const std::string& data);
std::string hex_digest(const Sha256& digest);

std::vector<std::uint8_t> read_file_bytes(const std::string& path);
void write_file_bytes(const std::string& path, const std::vector<std::uint8_t>& bytes);
std::string read_text_file(const std::string& path);
void write_text_file(const std::string& path, const std::string& text);
bool file_exists(const std::string& path);

// Append-only little-endian buffer writer.
class ByteWriter {
  public:
    void u8(std::uint8_t v) { bytes_.push_back(v); }
    void u32(std::uint32_t v) {
        for (int i = 0; i < 4; ++i) bytes_.push_back(static_cast<std::uint8_t>(v >> (8 * i)));
    }
    void u64(std::uint64_t v) {
        for (int i = 0; i < 8; ++i) bytes_.push_back(static_cast<std::uint8_t>(v >> (8 * i)));
    }
    void f32(float v) {
        std::uint32_t bits;
        std::memcpy(&bits, &v, sizeof bits);
        u32(bits);
    }
    void raw(const void* data, std::size_t size) {
        const auto* p = static_cast<const std::uint8_t*>(data);
        bytes_.insert(bytes_.end(), p, p + size);
    }
    void magic(const char tag[4]) { raw(tag, 4); }

    // Appends the SHA-256 of everything written so far.
    void hash_trailer() {
        const Sha256 digest = sha256(bytes_.data(), bytes_.size());
        raw(digest.data(), digest.size());
    }

    const std::vector<std::uint8_t>& bytes() const { return bytes_; }
    std::vector<std::uint8_t> take() { return std::move(bytes_); }

  private:
    std::vector<std::uint8_t> bytes_;
};

// Bounds-checked little-endian buffer reader. Throws FormatError on
// truncation so corrupt or short files fail loudly.
class ByteReader {
  public:
    ByteReader(const std::uint8_t* data, std::size_t size, std::string context)
        : data_(data), size_(size), context_(std::move(context)) {}
    explicit ByteReader(const std::vector<std::uint8_t>& bytes, std::string context = "buffer")
        : ByteReader(bytes.data(), bytes.size(), std::move(context)) {}

    std::uint8_t u8() { return take(1)[0]; }
    std::uint32_t u32() {
        const std::uint8_t* p = take(4);
        std::uint32_t v = 0;
        for (int i = 0; i < 4; ++i) v |= static_cast<std::uint32_t>(p[i]) << (8 * i);
        return v;
    }
    std::uint64_t u64() {
        const std::uint8_t* p = take(8);
        std::uint64_t v = 0;
        for (int i = 0; i < 8; ++i) v |= static_cast<std::uint64_t>(p[i]) << (8 * i);
        return v;
    }
    float f32() {
        const std::uint32_t bits = u32();
        float v;
        std::memcpy(&v, &bits, sizeof v);
        return v;
    }
    void raw(void* out, std::size_t size) { std::memcpy(out, take(size), size); }
    void expect_magic(const char tag[4]);
    void expect_end() const {
        if (offset_ != size_) {
            throw FormatError(context_ + ": " + std::to_string(size_ - offset_) +
                              " unexpected trailing bytes");
        }
    }

    std::size_t offset() const { return offset_; }
    std::size_t remaining() const { return size_ - offset_; }
    const std::string& context() const { return context_; }

  private:
    const std::uint8_t* take(std::size_t n) {
        if (offset_ + n > size_) {
            throw FormatError(context_ + ": truncated (needed " + std::to_string(n) +
                              " bytes at offset " + std::to_string(offset_) + ")");
        }
        const std::uint8_t* p = data_ + offset_;
        offset_ += n;
        return p;
    }

    const std::uint8_t* data_;
    std::size_t size_;
    std::size_t offset_ = 0;
    std::string context_;
};

// Splits a hashed artifact into payload and trailer, verifying the trailer.
// Returns the payload size. Throws IntegrityError on digest mismatch.
std::size_t verify_hash_trailer(const std::vector<std::uint8_t>& bytes, const std::string& context);

}  // namespace cmr
