#include "cmr/io.hpp"

#include <openssl/evp.h>

#include <cstdio>
#include <filesystem>
#include <fstream>

namespace cmr {

Sha256 sha256(const std::uint8_t* data, std::size_t size) {
    Sha256 digest{};
    unsigned int len = 0;
    if (EVP_Digest(data, size, digest.data(), &len, EVP_sha256(), nullptr) != 1 || len != 32) {
        throw IoError("sha256 computation failed");
    }
    return digest;
}

Sha256 sha256(const std::vector<std::uint8_t>& data) { return sha256(data.data(), data.size()); }

Sha256 sha256_of_string(const std::string& data) {
    return sha256(reinterpret_cast<const std::uint8_t*>(data.data()), data.size());
}

std::string hex_digest(const Sha256& digest) {
    static const char* hex = "0123456789abcdef";
    std::string out;
    out.reserve(64);
    for (std::uint8_t b : digest) {
        out.push_back(hex[b >> 4]);
        out.push_back(hex[b & 0xf]);
    }
    return out;
}

std::vector<std::uint8_t> read_file_bytes(const std::string& path) {
    std::ifstream in(path, std::ios::binary);
    if (!in) throw IoError("cannot open file: " + path);
    std::vector<std::uint8_t> bytes;
    char buf[1 << 16];
    // Chunked reads keep pipes and other non-seekable files working.
    while (in.read(buf, sizeof(buf)) || in.gcount() > 0) {
        bytes.insert(bytes.end(), buf, buf + in.gcount());
    }
    if (in.bad()) throw IoError("failed to read file: " + path);
    return bytes;
}

void write_file_bytes(const std::string& path, const std::vector<std::uint8_t>& bytes) {
    std::ofstream out(path, std::ios::binary | std::ios::trunc);
    if (!out) throw IoError("cannot open file for writing: " + path);
    if (!bytes.empty()) {
        out.write(reinterpret_cast<const char*>(bytes.data()), static_cast<std::streamsize>(bytes.size()));
    }
    if (!out) throw IoError("failed to write file: " + path);
}

std::string read_text_file(const std::string& path) {
    const auto bytes = read_file_bytes(path);
    return std::string(bytes.begin(), bytes.end());
}

void write_text_file(const std::string& path, const std::string& text) {
    std::vector<std::uint8_t> bytes(text.begin(), text.end());
    write_file_bytes(path, bytes);
}

bool file_exists(const std::string& path) {
    std::error_code ec;
    return std::filesystem::exists(path, ec);
}

void ByteReader::expect_magic(const char tag[4]) {
    char got[4];
    raw(got, 4);
    if (std::memcmp(got, tag, 4) != 0) {
        throw FormatError(context_ + ": bad magic, expected '" + std::string(tag, 4) + "'");
    }
}

std::size_t verify_hash_trailer(const std::vector<std::uint8_t>& bytes, const std::string& context) {
    if (bytes.size() < 32) throw FormatError(context + ": too short to hold a hash trailer");
    const std::size_t payload = bytes.size() - 32;
    const Sha256 expected = sha256(bytes.data(), payload);
    if (std::memcmp(expected.data(), bytes.data() + payload, 32) != 0) {
        throw IntegrityError(context + ": content hash mismatch");
    }
    return payload;
}

}  // namespace cmr
