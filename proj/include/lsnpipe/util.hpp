#pragma once

#include <cstdint>
#include <filesystem>
#include <span>
#include <stdexcept>
#include <string>
#include <vector>

namespace lsnpipe {

// Invalid user input (bad config, bad file, contract violation at an API
// boundary). The CLI maps this to exit code 2.
struct ConfigError : std::runtime_error {
    using std::runtime_error::runtime_error;
};

// Failure during execution (I/O, divergence, corrupt artifact). Exit code 3.
struct RuntimeFailure : std::runtime_error {
    using std::runtime_error::runtime_error;
};

inline void require(bool cond, const std::string& msg) {
    if (!cond) throw ConfigError(msg);
}

// FNV-1a, used for config hashing and checkpoint checksums.
inline uint64_t fnv1a(std::span<const unsigned char> bytes, uint64_t h = 0xcbf29ce484222325ull) {
    for (unsigned char b : bytes) {
        h ^= b;
        h *= 0x100000001b3ull;
    }
    return h;
}

inline uint64_t fnv1a(const std::string& s, uint64_t h = 0xcbf29ce484222325ull) {
    return fnv1a(std::span<const unsigned char>(
                     reinterpret_cast<const unsigned char*>(s.data()), s.size()),
                 h);
}

std::string read_file(const std::filesystem::path& p);
void write_file(const std::filesystem::path& p, const std::string& content);

// Splits on a delimiter without collapsing empty fields.
std::vector<std::string> split(const std::string& s, char delim);

// Escapes tab, newline, carriage return and backslash; inverse pair used by
// the line-oriented record formats.
std::string escape_field(const std::string& s);
std::string unescape_field(const std::string& s);

std::string hex64(uint64_t v);

}  // namespace lsnpipe
