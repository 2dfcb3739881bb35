#pragma once

#include <cstdint>
#include <string>

namespace textmatch {

inline std::uint64_t fnv1a64(const void* data, std::size_t len,
                             std::uint64_t h = 0xcbf29ce484222325ULL) {
    const auto* p = static_cast<const unsigned char*>(data);
    for (std::size_t i = 0; i < len; ++i) {
        h ^= p[i];
        h *= 0x100000001b3ULL;
    }
    return h;
}

inline std::uint64_t fnv1a64(const std::string& s) { return fnv1a64(s.data(), s.size()); }

std::string fnv1a64_hex(const std::string& s);
std::string fnv1a64_file_hex(const std::string& path);

}  // namespace textmatch
