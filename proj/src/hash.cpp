#include "textmatch/hash.hpp"

#include <cstdio>
#include <fstream>
#include <sstream>

#include "textmatch/errors.hpp"

namespace textmatch {

std::string fnv1a64_hex(const std::string& s) {
    char buf[17];
    std::snprintf(buf, sizeof(buf), "%016llx",
                  static_cast<unsigned long long>(fnv1a64(s)));
    return buf;
}

std::string fnv1a64_file_hex(const std::string& path) {
    std::ifstream in(path, std::ios::binary);
    if (!in) throw Error("cannot open file for hashing: " + path);
    std::ostringstream ss;
    ss << in.rdbuf();
    return fnv1a64_hex(ss.str());
}

}  // namespace textmatch
