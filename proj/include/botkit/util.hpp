#pragma once

#include <cstdint>
#include <fstream>
#include <sstream>
#include <stdexcept>
#include <string>
#include <vector>

namespace botkit {

// splitmix64; used to derive independent RNG streams from (seed, slice, fold, ...)
inline std::uint64_t mix64(std::uint64_t x) {
    x += 0x9e3779b97f4a7c15ull;
    x = (x ^ (x >> 30)) * 0xbf58476d1ce4e5b9ull;
    x = (x ^ (x >> 27)) * 0x94d049bb133111ebull;
    return x ^ (x >> 31);
}

inline std::uint64_t mix_seed(std::uint64_t seed, std::uint64_t a, std::uint64_t b = 0, std::uint64_t c = 0) {
    return mix64(mix64(mix64(mix64(seed) ^ a) ^ b) ^ c);
}

inline std::uint64_t fnv1a(const std::string& s) {
    std::uint64_t h = 1469598103934665603ull;
    for (unsigned char ch : s) {
        h ^= ch;
        h *= 1099511628211ull;
    }
    return h;
}

inline std::string trim(const std::string& s) {
    std::size_t b = s.find_first_not_of(" \t\r\n");
    if (b == std::string::npos) return "";
    std::size_t e = s.find_last_not_of(" \t\r\n");
    return s.substr(b, e - b + 1);
}

inline std::vector<std::string> split(const std::string& s, char sep) {
    std::vector<std::string> out;
    std::string cur;
    for (char ch : s) {
        if (ch == sep) {
            out.push_back(cur);
            cur.clear();
        } else {
            cur.push_back(ch);
        }
    }
    out.push_back(cur);
    return out;
}

inline std::string read_text_file(const std::string& path) {
    std::ifstream in(path, std::ios::binary);
    if (!in) throw std::runtime_error("cannot open file: " + path);
    std::ostringstream ss;
    ss << in.rdbuf();
    return ss.str();
}

inline void write_text_file(const std::string& path, const std::string& text) {
    std::ofstream out(path, std::ios::binary);
    if (!out) throw std::runtime_error("cannot write file: " + path);
    out << text;
}

// Exact channel scaling knob: channels(c) = c * num / den, rejected when fractional.
struct Rational {
    long num = 1;
    long den = 1;

    static Rational parse(const std::string& text) {
        auto slash = text.find('/');
        Rational r;
        if (slash == std::string::npos) {
            r.num = std::stol(text);
            r.den = 1;
        } else {
            r.num = std::stol(text.substr(0, slash));
            r.den = std::stol(text.substr(slash + 1));
        }
        if (r.num <= 0 || r.den <= 0) throw std::invalid_argument("width multiplier must be positive: " + text);
        return r;
    }

    std::string str() const {
        return den == 1 ? std::to_string(num) : std::to_string(num) + "/" + std::to_string(den);
    }

    std::size_t scale(std::size_t base) const {
        long v = static_cast<long>(base) * num;
        if (v % den != 0)
            throw std::invalid_argument("width multiplier " + str() + " gives non-integer channel count for " +
                                        std::to_string(base));
        return static_cast<std::size_t>(v / den);
    }
};

}  // namespace botkit
