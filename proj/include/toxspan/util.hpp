// Shared plumbing: error types, UTF-8 handling, hashing, binary IO.
#pragma once

#include <cstdint>
#include <cstring>
#include <fstream>
#include <stdexcept>
#include <string>
#include <string_view>
#include <vector>

namespace toxspan {

// ---------------------------------------------------------------------------
// Errors. Each stage throws a named type; the CLI maps them to exit messages.
// ---------------------------------------------------------------------------

struct Error : std::runtime_error {
    using std::runtime_error::runtime_error;
};

struct ParseError : Error { using Error::Error; };        // malformed input row
struct ValidationError : Error { using Error::Error; };   // well-formed but inconsistent data
struct FormatError : Error { using Error::Error; };       // bad file layout (names the line)
struct IntegrityError : Error { using Error::Error; };    // artifact does not match its header
struct ConfigError : Error { using Error::Error; };       // inconsistent configuration
struct UsageError : Error { using Error::Error; };        // caller broke an API precondition
struct EnvironmentError : Error { using Error::Error; };  // missing checkpoint / path / env
struct TrainingError : Error { using Error::Error; };     // divergence during optimization
struct AlignmentError : Error { using Error::Error; };    // prediction/gold id mismatch

// ---------------------------------------------------------------------------
// UTF-8. All span offsets in this toolkit count Unicode code points of the
// original text, so decoding has to be explicit rather than byte-based.
// ---------------------------------------------------------------------------

namespace utf8 {

// One decoded code point plus where its bytes live in the source string.
struct Cp {
    char32_t value;
    uint32_t byte_off;
    uint32_t byte_len;
};

// Decodes a string into code points. Invalid bytes are kept as single
// one-byte units so that byte slices of the original text stay recoverable.
inline std::vector<Cp> decode(std::string_view s) {
    std::vector<Cp> out;
    out.reserve(s.size());
    size_t i = 0;
    while (i < s.size()) {
        unsigned char b0 = static_cast<unsigned char>(s[i]);
        uint32_t len = 1;
        char32_t cp = b0;
        if (b0 < 0x80) {
            // ascii
        } else if ((b0 >> 5) == 0x6 && i + 1 < s.size() &&
                   (static_cast<unsigned char>(s[i + 1]) & 0xC0) == 0x80) {
            cp = (char32_t(b0 & 0x1F) << 6) |
                 (static_cast<unsigned char>(s[i + 1]) & 0x3F);
            len = 2;
        } else if ((b0 >> 4) == 0xE && i + 2 < s.size() &&
                   (static_cast<unsigned char>(s[i + 1]) & 0xC0) == 0x80 &&
                   (static_cast<unsigned char>(s[i + 2]) & 0xC0) == 0x80) {
            cp = (char32_t(b0 & 0x0F) << 12) |
                 (char32_t(static_cast<unsigned char>(s[i + 1]) & 0x3F) << 6) |
                 (static_cast<unsigned char>(s[i + 2]) & 0x3F);
            len = 3;
        } else if ((b0 >> 3) == 0x1E && i + 3 < s.size() &&
                   (static_cast<unsigned char>(s[i + 1]) & 0xC0) == 0x80 &&
                   (static_cast<unsigned char>(s[i + 2]) & 0xC0) == 0x80 &&
                   (static_cast<unsigned char>(s[i + 3]) & 0xC0) == 0x80) {
            cp = (char32_t(b0 & 0x07) << 18) |
                 (char32_t(static_cast<unsigned char>(s[i + 1]) & 0x3F) << 12) |
                 (char32_t(static_cast<unsigned char>(s[i + 2]) & 0x3F) << 6) |
                 (static_cast<unsigned char>(s[i + 3]) & 0x3F);
            len = 4;
        }
        out.push_back(Cp{cp, static_cast<uint32_t>(i), len});
        i += len;
    }
    return out;
}

inline void append(std::string& out, char32_t cp) {
    if (cp < 0x80) {
        out.push_back(static_cast<char>(cp));
    } else if (cp < 0x800) {
        out.push_back(static_cast<char>(0xC0 | (cp >> 6)));
        out.push_back(static_cast<char>(0x80 | (cp & 0x3F)));
    } else if (cp < 0x10000) {
        out.push_back(static_cast<char>(0xE0 | (cp >> 12)));
        out.push_back(static_cast<char>(0x80 | ((cp >> 6) & 0x3F)));
        out.push_back(static_cast<char>(0x80 | (cp & 0x3F)));
    } else {
        out.push_back(static_cast<char>(0xF0 | (cp >> 18)));
        out.push_back(static_cast<char>(0x80 | ((cp >> 12) & 0x3F)));
        out.push_back(static_cast<char>(0x80 | ((cp >> 6) & 0x3F)));
        out.push_back(static_cast<char>(0x80 | (cp & 0x3F)));
    }
}

inline std::string encode(const std::vector<char32_t>& cps) {
    std::string out;
    out.reserve(cps.size());
    for (char32_t cp : cps) append(out, cp);
    return out;
}

/// Number of code points in a UTF-8 string.
inline size_t length(std::string_view s) { return decode(s).size(); }

/// Slice [start, end) in code-point units, returned as UTF-8 bytes.
inline std::string slice(std::string_view s, size_t start, size_t end) {
    auto cps = decode(s);
    if (start >= cps.size() || start >= end) return {};
    if (end > cps.size()) end = cps.size();
    size_t b0 = cps[start].byte_off;
    size_t b1 = cps[end - 1].byte_off + cps[end - 1].byte_len;
    return std::string(s.substr(b0, b1 - b0));
}

// Unicode whitespace, the separator class used by the tokenizer.
inline bool is_space(char32_t cp) {
    switch (cp) {
        case U' ': case U'\t': case U'\n': case U'\r':
        case 0x0B: case 0x0C: case 0x85: case 0xA0:
        case 0x1680: case 0x2028: case 0x2029: case 0x202F:
        case 0x205F: case 0x3000:
            return true;
        default:
            return cp >= 0x2000 && cp <= 0x200A;
    }
}

inline bool is_ascii_letter(char32_t cp) {
    return (cp >= U'A' && cp <= U'Z') || (cp >= U'a' && cp <= U'z');
}

inline bool is_ascii_punct(char32_t cp) {
    return (cp >= 0x21 && cp <= 0x2F) || (cp >= 0x3A && cp <= 0x40) ||
           (cp >= 0x5B && cp <= 0x60) || (cp >= 0x7B && cp <= 0x7E);
}

}  // namespace utf8

// ---------------------------------------------------------------------------
// FNV-1a 64-bit, used to fingerprint vocabularies in file headers.
// ---------------------------------------------------------------------------

inline uint64_t fnv1a64(std::string_view data, uint64_t h = 0xcbf29ce484222325ull) {
    for (unsigned char c : data) {
        h ^= c;
        h *= 0x100000001b3ull;
    }
    return h;
}

inline std::string to_hex(uint64_t v) {
    static const char* digits = "0123456789abcdef";
    std::string out(16, '0');
    for (int i = 15; i >= 0; --i) {
        out[static_cast<size_t>(i)] = digits[v & 0xF];
        v >>= 4;
    }
    return out;
}

// ---------------------------------------------------------------------------
// Little-endian binary IO for artifact files.
// ---------------------------------------------------------------------------

namespace bin {

inline void write_u32(std::ostream& os, uint32_t v) {
    unsigned char b[4] = {static_cast<unsigned char>(v), static_cast<unsigned char>(v >> 8),
                          static_cast<unsigned char>(v >> 16), static_cast<unsigned char>(v >> 24)};
    os.write(reinterpret_cast<const char*>(b), 4);
}

inline uint32_t read_u32(std::istream& is) {
    unsigned char b[4];
    is.read(reinterpret_cast<char*>(b), 4);
    if (!is) throw FormatError("unexpected end of file while reading u32");
    return uint32_t(b[0]) | (uint32_t(b[1]) << 8) | (uint32_t(b[2]) << 16) | (uint32_t(b[3]) << 24);
}

template <typename T>
void write_array(std::ostream& os, const std::vector<T>& v) {
    static_assert(std::is_trivially_copyable_v<T>);
    os.write(reinterpret_cast<const char*>(v.data()),
             static_cast<std::streamsize>(v.size() * sizeof(T)));
}

template <typename T>
void read_array(std::istream& is, std::vector<T>& v, size_t count) {
    static_assert(std::is_trivially_copyable_v<T>);
    v.resize(count);
    is.read(reinterpret_cast<char*>(v.data()), static_cast<std::streamsize>(count * sizeof(T)));
    if (!is) throw FormatError("unexpected end of file while reading array");
}

}  // namespace bin

inline std::string read_text_file(const std::string& path) {
    std::ifstream in(path, std::ios::binary);
    if (!in) throw EnvironmentError("cannot open file: " + path);
    std::string data((std::istreambuf_iterator<char>(in)), std::istreambuf_iterator<char>());
    return data;
}

inline void write_text_file(const std::string& path, std::string_view content) {
    std::ofstream out(path, std::ios::binary);
    if (!out) throw EnvironmentError("cannot write file: " + path);
    out.write(content.data(), static_cast<std::streamsize>(content.size()));
}

}  // namespace toxspan
