#pragma once

// Shared plumbing: error types, deterministic RNG, FNV-1a hashing and
// little-endian binary IO. Everything here must behave identically across
// runs for a fixed seed; no std::random distributions are used because
// their output is implementation-defined.

#include <algorithm>
#include <cmath>
#include <cstdint>
#include <cstring>
#include <filesystem>
#include <istream>
#include <ostream>
#include <stdexcept>
#include <string>
#include <vector>

namespace ldd {

struct ShapeError : std::runtime_error {
    using std::runtime_error::runtime_error;
};

struct NumericError : std::runtime_error {
    using std::runtime_error::runtime_error;
};

struct ConfigError : std::runtime_error {
    using std::runtime_error::runtime_error;
};

struct ContractError : std::runtime_error {
    using std::runtime_error::runtime_error;
};

struct IoError : std::runtime_error {
    enum class Code {
        version_mismatch,
        env_hash_mismatch,
        vocab_hash_mismatch,
        checksum_mismatch,
        truncated,
        malformed,
    };
    Code code;
    IoError(Code c, const std::string& msg) : std::runtime_error(msg), code(c) {}
};

inline uint64_t splitmix64(uint64_t& x) {
    x += 0x9e3779b97f4a7c15ull;
    uint64_t z = x;
    z = (z ^ (z >> 30)) * 0xbf58476d1ce4e5b9ull;
    z = (z ^ (z >> 27)) * 0x94d049bb133111ebull;
    return z ^ (z >> 31);
}

// Derive an independent stream seed from up to three components.
inline uint64_t mix_seed(uint64_t a, uint64_t b = 0, uint64_t c = 0) {
    uint64_t x = a;
    uint64_t h = splitmix64(x);
    x ^= b + 0x9e3779b97f4a7c15ull + (h << 6) + (h >> 2);
    h ^= splitmix64(x);
    x ^= c + 0x9e3779b97f4a7c15ull + (h << 6) + (h >> 2);
    return splitmix64(x);
}

// xoshiro256++ seeded via splitmix64. Fully specified, portable output.
class Rng {
public:
    explicit Rng(uint64_t seed) {
        uint64_t x = seed;
        for (auto& s : s_) s = splitmix64(x);
    }

    uint64_t next() {
        const uint64_t result = rotl(s_[0] + s_[3], 23) + s_[0];
        const uint64_t t = s_[1] << 17;
        s_[2] ^= s_[0];
        s_[3] ^= s_[1];
        s_[1] ^= s_[2];
        s_[0] ^= s_[3];
        s_[2] ^= t;
        s_[3] = rotl(s_[3], 45);
        return result;
    }

    // [0, 1)
    double uniform() { return static_cast<double>(next() >> 11) * 0x1.0p-53; }

    double uniform(double lo, double hi) { return lo + (hi - lo) * uniform(); }

    // [0, n)
    int uniform_int(int n) {
        if (n <= 0) throw ContractError("uniform_int: n must be positive");
        uint64_t bound = UINT64_MAX - UINT64_MAX % static_cast<uint64_t>(n);
        uint64_t r;
        do {
            r = next();
        } while (r >= bound);
        return static_cast<int>(r % static_cast<uint64_t>(n));
    }

    // Box-Muller; one value per call, spare cached.
    double normal() {
        if (have_spare_) {
            have_spare_ = false;
            return spare_;
        }
        double u1 = 0.0;
        while (u1 == 0.0) u1 = uniform();
        double u2 = uniform();
        double mag = std::sqrt(-2.0 * std::log(u1));
        spare_ = mag * std::sin(2.0 * M_PI * u2);
        have_spare_ = true;
        return mag * std::cos(2.0 * M_PI * u2);
    }

    template <typename T>
    void shuffle(std::vector<T>& v) {
        for (size_t i = v.size(); i > 1; --i) {
            size_t j = static_cast<size_t>(uniform_int(static_cast<int>(i)));
            std::swap(v[i - 1], v[j]);
        }
    }

private:
    static uint64_t rotl(uint64_t x, int k) { return (x << k) | (x >> (64 - k)); }
    uint64_t s_[4];
    bool have_spare_ = false;
    double spare_ = 0.0;
};

class Fnv1a {
public:
    void update(const void* data, size_t len) {
        const auto* p = static_cast<const unsigned char*>(data);
        for (size_t i = 0; i < len; ++i) {
            h_ ^= p[i];
            h_ *= 0x100000001b3ull;
        }
    }
    void update(const std::string& s) { update(s.data(), s.size()); }
    template <typename T>
    void update_pod(const T& v) {
        static_assert(std::is_trivially_copyable_v<T>);
        update(&v, sizeof(v));
    }
    uint64_t digest() const { return h_; }

private:
    uint64_t h_ = 0xcbf29ce484222325ull;
};

inline uint64_t fnv1a(const std::string& s) {
    Fnv1a h;
    h.update(s);
    return h.digest();
}

// --- little-endian binary IO ------------------------------------------------

namespace io {

inline void write_bytes(std::ostream& os, const void* p, size_t n) {
    os.write(static_cast<const char*>(p), static_cast<std::streamsize>(n));
}

inline void read_bytes(std::istream& is, void* p, size_t n) {
    is.read(static_cast<char*>(p), static_cast<std::streamsize>(n));
    if (static_cast<size_t>(is.gcount()) != n)
        throw IoError(IoError::Code::truncated, "unexpected end of file");
}

template <typename T>
void write_pod(std::ostream& os, T v) {
    static_assert(std::is_trivially_copyable_v<T>);
    write_bytes(os, &v, sizeof(v));
}

template <typename T>
T read_pod(std::istream& is) {
    T v;
    read_bytes(is, &v, sizeof(v));
    return v;
}

inline void write_u8(std::ostream& os, uint8_t v) { write_pod(os, v); }
inline void write_u16(std::ostream& os, uint16_t v) { write_pod(os, v); }
inline void write_u32(std::ostream& os, uint32_t v) { write_pod(os, v); }
inline void write_u64(std::ostream& os, uint64_t v) { write_pod(os, v); }
inline void write_f64(std::ostream& os, double v) { write_pod(os, v); }
inline uint8_t read_u8(std::istream& is) { return read_pod<uint8_t>(is); }
inline uint16_t read_u16(std::istream& is) { return read_pod<uint16_t>(is); }
inline uint32_t read_u32(std::istream& is) { return read_pod<uint32_t>(is); }
inline uint64_t read_u64(std::istream& is) { return read_pod<uint64_t>(is); }
inline double read_f64(std::istream& is) { return read_pod<double>(is); }

inline void write_string(std::ostream& os, const std::string& s) {
    write_u32(os, static_cast<uint32_t>(s.size()));
    write_bytes(os, s.data(), s.size());
}

inline std::string read_string(std::istream& is) {
    uint32_t n = read_u32(is);
    std::string s(n, '\0');
    if (n > 0) read_bytes(is, s.data(), n);
    return s;
}

}  // namespace io

// Write-temp-then-rename so concurrent readers never see a partial file.
void write_file_atomic(const std::filesystem::path& path, const std::string& content);

// Shortest round-trip decimal representation (std::to_chars).
std::string format_double(double v);

}  // namespace ldd
