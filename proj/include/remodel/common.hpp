#pragma once

// Shared vocabulary: id ranges, model kinds, error types, binary IO helpers.

#include <algorithm>
#include <array>
#include <bit>
#include <cstdint>
#include <cstring>
#include <istream>
#include <ostream>
#include <span>
#include <stdexcept>
#include <string>
#include <string_view>
#include <type_traits>
#include <vector>

namespace remodel {

using Id = std::uint64_t;

/// Closed range [lo, hi] of record ids.
struct IdRange {
    Id lo = 0;
    Id hi = 0;

    constexpr std::uint64_t size() const noexcept { return hi - lo + 1; }
    constexpr bool contains(Id id) const noexcept { return lo <= id && id <= hi; }
    constexpr bool contains(const IdRange& o) const noexcept { return lo <= o.lo && o.hi <= hi; }
    // Closed ranges: sharing a single endpoint counts as overlap.
    constexpr bool overlaps(const IdRange& o) const noexcept { return lo <= o.hi && o.lo <= hi; }

    friend constexpr bool operator==(const IdRange&, const IdRange&) = default;
    friend constexpr auto operator<=>(const IdRange&, const IdRange&) = default;
};

inline std::string to_string(const IdRange& r) {
    return "[" + std::to_string(r.lo) + "," + std::to_string(r.hi) + "]";
}

inline std::ostream& operator<<(std::ostream& os, const IdRange& r) { return os << to_string(r); }

/// Parses "l:u" into a closed range.
inline IdRange parse_range(std::string_view text) {
    const auto colon = text.find(':');
    if (colon == std::string_view::npos)
        throw std::invalid_argument("range must be l:u, got '" + std::string(text) + "'");
    const auto lo = std::stoull(std::string(text.substr(0, colon)));
    const auto hi = std::stoull(std::string(text.substr(colon + 1)));
    if (lo > hi) throw std::invalid_argument("inverted range " + std::string(text));
    return {lo, hi};
}

enum class TargetKind : std::uint8_t { regression = 0, classification = 1 };

/// Kind of a materialized model. Catalogs are partitioned by kind.
enum class ModelKind : std::uint8_t { linreg = 0, nb_gaussian = 1, nb_multinomial = 2, logreg_chunk = 3 };

inline std::string to_string(ModelKind k) {
    switch (k) {
        case ModelKind::linreg: return "linreg";
        case ModelKind::nb_gaussian: return "nb-gaussian";
        case ModelKind::nb_multinomial: return "nb-multinomial";
        case ModelKind::logreg_chunk: return "logreg-chunk";
    }
    return "unknown";
}

inline ModelKind parse_model_kind(std::string_view s) {
    if (s == "linreg") return ModelKind::linreg;
    if (s == "nb-gaussian") return ModelKind::nb_gaussian;
    if (s == "nb-multinomial") return ModelKind::nb_multinomial;
    if (s == "logreg-chunk" || s == "logreg") return ModelKind::logreg_chunk;
    throw std::invalid_argument("unknown model kind '" + std::string(s) + "'");
}

inline std::string to_string(TargetKind k) {
    return k == TargetKind::regression ? "regression" : "classification";
}

inline TargetKind parse_target_kind(std::string_view s) {
    if (s == "regression") return TargetKind::regression;
    if (s == "classification") return TargetKind::classification;
    throw std::invalid_argument("unknown target kind '" + std::string(s) + "'");
}

// ---------------------------------------------------------------------------
// Errors

class Error : public std::runtime_error {
public:
    using std::runtime_error::runtime_error;
};

class DataError : public Error {
public:
    using Error::Error;
};

class RangeError : public Error {
public:
    using Error::Error;
};

class SingularSystemError : public Error {
public:
    using Error::Error;
};

/// A composition produced negative counts or does not cover the query.
class InvalidPlanError : public Error {
public:
    using Error::Error;
};

class DivergenceError : public Error {
public:
    using Error::Error;
};

class NoPlanError : public Error {
public:
    using Error::Error;
};

class CatalogError : public Error {
public:
    using Error::Error;
};

// ---------------------------------------------------------------------------
// Little-endian binary IO

namespace io {

template <class T>
    requires std::is_arithmetic_v<T>
inline void put(std::string& out, T value) {
    if constexpr (std::endian::native == std::endian::big && sizeof(T) > 1) {
        auto bits = std::bit_cast<std::array<unsigned char, sizeof(T)>>(value);
        std::reverse(bits.begin(), bits.end());
        out.append(reinterpret_cast<const char*>(bits.data()), sizeof(T));
    } else {
        char buf[sizeof(T)];
        std::memcpy(buf, &value, sizeof(T));
        out.append(buf, sizeof(T));
    }
}

inline void put_doubles(std::string& out, std::span<const double> values) {
    if constexpr (std::endian::native == std::endian::little) {
        out.append(reinterpret_cast<const char*>(values.data()), values.size_bytes());
    } else {
        for (double v : values) put(out, v);
    }
}

/// Bounds-checked cursor over a byte buffer.
class Reader {
public:
    explicit Reader(std::string_view bytes) : bytes_(bytes) {}

    template <class T>
        requires std::is_arithmetic_v<T>
    T get() {
        need(sizeof(T));
        T value;
        std::memcpy(&value, bytes_.data() + pos_, sizeof(T));
        if constexpr (std::endian::native == std::endian::big && sizeof(T) > 1) {
            auto bits = std::bit_cast<std::array<unsigned char, sizeof(T)>>(value);
            std::reverse(bits.begin(), bits.end());
            value = std::bit_cast<T>(bits);
        }
        pos_ += sizeof(T);
        return value;
    }

    void get_doubles(std::span<double> out) {
        need(out.size_bytes());
        if constexpr (std::endian::native == std::endian::little) {
            std::memcpy(out.data(), bytes_.data() + pos_, out.size_bytes());
            pos_ += out.size_bytes();
        } else {
            for (double& v : out) v = get<double>();
        }
    }

    std::size_t remaining() const noexcept { return bytes_.size() - pos_; }

private:
    void need(std::size_t n) const {
        if (bytes_.size() - pos_ < n) throw CatalogError("truncated payload");
    }

    std::string_view bytes_;
    std::size_t pos_ = 0;
};

}  // namespace io

/// 64-bit FNV-1a.
inline std::uint64_t fnv1a(std::string_view bytes) noexcept {
    std::uint64_t h = 0xcbf29ce484222325ULL;
    for (unsigned char c : bytes) {
        h ^= c;
        h *= 0x100000001b3ULL;
    }
    return h;
}

/// SplitMix64 step; used for seed derivation and the deterministic shuffles.
inline std::uint64_t splitmix64(std::uint64_t x) noexcept {
    x += 0x9e3779b97f4a7c15ULL;
    x = (x ^ (x >> 30)) * 0xbf58476d1ce4e5b9ULL;
    x = (x ^ (x >> 27)) * 0x94d049bb133111ebULL;
    return x ^ (x >> 31);
}

inline std::uint64_t hash_combine(std::uint64_t seed, std::uint64_t value) noexcept {
    return splitmix64(seed ^ splitmix64(value));
}

}  // namespace remodel
