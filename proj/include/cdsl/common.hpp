#ifndef CDSL_COMMON_HPP
#define CDSL_COMMON_HPP

#include <cstdint>
#include <stdexcept>
#include <string>

namespace cdsl {

// Config/graph construction problems and malformed inputs. CLI exit code 1.
struct ConfigError : std::runtime_error {
    using std::runtime_error::runtime_error;
};

// Dataset ingestion problems (missing files, bad PNGs, size mismatches). CLI exit code 1.
struct DataError : std::runtime_error {
    using std::runtime_error::runtime_error;
};

// Numeric failures (NaN/Inf during forward or training). CLI exit code 2.
struct NumericError : std::runtime_error {
    using std::runtime_error::runtime_error;
};

inline std::uint64_t splitmix64(std::uint64_t x) {
    x += 0x9e3779b97f4a7c15ull;
    x = (x ^ (x >> 30)) * 0xbf58476d1ce4e5b9ull;
    x = (x ^ (x >> 27)) * 0x94d049bb133111ebull;
    return x ^ (x >> 31);
}

// Independent deterministic seed streams from one experiment seed.
inline std::uint32_t derive_seed(std::uint32_t base, std::uint32_t salt) {
    return static_cast<std::uint32_t>(splitmix64((std::uint64_t(base) << 32) | salt));
}

} // namespace cdsl

#endif
