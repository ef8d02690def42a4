#pragma once

#include <cstdint>
#include <stdexcept>
#include <string>
#include <vector>

namespace jcut {

// Error taxonomy. The CLI maps these onto exit codes:
//   UsageError -> 2, InvalidInput/IoError -> 3, ConfigError/TrainingDiverged -> 4.
struct Error : std::runtime_error {
    using std::runtime_error::runtime_error;
};
struct InvalidInput : Error {
    using Error::Error;
};
struct DomainError : Error {
    using Error::Error;
};
struct ConfigError : Error {
    using Error::Error;
};
struct IoError : Error {
    using Error::Error;
};
struct UsageError : Error {
    using Error::Error;
};
struct TrainingDiverged : Error {
    using Error::Error;
};

// FNV-1a, used to derive rng stream ids from names.
inline uint64_t fnv1a(const std::string& s) {
    uint64_t h = 1469598103934665603ull;
    for (unsigned char c : s) {
        h ^= c;
        h *= 1099511628211ull;
    }
    return h;
}

inline uint64_t splitmix64(uint64_t z) {
    z += 0x9e3779b97f4a7c15ull;
    z = (z ^ (z >> 30)) * 0xbf58476d1ce4e5b9ull;
    z = (z ^ (z >> 27)) * 0x94d049bb133111ebull;
    return z ^ (z >> 31);
}

// Counter-based rng: every draw is a pure function of (seed, stream, counter),
// so training can resume bit-compatibly from a step index alone.
class Rng {
public:
    explicit Rng(uint64_t seed) : seed_(seed) {}

    uint64_t seed() const { return seed_; }

    uint64_t u64(uint64_t stream, uint64_t counter) const {
        uint64_t z = splitmix64(seed_ ^ (stream * 0x9e3779b97f4a7c15ull));
        return splitmix64(z ^ splitmix64(counter));
    }

    // [0, 1)
    double uniform(uint64_t stream, uint64_t counter) const {
        return (u64(stream, counter) >> 11) * 0x1.0p-53;
    }

    // uniform integer in [0, bound)
    uint64_t below(uint64_t stream, uint64_t counter, uint64_t bound) const {
        return static_cast<uint64_t>(uniform(stream, counter) * static_cast<double>(bound)) % bound;
    }

    // Standard normal via Box-Muller on counters (2c, 2c+1).
    double normal(uint64_t stream, uint64_t counter) const;

private:
    uint64_t seed_;
};

uint32_t crc32_bytes(const void* data, size_t size);
uint32_t crc32_file(const std::string& path);

std::string read_text_file(const std::string& path);
void write_text_file(const std::string& path, const std::string& text);
std::vector<float> read_f32le_file(const std::string& path);
void write_f32le_file(const std::string& path, const float* data, size_t count);

}  // namespace jcut
