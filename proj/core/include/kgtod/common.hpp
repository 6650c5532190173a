#pragma once
// Shared error types and a deterministic RNG.
//
// All randomness in the library flows through Rng so that results are
// bit-reproducible across platforms: std::uniform_*_distribution is
// implementation-defined, so we only rely on the fixed mt19937_64 stream.

#include <cmath>
#include <cstdint>
#include <random>
#include <stdexcept>
#include <string>
#include <vector>

namespace kgtod {

// Input files or argument values that fail validation. CLI exit code 2.
struct ValidationError : std::runtime_error {
    using std::runtime_error::runtime_error;
};

// Malformed serialized input (JSON, checkpoint). Carries a byte offset
// when known. CLI exit code 2.
struct ParseError : std::runtime_error {
    std::size_t byte_offset = 0;
    explicit ParseError(const std::string& msg, std::size_t offset = 0)
        : std::runtime_error(msg), byte_offset(offset) {}
};

// Bad configuration (empty corpus, zero dialogues requested, ...). Exit 2.
struct ConfigError : std::runtime_error {
    using std::runtime_error::runtime_error;
};

// A caller broke an API precondition. Exit 3.
struct ContractError : std::logic_error {
    using std::logic_error::logic_error;
};

// Optimization failed (divergence, single-class data, ...). Exit 3.
struct TrainingError : std::runtime_error {
    using std::runtime_error::runtime_error;
};

// Deterministic RNG. Wraps mt19937_64 (whose output stream is fixed by the
// standard) and implements its own value transforms.
class Rng {
public:
    explicit Rng(std::uint64_t seed) : gen_(seed) {}

    std::uint64_t next_u64() { return gen_(); }

    // Uniform in [0, n). Rejection sampling, no modulo bias.
    std::uint64_t uniform(std::uint64_t n) {
        if (n == 0) throw ContractError("Rng::uniform: n must be > 0");
        const std::uint64_t limit = UINT64_MAX - UINT64_MAX % n;
        std::uint64_t v = gen_();
        while (v >= limit) v = gen_();
        return v % n;
    }

    // Uniform double in [0, 1) with 53 bits of entropy.
    double uniform_real() {
        return static_cast<double>(gen_() >> 11) * 0x1.0p-53;
    }

    bool bernoulli(double p) { return uniform_real() < p; }

    // Standard normal via Box-Muller.
    double gaussian() {
        if (have_spare_) {
            have_spare_ = false;
            return spare_;
        }
        double u1 = uniform_real();
        double u2 = uniform_real();
        while (u1 <= 1e-300) u1 = uniform_real();
        const double r = std::sqrt(-2.0 * std::log(u1));
        const double theta = 6.283185307179586476925286766559 * u2;
        spare_ = r * std::sin(theta);
        have_spare_ = true;
        return r * std::cos(theta);
    }

    template <typename T>
    const T& pick(const std::vector<T>& v) {
        if (v.empty()) throw ContractError("Rng::pick: empty vector");
        return v[uniform(v.size())];
    }

    // Fisher-Yates.
    template <typename T>
    void shuffle(std::vector<T>& v) {
        for (std::size_t i = v.size(); i > 1; --i) {
            std::swap(v[i - 1], v[uniform(i)]);
        }
    }

private:
    std::mt19937_64 gen_;
    double spare_ = 0.0;
    bool have_spare_ = false;
};

}  // namespace kgtod
