#pragma once

#include <Eigen/Dense>

#include <cmath>
#include <cstdint>
#include <random>
#include <stdexcept>
#include <string>
#include <string_view>
#include <vector>

namespace scott {

// Row-major so that a (T x D) block of a time series is contiguous per step.
template <typename S>
using Mat = Eigen::Matrix<S, Eigen::Dynamic, Eigen::Dynamic, Eigen::RowMajor>;
template <typename S>
using RowVec = Eigen::Matrix<S, 1, Eigen::Dynamic>;
template <typename S>
using ColVec = Eigen::Matrix<S, Eigen::Dynamic, 1>;

using MatD = Mat<double>;
using MatF = Mat<float>;

struct Error : std::runtime_error {
    using std::runtime_error::runtime_error;
};
struct ShapeError : Error {
    using Error::Error;
};
struct FormatError : Error {
    using Error::Error;
};
struct ParseError : Error {
    using Error::Error;
};
struct ConfigError : Error {
    using Error::Error;
};
struct StateError : Error {
    using Error::Error;
};

inline void require_shape(bool ok, std::string_view what) {
    if (!ok) throw ShapeError(std::string("shape mismatch: ") + std::string(what));
}

/// Seeded random source. All randomness in the library is drawn from one of
/// these; no call ever seeds from the wall clock.
class Rng {
public:
    explicit Rng(std::uint64_t seed = 0) : seed_(seed), engine_(seed) {}

    std::uint64_t seed() const { return seed_; }
    std::mt19937_64& engine() { return engine_; }

    double normal(double mean = 0.0, double stddev = 1.0) {
        std::normal_distribution<double> d(mean, stddev);
        return d(engine_);
    }
    /// Uniform on the open interval (lo, hi).
    double uniform_open(double lo, double hi) {
        std::uniform_real_distribution<double> d(lo, hi);
        double v = d(engine_);
        while (v <= lo) v = d(engine_);
        return v;
    }
    double uniform(double lo, double hi) {
        std::uniform_real_distribution<double> d(lo, hi);
        return d(engine_);
    }
    std::size_t index(std::size_t n) {
        std::uniform_int_distribution<std::size_t> d(0, n - 1);
        return d(engine_);
    }
    bool bernoulli(double p) {
        std::bernoulli_distribution d(p);
        return d(engine_);
    }
    std::uint64_t next() { return engine_(); }

    /// Independent child stream keyed by name (splitmix of seed and a hash).
    Rng child(std::string_view name) const { return Rng(derive_seed(seed_, name)); }

    static std::uint64_t derive_seed(std::uint64_t seed, std::string_view name) {
        std::uint64_t h = 1469598103934665603ULL;
        for (unsigned char c : name) {
            h ^= c;
            h *= 1099511628211ULL;
        }
        return splitmix(seed ^ splitmix(h));
    }
    static std::uint64_t splitmix(std::uint64_t x) {
        x += 0x9e3779b97f4a7c15ULL;
        x = (x ^ (x >> 30)) * 0xbf58476d1ce4e5b9ULL;
        x = (x ^ (x >> 27)) * 0x94d049bb133111ebULL;
        return x ^ (x >> 31);
    }

private:
    std::uint64_t seed_;
    std::mt19937_64 engine_;
};

template <typename S>
bool all_finite(const Mat<S>& m) {
    return m.allFinite();
}

} // namespace scott
