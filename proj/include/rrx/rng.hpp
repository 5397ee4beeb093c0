#pragma once

#include <cmath>
#include <cstdint>

#include <Eigen/Dense>

namespace rrx {

// Counter-based splittable stream: the state is a pure function of (seed, stream),
// so replication r always sees the same draws no matter how work is spread over
// threads. Core generator is splitmix64.
class RngStream {
public:
    RngStream(std::uint64_t seed, std::uint64_t stream) {
        state_ = mix(seed + 0x9e3779b97f4a7c15ULL * (stream + 1));
        state_ = mix(state_ ^ 0xbf58476d1ce4e5b9ULL);
    }

    std::uint64_t next_u64() {
        state_ += 0x9e3779b97f4a7c15ULL;
        return mix(state_);
    }

    // uniform double in [2^-53, 1]; never 0 so logs are safe
    double uniform() {
        return static_cast<double>((next_u64() >> 11) + 1) * 0x1.0p-53;
    }

    // Box-Muller with a cached spare; deterministic draw sequence per stream
    double normal() {
        if (have_spare_) {
            have_spare_ = false;
            return spare_;
        }
        const double u1 = uniform();
        const double u2 = uniform();
        const double r = std::sqrt(-2.0 * std::log(u1));
        const double a = 6.283185307179586476925286766559 * u2;
        spare_ = r * std::sin(a);
        have_spare_ = true;
        return r * std::cos(a);
    }

    // index into a cumulative probability vector (last entry ~ 1)
    int categorical(const Eigen::VectorXd& cumulative) {
        const double u = uniform();
        const int n = static_cast<int>(cumulative.size());
        int lo = 0, hi = n - 1;
        while (lo < hi) {
            const int mid = (lo + hi) / 2;
            if (u <= cumulative[mid]) hi = mid; else lo = mid + 1;
        }
        return lo;
    }

private:
    static std::uint64_t mix(std::uint64_t z) {
        z ^= z >> 30; z *= 0xbf58476d1ce4e5b9ULL;
        z ^= z >> 27; z *= 0x94d049bb133111ebULL;
        z ^= z >> 31;
        return z;
    }

    std::uint64_t state_ = 0;
    bool have_spare_ = false;
    double spare_ = 0.0;
};

// standard normal CDF through erfc; relative accuracy near machine precision
inline double normal_cdf(double x) {
    return 0.5 * std::erfc(-x * 0.70710678118654752440084436210485);
}

}  // namespace rrx
