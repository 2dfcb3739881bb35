#pragma once

#include <cmath>
#include <cstdint>
#include <random>
#include <vector>

namespace textmatch {

inline std::uint64_t splitmix64(std::uint64_t x) {
    x += 0x9e3779b97f4a7c15ULL;
    x = (x ^ (x >> 30)) * 0xbf58476d1ce4e5b9ULL;
    x = (x ^ (x >> 27)) * 0x94d049bb133111ebULL;
    return x ^ (x >> 31);
}

// Seed for an independent replicate stream: replicate r uses seed ⊕ r mixed
// through splitmix64, so streams are independent of scheduling order.
inline std::uint64_t replicate_seed(std::uint64_t seed, std::uint64_t replicate) {
    return splitmix64(seed ^ splitmix64(replicate + 1));
}

// mt19937_64 with hand-rolled distributions: std:: distributions are
// implementation-defined, which would break byte-identical reproducibility.
class Rng {
public:
    explicit Rng(std::uint64_t seed) : engine_(seed) {}

    std::uint64_t next_u64() { return engine_(); }

    // Uniform in [0, 1) with 53-bit resolution.
    double uniform01() { return static_cast<double>(engine_() >> 11) * 0x1.0p-53; }

    // Uniform integer in [0, n). Rejection sampling, unbiased.
    std::uint64_t below(std::uint64_t n) {
        if (n <= 1) return 0;
        const std::uint64_t limit = UINT64_MAX - UINT64_MAX % n;
        std::uint64_t x;
        do {
            x = engine_();
        } while (x >= limit);
        return x % n;
    }

    // Standard normal via Box-Muller (no state carried between calls).
    double normal() {
        double u1 = uniform01();
        while (u1 <= 0.0) u1 = uniform01();
        const double u2 = uniform01();
        return std::sqrt(-2.0 * std::log(u1)) * std::cos(2.0 * M_PI * u2);
    }

    // Gamma(shape, 1) via Marsaglia-Tsang; shape > 0.
    double gamma(double shape) {
        if (shape < 1.0) {
            const double u = uniform01();
            return gamma(shape + 1.0) * std::pow(u > 0 ? u : 1e-300, 1.0 / shape);
        }
        const double d = shape - 1.0 / 3.0;
        const double c = 1.0 / std::sqrt(9.0 * d);
        for (;;) {
            double x, v;
            do {
                x = normal();
                v = 1.0 + c * x;
            } while (v <= 0.0);
            v = v * v * v;
            const double u = uniform01();
            if (u < 1.0 - 0.0331 * x * x * x * x) return d * v;
            if (u > 0 && std::log(u) < 0.5 * x * x + d * (1.0 - v + std::log(v))) return d * v;
        }
    }

    std::vector<double> dirichlet(const std::vector<double>& alpha) {
        std::vector<double> out(alpha.size());
        double total = 0.0;
        for (std::size_t k = 0; k < alpha.size(); ++k) {
            out[k] = gamma(alpha[k]);
            total += out[k];
        }
        if (total <= 0.0) total = 1.0;
        for (double& v : out) v /= total;
        return out;
    }

    // Partial Fisher-Yates: k distinct indices from [0, n), in draw order.
    std::vector<int> sample_without_replacement(int n, int k) {
        std::vector<int> idx(n);
        for (int i = 0; i < n; ++i) idx[i] = i;
        if (k > n) k = n;
        for (int i = 0; i < k; ++i) {
            const int j = i + static_cast<int>(below(static_cast<std::uint64_t>(n - i)));
            std::swap(idx[i], idx[j]);
        }
        idx.resize(k);
        return idx;
    }

private:
    std::mt19937_64 engine_;
};

}  // namespace textmatch
