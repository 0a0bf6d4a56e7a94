#pragma once

// Reference implementations written independently of the library, used to
// cross-check its results. Everything here is deliberately naive: plain
// loops, no shared code with the implementations under test.

#include <cmath>
#include <cstdint>
#include <vector>

namespace oracles {

// C = A(m x k) * B(k x n), triple loop.
inline std::vector<double> naive_matmul(const std::vector<double>& a, const std::vector<double>& b,
                                        int m, int k, int n) {
    std::vector<double> c(static_cast<std::size_t>(m) * n, 0.0);
    for (int i = 0; i < m; ++i)
        for (int j = 0; j < n; ++j) {
            double s = 0.0;
            for (int p = 0; p < k; ++p) s += a[i * k + p] * b[p * n + j];
            c[i * n + j] = s;
        }
    return c;
}

// Two-pass scaled dot-product attention: softmax row by row, then weighted sum.
inline std::vector<double> naive_attention(const std::vector<double>& q,
                                           const std::vector<double>& k,
                                           const std::vector<double>& v, int tq, int tk, int c) {
    std::vector<double> out(static_cast<std::size_t>(tq) * c, 0.0);
    const double scale = 1.0 / std::sqrt(static_cast<double>(c));
    for (int i = 0; i < tq; ++i) {
        std::vector<double> scores(tk);
        double mx = -1e300;
        for (int j = 0; j < tk; ++j) {
            double s = 0.0;
            for (int d = 0; d < c; ++d) s += q[i * c + d] * k[j * c + d];
            scores[j] = s * scale;
            if (scores[j] > mx) mx = scores[j];
        }
        double z = 0.0;
        for (int j = 0; j < tk; ++j) {
            scores[j] = std::exp(scores[j] - mx);
            z += scores[j];
        }
        for (int j = 0; j < tk; ++j) {
            const double w = scores[j] / z;
            for (int d = 0; d < c; ++d) out[i * c + d] += w * v[j * c + d];
        }
    }
    return out;
}

// Scalar GRU, Cho gates, one element at a time.
struct ScalarGruWeights {
    // all matrices row-major [c x c], biases [c]
    std::vector<double> wr, ur, br, wz, uz, bz, wn, un, bn;
};

inline std::vector<double> scalar_gru(const std::vector<double>& x, const std::vector<double>& h,
                                      const ScalarGruWeights& w, int c) {
    auto affine = [&](const std::vector<double>& in, const std::vector<double>& m, int col) {
        double s = 0.0;
        for (int i = 0; i < c; ++i) s += in[i] * m[i * c + col];
        return s;
    };
    std::vector<double> r(c), z(c), n(c), out(c);
    for (int j = 0; j < c; ++j)
        r[j] = 1.0 / (1.0 + std::exp(-(affine(x, w.wr, j) + affine(h, w.ur, j) + w.br[j])));
    for (int j = 0; j < c; ++j)
        z[j] = 1.0 / (1.0 + std::exp(-(affine(x, w.wz, j) + affine(h, w.uz, j) + w.bz[j])));
    std::vector<double> rh(c);
    for (int j = 0; j < c; ++j) rh[j] = r[j] * h[j];
    for (int j = 0; j < c; ++j)
        n[j] = std::tanh(affine(x, w.wn, j) + affine(rh, w.un, j) + w.bn[j]);
    for (int j = 0; j < c; ++j) out[j] = (1.0 - z[j]) * h[j] + z[j] * n[j];
    return out;
}

// Monte-Carlo KL(p||q) for 1-D Gaussians via antithetic standard-normal pairs.
// Deterministic given the seed; uses its own generator so library RNG changes
// cannot mask errors.
inline double mc_kl_gaussian(double mu_p, double sigma_p, double mu_q, double sigma_q,
                             int pairs, std::uint64_t seed) {
    std::uint64_t s = seed ? seed : 0x9e3779b97f4a7c15ull;
    auto next_u = [&]() {
        // xorshift64*, plenty for a test oracle
        s ^= s >> 12;
        s ^= s << 25;
        s ^= s >> 27;
        return s * 0x2545F4914F6CDD1Dull;
    };
    auto unif = [&]() { return ((next_u() >> 11) + 0.5) * 0x1.0p-53; };
    const double lp_const = -std::log(sigma_p);
    const double lq_const = -std::log(sigma_q);
    auto log_ratio = [&](double x) {
        const double zp = (x - mu_p) / sigma_p;
        const double zq = (x - mu_q) / sigma_q;
        return (lp_const - 0.5 * zp * zp) - (lq_const - 0.5 * zq * zq);
    };
    double acc = 0.0;
    for (int i = 0; i < pairs; ++i) {
        const double u1 = unif(), u2 = unif();
        const double z = std::sqrt(-2.0 * std::log(u1)) * std::cos(2.0 * M_PI * u2);
        acc += 0.5 * (log_ratio(mu_p + sigma_p * z) + log_ratio(mu_p - sigma_p * z));
    }
    return acc / pairs;
}

// First index (1-based) whose error drops below the threshold, minus one;
// clamped to the frame count. This is the plain-language reading of the
// "frames before correct" count.
inline int first_correct_scan(const std::vector<double>& errors, double threshold) {
    const int n = static_cast<int>(errors.size());
    for (int i = 0; i < n; ++i)
        if (errors[i] < threshold) return i;
    return n;
}

} // namespace oracles
