#pragma once

#include <cmath>
#include <string>
#include <utility>
#include <vector>

#include "flowad/error.hpp"
#include "flowad/rng.hpp"
#include "flowad/tensor/param_set.hpp"
#include "flowad/tensor/tensor.hpp"

namespace flowad {

inline Tensor linear(const Tensor& x, const Tensor& w, const Tensor& b) {
    return add_rowvec(matmul(x, w), b);
}

// --------------------------------------------------------------------------
// Attention: single head, scaled dot product, softmax over the key axis.
// --------------------------------------------------------------------------

inline std::pair<Tensor, Tensor> attention_with_weights(const Tensor& q, const Tensor& k,
                                                        const Tensor& v) {
    if (q.rank() != 2 || k.rank() != 2 || v.rank() != 2)
        throw DimensionError("attention expects rank-2 q/k/v");
    if (q.dim(1) != k.dim(1) || k.dim(1) != v.dim(1))
        throw DimensionError("attention widths disagree: q " + shape_str(q.shape()) + ", k " +
                             shape_str(k.shape()) + ", v " + shape_str(v.shape()));
    if (k.dim(0) != v.dim(0))
        throw DimensionError("attention key/value counts disagree");
    if (k.dim(0) == 0) throw InvalidInputError("attention over an empty key set");
    const double s = 1.0 / std::sqrt(static_cast<double>(q.dim(1)));
    Tensor scores = scale(matmul(q, transpose(k)), s);
    Tensor w = softmax_rows(scores);
    return {matmul(w, v), w};
}

inline Tensor attention(const Tensor& q, const Tensor& k, const Tensor& v) {
    return attention_with_weights(q, k, v).first;
}

inline Tensor self_attention(const Tensor& x) { return attention(x, x, x); }

// --------------------------------------------------------------------------
// GRU cell, gates in the Cho formulation:
//   r = sigmoid(x Wr + h Ur + br)
//   z = sigmoid(x Wz + h Uz + bz)
//   n = tanh(x Wn + (r*h) Un + bn)
//   h' = (1-z)*h + z*n
// --------------------------------------------------------------------------

inline void init_gru(ParamSet& ps, const std::string& prefix, int width, Rng& rng) {
    const double lim = 1.0 / std::sqrt(static_cast<double>(width));
    for (const char* g : {"r", "z", "n"}) {
        ps.add(prefix + ".w" + g, Tensor::uniform({width, width}, -lim, lim, rng));
        ps.add(prefix + ".u" + g, Tensor::uniform({width, width}, -lim, lim, rng));
        ps.add(prefix + ".b" + g, Tensor::uniform({width}, -lim, lim, rng));
    }
}

/// x and h are [B x C] (or rank-1 [C], treated as one row). Returns h' with
/// the same shape as h.
inline Tensor gru_cell(const Tensor& x, const Tensor& h, const ParamSet& params,
                       const std::string& prefix) {
    const bool vec = (x.rank() == 1);
    Tensor xm = vec ? x.reshape({1, x.dim(0)}) : x;
    Tensor hm = (h.rank() == 1) ? h.reshape({1, h.dim(0)}) : h;
    if (xm.rank() != 2 || hm.rank() != 2 || xm.dim(1) != hm.dim(1) || xm.dim(0) != hm.dim(0))
        throw DimensionError("gru_cell: x " + shape_str(x.shape()) + " vs h " +
                             shape_str(h.shape()));
    const Tensor& wr = params.at(prefix + ".wr");
    if (wr.dim(0) != xm.dim(1))
        throw DimensionError("gru_cell: width " + std::to_string(xm.dim(1)) +
                             " does not match parameters " + shape_str(wr.shape()));
    Tensor r = sigmoid(add(linear(xm, wr, params.at(prefix + ".br")),
                           matmul(hm, params.at(prefix + ".ur"))));
    Tensor z = sigmoid(add(linear(xm, params.at(prefix + ".wz"), params.at(prefix + ".bz")),
                           matmul(hm, params.at(prefix + ".uz"))));
    Tensor n = tanh_op(add(linear(xm, params.at(prefix + ".wn"), params.at(prefix + ".bn")),
                           matmul(mul(r, hm), params.at(prefix + ".un"))));
    Tensor one_minus_z = add_scalar(neg(z), 1.0);
    Tensor out = add(mul(one_minus_z, hm), mul(z, n));
    return vec ? out.reshape({out.dim(1)}) : out;
}

// --------------------------------------------------------------------------
// MLP: affine layers with tanh between them, last layer affine only. Layer i
// uses "<prefix>.w<i>" / "<prefix>.b<i>"; the chain ends at the first missing
// index.
// --------------------------------------------------------------------------

inline void init_mlp(ParamSet& ps, const std::string& prefix, const std::vector<int>& widths,
                     Rng& rng) {
    if (widths.size() < 2) throw ConfigError("mlp needs at least one layer: " + prefix);
    for (std::size_t i = 0; i + 1 < widths.size(); ++i) {
        const double lim = 1.0 / std::sqrt(static_cast<double>(widths[i]));
        ps.add(prefix + ".w" + std::to_string(i),
               Tensor::uniform({widths[i], widths[i + 1]}, -lim, lim, rng));
        ps.add(prefix + ".b" + std::to_string(i),
               Tensor::uniform({widths[i + 1]}, -lim, lim, rng));
    }
}

inline Tensor mlp(const Tensor& x, const ParamSet& params, const std::string& prefix) {
    const bool vec = (x.rank() == 1);
    Tensor h = vec ? x.reshape({1, x.dim(0)}) : x;
    if (h.rank() != 2) throw DimensionError("mlp expects rank-1 or rank-2 input");
    if (!params.contains(prefix + ".w0")) throw ConfigError("mlp has no layers: " + prefix);
    for (int i = 0;; ++i) {
        const std::string wi = prefix + ".w" + std::to_string(i);
        if (!params.contains(wi)) break;
        const Tensor& w = params.at(wi);
        if (w.dim(0) != h.dim(1))
            throw DimensionError("mlp layer " + std::to_string(i) + ": input width " +
                                 std::to_string(h.dim(1)) + " vs weight " + shape_str(w.shape()));
        h = linear(h, w, params.at(prefix + ".b" + std::to_string(i)));
        if (params.contains(prefix + ".w" + std::to_string(i + 1))) h = tanh_op(h);
    }
    return vec ? h.reshape({h.dim(1)}) : h;
}

// --------------------------------------------------------------------------
// KL divergence between diagonal Gaussians, KL(p || q), closed form per
// element, then mean over elements.
// --------------------------------------------------------------------------

inline Tensor kl_diag_gaussian(const Tensor& mu_p, const Tensor& sigma_p, const Tensor& mu_q,
                               const Tensor& sigma_q) {
    detail::require_same_shape(mu_p, sigma_p, "kl_diag_gaussian");
    detail::require_same_shape(mu_p, mu_q, "kl_diag_gaussian");
    detail::require_same_shape(mu_p, sigma_q, "kl_diag_gaussian");
    for (double v : sigma_p.data())
        if (v <= 0.0) throw DomainError("kl_diag_gaussian: nonpositive sigma_p");
    for (double v : sigma_q.data())
        if (v <= 0.0) throw DomainError("kl_diag_gaussian: nonpositive sigma_q");
    Tensor log_ratio = sub(log_op(sigma_q), log_op(sigma_p));
    Tensor d = sub(mu_p, mu_q);
    Tensor num = add(mul(sigma_p, sigma_p), mul(d, d));
    Tensor den = scale(mul(sigma_q, sigma_q), 2.0);
    Tensor term = add_scalar(add(log_ratio, div(num, den)), -0.5);
    return mean_all(term);
}

} // namespace flowad
