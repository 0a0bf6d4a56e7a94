#pragma once

#include <cmath>
#include <map>
#include <string>
#include <vector>

#include "flowad/error.hpp"
#include "flowad/tensor/param_set.hpp"
#include "flowad/tensor/tensor.hpp"

namespace flowad {

namespace detail {

inline void require_same_keys(const ParamSet& params, const GradMap& grads) {
    if (params.size() != grads.size())
        throw ConfigError("optimizer: parameter/gradient key sets differ in size");
    for (const auto& [name, t] : params) {
        auto it = grads.find(name);
        if (it == grads.end()) throw ConfigError("optimizer: no gradient for " + name);
        if (it->second.size() != static_cast<std::size_t>(t.numel()))
            throw ConfigError("optimizer: gradient size mismatch for " + name);
    }
}

} // namespace detail

/// Plain SGD: p <- p - lr * g, returning a fresh ParamSet.
inline ParamSet optimizer_step(const ParamSet& params, const GradMap& grads, double lr) {
    detail::require_same_keys(params, grads);
    ParamSet out;
    for (const auto& [name, t] : params) {
        const std::vector<double>& g = grads.at(name);
        std::vector<double> v = t.data();
        for (std::size_t i = 0; i < v.size(); ++i) v[i] -= lr * g[i];
        out.add(name, Tensor(t.shape(), std::move(v)));
    }
    return out;
}

/// Adam with bias correction. Moment state is keyed by parameter name and
/// persists across step() calls.
class Adam {
public:
    explicit Adam(double lr, double beta1 = 0.9, double beta2 = 0.999, double eps = 1e-8)
        : lr_(lr), b1_(beta1), b2_(beta2), eps_(eps) {}

    ParamSet step(const ParamSet& params, const GradMap& grads) {
        detail::require_same_keys(params, grads);
        ++t_;
        const double c1 = 1.0 - std::pow(b1_, t_);
        const double c2 = 1.0 - std::pow(b2_, t_);
        ParamSet out;
        for (const auto& [name, p] : params) {
            const std::vector<double>& g = grads.at(name);
            std::vector<double>& m = m_[name];
            std::vector<double>& v = v_[name];
            if (m.empty()) m.assign(g.size(), 0.0);
            if (v.empty()) v.assign(g.size(), 0.0);
            std::vector<double> x = p.data();
            for (std::size_t i = 0; i < x.size(); ++i) {
                m[i] = b1_ * m[i] + (1.0 - b1_) * g[i];
                v[i] = b2_ * v[i] + (1.0 - b2_) * g[i] * g[i];
                x[i] -= lr_ * (m[i] / c1) / (std::sqrt(v[i] / c2) + eps_);
            }
            out.add(name, Tensor(p.shape(), std::move(x)));
        }
        return out;
    }

private:
    double lr_, b1_, b2_, eps_;
    long t_ = 0;
    std::map<std::string, std::vector<double>> m_, v_;
};

} // namespace flowad
