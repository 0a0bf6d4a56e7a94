#pragma once

#include <cmath>
#include <functional>
#include <vector>

#include "flowad/error.hpp"
#include "flowad/tensor/tensor.hpp"

namespace flowad {

struct GradCheckReport {
    double max_rel_err = 0.0;
    double max_abs_err = 0.0;
    int worst_input = -1;
    int worst_element = -1;
    std::vector<std::vector<double>> analytic; // per input, tape gradients
    std::vector<std::vector<double>> numeric;  // per input, central differences

    bool ok(double tol) const { return max_rel_err < tol; }
};

/// Central-difference check of tape gradients for a scalar-valued function of
/// several tensors. The function must be a pure forward computation; it is
/// re-evaluated under perturbed inputs with recording disabled.
///
/// Relative error per element uses max(|analytic|, |numeric|, 1e-4) as the
/// denominator, so elements whose true gradient is tiny are judged on an
/// absolute scale of 1e-8 rather than blowing up the ratio.
inline GradCheckReport finite_diff_grad(
    const std::function<Tensor(const std::vector<Tensor>&)>& f, std::vector<Tensor> inputs,
    double eps) {
    if (!(eps >= 1e-7 && eps <= 1e-4))
        throw InvalidInputError("finite_diff_grad: eps must lie in [1e-7, 1e-4]");

    GradCheckReport rep;
    {
        Tape tape;
        Tape::Scope scope(tape);
        for (Tensor& t : inputs) {
            t.set_requires_grad(true);
            tape.track(t);
        }
        Tensor out = f(inputs);
        if (out.numel() != 1)
            throw InvalidInputError("finite_diff_grad: function output is not scalar, got " +
                                    shape_str(out.shape()));
        if (out.requires_grad()) {
            tape.backward(out);
            for (const Tensor& t : inputs) rep.analytic.push_back(t.grad());
        } else {
            // Output does not depend on any input; the gradient is identically zero.
            for (const Tensor& t : inputs)
                rep.analytic.emplace_back(t.numel(), 0.0);
        }
    }

    rep.numeric.resize(inputs.size());
    {
        Tape::NoGradScope off;
        for (std::size_t i = 0; i < inputs.size(); ++i) {
            std::vector<double>& buf = inputs[i].mutable_data();
            rep.numeric[i].resize(buf.size());
            for (std::size_t e = 0; e < buf.size(); ++e) {
                const double orig = buf[e];
                buf[e] = orig + eps;
                const double fp = f(inputs).value();
                buf[e] = orig - eps;
                const double fm = f(inputs).value();
                buf[e] = orig;
                rep.numeric[i][e] = (fp - fm) / (2.0 * eps);
            }
        }
    }

    for (std::size_t i = 0; i < inputs.size(); ++i) {
        for (std::size_t e = 0; e < rep.analytic[i].size(); ++e) {
            const double a = rep.analytic[i][e];
            const double n = rep.numeric[i][e];
            const double abs_err = std::abs(a - n);
            const double rel = abs_err / std::max({std::abs(a), std::abs(n), 1e-4});
            if (abs_err > rep.max_abs_err) rep.max_abs_err = abs_err;
            if (rel > rep.max_rel_err) {
                rep.max_rel_err = rel;
                rep.worst_input = static_cast<int>(i);
                rep.worst_element = static_cast<int>(e);
            }
        }
    }
    return rep;
}

} // namespace flowad
