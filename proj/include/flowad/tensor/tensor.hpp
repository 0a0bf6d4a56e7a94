#pragma once

#include <algorithm>
#include <cmath>
#include <cstddef>
#include <functional>
#include <memory>
#include <numeric>
#include <sstream>
#include <string>
#include <utility>
#include <vector>

#include "flowad/error.hpp"
#include "flowad/rng.hpp"

namespace flowad {

using Shape = std::vector<int>;

inline std::string shape_str(const Shape& s) {
    std::ostringstream os;
    os << "[";
    for (std::size_t i = 0; i < s.size(); ++i) os << (i ? "x" : "") << s[i];
    os << "]";
    return os.str();
}

inline int shape_numel(const Shape& s) {
    int n = 1;
    for (int d : s) {
        if (d < 0) throw DimensionError("negative dimension in shape " + shape_str(s));
        n *= d;
    }
    return n;
}

inline std::vector<int> row_major_strides(const Shape& s) {
    std::vector<int> st(s.size(), 1);
    for (int i = static_cast<int>(s.size()) - 2; i >= 0; --i)
        st[i] = st[i + 1] * s[i + 1];
    return st;
}

struct GradCell {
    std::vector<double> g; // empty until the tensor joins a taped graph
};

/// Dense row-major 64-bit tensor with reverse-mode gradients.
///
/// A Tensor is a cheap handle: copies alias the same storage, and ops never
/// mutate inputs, so handles behave as immutable snapshots. Views created by
/// reshape() share both the data and the gradient cell of their base, which
/// makes reshape free for autodiff.
class Tensor {
    struct Impl {
        Shape shape;
        std::shared_ptr<std::vector<double>> data;
        std::shared_ptr<GradCell> grad;
        bool requires_grad = false;
    };

public:
    Tensor() : impl_(make_impl({}, std::make_shared<std::vector<double>>())) {}

    Tensor(Shape shape, std::vector<double> data, bool requires_grad = false) {
        if (shape_numel(shape) != static_cast<int>(data.size()))
            throw DimensionError("data length " + std::to_string(data.size()) +
                                 " does not match shape " + shape_str(shape));
        impl_ = make_impl(std::move(shape),
                          std::make_shared<std::vector<double>>(std::move(data)));
        impl_->requires_grad = requires_grad;
    }

    static Tensor zeros(Shape shape) {
        const int n = shape_numel(shape);
        return Tensor(std::move(shape), std::vector<double>(n, 0.0));
    }

    static Tensor full(Shape shape, double v) {
        const int n = shape_numel(shape);
        return Tensor(std::move(shape), std::vector<double>(n, v));
    }

    static Tensor scalar(double v) { return Tensor({1}, {v}); }

    static Tensor identity(int n) {
        Tensor t = zeros({n, n});
        for (int i = 0; i < n; ++i) t.mutable_data()[i * n + i] = 1.0;
        return t;
    }

    static Tensor uniform(Shape shape, double lo, double hi, Rng& rng,
                          bool requires_grad = false) {
        const int n = shape_numel(shape);
        std::vector<double> d(n);
        for (double& x : d) x = rng.uniform(lo, hi);
        return Tensor(std::move(shape), std::move(d), requires_grad);
    }

    const Shape& shape() const { return impl_->shape; }
    int rank() const { return static_cast<int>(impl_->shape.size()); }
    int dim(int i) const { return impl_->shape[i]; }
    int numel() const { return static_cast<int>(impl_->data->size()); }

    const std::vector<double>& data() const { return *impl_->data; }

    /// Direct write access to storage. Only for constructing leaf tensors;
    /// mutating a tensor already recorded on a tape invalidates its gradients.
    std::vector<double>& mutable_data() { return *impl_->data; }

    double value() const {
        if (numel() != 1) throw InvalidInputError("value() on non-scalar tensor " + shape_str(shape()));
        return (*impl_->data)[0];
    }

    double at(std::initializer_list<int> idx) const {
        if (static_cast<int>(idx.size()) != rank())
            throw DimensionError("index rank mismatch");
        const auto st = row_major_strides(shape());
        int off = 0, i = 0;
        for (int v : idx) off += v * st[i++];
        return (*impl_->data)[off];
    }

    bool requires_grad() const { return impl_->requires_grad; }

    void set_requires_grad(bool b) { impl_->requires_grad = b; }

    bool has_grad() const { return !impl_->grad->g.empty(); }

    const std::vector<double>& grad() const {
        if (impl_->grad->g.empty())
            throw InvalidInputError("tensor has no gradient; run backward over a tape first");
        return impl_->grad->g;
    }

    /// New handle on the same data, severed from the autodiff graph.
    Tensor detach() const {
        Tensor t;
        t.impl_ = make_impl(impl_->shape, impl_->data);
        return t;
    }

    /// Reinterpret the same storage under a new shape. Shares data and grad.
    Tensor reshape(Shape shape) const {
        if (shape_numel(shape) != numel())
            throw DimensionError("cannot reshape " + shape_str(this->shape()) +
                                 " to " + shape_str(shape));
        Tensor t;
        t.impl_ = std::make_shared<Impl>(*impl_);
        t.impl_->shape = std::move(shape);
        return t;
    }

    Tensor clone() const {
        return Tensor(impl_->shape, *impl_->data, impl_->requires_grad);
    }

    bool all_finite() const {
        for (double v : *impl_->data)
            if (!std::isfinite(v)) return false;
        return true;
    }

    // Internal: gradient cell plumbing used by the tape and op closures.
    std::shared_ptr<GradCell> grad_cell() const { return impl_->grad; }
    std::shared_ptr<std::vector<double>> data_ptr() const { return impl_->data; }
    void ensure_grad() {
        if (impl_->grad->g.size() != static_cast<std::size_t>(numel()))
            impl_->grad->g.assign(numel(), 0.0);
    }

private:
    static std::shared_ptr<Impl> make_impl(Shape shape,
                                           std::shared_ptr<std::vector<double>> data) {
        auto impl = std::make_shared<Impl>();
        impl->shape = std::move(shape);
        impl->data = std::move(data);
        impl->grad = std::make_shared<GradCell>();
        return impl;
    }

    std::shared_ptr<Impl> impl_;
};

/// Records differentiable ops during a forward pass and replays their adjoints
/// in exact reverse order. Strictly single-threaded per tape; independent
/// samples may each own a tape on their own thread.
class Tape {
public:
    Tape() = default;
    Tape(const Tape&) = delete;
    Tape& operator=(const Tape&) = delete;

    /// Makes a tape the active recording target for the current thread.
    class Scope {
    public:
        explicit Scope(Tape& t) : prev_(active_tape()) { active_tape() = &t; }
        ~Scope() { active_tape() = prev_; }
        Scope(const Scope&) = delete;
        Scope& operator=(const Scope&) = delete;

    private:
        Tape* prev_;
    };

    /// Temporarily disables recording (forward values only).
    class NoGradScope {
    public:
        NoGradScope() : prev_(active_tape()) { active_tape() = nullptr; }
        ~NoGradScope() { active_tape() = prev_; }
        NoGradScope(const NoGradScope&) = delete;
        NoGradScope& operator=(const NoGradScope&) = delete;

    private:
        Tape* prev_;
    };

    static Tape* active() { return active_tape(); }

    void record(std::function<void()> backward_fn) {
        ops_.push_back(std::move(backward_fn));
    }

    void track(Tensor& t) {
        t.ensure_grad();
        cells_.push_back(t.grad_cell());
        sizes_.push_back(t.numel());
    }

    std::size_t size() const { return ops_.size(); }

    /// Zeroes every tracked gradient, seeds d(loss)=1, then runs each recorded
    /// adjoint exactly once in reverse execution order. Idempotent: a second
    /// call over the same recording reproduces identical gradients.
    void backward(const Tensor& loss) {
        if (loss.numel() != 1)
            throw InvalidInputError("backward requires a scalar loss, got " + shape_str(loss.shape()));
        if (loss.grad_cell()->g.empty())
            throw InvalidInputError("loss is not connected to this tape");
        for (std::size_t i = 0; i < cells_.size(); ++i)
            cells_[i]->g.assign(sizes_[i], 0.0);
        loss.grad_cell()->g[0] = 1.0;
        for (auto it = ops_.rbegin(); it != ops_.rend(); ++it) (*it)();
    }

private:
    static Tape*& active_tape() {
        thread_local Tape* t = nullptr;
        return t;
    }

    std::vector<std::function<void()>> ops_;
    std::vector<std::shared_ptr<GradCell>> cells_;
    std::vector<int> sizes_;
};

namespace detail {

inline bool recording(std::initializer_list<const Tensor*> ins) {
    if (!Tape::active()) return false;
    for (const Tensor* t : ins)
        if (t->requires_grad()) return true;
    return false;
}

inline void require_same_shape(const Tensor& a, const Tensor& b, const char* op) {
    if (a.shape() != b.shape())
        throw DimensionError(std::string(op) + ": shape mismatch " + shape_str(a.shape()) +
                             " vs " + shape_str(b.shape()));
}

} // namespace detail

// ---------------------------------------------------------------------------
// Elementwise arithmetic
// ---------------------------------------------------------------------------

inline Tensor add(const Tensor& a, const Tensor& b) {
    detail::require_same_shape(a, b, "add");
    const int n = a.numel();
    std::vector<double> out(n);
    const auto& ad = a.data();
    const auto& bd = b.data();
    for (int i = 0; i < n; ++i) out[i] = ad[i] + bd[i];
    Tensor y(a.shape(), std::move(out));
    if (detail::recording({&a, &b})) {
        Tensor am = a, bm = b;
        Tape* tp = Tape::active();
        tp->track(am);
        tp->track(bm);
        tp->track(y);
        const bool ra = a.requires_grad(), rb = b.requires_grad();
        auto ga = am.grad_cell(), gb = bm.grad_cell(), gy = y.grad_cell();
        y.set_requires_grad(true);
        tp->record([=] {
            for (int i = 0; i < n; ++i) {
                if (ra) ga->g[i] += gy->g[i];
                if (rb) gb->g[i] += gy->g[i];
            }
        });
    }
    return y;
}

inline Tensor sub(const Tensor& a, const Tensor& b) {
    detail::require_same_shape(a, b, "sub");
    const int n = a.numel();
    std::vector<double> out(n);
    const auto& ad = a.data();
    const auto& bd = b.data();
    for (int i = 0; i < n; ++i) out[i] = ad[i] - bd[i];
    Tensor y(a.shape(), std::move(out));
    if (detail::recording({&a, &b})) {
        Tensor am = a, bm = b;
        Tape* tp = Tape::active();
        tp->track(am);
        tp->track(bm);
        tp->track(y);
        const bool ra = a.requires_grad(), rb = b.requires_grad();
        auto ga = am.grad_cell(), gb = bm.grad_cell(), gy = y.grad_cell();
        y.set_requires_grad(true);
        tp->record([=] {
            for (int i = 0; i < n; ++i) {
                if (ra) ga->g[i] += gy->g[i];
                if (rb) gb->g[i] -= gy->g[i];
            }
        });
    }
    return y;
}

inline Tensor mul(const Tensor& a, const Tensor& b) {
    detail::require_same_shape(a, b, "mul");
    const int n = a.numel();
    std::vector<double> out(n);
    const auto& ad = a.data();
    const auto& bd = b.data();
    for (int i = 0; i < n; ++i) out[i] = ad[i] * bd[i];
    Tensor y(a.shape(), std::move(out));
    if (detail::recording({&a, &b})) {
        Tensor am = a, bm = b;
        Tape* tp = Tape::active();
        tp->track(am);
        tp->track(bm);
        tp->track(y);
        const bool ra = a.requires_grad(), rb = b.requires_grad();
        auto ga = am.grad_cell(), gb = bm.grad_cell(), gy = y.grad_cell();
        auto ap = a.data_ptr(), bp = b.data_ptr();
        y.set_requires_grad(true);
        tp->record([=] {
            for (int i = 0; i < n; ++i) {
                if (ra) ga->g[i] += gy->g[i] * (*bp)[i];
                if (rb) gb->g[i] += gy->g[i] * (*ap)[i];
            }
        });
    }
    return y;
}

inline Tensor div(const Tensor& a, const Tensor& b) {
    detail::require_same_shape(a, b, "div");
    const int n = a.numel();
    std::vector<double> out(n);
    const auto& ad = a.data();
    const auto& bd = b.data();
    for (int i = 0; i < n; ++i) {
        if (bd[i] == 0.0) throw DomainError("div: zero denominator");
        out[i] = ad[i] / bd[i];
    }
    Tensor y(a.shape(), std::move(out));
    if (detail::recording({&a, &b})) {
        Tensor am = a, bm = b;
        Tape* tp = Tape::active();
        tp->track(am);
        tp->track(bm);
        tp->track(y);
        const bool ra = a.requires_grad(), rb = b.requires_grad();
        auto ga = am.grad_cell(), gb = bm.grad_cell(), gy = y.grad_cell();
        auto ap = a.data_ptr(), bp = b.data_ptr();
        y.set_requires_grad(true);
        tp->record([=] {
            for (int i = 0; i < n; ++i) {
                const double inv = 1.0 / (*bp)[i];
                if (ra) ga->g[i] += gy->g[i] * inv;
                if (rb) gb->g[i] -= gy->g[i] * (*ap)[i] * inv * inv;
            }
        });
    }
    return y;
}

inline Tensor scale(const Tensor& a, double c) {
    const int n = a.numel();
    std::vector<double> out(n);
    const auto& ad = a.data();
    for (int i = 0; i < n; ++i) out[i] = ad[i] * c;
    Tensor y(a.shape(), std::move(out));
    if (detail::recording({&a})) {
        Tensor am = a;
        Tape* tp = Tape::active();
        tp->track(am);
        tp->track(y);
        auto ga = am.grad_cell(), gy = y.grad_cell();
        y.set_requires_grad(true);
        tp->record([=] {
            for (int i = 0; i < n; ++i) ga->g[i] += gy->g[i] * c;
        });
    }
    return y;
}

inline Tensor add_scalar(const Tensor& a, double c) {
    const int n = a.numel();
    std::vector<double> out(n);
    const auto& ad = a.data();
    for (int i = 0; i < n; ++i) out[i] = ad[i] + c;
    Tensor y(a.shape(), std::move(out));
    if (detail::recording({&a})) {
        Tensor am = a;
        Tape* tp = Tape::active();
        tp->track(am);
        tp->track(y);
        auto ga = am.grad_cell(), gy = y.grad_cell();
        y.set_requires_grad(true);
        tp->record([=] {
            for (int i = 0; i < n; ++i) ga->g[i] += gy->g[i];
        });
    }
    return y;
}

inline Tensor neg(const Tensor& a) { return scale(a, -1.0); }

namespace detail {

template <class Fwd, class Bwd>
Tensor unary_op(const Tensor& a, Fwd f, Bwd dfdx_from_xy) {
    const int n = a.numel();
    std::vector<double> out(n);
    const auto& ad = a.data();
    for (int i = 0; i < n; ++i) out[i] = f(ad[i]);
    Tensor y(a.shape(), std::move(out));
    if (recording({&a})) {
        Tensor am = a;
        Tape* tp = Tape::active();
        tp->track(am);
        tp->track(y);
        auto ga = am.grad_cell(), gy = y.grad_cell();
        auto ap = a.data_ptr(), yp = y.data_ptr();
        y.set_requires_grad(true);
        tp->record([=] {
            for (int i = 0; i < n; ++i)
                ga->g[i] += gy->g[i] * dfdx_from_xy((*ap)[i], (*yp)[i]);
        });
    }
    return y;
}

} // namespace detail

inline Tensor exp_op(const Tensor& a) {
    return detail::unary_op(a, [](double x) { return std::exp(x); },
                            [](double, double y) { return y; });
}

inline Tensor log_op(const Tensor& a) {
    for (double v : a.data())
        if (v <= 0.0) throw DomainError("log of nonpositive value");
    return detail::unary_op(a, [](double x) { return std::log(x); },
                            [](double x, double) { return 1.0 / x; });
}

inline Tensor sigmoid(const Tensor& a) {
    return detail::unary_op(a,
                            [](double x) { return 1.0 / (1.0 + std::exp(-x)); },
                            [](double, double y) { return y * (1.0 - y); });
}

inline Tensor tanh_op(const Tensor& a) {
    return detail::unary_op(a, [](double x) { return std::tanh(x); },
                            [](double, double y) { return 1.0 - y * y; });
}

// ---------------------------------------------------------------------------
// Matrix ops (rank-2)
// ---------------------------------------------------------------------------

inline Tensor matmul(const Tensor& a, const Tensor& b) {
    if (a.rank() != 2 || b.rank() != 2)
        throw DimensionError("matmul expects rank-2 tensors, got " + shape_str(a.shape()) +
                             " and " + shape_str(b.shape()));
    const int m = a.dim(0), k = a.dim(1), k2 = b.dim(0), n = b.dim(1);
    if (k != k2)
        throw DimensionError("matmul inner dimensions disagree: " + shape_str(a.shape()) +
                             " vs " + shape_str(b.shape()));
    std::vector<double> out(static_cast<std::size_t>(m) * n, 0.0);
    const auto& ad = a.data();
    const auto& bd = b.data();
    for (int i = 0; i < m; ++i)
        for (int p = 0; p < k; ++p) {
            const double av = ad[i * k + p];
            if (av == 0.0) continue;
            const double* brow = bd.data() + static_cast<std::size_t>(p) * n;
            double* orow = out.data() + static_cast<std::size_t>(i) * n;
            for (int j = 0; j < n; ++j) orow[j] += av * brow[j];
        }
    Tensor y({m, n}, std::move(out));
    if (detail::recording({&a, &b})) {
        Tensor am = a, bm = b;
        Tape* tp = Tape::active();
        tp->track(am);
        tp->track(bm);
        tp->track(y);
        const bool ra = a.requires_grad(), rb = b.requires_grad();
        auto ga = am.grad_cell(), gb = bm.grad_cell(), gy = y.grad_cell();
        auto ap = a.data_ptr(), bp = b.data_ptr();
        y.set_requires_grad(true);
        tp->record([=] {
            const auto& gyv = gy->g;
            if (ra) { // dA = dY * B^T
                for (int i = 0; i < m; ++i)
                    for (int p = 0; p < k; ++p) {
                        double s = 0.0;
                        const double* gyrow = gyv.data() + static_cast<std::size_t>(i) * n;
                        const double* brow = bp->data() + static_cast<std::size_t>(p) * n;
                        for (int j = 0; j < n; ++j) s += gyrow[j] * brow[j];
                        ga->g[i * k + p] += s;
                    }
            }
            if (rb) { // dB = A^T * dY
                for (int i = 0; i < m; ++i) {
                    const double* arow = ap->data() + static_cast<std::size_t>(i) * k;
                    const double* gyrow = gyv.data() + static_cast<std::size_t>(i) * n;
                    for (int p = 0; p < k; ++p) {
                        const double av = arow[p];
                        if (av == 0.0) continue;
                        double* gbrow = gb->g.data() + static_cast<std::size_t>(p) * n;
                        for (int j = 0; j < n; ++j) gbrow[j] += av * gyrow[j];
                    }
                }
            }
        });
    }
    return y;
}

// ---------------------------------------------------------------------------
// Structural ops (arbitrary rank)
// ---------------------------------------------------------------------------

inline Tensor permute(const Tensor& a, const std::vector<int>& order) {
    const int r = a.rank();
    if (static_cast<int>(order.size()) != r)
        throw DimensionError("permute order rank mismatch");
    std::vector<bool> seen(r, false);
    Shape oshape(r);
    for (int i = 0; i < r; ++i) {
        if (order[i] < 0 || order[i] >= r || seen[order[i]])
            throw DimensionError("permute order is not a permutation");
        seen[order[i]] = true;
        oshape[i] = a.dim(order[i]);
    }
    const auto ist = row_major_strides(a.shape());
    const auto ost = row_major_strides(oshape);
    const int n = a.numel();
    // Map each output linear index to its source linear index once; the
    // backward pass reuses the same index table.
    auto index_map = std::make_shared<std::vector<int>>(n);
    {
        std::vector<int> idx(r, 0);
        for (int o = 0; o < n; ++o) {
            int rem = o, src = 0;
            for (int d = 0; d < r; ++d) {
                const int c = rem / ost[d];
                rem -= c * ost[d];
                src += c * ist[order[d]];
            }
            (*index_map)[o] = src;
        }
    }
    std::vector<double> out(n);
    const auto& ad = a.data();
    for (int o = 0; o < n; ++o) out[o] = ad[(*index_map)[o]];
    Tensor y(oshape, std::move(out));
    if (detail::recording({&a})) {
        Tensor am = a;
        Tape* tp = Tape::active();
        tp->track(am);
        tp->track(y);
        auto ga = am.grad_cell(), gy = y.grad_cell();
        y.set_requires_grad(true);
        tp->record([=] {
            for (int o = 0; o < n; ++o) ga->g[(*index_map)[o]] += gy->g[o];
        });
    }
    return y;
}

inline Tensor transpose(const Tensor& a) {
    if (a.rank() != 2) throw DimensionError("transpose expects rank-2");
    return permute(a, {1, 0});
}

inline Tensor concat(int axis, const std::vector<Tensor>& parts) {
    if (parts.empty()) throw InvalidInputError("concat of zero tensors");
    const int r = parts[0].rank();
    if (axis < 0 || axis >= r) throw DimensionError("concat axis out of range");
    Shape oshape = parts[0].shape();
    int total = parts[0].dim(axis);
    for (std::size_t i = 1; i < parts.size(); ++i) {
        if (parts[i].rank() != r) throw DimensionError("concat rank mismatch");
        for (int d = 0; d < r; ++d)
            if (d != axis && parts[i].dim(d) != oshape[d])
                throw DimensionError("concat shape mismatch on axis " + std::to_string(d));
        total += parts[i].dim(axis);
    }
    oshape[axis] = total;

    int outer = 1, inner = 1;
    for (int d = 0; d < axis; ++d) outer *= oshape[d];
    for (int d = axis + 1; d < r; ++d) inner *= oshape[d];

    std::vector<double> out(static_cast<std::size_t>(shape_numel(oshape)));
    int off = 0;
    for (const Tensor& p : parts) {
        const int pa = p.dim(axis);
        const auto& pd = p.data();
        for (int o = 0; o < outer; ++o)
            std::copy_n(pd.data() + static_cast<std::size_t>(o) * pa * inner,
                        static_cast<std::size_t>(pa) * inner,
                        out.data() + (static_cast<std::size_t>(o) * total + off) * inner);
        off += pa;
    }
    Tensor y(oshape, std::move(out));

    bool any = false;
    for (const Tensor& p : parts) any = any || p.requires_grad();
    if (Tape::active() && any) {
        Tape* tp = Tape::active();
        struct Seg {
            std::shared_ptr<GradCell> cell;
            bool req;
            int axis_len;
            int off;
        };
        auto segs = std::make_shared<std::vector<Seg>>();
        int o2 = 0;
        for (Tensor p : parts) {
            tp->track(p);
            segs->push_back({p.grad_cell(), p.requires_grad(), p.dim(axis), o2});
            o2 += p.dim(axis);
        }
        tp->track(y);
        auto gy = y.grad_cell();
        y.set_requires_grad(true);
        tp->record([=] {
            for (const auto& s : *segs) {
                if (!s.req) continue;
                for (int o = 0; o < outer; ++o) {
                    const double* src =
                        gy->g.data() + (static_cast<std::size_t>(o) * total + s.off) * inner;
                    double* dst = s.cell->g.data() + static_cast<std::size_t>(o) * s.axis_len * inner;
                    for (int i = 0; i < s.axis_len * inner; ++i) dst[i] += src[i];
                }
            }
        });
    }
    return y;
}

inline Tensor slice(const Tensor& a, int axis, int begin, int end) {
    const int r = a.rank();
    if (axis < 0 || axis >= r) throw DimensionError("slice axis out of range");
    if (begin < 0 || end > a.dim(axis) || begin >= end)
        throw DimensionError("slice bounds [" + std::to_string(begin) + "," +
                             std::to_string(end) + ") invalid for axis size " +
                             std::to_string(a.dim(axis)));
    Shape oshape = a.shape();
    oshape[axis] = end - begin;
    int outer = 1, inner = 1;
    for (int d = 0; d < axis; ++d) outer *= a.dim(d);
    for (int d = axis + 1; d < r; ++d) inner *= a.dim(d);
    const int alen = a.dim(axis), olen = end - begin;

    std::vector<double> out(static_cast<std::size_t>(outer) * olen * inner);
    const auto& ad = a.data();
    for (int o = 0; o < outer; ++o)
        std::copy_n(ad.data() + (static_cast<std::size_t>(o) * alen + begin) * inner,
                    static_cast<std::size_t>(olen) * inner,
                    out.data() + static_cast<std::size_t>(o) * olen * inner);
    Tensor y(oshape, std::move(out));
    if (detail::recording({&a})) {
        Tensor am = a;
        Tape* tp = Tape::active();
        tp->track(am);
        tp->track(y);
        auto ga = am.grad_cell(), gy = y.grad_cell();
        y.set_requires_grad(true);
        tp->record([=] {
            for (int o = 0; o < outer; ++o) {
                const double* src = gy->g.data() + static_cast<std::size_t>(o) * olen * inner;
                double* dst = ga->g.data() + (static_cast<std::size_t>(o) * alen + begin) * inner;
                for (int i = 0; i < olen * inner; ++i) dst[i] += src[i];
            }
        });
    }
    return y;
}

/// Gathers slices along an axis by index; indices may repeat (backward is a
/// scatter-add).
inline Tensor gather(const Tensor& a, int axis, const std::vector<int>& indices) {
    const int r = a.rank();
    if (axis < 0 || axis >= r) throw DimensionError("gather axis out of range");
    for (int ix : indices)
        if (ix < 0 || ix >= a.dim(axis))
            throw InvalidInputError("gather index " + std::to_string(ix) +
                                    " out of range for axis size " + std::to_string(a.dim(axis)));
    Shape oshape = a.shape();
    oshape[axis] = static_cast<int>(indices.size());
    int outer = 1, inner = 1;
    for (int d = 0; d < axis; ++d) outer *= a.dim(d);
    for (int d = axis + 1; d < r; ++d) inner *= a.dim(d);
    const int alen = a.dim(axis), olen = static_cast<int>(indices.size());

    std::vector<double> out(static_cast<std::size_t>(outer) * olen * inner);
    const auto& ad = a.data();
    for (int o = 0; o < outer; ++o)
        for (int j = 0; j < olen; ++j)
            std::copy_n(ad.data() + (static_cast<std::size_t>(o) * alen + indices[j]) * inner,
                        inner,
                        out.data() + (static_cast<std::size_t>(o) * olen + j) * inner);
    Tensor y(oshape, std::move(out));
    if (detail::recording({&a})) {
        Tensor am = a;
        Tape* tp = Tape::active();
        tp->track(am);
        tp->track(y);
        auto ga = am.grad_cell(), gy = y.grad_cell();
        auto idx = std::make_shared<std::vector<int>>(indices);
        y.set_requires_grad(true);
        tp->record([=] {
            for (int o = 0; o < outer; ++o)
                for (int j = 0; j < olen; ++j) {
                    const double* src = gy->g.data() + (static_cast<std::size_t>(o) * olen + j) * inner;
                    double* dst = ga->g.data() + (static_cast<std::size_t>(o) * alen + (*idx)[j]) * inner;
                    for (int i = 0; i < inner; ++i) dst[i] += src[i];
                }
        });
    }
    return y;
}

// ---------------------------------------------------------------------------
// Reductions and broadcasts
// ---------------------------------------------------------------------------

inline Tensor sum_all(const Tensor& a) {
    const int n = a.numel();
    double s = 0.0;
    for (double v : a.data()) s += v;
    Tensor y({1}, {s});
    if (detail::recording({&a})) {
        Tensor am = a;
        Tape* tp = Tape::active();
        tp->track(am);
        tp->track(y);
        auto ga = am.grad_cell(), gy = y.grad_cell();
        y.set_requires_grad(true);
        tp->record([=] {
            const double g = gy->g[0];
            for (int i = 0; i < n; ++i) ga->g[i] += g;
        });
    }
    return y;
}

inline Tensor mean_all(const Tensor& a) {
    if (a.numel() == 0) throw InvalidInputError("mean of empty tensor");
    return scale(sum_all(a), 1.0 / a.numel());
}

/// Column means of a [R x C] matrix -> rank-1 [C].
inline Tensor mean_rows(const Tensor& a) {
    if (a.rank() != 2) throw DimensionError("mean_rows expects rank-2");
    const int rows = a.dim(0), cols = a.dim(1);
    if (rows == 0) throw InvalidInputError("mean_rows of zero rows");
    std::vector<double> out(cols, 0.0);
    const auto& ad = a.data();
    for (int i = 0; i < rows; ++i)
        for (int j = 0; j < cols; ++j) out[j] += ad[i * cols + j];
    const double inv = 1.0 / rows;
    for (double& v : out) v *= inv;
    Tensor y({cols}, std::move(out));
    if (detail::recording({&a})) {
        Tensor am = a;
        Tape* tp = Tape::active();
        tp->track(am);
        tp->track(y);
        auto ga = am.grad_cell(), gy = y.grad_cell();
        y.set_requires_grad(true);
        tp->record([=] {
            for (int i = 0; i < rows; ++i)
                for (int j = 0; j < cols; ++j) ga->g[i * cols + j] += gy->g[j] * inv;
        });
    }
    return y;
}

/// mat[R x C] + vec[C] broadcast over rows.
inline Tensor add_rowvec(const Tensor& m, const Tensor& v) {
    if (m.rank() != 2 || v.rank() != 1 || v.dim(0) != m.dim(1))
        throw DimensionError("add_rowvec: " + shape_str(m.shape()) + " + " + shape_str(v.shape()));
    const int rows = m.dim(0), cols = m.dim(1);
    std::vector<double> out(static_cast<std::size_t>(rows) * cols);
    const auto& md = m.data();
    const auto& vd = v.data();
    for (int i = 0; i < rows; ++i)
        for (int j = 0; j < cols; ++j) out[i * cols + j] = md[i * cols + j] + vd[j];
    Tensor y(m.shape(), std::move(out));
    if (detail::recording({&m, &v})) {
        Tensor mm = m, vm = v;
        Tape* tp = Tape::active();
        tp->track(mm);
        tp->track(vm);
        tp->track(y);
        const bool rm = m.requires_grad(), rv = v.requires_grad();
        auto gm = mm.grad_cell(), gv = vm.grad_cell(), gy = y.grad_cell();
        y.set_requires_grad(true);
        tp->record([=] {
            for (int i = 0; i < rows; ++i)
                for (int j = 0; j < cols; ++j) {
                    const double g = gy->g[i * cols + j];
                    if (rm) gm->g[i * cols + j] += g;
                    if (rv) gv->g[j] += g;
                }
        });
    }
    return y;
}

/// mat[R x C] + vec[R] broadcast over columns.
inline Tensor add_colvec(const Tensor& m, const Tensor& v) {
    if (m.rank() != 2 || v.rank() != 1 || v.dim(0) != m.dim(0))
        throw DimensionError("add_colvec: " + shape_str(m.shape()) + " + " + shape_str(v.shape()));
    const int rows = m.dim(0), cols = m.dim(1);
    std::vector<double> out(static_cast<std::size_t>(rows) * cols);
    const auto& md = m.data();
    const auto& vd = v.data();
    for (int i = 0; i < rows; ++i)
        for (int j = 0; j < cols; ++j) out[i * cols + j] = md[i * cols + j] + vd[i];
    Tensor y(m.shape(), std::move(out));
    if (detail::recording({&m, &v})) {
        Tensor mm = m, vm = v;
        Tape* tp = Tape::active();
        tp->track(mm);
        tp->track(vm);
        tp->track(y);
        const bool rm = m.requires_grad(), rv = v.requires_grad();
        auto gm = mm.grad_cell(), gv = vm.grad_cell(), gy = y.grad_cell();
        y.set_requires_grad(true);
        tp->record([=] {
            for (int i = 0; i < rows; ++i)
                for (int j = 0; j < cols; ++j) {
                    const double g = gy->g[i * cols + j];
                    if (rm) gm->g[i * cols + j] += g;
                    if (rv) gv->g[i] += g;
                }
        });
    }
    return y;
}

// ---------------------------------------------------------------------------
// Softmax family
// ---------------------------------------------------------------------------

/// Row-wise softmax with max-shift, so softmax(x) == softmax(x + c) to
/// rounding.
inline Tensor softmax_rows(const Tensor& a) {
    if (a.rank() != 2) throw DimensionError("softmax_rows expects rank-2");
    const int rows = a.dim(0), cols = a.dim(1);
    if (cols == 0) throw InvalidInputError("softmax over empty row");
    std::vector<double> out(static_cast<std::size_t>(rows) * cols);
    const auto& ad = a.data();
    for (int i = 0; i < rows; ++i) {
        const double* row = ad.data() + static_cast<std::size_t>(i) * cols;
        double mx = row[0];
        for (int j = 1; j < cols; ++j) mx = std::max(mx, row[j]);
        double z = 0.0;
        for (int j = 0; j < cols; ++j) {
            const double e = std::exp(row[j] - mx);
            out[i * cols + j] = e;
            z += e;
        }
        const double inv = 1.0 / z;
        for (int j = 0; j < cols; ++j) out[i * cols + j] *= inv;
    }
    Tensor y(a.shape(), std::move(out));
    if (detail::recording({&a})) {
        Tensor am = a;
        Tape* tp = Tape::active();
        tp->track(am);
        tp->track(y);
        auto ga = am.grad_cell(), gy = y.grad_cell();
        auto yp = y.data_ptr();
        y.set_requires_grad(true);
        tp->record([=] {
            for (int i = 0; i < rows; ++i) {
                const double* yrow = yp->data() + static_cast<std::size_t>(i) * cols;
                const double* grow = gy->g.data() + static_cast<std::size_t>(i) * cols;
                double dot = 0.0;
                for (int j = 0; j < cols; ++j) dot += grow[j] * yrow[j];
                for (int j = 0; j < cols; ++j)
                    ga->g[i * cols + j] += yrow[j] * (grow[j] - dot);
            }
        });
    }
    return y;
}

inline Tensor log_softmax_rows(const Tensor& a) {
    if (a.rank() != 2) throw DimensionError("log_softmax_rows expects rank-2");
    const int rows = a.dim(0), cols = a.dim(1);
    if (cols == 0) throw InvalidInputError("log_softmax over empty row");
    std::vector<double> out(static_cast<std::size_t>(rows) * cols);
    const auto& ad = a.data();
    for (int i = 0; i < rows; ++i) {
        const double* row = ad.data() + static_cast<std::size_t>(i) * cols;
        double mx = row[0];
        for (int j = 1; j < cols; ++j) mx = std::max(mx, row[j]);
        double z = 0.0;
        for (int j = 0; j < cols; ++j) z += std::exp(row[j] - mx);
        const double lse = mx + std::log(z);
        for (int j = 0; j < cols; ++j) out[i * cols + j] = row[j] - lse;
    }
    Tensor y(a.shape(), std::move(out));
    if (detail::recording({&a})) {
        Tensor am = a;
        Tape* tp = Tape::active();
        tp->track(am);
        tp->track(y);
        auto ga = am.grad_cell(), gy = y.grad_cell();
        auto yp = y.data_ptr();
        y.set_requires_grad(true);
        tp->record([=] {
            for (int i = 0; i < rows; ++i) {
                const double* lrow = yp->data() + static_cast<std::size_t>(i) * cols;
                const double* grow = gy->g.data() + static_cast<std::size_t>(i) * cols;
                double gsum = 0.0;
                for (int j = 0; j < cols; ++j) gsum += grow[j];
                for (int j = 0; j < cols; ++j)
                    ga->g[i * cols + j] += grow[j] - std::exp(lrow[j]) * gsum;
            }
        });
    }
    return y;
}

/// Mean cross-entropy of row logits against integer targets.
inline Tensor cross_entropy_mean(const Tensor& logits, const std::vector<int>& targets) {
    if (logits.rank() != 2) throw DimensionError("cross_entropy expects rank-2 logits");
    const int rows = logits.dim(0), cols = logits.dim(1);
    if (static_cast<int>(targets.size()) != rows)
        throw DimensionError("cross_entropy: target count mismatch");
    for (int t : targets)
        if (t < 0 || t >= cols) throw InvalidInputError("cross_entropy target out of range");
    const auto& ld = logits.data();
    double total = 0.0;
    std::vector<double> lse(rows);
    for (int i = 0; i < rows; ++i) {
        const double* row = ld.data() + static_cast<std::size_t>(i) * cols;
        double mx = row[0];
        for (int j = 1; j < cols; ++j) mx = std::max(mx, row[j]);
        double z = 0.0;
        for (int j = 0; j < cols; ++j) z += std::exp(row[j] - mx);
        lse[i] = mx + std::log(z);
        total += lse[i] - row[targets[i]];
    }
    Tensor y({1}, {total / rows});
    if (detail::recording({&logits})) {
        Tensor lm = logits;
        Tape* tp = Tape::active();
        tp->track(lm);
        tp->track(y);
        auto gl = lm.grad_cell(), gy = y.grad_cell();
        auto lp = logits.data_ptr();
        auto tgt = std::make_shared<std::vector<int>>(targets);
        auto lse_p = std::make_shared<std::vector<double>>(std::move(lse));
        y.set_requires_grad(true);
        tp->record([=] {
            const double g = gy->g[0] / rows;
            for (int i = 0; i < rows; ++i) {
                const double* row = lp->data() + static_cast<std::size_t>(i) * cols;
                for (int j = 0; j < cols; ++j) {
                    const double p = std::exp(row[j] - (*lse_p)[i]);
                    gl->g[i * cols + j] += g * (p - (j == (*tgt)[i] ? 1.0 : 0.0));
                }
            }
        });
    }
    return y;
}

} // namespace flowad
