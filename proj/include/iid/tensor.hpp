#pragma once

#include "iid/core.hpp"

#include <algorithm>
#include <cmath>
#include <cstddef>
#include <functional>
#include <memory>
#include <numeric>
#include <string>
#include <vector>

namespace iid {

// Dense row-major double tensor. Network activations use [B, C, H, W].
struct Tensor {
    std::vector<int> shape;
    std::vector<double> data;

    Tensor() = default;
    explicit Tensor(std::vector<int> s, double fill = 0.0) : shape(std::move(s)) {
        data.assign(numel(shape), fill);
    }
    Tensor(std::vector<int> s, std::vector<double> d) : shape(std::move(s)), data(std::move(d)) {
        if (data.size() != numel(shape)) throw ShapeError("Tensor: data length does not match shape");
    }

    static std::size_t numel(const std::vector<int>& s) {
        std::size_t n = 1;
        for (int d : s) {
            if (d <= 0) throw ShapeError("Tensor: non-positive extent");
            n *= static_cast<std::size_t>(d);
        }
        return n;
    }
    std::size_t size() const { return data.size(); }
    int dim(int i) const { return shape[static_cast<std::size_t>(i)]; }

    double scalar() const {
        if (data.size() != 1) throw ShapeError("Tensor::scalar: not a scalar");
        return data[0];
    }
};

inline std::string shape_str(const std::vector<int>& s) {
    std::string out = "[";
    for (std::size_t i = 0; i < s.size(); ++i) {
        if (i) out += ",";
        out += std::to_string(s[i]);
    }
    return out + "]";
}

class Tape;

// Handle to a tensor recorded on a tape.
struct Var {
    Tape* tape = nullptr;
    int id = -1;

    const Tensor& value() const;
    const std::vector<int>& shape() const;
    bool valid() const { return tape != nullptr && id >= 0; }
};

// Reverse-mode differentiation record. Operations execute eagerly and
// append a node holding the result plus a backward rule; backward() then
// walks the record in exact reverse order. Nodes are in topological order
// by construction: an operand always precedes its consumers.
class Tape {
public:
    struct Node {
        Tensor value;
        Tensor grad;
        std::function<void()> backward; // null for leaves
        std::string op;
    };

    bool check_finite = true;

    Var leaf(Tensor t, const char* name = "leaf") {
        Var v = push(std::move(t), name);
        return v;
    }

    Var push(Tensor t, const char* op) {
        if (check_finite) {
            for (double v : t.data)
                if (!std::isfinite(v))
                    throw NumericError(std::string("non-finite value produced by op '") + op + "'");
        }
        Node node;
        node.value = std::move(t);
        node.op = op;
        nodes_.push_back(std::move(node));
        return Var{this, static_cast<int>(nodes_.size()) - 1};
    }

    void set_backward(const Var& v, std::function<void()> fn) {
        nodes_[static_cast<std::size_t>(v.id)].backward = std::move(fn);
    }

    const Tensor& value(int id) const { return nodes_[static_cast<std::size_t>(id)].value; }
    Tensor& grad_mut(int id) { return nodes_[static_cast<std::size_t>(id)].grad; }
    const Tensor& grad(const Var& v) const { return nodes_[static_cast<std::size_t>(v.id)].grad; }
    std::size_t size() const { return nodes_.size(); }

    // Accumulates exact gradients for every node, in reverse record order.
    // Nodes the loss does not depend on keep zero gradient.
    void backward(const Var& loss) {
        if (loss.tape != this) throw ShapeError("backward: loss lives on another tape");
        if (nodes_[static_cast<std::size_t>(loss.id)].value.size() != 1)
            throw ShapeError("backward: loss must be scalar");
        for (Node& n : nodes_) {
            n.grad.shape = n.value.shape;
            n.grad.data.assign(n.value.size(), 0.0);
        }
        nodes_[static_cast<std::size_t>(loss.id)].grad.data[0] = 1.0;
        for (std::size_t i = nodes_.size(); i-- > 0;)
            if (nodes_[i].backward) nodes_[i].backward();
    }

private:
    std::vector<Node> nodes_;
};

inline const Tensor& Var::value() const { return tape->value(id); }
inline const std::vector<int>& Var::shape() const { return tape->value(id).shape; }

namespace ad {

inline void require_same_shape(const Var& a, const Var& b, const char* op) {
    if (a.tape != b.tape) throw ShapeError(std::string(op) + ": operands on different tapes");
    if (a.shape() != b.shape())
        throw ShapeError(std::string(op) + ": shape mismatch " + shape_str(a.shape()) + " vs " +
                         shape_str(b.shape()));
}

// ---- elementwise binary ----

namespace detail {

template <class Fwd, class Bwd>
Var binary_op(Var a, Var b, const char* name, Fwd fwd, Bwd bwd) {
    require_same_shape(a, b, name);
    Tape* t = a.tape;
    const std::size_t n = a.value().size();
    Tensor out(a.shape());
    for (std::size_t i = 0; i < n; ++i) out.data[i] = fwd(a.value().data[i], b.value().data[i]);
    Var y = t->push(std::move(out), name);
    t->set_backward(y, [t, ia = a.id, ib = b.id, iy = y.id, bwd, n]() {
        const auto& gy = t->grad_mut(iy).data;
        const auto& av = t->value(ia).data;
        const auto& bv = t->value(ib).data;
        auto& ga = t->grad_mut(ia).data;
        auto& gb = t->grad_mut(ib).data;
        for (std::size_t i = 0; i < n; ++i) {
            double da, db;
            bwd(av[i], bv[i], da, db);
            ga[i] += gy[i] * da;
            gb[i] += gy[i] * db;
        }
    });
    return y;
}

template <class Fwd, class Bwd>
Var unary_op(Var a, const char* name, Fwd fwd, Bwd bwd) {
    Tape* t = a.tape;
    const std::size_t n = a.value().size();
    Tensor out(a.shape());
    for (std::size_t i = 0; i < n; ++i) out.data[i] = fwd(a.value().data[i]);
    Var y = t->push(std::move(out), name);
    t->set_backward(y, [t, ia = a.id, iy = y.id, bwd, n]() {
        const auto& gy = t->grad_mut(iy).data;
        const auto& av = t->value(ia).data;
        const auto& yv = t->value(iy).data;
        auto& ga = t->grad_mut(ia).data;
        for (std::size_t i = 0; i < n; ++i) ga[i] += gy[i] * bwd(av[i], yv[i]);
    });
    return y;
}

} // namespace detail

inline Var add(Var a, Var b) {
    return detail::binary_op(a, b, "add",
                             [](double x, double y) { return x + y; },
                             [](double, double, double& da, double& db) { da = 1.0; db = 1.0; });
}

inline Var sub(Var a, Var b) {
    return detail::binary_op(a, b, "sub",
                             [](double x, double y) { return x - y; },
                             [](double, double, double& da, double& db) { da = 1.0; db = -1.0; });
}

inline Var mul(Var a, Var b) {
    return detail::binary_op(a, b, "mul",
                             [](double x, double y) { return x * y; },
                             [](double x, double y, double& da, double& db) { da = y; db = x; });
}

inline Var div(Var a, Var b) {
    return detail::binary_op(a, b, "div",
                             [](double x, double y) { return x / y; },
                             [](double x, double y, double& da, double& db) {
                                 da = 1.0 / y;
                                 db = -x / (y * y);
                             });
}

// ---- elementwise unary ----

inline Var relu(Var a) {
    // Subgradient at 0 is 0.
    return detail::unary_op(a, "relu",
                            [](double x) { return x > 0.0 ? x : 0.0; },
                            [](double x, double) { return x > 0.0 ? 1.0 : 0.0; });
}

inline Var sigmoid(Var a) {
    return detail::unary_op(a, "sigmoid",
                            [](double x) {
                                return x >= 0.0 ? 1.0 / (1.0 + std::exp(-x))
                                                : std::exp(x) / (1.0 + std::exp(x));
                            },
                            [](double, double y) { return y * (1.0 - y); });
}

inline Var abs(Var a) {
    // Subgradient at 0 is 0.
    return detail::unary_op(a, "abs",
                            [](double x) { return std::abs(x); },
                            [](double x, double) { return x > 0.0 ? 1.0 : (x < 0.0 ? -1.0 : 0.0); });
}

inline Var add_scalar(Var a, double c) {
    return detail::unary_op(a, "add_scalar",
                            [c](double x) { return x + c; },
                            [](double, double) { return 1.0; });
}

inline Var mul_scalar(Var a, double c) {
    return detail::unary_op(a, "mul_scalar",
                            [c](double x) { return x * c; },
                            [c](double, double) { return c; });
}

inline Var square(Var a) { return mul(a, a); }

// ---- structure ----

inline Var concat_channels(const std::vector<Var>& xs) {
    if (xs.empty()) throw ShapeError("concat_channels: no inputs");
    Tape* t = xs[0].tape;
    const auto& s0 = xs[0].shape();
    if (s0.size() != 4) throw ShapeError("concat_channels: expect 4-D tensors");
    const int B = s0[0], H = s0[2], W = s0[3];
    int C = 0;
    for (const Var& x : xs) {
        const auto& s = x.shape();
        if (x.tape != t || s.size() != 4 || s[0] != B || s[2] != H || s[3] != W)
            throw ShapeError("concat_channels: incompatible input " + shape_str(s));
        C += s[1];
    }
    Tensor out({B, C, H, W});
    const std::size_t hw = static_cast<std::size_t>(H) * W;
    for (int b = 0; b < B; ++b) {
        std::size_t off = (static_cast<std::size_t>(b) * C) * hw;
        for (const Var& x : xs) {
            const int ci = x.shape()[1];
            const std::size_t nin = static_cast<std::size_t>(ci) * hw;
            std::copy_n(x.value().data.begin() + static_cast<std::ptrdiff_t>(b * nin), nin,
                        out.data.begin() + static_cast<std::ptrdiff_t>(off));
            off += nin;
        }
    }
    Var y = t->push(std::move(out), "concat_channels");
    std::vector<int> ids;
    std::vector<int> chans;
    for (const Var& x : xs) {
        ids.push_back(x.id);
        chans.push_back(x.shape()[1]);
    }
    t->set_backward(y, [t, ids, chans, iy = y.id, B, C, hw]() {
        const auto& gy = t->grad_mut(iy).data;
        for (int b = 0; b < B; ++b) {
            std::size_t off = (static_cast<std::size_t>(b) * C) * hw;
            for (std::size_t k = 0; k < ids.size(); ++k) {
                auto& gx = t->grad_mut(ids[k]).data;
                const std::size_t nin = static_cast<std::size_t>(chans[k]) * hw;
                for (std::size_t i = 0; i < nin; ++i) gx[b * nin + i] += gy[off + i];
                off += nin;
            }
        }
    });
    return y;
}

inline Var slice_channels(Var x, int c0, int c1) {
    const auto& s = x.shape();
    if (s.size() != 4) throw ShapeError("slice_channels: expect 4-D tensor");
    if (!(0 <= c0 && c0 < c1 && c1 <= s[1])) throw ShapeError("slice_channels: bad channel range");
    const int B = s[0], C = s[1], H = s[2], W = s[3], Cs = c1 - c0;
    const std::size_t hw = static_cast<std::size_t>(H) * W;
    Tensor out({B, Cs, H, W});
    for (int b = 0; b < B; ++b)
        for (int c = 0; c < Cs; ++c)
            std::copy_n(x.value().data.begin() +
                            static_cast<std::ptrdiff_t>(((static_cast<std::size_t>(b) * C) + c0 + c) * hw),
                        hw,
                        out.data.begin() +
                            static_cast<std::ptrdiff_t>(((static_cast<std::size_t>(b) * Cs) + c) * hw));
    Tape* t = x.tape;
    Var y = t->push(std::move(out), "slice_channels");
    t->set_backward(y, [t, ix = x.id, iy = y.id, B, C, Cs, c0, hw]() {
        const auto& gy = t->grad_mut(iy).data;
        auto& gx = t->grad_mut(ix).data;
        for (int b = 0; b < B; ++b)
            for (int c = 0; c < Cs; ++c) {
                const std::size_t src = ((static_cast<std::size_t>(b) * Cs) + c) * hw;
                const std::size_t dst = ((static_cast<std::size_t>(b) * C) + c0 + c) * hw;
                for (std::size_t i = 0; i < hw; ++i) gx[dst + i] += gy[src + i];
            }
    });
    return y;
}

// ---- reductions / broadcasts ----

inline Var sum_all(Var x) {
    Tape* t = x.tape;
    const std::size_t n = x.value().size();
    double acc = 0.0;
    for (double v : x.value().data) acc += v;
    Var y = t->push(Tensor({1}, {acc}), "sum_all");
    t->set_backward(y, [t, ix = x.id, iy = y.id, n]() {
        const double g = t->grad_mut(iy).data[0];
        auto& gx = t->grad_mut(ix).data;
        for (std::size_t i = 0; i < n; ++i) gx[i] += g;
    });
    return y;
}

inline Var mean_all(Var x) {
    const std::size_t n = x.value().size();
    return mul_scalar(sum_all(x), 1.0 / static_cast<double>(n));
}

// out = s * x where s is a scalar tensor [1]; gradient flows into both.
inline Var smul(Var s, Var x) {
    if (s.value().size() != 1) throw ShapeError("smul: scale must be scalar");
    if (s.tape != x.tape) throw ShapeError("smul: operands on different tapes");
    Tape* t = x.tape;
    const std::size_t n = x.value().size();
    const double sv = s.value().data[0];
    Tensor out(x.shape());
    for (std::size_t i = 0; i < n; ++i) out.data[i] = sv * x.value().data[i];
    Var y = t->push(std::move(out), "smul");
    t->set_backward(y, [t, is = s.id, ix = x.id, iy = y.id, n]() {
        const auto& gy = t->grad_mut(iy).data;
        const auto& xv = t->value(ix).data;
        const double sval = t->value(is).data[0];
        auto& gx = t->grad_mut(ix).data;
        double gs = 0.0;
        for (std::size_t i = 0; i < n; ++i) {
            gx[i] += gy[i] * sval;
            gs += gy[i] * xv[i];
        }
        t->grad_mut(is).data[0] += gs;
    });
    return y;
}

// Global average pool over H,W: [B,C,H,W] -> [B,C,1,1].
inline Var gap_hw(Var x) {
    const auto& s = x.shape();
    if (s.size() != 4) throw ShapeError("gap_hw: expect 4-D tensor");
    const int B = s[0], C = s[1];
    const std::size_t hw = static_cast<std::size_t>(s[2]) * s[3];
    Tensor out({B, C, 1, 1});
    for (int b = 0; b < B; ++b)
        for (int c = 0; c < C; ++c) {
            double acc = 0.0;
            const std::size_t base = (static_cast<std::size_t>(b) * C + c) * hw;
            for (std::size_t i = 0; i < hw; ++i) acc += x.value().data[base + i];
            out.data[static_cast<std::size_t>(b) * C + c] = acc / static_cast<double>(hw);
        }
    Tape* t = x.tape;
    Var y = t->push(std::move(out), "gap_hw");
    t->set_backward(y, [t, ix = x.id, iy = y.id, B, C, hw]() {
        const auto& gy = t->grad_mut(iy).data;
        auto& gx = t->grad_mut(ix).data;
        const double inv = 1.0 / static_cast<double>(hw);
        for (int b = 0; b < B; ++b)
            for (int c = 0; c < C; ++c) {
                const double g = gy[static_cast<std::size_t>(b) * C + c] * inv;
                const std::size_t base = (static_cast<std::size_t>(b) * C + c) * hw;
                for (std::size_t i = 0; i < hw; ++i) gx[base + i] += g;
            }
    });
    return y;
}

// Per-channel rescale: out[b,c,h,w] = x[b,c,h,w] * s[b,c,0,0].
inline Var scale_channels(Var x, Var s) {
    const auto& xs = x.shape();
    const auto& ss = s.shape();
    if (xs.size() != 4 || ss.size() != 4 || ss[0] != xs[0] || ss[1] != xs[1] || ss[2] != 1 || ss[3] != 1)
        throw ShapeError("scale_channels: scale must be [B,C,1,1] matching x");
    if (x.tape != s.tape) throw ShapeError("scale_channels: operands on different tapes");
    const int B = xs[0], C = xs[1];
    const std::size_t hw = static_cast<std::size_t>(xs[2]) * xs[3];
    Tensor out(xs);
    for (int b = 0; b < B; ++b)
        for (int c = 0; c < C; ++c) {
            const double sv = s.value().data[static_cast<std::size_t>(b) * C + c];
            const std::size_t base = (static_cast<std::size_t>(b) * C + c) * hw;
            for (std::size_t i = 0; i < hw; ++i) out.data[base + i] = x.value().data[base + i] * sv;
        }
    Tape* t = x.tape;
    Var y = t->push(std::move(out), "scale_channels");
    t->set_backward(y, [t, ix = x.id, is = s.id, iy = y.id, B, C, hw]() {
        const auto& gy = t->grad_mut(iy).data;
        const auto& xv = t->value(ix).data;
        const auto& sv = t->value(is).data;
        auto& gx = t->grad_mut(ix).data;
        auto& gs = t->grad_mut(is).data;
        for (int b = 0; b < B; ++b)
            for (int c = 0; c < C; ++c) {
                const std::size_t sc = static_cast<std::size_t>(b) * C + c;
                const std::size_t base = sc * hw;
                double acc = 0.0;
                for (std::size_t i = 0; i < hw; ++i) {
                    gx[base + i] += gy[base + i] * sv[sc];
                    acc += gy[base + i] * xv[base + i];
                }
                gs[sc] += acc;
            }
    });
    return y;
}

// Mean over the channel dimension: [B,C,H,W] -> [B,1,H,W].
inline Var mean_channels(Var x) {
    const auto& s = x.shape();
    if (s.size() != 4) throw ShapeError("mean_channels: expect 4-D tensor");
    const int B = s[0], C = s[1];
    const std::size_t hw = static_cast<std::size_t>(s[2]) * s[3];
    Tensor out({B, 1, s[2], s[3]});
    const double inv = 1.0 / C;
    for (int b = 0; b < B; ++b)
        for (std::size_t i = 0; i < hw; ++i) {
            double acc = 0.0;
            for (int c = 0; c < C; ++c)
                acc += x.value().data[(static_cast<std::size_t>(b) * C + c) * hw + i];
            out.data[static_cast<std::size_t>(b) * hw + i] = acc * inv;
        }
    Tape* t = x.tape;
    Var y = t->push(std::move(out), "mean_channels");
    t->set_backward(y, [t, ix = x.id, iy = y.id, B, C, hw, inv]() {
        const auto& gy = t->grad_mut(iy).data;
        auto& gx = t->grad_mut(ix).data;
        for (int b = 0; b < B; ++b)
            for (int c = 0; c < C; ++c)
                for (std::size_t i = 0; i < hw; ++i)
                    gx[(static_cast<std::size_t>(b) * C + c) * hw + i] +=
                        gy[static_cast<std::size_t>(b) * hw + i] * inv;
    });
    return y;
}

// ---- convolutions ----

namespace detail {

inline int floor_div(int a, int b) {
    const int q = a / b, r = a % b;
    return (r != 0 && ((r < 0) != (b < 0))) ? q - 1 : q;
}
inline int ceil_div(int a, int b) { return -floor_div(-a, b); }

} // namespace detail

// Cross-correlation plus bias. x [B,Cin,H,W], w [Cout,Cin,k,k], b [Cout].
// All loops are gather-form: each output element is produced by exactly one
// fixed-order reduction, so results are bit-identical for any thread count.
// Tap bounds are hoisted out of the inner loops; the reduction order is the
// same as the naive loop with skipped out-of-range taps.
inline Var conv2d(Var x, Var w, Var b, int stride, int pad) {
    const auto& xs = x.shape();
    const auto& ws = w.shape();
    const auto& bs = b.shape();
    if (xs.size() != 4 || ws.size() != 4 || bs.size() != 1)
        throw ShapeError("conv2d: expect x[B,C,H,W], w[Co,Ci,k,k], b[Co]");
    if (ws[1] != xs[1]) throw ShapeError("conv2d: channel mismatch");
    if (ws[2] != ws[3]) throw ShapeError("conv2d: kernel must be square");
    if (bs[0] != ws[0]) throw ShapeError("conv2d: bias size mismatch");
    if (stride < 1 || pad < 0) throw ShapeError("conv2d: bad stride/pad");
    const int B = xs[0], Ci = xs[1], H = xs[2], W = xs[3];
    const int Co = ws[0], K = ws[2];
    if ((H + 2 * pad - K) % stride != 0 || (W + 2 * pad - K) % stride != 0)
        throw ShapeError("conv2d: non-integral output size");
    const int Ho = (H + 2 * pad - K) / stride + 1;
    const int Wo = (W + 2 * pad - K) / stride + 1;
    if (Ho <= 0 || Wo <= 0) throw ShapeError("conv2d: empty output");

    Tensor out({B, Co, Ho, Wo});
    {
        const double* xp = x.value().data.data();
        const double* wp = w.value().data.data();
        const double* bp = b.value().data.data();
        double* yp = out.data.data();
#pragma omp parallel for collapse(2) schedule(static)
        for (int bb = 0; bb < B; ++bb)
            for (int co = 0; co < Co; ++co)
                for (int oh = 0; oh < Ho; ++oh) {
                    const int base_h = oh * stride - pad;
                    const int ky0 = std::max(0, -base_h);
                    const int ky1 = std::min(K, H - base_h);
                    for (int ow = 0; ow < Wo; ++ow) {
                        const int base_w = ow * stride - pad;
                        const int kx0 = std::max(0, -base_w);
                        const int kx1 = std::min(K, W - base_w);
                        double acc = bp[co];
                        for (int ci = 0; ci < Ci; ++ci) {
                            const double* xc = xp + ((static_cast<std::size_t>(bb) * Ci + ci) * H) * W;
                            const double* wc = wp + ((static_cast<std::size_t>(co) * Ci + ci) * K) * K;
                            for (int ky = ky0; ky < ky1; ++ky) {
                                const double* xrow =
                                    xc + static_cast<std::size_t>(base_h + ky) * W + base_w;
                                const double* wrow = wc + ky * K;
                                for (int kx = kx0; kx < kx1; ++kx) acc += xrow[kx] * wrow[kx];
                            }
                        }
                        yp[((static_cast<std::size_t>(bb) * Co + co) * Ho + oh) * Wo + ow] = acc;
                    }
                }
    }
    Tape* t = x.tape;
    Var y = t->push(std::move(out), "conv2d");
    t->set_backward(y, [t, ix = x.id, iw = w.id, ib = b.id, iy = y.id, B, Ci, H, W, Co, K, Ho, Wo,
                        stride, pad]() {
        const double* gy = t->grad_mut(iy).data.data();
        const double* xp = t->value(ix).data.data();
        const double* wp = t->value(iw).data.data();
        double* gx = t->grad_mut(ix).data.data();
        double* gw = t->grad_mut(iw).data.data();
        double* gb = t->grad_mut(ib).data.data();
        // d/dx: gather over input positions. Valid taps satisfy
        // ky == (ih+pad) (mod stride) with 0 <= (ih+pad-ky)/stride < Ho.
#pragma omp parallel for collapse(2) schedule(static)
        for (int bb = 0; bb < B; ++bb)
            for (int ci = 0; ci < Ci; ++ci)
                for (int ih = 0; ih < H; ++ih) {
                    const int th = ih + pad;
                    int ky_lo = std::max(0, th - stride * (Ho - 1));
                    ky_lo += (th - ky_lo) % stride;
                    const int ky_hi = std::min(K - 1, th);
                    for (int iw2 = 0; iw2 < W; ++iw2) {
                        const int tw = iw2 + pad;
                        int kx_lo = std::max(0, tw - stride * (Wo - 1));
                        kx_lo += (tw - kx_lo) % stride;
                        const int kx_hi = std::min(K - 1, tw);
                        double acc = 0.0;
                        for (int co = 0; co < Co; ++co) {
                            const double* gc = gy + ((static_cast<std::size_t>(bb) * Co + co) * Ho) * Wo;
                            const double* wc = wp + ((static_cast<std::size_t>(co) * Ci + ci) * K) * K;
                            for (int ky = ky_lo; ky <= ky_hi; ky += stride) {
                                const double* grow = gc + static_cast<std::size_t>((th - ky) / stride) * Wo;
                                const double* wrow = wc + ky * K;
                                for (int kx = kx_lo; kx <= kx_hi; kx += stride)
                                    acc += grow[(tw - kx) / stride] * wrow[kx];
                            }
                        }
                        gx[((static_cast<std::size_t>(bb) * Ci + ci) * H + ih) * W + iw2] += acc;
                    }
                }
        // d/dw: gather over weight entries.
#pragma omp parallel for collapse(2) schedule(static)
        for (int co = 0; co < Co; ++co)
            for (int ci = 0; ci < Ci; ++ci)
                for (int ky = 0; ky < K; ++ky)
                    for (int kx = 0; kx < K; ++kx) {
                        const int oh0 = std::max(0, detail::ceil_div(pad - ky, stride));
                        const int oh1 = std::min(Ho - 1, detail::floor_div(H - 1 + pad - ky, stride));
                        const int ow0 = std::max(0, detail::ceil_div(pad - kx, stride));
                        const int ow1 = std::min(Wo - 1, detail::floor_div(W - 1 + pad - kx, stride));
                        double acc = 0.0;
                        for (int bb = 0; bb < B; ++bb) {
                            const double* gc = gy + ((static_cast<std::size_t>(bb) * Co + co) * Ho) * Wo;
                            const double* xc = xp + ((static_cast<std::size_t>(bb) * Ci + ci) * H) * W;
                            for (int oh = oh0; oh <= oh1; ++oh) {
                                const double* grow = gc + static_cast<std::size_t>(oh) * Wo;
                                const double* xrow =
                                    xc + static_cast<std::size_t>(oh * stride - pad + ky) * W +
                                    (-pad + kx);
                                for (int ow = ow0; ow <= ow1; ++ow)
                                    acc += grow[ow] * xrow[ow * stride];
                            }
                        }
                        gw[((static_cast<std::size_t>(co) * Ci + ci) * K + ky) * K + kx] += acc;
                    }
        // d/db
        for (int co = 0; co < Co; ++co) {
            double acc = 0.0;
            for (int bb = 0; bb < B; ++bb) {
                const double* gc = gy + ((static_cast<std::size_t>(bb) * Co + co) * Ho) * Wo;
                for (std::size_t i = 0; i < static_cast<std::size_t>(Ho) * Wo; ++i) acc += gc[i];
            }
            gb[co] += acc;
        }
    });
    return y;
}

// Transposed convolution (gradient-of-conv semantics).
// x [B,Cin,H,W], w [Cin,Cout,k,k], b [Cout]; H_out = (H-1)*stride - 2*pad + k.
inline Var transposed_conv2d(Var x, Var w, Var b, int stride, int pad) {
    const auto& xs = x.shape();
    const auto& ws = w.shape();
    const auto& bs = b.shape();
    if (xs.size() != 4 || ws.size() != 4 || bs.size() != 1)
        throw ShapeError("transposed_conv2d: expect x[B,Ci,H,W], w[Ci,Co,k,k], b[Co]");
    if (ws[0] != xs[1]) throw ShapeError("transposed_conv2d: channel mismatch");
    if (ws[2] != ws[3]) throw ShapeError("transposed_conv2d: kernel must be square");
    if (bs[0] != ws[1]) throw ShapeError("transposed_conv2d: bias size mismatch");
    if (stride < 1 || pad < 0) throw ShapeError("transposed_conv2d: bad stride/pad");
    const int B = xs[0], Ci = xs[1], H = xs[2], W = xs[3];
    const int Co = ws[1], K = ws[2];
    const int Ho = (H - 1) * stride - 2 * pad + K;
    const int Wo = (W - 1) * stride - 2 * pad + K;
    if (Ho <= 0 || Wo <= 0) throw ShapeError("transposed_conv2d: empty output");

    Tensor out({B, Co, Ho, Wo});
    {
        const double* xp = x.value().data.data();
        const double* wp = w.value().data.data();
        const double* bp = b.value().data.data();
        double* yp = out.data.data();
#pragma omp parallel for collapse(2) schedule(static)
        for (int bb = 0; bb < B; ++bb)
            for (int co = 0; co < Co; ++co)
                for (int oh = 0; oh < Ho; ++oh) {
                    const int th = oh + pad;
                    int ky_lo = std::max(0, th - stride * (H - 1));
                    ky_lo += (th - ky_lo) % stride;
                    const int ky_hi = std::min(K - 1, th);
                    for (int ow = 0; ow < Wo; ++ow) {
                        const int tw = ow + pad;
                        int kx_lo = std::max(0, tw - stride * (W - 1));
                        kx_lo += (tw - kx_lo) % stride;
                        const int kx_hi = std::min(K - 1, tw);
                        double acc = bp[co];
                        for (int ci = 0; ci < Ci; ++ci) {
                            const double* xc = xp + ((static_cast<std::size_t>(bb) * Ci + ci) * H) * W;
                            const double* wc = wp + ((static_cast<std::size_t>(ci) * Co + co) * K) * K;
                            for (int ky = ky_lo; ky <= ky_hi; ky += stride) {
                                const double* xrow = xc + static_cast<std::size_t>((th - ky) / stride) * W;
                                const double* wrow = wc + ky * K;
                                for (int kx = kx_lo; kx <= kx_hi; kx += stride)
                                    acc += xrow[(tw - kx) / stride] * wrow[kx];
                            }
                        }
                        yp[((static_cast<std::size_t>(bb) * Co + co) * Ho + oh) * Wo + ow] = acc;
                    }
                }
    }
    Tape* t = x.tape;
    Var y = t->push(std::move(out), "transposed_conv2d");
    t->set_backward(y, [t, ix = x.id, iw = w.id, ib = b.id, iy = y.id, B, Ci, H, W, Co, K, Ho, Wo,
                        stride, pad]() {
        const double* gy = t->grad_mut(iy).data.data();
        const double* xp = t->value(ix).data.data();
        const double* wp = t->value(iw).data.data();
        double* gx = t->grad_mut(ix).data.data();
        double* gw = t->grad_mut(iw).data.data();
        double* gb = t->grad_mut(ib).data.data();
        // d/dx is an ordinary convolution of gy with w.
#pragma omp parallel for collapse(2) schedule(static)
        for (int bb = 0; bb < B; ++bb)
            for (int ci = 0; ci < Ci; ++ci)
                for (int ih = 0; ih < H; ++ih) {
                    const int base_h = ih * stride - pad;
                    const int ky0 = std::max(0, -base_h);
                    const int ky1 = std::min(K, Ho - base_h);
                    for (int iw2 = 0; iw2 < W; ++iw2) {
                        const int base_w = iw2 * stride - pad;
                        const int kx0 = std::max(0, -base_w);
                        const int kx1 = std::min(K, Wo - base_w);
                        double acc = 0.0;
                        for (int co = 0; co < Co; ++co) {
                            const double* gc = gy + ((static_cast<std::size_t>(bb) * Co + co) * Ho) * Wo;
                            const double* wc = wp + ((static_cast<std::size_t>(ci) * Co + co) * K) * K;
                            for (int ky = ky0; ky < ky1; ++ky) {
                                const double* grow =
                                    gc + static_cast<std::size_t>(base_h + ky) * Wo + base_w;
                                const double* wrow = wc + ky * K;
                                for (int kx = kx0; kx < kx1; ++kx) acc += grow[kx] * wrow[kx];
                            }
                        }
                        gx[((static_cast<std::size_t>(bb) * Ci + ci) * H + ih) * W + iw2] += acc;
                    }
                }
        // d/dw
#pragma omp parallel for collapse(2) schedule(static)
        for (int ci = 0; ci < Ci; ++ci)
            for (int co = 0; co < Co; ++co)
                for (int ky = 0; ky < K; ++ky)
                    for (int kx = 0; kx < K; ++kx) {
                        const int ih0 = std::max(0, detail::ceil_div(pad - ky, stride));
                        const int ih1 = std::min(H - 1, detail::floor_div(Ho - 1 + pad - ky, stride));
                        const int iw0 = std::max(0, detail::ceil_div(pad - kx, stride));
                        const int iw1 = std::min(W - 1, detail::floor_div(Wo - 1 + pad - kx, stride));
                        double acc = 0.0;
                        for (int bb = 0; bb < B; ++bb) {
                            const double* gc = gy + ((static_cast<std::size_t>(bb) * Co + co) * Ho) * Wo;
                            const double* xc = xp + ((static_cast<std::size_t>(bb) * Ci + ci) * H) * W;
                            for (int ih = ih0; ih <= ih1; ++ih) {
                                const double* xrow = xc + static_cast<std::size_t>(ih) * W;
                                const double* grow =
                                    gc + static_cast<std::size_t>(ih * stride - pad + ky) * Wo +
                                    (-pad + kx);
                                for (int iw2 = iw0; iw2 <= iw1; ++iw2)
                                    acc += xrow[iw2] * grow[iw2 * stride];
                            }
                        }
                        gw[((static_cast<std::size_t>(ci) * Co + co) * K + ky) * K + kx] += acc;
                    }
        for (int co = 0; co < Co; ++co) {
            double acc = 0.0;
            for (int bb = 0; bb < B; ++bb) {
                const double* gc = gy + ((static_cast<std::size_t>(bb) * Co + co) * Ho) * Wo;
                for (std::size_t i = 0; i < static_cast<std::size_t>(Ho) * Wo; ++i) acc += gc[i];
            }
            gb[co] += acc;
        }
    });
    return y;
}

// ---- batch normalization ----

enum class BnMode { Train, Eval };

// Spatial batch norm over (B,H,W) per channel.
// Train mode normalizes by biased batch statistics, differentiates through
// them, and updates the running state in place:
//   running = (1 - momentum) * running + momentum * batch_stat.
// Eval mode normalizes by the running state (constants for the gradient).
inline Var batch_norm(Var x, Var gamma, Var beta, Tensor* running_mean, Tensor* running_var,
                      BnMode mode, double momentum = 0.1, double eps = 1e-5) {
    const auto& xs = x.shape();
    if (xs.size() != 4) throw ShapeError("batch_norm: expect 4-D tensor");
    const int B = xs[0], C = xs[1], H = xs[2], W = xs[3];
    if (gamma.shape() != std::vector<int>{C} || beta.shape() != std::vector<int>{C})
        throw ShapeError("batch_norm: affine parameters must be [C]");
    if (!running_mean || !running_var || running_mean->shape != std::vector<int>{C} ||
        running_var->shape != std::vector<int>{C})
        throw ShapeError("batch_norm: running state must be [C]");
    const std::size_t hw = static_cast<std::size_t>(H) * W;
    const std::size_t m = static_cast<std::size_t>(B) * hw;
    if (mode == BnMode::Train && m < 2)
        throw DomainError("batch_norm: train mode needs at least 2 elements per channel");

    auto mean_t = std::make_shared<std::vector<double>>(C, 0.0);
    auto inv_std_t = std::make_shared<std::vector<double>>(C, 0.0);

    const double* xp = x.value().data.data();
    if (mode == BnMode::Train) {
        for (int c = 0; c < C; ++c) {
            double mu = 0.0;
            for (int b = 0; b < B; ++b) {
                const double* xc = xp + (static_cast<std::size_t>(b) * C + c) * hw;
                for (std::size_t i = 0; i < hw; ++i) mu += xc[i];
            }
            mu /= static_cast<double>(m);
            double var = 0.0;
            for (int b = 0; b < B; ++b) {
                const double* xc = xp + (static_cast<std::size_t>(b) * C + c) * hw;
                for (std::size_t i = 0; i < hw; ++i) {
                    const double d = xc[i] - mu;
                    var += d * d;
                }
            }
            var /= static_cast<double>(m);
            (*mean_t)[c] = mu;
            (*inv_std_t)[c] = 1.0 / std::sqrt(var + eps);
            running_mean->data[c] = (1.0 - momentum) * running_mean->data[c] + momentum * mu;
            running_var->data[c] = (1.0 - momentum) * running_var->data[c] + momentum * var;
        }
    } else {
        for (int c = 0; c < C; ++c) {
            (*mean_t)[c] = running_mean->data[c];
            (*inv_std_t)[c] = 1.0 / std::sqrt(running_var->data[c] + eps);
        }
    }

    Tensor out(xs);
    {
        const double* gp = gamma.value().data.data();
        const double* bp = beta.value().data.data();
        for (int b = 0; b < B; ++b)
            for (int c = 0; c < C; ++c) {
                const std::size_t base = (static_cast<std::size_t>(b) * C + c) * hw;
                const double mu = (*mean_t)[c], is = (*inv_std_t)[c], g = gp[c], be = bp[c];
                for (std::size_t i = 0; i < hw; ++i)
                    out.data[base + i] = (xp[base + i] - mu) * is * g + be;
            }
    }
    Tape* t = x.tape;
    Var y = t->push(std::move(out), "batch_norm");
    const bool train = mode == BnMode::Train;
    t->set_backward(y, [t, ix = x.id, ig = gamma.id, ibt = beta.id, iy = y.id, B, C, hw, m, mean_t,
                        inv_std_t, train]() {
        const auto& gy = t->grad_mut(iy).data;
        const auto& xv = t->value(ix).data;
        const auto& gv = t->value(ig).data;
        auto& gx = t->grad_mut(ix).data;
        auto& gg = t->grad_mut(ig).data;
        auto& gb = t->grad_mut(ibt).data;
        for (int c = 0; c < C; ++c) {
            const double mu = (*mean_t)[c], is = (*inv_std_t)[c], g = gv[c];
            double sum_dy = 0.0, sum_dy_xhat = 0.0;
            for (int b = 0; b < B; ++b) {
                const std::size_t base = (static_cast<std::size_t>(b) * C + c) * hw;
                for (std::size_t i = 0; i < hw; ++i) {
                    const double xhat = (xv[base + i] - mu) * is;
                    sum_dy += gy[base + i];
                    sum_dy_xhat += gy[base + i] * xhat;
                }
            }
            gg[c] += sum_dy_xhat;
            gb[c] += sum_dy;
            if (train) {
                const double inv_m = 1.0 / static_cast<double>(m);
                for (int b = 0; b < B; ++b) {
                    const std::size_t base = (static_cast<std::size_t>(b) * C + c) * hw;
                    for (std::size_t i = 0; i < hw; ++i) {
                        const double xhat = (xv[base + i] - mu) * is;
                        gx[base + i] +=
                            g * is * (gy[base + i] - inv_m * sum_dy - xhat * inv_m * sum_dy_xhat);
                    }
                }
            } else {
                for (int b = 0; b < B; ++b) {
                    const std::size_t base = (static_cast<std::size_t>(b) * C + c) * hw;
                    for (std::size_t i = 0; i < hw; ++i) gx[base + i] += gy[base + i] * g * is;
                }
            }
        }
    });
    return y;
}

} // namespace ad

} // namespace iid
