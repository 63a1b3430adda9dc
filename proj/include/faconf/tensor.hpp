#pragma once

#include <algorithm>
#include <cmath>
#include <cstddef>
#include <functional>
#include <memory>
#include <numeric>
#include <sstream>
#include <string>
#include <unordered_set>
#include <utility>
#include <vector>

#include "faconf/errors.hpp"
#include "faconf/rng.hpp"

namespace faconf {

using Shape = std::vector<std::size_t>;

inline std::string shape_str(const Shape& s) {
    std::ostringstream os;
    os << "[";
    for (std::size_t i = 0; i < s.size(); ++i) os << (i ? "x" : "") << s[i];
    os << "]";
    return os.str();
}

inline std::size_t shape_numel(const Shape& s) {
    return std::accumulate(s.begin(), s.end(), std::size_t{1}, std::multiplies<>());
}

namespace detail {

// One node of the dynamic computation graph. The backward closure adds this
// node's gradient contribution into its parents' grad buffers; it holds
// shared_ptrs to the parents and a raw pointer to itself (the closure is
// owned by the node, so the self pointer cannot dangle).
struct TensorNode {
    Shape shape;
    std::vector<double> data;
    std::vector<double> grad;
    bool requires_grad = false;
    std::vector<std::shared_ptr<TensorNode>> parents;
    std::function<void()> backprop;

    std::size_t numel() const { return data.size(); }

    void ensure_grad() {
        if (grad.size() != data.size()) grad.assign(data.size(), 0.0);
    }
};

}  // namespace detail

// Dense row-major f64 tensor with optional reverse-mode gradient tracking.
// Value-semantic handle: copies share the underlying node.
class Tensor {
public:
    Tensor() : node_(std::make_shared<detail::TensorNode>()) {}

    Tensor(Shape shape, double fill = 0.0, bool requires_grad = false)
        : node_(std::make_shared<detail::TensorNode>()) {
        node_->shape = std::move(shape);
        node_->data.assign(shape_numel(node_->shape), fill);
        node_->requires_grad = requires_grad;
    }

    Tensor(Shape shape, std::vector<double> values, bool requires_grad = false)
        : node_(std::make_shared<detail::TensorNode>()) {
        if (shape_numel(shape) != values.size())
            throw ShapeError("tensor init: shape " + shape_str(shape) + " does not match " +
                             std::to_string(values.size()) + " values");
        node_->shape = std::move(shape);
        node_->data = std::move(values);
        node_->requires_grad = requires_grad;
    }

    static Tensor scalar(double v, bool requires_grad = false) {
        return Tensor(Shape{1}, std::vector<double>{v}, requires_grad);
    }

    static Tensor randn(const Shape& shape, RngState& rng, double stddev = 1.0,
                        bool requires_grad = false) {
        Tensor t(shape, 0.0, requires_grad);
        for (double& v : t.values()) v = stddev * rng.normal();
        return t;
    }

    const Shape& shape() const { return node_->shape; }
    std::size_t ndim() const { return node_->shape.size(); }
    std::size_t dim(std::size_t i) const { return node_->shape.at(i); }
    std::size_t size() const { return node_->data.size(); }

    std::vector<double>& values() { return node_->data; }
    const std::vector<double>& values() const { return node_->data; }

    bool requires_grad() const { return node_->requires_grad; }
    void set_requires_grad(bool flag) { node_->requires_grad = flag; }

    bool has_grad() const { return node_->grad.size() == node_->data.size(); }
    std::vector<double>& grad() {
        node_->ensure_grad();
        return node_->grad;
    }
    const std::vector<double>& grad() const {
        node_->ensure_grad();
        return node_->grad;
    }

    void zero_grad() { node_->grad.assign(node_->data.size(), 0.0); }

    double operator[](std::size_t flat) const { return node_->data[flat]; }
    double& operator[](std::size_t flat) { return node_->data[flat]; }

    double item() const {
        if (size() != 1) throw ShapeError("item() on non-scalar tensor " + shape_str(shape()));
        return node_->data[0];
    }

    // Same values, no history, no gradient.
    Tensor detach() const { return Tensor(node_->shape, node_->data, false); }

    std::shared_ptr<detail::TensorNode> node() const { return node_; }

private:
    friend Tensor make_result(Shape shape, bool track, std::vector<std::shared_ptr<detail::TensorNode>> parents);
    std::shared_ptr<detail::TensorNode> node_;
};

inline Tensor make_result(Shape shape, bool track,
                          std::vector<std::shared_ptr<detail::TensorNode>> parents) {
    Tensor t(std::move(shape));
    if (track) {
        t.node_->requires_grad = true;
        t.node_->parents = std::move(parents);
    }
    return t;
}

inline bool any_requires_grad(std::initializer_list<const Tensor*> ts) {
    for (const Tensor* t : ts)
        if (t->requires_grad()) return true;
    return false;
}

inline void check_finite(const Tensor& t, const char* op) {
    for (double v : t.values())
        if (!std::isfinite(v)) throw DomainError(std::string(op) + " produced a non-finite value");
}

// ---------------------------------------------------------------------------
// elementwise arithmetic

inline void check_same_shape(const Tensor& a, const Tensor& b, const char* op) {
    if (a.shape() != b.shape())
        throw ShapeError(std::string(op) + ": shapes " + shape_str(a.shape()) + " and " +
                         shape_str(b.shape()) + " differ");
}

inline Tensor add(const Tensor& a, const Tensor& b) {
    check_same_shape(a, b, "add");
    const bool track = any_requires_grad({&a, &b});
    Tensor out = make_result(a.shape(), track, {a.node(), b.node()});
    for (std::size_t i = 0; i < a.size(); ++i) out[i] = a[i] + b[i];
    if (track) {
        auto an = a.node(), bn = b.node();
        auto* on = out.node().get();
        out.node()->backprop = [an, bn, on] {
            if (an->requires_grad) {
                an->ensure_grad();
                for (std::size_t i = 0; i < on->grad.size(); ++i) an->grad[i] += on->grad[i];
            }
            if (bn->requires_grad) {
                bn->ensure_grad();
                for (std::size_t i = 0; i < on->grad.size(); ++i) bn->grad[i] += on->grad[i];
            }
        };
    }
    return out;
}

inline Tensor sub(const Tensor& a, const Tensor& b) {
    check_same_shape(a, b, "sub");
    const bool track = any_requires_grad({&a, &b});
    Tensor out = make_result(a.shape(), track, {a.node(), b.node()});
    for (std::size_t i = 0; i < a.size(); ++i) out[i] = a[i] - b[i];
    if (track) {
        auto an = a.node(), bn = b.node();
        auto* on = out.node().get();
        out.node()->backprop = [an, bn, on] {
            if (an->requires_grad) {
                an->ensure_grad();
                for (std::size_t i = 0; i < on->grad.size(); ++i) an->grad[i] += on->grad[i];
            }
            if (bn->requires_grad) {
                bn->ensure_grad();
                for (std::size_t i = 0; i < on->grad.size(); ++i) bn->grad[i] -= on->grad[i];
            }
        };
    }
    return out;
}

inline Tensor mul(const Tensor& a, const Tensor& b) {
    check_same_shape(a, b, "mul");
    const bool track = any_requires_grad({&a, &b});
    Tensor out = make_result(a.shape(), track, {a.node(), b.node()});
    for (std::size_t i = 0; i < a.size(); ++i) out[i] = a[i] * b[i];
    if (track) {
        auto an = a.node(), bn = b.node();
        auto* on = out.node().get();
        out.node()->backprop = [an, bn, on] {
            if (an->requires_grad) {
                an->ensure_grad();
                for (std::size_t i = 0; i < on->grad.size(); ++i)
                    an->grad[i] += on->grad[i] * bn->data[i];
            }
            if (bn->requires_grad) {
                bn->ensure_grad();
                for (std::size_t i = 0; i < on->grad.size(); ++i)
                    bn->grad[i] += on->grad[i] * an->data[i];
            }
        };
    }
    return out;
}

inline Tensor mul_const(const Tensor& a, double c) {
    const bool track = a.requires_grad();
    Tensor out = make_result(a.shape(), track, {a.node()});
    for (std::size_t i = 0; i < a.size(); ++i) out[i] = a[i] * c;
    if (track) {
        auto an = a.node();
        auto* on = out.node().get();
        out.node()->backprop = [an, on, c] {
            an->ensure_grad();
            for (std::size_t i = 0; i < on->grad.size(); ++i) an->grad[i] += on->grad[i] * c;
        };
    }
    return out;
}

// x scaled by a scalar tensor s (gradient flows to both).
inline Tensor scale(const Tensor& x, const Tensor& s) {
    if (s.size() != 1) throw ShapeError("scale: scale factor must be scalar, got " + shape_str(s.shape()));
    const bool track = any_requires_grad({&x, &s});
    Tensor out = make_result(x.shape(), track, {x.node(), s.node()});
    const double sv = s[0];
    for (std::size_t i = 0; i < x.size(); ++i) out[i] = x[i] * sv;
    if (track) {
        auto xn = x.node(), sn = s.node();
        auto* on = out.node().get();
        out.node()->backprop = [xn, sn, on] {
            if (xn->requires_grad) {
                xn->ensure_grad();
                const double sv2 = sn->data[0];
                for (std::size_t i = 0; i < on->grad.size(); ++i) xn->grad[i] += on->grad[i] * sv2;
            }
            if (sn->requires_grad) {
                sn->ensure_grad();
                double acc = 0.0;
                for (std::size_t i = 0; i < on->grad.size(); ++i) acc += on->grad[i] * xn->data[i];
                sn->grad[0] += acc;
            }
        };
    }
    return out;
}

// ---------------------------------------------------------------------------
// linear algebra

inline Tensor matmul(const Tensor& a, const Tensor& b) {
    if (a.ndim() != 2 || b.ndim() != 2 || a.dim(1) != b.dim(0))
        throw ShapeError("matmul: incompatible shapes " + shape_str(a.shape()) + " and " +
                         shape_str(b.shape()));
    const std::size_t m = a.dim(0), k = a.dim(1), n = b.dim(1);
    const bool track = any_requires_grad({&a, &b});
    Tensor out = make_result({m, n}, track, {a.node(), b.node()});
    const double* ad = a.values().data();
    const double* bd = b.values().data();
    double* od = out.values().data();
    for (std::size_t i = 0; i < m; ++i)
        for (std::size_t p = 0; p < k; ++p) {
            const double av = ad[i * k + p];
            if (av == 0.0) continue;
            const double* brow = bd + p * n;
            double* orow = od + i * n;
            for (std::size_t j = 0; j < n; ++j) orow[j] += av * brow[j];
        }
    if (track) {
        auto an = a.node(), bn = b.node();
        auto* on = out.node().get();
        out.node()->backprop = [an, bn, on, m, k, n] {
            const double* g = on->grad.data();
            if (an->requires_grad) {
                an->ensure_grad();
                // dA = dC * B^T
                for (std::size_t i = 0; i < m; ++i)
                    for (std::size_t p = 0; p < k; ++p) {
                        double acc = 0.0;
                        const double* grow = g + i * n;
                        const double* brow = bn->data.data() + p * n;
                        for (std::size_t j = 0; j < n; ++j) acc += grow[j] * brow[j];
                        an->grad[i * k + p] += acc;
                    }
            }
            if (bn->requires_grad) {
                bn->ensure_grad();
                // dB = A^T * dC
                for (std::size_t i = 0; i < m; ++i)
                    for (std::size_t p = 0; p < k; ++p) {
                        const double av = an->data[i * k + p];
                        if (av == 0.0) continue;
                        const double* grow = g + i * n;
                        double* brow = bn->grad.data() + p * n;
                        for (std::size_t j = 0; j < n; ++j) brow[j] += av * grow[j];
                    }
            }
        };
    }
    return out;
}

inline Tensor matvec(const Tensor& a, const Tensor& x) {
    if (a.ndim() != 2 || x.ndim() != 1 || a.dim(1) != x.dim(0))
        throw ShapeError("matvec: incompatible shapes " + shape_str(a.shape()) + " and " +
                         shape_str(x.shape()));
    const std::size_t m = a.dim(0), k = a.dim(1);
    const bool track = any_requires_grad({&a, &x});
    Tensor out = make_result({m}, track, {a.node(), x.node()});
    for (std::size_t i = 0; i < m; ++i) {
        double acc = 0.0;
        for (std::size_t p = 0; p < k; ++p) acc += a[i * k + p] * x[p];
        out[i] = acc;
    }
    if (track) {
        auto an = a.node(), xn = x.node();
        auto* on = out.node().get();
        out.node()->backprop = [an, xn, on, m, k] {
            if (an->requires_grad) {
                an->ensure_grad();
                for (std::size_t i = 0; i < m; ++i)
                    for (std::size_t p = 0; p < k; ++p)
                        an->grad[i * k + p] += on->grad[i] * xn->data[p];
            }
            if (xn->requires_grad) {
                xn->ensure_grad();
                for (std::size_t i = 0; i < m; ++i)
                    for (std::size_t p = 0; p < k; ++p)
                        xn->grad[p] += on->grad[i] * an->data[i * k + p];
            }
        };
    }
    return out;
}

inline Tensor transpose2d(const Tensor& a) {
    if (a.ndim() != 2) throw ShapeError("transpose2d expects a matrix, got " + shape_str(a.shape()));
    const std::size_t m = a.dim(0), n = a.dim(1);
    const bool track = a.requires_grad();
    Tensor out = make_result({n, m}, track, {a.node()});
    for (std::size_t i = 0; i < m; ++i)
        for (std::size_t j = 0; j < n; ++j) out[j * m + i] = a[i * n + j];
    if (track) {
        auto an = a.node();
        auto* on = out.node().get();
        out.node()->backprop = [an, on, m, n] {
            an->ensure_grad();
            for (std::size_t i = 0; i < m; ++i)
                for (std::size_t j = 0; j < n; ++j) an->grad[i * n + j] += on->grad[j * m + i];
        };
    }
    return out;
}

// ---------------------------------------------------------------------------
// convolution

enum class Padding { Valid, Same };

// Cross-correlation (no kernel flip), the deep-learning convention.
// input [C_in x T], weight [C_out x C_in/groups x K], bias [C_out].
inline Tensor conv1d(const Tensor& input, const Tensor& weight, const Tensor& bias,
                     Padding padding = Padding::Valid, std::size_t stride = 1,
                     std::size_t groups = 1) {
    if (input.ndim() != 2 || weight.ndim() != 3)
        throw ShapeError("conv1d: input must be [C_in x T] and weight [C_out x C_in/groups x K], got " +
                         shape_str(input.shape()) + " and " + shape_str(weight.shape()));
    const std::size_t c_in = input.dim(0), t_in = input.dim(1);
    const std::size_t c_out = weight.dim(0), k = weight.dim(2);
    if (stride == 0) throw ConfigError("conv1d: stride must be positive");
    if (groups == 0 || c_in % groups != 0)
        throw ConfigError("conv1d: groups=" + std::to_string(groups) + " does not divide C_in=" +
                          std::to_string(c_in));
    if (c_out % groups != 0)
        throw ConfigError("conv1d: groups=" + std::to_string(groups) + " does not divide C_out=" +
                          std::to_string(c_out));
    const std::size_t cig = c_in / groups;
    if (weight.dim(1) != cig)
        throw ShapeError("conv1d: weight " + shape_str(weight.shape()) + " inconsistent with C_in=" +
                         std::to_string(c_in) + ", groups=" + std::to_string(groups));
    if (bias.ndim() != 1 || bias.dim(0) != c_out)
        throw ShapeError("conv1d: bias " + shape_str(bias.shape()) + " must be [" +
                         std::to_string(c_out) + "]");
    const std::size_t pad = (padding == Padding::Same) ? (k - 1) / 2 : 0;
    if (k > t_in + 2 * pad)
        throw ShapeError("conv1d: kernel " + std::to_string(k) + " exceeds padded length " +
                         std::to_string(t_in + 2 * pad));
    const std::size_t t_out = (t_in + 2 * pad - k) / stride + 1;

    const bool track = any_requires_grad({&input, &weight, &bias});
    Tensor out = make_result({c_out, t_out}, track, {input.node(), weight.node(), bias.node()});

    const std::size_t cog = c_out / groups;
    const double* in = input.values().data();
    const double* w = weight.values().data();
    double* od = out.values().data();
    for (std::size_t oc = 0; oc < c_out; ++oc) {
        const std::size_t g = oc / cog;
        const double b = bias[oc];
        double* orow = od + oc * t_out;
        for (std::size_t ot = 0; ot < t_out; ++ot) orow[ot] = b;
        for (std::size_t ic = 0; ic < cig; ++ic) {
            const double* irow = in + (g * cig + ic) * t_in;
            const double* wrow = w + (oc * cig + ic) * k;
            for (std::size_t kk = 0; kk < k; ++kk) {
                const double wv = wrow[kk];
                if (wv == 0.0) continue;
                // input index = ot*stride + kk - pad, clipped to [0, t_in)
                for (std::size_t ot = 0; ot < t_out; ++ot) {
                    const std::ptrdiff_t it =
                        static_cast<std::ptrdiff_t>(ot * stride + kk) - static_cast<std::ptrdiff_t>(pad);
                    if (it < 0 || it >= static_cast<std::ptrdiff_t>(t_in)) continue;
                    orow[ot] += wv * irow[it];
                }
            }
        }
    }

    if (track) {
        auto in_n = input.node(), w_n = weight.node(), b_n = bias.node();
        auto* on = out.node().get();
        out.node()->backprop = [in_n, w_n, b_n, on, c_in, t_in, c_out, k, pad, stride, t_out, cig,
                                cog] {
            const double* g = on->grad.data();
            if (b_n->requires_grad) {
                b_n->ensure_grad();
                for (std::size_t oc = 0; oc < c_out; ++oc) {
                    double acc = 0.0;
                    const double* grow = g + oc * t_out;
                    for (std::size_t ot = 0; ot < t_out; ++ot) acc += grow[ot];
                    b_n->grad[oc] += acc;
                }
            }
            if (w_n->requires_grad) {
                w_n->ensure_grad();
                for (std::size_t oc = 0; oc < c_out; ++oc) {
                    const std::size_t grp = oc / cog;
                    const double* grow = g + oc * t_out;
                    for (std::size_t ic = 0; ic < cig; ++ic) {
                        const double* irow = in_n->data.data() + (grp * cig + ic) * t_in;
                        double* wrow = w_n->grad.data() + (oc * cig + ic) * k;
                        for (std::size_t kk = 0; kk < k; ++kk) {
                            double acc = 0.0;
                            for (std::size_t ot = 0; ot < t_out; ++ot) {
                                const std::ptrdiff_t it = static_cast<std::ptrdiff_t>(ot * stride + kk) -
                                                          static_cast<std::ptrdiff_t>(pad);
                                if (it < 0 || it >= static_cast<std::ptrdiff_t>(t_in)) continue;
                                acc += grow[ot] * irow[it];
                            }
                            wrow[kk] += acc;
                        }
                    }
                }
            }
            if (in_n->requires_grad) {
                in_n->ensure_grad();
                for (std::size_t oc = 0; oc < c_out; ++oc) {
                    const std::size_t grp = oc / cog;
                    const double* grow = g + oc * t_out;
                    for (std::size_t ic = 0; ic < cig; ++ic) {
                        double* irow = in_n->grad.data() + (grp * cig + ic) * t_in;
                        const double* wrow = w_n->data.data() + (oc * cig + ic) * k;
                        for (std::size_t kk = 0; kk < k; ++kk) {
                            const double wv = wrow[kk];
                            if (wv == 0.0) continue;
                            for (std::size_t ot = 0; ot < t_out; ++ot) {
                                const std::ptrdiff_t it = static_cast<std::ptrdiff_t>(ot * stride + kk) -
                                                          static_cast<std::ptrdiff_t>(pad);
                                if (it < 0 || it >= static_cast<std::ptrdiff_t>(t_in)) continue;
                                irow[it] += wv * grow[ot];
                            }
                        }
                    }
                }
            }
        };
    }
    return out;
}

// ---------------------------------------------------------------------------
// nonlinearities and normalizations

enum class UnaryKind { Relu, Sigmoid, Elu, Log, Exp };

inline Tensor unary(const Tensor& x, UnaryKind kind) {
    const bool track = x.requires_grad();
    Tensor out = make_result(x.shape(), track, {x.node()});
    for (std::size_t i = 0; i < x.size(); ++i) {
        const double v = x[i];
        switch (kind) {
            case UnaryKind::Relu: out[i] = v > 0.0 ? v : 0.0; break;
            case UnaryKind::Sigmoid: out[i] = 1.0 / (1.0 + std::exp(-v)); break;
            case UnaryKind::Elu: out[i] = v > 0.0 ? v : std::expm1(v); break;
            case UnaryKind::Log:
                if (v <= 0.0) throw DomainError("log of non-positive value");
                out[i] = std::log(v);
                break;
            case UnaryKind::Exp: out[i] = std::exp(v); break;
        }
    }
    if (track) {
        auto xn = x.node();
        auto* on = out.node().get();
        out.node()->backprop = [xn, on, kind] {
            xn->ensure_grad();
            for (std::size_t i = 0; i < on->grad.size(); ++i) {
                double d = 0.0;
                const double v = xn->data[i];
                const double y = on->data[i];
                switch (kind) {
                    case UnaryKind::Relu: d = v > 0.0 ? 1.0 : 0.0; break;
                    case UnaryKind::Sigmoid: d = y * (1.0 - y); break;
                    case UnaryKind::Elu: d = v > 0.0 ? 1.0 : y + 1.0; break;
                    case UnaryKind::Log: d = 1.0 / v; break;
                    case UnaryKind::Exp: d = y; break;
                }
                xn->grad[i] += on->grad[i] * d;
            }
        };
    }
    return out;
}

inline Tensor relu(const Tensor& x) { return unary(x, UnaryKind::Relu); }
inline Tensor sigmoid(const Tensor& x) { return unary(x, UnaryKind::Sigmoid); }
inline Tensor elu(const Tensor& x) { return unary(x, UnaryKind::Elu); }

// Max-subtracted softmax along one axis.
inline Tensor softmax(const Tensor& x, std::size_t axis) {
    if (axis >= x.ndim())
        throw ShapeError("softmax: axis " + std::to_string(axis) + " invalid for " +
                         shape_str(x.shape()));
    std::size_t outer = 1, inner = 1;
    const std::size_t n = x.dim(axis);
    for (std::size_t i = 0; i < axis; ++i) outer *= x.dim(i);
    for (std::size_t i = axis + 1; i < x.ndim(); ++i) inner *= x.dim(i);

    const bool track = x.requires_grad();
    Tensor out = make_result(x.shape(), track, {x.node()});
    for (std::size_t o = 0; o < outer; ++o)
        for (std::size_t in = 0; in < inner; ++in) {
            const std::size_t base = o * n * inner + in;
            double mx = x[base];
            for (std::size_t j = 1; j < n; ++j) mx = std::max(mx, x[base + j * inner]);
            double sum = 0.0;
            for (std::size_t j = 0; j < n; ++j) {
                const double e = std::exp(x[base + j * inner] - mx);
                out[base + j * inner] = e;
                sum += e;
            }
            for (std::size_t j = 0; j < n; ++j) out[base + j * inner] /= sum;
        }
    if (track) {
        auto xn = x.node();
        auto* on = out.node().get();
        out.node()->backprop = [xn, on, outer, n, inner] {
            xn->ensure_grad();
            for (std::size_t o = 0; o < outer; ++o)
                for (std::size_t in = 0; in < inner; ++in) {
                    const std::size_t base = o * n * inner + in;
                    double dot = 0.0;
                    for (std::size_t j = 0; j < n; ++j)
                        dot += on->grad[base + j * inner] * on->data[base + j * inner];
                    for (std::size_t j = 0; j < n; ++j) {
                        const std::size_t idx = base + j * inner;
                        xn->grad[idx] += on->data[idx] * (on->grad[idx] - dot);
                    }
                }
        };
    }
    return out;
}

// ---------------------------------------------------------------------------
// reductions and reshaping

inline Tensor sum(const Tensor& x) {
    const bool track = x.requires_grad();
    Tensor out = make_result({1}, track, {x.node()});
    double acc = 0.0;
    for (double v : x.values()) acc += v;
    out[0] = acc;
    if (track) {
        auto xn = x.node();
        auto* on = out.node().get();
        out.node()->backprop = [xn, on] {
            xn->ensure_grad();
            for (double& g : xn->grad) g += on->grad[0];
        };
    }
    return out;
}

// Temporal mean of a [C x T] tensor -> [C].
inline Tensor mean_pool_time(const Tensor& x) {
    if (x.ndim() != 2) throw ShapeError("mean_pool_time expects [C x T], got " + shape_str(x.shape()));
    const std::size_t c = x.dim(0), t = x.dim(1);
    if (t == 0) throw ShapeError("mean_pool_time: empty time axis");
    const bool track = x.requires_grad();
    Tensor out = make_result({c}, track, {x.node()});
    for (std::size_t i = 0; i < c; ++i) {
        double acc = 0.0;
        for (std::size_t j = 0; j < t; ++j) acc += x[i * t + j];
        out[i] = acc / static_cast<double>(t);
    }
    if (track) {
        auto xn = x.node();
        auto* on = out.node().get();
        out.node()->backprop = [xn, on, c, t] {
            xn->ensure_grad();
            const double inv = 1.0 / static_cast<double>(t);
            for (std::size_t i = 0; i < c; ++i)
                for (std::size_t j = 0; j < t; ++j) xn->grad[i * t + j] += on->grad[i] * inv;
        };
    }
    return out;
}

// Non-overlapping-capable average pooling over time, [C x T] -> [C x T'].
inline Tensor avg_pool1d(const Tensor& x, std::size_t kernel, std::size_t stride) {
    if (x.ndim() != 2) throw ShapeError("avg_pool1d expects [C x T], got " + shape_str(x.shape()));
    if (kernel == 0 || stride == 0) throw ConfigError("avg_pool1d: kernel and stride must be positive");
    const std::size_t c = x.dim(0), t = x.dim(1);
    if (kernel > t)
        throw ShapeError("avg_pool1d: kernel " + std::to_string(kernel) + " exceeds T=" +
                         std::to_string(t));
    const std::size_t t_out = (t - kernel) / stride + 1;
    const bool track = x.requires_grad();
    Tensor out = make_result({c, t_out}, track, {x.node()});
    const double inv = 1.0 / static_cast<double>(kernel);
    for (std::size_t i = 0; i < c; ++i)
        for (std::size_t ot = 0; ot < t_out; ++ot) {
            double acc = 0.0;
            for (std::size_t kk = 0; kk < kernel; ++kk) acc += x[i * t + ot * stride + kk];
            out[i * t_out + ot] = acc * inv;
        }
    if (track) {
        auto xn = x.node();
        auto* on = out.node().get();
        out.node()->backprop = [xn, on, c, t, t_out, kernel, stride, inv] {
            xn->ensure_grad();
            for (std::size_t i = 0; i < c; ++i)
                for (std::size_t ot = 0; ot < t_out; ++ot) {
                    const double g = on->grad[i * t_out + ot] * inv;
                    for (std::size_t kk = 0; kk < kernel; ++kk)
                        xn->grad[i * t + ot * stride + kk] += g;
                }
        };
    }
    return out;
}

// Concatenate [C_i x T] blocks along the channel axis.
inline Tensor concat_rows(const std::vector<Tensor>& parts) {
    if (parts.empty()) throw ShapeError("concat_rows: no inputs");
    const std::size_t t = parts[0].dim(1);
    std::size_t c_total = 0;
    bool track = false;
    std::vector<std::shared_ptr<detail::TensorNode>> parents;
    for (const Tensor& p : parts) {
        if (p.ndim() != 2 || p.dim(1) != t)
            throw ShapeError("concat_rows: inconsistent part shape " + shape_str(p.shape()));
        c_total += p.dim(0);
        track = track || p.requires_grad();
        parents.push_back(p.node());
    }
    Tensor out = make_result({c_total, t}, track, parents);
    std::size_t offset = 0;
    for (const Tensor& p : parts) {
        std::copy(p.values().begin(), p.values().end(), out.values().begin() + offset);
        offset += p.size();
    }
    if (track) {
        auto nodes = out.node()->parents;
        auto* on = out.node().get();
        out.node()->backprop = [nodes, on] {
            std::size_t off = 0;
            for (auto& pn : nodes) {
                if (pn->requires_grad) {
                    pn->ensure_grad();
                    for (std::size_t i = 0; i < pn->data.size(); ++i)
                        pn->grad[i] += on->grad[off + i];
                }
                off += pn->data.size();
            }
        };
    }
    return out;
}

// Channel-wise rescale: out[i, t] = x[i, t] * g[i].
inline Tensor mul_channels(const Tensor& x, const Tensor& g) {
    if (x.ndim() != 2 || g.ndim() != 1 || g.dim(0) != x.dim(0))
        throw ShapeError("mul_channels: shapes " + shape_str(x.shape()) + " and " +
                         shape_str(g.shape()) + " incompatible");
    const std::size_t c = x.dim(0), t = x.dim(1);
    const bool track = any_requires_grad({&x, &g});
    Tensor out = make_result({c, t}, track, {x.node(), g.node()});
    for (std::size_t i = 0; i < c; ++i)
        for (std::size_t j = 0; j < t; ++j) out[i * t + j] = x[i * t + j] * g[i];
    if (track) {
        auto xn = x.node(), gn = g.node();
        auto* on = out.node().get();
        out.node()->backprop = [xn, gn, on, c, t] {
            if (xn->requires_grad) {
                xn->ensure_grad();
                for (std::size_t i = 0; i < c; ++i)
                    for (std::size_t j = 0; j < t; ++j)
                        xn->grad[i * t + j] += on->grad[i * t + j] * gn->data[i];
            }
            if (gn->requires_grad) {
                gn->ensure_grad();
                for (std::size_t i = 0; i < c; ++i) {
                    double acc = 0.0;
                    for (std::size_t j = 0; j < t; ++j)
                        acc += on->grad[i * t + j] * xn->data[i * t + j];
                    gn->grad[i] += acc;
                }
            }
        };
    }
    return out;
}

// Single element as a scalar tensor.
inline Tensor pick(const Tensor& x, std::size_t flat_index) {
    if (flat_index >= x.size())
        throw ShapeError("pick: index " + std::to_string(flat_index) + " out of range for " +
                         shape_str(x.shape()));
    const bool track = x.requires_grad();
    Tensor out = make_result({1}, track, {x.node()});
    out[0] = x[flat_index];
    if (track) {
        auto xn = x.node();
        auto* on = out.node().get();
        out.node()->backprop = [xn, on, flat_index] {
            xn->ensure_grad();
            xn->grad[flat_index] += on->grad[0];
        };
    }
    return out;
}

// ---------------------------------------------------------------------------
// dropout

// Inverted-scaling dropout: survivors scaled by 1/(1-p) so evaluation is an
// identity. The mask is drawn once in the forward pass and reused backward.
inline Tensor dropout(const Tensor& x, double p, RngState& rng, bool training) {
    if (p < 0.0 || p >= 1.0) throw ConfigError("dropout: p must be in [0, 1), got " + std::to_string(p));
    if (!training || p == 0.0) return x;
    const bool track = x.requires_grad();
    auto mask = std::make_shared<std::vector<double>>(x.size());
    const double keep = 1.0 / (1.0 - p);
    Tensor out = make_result(x.shape(), track, {x.node()});
    for (std::size_t i = 0; i < x.size(); ++i) {
        (*mask)[i] = rng.uniform() < p ? 0.0 : keep;
        out[i] = x[i] * (*mask)[i];
    }
    if (track) {
        auto xn = x.node();
        auto* on = out.node().get();
        out.node()->backprop = [xn, on, mask] {
            xn->ensure_grad();
            for (std::size_t i = 0; i < on->grad.size(); ++i)
                xn->grad[i] += on->grad[i] * (*mask)[i];
        };
    }
    return out;
}

// ---------------------------------------------------------------------------
// backward pass

// Reverse-mode accumulation from a scalar loss. Gradients add into existing
// grad buffers; callers zero them between steps.
inline void backward(const Tensor& loss) {
    if (loss.size() != 1)
        throw ShapeError("backward requires a scalar loss, got " + shape_str(loss.shape()));

    // iterative post-order over parents
    std::vector<detail::TensorNode*> order;
    std::unordered_set<detail::TensorNode*> seen;
    struct Frame {
        detail::TensorNode* node;
        std::size_t next_parent;
    };
    std::vector<Frame> stack{{loss.node().get(), 0}};
    seen.insert(loss.node().get());
    while (!stack.empty()) {
        Frame& f = stack.back();
        if (f.next_parent < f.node->parents.size()) {
            detail::TensorNode* p = f.node->parents[f.next_parent++].get();
            if (seen.insert(p).second) stack.push_back({p, 0});
        } else {
            order.push_back(f.node);
            stack.pop_back();
        }
    }

    // leaf grads accumulate across calls; interior grads are scratch space and
    // must restart from zero or a second backward would double-count them
    for (detail::TensorNode* n : order)
        if (n->backprop) {
            n->ensure_grad();
            std::fill(n->grad.begin(), n->grad.end(), 0.0);
        }
    loss.node()->ensure_grad();
    loss.node()->grad[0] += 1.0;
    for (auto it = order.rbegin(); it != order.rend(); ++it)
        if ((*it)->backprop) (*it)->backprop();
}

// ---------------------------------------------------------------------------
// gradient verification

// Compares reverse-mode gradients of a scalar function against central finite
// differences. Returns the worst relative error over all inputs' elements.
inline double grad_check(const std::function<Tensor(std::vector<Tensor>&)>& f,
                         std::vector<Tensor> inputs, double eps = 1e-5) {
    if (eps < 1e-7 || eps > 1e-3) throw ConfigError("grad_check: eps must lie in [1e-7, 1e-3]");
    for (Tensor& x : inputs) {
        x.set_requires_grad(true);
        x.zero_grad();
    }
    Tensor loss = f(inputs);
    backward(loss);
    std::vector<std::vector<double>> analytic;
    for (Tensor& x : inputs) analytic.push_back(x.grad());

    double worst = 0.0;
    for (std::size_t xi = 0; xi < inputs.size(); ++xi) {
        Tensor& x = inputs[xi];
        for (std::size_t i = 0; i < x.size(); ++i) {
            const double saved = x[i];
            x[i] = saved + eps;
            const double fp = f(inputs).item();
            x[i] = saved - eps;
            const double fm = f(inputs).item();
            x[i] = saved;
            const double numeric = (fp - fm) / (2.0 * eps);
            const double a = analytic[xi][i];
            const double denom = std::max({1.0, std::abs(a), std::abs(numeric)});
            worst = std::max(worst, std::abs(a - numeric) / denom);
        }
    }
    return worst;
}

}  // namespace faconf
