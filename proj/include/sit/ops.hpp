#pragma once

#include <cmath>
#include <limits>
#include <vector>

#include "sit/tensor.hpp"

namespace sit {

namespace detail {

enum class Binary { add, sub, mul, div };

// Elementwise binary op. Shapes must match, or one shape must be a trailing
// suffix of the other (bias rows, per-feature gains).
inline Tensor binary(const Tensor& a, const Tensor& b, Binary kind, const char* name) {
    const bool a_big = detail::is_suffix(b.shape(), a.shape());
    if (!a_big && !detail::is_suffix(a.shape(), b.shape())) {
        throw DimensionError(std::string(name) + ": incompatible shapes " + shape_str(a.shape()) +
                             " and " + shape_str(b.shape()));
    }
    const Shape out_shape = a_big ? a.shape() : b.shape();
    const std::size_t n = shape_numel(out_shape);
    const std::size_t na = a.numel();
    const std::size_t nb = b.numel();
    const auto& x = a.node()->data;
    const auto& y = b.node()->data;
    std::vector<double> out(n);
    for (std::size_t i = 0; i < n; ++i) {
        const double u = x[i % na];
        const double v = y[i % nb];
        switch (kind) {
            case Binary::add: out[i] = u + v; break;
            case Binary::sub: out[i] = u - v; break;
            case Binary::mul: out[i] = u * v; break;
            case Binary::div: out[i] = u / v; break;
        }
    }
    const bool rec = should_record({&a, &b});
    auto node = make_node(out_shape, std::move(out), rec);
    if (rec) {
        auto an = a.node();
        auto bn = b.node();
        Node* on = node.get();
        active_tape()->record(node, [an, bn, on, kind, n, na, nb] {
            for (std::size_t i = 0; i < n; ++i) {
                const double g = on->grad[i];
                const double u = an->data[i % na];
                const double v = bn->data[i % nb];
                switch (kind) {
                    case Binary::add:
                        accumulate(*an, i % na, g);
                        accumulate(*bn, i % nb, g);
                        break;
                    case Binary::sub:
                        accumulate(*an, i % na, g);
                        accumulate(*bn, i % nb, -g);
                        break;
                    case Binary::mul:
                        accumulate(*an, i % na, g * v);
                        accumulate(*bn, i % nb, g * u);
                        break;
                    case Binary::div:
                        accumulate(*an, i % na, g / v);
                        accumulate(*bn, i % nb, -g * u / (v * v));
                        break;
                }
            }
        }, name);
    }
    return Tensor::from_node(std::move(node));
}

// Elementwise unary op given value and derivative-from-(input, output) functors.
template <typename F, typename DF>
Tensor unary(const Tensor& a, F f, DF df, const char* name) {
    std::vector<double> out(a.numel());
    const auto& x = a.node()->data;
    for (std::size_t i = 0; i < out.size(); ++i) out[i] = f(x[i]);
    const bool rec = should_record({&a});
    auto node = make_node(a.shape(), std::move(out), rec);
    if (rec) {
        auto an = a.node();
        Node* on = node.get();
        active_tape()->record(node, [an, on, df] {
            for (std::size_t i = 0; i < on->data.size(); ++i) {
                accumulate(*an, i, on->grad[i] * df(an->data[i], on->data[i]));
            }
        }, name);
    }
    return Tensor::from_node(std::move(node));
}

}  // namespace detail

inline Tensor add(const Tensor& a, const Tensor& b) { return detail::binary(a, b, detail::Binary::add, "add"); }
inline Tensor sub(const Tensor& a, const Tensor& b) { return detail::binary(a, b, detail::Binary::sub, "sub"); }
inline Tensor mul(const Tensor& a, const Tensor& b) { return detail::binary(a, b, detail::Binary::mul, "mul"); }
inline Tensor div(const Tensor& a, const Tensor& b) { return detail::binary(a, b, detail::Binary::div, "div"); }

inline Tensor scale(const Tensor& a, double c) {
    return detail::unary(a, [c](double x) { return c * x; }, [c](double, double) { return c; }, "scale");
}

inline Tensor add_scalar(const Tensor& a, double c) {
    return detail::unary(a, [c](double x) { return x + c; }, [](double, double) { return 1.0; }, "add_scalar");
}

// Subgradient 0 at 0.
inline Tensor relu(const Tensor& a) {
    return detail::unary(
        a, [](double x) { return x > 0.0 ? x : 0.0; },
        [](double x, double) { return x > 0.0 ? 1.0 : 0.0; }, "relu");
}

inline Tensor exp(const Tensor& a) {
    return detail::unary(a, [](double x) { return std::exp(x); }, [](double, double y) { return y; }, "exp");
}

inline Tensor log(const Tensor& a) {
    return detail::unary(a, [](double x) { return std::log(x); }, [](double x, double) { return 1.0 / x; }, "log");
}

inline Tensor sqrt(const Tensor& a) {
    return detail::unary(
        a, [](double x) { return std::sqrt(x); }, [](double, double y) { return 0.5 / y; }, "sqrt");
}

inline Tensor square(const Tensor& a) {
    return detail::unary(a, [](double x) { return x * x; }, [](double x, double) { return 2.0 * x; }, "square");
}

// max(x, lo); gradient is zero where the floor is active.
inline Tensor clamp_min(const Tensor& a, double lo) {
    return detail::unary(
        a, [lo](double x) { return x > lo ? x : lo; },
        [lo](double x, double) { return x > lo ? 1.0 : 0.0; }, "clamp_min");
}

inline Tensor sum(const Tensor& a) {
    double s = 0.0;
    for (double v : a.data()) s += v;
    const bool rec = detail::should_record({&a});
    auto node = detail::make_node({1}, {s}, rec);
    if (rec) {
        auto an = a.node();
        detail::Node* on = node.get();
        active_tape()->record(node, [an, on] {
            for (std::size_t i = 0; i < an->data.size(); ++i) detail::accumulate(*an, i, on->grad[0]);
        }, "sum");
    }
    return Tensor::from_node(std::move(node));
}

inline Tensor mean(const Tensor& a) { return scale(sum(a), 1.0 / static_cast<double>(a.numel())); }

namespace detail {

inline Tensor reduce_axis(const Tensor& a, std::size_t axis, double weight, const char* name) {
    const auto s = split_axis(a.shape(), axis);
    Shape out_shape = a.shape();
    out_shape.erase(out_shape.begin() + static_cast<std::ptrdiff_t>(axis));
    if (out_shape.empty()) out_shape = {1};
    std::vector<double> out(s.outer * s.inner, 0.0);
    const auto& x = a.node()->data;
    for (std::size_t o = 0; o < s.outer; ++o)
        for (std::size_t l = 0; l < s.len; ++l)
            for (std::size_t i = 0; i < s.inner; ++i)
                out[o * s.inner + i] += weight * x[(o * s.len + l) * s.inner + i];
    const bool rec = should_record({&a});
    auto node = make_node(std::move(out_shape), std::move(out), rec);
    if (rec) {
        auto an = a.node();
        Node* on = node.get();
        active_tape()->record(node, [an, on, s, weight] {
            for (std::size_t o = 0; o < s.outer; ++o)
                for (std::size_t l = 0; l < s.len; ++l)
                    for (std::size_t i = 0; i < s.inner; ++i)
                        accumulate(*an, (o * s.len + l) * s.inner + i, weight * on->grad[o * s.inner + i]);
        }, name);
    }
    return Tensor::from_node(std::move(node));
}

}  // namespace detail

// Sum over one axis; the axis is removed from the shape.
inline Tensor sum(const Tensor& a, std::size_t axis) { return detail::reduce_axis(a, axis, 1.0, "sum_axis"); }

// Arithmetic mean over one axis; the axis is removed from the shape.
inline Tensor mean_pool(const Tensor& a, std::size_t axis) {
    const auto len = detail::split_axis(a.shape(), axis).len;
    return detail::reduce_axis(a, axis, 1.0 / static_cast<double>(len), "mean_pool");
}

inline Tensor concat(const std::vector<Tensor>& parts, std::size_t axis) {
    if (parts.empty()) throw ContractError("concat of zero tensors");
    const Shape& ref = parts.front().shape();
    if (axis >= ref.size()) throw DimensionError("concat axis out of range for " + shape_str(ref));
    Shape out_shape = ref;
    out_shape[axis] = 0;
    for (const auto& p : parts) {
        Shape probe = p.shape();
        if (probe.size() != ref.size()) {
            throw DimensionError("concat rank mismatch: " + shape_str(ref) + " vs " + shape_str(probe));
        }
        for (std::size_t d = 0; d < ref.size(); ++d) {
            if (d != axis && probe[d] != ref[d]) {
                throw DimensionError("concat shape mismatch: " + shape_str(ref) + " vs " + shape_str(probe));
            }
        }
        out_shape[axis] += probe[axis];
    }
    const auto so = detail::split_axis(out_shape, axis);
    std::vector<double> out(shape_numel(out_shape));
    std::vector<std::size_t> offsets;
    std::size_t offset = 0;
    bool rec = false;
    for (const auto& p : parts) {
        offsets.push_back(offset);
        const std::size_t block = p.shape()[axis] * so.inner;
        const auto& x = p.node()->data;
        for (std::size_t o = 0; o < so.outer; ++o)
            std::copy_n(x.begin() + static_cast<std::ptrdiff_t>(o * block), block,
                        out.begin() + static_cast<std::ptrdiff_t>(o * so.len * so.inner + offset * so.inner));
        offset += p.shape()[axis];
        rec = rec || detail::should_record({&p});
    }
    auto node = detail::make_node(out_shape, std::move(out), rec);
    if (rec) {
        std::vector<std::shared_ptr<detail::Node>> ins;
        for (const auto& p : parts) ins.push_back(p.node());
        detail::Node* on = node.get();
        active_tape()->record(node, [ins, offsets, on, so, axis] {
            for (std::size_t k = 0; k < ins.size(); ++k) {
                auto& in = *ins[k];
                if (!in.requires_grad) continue;
                const std::size_t block = in.shape[axis] * so.inner;
                for (std::size_t o = 0; o < so.outer; ++o)
                    for (std::size_t j = 0; j < block; ++j)
                        in.grad[o * block + j] += on->grad[o * so.len * so.inner + offsets[k] * so.inner + j];
            }
        }, "concat");
    }
    return Tensor::from_node(std::move(node));
}

// Half-open range [begin, end) along one axis.
inline Tensor slice(const Tensor& a, std::size_t axis, std::size_t begin, std::size_t end) {
    const auto s = detail::split_axis(a.shape(), axis);
    if (begin >= end || end > s.len) {
        throw DimensionError("slice [" + std::to_string(begin) + "," + std::to_string(end) +
                             ") out of range for axis " + std::to_string(axis) + " of " + shape_str(a.shape()));
    }
    Shape out_shape = a.shape();
    out_shape[axis] = end - begin;
    const std::size_t block = (end - begin) * s.inner;
    std::vector<double> out(s.outer * block);
    const auto& x = a.node()->data;
    for (std::size_t o = 0; o < s.outer; ++o)
        std::copy_n(x.begin() + static_cast<std::ptrdiff_t>((o * s.len + begin) * s.inner), block,
                    out.begin() + static_cast<std::ptrdiff_t>(o * block));
    const bool rec = detail::should_record({&a});
    auto node = detail::make_node(std::move(out_shape), std::move(out), rec);
    if (rec) {
        auto an = a.node();
        detail::Node* on = node.get();
        active_tape()->record(node, [an, on, s, begin, block] {
            for (std::size_t o = 0; o < s.outer; ++o)
                for (std::size_t j = 0; j < block; ++j)
                    an->grad[(o * s.len + begin) * s.inner + j] += on->grad[o * block + j];
        }, "slice");
    }
    return Tensor::from_node(std::move(node));
}

inline Tensor reshape(const Tensor& a, Shape shape) {
    if (shape_numel(shape) != a.numel()) {
        throw DimensionError("cannot reshape " + shape_str(a.shape()) + " to " + shape_str(shape));
    }
    const bool rec = detail::should_record({&a});
    auto node = detail::make_node(std::move(shape), a.node()->data, rec);
    if (rec) {
        auto an = a.node();
        detail::Node* on = node.get();
        active_tape()->record(node, [an, on] {
            for (std::size_t i = 0; i < on->grad.size(); ++i) an->grad[i] += on->grad[i];
        }, "reshape");
    }
    return Tensor::from_node(std::move(node));
}

// Swaps the last two axes.
inline Tensor transpose(const Tensor& a) {
    if (a.rank() < 2) throw DimensionError("transpose needs rank >= 2, got " + shape_str(a.shape()));
    Shape out_shape = a.shape();
    const std::size_t r = out_shape[a.rank() - 2];
    const std::size_t c = out_shape[a.rank() - 1];
    std::swap(out_shape[a.rank() - 2], out_shape[a.rank() - 1]);
    const std::size_t batch = a.numel() / (r * c);
    std::vector<double> out(a.numel());
    const auto& x = a.node()->data;
    for (std::size_t b = 0; b < batch; ++b)
        for (std::size_t i = 0; i < r; ++i)
            for (std::size_t j = 0; j < c; ++j) out[b * r * c + j * r + i] = x[b * r * c + i * c + j];
    const bool rec = detail::should_record({&a});
    auto node = detail::make_node(std::move(out_shape), std::move(out), rec);
    if (rec) {
        auto an = a.node();
        detail::Node* on = node.get();
        active_tape()->record(node, [an, on, batch, r, c] {
            for (std::size_t b = 0; b < batch; ++b)
                for (std::size_t i = 0; i < r; ++i)
                    for (std::size_t j = 0; j < c; ++j)
                        an->grad[b * r * c + i * c + j] += on->grad[b * r * c + j * r + i];
        }, "transpose");
    }
    return Tensor::from_node(std::move(node));
}

// Matrix product over the last two axes. `b` is either a plain matrix shared
// across a's leading (batch) axes, or carries the same batch axes as `a`.
inline Tensor matmul(const Tensor& a, const Tensor& b) {
    if (a.rank() < 2 || b.rank() < 2) {
        throw DimensionError("matmul needs rank >= 2 operands, got " + shape_str(a.shape()) + " and " +
                             shape_str(b.shape()));
    }
    const std::size_t m = a.shape()[a.rank() - 2];
    const std::size_t k = a.shape()[a.rank() - 1];
    const std::size_t k2 = b.shape()[b.rank() - 2];
    const std::size_t n = b.shape()[b.rank() - 1];
    const bool shared = b.rank() == 2;
    const bool batch_ok = shared || std::equal(a.shape().begin(), a.shape().end() - 2, b.shape().begin(),
                                               b.shape().end() - 2);
    if (k != k2 || !batch_ok || (!shared && a.rank() != b.rank())) {
        throw DimensionError("matmul shape mismatch: " + shape_str(a.shape()) + " x " + shape_str(b.shape()));
    }
    const std::size_t batch = a.numel() / (m * k);
    Shape out_shape(a.shape().begin(), a.shape().end() - 2);
    out_shape.push_back(m);
    out_shape.push_back(n);
    std::vector<double> out(batch * m * n, 0.0);
    const auto& x = a.node()->data;
    const auto& y = b.node()->data;
    for (std::size_t bt = 0; bt < batch; ++bt) {
        const double* A = x.data() + bt * m * k;
        const double* B = y.data() + (shared ? 0 : bt * k * n);
        double* C = out.data() + bt * m * n;
        for (std::size_t i = 0; i < m; ++i)
            for (std::size_t p = 0; p < k; ++p) {
                const double aip = A[i * k + p];
                for (std::size_t j = 0; j < n; ++j) C[i * n + j] += aip * B[p * n + j];
            }
    }
    const bool rec = detail::should_record({&a, &b});
    auto node = detail::make_node(std::move(out_shape), std::move(out), rec);
    if (rec) {
        auto an = a.node();
        auto bn = b.node();
        detail::Node* on = node.get();
        active_tape()->record(node, [an, bn, on, batch, m, k, n, shared] {
            for (std::size_t bt = 0; bt < batch; ++bt) {
                const double* G = on->grad.data() + bt * m * n;
                const double* A = an->data.data() + bt * m * k;
                const std::size_t boff = shared ? 0 : bt * k * n;
                const double* B = bn->data.data() + boff;
                if (an->requires_grad) {
                    double* dA = an->grad.data() + bt * m * k;
                    for (std::size_t i = 0; i < m; ++i)
                        for (std::size_t p = 0; p < k; ++p) {
                            double acc = 0.0;
                            for (std::size_t j = 0; j < n; ++j) acc += G[i * n + j] * B[p * n + j];
                            dA[i * k + p] += acc;
                        }
                }
                if (bn->requires_grad) {
                    double* dB = bn->grad.data() + boff;
                    for (std::size_t i = 0; i < m; ++i)
                        for (std::size_t p = 0; p < k; ++p) {
                            const double aip = A[i * k + p];
                            for (std::size_t j = 0; j < n; ++j) dB[p * n + j] += aip * G[i * n + j];
                        }
                }
            }
        }, "matmul");
    }
    return Tensor::from_node(std::move(node));
}

// Max-subtracted softmax along `axis`.
inline Tensor softmax(const Tensor& a, std::size_t axis) {
    const auto s = detail::split_axis(a.shape(), axis);
    std::vector<double> out(a.numel());
    const auto& x = a.node()->data;
    for (std::size_t o = 0; o < s.outer; ++o)
        for (std::size_t i = 0; i < s.inner; ++i) {
            const auto at = [&](std::size_t l) { return (o * s.len + l) * s.inner + i; };
            double mx = -std::numeric_limits<double>::infinity();
            for (std::size_t l = 0; l < s.len; ++l) mx = std::max(mx, x[at(l)]);
            double z = 0.0;
            for (std::size_t l = 0; l < s.len; ++l) {
                out[at(l)] = std::exp(x[at(l)] - mx);
                z += out[at(l)];
            }
            for (std::size_t l = 0; l < s.len; ++l) out[at(l)] /= z;
        }
    const bool rec = detail::should_record({&a});
    auto node = detail::make_node(a.shape(), std::move(out), rec);
    if (rec) {
        auto an = a.node();
        detail::Node* on = node.get();
        active_tape()->record(node, [an, on, s] {
            for (std::size_t o = 0; o < s.outer; ++o)
                for (std::size_t i = 0; i < s.inner; ++i) {
                    const auto at = [&](std::size_t l) { return (o * s.len + l) * s.inner + i; };
                    double dot = 0.0;
                    for (std::size_t l = 0; l < s.len; ++l) dot += on->grad[at(l)] * on->data[at(l)];
                    for (std::size_t l = 0; l < s.len; ++l)
                        an->grad[at(l)] += on->data[at(l)] * (on->grad[at(l)] - dot);
                }
        }, "softmax");
    }
    return Tensor::from_node(std::move(node));
}

// Score value assigned to masked attention slots; exp() of it underflows to 0.
inline constexpr double kMaskedScore = -1e30;

// Masks entries (i, j) of the last two axes with j > i + (cols - rows), i.e.
// query i may only see keys up to its own position. Gradient is zero there.
inline Tensor causal_mask(const Tensor& a) {
    if (a.rank() < 2) throw DimensionError("causal_mask needs rank >= 2, got " + shape_str(a.shape()));
    const std::size_t r = a.shape()[a.rank() - 2];
    const std::size_t c = a.shape()[a.rank() - 1];
    if (c < r) throw DimensionError("causal_mask needs cols >= rows, got " + shape_str(a.shape()));
    const std::size_t shift = c - r;
    const std::size_t batch = a.numel() / (r * c);
    std::vector<double> out(a.node()->data);
    for (std::size_t b = 0; b < batch; ++b)
        for (std::size_t i = 0; i < r; ++i)
            for (std::size_t j = i + shift + 1; j < c; ++j) out[b * r * c + i * c + j] = kMaskedScore;
    const bool rec = detail::should_record({&a});
    auto node = detail::make_node(a.shape(), std::move(out), rec);
    if (rec) {
        auto an = a.node();
        detail::Node* on = node.get();
        active_tape()->record(node, [an, on, batch, r, c, shift] {
            for (std::size_t b = 0; b < batch; ++b)
                for (std::size_t i = 0; i < r; ++i)
                    for (std::size_t j = 0; j <= i + shift && j < c; ++j)
                        an->grad[b * r * c + i * c + j] += on->grad[b * r * c + i * c + j];
        }, "causal_mask");
    }
    return Tensor::from_node(std::move(node));
}

inline constexpr double kLayerNormEps = 1e-5;

// Normalizes each slice along the last axis to zero mean and unit variance,
// then applies the per-feature affine map gain * x + bias.
inline Tensor layer_norm(const Tensor& a, const Tensor& gain, const Tensor& bias, double eps = kLayerNormEps) {
    if (a.rank() < 1 || a.shape().back() < 2) {
        throw ContractError("layer_norm needs last axis length >= 2, got " + shape_str(a.shape()));
    }
    const std::size_t n = a.shape().back();
    if (gain.shape() != Shape{n} || bias.shape() != Shape{n}) {
        throw DimensionError("layer_norm affine shapes " + shape_str(gain.shape()) + ", " +
                             shape_str(bias.shape()) + " do not match feature width " + std::to_string(n));
    }
    const std::size_t rows = a.numel() / n;
    std::vector<double> out(a.numel());
    std::vector<double> xhat(a.numel());
    std::vector<double> inv_std(rows);
    const auto& x = a.node()->data;
    const auto& g = gain.node()->data;
    const auto& bb = bias.node()->data;
    for (std::size_t r = 0; r < rows; ++r) {
        const double* row = x.data() + r * n;
        double mu = 0.0;
        for (std::size_t j = 0; j < n; ++j) mu += row[j];
        mu /= static_cast<double>(n);
        double var = 0.0;
        for (std::size_t j = 0; j < n; ++j) var += (row[j] - mu) * (row[j] - mu);
        var /= static_cast<double>(n);
        inv_std[r] = 1.0 / std::sqrt(var + eps);
        for (std::size_t j = 0; j < n; ++j) {
            xhat[r * n + j] = (row[j] - mu) * inv_std[r];
            out[r * n + j] = g[j] * xhat[r * n + j] + bb[j];
        }
    }
    const bool rec = detail::should_record({&a, &gain, &bias});
    auto node = detail::make_node(a.shape(), std::move(out), rec);
    if (rec) {
        auto an = a.node();
        auto gn = gain.node();
        auto bn = bias.node();
        detail::Node* on = node.get();
        active_tape()->record(node, [an, gn, bn, on, xhat = std::move(xhat), inv_std = std::move(inv_std), rows, n] {
            const double nn = static_cast<double>(n);
            for (std::size_t r = 0; r < rows; ++r) {
                const double* G = on->grad.data() + r * n;
                const double* xh = xhat.data() + r * n;
                double sum_d = 0.0;
                double sum_dx = 0.0;
                for (std::size_t j = 0; j < n; ++j) {
                    const double d = G[j] * gn->data[j];
                    sum_d += d;
                    sum_dx += d * xh[j];
                    detail::accumulate(*gn, j, G[j] * xh[j]);
                    detail::accumulate(*bn, j, G[j]);
                }
                if (an->requires_grad) {
                    for (std::size_t j = 0; j < n; ++j) {
                        const double d = G[j] * gn->data[j];
                        an->grad[r * n + j] += inv_std[r] / nn * (nn * d - sum_d - xh[j] * sum_dx);
                    }
                }
            }
        }, "layer_norm");
    }
    return Tensor::from_node(std::move(node));
}

}  // namespace sit
