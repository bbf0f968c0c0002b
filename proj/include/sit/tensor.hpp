#pragma once

// Dense row-major float64 tensors with a reverse-mode tape.
//
// Operations record themselves on the thread's active Tape (see TapeScope)
// whenever at least one input requires a gradient. With no active tape the
// same functions run as plain forward arithmetic, which is how inference
// and finite-difference probes evaluate the network.

#include <algorithm>
#include <cstddef>
#include <functional>
#include <memory>
#include <numeric>
#include <span>
#include <sstream>
#include <string>
#include <utility>
#include <vector>

#include "sit/errors.hpp"

namespace sit {

using Shape = std::vector<std::size_t>;

inline std::size_t shape_numel(const Shape& shape) {
    return std::accumulate(shape.begin(), shape.end(), std::size_t{1}, std::multiplies<>());
}

inline std::string shape_str(const Shape& shape) {
    std::ostringstream os;
    os << '[';
    for (std::size_t i = 0; i < shape.size(); ++i) {
        if (i) os << 'x';
        os << shape[i];
    }
    os << ']';
    return os.str();
}

namespace detail {

struct Node {
    Shape shape;
    std::vector<double> data;
    std::vector<double> grad;
    bool requires_grad = false;
    bool leaf = true;
};

}  // namespace detail

class Tensor {
public:
    Tensor() = default;

    Tensor(Shape shape, std::vector<double> data, bool requires_grad = false)
        : node_(std::make_shared<detail::Node>()) {
        if (shape_numel(shape) != data.size()) {
            throw DimensionError("tensor shape " + shape_str(shape) + " does not hold " +
                                 std::to_string(data.size()) + " values");
        }
        node_->shape = std::move(shape);
        node_->data = std::move(data);
        node_->requires_grad = requires_grad;
        if (requires_grad) node_->grad.assign(node_->data.size(), 0.0);
    }

    static Tensor zeros(Shape shape, bool requires_grad = false) {
        const auto n = shape_numel(shape);
        return Tensor(std::move(shape), std::vector<double>(n, 0.0), requires_grad);
    }

    static Tensor full(Shape shape, double value) {
        const auto n = shape_numel(shape);
        return Tensor(std::move(shape), std::vector<double>(n, value));
    }

    static Tensor scalar(double value, bool requires_grad = false) {
        return Tensor({1}, {value}, requires_grad);
    }

    // Internal: wraps a freshly computed op output.
    static Tensor from_node(std::shared_ptr<detail::Node> node) {
        Tensor t;
        t.node_ = std::move(node);
        return t;
    }

    bool defined() const noexcept { return static_cast<bool>(node_); }
    const Shape& shape() const { return node_->shape; }
    std::size_t rank() const { return node_->shape.size(); }
    std::size_t dim(std::size_t axis) const { return node_->shape.at(axis); }
    std::size_t numel() const { return node_->data.size(); }
    bool requires_grad() const { return node_->requires_grad; }

    std::span<const double> data() const { return node_->data; }
    // Parameters are updated in place by optimizers and finite-difference probes.
    std::span<double> mutable_data() { return node_->data; }

    double item() const {
        if (numel() != 1) throw ContractError("item() on tensor of shape " + shape_str(shape()));
        return node_->data[0];
    }

    double operator[](std::size_t i) const { return node_->data[i]; }

    std::span<const double> grad() const { return node_->grad; }
    std::span<double> mutable_grad() { return node_->grad; }

    void zero_grad() {
        if (node_->requires_grad) node_->grad.assign(node_->data.size(), 0.0);
    }

    // Detached copy sharing no storage.
    Tensor clone(bool requires_grad = false) const {
        return Tensor(node_->shape, node_->data, requires_grad);
    }

    const std::shared_ptr<detail::Node>& node() const { return node_; }

private:
    std::shared_ptr<detail::Node> node_;
};

class Tape {
public:
    using BackwardFn = std::function<void()>;

    void record(std::shared_ptr<detail::Node> output, BackwardFn fn, const char* op) {
        if (consumed_) throw ContractError("recording onto a tape that has already run backward");
        entries_.push_back({std::move(output), std::move(fn), op});
    }

    std::size_t size() const noexcept { return entries_.size(); }
    bool consumed() const noexcept { return consumed_; }

    std::vector<std::string> op_names() const {
        std::vector<std::string> out;
        out.reserve(entries_.size());
        for (const auto& e : entries_) out.emplace_back(e.op);
        return out;
    }

    // Accumulates dLoss/dx into every requires_grad leaf reachable from loss.
    // A tape runs backward once; call reset() before reusing it.
    void backward(const Tensor& loss) {
        if (!loss.defined() || loss.numel() != 1) {
            throw ContractError("backward needs a scalar loss, got " +
                                (loss.defined() ? shape_str(loss.shape()) : std::string("undefined")));
        }
        if (consumed_) throw ContractError("backward already ran on this tape; reset it first");
        const auto it = std::find_if(entries_.begin(), entries_.end(),
                                     [&](const Entry& e) { return e.output == loss.node(); });
        if (it == entries_.end()) throw ContractError("loss was not produced on this tape");
        consumed_ = true;
        for (auto& e : entries_) e.output->grad.assign(e.output->data.size(), 0.0);
        loss.node()->grad[0] = 1.0;
        const auto last = static_cast<std::ptrdiff_t>(it - entries_.begin());
        for (std::ptrdiff_t i = last; i >= 0; --i) entries_[static_cast<std::size_t>(i)].fn();
    }

    void reset() {
        entries_.clear();
        consumed_ = false;
    }

private:
    struct Entry {
        std::shared_ptr<detail::Node> output;
        BackwardFn fn;
        const char* op;
    };
    std::vector<Entry> entries_;
    bool consumed_ = false;
};

inline Tape*& active_tape() {
    thread_local Tape* tape = nullptr;
    return tape;
}

// Makes `tape` the recording target for the current thread until destroyed.
class TapeScope {
public:
    explicit TapeScope(Tape& tape) : previous_(active_tape()) { active_tape() = &tape; }
    ~TapeScope() { active_tape() = previous_; }
    TapeScope(const TapeScope&) = delete;
    TapeScope& operator=(const TapeScope&) = delete;

private:
    Tape* previous_;
};

// Suspends recording, e.g. for evaluation inside a training step.
class NoGradScope {
public:
    NoGradScope() : previous_(active_tape()) { active_tape() = nullptr; }
    ~NoGradScope() { active_tape() = previous_; }
    NoGradScope(const NoGradScope&) = delete;
    NoGradScope& operator=(const NoGradScope&) = delete;

private:
    Tape* previous_;
};

inline void backward(Tape& tape, const Tensor& loss) { tape.backward(loss); }

namespace detail {

inline bool should_record(std::initializer_list<const Tensor*> inputs) {
    if (active_tape() == nullptr) return false;
    return std::any_of(inputs.begin(), inputs.end(),
                       [](const Tensor* t) { return t->requires_grad(); });
}

inline std::shared_ptr<Node> make_node(Shape shape, std::vector<double> data, bool requires_grad) {
    auto node = std::make_shared<Node>();
    node->shape = std::move(shape);
    node->data = std::move(data);
    node->requires_grad = requires_grad;
    node->leaf = false;
    return node;
}

// Adds `g` into an input's gradient buffer if that input participates.
inline void accumulate(Node& in, std::size_t i, double g) {
    if (in.requires_grad) in.grad[i] += g;
}

struct AxisSplit {
    std::size_t outer;
    std::size_t len;
    std::size_t inner;
};

inline AxisSplit split_axis(const Shape& shape, std::size_t axis) {
    if (axis >= shape.size()) {
        throw DimensionError("axis " + std::to_string(axis) + " out of range for " + shape_str(shape));
    }
    AxisSplit s{1, shape[axis], 1};
    for (std::size_t i = 0; i < axis; ++i) s.outer *= shape[i];
    for (std::size_t i = axis + 1; i < shape.size(); ++i) s.inner *= shape[i];
    return s;
}

inline bool is_suffix(const Shape& small, const Shape& big) {
    if (small.size() > big.size()) return false;
    return std::equal(small.rbegin(), small.rend(), big.rbegin());
}

}  // namespace detail

}  // namespace sit
