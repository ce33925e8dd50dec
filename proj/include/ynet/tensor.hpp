#pragma once

#include <cstddef>
#include <functional>
#include <initializer_list>
#include <memory>
#include <numeric>
#include <sstream>
#include <string>
#include <utility>
#include <vector>

#include "ynet/error.hpp"
#include "ynet/random.hpp"

namespace ynet {

using Shape = std::vector<std::size_t>;

inline std::size_t numel(const Shape& shape) {
    return std::accumulate(shape.begin(), shape.end(), std::size_t{1}, std::multiplies<>());
}

inline std::string shape_str(const Shape& shape) {
    std::ostringstream os;
    os << '(';
    for (std::size_t i = 0; i < shape.size(); ++i) {
        if (i) os << ',';
        os << shape[i];
    }
    os << ')';
    return os.str();
}

namespace detail {

struct TensorData {
    Shape shape;
    std::vector<double> value;
    bool requires_grad = false;
    std::vector<double> grad;  // same length as value when requires_grad
};

}  // namespace detail

// Dense row-major float64 tensor. A Tensor is a shared handle: copies alias
// the same storage. Values are treated as immutable once an op has produced
// them; gradient buffers are the only thing mutated after construction.
class Tensor {
public:
    Tensor() = default;

    static Tensor zeros(Shape shape, bool requires_grad = false) {
        return full(std::move(shape), 0.0, requires_grad);
    }

    static Tensor full(Shape shape, double fill, bool requires_grad = false) {
        auto d = std::make_shared<detail::TensorData>();
        d->value.assign(numel(shape), fill);
        d->shape = std::move(shape);
        set_requires(*d, requires_grad);
        return Tensor(std::move(d));
    }

    static Tensor from(Shape shape, std::vector<double> value, bool requires_grad = false) {
        if (numel(shape) != value.size()) {
            throw ShapeError("tensor data length " + std::to_string(value.size()) +
                             " does not match shape " + shape_str(shape));
        }
        auto d = std::make_shared<detail::TensorData>();
        d->shape = std::move(shape);
        d->value = std::move(value);
        set_requires(*d, requires_grad);
        return Tensor(std::move(d));
    }

    static Tensor scalar(double v, bool requires_grad = false) {
        return from({}, {v}, requires_grad);
    }

    static Tensor uniform(Shape shape, Rng& rng, double lo, double hi, bool requires_grad = false) {
        std::vector<double> v(numel(shape));
        for (auto& x : v) x = ynet::uniform(rng, lo, hi);
        return from(std::move(shape), std::move(v), requires_grad);
    }

    static Tensor randn(Shape shape, Rng& rng, double stddev = 1.0, bool requires_grad = false) {
        std::vector<double> v(numel(shape));
        for (auto& x : v) x = normal(rng) * stddev;
        return from(std::move(shape), std::move(v), requires_grad);
    }

    bool defined() const { return static_cast<bool>(d_); }
    const Shape& shape() const { return d_->shape; }
    std::size_t rank() const { return d_->shape.size(); }
    std::size_t size() const { return d_->value.size(); }
    std::size_t extent(std::size_t axis) const { return d_->shape[axis]; }

    const std::vector<double>& data() const { return d_->value; }
    std::vector<double>& mutable_data() { return d_->value; }

    double item() const {
        if (size() != 1) {
            throw ContractError("item() requires a one-element tensor, got shape " + shape_str(shape()));
        }
        return d_->value[0];
    }

    double at(std::initializer_list<std::size_t> idx) const {
        return d_->value[flat_index(idx)];
    }

    bool requires_grad() const { return d_->requires_grad; }

    void set_requires_grad(bool on) { set_requires(*d_, on); }

    const std::vector<double>& grad() const { return d_->grad; }
    std::vector<double>& mutable_grad() { return d_->grad; }

    void zero_grad() const {
        if (d_ && d_->requires_grad) std::fill(d_->grad.begin(), d_->grad.end(), 0.0);
    }

    void accumulate_grad(const std::vector<double>& g) {
        if (!d_->requires_grad) return;
        if (g.size() != d_->grad.size()) {
            throw ShapeError("gradient length mismatch: " + std::to_string(g.size()) + " vs " +
                             std::to_string(d_->grad.size()));
        }
        for (std::size_t i = 0; i < g.size(); ++i) d_->grad[i] += g[i];
    }

    // Identity of the underlying storage; used to dedupe shared parameters.
    const void* id() const { return d_.get(); }

    std::size_t flat_index(std::initializer_list<std::size_t> idx) const {
        const Shape& s = d_->shape;
        if (idx.size() != s.size()) {
            throw ShapeError("index rank " + std::to_string(idx.size()) + " vs tensor rank " +
                             std::to_string(s.size()));
        }
        std::size_t flat = 0;
        std::size_t k = 0;
        for (std::size_t i : idx) {
            if (i >= s[k]) throw ShapeError("index out of bounds on axis " + std::to_string(k));
            flat = flat * s[k] + i;
            ++k;
        }
        return flat;
    }

private:
    explicit Tensor(std::shared_ptr<detail::TensorData> d) : d_(std::move(d)) {}

    static void set_requires(detail::TensorData& d, bool on) {
        d.requires_grad = on;
        if (on) {
            d.grad.assign(d.value.size(), 0.0);
        } else {
            d.grad.clear();
        }
    }

    std::shared_ptr<detail::TensorData> d_;

    friend class GradTape;
};

// Reverse-mode tape. Operations executed while a tape is active (via Scope)
// append their backward rules in execution order; backward() replays them in
// reverse, accumulating gradients additively into every requires_grad tensor
// on the path. Inputs of an operation always precede it on the tape, so the
// reverse sweep visits consumers before producers.
class GradTape {
public:
    GradTape() = default;
    GradTape(const GradTape&) = delete;
    GradTape& operator=(const GradTape&) = delete;

    class Scope {
    public:
        explicit Scope(GradTape& tape) : prev_(active_) { active_ = &tape; }
        ~Scope() { active_ = prev_; }
        Scope(const Scope&) = delete;
        Scope& operator=(const Scope&) = delete;

    private:
        GradTape* prev_;
    };

    static GradTape* active() { return active_; }

    void record(std::function<void()> backward_rule) {
        nodes_.push_back(std::move(backward_rule));
    }

    std::size_t size() const { return nodes_.size(); }

    void backward(const Tensor& loss) {
        if (!loss.defined() || loss.size() != 1) {
            throw ContractError("backward requires a scalar loss, got shape " +
                                (loss.defined() ? shape_str(loss.shape()) : std::string("<undefined>")));
        }
        if (!loss.requires_grad()) {
            throw ContractError("backward: loss does not depend on any requires_grad tensor");
        }
        loss.d_->grad[0] += 1.0;
        for (auto it = nodes_.rbegin(); it != nodes_.rend(); ++it) (*it)();
    }

private:
    std::vector<std::function<void()>> nodes_;
    static thread_local GradTape* active_;
};

inline thread_local GradTape* GradTape::active_ = nullptr;

inline void backward(const Tensor& loss, GradTape& tape) { tape.backward(loss); }

}  // namespace ynet
