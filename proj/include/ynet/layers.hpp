#pragma once

#include <cmath>
#include <string>
#include <utility>
#include <vector>

#include "ynet/ops.hpp"
#include "ynet/tensor.hpp"

namespace ynet {

// Ordered (name, tensor) parameter registry. Order is fixed by construction
// so optimizer state, checkpoints, and gradient checks all line up.
using ParamMap = std::vector<std::pair<std::string, Tensor>>;

inline Tensor glorot_uniform(std::size_t fan_in, std::size_t fan_out, Shape shape, Rng& rng) {
    const double limit = std::sqrt(6.0 / static_cast<double>(fan_in + fan_out));
    return Tensor::uniform(std::move(shape), rng, -limit, limit, true);
}

// Fully-connected layer y = x W + b applied over the last axis.
struct Dense {
    Tensor weight;  // (in, out)
    Tensor bias;    // (out), undefined when bias-free

    Dense() = default;

    Dense(std::size_t in, std::size_t out, Rng& rng, bool with_bias = true)
        : weight(glorot_uniform(in, out, {in, out}, rng)) {
        if (with_bias) bias = Tensor::zeros({out}, true);
    }

    Tensor forward(const Tensor& x) const {
        Tensor y = matmul(x, weight);
        if (bias.defined()) y = add(y, bias);
        return y;
    }

    std::size_t in_dim() const { return weight.extent(0); }
    std::size_t out_dim() const { return weight.extent(1); }

    void collect(const std::string& prefix, ParamMap& params) const {
        params.emplace_back(prefix + ".weight", weight);
        if (bias.defined()) params.emplace_back(prefix + ".bias", bias);
    }
};

struct LayerNorm {
    Tensor gain;
    Tensor bias;
    double epsilon = 1e-5;

    LayerNorm() = default;

    explicit LayerNorm(std::size_t dim)
        : gain(Tensor::full({dim}, 1.0, true)), bias(Tensor::zeros({dim}, true)) {}

    Tensor forward(const Tensor& x) const { return layer_norm(x, gain, bias, epsilon); }

    void collect(const std::string& prefix, ParamMap& params) const {
        params.emplace_back(prefix + ".gain", gain);
        params.emplace_back(prefix + ".bias", bias);
    }
};

inline std::size_t param_count(const ParamMap& params) {
    std::size_t n = 0;
    for (const auto& [name, t] : params) n += t.size();
    return n;
}

inline void zero_grads(const ParamMap& params) {
    for (const auto& [name, t] : params) t.zero_grad();
}

}  // namespace ynet
