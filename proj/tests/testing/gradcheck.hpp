#pragma once

// Finite-difference gradient oracle. Independent of the tape: it only
// perturbs parameter values and re-runs a tape-free forward closure.

#include <cmath>
#include <functional>
#include <string>

#include "ynet/layers.hpp"
#include "ynet/tensor.hpp"

namespace ytest {

// |a - b| scaled by max(1, |a|, |b|): relative for large gradients,
// absolute near zero.
inline double rel_err(double a, double b) {
    return std::abs(a - b) / std::max({1.0, std::abs(a), std::abs(b)});
}

struct GradCheckResult {
    double max_err = 0.0;
    std::string worst;  // "name[i]" of the worst-matching element
};

// Compares grads already accumulated in `params` (by a prior tape backward)
// against central finite differences of `forward`, which must re-run the
// computation without an active tape and return the scalar loss.
inline GradCheckResult check_grads_against_fd(const std::function<double()>& forward,
                                              const ynet::ParamMap& params, double eps) {
    GradCheckResult result;
    for (const auto& [name, t] : params) {
        ynet::Tensor param = t;
        auto& value = param.mutable_data();
        const auto& grad = param.grad();
        for (std::size_t i = 0; i < value.size(); ++i) {
            const double saved = value[i];
            value[i] = saved + eps;
            const double plus = forward();
            value[i] = saved - eps;
            const double minus = forward();
            value[i] = saved;
            const double fd = (plus - minus) / (2.0 * eps);
            const double err = rel_err(fd, grad[i]);
            if (err > result.max_err) {
                result.max_err = err;
                result.worst = name + "[" + std::to_string(i) + "] fd=" + std::to_string(fd) +
                               " ad=" + std::to_string(grad[i]);
            }
        }
    }
    return result;
}

// Convenience for checking a single op: builds a weighted-sum loss so every
// output element contributes a distinct gradient signal.
inline std::vector<double> loss_weights(std::size_t n, unsigned salt = 1) {
    std::vector<double> w(n);
    for (std::size_t i = 0; i < n; ++i) {
        w[i] = 0.25 + 0.75 * std::sin(static_cast<double>(i * 2654435761u + salt) * 1e-4);
    }
    return w;
}

inline double weighted_sum(const ynet::Tensor& t, const std::vector<double>& w) {
    double s = 0.0;
    for (std::size_t i = 0; i < t.size(); ++i) s += t.data()[i] * w[i];
    return s;
}

inline ynet::Tensor weighted_sum_tensor(const ynet::Tensor& t, const std::vector<double>& w) {
    ynet::Tensor wt = ynet::Tensor::from(t.shape(), std::vector<double>(w));
    return ynet::sum_all(ynet::mul(t, wt));
}

}  // namespace ytest
