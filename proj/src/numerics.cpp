#include "dpace/numerics.hpp"

#include <algorithm>
#include <cmath>
#include <stdexcept>

namespace dpace {

void check_finite(std::span<const double> x, const char* what) {
    for (double v : x) {
        if (!std::isfinite(v)) {
            throw std::invalid_argument(std::string(what) + ": non-finite entry");
        }
    }
}

RealVector softmax(const RealVector& logits) {
    if (logits.empty()) {
        throw std::invalid_argument("softmax: empty input");
    }
    check_finite(logits, "softmax");
    const double mx = *std::max_element(logits.begin(), logits.end());
    RealVector out(logits.size());
    double sum = 0.0;
    for (std::size_t i = 0; i < logits.size(); ++i) {
        out[i] = std::exp(logits[i] - mx);
        sum += out[i];
    }
    for (double& v : out) {
        v /= sum;
    }
    return out;
}

void log_softmax_inplace(std::span<double> row) {
    const double mx = *std::max_element(row.begin(), row.end());
    double sum = 0.0;
    for (double v : row) {
        sum += std::exp(v - mx);
    }
    const double lse = mx + std::log(sum);
    for (double& v : row) {
        v -= lse;
    }
}

RealVector log_softmax(const RealVector& logits) {
    if (logits.empty()) {
        throw std::invalid_argument("log_softmax: empty input");
    }
    check_finite(logits, "log_softmax");
    RealVector out = logits;
    log_softmax_inplace(out);
    return out;
}

RealVector finite_diff_grad(const std::function<double(const RealVector&)>& f,
                            const RealVector& x, double h) {
    if (h <= 0.0) {
        throw std::invalid_argument("finite_diff_grad: h must be > 0");
    }
    RealVector grad(x.size());
    RealVector probe = x;
    for (std::size_t k = 0; k < x.size(); ++k) {
        const double orig = probe[k];
        probe[k] = orig + h;
        const double fp = f(probe);
        probe[k] = orig - h;
        const double fm = f(probe);
        probe[k] = orig;
        grad[k] = (fp - fm) / (2.0 * h);
    }
    return grad;
}

void adamw_step(std::span<double> params, std::span<const double> grads, AdamWState& state) {
    const std::size_t n = params.size();
    if (grads.size() != n || state.m.size() != n || state.v.size() != n) {
        throw std::invalid_argument("adamw_step: shape mismatch");
    }
    const AdamWConfig& c = state.cfg;
    state.step += 1;
    const double bc1 = 1.0 - std::pow(c.beta1, static_cast<double>(state.step));
    const double bc2 = 1.0 - std::pow(c.beta2, static_cast<double>(state.step));
    for (std::size_t i = 0; i < n; ++i) {
        const double g = grads[i];
        state.m[i] = c.beta1 * state.m[i] + (1.0 - c.beta1) * g;
        state.v[i] = c.beta2 * state.v[i] + (1.0 - c.beta2) * g * g;
        const double mhat = state.m[i] / bc1;
        const double vhat = state.v[i] / bc2;
        params[i] -= c.lr * (mhat / (std::sqrt(vhat) + c.eps) + c.weight_decay * params[i]);
    }
}

} // namespace dpace
