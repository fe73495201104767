#pragma once

#include <cstddef>
#include <functional>
#include <span>
#include <vector>

namespace dpace {

using RealVector = std::vector<double>;

// throws std::invalid_argument naming `what` if any entry is NaN or Inf
void check_finite(std::span<const double> x, const char* what);

// max-shifted softmax over the whole vector; output sums to 1 within 1e-12
RealVector softmax(const RealVector& logits);

// max-shifted log-softmax
RealVector log_softmax(const RealVector& logits);

// in-place log-softmax of one row; used by the losses on B x V blocks
void log_softmax_inplace(std::span<double> row);

// central differences (f(x + h e_k) - f(x - h e_k)) / (2h) per coordinate
RealVector finite_diff_grad(const std::function<double(const RealVector&)>& f,
                            const RealVector& x, double h);

struct AdamWConfig {
    double lr = 1e-3; // toy default; large-scale drafter runs use 6e-4
    double beta1 = 0.9;
    double beta2 = 0.999;
    double eps = 1e-8;
    double weight_decay = 0.01;
};

struct AdamWState {
    AdamWConfig cfg;
    std::vector<double> m; // first moment
    std::vector<double> v; // second moment
    long long step = 0;

    AdamWState() = default;
    explicit AdamWState(std::size_t n, AdamWConfig c = {})
        : cfg(c), m(n, 0.0), v(n, 0.0) {}
};

// one decoupled-weight-decay Adam update; mutates params and state,
// increments the step counter; shape mismatch -> std::invalid_argument
void adamw_step(std::span<double> params, std::span<const double> grads, AdamWState& state);

} // namespace dpace
