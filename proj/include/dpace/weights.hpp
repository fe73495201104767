#pragma once

#include <vector>

namespace dpace {

// All functions take per-position draft confidences q_1..q_B on the
// target-selected tokens, each in [0, 1]. B >= 1.

// qs_i = (1 - alpha) * q_i + alpha; alpha outside [0,1] -> std::invalid_argument
std::vector<double> smooth_confidences(const std::vector<double>& q, double alpha);

// running products P_j = prod_{i<=j} qs_i, left to right
std::vector<double> prefix_products(const std::vector<double>& q_smooth);

// continuation values f_j = 1 + sum_{m=j+1}^{B} prod_{i=j+1}^{m} qs_i,
// computed by the backward recurrence f_j = 1 + qs_{j+1} * f_{j+1}, f_B = 1
std::vector<double> continuation_values(const std::vector<double>& q_smooth);

// per-position weights w_j = sum_{m=j}^{B} P_m (suffix sums of prefix
// products of the smoothed confidences). Returned as plain values: the loss
// treats them as constants, never differentiating through them.
std::vector<double> dpace_weights(const std::vector<double>& q, double alpha);

// accepted-length surrogate S = sum_{k=1}^{B} prod_{i<=k} q_i, in (0, B]
double surrogate_S(const std::vector<double>& q);

} // namespace dpace
