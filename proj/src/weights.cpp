#include "dpace/weights.hpp"

#include <cmath>
#include <stdexcept>

namespace dpace {

namespace {

void check_confidences(const std::vector<double>& q) {
    if (q.empty()) {
        throw std::invalid_argument("confidence block: empty");
    }
    for (double v : q) {
        if (!(v >= 0.0 && v <= 1.0)) { // also rejects NaN
            throw std::invalid_argument("confidence block: entry outside [0, 1]");
        }
    }
}

} // namespace

std::vector<double> smooth_confidences(const std::vector<double>& q, double alpha) {
    if (!(alpha >= 0.0 && alpha <= 1.0)) {
        throw std::invalid_argument("smooth_confidences: alpha outside [0, 1]");
    }
    check_confidences(q);
    std::vector<double> qs(q.size());
    for (std::size_t i = 0; i < q.size(); ++i) {
        qs[i] = (1.0 - alpha) * q[i] + alpha;
    }
    return qs;
}

std::vector<double> prefix_products(const std::vector<double>& q_smooth) {
    std::vector<double> p(q_smooth.size());
    double run = 1.0;
    for (std::size_t i = 0; i < q_smooth.size(); ++i) {
        run *= q_smooth[i];
        p[i] = run;
    }
    return p;
}

std::vector<double> continuation_values(const std::vector<double>& q_smooth) {
    const std::size_t b = q_smooth.size();
    std::vector<double> f(b);
    f[b - 1] = 1.0;
    for (std::size_t j = b - 1; j-- > 0;) {
        f[j] = 1.0 + q_smooth[j + 1] * f[j + 1];
    }
    return f;
}

std::vector<double> dpace_weights(const std::vector<double>& q, double alpha) {
    const std::vector<double> p = prefix_products(smooth_confidences(q, alpha));
    std::vector<double> w(p.size());
    double suffix = 0.0;
    for (std::size_t j = p.size(); j-- > 0;) {
        suffix += p[j];
        w[j] = suffix;
    }
    return w;
}

double surrogate_S(const std::vector<double>& q) {
    check_confidences(q);
    double s = 0.0;
    double run = 1.0;
    for (double v : q) {
        run *= v;
        s += run;
    }
    return s;
}

} // namespace dpace
