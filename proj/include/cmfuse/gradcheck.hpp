#pragma once

#include <functional>
#include <string>
#include <vector>

#include "cmfuse/ops.hpp"

namespace cmfuse {

struct GradCheckReport {
    double max_rel_err = 0.0;
    double tol = 0.0;
    bool pass = false;
    std::string worst;
};

// Compares reverse-mode gradients against central finite differences.
// `f` must be deterministic and scalar-valued; run this at 64-bit only,
// finite differences at float precision are meaningless against 1e-4 bars.
inline GradCheckReport grad_check(
    const std::function<Tensor<double>(const std::vector<Tensor<double>>&)>& f,
    std::vector<Tensor<double>> inputs, double tol, double h = 1e-5) {
    for (auto& t : inputs) t.zero_grad();
    Tensor<double> y = f(inputs);
    if (y.numel() != 1) {
        throw std::invalid_argument("grad_check: function must be scalar-valued, got " +
                                    shape_str(y.shape()));
    }
    backward(y);
    std::vector<std::vector<double>> analytic;
    analytic.reserve(inputs.size());
    for (const auto& t : inputs) {
        analytic.push_back(t.requires_grad() ? t.grad() : std::vector<double>());
    }

    GradCheckReport rep;
    rep.tol = tol;
    NoGradGuard no_grad;
    for (size_t t = 0; t < inputs.size(); ++t) {
        if (!inputs[t].requires_grad()) continue;
        auto& data = inputs[t].data();
        for (size_t i = 0; i < data.size(); ++i) {
            const double orig = data[i];
            data[i] = orig + h;
            const double fp = f(inputs).item();
            data[i] = orig - h;
            const double fm = f(inputs).item();
            data[i] = orig;
            const double num = (fp - fm) / (2.0 * h);
            const double ana = analytic[t][i];
            const double err =
                std::abs(ana - num) / std::max({1.0, std::abs(ana), std::abs(num)});
            if (err > rep.max_rel_err) {
                rep.max_rel_err = err;
                rep.worst = "input " + std::to_string(t) + " element " + std::to_string(i);
            }
        }
    }
    rep.pass = rep.max_rel_err < tol;
    return rep;
}

inline GradCheckReport grad_check(const std::function<Tensor<double>(const Tensor<double>&)>& f,
                                  const Tensor<double>& x, double tol, double h = 1e-5) {
    return grad_check(
        [&f](const std::vector<Tensor<double>>& in) { return f(in[0]); },
        std::vector<Tensor<double>>{x}, tol, h);
}

}  // namespace cmfuse
