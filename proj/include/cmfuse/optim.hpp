#pragma once

#include <cmath>
#include <vector>

#include "cmfuse/nn.hpp"

namespace cmfuse {

struct AdamConfig {
    double lr = 1e-3;
    double beta1 = 0.9;
    double beta2 = 0.999;
    double eps = 1e-8;
};

// Bias-corrected Adam over a fixed parameter set; moment buffers mirror the
// parameter shapes and are kept in parameter-map order.
template <typename S>
class Adam {
  public:
    Adam() = default;

    explicit Adam(const ParamMap<S>& params, AdamConfig cfg = {}) : cfg_(cfg) {
        m_.resize(params.size());
        v_.resize(params.size());
        for (size_t i = 0; i < params.size(); ++i) {
            m_[i].assign(params.items[i].second.numel(), S(0));
            v_[i].assign(params.items[i].second.numel(), S(0));
        }
    }

    int64_t step_count() const { return step_; }
    const std::vector<std::vector<S>>& first_moments() const { return m_; }
    const std::vector<std::vector<S>>& second_moments() const { return v_; }

    void step(ParamMap<S>& params) {
        if (params.size() != m_.size()) {
            throw std::invalid_argument("adam: parameter set does not match optimizer state");
        }
        ++step_;
        const S b1 = static_cast<S>(cfg_.beta1);
        const S b2 = static_cast<S>(cfg_.beta2);
        const S lr = static_cast<S>(cfg_.lr);
        const S eps = static_cast<S>(cfg_.eps);
        const S c1 = S(1) - static_cast<S>(std::pow(cfg_.beta1, static_cast<double>(step_)));
        const S c2 = S(1) - static_cast<S>(std::pow(cfg_.beta2, static_cast<double>(step_)));
        for (size_t i = 0; i < params.size(); ++i) {
            Tensor<S>& t = params.items[i].second;
            if (!t.requires_grad()) continue;
            const auto& g = t.grad();
            if (g.size() != m_[i].size()) {
                throw std::invalid_argument("adam: gradient shape changed for " +
                                            params.items[i].first);
            }
            auto& data = t.data();
            auto& m = m_[i];
            auto& v = v_[i];
            for (size_t j = 0; j < g.size(); ++j) {
                m[j] = b1 * m[j] + (S(1) - b1) * g[j];
                v[j] = b2 * v[j] + (S(1) - b2) * g[j] * g[j];
                const S mhat = m[j] / c1;
                const S vhat = v[j] / c2;
                data[j] -= lr * mhat / (std::sqrt(vhat) + eps);
            }
        }
    }

  private:
    AdamConfig cfg_;
    int64_t step_ = 0;
    std::vector<std::vector<S>> m_, v_;
};

}  // namespace cmfuse
