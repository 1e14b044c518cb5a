#pragma once

#include <string>
#include <string_view>
#include <utility>
#include <vector>

#include "cmfuse/ops.hpp"

namespace cmfuse {

enum class Mode { Train, Eval };

// Named learnable tensors in stable insertion order.
template <typename S>
struct ParamMap {
    std::vector<std::pair<std::string, Tensor<S>>> items;

    void add(const std::string& name, const Tensor<S>& t) {
        if (find(name)) throw std::invalid_argument("duplicate parameter name: " + name);
        items.emplace_back(name, t);
    }

    Tensor<S>* find(const std::string& name) {
        for (auto& [n, t] : items) {
            if (n == name) return &t;
        }
        return nullptr;
    }

    const Tensor<S>* find(const std::string& name) const {
        for (const auto& [n, t] : items) {
            if (n == name) return &t;
        }
        return nullptr;
    }

    size_t size() const { return items.size(); }

    void zero_grads() {
        for (auto& [n, t] : items) t.zero_grad();
    }
};

template <typename S>
int64_t param_count(const ParamMap<S>& params, std::string_view prefix = "") {
    int64_t total = 0;
    for (const auto& [name, t] : params.items) {
        if (name.size() >= prefix.size() && std::string_view(name).substr(0, prefix.size()) == prefix) {
            total += t.numel();
        }
    }
    return total;
}

// Uniform in +-1/sqrt(fan_in); the single init scheme used everywhere.
template <typename S>
Tensor<S> fanin_uniform(Shape shape, int64_t fan_in, Rng& rng) {
    const S bound = S(1) / std::sqrt(static_cast<S>(fan_in));
    return Tensor<S>::uniform(std::move(shape), -bound, bound, rng, true);
}

template <typename S>
struct Linear {
    Tensor<S> weight;  // (in, out)
    Tensor<S> bias;    // (out)

    Linear() = default;
    Linear(int64_t in, int64_t out, Rng& rng)
        : weight(fanin_uniform<S>({in, out}, in, rng)), bias(Shape{out}, true) {}

    Tensor<S> forward(const Tensor<S>& x) const {
        if (x.extent(x.rank() - 1) != weight.extent(0)) {
            throw std::invalid_argument("linear: input width " +
                                        std::to_string(x.extent(x.rank() - 1)) +
                                        " does not match weight " + shape_str(weight.shape()));
        }
        return add(matmul(x, weight), bias);
    }

    void collect(const std::string& prefix, ParamMap<S>& out) const {
        out.add(prefix + ".weight", weight);
        out.add(prefix + ".bias", bias);
    }
};

template <typename S>
struct Conv1dLayer {
    Tensor<S> weight;  // (out_ch, in_ch, k)
    Tensor<S> bias;    // (out_ch)
    int64_t stride = 1;
    int64_t padding = 0;

    Conv1dLayer() = default;
    Conv1dLayer(int64_t in_ch, int64_t out_ch, int64_t k, Rng& rng, int64_t stride_ = 1,
                int64_t padding_ = 0)
        : weight(fanin_uniform<S>({out_ch, in_ch, k}, in_ch * k, rng)),
          bias(Shape{out_ch}, true),
          stride(stride_),
          padding(padding_) {}

    Tensor<S> forward(const Tensor<S>& x) const { return conv1d(x, weight, bias, stride, padding); }

    void collect(const std::string& prefix, ParamMap<S>& out) const {
        out.add(prefix + ".weight", weight);
        out.add(prefix + ".bias", bias);
    }
};

template <typename S>
struct Conv3dLayer {
    Tensor<S> weight;  // (out_ch, in_ch/groups, k, k, k)
    Tensor<S> bias;    // (out_ch)
    int64_t stride = 1;
    int64_t padding = 0;
    int64_t groups = 1;

    Conv3dLayer() = default;
    Conv3dLayer(int64_t in_ch, int64_t out_ch, int64_t k, Rng& rng, int64_t stride_ = 1,
                int64_t padding_ = 0, int64_t groups_ = 1)
        : weight(fanin_uniform<S>({out_ch, in_ch / groups_, k, k, k}, (in_ch / groups_) * k * k * k,
                                  rng)),
          bias(Shape{out_ch}, true),
          stride(stride_),
          padding(padding_),
          groups(groups_) {}

    Tensor<S> forward(const Tensor<S>& x) const {
        return conv3d(x, weight, bias, stride, padding, groups);
    }

    void collect(const std::string& prefix, ParamMap<S>& out) const {
        out.add(prefix + ".weight", weight);
        out.add(prefix + ".bias", bias);
    }
};

template <typename S>
struct BatchNorm {
    Tensor<S> gamma;
    Tensor<S> beta;
    Tensor<S> running_mean;
    Tensor<S> running_var;
    S momentum = S(0.1);
    S eps = S(1e-5);

    BatchNorm() = default;
    explicit BatchNorm(int64_t channels)
        : gamma(Tensor<S>::full({channels}, S(1), true)),
          beta(Shape{channels}, true),
          running_mean(Shape{channels}),
          running_var(Tensor<S>::full({channels}, S(1))) {}

    Tensor<S> forward(const Tensor<S>& x, Mode mode) {
        return batch_norm(x, gamma, beta, running_mean, running_var, momentum, eps,
                          mode == Mode::Train);
    }

    void collect(const std::string& prefix, ParamMap<S>& out) const {
        out.add(prefix + ".gamma", gamma);
        out.add(prefix + ".beta", beta);
    }

    void collect_state(const std::string& prefix, ParamMap<S>& out) const {
        collect(prefix, out);
        out.add(prefix + ".running_mean", running_mean);
        out.add(prefix + ".running_var", running_var);
    }
};

template <typename S>
struct LayerNormLayer {
    Tensor<S> gamma;
    Tensor<S> beta;
    S eps = S(1e-5);

    LayerNormLayer() = default;
    explicit LayerNormLayer(int64_t width)
        : gamma(Tensor<S>::full({width}, S(1), true)), beta(Shape{width}, true) {}

    Tensor<S> forward(const Tensor<S>& x) const { return layer_norm(x, gamma, beta, eps); }

    void collect(const std::string& prefix, ParamMap<S>& out) const {
        out.add(prefix + ".gamma", gamma);
        out.add(prefix + ".beta", beta);
    }
};

template <typename S>
struct DropoutLayer {
    double p = 0.0;

    DropoutLayer() = default;
    explicit DropoutLayer(double p_) : p(p_) {}

    Tensor<S> forward(const Tensor<S>& x, Mode mode, Rng& rng) const {
        return dropout(x, p, mode == Mode::Train, rng);
    }
};

}  // namespace cmfuse
