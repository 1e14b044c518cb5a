#pragma once

#include <vector>

#include "cmfuse/nn.hpp"

namespace cmfuse {

template <typename S>
struct AttentionParams {
    Tensor<S> wq, wk, wv, wo;  // (model_dim, model_dim)
    int64_t heads = 1;
    int64_t model_dim = 0;

    AttentionParams() = default;
    AttentionParams(int64_t model_dim_, int64_t heads_, Rng& rng)
        : heads(heads_), model_dim(model_dim_) {
        if (heads < 1 || model_dim % heads != 0) {
            throw std::invalid_argument("attention: model dim " + std::to_string(model_dim) +
                                        " not divisible by " + std::to_string(heads) + " heads");
        }
        wq = fanin_uniform<S>({model_dim, model_dim}, model_dim, rng);
        wk = fanin_uniform<S>({model_dim, model_dim}, model_dim, rng);
        wv = fanin_uniform<S>({model_dim, model_dim}, model_dim, rng);
        wo = fanin_uniform<S>({model_dim, model_dim}, model_dim, rng);
    }

    int64_t head_dim() const { return model_dim / heads; }

    void collect(const std::string& prefix, ParamMap<S>& out) const {
        out.add(prefix + ".wq", wq);
        out.add(prefix + ".wk", wk);
        out.add(prefix + ".wv", wv);
        out.add(prefix + ".wo", wo);
    }
};

template <typename S>
struct AttentionResult {
    Tensor<S> output;   // (batch, n_q, model_dim)
    Tensor<S> weights;  // (batch, heads, n_q, n_k)
};

// Scaled dot-product attention over projected q/k/v, heads concatenated and
// mapped through the output projection.
template <typename S>
AttentionResult<S> attention_with_weights(const Tensor<S>& q, const Tensor<S>& k,
                                          const Tensor<S>& v, const AttentionParams<S>& p) {
    if (q.rank() != 3 || k.rank() != 3 || v.rank() != 3) {
        throw std::invalid_argument("attention: q/k/v must be (batch, n, dim)");
    }
    if (q.extent(2) != p.model_dim || k.extent(2) != p.model_dim || v.extent(2) != p.model_dim) {
        throw std::invalid_argument("attention: feature widths " + shape_str(q.shape()) + ", " +
                                    shape_str(k.shape()) + ", " + shape_str(v.shape()) +
                                    " do not all match model dim " + std::to_string(p.model_dim));
    }
    if (k.extent(0) != q.extent(0) || v.extent(0) != q.extent(0) || k.extent(1) != v.extent(1)) {
        throw std::invalid_argument("attention: batch/key extents of " + shape_str(k.shape()) +
                                    " and " + shape_str(v.shape()) + " do not conform with " +
                                    shape_str(q.shape()));
    }
    const int64_t b = q.extent(0), nq = q.extent(1), nk = k.extent(1);
    const int64_t h = p.heads, hd = p.head_dim();

    auto heads_of = [&](const Tensor<S>& x, const Tensor<S>& w, int64_t n) {
        return permute(reshape(matmul(x, w), {b, n, h, hd}), {0, 2, 1, 3});
    };
    Tensor<S> qh = heads_of(q, p.wq, nq);
    Tensor<S> kh = heads_of(k, p.wk, nk);
    Tensor<S> vh = heads_of(v, p.wv, nk);

    Tensor<S> scores = scale(matmul(qh, permute(kh, {0, 1, 3, 2})),
                             S(1) / std::sqrt(static_cast<S>(hd)));
    Tensor<S> weights = softmax(scores, 3);
    Tensor<S> mixed = matmul(weights, vh);  // (b, h, nq, hd)
    Tensor<S> merged = reshape(permute(mixed, {0, 2, 1, 3}), {b, nq, p.model_dim});
    return {matmul(merged, p.wo), weights};
}

template <typename S>
Tensor<S> attention(const Tensor<S>& q, const Tensor<S>& k, const Tensor<S>& v,
                    const AttentionParams<S>& p) {
    return attention_with_weights(q, k, v, p).output;
}

// ---------------------------------------------------------------------------
// Pre-norm transformer layers
// ---------------------------------------------------------------------------

template <typename S>
struct TransformerLayerParams {
    AttentionParams<S> attn;
    LayerNormLayer<S> ln1, ln2;
    Linear<S> mlp1, mlp2;

    TransformerLayerParams() = default;
    TransformerLayerParams(int64_t model_dim, int64_t heads, int64_t mlp_ratio, Rng& rng)
        : attn(model_dim, heads, rng),
          ln1(model_dim),
          ln2(model_dim),
          mlp1(model_dim, model_dim * mlp_ratio, rng),
          mlp2(model_dim * mlp_ratio, model_dim, rng) {}

    void collect(const std::string& prefix, ParamMap<S>& out) const {
        attn.collect(prefix + ".attn", out);
        ln1.collect(prefix + ".ln1", out);
        ln2.collect(prefix + ".ln2", out);
        mlp1.collect(prefix + ".mlp1", out);
        mlp2.collect(prefix + ".mlp2", out);
    }
};

// target queries, source keys/values; residual adds the target, then the
// MLP block with its own residual.
template <typename S>
Tensor<S> cross_transformer_layer(const Tensor<S>& target, const Tensor<S>& source,
                                  const TransformerLayerParams<S>& p) {
    if (target.extent(2) != source.extent(2)) {
        throw std::invalid_argument("cross transformer: model dims of " +
                                    shape_str(target.shape()) + " and " +
                                    shape_str(source.shape()) + " differ");
    }
    Tensor<S> y = add(attention(p.ln1.forward(target), p.ln1.forward(source),
                                p.ln1.forward(source), p.attn),
                      target);
    Tensor<S> m = p.mlp2.forward(relu(p.mlp1.forward(p.ln2.forward(y))));
    return add(m, y);
}

template <typename S>
Tensor<S> msa_layer(const Tensor<S>& h, const TransformerLayerParams<S>& p) {
    return cross_transformer_layer(h, h, p);
}

// Cross-attention fusion baseline: both directions updated per level from the
// previous level, then mean-pooled over positions and concatenated.
template <typename S>
Tensor<S> mca_fusion(const Tensor<S>& h_a, const Tensor<S>& h_v,
                     const std::vector<TransformerLayerParams<S>>& layers_a,
                     const std::vector<TransformerLayerParams<S>>& layers_v) {
    if (layers_a.size() != layers_v.size()) {
        throw std::invalid_argument("mca fusion: per-direction stacks must have equal depth");
    }
    Tensor<S> a = h_a;
    Tensor<S> v = h_v;
    for (size_t l = 0; l < layers_a.size(); ++l) {
        Tensor<S> na = cross_transformer_layer(a, v, layers_a[l]);
        Tensor<S> nv = cross_transformer_layer(v, a, layers_v[l]);
        a = na;
        v = nv;
    }
    return concat<S>({mean_axis(a, 1), mean_axis(v, 1)}, 1);
}

}  // namespace cmfuse
