#pragma once

#include <vector>

#include "cmfuse/attention.hpp"

namespace cmfuse {

// Parameters of one adaptive cross-modal block. The selector is a self-attention
// stack over the source sequence; the gate maps the target's channels and the
// selected source vector into a shared k-wide space. The channel-wise product in
// reinforce() is only well formed when k equals the target channel count, so any
// other k is rejected up front.
template <typename S>
struct AdaptiveBlockParams {
    std::vector<TransformerLayerParams<S>> selector;
    Tensor<S> w_v;  // (k, target_channels)
    Tensor<S> w_a;  // (k, source_width)
    Tensor<S> b_v;  // (k)
    int64_t k = 0;
    int64_t target_channels = 0;
    int64_t source_width = 0;

    AdaptiveBlockParams() = default;

    AdaptiveBlockParams(int64_t k_, int64_t target_channels_, int64_t source_width_,
                        int64_t selector_depth, int64_t selector_heads, int64_t mlp_ratio,
                        Rng& rng)
        : k(k_), target_channels(target_channels_), source_width(source_width_) {
        if (k != target_channels) {
            throw std::invalid_argument("adaptive block: gate width k=" + std::to_string(k) +
                                        " must equal target channels C=" +
                                        std::to_string(target_channels));
        }
        w_v = fanin_uniform<S>({k, target_channels}, target_channels, rng);
        w_a = fanin_uniform<S>({k, source_width}, source_width, rng);
        b_v = Tensor<S>(Shape{k}, true);
        for (int64_t d = 0; d < selector_depth; ++d) {
            selector.emplace_back(source_width, selector_heads, mlp_ratio, rng);
        }
    }

    void collect(const std::string& prefix, ParamMap<S>& out) const {
        for (size_t i = 0; i < selector.size(); ++i) {
            selector[i].collect(prefix + ".selector." + std::to_string(i), out);
        }
        out.add(prefix + ".w_v", w_v);
        out.add(prefix + ".w_a", w_a);
        out.add(prefix + ".b_v", b_v);
    }
};

struct AdaptiveBlockOptions {
    bool use_selector = true;  // off: plain mean pooling, no self-attention
    bool use_residual = true;  // off: softmax(gate) * target without the add-back
};

// Intra-modal feature selection: self-attention layers over the source
// sequence, then mean pooling over positions.
template <typename S>
Tensor<S> select_features(const Tensor<S>& h,
                          const std::vector<TransformerLayerParams<S>>& selector,
                          bool use_selector = true) {
    if (h.rank() != 3) {
        throw std::invalid_argument("select_features: source must be (batch, n, dim), got " +
                                    shape_str(h.shape()));
    }
    Tensor<S> s = h;
    if (use_selector) {
        for (const auto& layer : selector) s = msa_layer(s, layer);
    }
    return mean_axis(s, 1);
}

// tanh gate over the target map: a per-location channel projection of the
// target plus the projected source vector broadcast over all locations.
template <typename S>
Tensor<S> fuse_gate(const Tensor<S>& source_vec, const Tensor<S>& target_map,
                    const AdaptiveBlockParams<S>& p) {
    if (source_vec.rank() != 2 || source_vec.extent(1) != p.source_width) {
        throw std::invalid_argument("fuse_gate: selected source " + shape_str(source_vec.shape()) +
                                    " does not match configured width " +
                                    std::to_string(p.source_width));
    }
    if (target_map.rank() < 2 || target_map.extent(1) != p.target_channels) {
        throw std::invalid_argument("fuse_gate: target " + shape_str(target_map.shape()) +
                                    " does not carry " + std::to_string(p.target_channels) +
                                    " channels on axis 1");
    }
    const int64_t b = target_map.extent(0);
    const int64_t c = p.target_channels;
    const int64_t m = target_map.numel() / (b * c);

    Tensor<S> locs = permute(reshape(target_map, {b, c, m}), {0, 2, 1});   // (b, M, C)
    Tensor<S> gate = permute(matmul(locs, permute(p.w_v, {1, 0})), {0, 2, 1});  // (b, k, M)
    gate = add(gate, reshape(p.b_v, {1, p.k, 1}));
    Tensor<S> src = matmul(source_vec, permute(p.w_a, {1, 0}));            // (b, k)
    gate = broadcast_add(gate, reshape(src, {b, p.k, 1}));
    gate = tanh(gate);

    Shape out_shape = target_map.shape();
    out_shape[1] = p.k;
    return reshape(gate, out_shape);
}

// Channel-softmax weighting of the target plus the residual copy that keeps
// the original structure intact.
template <typename S>
Tensor<S> reinforce(const Tensor<S>& gate, const Tensor<S>& target, bool residual = true) {
    if (gate.shape() != target.shape()) {
        throw std::invalid_argument("reinforce: gate " + shape_str(gate.shape()) +
                                    " does not match target " + shape_str(target.shape()));
    }
    if (target.rank() < 2) {
        throw std::invalid_argument("reinforce: target must be (batch, channels, ...)");
    }
    Tensor<S> weights = softmax(gate, 1);
    Tensor<S> scaled = mul(weights, target);
    return residual ? add(scaled, target) : scaled;
}

template <typename S>
Tensor<S> adaptive_block(const Tensor<S>& source_seq, const Tensor<S>& target_map,
                         const AdaptiveBlockParams<S>& p, const AdaptiveBlockOptions& opts = {}) {
    Tensor<S> selected = select_features(source_seq, p.selector, opts.use_selector);
    Tensor<S> gate = fuse_gate(selected, target_map, p);
    return reinforce(gate, target_map, opts.use_residual);
}

enum class FuseDirection { Both, AudioToVisual, VisualToAudio };

template <typename S>
struct FusedRepresentation {
    Tensor<S> forward_av;  // target reinforced by the audio-side source
    Tensor<S> forward_va;  // target reinforced by the visual-side source
    Tensor<S> joint;
};

// Runs the two directional blocks independently and splices the flattened
// results. Single-direction modes keep only that branch.
template <typename S>
FusedRepresentation<S> bidirectional_fuse(const Tensor<S>& audio_seq, const Tensor<S>& audio_vec,
                                          const Tensor<S>& visual_seq, const Tensor<S>& visual_map,
                                          const AdaptiveBlockParams<S>* params_av,
                                          const AdaptiveBlockParams<S>* params_va,
                                          FuseDirection direction,
                                          const AdaptiveBlockOptions& opts = {}) {
    FusedRepresentation<S> rep;
    if (direction != FuseDirection::VisualToAudio) {
        if (!params_av) {
            throw std::invalid_argument("bidirectional_fuse: audio->visual parameters missing");
        }
        rep.forward_av = adaptive_block(audio_seq, visual_map, *params_av, opts);
    }
    if (direction != FuseDirection::AudioToVisual) {
        if (!params_va) {
            throw std::invalid_argument("bidirectional_fuse: visual->audio parameters missing");
        }
        rep.forward_va = adaptive_block(visual_seq, audio_vec, *params_va, opts);
    }
    switch (direction) {
        case FuseDirection::Both:
            rep.joint = concat<S>({flatten(rep.forward_va, 1), flatten(rep.forward_av, 1)}, 1);
            break;
        case FuseDirection::AudioToVisual:
            rep.joint = flatten(rep.forward_av, 1);
            break;
        case FuseDirection::VisualToAudio:
            rep.joint = flatten(rep.forward_va, 1);
            break;
    }
    return rep;
}

// Audio and visual each reinforce the text stream, which is treated as a 1-D
// channel map over token positions; the two reinforced copies are pooled over
// tokens and spliced.
template <typename S>
FusedRepresentation<S> trimodal_fuse(const Tensor<S>& audio_seq, const Tensor<S>& visual_seq,
                                     const Tensor<S>& text_seq,
                                     const AdaptiveBlockParams<S>& params_at,
                                     const AdaptiveBlockParams<S>& params_vt,
                                     const AdaptiveBlockOptions& opts = {}) {
    if (text_seq.rank() != 3) {
        throw std::invalid_argument("trimodal_fuse: text must be (batch, tokens, width), got " +
                                    shape_str(text_seq.shape()));
    }
    Tensor<S> text_map = permute(text_seq, {0, 2, 1});  // (b, width, tokens)
    FusedRepresentation<S> rep;
    rep.forward_av = adaptive_block(audio_seq, text_map, params_at, opts);
    rep.forward_va = adaptive_block(visual_seq, text_map, params_vt, opts);
    rep.joint = concat<S>({mean_axis(rep.forward_av, 2), mean_axis(rep.forward_va, 2)}, 1);
    return rep;
}

}  // namespace cmfuse
