#pragma once

#include <optional>
#include <string>
#include <vector>

#include "cmfuse/config.hpp"
#include "cmfuse/fusion.hpp"

namespace cmfuse {

template <typename S>
struct Prediction {
    Tensor<S> logits;         // (batch, d_out)
    Tensor<S> probabilities;  // softmax rows or independent sigmoids
    Task task = Task::SingleLabel;
};

template <typename S>
Prediction<S> classify(const Tensor<S>& joint, const Linear<S>& head, Task task) {
    if (joint.rank() != 2) {
        throw std::invalid_argument("classify: joint representation must be (batch, width), got " +
                                    shape_str(joint.shape()));
    }
    Prediction<S> p;
    p.task = task;
    p.logits = head.forward(joint);
    p.probabilities = task == Task::SingleLabel ? softmax(p.logits, 1) : sigmoid(p.logits);
    return p;
}

template <typename S>
void check_one_hot(const Tensor<S>& y) {
    if (y.rank() != 2) {
        throw std::invalid_argument("labels must be (batch, classes), got " + shape_str(y.shape()));
    }
    const int64_t n = y.extent(1);
    for (int64_t r = 0; r < y.extent(0); ++r) {
        int64_t ones = 0;
        for (int64_t c = 0; c < n; ++c) {
            const S v = y.data()[r * n + c];
            if (v == S(1)) {
                ++ones;
            } else if (v != S(0)) {
                throw std::invalid_argument("labels must be one-hot, row " + std::to_string(r) +
                                            " has entry " + std::to_string(static_cast<double>(v)));
            }
        }
        if (ones != 1) {
            throw std::invalid_argument("labels must be one-hot, row " + std::to_string(r) +
                                        " has " + std::to_string(ones) + " ones");
        }
    }
}

// Mean over the batch of -log p(true class), computed from logits through
// log-sum-exp; never goes through clipped probabilities.
template <typename S>
Tensor<S> cross_entropy(const Prediction<S>& pred, const Tensor<S>& y) {
    if (pred.task != Task::SingleLabel) {
        throw std::invalid_argument("cross_entropy: single-label predictions required");
    }
    if (y.shape() != pred.logits.shape()) {
        throw std::invalid_argument("cross_entropy: labels " + shape_str(y.shape()) +
                                    " vs logits " + shape_str(pred.logits.shape()));
    }
    check_one_hot(y);
    Tensor<S> picked = mul(log_softmax(pred.logits, 1), y);
    return scale(sum_all(picked), -S(1) / static_cast<S>(y.extent(0)));
}

// Mean binary cross-entropy over all (sample, class) cells.
template <typename S>
Tensor<S> multilabel_loss(const Prediction<S>& pred, const Tensor<S>& y) {
    if (pred.task != Task::MultiLabel) {
        throw std::invalid_argument("multilabel_loss: multi-label predictions required");
    }
    return bce_with_logits(pred.logits, y);
}

// ---------------------------------------------------------------------------
// End-to-end model assembly
// ---------------------------------------------------------------------------

template <typename S>
class FusionModel {
  public:
    explicit FusionModel(const ModelConfig& cfg, Rng& rng) : cfg_(cfg) {
        if (cfg_.classes < 2) throw std::invalid_argument("model: at least 2 classes required");
        if (cfg_.trimodal) {
            build_trimodal(rng);
        } else {
            build_bimodal(rng);
        }
        head_ = Linear<S>(joint_width_, cfg_.classes, rng);
    }

    const ModelConfig& config() const { return cfg_; }
    int64_t joint_width() const { return joint_width_; }

    Prediction<S> forward(const Tensor<S>& audio, const Tensor<S>& visual, Mode mode, Rng& rng) {
        if (cfg_.trimodal) {
            throw std::invalid_argument("model: trimodal config needs forward_trimodal");
        }
        Tensor<S> audio_map = audio_enc_.forward_map(audio_features(audio), mode, rng);
        Tensor<S> audio_vec = flatten(audio_map, 1);
        Tensor<S> visual_map = visual_enc_.forward(visual_features(visual), mode);

        Tensor<S> joint;
        switch (cfg_.mode) {
            case FusionMode::Concat:
                joint = concat<S>({audio_vec, flatten(visual_map, 1)}, 1);
                break;
            case FusionMode::McaBaseline: {
                Tensor<S> h_a = mca_proj_a_.forward(sequence_of(audio_map));
                Tensor<S> h_v = mca_proj_v_.forward(sequence_of_map(visual_map));
                joint = mca_fusion(h_a, h_v, mca_layers_a_, mca_layers_v_);
                break;
            }
            default: {
                AdaptiveBlockOptions opts;
                opts.use_selector = cfg_.mode != FusionMode::NoSelfAttention;
                opts.use_residual = cfg_.mode != FusionMode::NoResidual;
                FuseDirection dir = FuseDirection::Both;
                if (cfg_.mode == FusionMode::AudioToVisualOnly) dir = FuseDirection::AudioToVisual;
                if (cfg_.mode == FusionMode::VisualToAudioOnly) dir = FuseDirection::VisualToAudio;
                auto rep = bidirectional_fuse(sequence_of(audio_map), audio_vec,
                                              sequence_of_map(visual_map), visual_map,
                                              p_av_ ? &*p_av_ : nullptr,
                                              p_va_ ? &*p_va_ : nullptr, dir, opts);
                joint = rep.joint;
                break;
            }
        }
        return classify(joint, head_, cfg_.task);
    }

    Prediction<S> forward_trimodal(const Tensor<S>& audio, const Tensor<S>& visual,
                                   const Tensor<S>& text, Mode mode, Rng& rng) {
        if (!cfg_.trimodal) {
            throw std::invalid_argument("model: bimodal config cannot run forward_trimodal");
        }
        Tensor<S> audio_seq = sequence_of(audio_enc_.forward_map(audio_features(audio), mode, rng));
        Tensor<S> visual_seq = sequence_of(visual1d_enc_.forward_map(visual, mode, rng));
        Tensor<S> text_seq = text_enc_.forward(text_features(text));

        AdaptiveBlockOptions opts;
        opts.use_selector = cfg_.mode != FusionMode::NoSelfAttention;
        opts.use_residual = cfg_.mode != FusionMode::NoResidual;
        auto rep = trimodal_fuse(audio_seq, visual_seq, text_seq, *p_at_, *p_vt_, opts);
        return classify(rep.joint, head_, cfg_.task);
    }

    ParamMap<S> params() const {
        ParamMap<S> out;
        collect_into(out, false);
        return out;
    }

    // Learnable tensors plus normalization buffers, checkpoint order.
    ParamMap<S> state() const {
        ParamMap<S> out;
        collect_into(out, true);
        return out;
    }

    void load_state(const std::vector<std::pair<std::string, Tensor<S>>>& tensors) {
        ParamMap<S> state_map = state();
        if (tensors.size() != state_map.size()) {
            throw std::invalid_argument("load_state: checkpoint has " +
                                        std::to_string(tensors.size()) + " tensors, model needs " +
                                        std::to_string(state_map.size()));
        }
        for (const auto& [name, src] : tensors) {
            Tensor<S>* dst = state_map.find(name);
            if (!dst) throw std::invalid_argument("load_state: unknown tensor " + name);
            if (dst->shape() != src.shape()) {
                throw std::invalid_argument("load_state: " + name + " has shape " +
                                            shape_str(src.shape()) + ", model expects " +
                                            shape_str(dst->shape()));
            }
            dst->data() = src.data();
        }
    }

  private:
    void build_bimodal(Rng& rng) {
        audio_enc_ = AudioEncoder<S>(cfg_.audio, rng);
        visual_enc_ = VisualEncoder<S>(cfg_.visual, rng);

        const int64_t frames = cfg_.audio_shape.at(1);
        const int64_t audio_flat = audio_flat_width(cfg_.audio, frames);
        const int64_t audio_channels = cfg_.audio.channels[2];
        const Shape vshape = visual_output_shape(cfg_.visual, cfg_.visual_shape);
        const int64_t visual_channels = vshape[0];
        const int64_t visual_flat = numel_of(vshape);

        switch (cfg_.mode) {
            case FusionMode::Concat:
                joint_width_ = audio_flat + visual_flat;
                break;
            case FusionMode::McaBaseline: {
                const auto& att = cfg_.attention;
                mca_proj_a_ = Linear<S>(audio_channels, att.model_dim, rng);
                mca_proj_v_ = Linear<S>(visual_channels, att.model_dim, rng);
                for (int64_t l = 0; l < att.layers; ++l) {
                    mca_layers_a_.emplace_back(att.model_dim, att.heads, att.mlp_ratio, rng);
                }
                for (int64_t l = 0; l < att.layers; ++l) {
                    mca_layers_v_.emplace_back(att.model_dim, att.heads, att.mlp_ratio, rng);
                }
                joint_width_ = 2 * att.model_dim;
                break;
            }
            case FusionMode::AudioToVisualOnly:
                p_av_.emplace(visual_channels, visual_channels, audio_channels,
                              cfg_.selector.depth, cfg_.selector.heads, cfg_.selector.mlp_ratio,
                              rng);
                joint_width_ = visual_flat;
                break;
            case FusionMode::VisualToAudioOnly:
                p_va_.emplace(audio_flat, audio_flat, visual_channels, cfg_.selector.depth,
                              cfg_.selector.heads, cfg_.selector.mlp_ratio, rng);
                joint_width_ = audio_flat;
                break;
            default:
                p_av_.emplace(visual_channels, visual_channels, audio_channels,
                              cfg_.selector.depth, cfg_.selector.heads, cfg_.selector.mlp_ratio,
                              rng);
                p_va_.emplace(audio_flat, audio_flat, visual_channels, cfg_.selector.depth,
                              cfg_.selector.heads, cfg_.selector.mlp_ratio, rng);
                joint_width_ = audio_flat + visual_flat;
                break;
        }
    }

    void build_trimodal(Rng& rng) {
        if (cfg_.mode == FusionMode::McaBaseline || cfg_.mode == FusionMode::Concat ||
            cfg_.mode == FusionMode::AudioToVisualOnly ||
            cfg_.mode == FusionMode::VisualToAudioOnly) {
            throw std::invalid_argument("model: trimodal config supports adaptive modes only");
        }
        audio_enc_ = AudioEncoder<S>(cfg_.audio, rng);
        visual1d_enc_ = AudioEncoder<S>(cfg_.visual_seq, rng);
        text_enc_ = TextProjector<S>(cfg_.text, rng);
        audio_output_length(cfg_.audio, cfg_.audio_shape.at(1));
        audio_output_length(cfg_.visual_seq, cfg_.visual_shape.at(1));

        const int64_t width = cfg_.text.width;
        p_at_.emplace(width, width, cfg_.audio.channels[2], cfg_.selector.depth,
                      cfg_.selector.heads, cfg_.selector.mlp_ratio, rng);
        p_vt_.emplace(width, width, cfg_.visual_seq.channels[2], cfg_.selector.depth,
                      cfg_.selector.heads, cfg_.selector.mlp_ratio, rng);
        joint_width_ = 2 * width;
    }

    // (batch, channels, len) -> (batch, len, channels)
    static Tensor<S> sequence_of(const Tensor<S>& map) { return permute(map, {0, 2, 1}); }

    // (batch, C, S, H, W) -> (batch, S*H*W, C)
    static Tensor<S> sequence_of_map(const Tensor<S>& map) {
        const int64_t b = map.extent(0);
        const int64_t c = map.extent(1);
        return permute(reshape(map, {b, c, map.numel() / (b * c)}), {0, 2, 1});
    }

    void collect_into(ParamMap<S>& out, bool with_buffers) const {
        auto enc = [&](const AudioEncoder<S>& e, const std::string& p) {
            with_buffers ? e.collect_state(p, out) : e.collect(p, out);
        };
        if (cfg_.trimodal) {
            enc(audio_enc_, "encoder.audio");
            enc(visual1d_enc_, "encoder.visual");
            text_enc_.collect("encoder.text", out);
            p_at_->collect("fusion.at", out);
            p_vt_->collect("fusion.vt", out);
        } else {
            enc(audio_enc_, "encoder.audio");
            if (with_buffers) {
                visual_enc_.collect_state("encoder.visual", out);
            } else {
                visual_enc_.collect("encoder.visual", out);
            }
            if (cfg_.mode == FusionMode::McaBaseline) {
                mca_proj_a_.collect("mca.proj_audio", out);
                mca_proj_v_.collect("mca.proj_visual", out);
                for (size_t i = 0; i < mca_layers_a_.size(); ++i) {
                    mca_layers_a_[i].collect("mca.audio." + std::to_string(i), out);
                }
                for (size_t i = 0; i < mca_layers_v_.size(); ++i) {
                    mca_layers_v_[i].collect("mca.visual." + std::to_string(i), out);
                }
            }
            if (p_av_) p_av_->collect("fusion.av", out);
            if (p_va_) p_va_->collect("fusion.va", out);
        }
        head_.collect("head", out);
    }

    ModelConfig cfg_;
    int64_t joint_width_ = 0;

    AudioEncoder<S> audio_enc_;
    VisualEncoder<S> visual_enc_;
    AudioEncoder<S> visual1d_enc_;
    TextProjector<S> text_enc_;

    std::optional<AdaptiveBlockParams<S>> p_av_, p_va_;  // bimodal blocks
    std::optional<AdaptiveBlockParams<S>> p_at_, p_vt_;  // trimodal blocks

    Linear<S> mca_proj_a_, mca_proj_v_;
    std::vector<TransformerLayerParams<S>> mca_layers_a_, mca_layers_v_;

    Linear<S> head_;
};

}  // namespace cmfuse
