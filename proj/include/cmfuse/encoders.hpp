#pragma once

#include <vector>

#include "cmfuse/nn.hpp"

namespace cmfuse {

enum class Modality { Audio, Visual, Text };

inline const char* modality_name(Modality m) {
    switch (m) {
        case Modality::Audio: return "audio";
        case Modality::Visual: return "visual";
        case Modality::Text: return "text";
    }
    return "?";
}

// A tensor tagged with its stream and the axis contract that stream implies:
//   audio  (batch, coeffs, frames)
//   visual (batch, channels, frames, height, width)
//   text   (batch, tokens, embed)
template <typename S>
struct ModalityFeatures {
    Modality modality;
    Tensor<S> tensor;
};

template <typename S>
ModalityFeatures<S> audio_features(const Tensor<S>& t) {
    if (t.rank() != 3) {
        throw std::invalid_argument("audio features must be (batch, coeffs, frames), got " +
                                    shape_str(t.shape()));
    }
    return {Modality::Audio, t};
}

template <typename S>
ModalityFeatures<S> visual_features(const Tensor<S>& t) {
    if (t.rank() != 5) {
        throw std::invalid_argument(
            "visual features must be (batch, channels, frames, height, width), got " +
            shape_str(t.shape()));
    }
    return {Modality::Visual, t};
}

template <typename S>
ModalityFeatures<S> text_features(const Tensor<S>& t) {
    if (t.rank() != 3) {
        throw std::invalid_argument("text features must be (batch, tokens, embed), got " +
                                    shape_str(t.shape()));
    }
    return {Modality::Text, t};
}

// ---------------------------------------------------------------------------
// Audio encoder: three-conv 1D stack with max-pool compression
// ---------------------------------------------------------------------------

struct AudioEncoderConfig {
    int64_t in_coeffs = 13;
    std::vector<int64_t> channels{32, 64, 128};
    int64_t kernel = 3;
    int64_t pool = 2;
    double dropout = 0.25;
};

inline void validate_audio_config(const AudioEncoderConfig& cfg) {
    if (cfg.channels.size() != 3) {
        throw std::invalid_argument("audio encoder: exactly 3 conv widths expected, got " +
                                    std::to_string(cfg.channels.size()));
    }
    for (int64_t c : cfg.channels) {
        if (c < 1) throw std::invalid_argument("audio encoder: channel widths must be positive");
    }
    if (cfg.in_coeffs < 1 || cfg.kernel < 1 || cfg.pool < 1) {
        throw std::invalid_argument("audio encoder: coeffs, kernel and pool must be positive");
    }
}

// Length after the conv/conv/pool/conv chain; throws when frames cannot feed it.
inline int64_t audio_output_length(const AudioEncoderConfig& cfg, int64_t frames) {
    const int64_t l1 = frames - cfg.kernel + 1;
    const int64_t l2 = l1 - cfg.kernel + 1;
    if (l1 < 1 || l2 < cfg.pool) {
        throw std::invalid_argument("audio encoder: " + std::to_string(frames) +
                                    " frames too short for kernel " + std::to_string(cfg.kernel) +
                                    " / pool " + std::to_string(cfg.pool) + " chain");
    }
    const int64_t lp = (l2 - cfg.pool) / cfg.pool + 1;
    const int64_t l3 = lp - cfg.kernel + 1;
    if (l3 < 1) {
        throw std::invalid_argument("audio encoder: " + std::to_string(frames) +
                                    " frames too short for kernel " + std::to_string(cfg.kernel) +
                                    " / pool " + std::to_string(cfg.pool) + " chain");
    }
    return l3;
}

inline int64_t audio_flat_width(const AudioEncoderConfig& cfg, int64_t frames) {
    return cfg.channels[2] * audio_output_length(cfg, frames);
}

template <typename S>
class AudioEncoder {
  public:
    AudioEncoder() = default;

    AudioEncoder(const AudioEncoderConfig& cfg, Rng& rng) : cfg_(cfg) {
        validate_audio_config(cfg);
        conv1_ = Conv1dLayer<S>(cfg.in_coeffs, cfg.channels[0], cfg.kernel, rng);
        conv2_ = Conv1dLayer<S>(cfg.channels[0], cfg.channels[1], cfg.kernel, rng);
        conv3_ = Conv1dLayer<S>(cfg.channels[1], cfg.channels[2], cfg.kernel, rng);
        bn1_ = BatchNorm<S>(cfg.channels[0]);
        bn2_ = BatchNorm<S>(cfg.channels[1]);
        bn3_ = BatchNorm<S>(cfg.channels[2]);
        drop_ = DropoutLayer<S>(cfg.dropout);
    }

    // Pre-flatten feature map (batch, top_channels, out_len). Raw-tensor entry
    // point also serves other framewise streams (trimodal visual features).
    Tensor<S> forward_map(const Tensor<S>& x, Mode mode, Rng& rng) {
        check_input(x);
        audio_output_length(cfg_, x.extent(2));
        Tensor<S> h = bn1_.forward(relu(conv1_.forward(x)), mode);
        h = relu(conv2_.forward(h));
        h = drop_.forward(bn2_.forward(maxpool1d(h, cfg_.pool, cfg_.pool), mode), mode, rng);
        return bn3_.forward(relu(conv3_.forward(h)), mode);
    }

    Tensor<S> forward_map(const ModalityFeatures<S>& x, Mode mode, Rng& rng) {
        if (x.modality != Modality::Audio) {
            throw std::invalid_argument("audio encoder: features tagged as " +
                                        std::string(modality_name(x.modality)));
        }
        return forward_map(x.tensor, mode, rng);
    }

    // (batch, coeffs, frames) -> (batch, flat_width)
    Tensor<S> forward(const ModalityFeatures<S>& x, Mode mode, Rng& rng) {
        return flatten(forward_map(x, mode, rng), 1);
    }

    const AudioEncoderConfig& config() const { return cfg_; }

    void collect(const std::string& prefix, ParamMap<S>& out) const {
        conv1_.collect(prefix + ".conv1", out);
        bn1_.collect(prefix + ".bn1", out);
        conv2_.collect(prefix + ".conv2", out);
        bn2_.collect(prefix + ".bn2", out);
        conv3_.collect(prefix + ".conv3", out);
        bn3_.collect(prefix + ".bn3", out);
    }

    void collect_state(const std::string& prefix, ParamMap<S>& out) const {
        conv1_.collect(prefix + ".conv1", out);
        bn1_.collect_state(prefix + ".bn1", out);
        conv2_.collect(prefix + ".conv2", out);
        bn2_.collect_state(prefix + ".bn2", out);
        conv3_.collect(prefix + ".conv3", out);
        bn3_.collect_state(prefix + ".bn3", out);
    }

  private:
    void check_input(const Tensor<S>& x) const {
        if (x.rank() != 3) {
            throw std::invalid_argument("audio encoder: expected (batch, coeffs, frames), got " +
                                        shape_str(x.shape()));
        }
        if (x.extent(1) != cfg_.in_coeffs) {
            throw std::invalid_argument("audio encoder: coeff extent " +
                                        std::to_string(x.extent(1)) +
                                        " does not match configured " +
                                        std::to_string(cfg_.in_coeffs));
        }
    }

    AudioEncoderConfig cfg_;
    Conv1dLayer<S> conv1_, conv2_, conv3_;
    BatchNorm<S> bn1_, bn2_, bn3_;
    DropoutLayer<S> drop_;
};

// ---------------------------------------------------------------------------
// Visual encoder: residual 3D-conv stages
// ---------------------------------------------------------------------------

struct VisualEncoderConfig {
    int64_t in_channels = 3;
    std::vector<int64_t> stage_channels{16, 32};
    std::vector<int64_t> stage_strides{2, 2};
    int64_t kernel = 3;
    int64_t padding = 1;
    int64_t groups = 1;
};

inline void validate_visual_config(const VisualEncoderConfig& cfg) {
    if (cfg.stage_channels.empty() || cfg.stage_channels.size() != cfg.stage_strides.size()) {
        throw std::invalid_argument("visual encoder: stage channel and stride lists must be "
                                    "non-empty and equally long");
    }
    for (int64_t c : cfg.stage_channels) {
        if (c < 1) throw std::invalid_argument("visual encoder: channel widths must be positive");
    }
    for (int64_t s : cfg.stage_strides) {
        if (s < 1) throw std::invalid_argument("visual encoder: strides must be positive");
    }
}

// Per-sample output shape (channels, frames, height, width); validates the
// stride chain against the input extents.
inline Shape visual_output_shape(const VisualEncoderConfig& cfg, const Shape& sample_shape) {
    if (sample_shape.size() != 4) {
        throw std::invalid_argument("visual encoder: per-sample shape must be (channels, frames, "
                                    "height, width), got " +
                                    shape_str(sample_shape));
    }
    if (sample_shape[0] != cfg.in_channels) {
        throw std::invalid_argument("visual encoder: input has " + std::to_string(sample_shape[0]) +
                                    " channels, configured for " +
                                    std::to_string(cfg.in_channels));
    }
    int64_t d = sample_shape[1], h = sample_shape[2], w = sample_shape[3];
    for (size_t i = 0; i < cfg.stage_strides.size(); ++i) {
        const int64_t s = cfg.stage_strides[i];
        if (s > 1 && (d % s != 0 || h % s != 0 || w % s != 0)) {
            throw std::invalid_argument("visual encoder: extents " + shape_str({d, h, w}) +
                                        " not divisible by stride " + std::to_string(s) +
                                        " at stage " + std::to_string(i));
        }
        d = conv_out_extent(d, cfg.kernel, s, cfg.padding);
        h = conv_out_extent(h, cfg.kernel, s, cfg.padding);
        w = conv_out_extent(w, cfg.kernel, s, cfg.padding);
        if (d < 1 || h < 1 || w < 1) {
            throw std::invalid_argument("visual encoder: stage " + std::to_string(i) +
                                        " collapses the feature map");
        }
    }
    return Shape{cfg.stage_channels.back(), d, h, w};
}

template <typename S>
class VisualEncoder {
  public:
    VisualEncoder() = default;

    VisualEncoder(const VisualEncoderConfig& cfg, Rng& rng) : cfg_(cfg) {
        validate_visual_config(cfg);
        int64_t in = cfg.in_channels;
        for (size_t i = 0; i < cfg.stage_channels.size(); ++i) {
            Stage st;
            const int64_t out = cfg.stage_channels[i];
            st.stride = cfg.stage_strides[i];
            const int64_t groups = (in % cfg.groups == 0 && out % cfg.groups == 0) ? cfg.groups : 1;
            st.conv = Conv3dLayer<S>(in, out, cfg.kernel, rng, st.stride, cfg.padding, groups);
            st.bn = BatchNorm<S>(out);
            st.projected = (in != out) || (st.stride != 1);
            if (st.projected) st.shortcut = Conv3dLayer<S>(in, out, 1, rng, st.stride, 0);
            stages_.push_back(std::move(st));
            in = out;
        }
    }

    // (batch, ch, frames, h, w) -> (batch, C, S, H, W); rank stays 5.
    Tensor<S> forward(const ModalityFeatures<S>& x, Mode mode) {
        if (x.modality != Modality::Visual || x.tensor.rank() != 5) {
            throw std::invalid_argument("visual encoder: expected visual features (batch, ch, "
                                        "frames, h, w), got " +
                                        shape_str(x.tensor.shape()));
        }
        visual_output_shape(cfg_, Shape(x.tensor.shape().begin() + 1, x.tensor.shape().end()));
        Tensor<S> h = x.tensor;
        for (auto& st : stages_) {
            Tensor<S> main = relu(st.bn.forward(st.conv.forward(h), mode));
            Tensor<S> sc = st.projected ? st.shortcut.forward(h) : h;
            h = add(sc, main);
        }
        return h;
    }

    const VisualEncoderConfig& config() const { return cfg_; }

    void collect(const std::string& prefix, ParamMap<S>& out) const {
        for (size_t i = 0; i < stages_.size(); ++i) {
            const std::string p = prefix + ".stage" + std::to_string(i);
            stages_[i].conv.collect(p + ".conv", out);
            stages_[i].bn.collect(p + ".bn", out);
            if (stages_[i].projected) stages_[i].shortcut.collect(p + ".shortcut", out);
        }
    }

    void collect_state(const std::string& prefix, ParamMap<S>& out) const {
        for (size_t i = 0; i < stages_.size(); ++i) {
            const std::string p = prefix + ".stage" + std::to_string(i);
            stages_[i].conv.collect(p + ".conv", out);
            stages_[i].bn.collect_state(p + ".bn", out);
            if (stages_[i].projected) stages_[i].shortcut.collect(p + ".shortcut", out);
        }
    }

  private:
    struct Stage {
        Conv3dLayer<S> conv;
        BatchNorm<S> bn;
        Conv3dLayer<S> shortcut;
        bool projected = false;
        int64_t stride = 1;
    };

    VisualEncoderConfig cfg_;
    std::vector<Stage> stages_;
};

// ---------------------------------------------------------------------------
// Text projector: per-token affine map
// ---------------------------------------------------------------------------

struct TextProjectorConfig {
    int64_t embed_dim = 300;
    int64_t width = 128;
};

template <typename S>
class TextProjector {
  public:
    TextProjector() = default;
    TextProjector(const TextProjectorConfig& cfg, Rng& rng)
        : cfg_(cfg), proj_(cfg.embed_dim, cfg.width, rng) {}

    // (batch, tokens, embed) -> (batch, tokens, width)
    Tensor<S> forward(const ModalityFeatures<S>& x) const {
        if (x.modality != Modality::Text || x.tensor.rank() != 3) {
            throw std::invalid_argument("text projector: expected text features (batch, tokens, "
                                        "embed), got " +
                                        shape_str(x.tensor.shape()));
        }
        if (x.tensor.extent(2) != cfg_.embed_dim) {
            throw std::invalid_argument("text projector: embed width " +
                                        std::to_string(x.tensor.extent(2)) +
                                        " does not match configured " +
                                        std::to_string(cfg_.embed_dim));
        }
        return proj_.forward(x.tensor);
    }

    const TextProjectorConfig& config() const { return cfg_; }

    void collect(const std::string& prefix, ParamMap<S>& out) const {
        proj_.collect(prefix + ".proj", out);
    }

  private:
    TextProjectorConfig cfg_;
    Linear<S> proj_;
};

}  // namespace cmfuse
