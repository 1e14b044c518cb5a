#pragma once

#include <string>

#include "cmfuse/encoders.hpp"

namespace cmfuse {

enum class Task { SingleLabel, MultiLabel };

enum class FusionMode {
    Adaptive,
    McaBaseline,
    Concat,
    AudioToVisualOnly,
    VisualToAudioOnly,
    NoSelfAttention,
    NoResidual,
};

std::string to_string(FusionMode mode);
FusionMode fusion_mode_from(const std::string& name);
std::string to_string(Task task);
Task task_from(const std::string& name);

struct AttentionConfig {
    int64_t model_dim = 64;
    int64_t heads = 4;
    int64_t layers = 2;
    int64_t mlp_ratio = 2;
};

struct SelectorConfig {
    int64_t depth = 1;
    int64_t heads = 4;
    int64_t mlp_ratio = 2;
};

// Everything the architecture leaves open, plus the per-sample input shapes
// the model is sized against.
struct ModelConfig {
    Task task = Task::SingleLabel;
    bool trimodal = false;
    FusionMode mode = FusionMode::Adaptive;
    int64_t classes = 8;

    AudioEncoderConfig audio;
    VisualEncoderConfig visual;      // bimodal video stream
    AudioEncoderConfig visual_seq;   // trimodal framewise visual stream
    TextProjectorConfig text;
    AttentionConfig attention;
    SelectorConfig selector;

    Shape audio_shape{13, 12};        // (coeffs, frames)
    Shape visual_shape{3, 4, 12, 12}; // (channels, frames, height, width)
    Shape text_shape{6, 50};          // (tokens, embed)
};

struct TrainConfig {
    int epochs = 50;
    int batch_size = 8;
    double lr = 1e-3;
    double beta1 = 0.9;
    double beta2 = 0.999;
    double eps = 1e-8;
};

// Built-in presets: "default" (full-scale structure), "tiny" (fast synthetic
// training), "trimodal-tiny" (three-stream multi-label).
ModelConfig model_preset(const std::string& name);

std::string config_to_json(const ModelConfig& cfg);
ModelConfig config_from_json(const std::string& text);

// Accepts a preset name or a path to a JSON config file.
ModelConfig resolve_config(const std::string& name_or_path);

}  // namespace cmfuse
