#include "cmfuse/config.hpp"

#include <fstream>
#include <sstream>

#include <json.hpp>

namespace cmfuse {

using nlohmann::json;

std::string to_string(FusionMode mode) {
    switch (mode) {
        case FusionMode::Adaptive: return "adaptive";
        case FusionMode::McaBaseline: return "mca";
        case FusionMode::Concat: return "concat";
        case FusionMode::AudioToVisualOnly: return "av-only";
        case FusionMode::VisualToAudioOnly: return "va-only";
        case FusionMode::NoSelfAttention: return "no-selfattn";
        case FusionMode::NoResidual: return "no-residual";
    }
    return "adaptive";
}

FusionMode fusion_mode_from(const std::string& name) {
    if (name == "adaptive") return FusionMode::Adaptive;
    if (name == "mca" || name == "mca-baseline") return FusionMode::McaBaseline;
    if (name == "concat") return FusionMode::Concat;
    if (name == "av-only" || name == "av") return FusionMode::AudioToVisualOnly;
    if (name == "va-only" || name == "va") return FusionMode::VisualToAudioOnly;
    if (name == "no-selfattn") return FusionMode::NoSelfAttention;
    if (name == "no-residual") return FusionMode::NoResidual;
    throw std::invalid_argument(
        "unknown fusion mode '" + name +
        "' (expected adaptive|mca|concat|av-only|va-only|no-selfattn|no-residual)");
}

std::string to_string(Task task) {
    return task == Task::SingleLabel ? "single_label" : "multi_label";
}

Task task_from(const std::string& name) {
    if (name == "single_label") return Task::SingleLabel;
    if (name == "multi_label") return Task::MultiLabel;
    throw std::invalid_argument("unknown task '" + name +
                                "' (expected single_label|multi_label)");
}

namespace {

json shape_json(const Shape& s) {
    json a = json::array();
    for (int64_t e : s) a.push_back(e);
    return a;
}

Shape shape_from(const json& a) {
    Shape s;
    for (const auto& e : a) s.push_back(e.get<int64_t>());
    return s;
}

std::vector<int64_t> ints_from(const json& a) {
    std::vector<int64_t> v;
    for (const auto& e : a) v.push_back(e.get<int64_t>());
    return v;
}

json audio_json(const AudioEncoderConfig& c) {
    return json{{"in_coeffs", c.in_coeffs}, {"channels", c.channels},  {"kernel", c.kernel},
                {"pool", c.pool},           {"dropout", c.dropout}};
}

AudioEncoderConfig audio_from(const json& j, AudioEncoderConfig c) {
    c.in_coeffs = j.value("in_coeffs", c.in_coeffs);
    if (j.contains("channels")) c.channels = ints_from(j["channels"]);
    c.kernel = j.value("kernel", c.kernel);
    c.pool = j.value("pool", c.pool);
    c.dropout = j.value("dropout", c.dropout);
    return c;
}

json visual_json(const VisualEncoderConfig& c) {
    return json{{"in_channels", c.in_channels},
                {"stage_channels", c.stage_channels},
                {"stage_strides", c.stage_strides},
                {"kernel", c.kernel},
                {"padding", c.padding},
                {"groups", c.groups}};
}

VisualEncoderConfig visual_from(const json& j, VisualEncoderConfig c) {
    c.in_channels = j.value("in_channels", c.in_channels);
    if (j.contains("stage_channels")) c.stage_channels = ints_from(j["stage_channels"]);
    if (j.contains("stage_strides")) c.stage_strides = ints_from(j["stage_strides"]);
    c.kernel = j.value("kernel", c.kernel);
    c.padding = j.value("padding", c.padding);
    c.groups = j.value("groups", c.groups);
    return c;
}

}  // namespace

std::string config_to_json(const ModelConfig& cfg) {
    json j{{"task", to_string(cfg.task)},
           {"trimodal", cfg.trimodal},
           {"mode", to_string(cfg.mode)},
           {"classes", cfg.classes},
           {"audio", audio_json(cfg.audio)},
           {"visual", visual_json(cfg.visual)},
           {"visual_seq", audio_json(cfg.visual_seq)},
           {"text", json{{"embed_dim", cfg.text.embed_dim}, {"width", cfg.text.width}}},
           {"attention",
            json{{"model_dim", cfg.attention.model_dim},
                 {"heads", cfg.attention.heads},
                 {"layers", cfg.attention.layers},
                 {"mlp_ratio", cfg.attention.mlp_ratio}}},
           {"selector",
            json{{"depth", cfg.selector.depth},
                 {"heads", cfg.selector.heads},
                 {"mlp_ratio", cfg.selector.mlp_ratio}}},
           {"audio_shape", shape_json(cfg.audio_shape)},
           {"visual_shape", shape_json(cfg.visual_shape)},
           {"text_shape", shape_json(cfg.text_shape)}};
    return j.dump(2);
}

ModelConfig config_from_json(const std::string& text) {
    json j;
    try {
        j = json::parse(text);
    } catch (const std::exception& e) {
        throw std::invalid_argument(std::string("config parse error: ") + e.what());
    }
    ModelConfig cfg;
    if (j.contains("task")) cfg.task = task_from(j["task"].get<std::string>());
    cfg.trimodal = j.value("trimodal", cfg.trimodal);
    if (j.contains("mode")) cfg.mode = fusion_mode_from(j["mode"].get<std::string>());
    cfg.classes = j.value("classes", cfg.classes);
    if (j.contains("audio")) cfg.audio = audio_from(j["audio"], cfg.audio);
    if (j.contains("visual")) cfg.visual = visual_from(j["visual"], cfg.visual);
    if (j.contains("visual_seq")) cfg.visual_seq = audio_from(j["visual_seq"], cfg.visual_seq);
    if (j.contains("text")) {
        cfg.text.embed_dim = j["text"].value("embed_dim", cfg.text.embed_dim);
        cfg.text.width = j["text"].value("width", cfg.text.width);
    }
    if (j.contains("attention")) {
        const auto& a = j["attention"];
        cfg.attention.model_dim = a.value("model_dim", cfg.attention.model_dim);
        cfg.attention.heads = a.value("heads", cfg.attention.heads);
        cfg.attention.layers = a.value("layers", cfg.attention.layers);
        cfg.attention.mlp_ratio = a.value("mlp_ratio", cfg.attention.mlp_ratio);
    }
    if (j.contains("selector")) {
        const auto& s = j["selector"];
        cfg.selector.depth = s.value("depth", cfg.selector.depth);
        cfg.selector.heads = s.value("heads", cfg.selector.heads);
        cfg.selector.mlp_ratio = s.value("mlp_ratio", cfg.selector.mlp_ratio);
    }
    if (j.contains("audio_shape")) cfg.audio_shape = shape_from(j["audio_shape"]);
    if (j.contains("visual_shape")) cfg.visual_shape = shape_from(j["visual_shape"]);
    if (j.contains("text_shape")) cfg.text_shape = shape_from(j["text_shape"]);
    return cfg;
}

ModelConfig model_preset(const std::string& name) {
    if (name == "default") {
        // Full-scale structure: deep residual visual stack, so the fusion
        // blocks stay a small fraction of the parameter budget.
        ModelConfig cfg;
        cfg.classes = 8;
        cfg.audio = AudioEncoderConfig{13, {32, 64, 128}, 3, 2, 0.25};
        VisualEncoderConfig v;
        v.in_channels = 3;
        v.stage_channels = {32, 64, 128};
        v.stage_strides = {2, 2, 2};
        for (int i = 0; i < 18; ++i) {
            v.stage_channels.push_back(128);
            v.stage_strides.push_back(1);
        }
        cfg.visual = v;
        cfg.attention = AttentionConfig{64, 4, 2, 2};
        cfg.selector = SelectorConfig{1, 4, 2};
        cfg.audio_shape = {13, 12};
        cfg.visual_shape = {3, 16, 32, 32};
        return cfg;
    }
    if (name == "tiny") {
        ModelConfig cfg;
        cfg.classes = 4;
        cfg.audio = AudioEncoderConfig{13, {8, 16, 32}, 3, 2, 0.25};
        cfg.visual = VisualEncoderConfig{3, {8, 16}, {2, 2}, 3, 1, 1};
        cfg.attention = AttentionConfig{32, 4, 2, 2};
        cfg.selector = SelectorConfig{1, 4, 2};
        cfg.audio_shape = {13, 12};
        cfg.visual_shape = {3, 4, 12, 12};
        return cfg;
    }
    if (name == "trimodal-tiny") {
        ModelConfig cfg;
        cfg.task = Task::MultiLabel;
        cfg.trimodal = true;
        cfg.classes = 4;
        cfg.audio = AudioEncoderConfig{74, {16, 32, 32}, 3, 2, 0.25};
        cfg.visual_seq = AudioEncoderConfig{35, {16, 32, 32}, 3, 2, 0.25};
        cfg.text = TextProjectorConfig{50, 32};
        cfg.selector = SelectorConfig{1, 4, 2};
        cfg.audio_shape = {74, 16};
        cfg.visual_shape = {35, 16};
        cfg.text_shape = {8, 50};
        return cfg;
    }
    throw std::invalid_argument("unknown preset '" + name +
                                "' (available: default, tiny, trimodal-tiny)");
}

ModelConfig resolve_config(const std::string& name_or_path) {
    if (name_or_path == "default" || name_or_path == "tiny" || name_or_path == "trimodal-tiny") {
        return model_preset(name_or_path);
    }
    std::ifstream in(name_or_path);
    if (!in) {
        throw std::invalid_argument("config '" + name_or_path +
                                    "' is neither a preset nor a readable file");
    }
    std::ostringstream buf;
    buf << in.rdbuf();
    return config_from_json(buf.str());
}

}  // namespace cmfuse
