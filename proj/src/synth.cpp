#include "cmfuse/synth.hpp"

#include <filesystem>
#include <fstream>
#include <random>

#include <json.hpp>

namespace cmfuse {

using nlohmann::json;

namespace {

const char* kEmotionNames[8] = {"neutral", "calm",    "happy",   "sad",
                                "angry",   "fearful", "disgust", "surprised"};

std::vector<std::string> class_names_for(int classes) {
    std::vector<std::string> names;
    for (int c = 0; c < classes; ++c) {
        if (classes <= 8) {
            names.emplace_back(kEmotionNames[c]);
        } else {
            names.push_back("class" + std::to_string(c));
        }
    }
    return names;
}

std::vector<float> draw_pattern(int64_t n, Rng& rng) {
    std::normal_distribution<double> g(0.0, 1.0);
    std::vector<float> p(n);
    for (auto& v : p) v = static_cast<float>(g(rng));
    return p;
}

struct PatternBank {
    std::vector<std::vector<float>> direct;       // per class
    std::vector<std::vector<float>> interaction;  // per latent cluster
};

PatternBank make_bank(int classes, int64_t n, Rng& rng) {
    PatternBank bank;
    for (int c = 0; c < classes; ++c) bank.direct.push_back(draw_pattern(n, rng));
    for (int c = 0; c < classes; ++c) bank.interaction.push_back(draw_pattern(n, rng));
    return bank;
}

std::vector<float> compose(const SynthOptions& o, const PatternBank& bank, int direct_class,
                           int cluster, Rng& rng) {
    const int64_t n = static_cast<int64_t>(bank.direct[0].size());
    std::normal_distribution<double> g(0.0, 1.0);
    std::vector<float> v(n);
    for (int64_t i = 0; i < n; ++i) {
        v[i] = static_cast<float>(o.direct_strength * bank.direct[direct_class][i] +
                                  o.interaction_strength * bank.interaction[cluster][i] +
                                  o.noise * g(rng));
    }
    return v;
}

std::string sample_id(int i) {
    char buf[16];
    std::snprintf(buf, sizeof(buf), "s%05d", i);
    return buf;
}

}  // namespace

std::string generate_synthetic(const SynthOptions& opts) {
    if (opts.classes < 2) throw std::invalid_argument("gen-synth: at least 2 classes");
    if (opts.samples < 1) throw std::invalid_argument("gen-synth: at least 1 sample");
    if (opts.actors < 1) throw std::invalid_argument("gen-synth: at least 1 actor");
    if (opts.actor_layout && opts.classes != 8) {
        throw std::invalid_argument("gen-synth: the actor layout is an 8-class protocol");
    }

    namespace fs = std::filesystem;
    const fs::path dir(opts.out_dir);
    std::error_code ec;
    fs::create_directories(dir / "features", ec);
    if (ec) throw IoError("cannot create output directory: " + (dir / "features").string());

    Rng rng(opts.seed);
    const int64_t audio_n = numel_of(opts.audio_shape);
    const int64_t visual_n = numel_of(opts.visual_shape);
    PatternBank audio_bank = make_bank(opts.classes, audio_n, rng);
    PatternBank visual_bank = make_bank(opts.classes, visual_n, rng);
    PatternBank text_bank;
    if (opts.trimodal) text_bank = make_bank(opts.classes, numel_of(opts.text_shape), rng);

    // (class, actor) plan
    std::vector<std::pair<int, int>> plan;
    if (opts.actor_layout) {
        for (int actor = 1; actor <= 24; ++actor) {
            for (int c = 0; c < 8; ++c) {
                const int copies = c == 0 ? 4 : 8;
                for (int k = 0; k < copies; ++k) plan.emplace_back(c, actor);
            }
        }
    } else {
        for (int i = 0; i < opts.samples; ++i) {
            plan.emplace_back(i % opts.classes, (i % opts.actors) + 1);
        }
    }

    std::uniform_int_distribution<int> cluster_dist(0, opts.classes - 1);
    std::bernoulli_distribution label_dist(0.4);

    json samples = json::array();
    for (size_t i = 0; i < plan.size(); ++i) {
        const auto [cls, actor] = plan[i];
        const std::string id = sample_id(static_cast<int>(i));
        const int latent = cluster_dist(rng);
        const int visual_cluster = (latent + cls) % opts.classes;

        json features = json::object();
        auto emit = [&](const std::string& name, const Shape& shape, std::vector<float> values) {
            const std::string rel = "features/" + id + "_" + name + ".bin";
            write_feature_file((dir / rel).string(), TensorF(shape, std::move(values)));
            features[name] = json{{"path", rel}, {"shape", shape}};
        };

        json rec{{"id", id}, {"actor", actor}};
        if (opts.task == Task::SingleLabel) {
            emit("audio", opts.audio_shape, compose(opts, audio_bank, cls, latent, rng));
            emit("visual", opts.visual_shape, compose(opts, visual_bank, cls, visual_cluster, rng));
            if (opts.trimodal) {
                emit("text", opts.text_shape, compose(opts, text_bank, cls, latent, rng));
            }
            rec["label"] = cls;
        } else {
            // Multi-label: superpose the direct patterns of every active class.
            std::vector<int> labels(opts.classes, 0);
            int active = 0;
            while (active == 0) {
                for (int c = 0; c < opts.classes; ++c) {
                    labels[c] = label_dist(rng) ? 1 : 0;
                    active += labels[c];
                }
            }
            std::normal_distribution<double> g(0.0, 1.0);
            auto superpose = [&](const PatternBank& bank, int64_t n) {
                std::vector<float> v(n, 0.0f);
                for (int c = 0; c < opts.classes; ++c) {
                    if (!labels[c]) continue;
                    for (int64_t k = 0; k < n; ++k) v[k] += bank.direct[c][k];
                }
                for (int64_t k = 0; k < n; ++k) {
                    v[k] = static_cast<float>(v[k] + opts.noise * g(rng));
                }
                return v;
            };
            emit("audio", opts.audio_shape, superpose(audio_bank, audio_n));
            emit("visual", opts.visual_shape, superpose(visual_bank, visual_n));
            if (opts.trimodal) {
                emit("text", opts.text_shape, superpose(text_bank, numel_of(opts.text_shape)));
            }
            rec["labels"] = labels;
        }
        rec["features"] = features;
        samples.push_back(std::move(rec));
    }

    json manifest{{"task", to_string(opts.task)},
                  {"class_names", class_names_for(opts.classes)},
                  {"samples", samples}};
    const std::string manifest_path = (dir / "manifest.json").string();
    std::ofstream os(manifest_path);
    if (!os) throw IoError("cannot write manifest: " + manifest_path);
    os << manifest.dump(2) << "\n";
    return manifest_path;
}

}  // namespace cmfuse
