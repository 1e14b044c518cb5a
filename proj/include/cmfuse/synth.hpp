#pragma once

#include <string>

#include "cmfuse/data.hpp"

namespace cmfuse {

// Class-conditional Gaussian feature generator. Each sample draws a latent
// index i; the audio stream carries cluster pattern i, the visual stream
// carries cluster (i + class) mod classes, so the class is recoverable only
// by combining the two streams. A weaker direct per-class pattern in each
// stream keeps unimodal and concat models above chance.
struct SynthOptions {
    int samples = 1000;
    int classes = 4;
    unsigned seed = 1;
    int actors = 24;
    Shape audio_shape{13, 12};
    Shape visual_shape{3, 4, 12, 12};
    bool trimodal = false;          // adds a text stream, framewise visual
    Shape text_shape{8, 50};
    Task task = Task::SingleLabel;
    bool actor_layout = false;      // 24 actors x 60 clips, first class underrepresented
    double direct_strength = 0.35;
    double interaction_strength = 1.1;
    double noise = 0.3;
    std::string out_dir = "synth";
};

// Writes <out_dir>/manifest.json plus feature blobs; returns the manifest path.
std::string generate_synthetic(const SynthOptions& opts);

}  // namespace cmfuse
