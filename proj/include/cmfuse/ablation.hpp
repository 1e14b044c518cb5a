#pragma once

#include <string>
#include <vector>

#include "cmfuse/trainer.hpp"

namespace cmfuse {

struct AblationOptions {
    std::vector<FusionMode> modes{FusionMode::Adaptive, FusionMode::Concat,
                                  FusionMode::AudioToVisualOnly, FusionMode::VisualToAudioOnly};
    std::vector<unsigned> seeds{1, 2, 3};
    TrainOptions train;
    double train_frac = 0.8;
    int jobs = 1;
};

struct AblationRun {
    FusionMode mode;
    unsigned seed = 0;
    double eval_accuracy = 0.0;
    double train_accuracy = 0.0;
};

struct AblationReport {
    std::vector<AblationRun> runs;
    std::vector<std::pair<FusionMode, double>> mean_accuracy;  // mode order as requested
    bool has_ordering = false;
    bool adaptive_ge_concat = false;
    bool adaptive_ge_av = false;
    bool adaptive_ge_va = false;
    size_t train_samples = 0;
    size_t eval_samples = 0;
    double seconds = 0.0;
};

// Trains every (mode, seed) pair on the same stratified holdout split and
// compares mean held-out accuracy. Runs fan out over `jobs` threads; each run
// is single-threaded and seeded, so the report is scheduling-independent.
AblationReport run_ablation(const Dataset& ds, const ModelConfig& base,
                            const AblationOptions& opts);

std::string ablation_json(const AblationReport& report, const AblationOptions& opts);

}  // namespace cmfuse
