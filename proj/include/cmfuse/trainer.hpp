#pragma once

#include <memory>
#include <string>
#include <vector>

#include "cmfuse/data.hpp"
#include "cmfuse/metrics.hpp"
#include "cmfuse/model.hpp"
#include "cmfuse/optim.hpp"

namespace cmfuse {

struct TrainOptions {
    int epochs = 30;
    int batch_size = 8;
    double lr = 1e-3;
    unsigned seed = 7;
};

struct EpochStat {
    int epoch = 0;
    double loss = 0.0;
    double train_accuracy = 0.0;
    double eval_accuracy = 0.0;
    bool has_eval = false;
};

struct Split {
    std::vector<size_t> train;
    std::vector<size_t> eval;
};

Split split_all(const Dataset& ds);
Split split_fold(const Dataset& ds, const FoldSpec& fold);
// Stratified by class in id order; the first train_frac of every class trains.
Split split_holdout(const Dataset& ds, double train_frac);

// Rewrites classes, task and input shapes from what the manifest declares.
ModelConfig adapt_config(ModelConfig cfg, const DatasetManifest& manifest);

TensorF assemble_features(const Dataset& ds, const std::vector<size_t>& idx,
                          const std::string& modality);
TensorF assemble_labels(const Dataset& ds, const std::vector<size_t>& idx);

struct TrainOutput {
    std::unique_ptr<FusionModel<float>> model;
    std::vector<EpochStat> log;
};

TrainOutput train_model(const Dataset& ds, const ModelConfig& cfg, const TrainOptions& opts,
                        const Split& split);

MetricsReport evaluate_model(FusionModel<float>& model, const Dataset& ds,
                             const std::vector<size_t>& idx, int batch_size = 16);

}  // namespace cmfuse
