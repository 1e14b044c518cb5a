#include "cmfuse/trainer.hpp"

#include <algorithm>
#include <cstring>
#include <set>

namespace cmfuse {

Split split_all(const Dataset& ds) {
    Split s;
    for (size_t i = 0; i < ds.manifest.samples.size(); ++i) s.train.push_back(i);
    return s;
}

Split split_fold(const Dataset& ds, const FoldSpec& fold) {
    std::set<int> test(fold.test_actors.begin(), fold.test_actors.end());
    Split s;
    for (size_t i = 0; i < ds.manifest.samples.size(); ++i) {
        if (test.count(ds.manifest.samples[i].actor)) {
            s.eval.push_back(i);
        } else {
            s.train.push_back(i);
        }
    }
    return s;
}

Split split_holdout(const Dataset& ds, double train_frac) {
    if (train_frac <= 0.0 || train_frac >= 1.0) {
        throw std::invalid_argument("holdout split: train fraction must be in (0, 1)");
    }
    const auto& samples = ds.manifest.samples;
    const int64_t classes = static_cast<int64_t>(ds.manifest.class_names.size());
    std::vector<std::vector<size_t>> by_class(std::max<int64_t>(classes, 1));
    for (size_t i = 0; i < samples.size(); ++i) {
        int key = 0;
        if (ds.manifest.task == Task::SingleLabel) {
            key = samples[i].label;
        } else {
            // group multi-label samples by their first active label
            const auto& l = samples[i].labels;
            key = static_cast<int>(std::find(l.begin(), l.end(), 1) - l.begin());
            if (key >= classes) key = 0;
        }
        by_class[key].push_back(i);
    }
    Split s;
    for (const auto& group : by_class) {
        const size_t cut = static_cast<size_t>(train_frac * static_cast<double>(group.size()));
        for (size_t k = 0; k < group.size(); ++k) {
            (k < cut ? s.train : s.eval).push_back(group[k]);
        }
    }
    std::sort(s.train.begin(), s.train.end());
    std::sort(s.eval.begin(), s.eval.end());
    return s;
}

ModelConfig adapt_config(ModelConfig cfg, const DatasetManifest& manifest) {
    if (manifest.samples.empty()) throw std::invalid_argument("dataset has no samples");
    cfg.task = manifest.task;
    cfg.classes = static_cast<int64_t>(manifest.class_names.size());
    const auto& f = manifest.samples.front().features;
    const auto need = [&](const char* name) -> const SampleModality& {
        auto it = f.find(name);
        if (it == f.end()) {
            throw std::invalid_argument(std::string("dataset lacks the ") + name + " modality");
        }
        return it->second;
    };
    cfg.trimodal = f.count("text") > 0;
    const auto& audio = need("audio");
    if (audio.shape.size() != 2) {
        throw std::invalid_argument("audio features must be (coeffs, frames), manifest declares " +
                                    shape_str(audio.shape));
    }
    cfg.audio_shape = audio.shape;
    cfg.audio.in_coeffs = audio.shape[0];
    const auto& visual = need("visual");
    cfg.visual_shape = visual.shape;
    if (cfg.trimodal) {
        if (visual.shape.size() != 2) {
            throw std::invalid_argument("trimodal visual features must be (units, frames)");
        }
        cfg.visual_seq.in_coeffs = visual.shape[0];
        const auto& text = need("text");
        if (text.shape.size() != 2) {
            throw std::invalid_argument("text features must be (tokens, embed)");
        }
        cfg.text_shape = text.shape;
        cfg.text.embed_dim = text.shape[1];
    } else {
        if (visual.shape.size() != 4) {
            throw std::invalid_argument(
                "visual features must be (channels, frames, height, width), manifest declares " +
                shape_str(visual.shape));
        }
        cfg.visual.in_channels = visual.shape[0];
    }
    return cfg;
}

TensorF assemble_features(const Dataset& ds, const std::vector<size_t>& idx,
                          const std::string& modality) {
    if (idx.empty()) throw std::invalid_argument("assemble_features: empty batch");
    const TensorF& first = ds.tensors.at(idx[0]).at(modality);
    Shape shape;
    shape.push_back(static_cast<int64_t>(idx.size()));
    for (int64_t e : first.shape()) shape.push_back(e);
    TensorF out(shape);
    const size_t stride = static_cast<size_t>(first.numel());
    for (size_t k = 0; k < idx.size(); ++k) {
        const TensorF& t = ds.tensors.at(idx[k]).at(modality);
        std::memcpy(out.data().data() + k * stride, t.data().data(), stride * sizeof(float));
    }
    return out;
}

TensorF assemble_labels(const Dataset& ds, const std::vector<size_t>& idx) {
    const int64_t classes = static_cast<int64_t>(ds.manifest.class_names.size());
    TensorF out(Shape{static_cast<int64_t>(idx.size()), classes});
    for (size_t k = 0; k < idx.size(); ++k) {
        const auto& rec = ds.manifest.samples.at(idx[k]);
        if (ds.manifest.task == Task::SingleLabel) {
            out.data()[k * classes + rec.label] = 1.0f;
        } else {
            for (int64_t c = 0; c < classes; ++c) {
                out.data()[k * classes + c] = static_cast<float>(rec.labels[c]);
            }
        }
    }
    return out;
}

namespace {

Prediction<float> forward_batch(FusionModel<float>& model, const Dataset& ds,
                                const std::vector<size_t>& idx, Mode mode, Rng& rng) {
    TensorF audio = assemble_features(ds, idx, "audio");
    TensorF visual = assemble_features(ds, idx, "visual");
    if (model.config().trimodal) {
        TensorF text = assemble_features(ds, idx, "text");
        return model.forward_trimodal(audio, visual, text, mode, rng);
    }
    return model.forward(audio, visual, mode, rng);
}

int64_t count_correct(const Prediction<float>& pred, const Dataset& ds,
                      const std::vector<size_t>& idx) {
    const int64_t classes = pred.logits.extent(1);
    int64_t correct = 0;
    for (size_t k = 0; k < idx.size(); ++k) {
        const auto& rec = ds.manifest.samples.at(idx[k]);
        if (ds.manifest.task == Task::SingleLabel) {
            int best = 0;
            for (int64_t c = 1; c < classes; ++c) {
                if (pred.probabilities.data()[k * classes + c] >
                    pred.probabilities.data()[k * classes + best]) {
                    best = static_cast<int>(c);
                }
            }
            if (best == rec.label) ++correct;
        } else {
            bool all = true;
            for (int64_t c = 0; c < classes; ++c) {
                const int bit = pred.probabilities.data()[k * classes + c] >= 0.5f ? 1 : 0;
                all = all && bit == rec.labels[c];
            }
            if (all) ++correct;
        }
    }
    return correct;
}

}  // namespace

TrainOutput train_model(const Dataset& ds, const ModelConfig& cfg, const TrainOptions& opts,
                        const Split& split) {
    if (split.train.empty()) throw std::invalid_argument("train: empty training split");
    if (cfg.task != ds.manifest.task) {
        throw std::invalid_argument("train: config task does not match manifest task");
    }
    Rng rng(opts.seed);
    TrainOutput out;
    out.model = std::make_unique<FusionModel<float>>(cfg, rng);
    ParamMap<float> params = out.model->params();
    AdamConfig adam_cfg;
    adam_cfg.lr = opts.lr;
    Adam<float> adam(params, adam_cfg);

    std::vector<size_t> order = split.train;
    for (int epoch = 0; epoch < opts.epochs; ++epoch) {
        std::shuffle(order.begin(), order.end(), rng);
        double loss_sum = 0.0;
        int64_t correct = 0;
        for (size_t start = 0; start < order.size(); start += opts.batch_size) {
            const size_t stop = std::min(order.size(), start + opts.batch_size);
            const std::vector<size_t> batch(order.begin() + start, order.begin() + stop);
            Prediction<float> pred = forward_batch(*out.model, ds, batch, Mode::Train, rng);
            TensorF labels = assemble_labels(ds, batch);
            Tensor<float> loss = ds.manifest.task == Task::SingleLabel
                                     ? cross_entropy(pred, labels)
                                     : multilabel_loss(pred, labels);
            params.zero_grads();
            backward(loss);
            adam.step(params);
            loss_sum += static_cast<double>(loss.item()) * static_cast<double>(batch.size());
            correct += count_correct(pred, ds, batch);
        }
        EpochStat stat;
        stat.epoch = epoch;
        stat.loss = loss_sum / static_cast<double>(order.size());
        stat.train_accuracy = static_cast<double>(correct) / static_cast<double>(order.size());
        if (!split.eval.empty()) {
            stat.has_eval = true;
            stat.eval_accuracy = evaluate_model(*out.model, ds, split.eval).overall_accuracy;
        }
        out.log.push_back(stat);
    }
    return out;
}

MetricsReport evaluate_model(FusionModel<float>& model, const Dataset& ds,
                             const std::vector<size_t>& idx, int batch_size) {
    NoGradGuard no_grad;
    Rng unused(0);
    const int64_t classes = static_cast<int64_t>(ds.manifest.class_names.size());
    std::vector<int> truth, predicted;
    std::vector<std::vector<int>> truth_bits, predicted_bits;
    for (size_t start = 0; start < idx.size(); start += batch_size) {
        const size_t stop = std::min(idx.size(), start + batch_size);
        const std::vector<size_t> batch(idx.begin() + start, idx.begin() + stop);
        Prediction<float> pred = forward_batch(model, ds, batch, Mode::Eval, unused);
        for (size_t k = 0; k < batch.size(); ++k) {
            const auto& rec = ds.manifest.samples.at(batch[k]);
            if (ds.manifest.task == Task::SingleLabel) {
                int best = 0;
                for (int64_t c = 1; c < classes; ++c) {
                    if (pred.probabilities.data()[k * classes + c] >
                        pred.probabilities.data()[k * classes + best]) {
                        best = static_cast<int>(c);
                    }
                }
                truth.push_back(rec.label);
                predicted.push_back(best);
            } else {
                std::vector<int> bits(classes);
                for (int64_t c = 0; c < classes; ++c) {
                    bits[c] = pred.probabilities.data()[k * classes + c] >= 0.5f ? 1 : 0;
                }
                truth_bits.push_back(rec.labels);
                predicted_bits.push_back(std::move(bits));
            }
        }
    }
    return ds.manifest.task == Task::SingleLabel
               ? single_label_metrics(truth, predicted, classes)
               : multi_label_metrics(truth_bits, predicted_bits, classes);
}

}  // namespace cmfuse
