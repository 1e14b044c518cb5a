#include <cstdio>
#include <fstream>
#include <iostream>
#include <sstream>
#include <thread>

#include <CLI11.hpp>
#include <json.hpp>

#include "cmfuse/ablation.hpp"
#include "cmfuse/checkpoint.hpp"
#include "cmfuse/gradsuite.hpp"
#include "cmfuse/synth.hpp"

namespace {

using namespace cmfuse;
using nlohmann::json;

// --split grammar: all | holdout:train | holdout:test | fold<i>:train | fold<i>:test
std::vector<size_t> resolve_split(const Dataset& ds, const std::string& split) {
    if (split == "all") return split_all(ds).train;
    const auto colon = split.find(':');
    if (colon == std::string::npos) {
        throw std::invalid_argument("split '" + split +
                                    "' (expected all|holdout:train|holdout:test|foldK:train|"
                                    "foldK:test)");
    }
    const std::string base = split.substr(0, colon);
    const std::string part = split.substr(colon + 1);
    Split s;
    if (base == "holdout") {
        s = split_holdout(ds, 0.8);
    } else if (base.rfind("fold", 0) == 0) {
        const int k = std::stoi(base.substr(4));
        const auto folds = make_folds(dataset_actors(ds.manifest));
        if (k < 0 || k >= static_cast<int>(folds.size())) {
            throw std::invalid_argument("fold index " + std::to_string(k) + " outside 0..4");
        }
        s = split_fold(ds, folds[k]);
    } else {
        throw std::invalid_argument("unknown split '" + split + "'");
    }
    if (part == "train") return s.train;
    if (part == "test") return s.eval;
    throw std::invalid_argument("split part '" + part + "' (expected train|test)");
}

Split resolve_train_split(const Dataset& ds, const std::string& fold) {
    if (fold == "none") return split_all(ds);
    if (fold == "holdout") return split_holdout(ds, 0.8);
    const int k = std::stoi(fold);
    const auto folds = make_folds(dataset_actors(ds.manifest));
    if (k < 0 || k >= static_cast<int>(folds.size())) {
        throw std::invalid_argument("fold index " + std::to_string(k) + " outside 0..4");
    }
    return split_fold(ds, folds[k]);
}

int cmd_train(const std::string& manifest, const std::string& config, const std::string& mode,
              const std::string& fold, unsigned seed, int epochs, int batch, double lr,
              const std::string& out_path) {
    Dataset ds = load_dataset(manifest);
    ModelConfig cfg = adapt_config(resolve_config(config), ds.manifest);
    if (!mode.empty()) cfg.mode = fusion_mode_from(mode);
    TrainOptions opts;
    opts.epochs = epochs;
    opts.batch_size = batch;
    opts.lr = lr;
    opts.seed = seed;
    const Split split = resolve_train_split(ds, fold);

    TrainOutput out = train_model(ds, cfg, opts, split);

    std::ofstream log(out_path + ".log");
    for (const auto& e : out.log) {
        log << e.epoch << "," << e.loss << "," << e.train_accuracy;
        if (e.has_eval) log << "," << e.eval_accuracy;
        log << "\n";
    }

    save_checkpoint(out_path, config_to_json(cfg), out.model->state());

    const auto& idx = split.eval.empty() ? split.train : split.eval;
    MetricsReport report = evaluate_model(*out.model, ds, idx);
    std::cout << (split.eval.empty() ? "[train split metrics]\n" : "[eval split metrics]\n");
    std::cout << metrics_pretty(report, ds.manifest.class_names);
    std::ofstream rep(out_path + ".metrics.json");
    rep << metrics_json(report, ds.manifest.class_names) << "\n";
    std::cout << "checkpoint: " << out_path << "\n";
    return 0;
}

int cmd_eval(const std::string& checkpoint, const std::string& manifest,
             const std::string& split, const std::string& report_path) {
    Dataset ds = load_dataset(manifest);
    Checkpoint ck = load_checkpoint(checkpoint);
    ModelConfig cfg = adapt_config(config_from_json(ck.config_json), ds.manifest);
    Rng rng(0);
    FusionModel<float> model(cfg, rng);
    model.load_state(ck.tensors);
    const auto idx = resolve_split(ds, split);
    MetricsReport report = evaluate_model(model, ds, idx);
    std::cout << metrics_pretty(report, ds.manifest.class_names);
    if (!report_path.empty()) {
        std::ofstream rep(report_path);
        rep << metrics_json(report, ds.manifest.class_names) << "\n";
    }
    return 0;
}

int cmd_grad_check(const std::string& module, double tol) {
    const auto checks = run_gradient_suite(module, tol);
    for (const auto& c : checks) {
        std::printf("%-6s %-28s max_rel_err %.3e  tol %.0e\n", c.pass ? "PASS" : "FAIL",
                    c.name.c_str(), c.max_rel_err, c.tol);
    }
    std::printf("%zu checks, %s\n", checks.size(), suite_passed(checks) ? "all passed" : "FAILED");
    return suite_passed(checks) ? 0 : 1;
}

int cmd_param_count(const std::string& config, const std::string& prefix,
                    const std::string& mode) {
    ModelConfig cfg = resolve_config(config);
    if (!mode.empty()) cfg.mode = fusion_mode_from(mode);
    Rng rng(0);
    FusionModel<float> model(cfg, rng);
    ParamMap<float> params = model.params();
    const int64_t total = param_count(params);
    const int64_t matched = param_count(params, prefix);
    json j{{"mode", to_string(cfg.mode)},
           {"prefix", prefix},
           {"total", total},
           {"matched", matched},
           {"fraction", total > 0 ? static_cast<double>(matched) / static_cast<double>(total)
                                  : 0.0}};
    std::cout << j.dump(2) << "\n";
    return 0;
}

int cmd_gen_synth(const SynthOptions& opts) {
    const std::string path = generate_synthetic(opts);
    std::cout << path << "\n";
    return 0;
}

int cmd_folds(const std::string& manifest) {
    DatasetManifest m = load_manifest(manifest);
    const auto folds = make_folds(dataset_actors(m));
    json out = json::array();
    for (const auto& f : folds) {
        int even = 0, odd = 0;
        for (int a : f.test_actors) (a % 2 == 0 ? even : odd)++;
        out.push_back(json{{"fold", f.index},
                           {"test_actors", f.test_actors},
                           {"train_actors", f.train_actors},
                           {"test_even", even},
                           {"test_odd", odd}});
    }
    std::cout << json{{"folds", out}}.dump(2) << "\n";
    return 0;
}

int cmd_ablation(const std::string& manifest, const std::string& config,
                 const std::string& modes_csv, int seeds, unsigned seed_base, int epochs,
                 int batch, double lr, int jobs, const std::string& out_path) {
    Dataset ds = load_dataset(manifest);
    ModelConfig base = adapt_config(resolve_config(config), ds.manifest);
    AblationOptions opts;
    opts.modes.clear();
    std::stringstream ss(modes_csv);
    std::string item;
    while (std::getline(ss, item, ',')) {
        if (!item.empty()) opts.modes.push_back(fusion_mode_from(item));
    }
    opts.seeds.clear();
    for (int i = 0; i < seeds; ++i) opts.seeds.push_back(seed_base + static_cast<unsigned>(i));
    opts.train.epochs = epochs;
    opts.train.batch_size = batch;
    opts.train.lr = lr;
    opts.jobs = jobs > 0 ? jobs : static_cast<int>(std::thread::hardware_concurrency());

    AblationReport report = run_ablation(ds, base, opts);
    const std::string text = ablation_json(report, opts);
    if (!out_path.empty()) {
        std::ofstream os(out_path);
        if (!os) throw IoError("cannot write report: " + out_path);
        os << text << "\n";
    }
    std::cout << text << "\n";
    return 0;
}

}  // namespace

int main(int argc, char** argv) {
    CLI::App app{"cross-modal fusion trainer and toolbox"};
    app.require_subcommand(1);

    // train
    std::string manifest, config = "tiny", mode, fold = "none", out_path = "model.ckpt";
    unsigned seed = 7;
    int epochs = 30, batch = 8;
    double lr = 1e-3;
    auto* train = app.add_subcommand("train", "train a model on a dataset manifest");
    train->add_option("--manifest", manifest, "dataset manifest path")->required();
    train->add_option("--config", config, "preset name or config JSON path");
    train->add_option("--mode", mode, "fusion mode override");
    train->add_option("--fold", fold, "none | holdout | fold index 0..4");
    train->add_option("--seed", seed, "rng seed");
    train->add_option("--epochs", epochs, "training epochs");
    train->add_option("--batch", batch, "batch size");
    train->add_option("--lr", lr, "learning rate");
    train->add_option("--out", out_path, "checkpoint output path");

    // eval
    std::string checkpoint, eval_manifest, split = "all", report_path;
    auto* eval = app.add_subcommand("eval", "evaluate a checkpoint");
    eval->add_option("--checkpoint", checkpoint, "checkpoint path")->required();
    eval->add_option("--manifest", eval_manifest, "dataset manifest path")->required();
    eval->add_option("--split", split, "all | holdout:train|test | foldK:train|test");
    eval->add_option("--report", report_path, "write metrics JSON here");

    // grad-check
    std::string module = "all";
    double tol = 0.0;
    auto* gc = app.add_subcommand("grad-check", "finite-difference gradient suite");
    gc->add_option("--module", module, "module filter (default all)");
    gc->add_option("--tol", tol, "tolerance override");

    // param-count
    std::string pc_config = "default", prefix, pc_mode;
    auto* pc = app.add_subcommand("param-count", "count learnable parameters");
    pc->add_option("--config", pc_config, "preset name or config JSON path");
    pc->add_option("--prefix", prefix, "name prefix filter");
    pc->add_option("--mode", pc_mode, "fusion mode override");

    // gen-synth
    SynthOptions synth;
    std::string synth_task = "single_label";
    bool actor_layout = false, trimodal = false;
    auto* gs = app.add_subcommand("gen-synth", "generate a synthetic dataset");
    gs->add_option("--samples", synth.samples, "sample count");
    gs->add_option("--classes", synth.classes, "class count");
    gs->add_option("--seed", synth.seed, "rng seed");
    gs->add_option("--actors", synth.actors, "actor count");
    gs->add_option("--out-dir", synth.out_dir, "output directory");
    gs->add_option("--task", synth_task, "single_label | multi_label");
    gs->add_flag("--actor-layout", actor_layout, "24 actors x 60 clips, 8 emotion classes");
    gs->add_flag("--trimodal", trimodal, "emit audio/visual/text framewise streams");
    gs->add_option("--direct", synth.direct_strength, "per-class direct signal strength");
    gs->add_option("--interaction", synth.interaction_strength, "cross-modal signal strength");
    gs->add_option("--noise", synth.noise, "additive noise level");

    // folds
    std::string folds_manifest;
    auto* fd = app.add_subcommand("folds", "print the actor-rotation folds for a manifest");
    fd->add_option("--manifest", folds_manifest, "dataset manifest path")->required();

    // ablation
    std::string ab_manifest, ab_config = "tiny", ab_out;
    std::string ab_modes = "adaptive,concat,av-only,va-only";
    int ab_seeds = 3, ab_epochs = 16, ab_batch = 8, ab_jobs = 0;
    unsigned ab_seed_base = 1;
    double ab_lr = 1e-3;
    auto* ab = app.add_subcommand("ablation", "train every fusion mode and compare accuracy");
    ab->add_option("--manifest", ab_manifest, "dataset manifest path")->required();
    ab->add_option("--config", ab_config, "preset name or config JSON path");
    ab->add_option("--modes", ab_modes, "comma-separated fusion modes");
    ab->add_option("--seeds", ab_seeds, "seeds per mode");
    ab->add_option("--seed-base", ab_seed_base, "first seed value");
    ab->add_option("--epochs", ab_epochs, "training epochs per run");
    ab->add_option("--batch", ab_batch, "batch size");
    ab->add_option("--lr", ab_lr, "learning rate");
    ab->add_option("--jobs", ab_jobs, "worker threads (0 = hardware)");
    ab->add_option("--out", ab_out, "write the report JSON here");

    CLI11_PARSE(app, argc, argv);

    try {
        if (*train) {
            return cmd_train(manifest, config, mode, fold, seed, epochs, batch, lr, out_path);
        }
        if (*eval) return cmd_eval(checkpoint, eval_manifest, split, report_path);
        if (*gc) return cmd_grad_check(module, tol);
        if (*pc) return cmd_param_count(pc_config, prefix, pc_mode);
        if (*gs) {
            synth.task = task_from(synth_task);
            synth.actor_layout = actor_layout;
            synth.trimodal = trimodal;
            if (actor_layout) synth.classes = 8;
            if (trimodal) {
                synth.visual_shape = {35, 16};
                synth.audio_shape = {74, 16};
            }
            return cmd_gen_synth(synth);
        }
        if (*fd) return cmd_folds(folds_manifest);
        if (*ab) {
            return cmd_ablation(ab_manifest, ab_config, ab_modes, ab_seeds, ab_seed_base,
                                ab_epochs, ab_batch, ab_lr, ab_jobs, ab_out);
        }
    } catch (const IoError& e) {
        std::cerr << "io error: " << e.what() << "\n";
        return 2;
    } catch (const std::exception& e) {
        std::cerr << "error: " << e.what() << "\n";
        return 1;
    }
    return 0;
}
