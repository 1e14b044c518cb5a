#include "cmfuse/ablation.hpp"

#include <atomic>
#include <chrono>
#include <mutex>
#include <thread>

#include <json.hpp>

namespace cmfuse {

using nlohmann::json;

AblationReport run_ablation(const Dataset& ds, const ModelConfig& base,
                            const AblationOptions& opts) {
    if (opts.modes.empty() || opts.seeds.empty()) {
        throw std::invalid_argument("ablation: at least one mode and one seed required");
    }
    const auto t0 = std::chrono::steady_clock::now();
    const Split split = split_holdout(ds, opts.train_frac);

    struct Job {
        FusionMode mode;
        unsigned seed;
    };
    std::vector<Job> jobs;
    for (FusionMode mode : opts.modes) {
        for (unsigned seed : opts.seeds) jobs.push_back({mode, seed});
    }

    AblationReport report;
    report.runs.resize(jobs.size());
    report.train_samples = split.train.size();
    report.eval_samples = split.eval.size();

    std::atomic<size_t> next{0};
    std::atomic<bool> failed{false};
    std::string error;
    std::mutex error_mu;

    auto worker = [&]() {
        for (;;) {
            const size_t i = next.fetch_add(1);
            if (i >= jobs.size() || failed.load()) break;
            try {
                ModelConfig cfg = base;
                cfg.mode = jobs[i].mode;
                TrainOptions topts = opts.train;
                topts.seed = jobs[i].seed;
                TrainOutput out = train_model(ds, cfg, topts, split);
                AblationRun run;
                run.mode = jobs[i].mode;
                run.seed = jobs[i].seed;
                run.train_accuracy = out.log.empty() ? 0.0 : out.log.back().train_accuracy;
                run.eval_accuracy =
                    evaluate_model(*out.model, ds, split.eval).overall_accuracy;
                report.runs[i] = run;
            } catch (const std::exception& e) {
                std::lock_guard<std::mutex> lock(error_mu);
                error = e.what();
                failed.store(true);
            }
        }
    };

    const int threads = std::max(1, std::min<int>(opts.jobs, static_cast<int>(jobs.size())));
    std::vector<std::thread> pool;
    for (int t = 0; t < threads; ++t) pool.emplace_back(worker);
    for (auto& t : pool) t.join();
    if (failed.load()) throw std::runtime_error("ablation run failed: " + error);

    for (FusionMode mode : opts.modes) {
        double sum = 0.0;
        int n = 0;
        for (const auto& run : report.runs) {
            if (run.mode == mode) {
                sum += run.eval_accuracy;
                ++n;
            }
        }
        report.mean_accuracy.emplace_back(mode, n > 0 ? sum / n : 0.0);
    }

    auto mean_of = [&](FusionMode mode, double& out) {
        for (const auto& [m, acc] : report.mean_accuracy) {
            if (m == mode) {
                out = acc;
                return true;
            }
        }
        return false;
    };
    double adaptive = 0.0, concat = 0.0, av = 0.0, va = 0.0;
    if (mean_of(FusionMode::Adaptive, adaptive)) {
        report.has_ordering = true;
        report.adaptive_ge_concat = !mean_of(FusionMode::Concat, concat) || adaptive >= concat;
        report.adaptive_ge_av =
            !mean_of(FusionMode::AudioToVisualOnly, av) || adaptive >= av;
        report.adaptive_ge_va =
            !mean_of(FusionMode::VisualToAudioOnly, va) || adaptive >= va;
    }

    report.seconds =
        std::chrono::duration<double>(std::chrono::steady_clock::now() - t0).count();
    return report;
}

std::string ablation_json(const AblationReport& report, const AblationOptions& opts) {
    json modes = json::array();
    for (const auto& [mode, mean] : report.mean_accuracy) {
        json per_seed = json::array();
        for (const auto& run : report.runs) {
            if (run.mode != mode) continue;
            per_seed.push_back(json{{"seed", run.seed},
                                    {"eval_accuracy", run.eval_accuracy},
                                    {"train_accuracy", run.train_accuracy}});
        }
        modes.push_back(
            json{{"mode", to_string(mode)}, {"mean_accuracy", mean}, {"runs", per_seed}});
    }
    json j{{"train_samples", report.train_samples},
           {"eval_samples", report.eval_samples},
           {"epochs", opts.train.epochs},
           {"batch_size", opts.train.batch_size},
           {"lr", opts.train.lr},
           {"modes", modes},
           {"seconds", report.seconds}};
    if (report.has_ordering) {
        j["ordering"] = json{{"adaptive_ge_concat", report.adaptive_ge_concat},
                             {"adaptive_ge_av_only", report.adaptive_ge_av},
                             {"adaptive_ge_va_only", report.adaptive_ge_va}};
    }
    return j.dump(2);
}

}  // namespace cmfuse
