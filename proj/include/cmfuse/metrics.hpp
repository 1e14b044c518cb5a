#pragma once

#include <string>
#include <vector>

#include "cmfuse/config.hpp"

namespace cmfuse {

struct ClassCounts {
    int64_t tp = 0, fp = 0, fn = 0, tn = 0;
};

struct ClassMetrics {
    ClassCounts counts;
    double accuracy = 0.0;
    double precision = 0.0;
    double recall = 0.0;
    double f1 = 0.0;
};

struct MetricsReport {
    Task task = Task::SingleLabel;
    int64_t total = 0;
    double overall_accuracy = 0.0;
    std::vector<std::vector<int64_t>> confusion;  // single-label, truth x predicted
    std::vector<double> per_class_accuracy;       // single-label, per true class
    std::vector<ClassMetrics> per_class;          // one-vs-rest / per-label binary
};

// accuracy, precision, recall and F1 = 2PR/(P+R); ratios with an empty
// denominator are defined as 0.
ClassMetrics metrics_from_counts(const ClassCounts& c);

MetricsReport single_label_metrics(const std::vector<int>& truth, const std::vector<int>& predicted,
                                   int64_t classes);

MetricsReport multi_label_metrics(const std::vector<std::vector<int>>& truth,
                                  const std::vector<std::vector<int>>& predicted, int64_t classes);

std::string metrics_pretty(const MetricsReport& r, const std::vector<std::string>& class_names);
std::string metrics_json(const MetricsReport& r, const std::vector<std::string>& class_names);

}  // namespace cmfuse
