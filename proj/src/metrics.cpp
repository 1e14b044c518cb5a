#include "cmfuse/metrics.hpp"

#include <iomanip>
#include <sstream>
#include <stdexcept>

#include <json.hpp>

namespace cmfuse {

using nlohmann::json;

ClassMetrics metrics_from_counts(const ClassCounts& c) {
    ClassMetrics m;
    m.counts = c;
    const int64_t total = c.tp + c.fp + c.fn + c.tn;
    m.accuracy = total > 0 ? static_cast<double>(c.tp + c.tn) / static_cast<double>(total) : 0.0;
    m.precision = (c.tp + c.fp) > 0 ? static_cast<double>(c.tp) / static_cast<double>(c.tp + c.fp)
                                    : 0.0;
    m.recall = (c.tp + c.fn) > 0 ? static_cast<double>(c.tp) / static_cast<double>(c.tp + c.fn)
                                 : 0.0;
    m.f1 = (m.precision + m.recall) > 0.0 ? 2.0 * m.precision * m.recall / (m.precision + m.recall)
                                          : 0.0;
    return m;
}

MetricsReport single_label_metrics(const std::vector<int>& truth,
                                   const std::vector<int>& predicted, int64_t classes) {
    if (truth.size() != predicted.size()) {
        throw std::invalid_argument("metrics: " + std::to_string(truth.size()) + " labels vs " +
                                    std::to_string(predicted.size()) + " predictions");
    }
    MetricsReport r;
    r.task = Task::SingleLabel;
    r.total = static_cast<int64_t>(truth.size());
    r.confusion.assign(classes, std::vector<int64_t>(classes, 0));
    for (size_t i = 0; i < truth.size(); ++i) {
        if (truth[i] < 0 || truth[i] >= classes || predicted[i] < 0 || predicted[i] >= classes) {
            throw std::invalid_argument("metrics: class index outside range");
        }
        r.confusion[truth[i]][predicted[i]]++;
    }
    int64_t diag = 0;
    for (int64_t c = 0; c < classes; ++c) diag += r.confusion[c][c];
    r.overall_accuracy = r.total > 0 ? static_cast<double>(diag) / static_cast<double>(r.total)
                                     : 0.0;
    for (int64_t c = 0; c < classes; ++c) {
        int64_t row = 0, col = 0;
        for (int64_t k = 0; k < classes; ++k) {
            row += r.confusion[c][k];
            col += r.confusion[k][c];
        }
        r.per_class_accuracy.push_back(
            row > 0 ? static_cast<double>(r.confusion[c][c]) / static_cast<double>(row) : 0.0);
        ClassCounts counts;
        counts.tp = r.confusion[c][c];
        counts.fn = row - counts.tp;
        counts.fp = col - counts.tp;
        counts.tn = r.total - counts.tp - counts.fn - counts.fp;
        r.per_class.push_back(metrics_from_counts(counts));
    }
    return r;
}

MetricsReport multi_label_metrics(const std::vector<std::vector<int>>& truth,
                                  const std::vector<std::vector<int>>& predicted,
                                  int64_t classes) {
    if (truth.size() != predicted.size()) {
        throw std::invalid_argument("metrics: label/prediction count mismatch");
    }
    MetricsReport r;
    r.task = Task::MultiLabel;
    r.total = static_cast<int64_t>(truth.size());
    int64_t correct_cells = 0;
    for (int64_t c = 0; c < classes; ++c) {
        ClassCounts counts;
        for (size_t i = 0; i < truth.size(); ++i) {
            const int t = truth[i].at(c);
            const int p = predicted[i].at(c);
            if (t == 1 && p == 1) counts.tp++;
            if (t == 0 && p == 1) counts.fp++;
            if (t == 1 && p == 0) counts.fn++;
            if (t == 0 && p == 0) counts.tn++;
        }
        correct_cells += counts.tp + counts.tn;
        r.per_class.push_back(metrics_from_counts(counts));
    }
    r.overall_accuracy = (r.total > 0 && classes > 0)
                             ? static_cast<double>(correct_cells) /
                                   static_cast<double>(r.total * classes)
                             : 0.0;
    return r;
}

std::string metrics_pretty(const MetricsReport& r, const std::vector<std::string>& class_names) {
    std::ostringstream os;
    os << std::fixed << std::setprecision(4);
    os << "samples: " << r.total << "\n";
    os << "overall accuracy: " << r.overall_accuracy << "\n";
    if (r.task == Task::SingleLabel) {
        os << "class                 acc     prec    recall  f1\n";
        for (size_t c = 0; c < r.per_class.size(); ++c) {
            const auto& m = r.per_class[c];
            const std::string name = c < class_names.size() ? class_names[c] : std::to_string(c);
            os << std::left << std::setw(20) << name << "  " << std::setw(6)
               << r.per_class_accuracy[c] << "  " << std::setw(6) << m.precision << "  "
               << std::setw(6) << m.recall << "  " << m.f1 << "\n";
        }
    } else {
        os << "label                 binacc  prec    recall  f1\n";
        for (size_t c = 0; c < r.per_class.size(); ++c) {
            const auto& m = r.per_class[c];
            const std::string name = c < class_names.size() ? class_names[c] : std::to_string(c);
            os << std::left << std::setw(20) << name << "  " << std::setw(6) << m.accuracy << "  "
               << std::setw(6) << m.precision << "  " << std::setw(6) << m.recall << "  " << m.f1
               << "\n";
        }
    }
    return os.str();
}

std::string metrics_json(const MetricsReport& r, const std::vector<std::string>& class_names) {
    json per_class = json::array();
    for (size_t c = 0; c < r.per_class.size(); ++c) {
        const auto& m = r.per_class[c];
        per_class.push_back(json{
            {"name", c < class_names.size() ? class_names[c] : std::to_string(c)},
            {"tp", m.counts.tp},
            {"fp", m.counts.fp},
            {"fn", m.counts.fn},
            {"tn", m.counts.tn},
            {"accuracy", m.accuracy},
            {"precision", m.precision},
            {"recall", m.recall},
            {"f1", m.f1},
        });
    }
    json j{{"task", to_string(r.task)},
           {"total", r.total},
           {"overall_accuracy", r.overall_accuracy},
           {"per_class", per_class}};
    if (r.task == Task::SingleLabel) {
        j["confusion"] = r.confusion;
        j["per_class_accuracy"] = r.per_class_accuracy;
    }
    return j.dump(2);
}

}  // namespace cmfuse
