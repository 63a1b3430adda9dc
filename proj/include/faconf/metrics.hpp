#pragma once

#include <cstdint>
#include <string>
#include <vector>

#include "faconf/errors.hpp"

namespace faconf {

// Class-by-class counts; rows are actual classes, columns predicted.
struct ConfusionMatrix {
    std::size_t n_classes = 0;
    std::vector<std::int64_t> counts;  // row-major n_classes x n_classes
    std::int64_t n = 0;

    std::int64_t at(std::size_t actual, std::size_t predicted) const {
        return counts[actual * n_classes + predicted];
    }
    std::int64_t& at(std::size_t actual, std::size_t predicted) {
        return counts[actual * n_classes + predicted];
    }

    std::int64_t row_sum(std::size_t i) const {
        std::int64_t s = 0;
        for (std::size_t j = 0; j < n_classes; ++j) s += at(i, j);
        return s;
    }
    std::int64_t col_sum(std::size_t j) const {
        std::int64_t s = 0;
        for (std::size_t i = 0; i < n_classes; ++i) s += at(i, j);
        return s;
    }
};

inline ConfusionMatrix confusion(const std::vector<std::size_t>& preds,
                                 const std::vector<std::size_t>& labels, std::size_t n_classes) {
    if (preds.size() != labels.size())
        throw DataError("confusion: " + std::to_string(preds.size()) + " predictions vs " +
                        std::to_string(labels.size()) + " labels");
    ConfusionMatrix cm;
    cm.n_classes = n_classes;
    cm.counts.assign(n_classes * n_classes, 0);
    for (std::size_t i = 0; i < preds.size(); ++i) {
        if (preds[i] >= n_classes || labels[i] >= n_classes)
            throw DataError("confusion: class index out of range at sample " + std::to_string(i));
        ++cm.at(labels[i], preds[i]);
    }
    cm.n = static_cast<std::int64_t>(preds.size());
    return cm;
}

// acc = T / (T + F) = trace / n.
inline double accuracy(const ConfusionMatrix& cm) {
    if (cm.n == 0) throw MetricError("accuracy undefined for an empty confusion matrix");
    std::int64_t trace = 0;
    for (std::size_t i = 0; i < cm.n_classes; ++i) trace += cm.at(i, i);
    return static_cast<double>(trace) / static_cast<double>(cm.n);
}

// Cohen's kappa: (p0 - pe) / (1 - pe) with pe = sum(a_i * b_i) / n^2.
// Count products stay in integer arithmetic until the final divisions.
inline double kappa(const ConfusionMatrix& cm) {
    if (cm.n == 0) throw MetricError("kappa undefined for an empty confusion matrix");
    std::int64_t trace = 0;
    std::int64_t ab = 0;
    for (std::size_t i = 0; i < cm.n_classes; ++i) {
        trace += cm.at(i, i);
        ab += cm.row_sum(i) * cm.col_sum(i);
    }
    const std::int64_t nn = cm.n * cm.n;
    if (ab == nn) throw MetricError("kappa undefined: expected agreement p_e equals 1");
    // kappa = (trace/n - ab/n^2) / (1 - ab/n^2) = (trace*n - ab) / (n^2 - ab)
    return static_cast<double>(trace * cm.n - ab) / static_cast<double>(nn - ab);
}

inline std::string confusion_csv(const ConfusionMatrix& cm) {
    std::string out;
    for (std::size_t i = 0; i < cm.n_classes; ++i) {
        for (std::size_t j = 0; j < cm.n_classes; ++j) {
            if (j) out += ',';
            out += std::to_string(cm.at(i, j));
        }
        out += '\n';
    }
    return out;
}

}  // namespace faconf
