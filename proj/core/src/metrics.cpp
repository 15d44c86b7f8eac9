#include "hmvgg/metrics.hpp"

#include <string>

#include "hmvgg/tensor.hpp"

namespace hmvgg {

Metrics compute_metrics(const std::vector<int>& truth, const std::vector<int>& predicted,
                        int classes) {
    if (classes < 1) throw ShapeError("metrics need at least one class");
    if (truth.size() != predicted.size()) {
        throw ShapeError("metrics need matching label counts, got " +
                         std::to_string(truth.size()) + " vs " +
                         std::to_string(predicted.size()));
    }
    if (truth.empty()) throw ShapeError("metrics need at least one sample");

    Metrics m;
    m.total = static_cast<std::int64_t>(truth.size());
    m.confusion.assign(static_cast<std::size_t>(classes),
                       std::vector<std::int64_t>(static_cast<std::size_t>(classes), 0));
    for (std::size_t i = 0; i < truth.size(); ++i) {
        const int t = truth[i], p = predicted[i];
        if (t < 0 || t >= classes || p < 0 || p >= classes) {
            throw ShapeError("label out of range at sample " + std::to_string(i));
        }
        ++m.confusion[static_cast<std::size_t>(t)][static_cast<std::size_t>(p)];
    }

    m.precision.assign(static_cast<std::size_t>(classes), 0.0);
    m.recall.assign(static_cast<std::size_t>(classes), 0.0);
    m.f1.assign(static_cast<std::size_t>(classes), 0.0);
    std::int64_t correct = 0;
    for (int k = 0; k < classes; ++k) {
        const std::size_t ku = static_cast<std::size_t>(k);
        const std::int64_t tp = m.confusion[ku][ku];
        correct += tp;
        std::int64_t col = 0, row = 0;
        for (int j = 0; j < classes; ++j) {
            col += m.confusion[static_cast<std::size_t>(j)][ku];
            row += m.confusion[ku][static_cast<std::size_t>(j)];
        }
        const double p = col > 0 ? static_cast<double>(tp) / static_cast<double>(col) : 0.0;
        const double r = row > 0 ? static_cast<double>(tp) / static_cast<double>(row) : 0.0;
        m.precision[ku] = p;
        m.recall[ku] = r;
        m.f1[ku] = p + r > 0.0 ? 2.0 * p * r / (p + r) : 0.0;
        m.macro_precision += p;
        m.macro_recall += r;
        m.macro_f1 += m.f1[ku];
    }
    m.macro_precision /= classes;
    m.macro_recall /= classes;
    m.macro_f1 /= classes;
    m.accuracy = static_cast<double>(correct) / static_cast<double>(m.total);
    return m;
}

}  // namespace hmvgg
