#pragma once

#include <cstdint>
#include <vector>

namespace hmvgg {

struct Metrics {
    std::vector<std::vector<std::int64_t>> confusion;  // [true][predicted]
    std::vector<double> precision, recall, f1;         // per class
    double macro_precision = 0.0, macro_recall = 0.0, macro_f1 = 0.0;
    double accuracy = 0.0;
    std::int64_t total = 0;
};

// Per-class scores fall back to 0 when their denominator is empty.
Metrics compute_metrics(const std::vector<int>& truth, const std::vector<int>& predicted,
                        int classes);

}  // namespace hmvgg
