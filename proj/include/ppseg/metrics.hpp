#pragma once

#include <cstdint>
#include <string>
#include <vector>

#include "ppseg/lidar_io.hpp"

namespace ppseg {

// Row = ground truth, column = prediction; ignore-labeled positions are
// excluded. mIoU averages IoU over classes with a nonzero denominator; when
// no class is evaluable both miou and accuracy are NaN.
struct EvalReport {
    std::vector<std::vector<int64_t>> confusion;
    std::vector<double> iou; // NaN for classes with empty denominator
    double miou = 0.0;
    double accuracy = 0.0;
    int64_t evaluated = 0;
};

EvalReport evaluate(const std::vector<int32_t>& preds, const std::vector<int32_t>& labels,
                    int n_classes, int32_t ignore_index = kIgnoreClass);

// Accumulating form for multi-scan evaluation.
class ConfusionAccumulator {
public:
    explicit ConfusionAccumulator(int n_classes);
    void add(const std::vector<int32_t>& preds, const std::vector<int32_t>& labels,
             int32_t ignore_index = kIgnoreClass);
    EvalReport report() const;

private:
    int n_classes_;
    std::vector<std::vector<int64_t>> counts_;
};

std::string eval_csv_header();
std::string eval_csv(const EvalReport& report, const std::vector<std::string>& class_names);

} // namespace ppseg
