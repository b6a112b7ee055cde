#include "ppseg/metrics.hpp"

#include <cmath>
#include <limits>
#include <sstream>

namespace ppseg {

ConfusionAccumulator::ConfusionAccumulator(int n_classes)
    : n_classes_(n_classes),
      counts_(static_cast<size_t>(n_classes), std::vector<int64_t>(static_cast<size_t>(n_classes), 0)) {
    if (n_classes < 1) throw UsageError("evaluate: need at least one class");
}

void ConfusionAccumulator::add(const std::vector<int32_t>& preds,
                               const std::vector<int32_t>& labels, int32_t ignore_index) {
    if (preds.size() != labels.size()) {
        throw UsageError("evaluate: " + std::to_string(preds.size()) + " predictions vs " +
                         std::to_string(labels.size()) + " labels");
    }
    for (size_t i = 0; i < preds.size(); ++i) {
        const int32_t t = labels[i];
        if (t == ignore_index) continue;
        if (t < 0 || t >= n_classes_) {
            throw UsageError("evaluate: label " + std::to_string(t) + " outside [0," +
                             std::to_string(n_classes_) + ")");
        }
        const int32_t p = preds[i];
        if (p < 0 || p >= n_classes_) {
            throw UsageError("evaluate: prediction " + std::to_string(p) + " outside [0," +
                             std::to_string(n_classes_) + ")");
        }
        ++counts_[static_cast<size_t>(t)][static_cast<size_t>(p)];
    }
}

EvalReport ConfusionAccumulator::report() const {
    EvalReport rep;
    rep.confusion = counts_;
    rep.iou.assign(static_cast<size_t>(n_classes_), std::numeric_limits<double>::quiet_NaN());
    int64_t total = 0, trace = 0;
    for (int c = 0; c < n_classes_; ++c) {
        for (int d = 0; d < n_classes_; ++d) total += counts_[static_cast<size_t>(c)][static_cast<size_t>(d)];
        trace += counts_[static_cast<size_t>(c)][static_cast<size_t>(c)];
    }
    rep.evaluated = total;
    double iou_sum = 0.0;
    int iou_n = 0;
    for (int c = 0; c < n_classes_; ++c) {
        const int64_t tp = counts_[static_cast<size_t>(c)][static_cast<size_t>(c)];
        int64_t fp = 0, fn = 0;
        for (int d = 0; d < n_classes_; ++d) {
            if (d == c) continue;
            fp += counts_[static_cast<size_t>(d)][static_cast<size_t>(c)];
            fn += counts_[static_cast<size_t>(c)][static_cast<size_t>(d)];
        }
        const int64_t denom = tp + fp + fn;
        if (denom > 0) {
            rep.iou[static_cast<size_t>(c)] = static_cast<double>(tp) / static_cast<double>(denom);
            iou_sum += rep.iou[static_cast<size_t>(c)];
            ++iou_n;
        }
    }
    rep.miou = iou_n > 0 ? iou_sum / iou_n : std::numeric_limits<double>::quiet_NaN();
    rep.accuracy = total > 0 ? static_cast<double>(trace) / static_cast<double>(total)
                             : std::numeric_limits<double>::quiet_NaN();
    return rep;
}

EvalReport evaluate(const std::vector<int32_t>& preds, const std::vector<int32_t>& labels,
                    int n_classes, int32_t ignore_index) {
    ConfusionAccumulator acc(n_classes);
    acc.add(preds, labels, ignore_index);
    return acc.report();
}

std::string eval_csv_header() { return "class,name,iou"; }

std::string eval_csv(const EvalReport& report, const std::vector<std::string>& class_names) {
    std::ostringstream os;
    os << eval_csv_header() << "\n";
    for (size_t c = 0; c < report.iou.size(); ++c) {
        os << c << "," << (c < class_names.size() ? class_names[c] : "class" + std::to_string(c))
           << "," << report.iou[c] << "\n";
    }
    os << "miou,," << report.miou << "\n";
    os << "accuracy,," << report.accuracy << "\n";
    os << "evaluated,," << report.evaluated << "\n";
    return os.str();
}

} // namespace ppseg
