#include <doctest.h>

#include <cmath>

#include "ppseg/metrics.hpp"
#include "ppseg/mlp.hpp"

using namespace ppseg;

TEST_SUITE("metrics") {

TEST_CASE("perfect predictions score 1.0") {
    const std::vector<int32_t> labels{0, 1, 2, 1, 0, 2};
    const EvalReport rep = evaluate(labels, labels, 3);
    CHECK(rep.miou == 1.0);
    CHECK(rep.accuracy == 1.0);
    CHECK(rep.evaluated == 6);
}

TEST_CASE("hand case: confusion [[2,1],[1,2]]") {
    // truth 0: predicted 0,0,1 ; truth 1: predicted 1,1,0
    const std::vector<int32_t> labels{0, 0, 0, 1, 1, 1};
    const std::vector<int32_t> preds{0, 0, 1, 1, 1, 0};
    const EvalReport rep = evaluate(preds, labels, 2);
    CHECK(rep.confusion[0][0] == 2);
    CHECK(rep.confusion[0][1] == 1);
    CHECK(rep.confusion[1][0] == 1);
    CHECK(rep.confusion[1][1] == 2);
    CHECK(rep.iou[0] == doctest::Approx(0.5));
    CHECK(rep.iou[1] == doctest::Approx(0.5));
    CHECK(rep.miou == doctest::Approx(0.5));
    CHECK(rep.accuracy == doctest::Approx(4.0 / 6.0));
}

TEST_CASE("ignored labels are excluded; all-ignored reports NaN sentinels") {
    const std::vector<int32_t> labels{-1, -1, -1};
    const std::vector<int32_t> preds{0, 1, 2};
    const EvalReport rep = evaluate(preds, labels, 3);
    CHECK(rep.evaluated == 0);
    CHECK(std::isnan(rep.miou));
    CHECK(std::isnan(rep.accuracy));
}

TEST_CASE("classes absent from truth and prediction drop out of the mean") {
    // class 2 never appears on either side -> excluded from the average
    const std::vector<int32_t> labels{0, 0, 1, 1};
    const std::vector<int32_t> preds{0, 1, 1, 1};
    const EvalReport rep = evaluate(preds, labels, 3);
    CHECK(std::isnan(rep.iou[2]));
    const double iou0 = 1.0 / 2.0; // tp 1, fn 1
    const double iou1 = 2.0 / 3.0; // tp 2, fp 1
    CHECK(rep.miou == doctest::Approx(0.5 * (iou0 + iou1)));
}

TEST_CASE("errors: length mismatch and out-of-range values") {
    CHECK_THROWS_AS(evaluate({0, 1}, {0}, 2), UsageError);
    CHECK_THROWS_AS(evaluate({0, 5}, {0, 1}, 2), UsageError);
    CHECK_THROWS_AS(evaluate({0, 0}, {0, 7}, 2), UsageError);
}

TEST_CASE("oracle: 1000 random vectors against an independent tally") {
    Rng rng(77);
    const int classes = 7;
    for (int rep = 0; rep < 20; ++rep) {
        const int64_t n = 1000;
        std::vector<int32_t> preds(n), labels(n);
        for (int64_t i = 0; i < n; ++i) {
            preds[static_cast<size_t>(i)] = static_cast<int32_t>(rng.next_u64() % classes);
            const bool ignore = rng.next_unit() < 0.1;
            labels[static_cast<size_t>(i)] =
                ignore ? kIgnoreClass : static_cast<int32_t>(rng.next_u64() % classes);
        }
        const EvalReport got = evaluate(preds, labels, classes);

        // independent brute-force computation
        std::vector<std::vector<int64_t>> cm(classes, std::vector<int64_t>(classes, 0));
        for (int64_t i = 0; i < n; ++i) {
            if (labels[static_cast<size_t>(i)] == kIgnoreClass) continue;
            cm[static_cast<size_t>(labels[static_cast<size_t>(i)])]
              [static_cast<size_t>(preds[static_cast<size_t>(i)])]++;
        }
        CHECK(got.confusion == cm);
        int64_t total = 0, trace = 0;
        double iou_sum = 0;
        int iou_n = 0;
        for (int c = 0; c < classes; ++c) {
            int64_t tp = cm[static_cast<size_t>(c)][static_cast<size_t>(c)];
            int64_t row = 0, col = 0;
            for (int d = 0; d < classes; ++d) {
                row += cm[static_cast<size_t>(c)][static_cast<size_t>(d)];
                col += cm[static_cast<size_t>(d)][static_cast<size_t>(c)];
            }
            total += row;
            trace += tp;
            const int64_t denom = row + col - tp;
            if (denom > 0) {
                iou_sum += static_cast<double>(tp) / static_cast<double>(denom);
                ++iou_n;
            }
        }
        CHECK(got.evaluated == total);
        CHECK(got.accuracy == static_cast<double>(trace) / static_cast<double>(total));
        CHECK(got.miou == iou_sum / iou_n);
    }
}

TEST_CASE("csv report round-trips the numbers") {
    const std::vector<int32_t> labels{0, 0, 1, 1};
    const std::vector<int32_t> preds{0, 1, 1, 1};
    const EvalReport rep = evaluate(preds, labels, 2);
    const std::string csv = eval_csv(rep, {"road", "car"});
    CHECK(csv.find("class,name,iou") == 0);
    CHECK(csv.find("0,road,0.5") != std::string::npos);
    CHECK(csv.find("accuracy,,0.75") != std::string::npos);
    CHECK(csv.find("evaluated,,4") != std::string::npos);
}

} // TEST_SUITE
