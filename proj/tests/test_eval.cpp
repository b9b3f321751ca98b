#define DOCTEST_CONFIG_IMPLEMENT_WITH_MAIN
#include <doctest.h>

#include <random>
#include <sstream>

#include "cangraph/eval.hpp"
#include "cangraph/linalg.hpp"

using namespace cangraph;

TEST_CASE("confusion matrix basics") {
    SUBCASE("perfect predictions are diagonal") {
        const std::vector<int> labels{0, 1, 2, 1, 0};
        const ConfusionMatrix cm = confusion(labels, labels, 3);
        CHECK(cm.counts(0, 0) == 2);
        CHECK(cm.counts(1, 1) == 2);
        CHECK(cm.counts(2, 2) == 1);
        CHECK(cm.counts.sum() == cm.counts.trace());
    }
    SUBCASE("swapped binary predictions are anti-diagonal") {
        const std::vector<int> preds{0, 1}, labels{1, 0};
        const ConfusionMatrix cm = confusion(preds, labels, 2);
        CHECK(cm.counts(0, 1) == 1);
        CHECK(cm.counts(1, 0) == 1);
        CHECK(cm.counts(0, 0) == 0);
    }
    SUBCASE("empty input gives a zero matrix") {
        const ConfusionMatrix cm = confusion({}, {}, 2);
        CHECK(cm.total == 0);
        CHECK(cm.counts.sum() == 0);
    }
    SUBCASE("out-of-range class is rejected") {
        const std::vector<int> preds{2}, labels{0};
        CHECK_THROWS_AS(confusion(preds, labels, 2), DataError);
    }
    SUBCASE("normalized rows divide by row sums, empty rows stay zero") {
        const std::vector<int> preds{0, 1}, labels{0, 0};
        const Eigen::MatrixXd n = confusion(preds, labels, 2).normalized();
        CHECK(n(0, 0) == doctest::Approx(0.5));
        CHECK(n(1, 0) == 0.0);
        CHECK(n(1, 1) == 0.0);
    }
}

TEST_CASE("metrics closed forms") {
    SUBCASE("balanced binary counts") {
        // TP=1 FP=1 TN=1 FN=1 with class 1 as positive.
        const std::vector<int> preds{1, 1, 0, 0}, labels{1, 0, 1, 0};
        const MetricsReport r = metrics(confusion(preds, labels, 2));
        CHECK(r.accuracy == doctest::Approx(0.5));
        CHECK(r.per_class[1].precision == doctest::Approx(0.5));
        CHECK(r.per_class[1].recall == doctest::Approx(0.5));
        CHECK(r.per_class[1].f1 == doctest::Approx(0.5));
    }
    SUBCASE("published precision/recall pair reproduces its F1") {
        const double p = 0.9953, r = 0.9721;
        const double f1 = 2.0 * p * r / (p + r);
        CHECK(f1 == doctest::Approx(0.9836).epsilon(5e-4));
    }
    SUBCASE("empty matrix is rejected") {
        CHECK_THROWS_AS(metrics(confusion({}, {}, 2)), DataError);
    }
    SUBCASE("undefined ratios are flagged and macro skips them") {
        // Class 1 never occurs and is never predicted.
        const std::vector<int> preds{0, 0}, labels{0, 0};
        const MetricsReport r = metrics(confusion(preds, labels, 2));
        CHECK(!r.per_class[1].precision_defined);
        CHECK(!r.per_class[1].recall_defined);
        CHECK(r.per_class[1].precision == 0.0);
        CHECK(r.macro_precision == doctest::Approx(1.0));  // only class 0 contributes
    }
}

TEST_CASE("metrics properties over random confusion matrices") {
    std::mt19937_64 rng(15);
    for (int trial = 0; trial < 1000; ++trial) {
        const int f = 2 + static_cast<int>(rng() % 5);
        const std::size_t n = 1 + rng() % 200;
        std::vector<int> preds(n), labels(n);
        for (std::size_t i = 0; i < n; ++i) {
            preds[i] = static_cast<int>(rng() % static_cast<std::uint64_t>(f));
            labels[i] = static_cast<int>(rng() % static_cast<std::uint64_t>(f));
        }
        const ConfusionMatrix cm = confusion(preds, labels, f);
        const MetricsReport r = metrics(cm);

        // Accuracy == sum TP / total == 1 - misclassified/total.
        std::int64_t tp_sum = 0, wrong = 0;
        for (int c = 0; c < f; ++c) tp_sum += r.per_class[static_cast<std::size_t>(c)].tp;
        for (std::size_t i = 0; i < n; ++i) wrong += preds[i] != labels[i];
        CHECK(std::abs(r.accuracy - static_cast<double>(tp_sum) / static_cast<double>(n)) <=
              1e-12);
        CHECK(std::abs(r.accuracy - (1.0 - static_cast<double>(wrong) / static_cast<double>(n))) <=
              1e-12);

        // F1 equals the harmonic mean recomputation.
        for (const auto& m : r.per_class) {
            if (!m.f1_defined) continue;
            const double harmonic = 2.0 * m.precision * m.recall / (m.precision + m.recall);
            CHECK(std::abs(m.f1 - harmonic) <= 1e-12);
        }

        // Permutation invariance of the pairs.
        std::vector<std::size_t> order(n);
        std::iota(order.begin(), order.end(), std::size_t{0});
        seeded_shuffle(order, rng);
        std::vector<int> preds2(n), labels2(n);
        for (std::size_t i = 0; i < n; ++i) {
            preds2[i] = preds[order[i]];
            labels2[i] = labels[order[i]];
        }
        const ConfusionMatrix cm2 = confusion(preds2, labels2, f);
        CHECK(cm.counts == cm2.counts);
    }
}

TEST_CASE("identification granularity") {
    SUBCASE("all correct gives 1") {
        const std::vector<int> labels{0, 1, 0};
        std::vector<WindowScore> scores{score_window(0, labels, labels),
                                        score_window(1, labels, labels)};
        CHECK(identification_granularity(scores, 3) == doctest::Approx(1.0));
    }
    SUBCASE("hand-computed two-window case is exactly one half") {
        // Window 1 fully correct; window 2 has the wrong window label.
        const std::vector<int> w1{0, 2, 0};
        const std::vector<int> w2_pred{0, 0, 1}, w2_true{2, 2, 1};
        std::vector<WindowScore> scores{score_window(0, w1, w1),
                                        score_window(1, w2_pred, w2_true)};
        CHECK(scores[1].predicted_label != scores[1].true_label);
        CHECK(identification_granularity(scores, 3) == 0.5);
    }
    SUBCASE("wrong window labels gate everything to 0") {
        const std::vector<int> preds{1, 1, 1}, truth{2, 2, 2};
        std::vector<WindowScore> scores{score_window(0, preds, truth),
                                        score_window(1, preds, truth)};
        CHECK(identification_granularity(scores, 3) == 0.0);
    }
    SUBCASE("empty score list is rejected") {
        CHECK_THROWS_AS(identification_granularity({}, 3), DataError);
    }
    SUBCASE("correcting a message inside a correct window never lowers IG") {
        const std::vector<int> truth{1, 1, 0};
        const std::vector<int> worse{1, 0, 0};
        const std::vector<int> better{1, 1, 0};
        std::vector<WindowScore> a{score_window(0, worse, truth)};
        std::vector<WindowScore> b{score_window(0, better, truth)};
        CHECK(identification_granularity(b, 3) >= identification_granularity(a, 3));
    }
    SUBCASE("a single wrong message keeps IG below 1") {
        const std::vector<int> truth{1, 1, 0}, preds{1, 1, 1};
        std::vector<WindowScore> scores{score_window(0, preds, truth)};
        CHECK(identification_granularity(scores, 3) < 1.0);
    }
}

TEST_CASE("latency classes split at 8 and 34 messages") {
    CHECK(latency_class(3) == DetectionLatency::kRealTime);
    CHECK(latency_class(8) == DetectionLatency::kRealTime);
    CHECK(latency_class(9) == DetectionLatency::kSemiRealTime);
    CHECK(latency_class(27) == DetectionLatency::kSemiRealTime);
    CHECK(latency_class(34) == DetectionLatency::kSemiRealTime);
    CHECK(latency_class(54) == DetectionLatency::kOffline);
    CHECK(to_string(latency_class(54)) == "offline");
}

namespace {

IdHistogram histogram_of(std::initializer_list<std::pair<std::uint16_t, std::int64_t>> entries) {
    IdHistogram h;
    for (const auto& [id, count] : entries) h[id] = count;
    return h;
}

}  // namespace

TEST_CASE("chi-square detector") {
    const IdHistogram reference = histogram_of(
        {{0x100, 600}, {0x200, 300}, {0x300, 150}, {0x400, 80}, {0x500, 40}, {0x600, 20},
         {0x700, 10}});

    SUBCASE("critical value table") {
        CHECK(chi_square_critical(5, 0.05) == doctest::Approx(11.0705));
        CHECK(chi_square_critical(5, 0.01) == doctest::Approx(15.0863));
        CHECK_THROWS_AS(chi_square_critical(11, 0.05), ConfigError);
        CHECK_THROWS_AS(chi_square_critical(5, 0.1), ConfigError);
    }
    SUBCASE("observed equal to expected scores zero") {
        const ChiSquareResult r = chi_square_detect(reference, reference, 0.05, 5);
        CHECK(r.statistic == doctest::Approx(0.0));
        CHECK(!r.alarm);
    }
    SUBCASE("flooded window alarms") {
        // Half the observed window is ID 0, as in a flooding attack.
        const IdHistogram flooded = histogram_of(
            {{0x000, 600}, {0x100, 300}, {0x200, 150}, {0x300, 75}, {0x400, 40}, {0x500, 20},
             {0x600, 10}, {0x700, 5}});
        const ChiSquareResult r = chi_square_detect(reference, flooded, 0.05, 5);
        CHECK(r.alarm);
        CHECK(r.statistic > 10.0 * r.critical_value);
    }
    SUBCASE("statistic is invariant to count-preserving scaling of the reference") {
        IdHistogram scaled = reference;
        for (auto& [id, count] : scaled) count *= 7;
        const IdHistogram observed = histogram_of(
            {{0x100, 610}, {0x200, 290}, {0x300, 140}, {0x400, 90}, {0x500, 40}, {0x600, 30}});
        const ChiSquareResult a = chi_square_detect(reference, observed, 0.05, 5);
        const ChiSquareResult b = chi_square_detect(scaled, observed, 0.05, 5);
        CHECK(a.statistic == doctest::Approx(b.statistic).epsilon(1e-12));
    }
    SUBCASE("empty pool bin is rejected") {
        // Exactly df distinct reference IDs leave nothing to pool.
        const IdHistogram narrow = histogram_of(
            {{0x100, 100}, {0x200, 80}, {0x300, 60}, {0x400, 40}, {0x500, 20}});
        CHECK_THROWS_WITH_AS(chi_square_detect(narrow, narrow, 0.05, 5),
                             doctest::Contains("zero expected"), DataError);
    }
    SUBCASE("fewer reference ids than df is rejected") {
        const IdHistogram tiny = histogram_of({{0x100, 10}, {0x200, 10}});
        CHECK_THROWS_AS(chi_square_detect(tiny, tiny, 0.05, 5), DataError);
    }
}

TEST_CASE("report writers emit the table layout") {
    std::ostringstream table;
    const std::vector<MetricsTableRow> rows{
        {"capture", "dos", "graph-gcn", 0.998, 0.9953, 0.9721, 0.9836, "50/1"}};
    write_metrics_table(table, rows);
    CHECK(table.str().find("Window Size/Number of Identified Label") != std::string::npos);
    CHECK(table.str().find("0.9836") != std::string::npos);

    std::ostringstream grid;
    const std::vector<int> preds{0, 1}, labels{0, 1};
    write_confusion_csv(grid, confusion(preds, labels, 2));
    CHECK(grid.str() == "1.000000,0.000000\n0.000000,1.000000\n");
}
