#pragma once

#include <cstdint>
#include <iosfwd>
#include <map>
#include <span>
#include <string>
#include <vector>

#include <Eigen/Core>

#include "cangraph/types.hpp"

namespace cangraph {

struct ConfusionMatrix {
    Eigen::Matrix<std::int64_t, Eigen::Dynamic, Eigen::Dynamic> counts;  // rows true, cols predicted
    std::int64_t total = 0;

    int num_classes() const { return static_cast<int>(counts.rows()); }
    /// Each row divided by its sum; rows with no samples stay zero.
    Eigen::MatrixXd normalized() const;
};

struct ClassMetrics {
    std::int64_t tp = 0, fp = 0, tn = 0, fn = 0;
    double precision = 0.0, recall = 0.0, f1 = 0.0;
    // Zero-denominator ratios are reported as 0 with the flag cleared.
    bool precision_defined = false, recall_defined = false, f1_defined = false;
};

struct MetricsReport {
    double accuracy = 0.0;
    std::vector<ClassMetrics> per_class;
    double macro_precision = 0.0, macro_recall = 0.0, macro_f1 = 0.0;
};

/// One evaluated window: per-message predictions vs truth, with the derived
/// window-level labels and the count of correctly identified messages.
struct WindowScore {
    std::size_t window_index = 0;
    int predicted_label = 0;
    int true_label = 0;
    int true_identifications = 0;
    int size = 0;
};

ConfusionMatrix confusion(std::span<const int> predictions, std::span<const int> labels,
                          int num_classes);
MetricsReport metrics(const ConfusionMatrix& cm);

WindowScore score_window(std::size_t window_index, std::span<const int> predictions,
                         std::span<const int> labels);

/// IG = (1 / (K*N)) * sum_k TI_k * C_k, where C_k gates on the window-level
/// label being predicted correctly. 1 only when every message and every
/// window label is right.
double identification_granularity(std::span<const WindowScore> scores, std::size_t window_size);

enum class DetectionLatency { kRealTime, kSemiRealTime, kOffline };
DetectionLatency latency_class(std::size_t window_size);
std::string to_string(DetectionLatency latency);

using IdHistogram = std::map<std::uint16_t, std::int64_t>;

IdHistogram id_histogram(std::span<const MessageRecord> records);

struct ChiSquareResult {
    double statistic = 0.0;
    double critical_value = 0.0;
    bool alarm = false;
};

/// Tabulated upper critical value; alpha must be 0.05 or 0.01, df in [1, 10].
double chi_square_critical(int df, double alpha);

/// Pearson goodness-of-fit of an observed window histogram against expected
/// counts derived from the reference population. The df highest-count
/// reference IDs get one bin each and everything else is pooled into a final
/// bin, giving df + 1 bins.
ChiSquareResult chi_square_detect(const IdHistogram& reference, const IdHistogram& observed,
                                  double alpha = 0.05, int df = 5);

/// Comma-separated metric rows mirroring the usual report table columns.
struct MetricsTableRow {
    std::string dataset;
    std::string attack;
    std::string method;
    double accuracy = 0.0, precision = 0.0, recall = 0.0, f1 = 0.0;
    std::string window_per_label;  // e.g. "50/1" or "1200/1"
};

void write_metrics_table(std::ostream& out, std::span<const MetricsTableRow> rows);
void write_confusion_csv(std::ostream& out, const ConfusionMatrix& cm);

}  // namespace cangraph
