#include "cangraph/eval.hpp"

#include <algorithm>
#include <cmath>
#include <cstdio>
#include <ostream>

namespace cangraph {

Eigen::MatrixXd ConfusionMatrix::normalized() const {
    Eigen::MatrixXd out = Eigen::MatrixXd::Zero(counts.rows(), counts.cols());
    for (Eigen::Index r = 0; r < counts.rows(); ++r) {
        const std::int64_t row_sum = counts.row(r).sum();
        if (row_sum == 0) continue;
        for (Eigen::Index c = 0; c < counts.cols(); ++c)
            out(r, c) = static_cast<double>(counts(r, c)) / static_cast<double>(row_sum);
    }
    return out;
}

ConfusionMatrix confusion(std::span<const int> predictions, std::span<const int> labels,
                          int num_classes) {
    if (predictions.size() != labels.size())
        throw DataError("confusion: predictions and labels differ in length");
    if (num_classes < 1) throw DataError("confusion: need at least one class");

    ConfusionMatrix cm;
    cm.counts.setZero(num_classes, num_classes);
    for (std::size_t i = 0; i < labels.size(); ++i) {
        const int t = labels[i], p = predictions[i];
        if (t < 0 || t >= num_classes || p < 0 || p >= num_classes)
            throw DataError("confusion: class out of range at position " + std::to_string(i));
        ++cm.counts(t, p);
    }
    cm.total = static_cast<std::int64_t>(labels.size());
    return cm;
}

MetricsReport metrics(const ConfusionMatrix& cm) {
    if (cm.total == 0) throw DataError("metrics: empty confusion matrix");

    MetricsReport report;
    report.accuracy = static_cast<double>(cm.counts.trace()) / static_cast<double>(cm.total);

    const int f = cm.num_classes();
    double precision_sum = 0.0, recall_sum = 0.0, f1_sum = 0.0;
    int precision_n = 0, recall_n = 0, f1_n = 0;
    for (int c = 0; c < f; ++c) {
        ClassMetrics m;
        m.tp = cm.counts(c, c);
        m.fp = cm.counts.col(c).sum() - m.tp;
        m.fn = cm.counts.row(c).sum() - m.tp;
        m.tn = cm.total - m.tp - m.fp - m.fn;

        if (m.tp + m.fp > 0) {
            m.precision = static_cast<double>(m.tp) / static_cast<double>(m.tp + m.fp);
            m.precision_defined = true;
            precision_sum += m.precision;
            ++precision_n;
        }
        if (m.tp + m.fn > 0) {
            m.recall = static_cast<double>(m.tp) / static_cast<double>(m.tp + m.fn);
            m.recall_defined = true;
            recall_sum += m.recall;
            ++recall_n;
        }
        if (m.precision_defined && m.recall_defined && m.precision + m.recall > 0.0) {
            m.f1 = 2.0 * m.precision * m.recall / (m.precision + m.recall);
            m.f1_defined = true;
            f1_sum += m.f1;
            ++f1_n;
        }
        report.per_class.push_back(m);
    }
    report.macro_precision = precision_n > 0 ? precision_sum / precision_n : 0.0;
    report.macro_recall = recall_n > 0 ? recall_sum / recall_n : 0.0;
    report.macro_f1 = f1_n > 0 ? f1_sum / f1_n : 0.0;
    return report;
}

WindowScore score_window(std::size_t window_index, std::span<const int> predictions,
                         std::span<const int> labels) {
    if (predictions.size() != labels.size() || labels.empty())
        throw DataError("score_window: need equal nonempty predictions and labels");

    WindowScore score;
    score.window_index = window_index;
    score.size = static_cast<int>(labels.size());
    score.predicted_label =
        majority_attack_label(std::vector<int>(predictions.begin(), predictions.end()));
    score.true_label = majority_attack_label(std::vector<int>(labels.begin(), labels.end()));
    for (std::size_t i = 0; i < labels.size(); ++i)
        if (predictions[i] == labels[i]) ++score.true_identifications;
    return score;
}

double identification_granularity(std::span<const WindowScore> scores,
                                  std::size_t window_size) {
    if (scores.empty()) throw DataError("identification_granularity: no windows");

    double sum = 0.0;
    for (const auto& s : scores) {
        if (static_cast<std::size_t>(s.size) != window_size)
            throw DataError("identification_granularity: window size mismatch");
        if (s.predicted_label == s.true_label) sum += s.true_identifications;
    }
    return sum / (static_cast<double>(scores.size()) * static_cast<double>(window_size));
}

DetectionLatency latency_class(std::size_t window_size) {
    if (window_size <= 8) return DetectionLatency::kRealTime;
    if (window_size <= 34) return DetectionLatency::kSemiRealTime;
    return DetectionLatency::kOffline;
}

std::string to_string(DetectionLatency latency) {
    switch (latency) {
        case DetectionLatency::kRealTime: return "real-time";
        case DetectionLatency::kSemiRealTime: return "semi-real-time";
        case DetectionLatency::kOffline: return "offline";
    }
    return "unknown";
}

IdHistogram id_histogram(std::span<const MessageRecord> records) {
    IdHistogram hist;
    for (const auto& rec : records) ++hist[rec.can_id];
    return hist;
}

double chi_square_critical(int df, double alpha) {
    // Upper-tail critical values of the chi-square distribution.
    static constexpr double k05[] = {3.8415, 5.9915, 7.8147, 9.4877,  11.0705,
                                     12.5916, 14.0671, 15.5073, 16.9190, 18.3070};
    static constexpr double k01[] = {6.6349, 9.2103, 11.3449, 13.2767, 15.0863,
                                     16.8119, 18.4753, 20.0902, 21.6660, 23.2093};
    if (df < 1 || df > 10)
        throw ConfigError("chi_square_critical: df " + std::to_string(df) + " not tabulated");
    if (alpha == 0.05) return k05[df - 1];
    if (alpha == 0.01) return k01[df - 1];
    throw ConfigError("chi_square_critical: alpha must be 0.05 or 0.01");
}

ChiSquareResult chi_square_detect(const IdHistogram& reference, const IdHistogram& observed,
                                  double alpha, int df) {
    const double critical = chi_square_critical(df, alpha);

    // Reference IDs ordered by count desc, then id asc. The df most frequent
    // get their own bin; everything else (any other ID, reference or not)
    // lands in the pooled bin.
    std::vector<std::pair<std::uint16_t, std::int64_t>> ranked(reference.begin(),
                                                               reference.end());
    std::sort(ranked.begin(), ranked.end(), [](const auto& a, const auto& b) {
        return a.second != b.second ? a.second > b.second : a.first < b.first;
    });
    if (static_cast<int>(ranked.size()) < df)
        throw DataError("chi_square_detect: reference has fewer distinct IDs than df");

    const int bins = df + 1;
    std::map<std::uint16_t, int> bin_of;
    for (int b = 0; b < df; ++b) bin_of[ranked[static_cast<std::size_t>(b)].first] = b;
    auto bin_for = [&](std::uint16_t id) {
        auto it = bin_of.find(id);
        return it == bin_of.end() ? df : it->second;
    };

    std::vector<double> ref_counts(static_cast<std::size_t>(bins), 0.0);
    std::vector<double> obs_counts(static_cast<std::size_t>(bins), 0.0);
    double ref_total = 0.0, obs_total = 0.0;
    for (const auto& [id, count] : reference) {
        ref_counts[static_cast<std::size_t>(bin_for(id))] += static_cast<double>(count);
        ref_total += static_cast<double>(count);
    }
    for (const auto& [id, count] : observed) {
        obs_counts[static_cast<std::size_t>(bin_for(id))] += static_cast<double>(count);
        obs_total += static_cast<double>(count);
    }
    if (ref_total <= 0.0 || obs_total <= 0.0)
        throw DataError("chi_square_detect: empty histogram");

    ChiSquareResult result;
    result.critical_value = critical;
    for (int b = 0; b < bins; ++b) {
        const double expected =
            ref_counts[static_cast<std::size_t>(b)] / ref_total * obs_total;
        if (expected <= 0.0)
            throw DataError("chi_square_detect: zero expected count after pooling");
        const double diff = obs_counts[static_cast<std::size_t>(b)] - expected;
        result.statistic += diff * diff / expected;
    }
    result.alarm = result.statistic > critical;
    return result;
}

void write_metrics_table(std::ostream& out, std::span<const MetricsTableRow> rows) {
    out << "Dataset,Attack,Method,Accuracy,Precision,Recall,F1-Score,"
           "Window Size/Number of Identified Label\n";
    const auto fmt = [&](double v) {
        char buf[16];
        std::snprintf(buf, sizeof(buf), "%.4f", v);
        return std::string(buf);
    };
    for (const auto& row : rows) {
        out << row.dataset << ',' << row.attack << ',' << row.method << ',' << fmt(row.accuracy)
            << ',' << fmt(row.precision) << ',' << fmt(row.recall) << ',' << fmt(row.f1) << ','
            << row.window_per_label << '\n';
    }
}

void write_confusion_csv(std::ostream& out, const ConfusionMatrix& cm) {
    const Eigen::MatrixXd normalized = cm.normalized();
    char buf[16];
    for (Eigen::Index r = 0; r < normalized.rows(); ++r) {
        for (Eigen::Index c = 0; c < normalized.cols(); ++c) {
            std::snprintf(buf, sizeof(buf), "%.6f", normalized(r, c));
            out << (c == 0 ? "" : ",") << buf;
        }
        out << '\n';
    }
}

}  // namespace cangraph
