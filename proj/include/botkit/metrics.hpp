#pragma once

// Binary classification metrics.
//
// Conventions: class 1 is positive. accuracy = (TP+TN)/total, precision =
// TP/(TP+FP), recall = TP/(TP+FN) (sensitivity), F1 = 2PR/(P+R). A zero
// denominator yields 0 with a flag on the report instead of failing the run.
//
// The ROC curve sweeps thresholds over the distinct scores in descending
// order, predicting positive where score >= threshold; the curve starts at
// (0,0) and ends at (1,1) and is integrated with the trapezoid rule. The
// result equals the pairwise statistic P(score_pos > score_neg)
// + 0.5 * P(score_pos = score_neg), which tests exploit as an oracle.
//
// The ensemble decision over the per-slice votes is majority of argmax labels;
// an exact tie falls back to mean probability >= 0.5. The ensemble score used
// for ROC is always the mean probability, independent of the vote.

#include <algorithm>
#include <cmath>
#include <cstddef>
#include <limits>
#include <stdexcept>
#include <vector>

namespace botkit {

struct ConfusionCounts {
    long tp = 0;
    long fp = 0;
    long tn = 0;
    long fn = 0;

    long total() const { return tp + fp + tn + fn; }
};

inline ConfusionCounts confusion(const std::vector<int>& predictions, const std::vector<int>& truths) {
    if (predictions.size() != truths.size())
        throw std::invalid_argument("confusion: prediction and truth counts differ");
    if (predictions.empty()) throw std::invalid_argument("confusion: empty record set");
    ConfusionCounts c;
    for (std::size_t i = 0; i < predictions.size(); ++i) {
        int p = predictions[i], t = truths[i];
        if ((p != 0 && p != 1) || (t != 0 && t != 1))
            throw std::invalid_argument("confusion: labels must be 0 or 1");
        if (t == 1)
            (p == 1 ? c.tp : c.fn) += 1;
        else
            (p == 1 ? c.fp : c.tn) += 1;
    }
    return c;
}

struct RocPoint {
    double fpr = 0.0;
    double tpr = 0.0;
    double threshold = 0.0;
};

struct RocCurve {
    double auc = 0.0;
    std::vector<RocPoint> points;
};

// Threshold sweep over distinct scores, descending; score >= threshold counts
// as a positive prediction. Requires both classes to be present.
inline RocCurve roc_auc(const std::vector<double>& scores, const std::vector<int>& truths) {
    if (scores.size() != truths.size()) throw std::invalid_argument("roc_auc: score and truth counts differ");
    long pos = 0, neg = 0;
    for (std::size_t i = 0; i < truths.size(); ++i) {
        if (truths[i] != 0 && truths[i] != 1) throw std::invalid_argument("roc_auc: labels must be 0 or 1");
        if (!std::isfinite(scores[i])) throw std::invalid_argument("roc_auc: scores must be finite");
        (truths[i] == 1 ? pos : neg) += 1;
    }
    if (pos == 0 || neg == 0) throw std::invalid_argument("roc_auc: both classes must be present");

    std::vector<double> thresholds = scores;
    std::sort(thresholds.begin(), thresholds.end(), std::greater<double>());
    thresholds.erase(std::unique(thresholds.begin(), thresholds.end()), thresholds.end());

    RocCurve curve;
    curve.points.push_back({0.0, 0.0, std::numeric_limits<double>::infinity()});
    for (double t : thresholds) {
        long tp = 0, fp = 0;
        for (std::size_t i = 0; i < scores.size(); ++i) {
            if (scores[i] >= t) (truths[i] == 1 ? tp : fp) += 1;
        }
        curve.points.push_back({static_cast<double>(fp) / static_cast<double>(neg),
                                static_cast<double>(tp) / static_cast<double>(pos), t});
    }
    for (std::size_t i = 1; i < curve.points.size(); ++i)
        curve.auc += (curve.points[i].fpr - curve.points[i - 1].fpr) *
                     (curve.points[i].tpr + curve.points[i - 1].tpr) * 0.5;
    return curve;
}

struct MetricsReport {
    double accuracy = 0.0;
    double precision = 0.0;
    double recall = 0.0;
    double f1 = 0.0;
    double roc_auc = 0.0;
    ConfusionCounts counts;
    std::vector<RocPoint> roc_points;
    // set where a zero denominator forced the metric to 0
    bool precision_defaulted = false;
    bool recall_defaulted = false;
    bool f1_defaulted = false;
};

// Scan-level metrics over parallel prediction/truth/score arrays.
inline MetricsReport compute_metrics(const std::vector<int>& predictions, const std::vector<int>& truths,
                                     const std::vector<double>& scores) {
    MetricsReport r;
    r.counts = confusion(predictions, truths);
    r.accuracy = static_cast<double>(r.counts.tp + r.counts.tn) / static_cast<double>(r.counts.total());
    if (r.counts.tp + r.counts.fp > 0)
        r.precision = static_cast<double>(r.counts.tp) / static_cast<double>(r.counts.tp + r.counts.fp);
    else
        r.precision_defaulted = true;
    if (r.counts.tp + r.counts.fn > 0)
        r.recall = static_cast<double>(r.counts.tp) / static_cast<double>(r.counts.tp + r.counts.fn);
    else
        r.recall_defaulted = true;
    if (r.precision + r.recall > 0)
        r.f1 = 2.0 * r.precision * r.recall / (r.precision + r.recall);
    else
        r.f1_defaulted = true;
    RocCurve curve = roc_auc(scores, truths);
    r.roc_auc = curve.auc;
    r.roc_points = std::move(curve.points);
    return r;
}

struct VoteResult {
    int label = 0;
    double mean_probability = 0.0;
};

// Majority vote over per-model argmax labels; an exact tie is broken by the
// mean class-1 probability (>= 0.5 votes positive). The mean probability also
// serves as the ensemble ROC score regardless of the vote outcome.
inline VoteResult majority_vote(const std::vector<int>& labels, const std::vector<double>& probabilities) {
    if (labels.size() != probabilities.size() || labels.empty())
        throw std::invalid_argument("majority_vote: need matching non-empty labels and probabilities");
    long ones = 0;
    double sum = 0.0;
    for (std::size_t i = 0; i < labels.size(); ++i) {
        if (labels[i] != 0 && labels[i] != 1) throw std::invalid_argument("majority_vote: labels must be 0 or 1");
        if (!(probabilities[i] >= 0.0 && probabilities[i] <= 1.0))
            throw std::invalid_argument("majority_vote: probabilities must lie in [0,1]");
        ones += labels[i];
        sum += probabilities[i];
    }
    VoteResult v;
    v.mean_probability = sum / static_cast<double>(labels.size());
    long n = static_cast<long>(labels.size());
    if (2 * ones > n)
        v.label = 1;
    else if (2 * ones < n)
        v.label = 0;
    else
        v.label = v.mean_probability >= 0.5 ? 1 : 0;
    return v;
}

}  // namespace botkit
