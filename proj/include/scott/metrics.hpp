#pragma once

#include "scott/core.hpp"

#include <algorithm>
#include <numeric>
#include <utility>
#include <vector>

namespace scott {

struct ScoredPredictions {
    std::vector<double> scores; // probability of the positive class
    std::vector<int> truths;    // 0 / 1

    void validate() const {
        if (scores.size() != truths.size()) throw ShapeError("scores and truths differ in length");
        if (scores.empty()) throw ConfigError("no predictions to score");
        for (double s : scores)
            if (!(s >= 0.0 && s <= 1.0)) throw ConfigError("scores must lie in [0, 1]");
        for (int t : truths)
            if (t != 0 && t != 1) throw ConfigError("truths must be binary");
    }
    std::size_t positives() const { return static_cast<std::size_t>(std::count(truths.begin(), truths.end(), 1)); }
};

inline double accuracy(const std::vector<int>& predicted, const std::vector<int>& truths) {
    if (predicted.size() != truths.size()) throw ShapeError("predictions and truths differ in length");
    if (predicted.empty()) throw ConfigError("accuracy of an empty set is undefined");
    std::size_t hit = 0;
    for (std::size_t i = 0; i < predicted.size(); ++i) hit += predicted[i] == truths[i];
    return static_cast<double>(hit) / static_cast<double>(predicted.size());
}

/// Mann-Whitney AUROC: P(score(pos) > score(neg)) with ties worth one half.
inline double auroc(const ScoredPredictions& sp) {
    sp.validate();
    const std::size_t n = sp.scores.size();
    const std::size_t pos = sp.positives();
    const std::size_t neg = n - pos;
    if (pos == 0 || neg == 0) throw ConfigError("AUROC needs both classes present");
    std::vector<std::size_t> order(n);
    std::iota(order.begin(), order.end(), 0);
    std::sort(order.begin(), order.end(), [&](std::size_t a, std::size_t b) { return sp.scores[a] < sp.scores[b]; });
    // Sum of (1-based, tie-averaged) ranks of positives, kept in half units
    // so that everything stays integral.
    std::size_t rank_sum_x2 = 0;
    for (std::size_t i = 0; i < n;) {
        std::size_t j = i;
        while (j < n && sp.scores[order[j]] == sp.scores[order[i]]) ++j;
        const std::size_t avg_rank_x2 = (i + 1) + j; // (i+1 + j) / 2 in half units
        for (std::size_t k = i; k < j; ++k)
            if (sp.truths[order[k]] == 1) rank_sum_x2 += avg_rank_x2;
        i = j;
    }
    const double u = (static_cast<double>(rank_sum_x2) - static_cast<double>(pos * (pos + 1))) / 2.0;
    return u / (static_cast<double>(pos) * static_cast<double>(neg));
}

/// Average precision: sum over distinct score thresholds (descending) of
/// (recall gain) * (precision at that threshold). No interpolation.
inline double auprc(const ScoredPredictions& sp) {
    sp.validate();
    const std::size_t n = sp.scores.size();
    const std::size_t pos = sp.positives();
    if (pos == 0) throw ConfigError("AUPRC needs at least one positive");
    std::vector<std::size_t> order(n);
    std::iota(order.begin(), order.end(), 0);
    std::sort(order.begin(), order.end(), [&](std::size_t a, std::size_t b) { return sp.scores[a] > sp.scores[b]; });
    const auto P = static_cast<double>(pos);
    double ap = 0.0;
    std::size_t tp = 0, fp = 0;
    for (std::size_t i = 0; i < n;) {
        std::size_t j = i;
        std::size_t dtp = 0;
        while (j < n && sp.scores[order[j]] == sp.scores[order[i]]) {
            if (sp.truths[order[j]] == 1) ++dtp;
            else ++fp;
            ++j;
        }
        tp += dtp;
        if (dtp > 0)
            ap += (static_cast<double>(dtp) / P) * (static_cast<double>(tp) / static_cast<double>(tp + fp));
        i = j;
    }
    return ap;
}

struct PrecisionRecall {
    double precision = 1.0;
    double recall = 0.0;
};

/// Positive prediction means score >= threshold. Precision is 1 when nothing
/// is predicted positive.
inline PrecisionRecall precision_recall(const ScoredPredictions& sp, double threshold) {
    sp.validate();
    const std::size_t pos = sp.positives();
    if (pos == 0) throw ConfigError("recall needs at least one positive");
    std::size_t tp = 0, fp = 0;
    for (std::size_t i = 0; i < sp.scores.size(); ++i) {
        if (sp.scores[i] >= threshold) {
            if (sp.truths[i] == 1) ++tp;
            else ++fp;
        }
    }
    PrecisionRecall pr;
    pr.precision = tp + fp == 0 ? 1.0 : static_cast<double>(tp) / static_cast<double>(tp + fp);
    pr.recall = static_cast<double>(tp) / static_cast<double>(pos);
    return pr;
}

} // namespace scott
