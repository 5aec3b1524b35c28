#pragma once

// Clustering quality against ground truth: accuracy under the best
// cluster-to-class matching, normalized mutual information (arithmetic-mean
// normalization) and the adjusted Rand index.

#include "dgen/error.hpp"

#include <algorithm>
#include <cmath>
#include <limits>
#include <span>
#include <vector>

namespace dgen {

struct ContingencyTable {
    std::vector<std::vector<long>> counts;  ///< [pred cluster][true class]
    std::vector<long> pred_totals;
    std::vector<long> true_totals;
    long n = 0;

    ContingencyTable(std::span<const int> pred, std::span<const int> truth) {
        if (pred.size() != truth.size())
            throw ContractError("metrics: " + std::to_string(pred.size()) + " predictions for " +
                                std::to_string(truth.size()) + " labels");
        if (pred.empty()) throw ContractError("metrics: empty labeling");
        int rows = 0, cols = 0;
        for (std::size_t i = 0; i < pred.size(); ++i) {
            if (pred[i] < 0 || truth[i] < 0) throw ContractError("metrics: negative label");
            rows = std::max(rows, pred[i] + 1);
            cols = std::max(cols, truth[i] + 1);
        }
        counts.assign(static_cast<std::size_t>(rows), std::vector<long>(static_cast<std::size_t>(cols), 0));
        pred_totals.assign(static_cast<std::size_t>(rows), 0);
        true_totals.assign(static_cast<std::size_t>(cols), 0);
        for (std::size_t i = 0; i < pred.size(); ++i) {
            ++counts[pred[i]][truth[i]];
            ++pred_totals[pred[i]];
            ++true_totals[truth[i]];
        }
        n = static_cast<long>(pred.size());
    }
};

/// Maximum-weight perfect matching on a square weight matrix (Hungarian
/// method with potentials). Returns, for each row, its matched column.
inline std::vector<int> hungarian_max(const std::vector<std::vector<double>>& weight) {
    const int n = static_cast<int>(weight.size());
    const double inf = std::numeric_limits<double>::infinity();
    double top = 0.0;
    for (const auto& row : weight) for (double w : row) top = std::max(top, w);
    // Minimize top - weight; 1-based arrays with a sentinel column 0.
    std::vector<double> u(n + 1, 0.0), v(n + 1, 0.0);
    std::vector<int> match(n + 1, 0), way(n + 1, 0);
    for (int i = 1; i <= n; ++i) {
        match[0] = i;
        int j0 = 0;
        std::vector<double> minv(n + 1, inf);
        std::vector<bool> used(n + 1, false);
        do {
            used[j0] = true;
            int i0 = match[j0], j1 = 0;
            double delta = inf;
            for (int j = 1; j <= n; ++j) {
                if (used[j]) continue;
                double cur = (top - weight[i0 - 1][j - 1]) - u[i0] - v[j];
                if (cur < minv[j]) {
                    minv[j] = cur;
                    way[j] = j0;
                }
                if (minv[j] < delta) {
                    delta = minv[j];
                    j1 = j;
                }
            }
            for (int j = 0; j <= n; ++j) {
                if (used[j]) {
                    u[match[j]] += delta;
                    v[j] -= delta;
                } else {
                    minv[j] -= delta;
                }
            }
            j0 = j1;
        } while (match[j0] != 0);
        do {
            int j1 = way[j0];
            match[j0] = match[j1];
            j0 = j1;
        } while (j0);
    }
    std::vector<int> row_to_col(static_cast<std::size_t>(n), -1);
    for (int j = 1; j <= n; ++j)
        if (match[j] > 0) row_to_col[match[j] - 1] = j - 1;
    return row_to_col;
}

/// Fraction of nodes correctly labeled under the best one-to-one mapping of
/// predicted clusters onto true classes.
inline double accuracy(std::span<const int> pred, std::span<const int> truth) {
    ContingencyTable t(pred, truth);
    const std::size_t k = std::max(t.pred_totals.size(), t.true_totals.size());
    std::vector<std::vector<double>> w(k, std::vector<double>(k, 0.0));
    for (std::size_t i = 0; i < t.pred_totals.size(); ++i)
        for (std::size_t j = 0; j < t.true_totals.size(); ++j) w[i][j] = static_cast<double>(t.counts[i][j]);
    auto m = hungarian_max(w);
    double hit = 0.0;
    for (std::size_t i = 0; i < k; ++i) hit += w[i][static_cast<std::size_t>(m[i])];
    return hit / static_cast<double>(t.n);
}

namespace detail {

inline double entropy(const std::vector<long>& totals, double n) {
    double h = 0.0;
    for (long c : totals)
        if (c > 0) {
            double p = static_cast<double>(c) / n;
            h -= p * std::log(p);
        }
    return h;
}

inline double choose2(long x) { return 0.5 * static_cast<double>(x) * static_cast<double>(x - 1); }

/// Same partition up to relabeling.
inline bool same_partition(const ContingencyTable& t) {
    for (const auto& row : t.counts) {
        int nonzero = 0;
        for (long c : row) nonzero += c > 0;
        if (nonzero > 1) return false;
    }
    for (std::size_t j = 0; j < t.true_totals.size(); ++j) {
        int nonzero = 0;
        for (const auto& row : t.counts) nonzero += row[j] > 0;
        if (nonzero > 1) return false;
    }
    return true;
}

}  // namespace detail

/// I(pred; truth) / ((H(pred) + H(truth)) / 2).
inline double nmi(std::span<const int> pred, std::span<const int> truth) {
    ContingencyTable t(pred, truth);
    const double n = static_cast<double>(t.n);
    const double hp = detail::entropy(t.pred_totals, n);
    const double ht = detail::entropy(t.true_totals, n);
    if (hp + ht <= 0.0) return detail::same_partition(t) ? 1.0 : 0.0;
    double mi = 0.0;
    for (std::size_t i = 0; i < t.pred_totals.size(); ++i)
        for (std::size_t j = 0; j < t.true_totals.size(); ++j) {
            long c = t.counts[i][j];
            if (c == 0) continue;
            double pij = static_cast<double>(c) / n;
            mi += pij * std::log(pij * n * n /
                                 (static_cast<double>(t.pred_totals[i]) * static_cast<double>(t.true_totals[j])));
        }
    return std::clamp(mi / (0.5 * (hp + ht)), 0.0, 1.0);
}

/// Adjusted Rand index by pair counting.
inline double ari(std::span<const int> pred, std::span<const int> truth) {
    ContingencyTable t(pred, truth);
    double index = 0.0, a = 0.0, b = 0.0;
    for (const auto& row : t.counts)
        for (long c : row) index += detail::choose2(c);
    for (long c : t.pred_totals) a += detail::choose2(c);
    for (long c : t.true_totals) b += detail::choose2(c);
    const double pairs = detail::choose2(t.n);
    const double expected = pairs > 0.0 ? a * b / pairs : 0.0;
    const double max_index = 0.5 * (a + b);
    const double denom = max_index - expected;
    if (denom == 0.0) return detail::same_partition(t) ? 1.0 : 0.0;
    return (index - expected) / denom;
}

struct ClusteringScores {
    double acc = 0.0;
    double nmi = 0.0;
    double ari = 0.0;
};

inline ClusteringScores evaluate(std::span<const int> pred, std::span<const int> truth) {
    return {accuracy(pred, truth), nmi(pred, truth), ari(pred, truth)};
}

}  // namespace dgen
