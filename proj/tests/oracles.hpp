#pragma once

// Brute-force reference implementations used only by the tests. They work
// from definitions on dense/std containers and share no code path with the
// library routines they check.

#include "dgen/graph.hpp"
#include "dgen/matrix.hpp"

#include <algorithm>
#include <cmath>
#include <limits>
#include <map>
#include <numeric>
#include <random>
#include <set>
#include <vector>

namespace oracle {

using dgen::Matrix;

inline std::vector<std::vector<int>> dense_adj(const dgen::Topology& t) {
    const int n = t.num_nodes();
    std::vector<std::vector<int>> a(n, std::vector<int>(n, 0));
    for (const auto& e : t.edges()) a[e.u][e.v] = a[e.v][e.u] = 1;
    return a;
}

/// sim(i, j) by set intersection over a dense adjacency.
inline std::vector<std::vector<int>> snn_similarity(const dgen::Topology& t) {
    auto a = dense_adj(t);
    const int n = t.num_nodes();
    std::vector<std::vector<int>> s(n, std::vector<int>(n, 0));
    for (int i = 0; i < n; ++i)
        for (int j = 0; j < n; ++j) {
            if (!a[i][j]) continue;
            std::set<int> ni, nj;
            for (int k = 0; k < n; ++k) {
                if (a[i][k]) ni.insert(k);
                if (a[j][k]) nj.insert(k);
            }
            std::vector<int> both;
            std::set_intersection(ni.begin(), ni.end(), nj.begin(), nj.end(), std::back_inserter(both));
            s[i][j] = static_cast<int>(both.size());
        }
    return s;
}

inline std::vector<int> snn_nearest(const dgen::Topology& t) {
    auto a = dense_adj(t);
    auto s = snn_similarity(t);
    const int n = t.num_nodes();
    std::vector<int> nn(n);
    for (int i = 0; i < n; ++i) {
        int best = -1;
        for (int j = 0; j < n; ++j)
            if (a[i][j] && (best < 0 || s[i][j] > s[i][best])) best = j;
        nn[i] = best < 0 ? i : best;
    }
    return nn;
}

inline double leaky(double v) { return v > 0 ? v : 0.2 * v; }
inline double elu(double v) { return v > 0 ? v : std::exp(v) - 1.0; }

/// One attention head computed per node with explicit loops.
inline Matrix gat_head(const Matrix& h, const Matrix& w, const Matrix& a, const dgen::Topology& t, bool use_elu) {
    const int n = static_cast<int>(h.rows());
    const int hd = static_cast<int>(w.cols());
    Matrix wh = Matrix::Zero(n, hd);
    for (int i = 0; i < n; ++i)
        for (int c = 0; c < hd; ++c)
            for (int k = 0; k < h.cols(); ++k) wh(i, c) += h(i, k) * w(k, c);
    auto adj = dense_adj(t);
    Matrix out = Matrix::Zero(n, hd);
    for (int i = 0; i < n; ++i) {
        std::vector<int> hood{i};
        for (int j = 0; j < n; ++j)
            if (adj[i][j]) hood.push_back(j);
        std::vector<double> e;
        for (int j : hood) {
            double s = 0.0;
            for (int c = 0; c < hd; ++c) s += a(c, 0) * wh(i, c) + a(c, 1) * wh(j, c);
            e.push_back(std::exp(leaky(s)));
        }
        double z = std::accumulate(e.begin(), e.end(), 0.0);
        for (std::size_t k = 0; k < hood.size(); ++k)
            for (int c = 0; c < hd; ++c) out(i, c) += e[k] / z * wh(hood[k], c);
        if (use_elu)
            for (int c = 0; c < hd; ++c) out(i, c) = elu(out(i, c));
    }
    return out;
}

inline double sq_dist(const Matrix& a, int i, const Matrix& b, int j) {
    double s = 0.0;
    for (int k = 0; k < a.cols(); ++k) s += (a(i, k) - b(j, k)) * (a(i, k) - b(j, k));
    return s;
}

inline std::vector<int> nearest_centers(const Matrix& x, const Matrix& c) {
    std::vector<int> out(x.rows());
    for (int i = 0; i < x.rows(); ++i) {
        int best = 0;
        for (int j = 1; j < c.rows(); ++j)
            if (sq_dist(x, i, c, j) < sq_dist(x, i, c, best)) best = j;
        out[i] = best;
    }
    return out;
}

/// Lloyd from uniformly random distinct starting points, best of `restarts`.
inline double best_kmeans_inertia(const Matrix& x, int k, int restarts, unsigned seed) {
    std::mt19937 rng(seed);
    double best = std::numeric_limits<double>::infinity();
    const int n = static_cast<int>(x.rows());
    for (int r = 0; r < restarts; ++r) {
        std::vector<int> perm(n);
        std::iota(perm.begin(), perm.end(), 0);
        std::shuffle(perm.begin(), perm.end(), rng);
        Matrix c(k, x.cols());
        for (int j = 0; j < k; ++j) c.row(j) = x.row(perm[j]);
        for (int it = 0; it < 200; ++it) {
            auto a = nearest_centers(x, c);
            Matrix next = Matrix::Zero(k, x.cols());
            std::vector<int> cnt(k, 0);
            for (int i = 0; i < n; ++i) {
                next.row(a[i]) += x.row(i);
                ++cnt[a[i]];
            }
            for (int j = 0; j < k; ++j) next.row(j) = cnt[j] ? Matrix(next.row(j) / cnt[j]) : Matrix(c.row(j));
            c = next;
        }
        auto a = nearest_centers(x, c);
        double in = 0.0;
        for (int i = 0; i < n; ++i) in += sq_dist(x, i, c, a[i]);
        best = std::min(best, in);
    }
    return best;
}

/// Accuracy by trying every injective cluster-to-class map (small cases only).
inline double accuracy_exhaustive(const std::vector<int>& pred, const std::vector<int>& truth) {
    int kp = *std::max_element(pred.begin(), pred.end()) + 1;
    int kt = *std::max_element(truth.begin(), truth.end()) + 1;
    int k = std::max(kp, kt);
    std::vector<int> perm(k);
    std::iota(perm.begin(), perm.end(), 0);
    int best = 0;
    do {
        int hit = 0;
        for (std::size_t i = 0; i < pred.size(); ++i) hit += perm[pred[i]] == truth[i];
        best = std::max(best, hit);
    } while (std::next_permutation(perm.begin(), perm.end()));
    return static_cast<double>(best) / static_cast<double>(pred.size());
}

/// NMI from the entropy definitions, probabilities estimated by counting.
inline double nmi_direct(const std::vector<int>& x, const std::vector<int>& y) {
    const double n = static_cast<double>(x.size());
    std::map<int, double> px, py;
    std::map<std::pair<int, int>, double> pxy;
    for (std::size_t i = 0; i < x.size(); ++i) {
        px[x[i]] += 1.0 / n;
        py[y[i]] += 1.0 / n;
        pxy[{x[i], y[i]}] += 1.0 / n;
    }
    double hx = 0, hy = 0, hxy = 0;
    for (auto& [k, p] : px) hx -= p * std::log(p);
    for (auto& [k, p] : py) hy -= p * std::log(p);
    for (auto& [k, p] : pxy) hxy -= p * std::log(p);
    double mi = hx + hy - hxy;
    if (hx + hy == 0.0) return 1.0;
    return mi / ((hx + hy) / 2.0);
}

/// ARI by explicit enumeration of all pairs.
inline double ari_pairs(const std::vector<int>& x, const std::vector<int>& y) {
    const std::size_t n = x.size();
    double both = 0, in_x = 0, in_y = 0, pairs = 0;
    for (std::size_t i = 0; i < n; ++i)
        for (std::size_t j = i + 1; j < n; ++j) {
            bool sx = x[i] == x[j], sy = y[i] == y[j];
            both += sx && sy;
            in_x += sx;
            in_y += sy;
            pairs += 1;
        }
    double expected = in_x * in_y / pairs;
    double mx = (in_x + in_y) / 2.0;
    if (mx == expected) return x == y ? 1.0 : 0.0;
    return (both - expected) / (mx - expected);
}

inline double sigmoid(double v) { return 1.0 / (1.0 + std::exp(-v)); }

/// Weighted BCE by explicit loop over entries.
inline double weighted_bce(const Matrix& pred, const std::vector<std::vector<int>>& adj) {
    const int n = static_cast<int>(pred.rows());
    double ones = 0;
    for (int i = 0; i < n; ++i)
        for (int j = 0; j < n; ++j) ones += (i == j || adj[i][j]) ? 1 : 0;
    double w = (n * n - ones) / ones;
    double total = 0;
    for (int i = 0; i < n; ++i)
        for (int j = 0; j < n; ++j) {
            double p = std::min(std::max(pred(i, j), 1e-7), 1 - 1e-7);
            bool t = i == j || adj[i][j];
            total += t ? -w * std::log(p) : -std::log(1 - p);
        }
    return total / (n * n);
}

inline double kl(const Matrix& p, const Matrix& q) {
    double s = 0;
    for (int i = 0; i < p.rows(); ++i)
        for (int j = 0; j < p.cols(); ++j)
            if (p(i, j) > 0) s += p(i, j) * std::log(p(i, j) / q(i, j));
    return s;
}

/// Ceil(k*N) for a ratio given in tenths, in exact integer arithmetic.
inline int ceil_tenths(int tenths, int n) { return (tenths * n + 9) / 10; }

/// Indices sorted by (key asc, index asc), first `count`.
inline std::vector<int> smallest(const std::vector<double>& key, int count) {
    std::vector<std::pair<double, int>> v;
    for (std::size_t i = 0; i < key.size(); ++i) v.push_back({key[i], static_cast<int>(i)});
    std::sort(v.begin(), v.end());
    std::vector<int> out;
    for (int k = 0; k < count; ++k) out.push_back(v[k].second);
    return out;
}

inline std::vector<int> largest(const std::vector<double>& key, int count) {
    std::vector<std::pair<double, int>> v;
    for (std::size_t i = 0; i < key.size(); ++i) v.push_back({-key[i], static_cast<int>(i)});
    std::sort(v.begin(), v.end());
    std::vector<int> out;
    for (int k = 0; k < count; ++k) out.push_back(v[k].second);
    return out;
}

/// NCPool score from its definition: nearest center by exhaustive search, then
/// own and SNN-neighbor squared distances to it.
inline std::vector<double> ncpool_scores(const Matrix& h, const Matrix& centers, const std::vector<int>& nn) {
    std::vector<double> s(h.rows());
    auto near = nearest_centers(h, centers);
    for (int i = 0; i < h.rows(); ++i) s[i] = sq_dist(h, i, centers, near[i]) + sq_dist(h, nn[i], centers, near[i]);
    return s;
}

inline dgen::Topology random_graph(std::mt19937_64& rng, int n, double p) {
    std::bernoulli_distribution coin(p);
    std::vector<dgen::Edge> e;
    for (int i = 0; i < n; ++i)
        for (int j = i + 1; j < n; ++j)
            if (coin(rng)) e.push_back({i, j});
    return dgen::Topology(n, e);
}

inline Matrix random_matrix(std::mt19937_64& rng, int r, int c, double lo = -1, double hi = 1) {
    std::uniform_real_distribution<double> u(lo, hi);
    Matrix m(r, c);
    for (int i = 0; i < r; ++i)
        for (int j = 0; j < c; ++j) m(i, j) = u(rng);
    return m;
}

}  // namespace oracle
