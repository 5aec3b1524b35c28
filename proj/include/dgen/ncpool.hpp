#pragma once

// Neighbor-cluster pooling: nodes are scored by how close they and their
// shared-nearest-neighbor sit to the node's nearest K-means center, and the
// best-fitting ceil(k*N) nodes are kept. Also hosts the K-means engine and the
// projection-based top-k pooling baseline.

#include "dgen/graph.hpp"
#include "dgen/matrix.hpp"

#include <algorithm>
#include <cmath>
#include <cstdint>
#include <limits>
#include <numeric>
#include <random>
#include <vector>

namespace dgen {

struct KmeansOptions {
    int max_iter = 300;
    double tol = 1e-6;  ///< stop once no center moves farther than this
    int n_init = 10;    ///< independent seedings; the lowest-inertia run wins
};

struct KmeansModel {
    Matrix centers;                     ///< C x dim
    std::vector<int> assignments;       ///< nearest center per point
    double inertia = 0.0;               ///< sum of squared point-center distances
    std::vector<double> inertia_trace;  ///< per Lloyd iteration of the winning run
    int iterations = 0;
};

/// Nearest center per row of `points`; ties go to the lowest center index.
inline std::vector<int> kmeans_assign(const Matrix& points, const Matrix& centers,
                                      std::vector<double>* sq_dist = nullptr) {
    if (points.cols() != centers.cols())
        throw DimensionError("kmeans_assign: points " + shape_string(points) + " vs centers " + shape_string(centers));
    std::vector<int> out(static_cast<std::size_t>(points.rows()));
    if (sq_dist) sq_dist->assign(out.size(), 0.0);
    for (Eigen::Index i = 0; i < points.rows(); ++i) {
        double best = std::numeric_limits<double>::infinity();
        int arg = 0;
        for (Eigen::Index j = 0; j < centers.rows(); ++j) {
            double d = (points.row(i) - centers.row(j)).squaredNorm();
            if (d < best) {
                best = d;
                arg = static_cast<int>(j);
            }
        }
        out[static_cast<std::size_t>(i)] = arg;
        if (sq_dist) (*sq_dist)[static_cast<std::size_t>(i)] = best;
    }
    return out;
}

namespace detail {

inline Matrix kmeanspp_seed(const Matrix& points, int c, std::mt19937_64& rng) {
    const Eigen::Index n = points.rows();
    Matrix centers(c, points.cols());
    std::uniform_int_distribution<Eigen::Index> first(0, n - 1);
    centers.row(0) = points.row(first(rng));
    std::vector<double> d2(static_cast<std::size_t>(n));
    for (Eigen::Index i = 0; i < n; ++i) d2[i] = (points.row(i) - centers.row(0)).squaredNorm();
    for (int k = 1; k < c; ++k) {
        double total = std::accumulate(d2.begin(), d2.end(), 0.0);
        Eigen::Index pick = 0;
        if (total > 0.0) {
            std::uniform_real_distribution<double> u(0.0, total);
            double r = u(rng);
            double acc = 0.0;
            pick = n - 1;
            for (Eigen::Index i = 0; i < n; ++i) {
                acc += d2[i];
                if (r < acc && d2[i] > 0.0) {
                    pick = i;
                    break;
                }
            }
        } else {
            pick = first(rng);
        }
        centers.row(k) = points.row(pick);
        for (Eigen::Index i = 0; i < n; ++i) d2[i] = std::min(d2[i], (points.row(i) - centers.row(k)).squaredNorm());
    }
    return centers;
}

inline KmeansModel lloyd(const Matrix& points, Matrix centers, const KmeansOptions& opts) {
    KmeansModel m;
    const Eigen::Index n = points.rows();
    const Eigen::Index c = centers.rows();
    std::vector<double> d2;
    for (int it = 0; it < opts.max_iter; ++it) {
        m.assignments = kmeans_assign(points, centers, &d2);
        double inertia = std::accumulate(d2.begin(), d2.end(), 0.0);
        if (!m.inertia_trace.empty()) {
            double prev = m.inertia_trace.back();
            if (inertia > prev + 1e-9 * std::max(1.0, prev))
                throw NumericalError("kmeans: inertia increased from " + std::to_string(prev) + " to " +
                                     std::to_string(inertia));
        }
        m.inertia_trace.push_back(inertia);
        ++m.iterations;

        Matrix next = Matrix::Zero(c, points.cols());
        std::vector<int> count(static_cast<std::size_t>(c), 0);
        for (Eigen::Index i = 0; i < n; ++i) {
            next.row(m.assignments[i]) += points.row(i);
            ++count[m.assignments[i]];
        }
        for (Eigen::Index j = 0; j < c; ++j) {
            if (count[j] > 0) {
                next.row(j) /= count[j];
                continue;
            }
            // Empty cluster: move it onto the point farthest from its center.
            auto far = std::max_element(d2.begin(), d2.end()) - d2.begin();
            next.row(j) = points.row(far);
            d2[far] = -1.0;
        }
        double shift = 0.0;
        for (Eigen::Index j = 0; j < c; ++j) shift = std::max(shift, (next.row(j) - centers.row(j)).norm());
        centers = std::move(next);
        if (shift < opts.tol) break;
    }
    m.assignments = kmeans_assign(points, centers, &d2);
    m.inertia = std::accumulate(d2.begin(), d2.end(), 0.0);
    m.centers = std::move(centers);
    return m;
}

}  // namespace detail

/// k-means++ seeding followed by Lloyd iterations, repeated `n_init` times.
/// Deterministic for a fixed seed.
inline KmeansModel kmeans(const Matrix& points, int c, std::uint64_t seed, const KmeansOptions& opts = {}) {
    require(c >= 1, "kmeans: need at least one cluster");
    require(points.rows() >= c, "kmeans: " + std::to_string(c) + " clusters for " +
                                    std::to_string(points.rows()) + " points");
    require(opts.n_init >= 1 && opts.max_iter >= 1, "kmeans: n_init and max_iter must be positive");
    std::mt19937_64 rng(seed);
    KmeansModel best;
    bool have = false;
    for (int r = 0; r < opts.n_init; ++r) {
        KmeansModel m = detail::lloyd(points, detail::kmeanspp_seed(points, c, rng), opts);
        if (!have || m.inertia < best.inertia) {
            best = std::move(m);
            have = true;
        }
    }
    return best;
}

/// Ceil(k * n), tolerant of binary rounding in k * n (0.7 * 10 -> 7, not 8).
inline int selection_count(double ratio, int n) {
    double x = ratio * static_cast<double>(n);
    double r = std::round(x);
    if (std::abs(x - r) <= 1e-9 * std::max(1.0, std::abs(x))) return static_cast<int>(r);
    return static_cast<int>(std::ceil(x));
}

struct PooledGraph {
    std::vector<int> selected;  ///< original node ids, in selection order
    Matrix features;            ///< gated rows of the input embedding
    Topology adjacency;         ///< induced on `selected`
    std::vector<double> scores; ///< raw score per selected node
    std::vector<double> gates;  ///< multiplier applied to each selected row

    int size() const { return static_cast<int>(selected.size()); }
};

/// Per-node score ||h_i - c_i||^2 + ||h_nn(i) - c_i||^2 with c_i the center
/// nearest to h_i and nn(i) the SNN-nearest neighbor of i.
inline std::vector<double> node_scores(const Matrix& h, const KmeansModel& km, const SnnTable& snn) {
    require(static_cast<Eigen::Index>(snn.nearest_neighbor.size()) == h.rows(),
            "node_scores: SNN table covers " + std::to_string(snn.nearest_neighbor.size()) + " nodes, embedding has " +
                std::to_string(h.rows()));
    std::vector<int> nearest = kmeans_assign(h, km.centers);
    std::vector<double> s(static_cast<std::size_t>(h.rows()));
    for (Eigen::Index i = 0; i < h.rows(); ++i) {
        auto c = km.centers.row(nearest[i]);
        int nn = snn.nearest_neighbor[static_cast<std::size_t>(i)];
        s[i] = (h.row(i) - c).squaredNorm() + (h.row(nn) - c).squaredNorm();
    }
    return s;
}

namespace detail {

/// Indices of the `count` best entries under `better`, ties by index.
template <class Better>
std::vector<int> rank_select(const std::vector<double>& key, int count, Better better) {
    std::vector<int> order(key.size());
    std::iota(order.begin(), order.end(), 0);
    std::stable_sort(order.begin(), order.end(), [&](int a, int b) { return better(key[a], key[b]); });
    order.resize(static_cast<std::size_t>(count));
    return order;
}

inline void check_ratio(double ratio, int n, const char* op) {
    require(ratio > 0.0 && ratio <= 1.0, std::string(op) + ": ratio must lie in (0, 1]");
    require(selection_count(ratio, n) > 0, std::string(op) + ": ceil(k*N) is zero");
}

}  // namespace detail

/// Builds the pooled graph from an already chosen, ordered selection.
inline PooledGraph gather_pooled(const Matrix& h, const Topology& topology, std::vector<int> selected,
                                 std::vector<double> scores, std::vector<double> gates) {
    PooledGraph p;
    p.features.resize(static_cast<Eigen::Index>(selected.size()), h.cols());
    for (std::size_t r = 0; r < selected.size(); ++r)
        p.features.row(static_cast<Eigen::Index>(r)) = h.row(selected[r]) * gates[r];
    p.adjacency = topology.induced(selected);
    p.selected = std::move(selected);
    p.scores = std::move(scores);
    p.gates = std::move(gates);
    return p;
}

/// Keeps the ceil(k*N) nodes with the smallest score, ordered by ascending
/// score then node id, gating each kept row by 1 / (1 + score).
inline PooledGraph ncpool_from_scores(const Matrix& h, const Topology& topology, double ratio,
                                      const std::vector<double>& scores) {
    const int n = static_cast<int>(h.rows());
    detail::check_ratio(ratio, n, "ncpool");
    require(static_cast<int>(scores.size()) == n && topology.num_nodes() == n, "ncpool: size mismatch");
    auto idx = detail::rank_select(scores, selection_count(ratio, n), std::less<double>{});
    std::vector<double> s, a;
    for (int i : idx) {
        s.push_back(scores[i]);
        a.push_back(1.0 / (1.0 + scores[i]));
    }
    return gather_pooled(h, topology, std::move(idx), std::move(s), std::move(a));
}

inline PooledGraph ncpool(const Matrix& h, const AttributedGraph& g, double ratio, const KmeansModel& km,
                          const SnnTable& snn) {
    detail::check_ratio(ratio, static_cast<int>(h.rows()), "ncpool");
    return ncpool_from_scores(h, g.topology, ratio, node_scores(h, km, snn));
}

/// Scalar projections y = h p / ||p||.
inline std::vector<double> topk_projection(const Matrix& h, const Vector& p) {
    if (p.size() != h.cols())
        throw DimensionError("topk_pool: projection of length " + std::to_string(p.size()) + " for embedding " +
                             shape_string(h));
    double norm = p.norm();
    require(norm > 0.0, "topk_pool: projection vector has zero norm");
    Vector y = h * p / norm;
    return {y.data(), y.data() + y.size()};
}

/// Projection-based top-k pooling: keeps the ceil(k*N) largest projections,
/// gating each kept row by tanh(y).
inline PooledGraph topk_pool_baseline(const Matrix& h, const AttributedGraph& g, double ratio, const Vector& p) {
    const int n = static_cast<int>(h.rows());
    detail::check_ratio(ratio, n, "topk_pool");
    auto y = topk_projection(h, p);
    auto idx = detail::rank_select(y, selection_count(ratio, n), std::greater<double>{});
    std::vector<double> s, a;
    for (int i : idx) {
        s.push_back(y[i]);
        a.push_back(std::tanh(y[i]));
    }
    return gather_pooled(h, g.topology, std::move(idx), std::move(s), std::move(a));
}

}  // namespace dgen
