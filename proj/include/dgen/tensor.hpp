#pragma once

// Minimal reverse-mode differentiation over dense double matrices.
//
// A Tensor is a handle to a node holding a value and an optional gradient.
// Leaves (parameters and constants) live outside any tape; every operation
// records its output on a Tape together with a closure that pushes the output
// adjoint back to its inputs. Tape::backward replays those closures in exact
// reverse order of execution.

#include "dgen/error.hpp"
#include "dgen/matrix.hpp"

#include <algorithm>
#include <cmath>
#include <cstddef>
#include <filesystem>
#include <fstream>
#include <functional>
#include <iomanip>
#include <limits>
#include <memory>
#include <span>
#include <sstream>
#include <string>
#include <string_view>
#include <unordered_map>
#include <utility>
#include <vector>

namespace dgen::ad {

class Tape;

struct Node {
    Matrix value;
    Matrix grad;  ///< empty until an adjoint arrives
    bool requires_grad = false;
    std::string op = "leaf";
    const Tape* owner = nullptr;  ///< null for leaves
    std::function<void(const Matrix&)> backward;

    void accumulate(const Matrix& g) {
        if (g.rows() != value.rows() || g.cols() != value.cols())
            throw DimensionError("gradient " + shape_string(g) + " does not match value " +
                                 shape_string(value) + " in op " + op);
        if (grad.size() == 0) grad = g;
        else grad += g;
    }
};

class Tensor {
public:
    Tensor() = default;
    explicit Tensor(std::shared_ptr<Node> node) : node_(std::move(node)) {}

    /// Trainable leaf.
    static Tensor parameter(Matrix value) { return leaf(std::move(value), true); }
    /// Leaf that never receives gradients.
    static Tensor constant(Matrix value) { return leaf(std::move(value), false); }

    static Tensor leaf(Matrix value, bool requires_grad) {
        auto n = std::make_shared<Node>();
        n->value = std::move(value);
        n->requires_grad = requires_grad;
        return Tensor(std::move(n));
    }

    const Matrix& value() const { return node_->value; }
    Matrix& mutable_value() { return node_->value; }
    const Matrix& grad() const { return node_->grad; }
    bool has_grad() const { return node_->grad.size() != 0 || node_->value.size() == 0; }
    void zero_grad() { node_->grad = Matrix(); }
    bool requires_grad() const { return node_->requires_grad; }
    Eigen::Index rows() const { return node_->value.rows(); }
    Eigen::Index cols() const { return node_->value.cols(); }
    const std::string& op() const { return node_->op; }
    double item() const {
        if (rows() != 1 || cols() != 1) throw ContractError("item() on non-scalar " + shape_string(value()));
        return node_->value(0, 0);
    }

    Node* node() const { return node_.get(); }
    explicit operator bool() const { return static_cast<bool>(node_); }

    void accumulate_grad(const Matrix& g) const {
        if (node_->requires_grad) node_->accumulate(g);
    }

private:
    std::shared_ptr<Node> node_;
};

/// Ordered record of executed operations for one training context.
class Tape {
public:
    Tape() = default;
    Tape(const Tape&) = delete;
    Tape& operator=(const Tape&) = delete;

    /// Records an operation output. `backward` receives the output adjoint and
    /// must accumulate into whichever inputs require gradients. It is dropped
    /// when no input requires a gradient.
    Tensor record(Matrix value, std::string op, std::initializer_list<Tensor> inputs,
                  std::function<void(const Matrix&)> backward) {
        bool needs = false;
        for (const auto& t : inputs) needs = needs || t.requires_grad();
        return record_impl(std::move(value), std::move(op), needs, std::move(backward));
    }

    Tensor record(Matrix value, std::string op, std::span<const Tensor> inputs,
                  std::function<void(const Matrix&)> backward) {
        bool needs = false;
        for (const auto& t : inputs) needs = needs || t.requires_grad();
        return record_impl(std::move(value), std::move(op), needs, std::move(backward));
    }

    /// Propagates d(loss)/d(.) to every requires_grad leaf reachable from loss.
    /// Leaf gradients accumulate across calls; intermediate adjoints are reset.
    void backward(const Tensor& loss) {
        if (!loss) throw ContractError("backward: null loss");
        if (loss.rows() != 1 || loss.cols() != 1)
            throw ContractError("backward: loss must be 1x1, got " + shape_string(loss.value()));
        if (loss.node()->owner != this) throw ContractError("backward: loss was not produced on this tape");
        for (auto& n : nodes_) n->grad = Matrix();
        visited_.clear();
        if (!loss.requires_grad()) return;
        loss.node()->grad = Matrix::Ones(1, 1);
        for (std::size_t k = nodes_.size(); k-- > 0;) {
            Node& n = *nodes_[k];
            if (!n.backward || n.grad.size() == 0) continue;
            visited_.push_back(k);
            n.backward(n.grad);
        }
    }

    void reset() {
        nodes_.clear();
        visited_.clear();
    }

    std::size_t size() const noexcept { return nodes_.size(); }
    std::string_view op_at(std::size_t k) const { return nodes_.at(k)->op; }
    /// Tape positions visited by the last backward pass, in visit order.
    const std::vector<std::size_t>& last_visit_order() const noexcept { return visited_; }

private:
    Tensor record_impl(Matrix value, std::string op, bool needs, std::function<void(const Matrix&)> backward) {
        auto n = std::make_shared<Node>();
        n->value = std::move(value);
        n->op = std::move(op);
        n->owner = this;
        n->requires_grad = needs;
        if (needs) n->backward = std::move(backward);
        nodes_.push_back(n);
        return Tensor(std::move(n));
    }

    std::vector<std::shared_ptr<Node>> nodes_;
    std::vector<std::size_t> visited_;
};

/// Names of every differentiable primitive below. The gradient-check suite
/// asserts it covers each entry.
inline const std::vector<std::string_view>& primitive_names() {
    static const std::vector<std::string_view> names = {
        "matmul",      "add",         "sub",        "elementwise_mul", "scale",
        "add_scalar",  "concat_cols", "exp",        "log",             "leaky_relu",
        "elu",         "sigmoid",     "tanh",       "reciprocal",      "clamp_min",
        "softmax_over_segments",      "segment_sum", "gather_rows",    "transpose",
        "sum",         "frobenius_sq", "pairwise_sq_dist", "row_normalize", "log_softmax_rows",
        "bce_with_logits"};
    return names;
}

namespace detail {

enum class Broadcast { same, row, col };

inline Broadcast broadcast_kind(const Matrix& a, const Matrix& b, std::string_view op) {
    if (a.rows() == b.rows() && a.cols() == b.cols()) return Broadcast::same;
    if (b.rows() == 1 && b.cols() == a.cols()) return Broadcast::row;
    if (b.cols() == 1 && b.rows() == a.rows()) return Broadcast::col;
    throw DimensionError(std::string(op) + ": incompatible shapes " + shape_string(a) + " and " +
                         shape_string(b));
}

inline Matrix expand(const Matrix& b, Broadcast kind, Eigen::Index rows, Eigen::Index cols) {
    switch (kind) {
        case Broadcast::row: return b.replicate(rows, 1);
        case Broadcast::col: return b.replicate(1, cols);
        default: return b;
    }
}

inline Matrix reduce(const Matrix& g, Broadcast kind) {
    switch (kind) {
        case Broadcast::row: return g.colwise().sum();
        case Broadcast::col: return g.rowwise().sum();
        default: return g;
    }
}

inline void check_segments(Eigen::Index rows, std::span<const int> segment, int num_segments,
                           std::string_view op) {
    if (static_cast<Eigen::Index>(segment.size()) != rows)
        throw DimensionError(std::string(op) + ": " + std::to_string(segment.size()) +
                             " segment ids for " + std::to_string(rows) + " rows");
    for (int s : segment)
        if (s < 0 || s >= num_segments)
            throw ContractError(std::string(op) + ": segment id " + std::to_string(s) + " out of range");
}

template <class F, class D>
Tensor unary(Tape& tape, const Tensor& x, std::string op, F f, D df) {
    Matrix y = x.value().unaryExpr(f);
    return tape.record(y, std::move(op), {x}, [x, y, df](const Matrix& g) {
        Matrix d(g.rows(), g.cols());
        for (Eigen::Index i = 0; i < g.rows(); ++i)
            for (Eigen::Index j = 0; j < g.cols(); ++j) d(i, j) = g(i, j) * df(x.value()(i, j), y(i, j));
        x.accumulate_grad(d);
    });
}

}  // namespace detail

inline Tensor matmul(Tape& tape, const Tensor& a, const Tensor& b) {
    if (a.cols() != b.rows())
        throw DimensionError("matmul: incompatible shapes " + shape_string(a.value()) + " and " +
                             shape_string(b.value()));
    Matrix y = a.value() * b.value();
    return tape.record(std::move(y), "matmul", {a, b}, [a, b](const Matrix& g) {
        if (a.requires_grad()) a.accumulate_grad(g * b.value().transpose());
        if (b.requires_grad()) b.accumulate_grad(a.value().transpose() * g);
    });
}

/// a + b, where b may be a same-shape matrix, a row vector or a column vector.
inline Tensor add(Tape& tape, const Tensor& a, const Tensor& b) {
    auto kind = detail::broadcast_kind(a.value(), b.value(), "add");
    Matrix y = a.value() + detail::expand(b.value(), kind, a.rows(), a.cols());
    return tape.record(std::move(y), "add", {a, b}, [a, b, kind](const Matrix& g) {
        a.accumulate_grad(g);
        if (b.requires_grad()) b.accumulate_grad(detail::reduce(g, kind));
    });
}

inline Tensor sub(Tape& tape, const Tensor& a, const Tensor& b) {
    auto kind = detail::broadcast_kind(a.value(), b.value(), "sub");
    Matrix y = a.value() - detail::expand(b.value(), kind, a.rows(), a.cols());
    return tape.record(std::move(y), "sub", {a, b}, [a, b, kind](const Matrix& g) {
        a.accumulate_grad(g);
        if (b.requires_grad()) b.accumulate_grad(-detail::reduce(g, kind));
    });
}

/// Hadamard product with the same broadcasting rules as add.
inline Tensor elementwise_mul(Tape& tape, const Tensor& a, const Tensor& b) {
    auto kind = detail::broadcast_kind(a.value(), b.value(), "elementwise_mul");
    auto times_b = [kind, b](const Matrix& m) -> Matrix {
        switch (kind) {
            case detail::Broadcast::row: return m.array().rowwise() * b.value().row(0).array();
            case detail::Broadcast::col: return m.array().colwise() * b.value().col(0).array();
            default: return m.cwiseProduct(b.value());
        }
    };
    Matrix y = times_b(a.value());
    return tape.record(std::move(y), "elementwise_mul", {a, b}, [a, b, kind, times_b](const Matrix& g) {
        if (a.requires_grad()) a.accumulate_grad(times_b(g));
        if (b.requires_grad()) b.accumulate_grad(detail::reduce(g.cwiseProduct(a.value()), kind));
    });
}

inline Tensor scale(Tape& tape, const Tensor& a, double s) {
    return tape.record(a.value() * s, "scale", {a}, [a, s](const Matrix& g) { a.accumulate_grad(g * s); });
}

inline Tensor add_scalar(Tape& tape, const Tensor& a, double s) {
    Matrix y = a.value().array() + s;
    return tape.record(std::move(y), "add_scalar", {a}, [a](const Matrix& g) { a.accumulate_grad(g); });
}

inline Tensor concat_cols(Tape& tape, std::span<const Tensor> parts) {
    if (parts.empty()) throw ContractError("concat_cols: no inputs");
    Eigen::Index rows = parts.front().rows();
    Eigen::Index cols = 0;
    for (const auto& p : parts) {
        if (p.rows() != rows)
            throw DimensionError("concat_cols: incompatible shapes " + shape_string(parts.front().value()) +
                                 " and " + shape_string(p.value()));
        cols += p.cols();
    }
    Matrix y(rows, cols);
    Eigen::Index at = 0;
    for (const auto& p : parts) {
        y.middleCols(at, p.cols()) = p.value();
        at += p.cols();
    }
    std::vector<Tensor> inputs(parts.begin(), parts.end());
    return tape.record(std::move(y), "concat_cols", parts, [inputs](const Matrix& g) {
        Eigen::Index at = 0;
        for (const auto& p : inputs) {
            if (p.requires_grad()) p.accumulate_grad(g.middleCols(at, p.cols()));
            at += p.cols();
        }
    });
}

inline Tensor concat_cols(Tape& tape, std::initializer_list<Tensor> parts) {
    return concat_cols(tape, std::span<const Tensor>(parts.begin(), parts.size()));
}

inline Tensor exp(Tape& tape, const Tensor& x) {
    return detail::unary(tape, x, "exp", [](double v) { return std::exp(v); },
                         [](double, double y) { return y; });
}

inline Tensor log(Tape& tape, const Tensor& x) {
    if ((x.value().array() <= 0.0).any()) {
        throw DomainError("log: non-positive input (min " + std::to_string(x.value().minCoeff()) + ")");
    }
    return detail::unary(tape, x, "log", [](double v) { return std::log(v); },
                         [](double v, double) { return 1.0 / v; });
}

inline constexpr double kLeakySlope = 0.2;

inline Tensor leaky_relu(Tape& tape, const Tensor& x, double slope = kLeakySlope) {
    return detail::unary(
        tape, x, "leaky_relu", [slope](double v) { return v > 0.0 ? v : slope * v; },
        [slope](double v, double) { return v > 0.0 ? 1.0 : slope; });
}

/// Exponential linear unit, alpha = 1.
inline Tensor elu(Tape& tape, const Tensor& x) {
    return detail::unary(
        tape, x, "elu", [](double v) { return v > 0.0 ? v : std::expm1(v); },
        [](double v, double y) { return v > 0.0 ? 1.0 : y + 1.0; });
}

inline double sigmoid_value(double v) {
    if (v >= 0.0) return 1.0 / (1.0 + std::exp(-v));
    double e = std::exp(v);
    return e / (1.0 + e);
}

inline Tensor sigmoid(Tape& tape, const Tensor& x) {
    return detail::unary(tape, x, "sigmoid", sigmoid_value, [](double, double y) { return y * (1.0 - y); });
}

inline Tensor tanh(Tape& tape, const Tensor& x) {
    return detail::unary(tape, x, "tanh", [](double v) { return std::tanh(v); },
                         [](double, double y) { return 1.0 - y * y; });
}

inline Tensor reciprocal(Tape& tape, const Tensor& x) {
    if ((x.value().array() == 0.0).any()) throw DomainError("reciprocal: zero input");
    return detail::unary(tape, x, "reciprocal", [](double v) { return 1.0 / v; },
                         [](double, double y) { return -y * y; });
}

/// max(x, floor); entries at or below the floor receive no gradient.
inline Tensor clamp_min(Tape& tape, const Tensor& x, double floor) {
    return detail::unary(
        tape, x, "clamp_min", [floor](double v) { return std::max(v, floor); },
        [floor](double v, double) { return v > floor ? 1.0 : 0.0; });
}

/// Softmax over groups of rows: for each column, rows sharing a segment id are
/// normalized together.
inline Tensor softmax_over_segments(Tape& tape, const Tensor& x, std::span<const int> segment, int num_segments) {
    detail::check_segments(x.rows(), segment, num_segments, "softmax_over_segments");
    const Matrix& v = x.value();
    Matrix seg_max = Matrix::Constant(num_segments, v.cols(), -std::numeric_limits<double>::infinity());
    for (Eigen::Index r = 0; r < v.rows(); ++r) seg_max.row(segment[r]) = seg_max.row(segment[r]).cwiseMax(v.row(r));
    Matrix y(v.rows(), v.cols());
    Matrix seg_sum = Matrix::Zero(num_segments, v.cols());
    for (Eigen::Index r = 0; r < v.rows(); ++r) {
        y.row(r) = (v.row(r) - seg_max.row(segment[r])).array().exp().matrix();
        seg_sum.row(segment[r]) += y.row(r);
    }
    for (Eigen::Index r = 0; r < v.rows(); ++r) y.row(r) = y.row(r).cwiseQuotient(seg_sum.row(segment[r]));
    std::vector<int> seg(segment.begin(), segment.end());
    return tape.record(y, "softmax_over_segments", {x}, [x, y, seg, num_segments](const Matrix& g) {
        Matrix dot = Matrix::Zero(num_segments, y.cols());
        for (std::size_t r = 0; r < seg.size(); ++r)
            dot.row(seg[r]) += g.row(static_cast<Eigen::Index>(r)).cwiseProduct(y.row(static_cast<Eigen::Index>(r)));
        Matrix d(y.rows(), y.cols());
        for (std::size_t r = 0; r < seg.size(); ++r) {
            auto ri = static_cast<Eigen::Index>(r);
            d.row(ri) = y.row(ri).cwiseProduct(g.row(ri) - dot.row(seg[r]));
        }
        x.accumulate_grad(d);
    });
}

/// Sums rows sharing a segment id into row `segment` of the output.
inline Tensor segment_sum(Tape& tape, const Tensor& x, std::span<const int> segment, int num_segments) {
    detail::check_segments(x.rows(), segment, num_segments, "segment_sum");
    Matrix y = Matrix::Zero(num_segments, x.cols());
    for (Eigen::Index r = 0; r < x.rows(); ++r) y.row(segment[r]) += x.value().row(r);
    std::vector<int> seg(segment.begin(), segment.end());
    return tape.record(std::move(y), "segment_sum", {x}, [x, seg](const Matrix& g) {
        Matrix d(static_cast<Eigen::Index>(seg.size()), g.cols());
        for (std::size_t r = 0; r < seg.size(); ++r) d.row(static_cast<Eigen::Index>(r)) = g.row(seg[r]);
        x.accumulate_grad(d);
    });
}

inline Tensor gather_rows(Tape& tape, const Tensor& x, std::span<const int> index) {
    Matrix y(static_cast<Eigen::Index>(index.size()), x.cols());
    for (std::size_t r = 0; r < index.size(); ++r) {
        if (index[r] < 0 || index[r] >= x.rows())
            throw ContractError("gather_rows: index " + std::to_string(index[r]) + " out of range for " +
                                shape_string(x.value()));
        y.row(static_cast<Eigen::Index>(r)) = x.value().row(index[r]);
    }
    std::vector<int> idx(index.begin(), index.end());
    return tape.record(std::move(y), "gather_rows", {x}, [x, idx](const Matrix& g) {
        Matrix d = Matrix::Zero(x.rows(), x.cols());
        for (std::size_t r = 0; r < idx.size(); ++r) d.row(idx[r]) += g.row(static_cast<Eigen::Index>(r));
        x.accumulate_grad(d);
    });
}

inline Tensor transpose(Tape& tape, const Tensor& x) {
    Matrix y = x.value().transpose();
    return tape.record(std::move(y), "transpose", {x}, [x](const Matrix& g) {
        x.accumulate_grad(g.transpose());
    });
}

inline Tensor sum(Tape& tape, const Tensor& x) {
    Matrix y = Matrix::Constant(1, 1, x.value().sum());
    return tape.record(std::move(y), "sum", {x}, [x](const Matrix& g) {
        x.accumulate_grad(Matrix::Constant(x.rows(), x.cols(), g(0, 0)));
    });
}

inline Tensor frobenius_sq(Tape& tape, const Tensor& x) {
    Matrix y = Matrix::Constant(1, 1, x.value().squaredNorm());
    return tape.record(std::move(y), "frobenius_sq", {x}, [x](const Matrix& g) {
        x.accumulate_grad(x.value() * (2.0 * g(0, 0)));
    });
}

/// out(i, j) = ||a_i - b_j||^2 for rows a_i of a and b_j of b.
inline Tensor pairwise_sq_dist(Tape& tape, const Tensor& a, const Tensor& b) {
    if (a.cols() != b.cols())
        throw DimensionError("pairwise_sq_dist: incompatible shapes " + shape_string(a.value()) + " and " +
                             shape_string(b.value()));
    const Matrix& av = a.value();
    const Matrix& bv = b.value();
    Matrix y(av.rows(), bv.rows());
    for (Eigen::Index i = 0; i < av.rows(); ++i)
        for (Eigen::Index j = 0; j < bv.rows(); ++j) y(i, j) = (av.row(i) - bv.row(j)).squaredNorm();
    return tape.record(std::move(y), "pairwise_sq_dist", {a, b}, [a, b](const Matrix& g) {
        if (a.requires_grad()) {
            Matrix d = 2.0 * (g.rowwise().sum().asDiagonal() * a.value() - g * b.value());
            a.accumulate_grad(d);
        }
        if (b.requires_grad()) {
            Matrix d = 2.0 * (g.colwise().sum().transpose().asDiagonal() * b.value() - g.transpose() * a.value());
            b.accumulate_grad(d);
        }
    });
}

/// Divides every row by its sum.
inline Tensor row_normalize(Tape& tape, const Tensor& x) {
    Vector s = x.value().rowwise().sum();
    if ((s.array() == 0.0).any()) throw DomainError("row_normalize: zero row sum");
    Matrix y = s.cwiseInverse().asDiagonal() * x.value();
    return tape.record(y, "row_normalize", {x}, [x, y, s](const Matrix& g) {
        Vector dot = g.cwiseProduct(y).rowwise().sum();
        Matrix d = s.cwiseInverse().asDiagonal() * (g - dot.replicate(1, g.cols()));
        x.accumulate_grad(d);
    });
}

inline Tensor log_softmax_rows(Tape& tape, const Tensor& x) {
    const Matrix& v = x.value();
    Vector mx = v.rowwise().maxCoeff();
    Matrix shifted = v - mx.replicate(1, v.cols());
    Vector lse = shifted.array().exp().rowwise().sum().log().matrix();
    Matrix y = shifted - lse.replicate(1, v.cols());
    return tape.record(y, "log_softmax_rows", {x}, [x, y](const Matrix& g) {
        Matrix p = y.array().exp().matrix();
        Vector gs = g.rowwise().sum();
        x.accumulate_grad(g - p.cwiseProduct(gs.replicate(1, g.cols())));
    });
}

/// Mean over all entries of -w*t*log(sigmoid(x)) - (1-t)*log(1-sigmoid(x)),
/// computed stably from logits. `target` is a constant.
inline Tensor bce_with_logits(Tape& tape, const Tensor& logits, const Matrix& target, double pos_weight) {
    if (target.rows() != logits.rows() || target.cols() != logits.cols())
        throw DimensionError("bce_with_logits: incompatible shapes " + shape_string(logits.value()) + " and " +
                             shape_string(target));
    auto softplus = [](double v) { return v > 0.0 ? v + std::log1p(std::exp(-v)) : std::log1p(std::exp(v)); };
    const Matrix& x = logits.value();
    const double count = static_cast<double>(x.size());
    double total = 0.0;
    for (Eigen::Index i = 0; i < x.rows(); ++i)
        for (Eigen::Index j = 0; j < x.cols(); ++j) {
            double t = target(i, j);
            total += pos_weight * t * softplus(-x(i, j)) + (1.0 - t) * softplus(x(i, j));
        }
    Matrix y = Matrix::Constant(1, 1, total / count);
    return tape.record(std::move(y), "bce_with_logits", {logits},
                       [logits, target, pos_weight, count](const Matrix& g) {
                           const Matrix& x = logits.value();
                           Matrix d(x.rows(), x.cols());
                           for (Eigen::Index i = 0; i < x.rows(); ++i)
                               for (Eigen::Index j = 0; j < x.cols(); ++j) {
                                   double s = sigmoid_value(x(i, j));
                                   double t = target(i, j);
                                   d(i, j) = (pos_weight * t * (s - 1.0) + (1.0 - t) * s) * g(0, 0) / count;
                               }
                           logits.accumulate_grad(d);
                       });
}

inline Tensor mean(Tape& tape, const Tensor& x) {
    return scale(tape, sum(tape, x), 1.0 / static_cast<double>(x.value().size()));
}

inline void zero_grad(std::span<Tensor> params) {
    for (auto& p : params) p.zero_grad();
}

struct AdamOptions {
    double lr = 5e-3;
    double beta1 = 0.9;
    double beta2 = 0.999;
    double eps = 1e-8;
};

/// Adaptive-moment optimizer. Moments are keyed by parameter identity and
/// persist across step() calls.
class Adam {
public:
    explicit Adam(AdamOptions opts = {}) : opts_(opts) {}

    void step(std::span<Tensor> params) {
        for (auto& p : params) {
            if (!p.requires_grad()) throw ContractError("adam_step: parameter does not require grad");
            if (p.grad().size() == 0 && p.value().size() != 0)
                throw ContractError("adam_step: parameter " + shape_string(p.value()) + " has no gradient");
        }
        for (auto& p : params) {
            if (p.value().size() == 0) continue;
            auto& s = state_[p.node()];
            if (s.m.size() == 0) {
                s.m = Matrix::Zero(p.rows(), p.cols());
                s.v = Matrix::Zero(p.rows(), p.cols());
            }
            ++s.t;
            const Matrix& g = p.grad();
            s.m = opts_.beta1 * s.m + (1.0 - opts_.beta1) * g;
            s.v = opts_.beta2 * s.v + (1.0 - opts_.beta2) * g.cwiseProduct(g);
            double c1 = 1.0 - std::pow(opts_.beta1, static_cast<double>(s.t));
            double c2 = 1.0 - std::pow(opts_.beta2, static_cast<double>(s.t));
            Matrix mhat = s.m / c1;
            Matrix vhat = s.v / c2;
            p.mutable_value().array() -= opts_.lr * mhat.array() / (vhat.array().sqrt() + opts_.eps);
        }
    }

    AdamOptions& options() { return opts_; }

private:
    struct State {
        Matrix m, v;
        long t = 0;
    };
    AdamOptions opts_;
    std::unordered_map<const Node*, State> state_;
};

inline void adam_step(Adam& opt, std::span<Tensor> params) { opt.step(params); }

struct NamedMatrix {
    std::string name;
    Matrix value;
};

/// Checkpoint format: per matrix a `name rows cols` line followed by one line
/// of space-separated decimals per row.
inline void save_checkpoint(const std::filesystem::path& path, std::span<const NamedMatrix> entries,
                            const std::string& header = {}) {
    std::ofstream out(path);
    if (!out) throw DataError("cannot write checkpoint " + path.string());
    out << header << std::setprecision(17);
    for (const auto& e : entries) {
        out << e.name << ' ' << e.value.rows() << ' ' << e.value.cols() << '\n';
        for (Eigen::Index i = 0; i < e.value.rows(); ++i) {
            for (Eigen::Index j = 0; j < e.value.cols(); ++j) out << (j ? " " : "") << e.value(i, j);
            out << '\n';
        }
    }
}

inline std::vector<NamedMatrix> load_checkpoint(const std::filesystem::path& path) {
    std::ifstream in(path);
    if (!in) throw DataError("cannot open checkpoint " + path.string());
    std::vector<NamedMatrix> out;
    std::string line;
    std::size_t line_no = 0;
    while (std::getline(in, line)) {
        ++line_no;
        if (line.empty() || line.front() == '#') continue;
        std::istringstream hs(line);
        NamedMatrix e;
        Eigen::Index rows = 0, cols = 0;
        if (!(hs >> e.name >> rows >> cols) || rows < 0 || cols < 0)
            throw ParseError(path.string(), line_no, "expected 'name rows cols'");
        e.value.resize(rows, cols);
        for (Eigen::Index i = 0; i < rows; ++i) {
            if (!std::getline(in, line)) throw ParseError(path.string(), line_no, "truncated matrix " + e.name);
            ++line_no;
            std::istringstream rs(line);
            for (Eigen::Index j = 0; j < cols; ++j)
                if (!(rs >> e.value(i, j))) throw ParseError(path.string(), line_no, "bad value in " + e.name);
        }
        out.push_back(std::move(e));
    }
    return out;
}

}  // namespace dgen::ad
