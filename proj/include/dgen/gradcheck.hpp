#pragma once

// Central finite-difference verification of the reverse-mode adjoints: one
// case per tensor primitive plus the attention layer and the training losses.

#include "dgen/gat.hpp"
#include "dgen/graph.hpp"
#include "dgen/objectives.hpp"
#include "dgen/tensor.hpp"

#include <algorithm>
#include <cmath>
#include <cstdint>
#include <functional>
#include <random>
#include <string>
#include <utility>
#include <vector>

namespace dgen::gradcheck {

using Builder = std::function<ad::Tensor(ad::Tape&)>;

/// One random instance: the leaves to perturb and a function building the
/// scalar loss from them.
struct Instance {
    std::vector<ad::Tensor> params;
    Builder loss;
};

struct Case {
    std::string name;
    std::function<Instance(std::mt19937_64&, int)> make;  ///< (rng, instance number)
};

struct Options {
    double step = 1e-5;
    double tolerance = 1e-4;
    int instances = 20;
    std::uint64_t seed = 20240611;
};

struct Result {
    std::string name;
    int instances = 0;
    double max_error = 0.0;
    bool passed = true;
    std::string failure;  ///< first failing entry, when any
};

/// |analytic - numeric| / max(|analytic|, |numeric|, 1e-3): relative error,
/// floored so entries that are zero on both sides do not divide by zero.
inline double relative_error(double analytic, double numeric) {
    return std::abs(analytic - numeric) / std::max({std::abs(analytic), std::abs(numeric), 1e-3});
}

/// Largest relative error over every entry of every parameter; `where`
/// receives the worst entry's location.
inline double max_relative_error(std::vector<ad::Tensor>& params, const Builder& build, double step,
                                 std::string* where = nullptr) {
    ad::Tape tape;
    ad::zero_grad(params);
    auto loss = build(tape);
    tape.backward(loss);
    std::vector<Matrix> analytic;
    for (auto& p : params) analytic.push_back(p.grad().size() ? p.grad() : Matrix::Zero(p.rows(), p.cols()));

    auto eval = [&] {
        ad::Tape t;
        return build(t).item();
    };
    double worst = 0.0;
    for (std::size_t k = 0; k < params.size(); ++k) {
        Matrix& v = params[k].mutable_value();
        for (Eigen::Index e = 0; e < v.size(); ++e) {
            const double orig = v.data()[e];
            v.data()[e] = orig + step;
            const double up = eval();
            v.data()[e] = orig - step;
            const double down = eval();
            v.data()[e] = orig;
            const double numeric = (up - down) / (2.0 * step);
            const double err = relative_error(analytic[k].data()[e], numeric);
            if (err > worst) {
                worst = err;
                if (where)
                    *where = "param " + std::to_string(k) + " entry " + std::to_string(e) + ": analytic " +
                             std::to_string(analytic[k].data()[e]) + " numeric " + std::to_string(numeric);
            }
        }
    }
    return worst;
}

inline Result run_case(const Case& c, const Options& opts) {
    Result r;
    r.name = c.name;
    std::mt19937_64 rng(opts.seed ^ std::hash<std::string>{}(c.name));
    for (int i = 0; i < opts.instances; ++i) {
        Instance inst = c.make(rng, i);
        std::string where;
        double err = max_relative_error(inst.params, inst.loss, opts.step, &where);
        ++r.instances;
        if (err > r.max_error) r.max_error = err;
        if (err >= opts.tolerance && r.passed) {
            r.passed = false;
            r.failure = "instance " + std::to_string(i) + ", " + where;
        }
    }
    return r;
}

namespace detail {

inline Matrix random_matrix(std::mt19937_64& rng, Eigen::Index rows, Eigen::Index cols, double lo = -1.0,
                            double hi = 1.0) {
    std::uniform_real_distribution<double> u(lo, hi);
    Matrix m(rows, cols);
    for (Eigen::Index k = 0; k < m.size(); ++k) m.data()[k] = u(rng);
    return m;
}

/// Entries with |x| in [0.1, 1.5] and random sign, away from kinks at 0.
inline Matrix away_from_zero(std::mt19937_64& rng, Eigen::Index rows, Eigen::Index cols) {
    Matrix m = random_matrix(rng, rows, cols, 0.1, 1.5);
    std::bernoulli_distribution sign(0.5);
    for (Eigen::Index k = 0; k < m.size(); ++k)
        if (sign(rng)) m.data()[k] = -m.data()[k];
    return m;
}

inline int rand_int(std::mt19937_64& rng, int lo, int hi) { return std::uniform_int_distribution<int>(lo, hi)(rng); }

/// Reduces any output to a scalar with a fixed random weighting so every
/// output entry contributes.
inline ad::Tensor project(ad::Tape& tape, const ad::Tensor& out, const Matrix& weights) {
    return ad::sum(tape, ad::elementwise_mul(tape, out, ad::Tensor::constant(weights)));
}

using UnaryOp = std::function<ad::Tensor(ad::Tape&, const ad::Tensor&)>;

inline Case unary_case(std::string name, UnaryOp op, std::function<Matrix(std::mt19937_64&, int, int)> input) {
    return {name, [op, input](std::mt19937_64& rng, int) {
                int r = rand_int(rng, 1, 5), c = rand_int(rng, 1, 4);
                auto x = ad::Tensor::parameter(input(rng, r, c));
                Matrix w = random_matrix(rng, r, c);
                return Instance{{x}, [op, x, w](ad::Tape& t) { return project(t, op(t, x), w); }};
            }};
}

inline Topology random_topology(std::mt19937_64& rng, int n, double p) {
    std::bernoulli_distribution coin(p);
    std::vector<Edge> edges;
    for (int i = 0; i < n; ++i)
        for (int j = i + 1; j < n; ++j)
            if (coin(rng)) edges.push_back({i, j});
    return Topology(n, std::move(edges));
}

inline std::vector<int> random_segments(std::mt19937_64& rng, int rows, int segments) {
    std::vector<int> seg(static_cast<std::size_t>(rows));
    for (int r = 0; r < rows; ++r) seg[r] = r < segments ? r : rand_int(rng, 0, segments - 1);
    std::shuffle(seg.begin(), seg.end(), rng);
    return seg;
}

}  // namespace detail

/// One case per entry of ad::primitive_names() plus composite cases.
inline std::vector<Case> default_cases() {
    using namespace detail;
    std::vector<Case> cases;
    auto plain = [](std::mt19937_64& rng, int r, int c) { return random_matrix(rng, r, c); };
    auto positive = [](std::mt19937_64& rng, int r, int c) { return random_matrix(rng, r, c, 0.5, 2.0); };
    auto nonzero = [](std::mt19937_64& rng, int r, int c) { return away_from_zero(rng, r, c); };

    cases.push_back({"matmul", [](std::mt19937_64& rng, int) {
                         int m = rand_int(rng, 1, 5), k = rand_int(rng, 1, 4), n = rand_int(rng, 1, 4);
                         auto a = ad::Tensor::parameter(random_matrix(rng, m, k));
                         auto b = ad::Tensor::parameter(random_matrix(rng, k, n));
                         Matrix w = random_matrix(rng, m, n);
                         return Instance{{a, b}, [a, b, w](ad::Tape& t) { return project(t, ad::matmul(t, a, b), w); }};
                     }});
    using BinaryOp = std::function<ad::Tensor(ad::Tape&, const ad::Tensor&, const ad::Tensor&)>;
    auto broadcast_case = [](std::string name, BinaryOp op) {
        return Case{name, [op](std::mt19937_64& rng, int i) {
                        int r = rand_int(rng, 2, 5), c = rand_int(rng, 2, 4);
                        int br = i % 3 == 1 ? 1 : r;  // cycle through same / row / column shapes
                        int bc = i % 3 == 2 ? 1 : c;
                        auto a = ad::Tensor::parameter(random_matrix(rng, r, c));
                        auto b = ad::Tensor::parameter(random_matrix(rng, br, bc));
                        Matrix w = random_matrix(rng, r, c);
                        return Instance{{a, b}, [op, a, b, w](ad::Tape& t) { return project(t, op(t, a, b), w); }};
                    }};
    };
    cases.push_back(broadcast_case("add", [](ad::Tape& t, const ad::Tensor& a, const ad::Tensor& b) { return ad::add(t, a, b); }));
    cases.push_back(broadcast_case("sub", [](ad::Tape& t, const ad::Tensor& a, const ad::Tensor& b) { return ad::sub(t, a, b); }));
    cases.push_back(broadcast_case("elementwise_mul", [](ad::Tape& t, const ad::Tensor& a, const ad::Tensor& b) {
        return ad::elementwise_mul(t, a, b);
    }));
    cases.push_back(unary_case("scale", [](ad::Tape& t, const ad::Tensor& x) { return ad::scale(t, x, -1.7); }, plain));
    cases.push_back(unary_case("add_scalar", [](ad::Tape& t, const ad::Tensor& x) { return ad::add_scalar(t, x, 0.3); }, plain));
    cases.push_back({"concat_cols", [](std::mt19937_64& rng, int) {
                         int r = rand_int(rng, 1, 5);
                         std::vector<ad::Tensor> parts;
                         int total = 0;
                         for (int k = 0; k < 3; ++k) {
                             int c = rand_int(rng, 1, 3);
                             total += c;
                             parts.push_back(ad::Tensor::parameter(random_matrix(rng, r, c)));
                         }
                         Matrix w = random_matrix(rng, r, total);
                         return Instance{parts, [parts, w](ad::Tape& t) { return project(t, ad::concat_cols(t, parts), w); }};
                     }});
    cases.push_back(unary_case("exp", [](ad::Tape& t, const ad::Tensor& x) { return ad::exp(t, x); }, plain));
    cases.push_back(unary_case("log", [](ad::Tape& t, const ad::Tensor& x) { return ad::log(t, x); }, positive));
    cases.push_back(unary_case("leaky_relu", [](ad::Tape& t, const ad::Tensor& x) { return ad::leaky_relu(t, x); }, nonzero));
    cases.push_back(unary_case("elu", [](ad::Tape& t, const ad::Tensor& x) { return ad::elu(t, x); }, nonzero));
    cases.push_back(unary_case("sigmoid", [](ad::Tape& t, const ad::Tensor& x) { return ad::sigmoid(t, x); }, plain));
    cases.push_back(unary_case("tanh", [](ad::Tape& t, const ad::Tensor& x) { return ad::tanh(t, x); }, plain));
    cases.push_back(unary_case("reciprocal", [](ad::Tape& t, const ad::Tensor& x) { return ad::reciprocal(t, x); },
                               [](std::mt19937_64& rng, int r, int c) {
                                   Matrix m = away_from_zero(rng, r, c);
                                   return Matrix(m.array().sign() * (m.array().abs() + 0.4));
                               }));
    cases.push_back(unary_case("clamp_min", [](ad::Tape& t, const ad::Tensor& x) { return ad::clamp_min(t, x, 0.0); }, nonzero));
    cases.push_back({"softmax_over_segments", [](std::mt19937_64& rng, int) {
                         int segments = rand_int(rng, 1, 4);
                         int rows = rand_int(rng, segments, 8), cols = rand_int(rng, 1, 3);
                         auto seg = random_segments(rng, rows, segments);
                         auto x = ad::Tensor::parameter(random_matrix(rng, rows, cols, -2.0, 2.0));
                         Matrix w = random_matrix(rng, rows, cols);
                         return Instance{{x}, [x, w, seg, segments](ad::Tape& t) {
                                             return project(t, ad::softmax_over_segments(t, x, seg, segments), w);
                                         }};
                     }});
    cases.push_back({"segment_sum", [](std::mt19937_64& rng, int) {
                         int segments = rand_int(rng, 1, 4);
                         int rows = rand_int(rng, segments, 8), cols = rand_int(rng, 1, 3);
                         auto seg = random_segments(rng, rows, segments);
                         auto x = ad::Tensor::parameter(random_matrix(rng, rows, cols));
                         Matrix w = random_matrix(rng, segments, cols);
                         return Instance{{x}, [x, w, seg, segments](ad::Tape& t) {
                                             return project(t, ad::segment_sum(t, x, seg, segments), w);
                                         }};
                     }});
    cases.push_back({"gather_rows", [](std::mt19937_64& rng, int) {
                         int rows = rand_int(rng, 1, 5), cols = rand_int(rng, 1, 3), picks = rand_int(rng, 1, 8);
                         std::vector<int> idx;
                         for (int k = 0; k < picks; ++k) idx.push_back(rand_int(rng, 0, rows - 1));
                         auto x = ad::Tensor::parameter(random_matrix(rng, rows, cols));
                         Matrix w = random_matrix(rng, picks, cols);
                         return Instance{{x}, [x, w, idx](ad::Tape& t) { return project(t, ad::gather_rows(t, x, idx), w); }};
                     }});
    cases.push_back({"transpose", [](std::mt19937_64& rng, int) {
                         int r = rand_int(rng, 1, 5), c = rand_int(rng, 1, 4);
                         auto x = ad::Tensor::parameter(random_matrix(rng, r, c));
                         Matrix w = random_matrix(rng, c, r);
                         return Instance{{x}, [x, w](ad::Tape& t) { return project(t, ad::transpose(t, x), w); }};
                     }});
    cases.push_back({"sum", [](std::mt19937_64& rng, int) {
                         auto x = ad::Tensor::parameter(random_matrix(rng, rand_int(rng, 1, 5), rand_int(rng, 1, 4)));
                         return Instance{{x}, [x](ad::Tape& t) { return ad::scale(t, ad::sum(t, x), 1.3); }};
                     }});
    cases.push_back({"frobenius_sq", [](std::mt19937_64& rng, int) {
                         auto x = ad::Tensor::parameter(random_matrix(rng, rand_int(rng, 1, 5), rand_int(rng, 1, 4)));
                         return Instance{{x}, [x](ad::Tape& t) { return ad::frobenius_sq(t, x); }};
                     }});
    cases.push_back({"pairwise_sq_dist", [](std::mt19937_64& rng, int) {
                         int n = rand_int(rng, 1, 5), c = rand_int(rng, 1, 4), d = rand_int(rng, 1, 3);
                         auto a = ad::Tensor::parameter(random_matrix(rng, n, d));
                         auto b = ad::Tensor::parameter(random_matrix(rng, c, d));
                         Matrix w = random_matrix(rng, n, c);
                         return Instance{{a, b}, [a, b, w](ad::Tape& t) { return project(t, ad::pairwise_sq_dist(t, a, b), w); }};
                     }});
    cases.push_back(unary_case("row_normalize", [](ad::Tape& t, const ad::Tensor& x) { return ad::row_normalize(t, x); }, positive));
    cases.push_back(unary_case("log_softmax_rows", [](ad::Tape& t, const ad::Tensor& x) { return ad::log_softmax_rows(t, x); },
                               [](std::mt19937_64& rng, int r, int c) { return random_matrix(rng, r, c, -3.0, 3.0); }));
    cases.push_back({"bce_with_logits", [](std::mt19937_64& rng, int) {
                         int r = rand_int(rng, 1, 5), c = rand_int(rng, 1, 5);
                         auto x = ad::Tensor::parameter(random_matrix(rng, r, c, -3.0, 3.0));
                         Matrix target = random_matrix(rng, r, c, 0.0, 1.0).unaryExpr([](double v) { return v < 0.4 ? 1.0 : 0.0; });
                         return Instance{{x}, [x, target](ad::Tape& t) { return ad::bce_with_logits(t, x, target, 2.5); }};
                     }});

    cases.push_back({"gat_layer", [](std::mt19937_64& rng, int i) {
                         const int n = 6;
                         Topology topo = random_topology(rng, n, 0.4);
                         auto index = AttentionIndex::from(topo);
                         GatLayer layer = GatLayer::create(4, 3, 2, i % 2 ? Activation::identity : Activation::elu,
                                                           i % 2 == 0, rng);
                         // Non-trivial attention logits.
                         for (auto& h : layer.heads) h.attention.mutable_value() *= 3.0;
                         auto h = ad::Tensor::parameter(random_matrix(rng, n, 4));
                         Matrix w = random_matrix(rng, n, layer.out_dim());
                         std::vector<ad::Tensor> params{h};
                         for (auto& hd : layer.heads) {
                             params.push_back(hd.weight);
                             params.push_back(hd.attention);
                         }
                         return Instance{params, [layer, h, index, w](ad::Tape& t) {
                                             return project(t, gat_forward(t, layer, h, index), w);
                                         }};
                     }});
    cases.push_back({"reconstruction_loss", [](std::mt19937_64& rng, int) {
                         int n = rand_int(rng, 3, 8);
                         Matrix target = reconstruction_target(random_topology(rng, n, 0.3));
                         auto z = ad::Tensor::parameter(random_matrix(rng, n, 3));
                         return Instance{{z}, [z, target](ad::Tape& t) { return reconstruction_loss(t, z, target); }};
                     }});
    cases.push_back({"soft_assign", [](std::mt19937_64& rng, int) {
                         int n = rand_int(rng, 2, 6), c = rand_int(rng, 1, 4);
                         auto z = ad::Tensor::parameter(random_matrix(rng, n, 3));
                         auto mu = ad::Tensor::parameter(random_matrix(rng, c, 3));
                         Matrix w = random_matrix(rng, n, c);
                         return Instance{{z, mu}, [z, mu, w](ad::Tape& t) { return project(t, soft_assign(t, z, mu), w); }};
                     }});
    cases.push_back({"clustering_loss", [](std::mt19937_64& rng, int) {
                         int n = rand_int(rng, 2, 6), c = rand_int(rng, 2, 4);
                         auto z = ad::Tensor::parameter(random_matrix(rng, n, 3, -2.0, 2.0));
                         auto mu = ad::Tensor::parameter(random_matrix(rng, c, 3, -2.0, 2.0));
                         Matrix p = target_distribution(soft_assign(z.value(), mu.value()));
                         return Instance{{z, mu}, [z, mu, p](ad::Tape& t) {
                                             return clustering_loss(t, p, soft_assign(t, z, mu));
                                         }};
                     }});
    cases.push_back({"total_loss", [](std::mt19937_64& rng, int) {
                         int n = rand_int(rng, 3, 6);
                         Matrix target = reconstruction_target(random_topology(rng, n, 0.4));
                         auto z = ad::Tensor::parameter(random_matrix(rng, n, 3));
                         auto mu = ad::Tensor::parameter(random_matrix(rng, 2, 3));
                         Matrix p = target_distribution(soft_assign(z.value(), mu.value()));
                         return Instance{{z, mu}, [z, mu, p, target](ad::Tape& t) {
                                             return total_loss(t, reconstruction_loss(t, z, target),
                                                               clustering_loss(t, p, soft_assign(t, z, mu)), 10.0);
                                         }};
                     }});
    return cases;
}

inline std::vector<Result> run_suite(const std::vector<Case>& cases, const Options& opts = {}) {
    std::vector<Result> out;
    out.reserve(cases.size());
    for (const auto& c : cases) out.push_back(run_case(c, opts));
    return out;
}

}  // namespace dgen::gradcheck
