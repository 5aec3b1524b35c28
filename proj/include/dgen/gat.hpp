#pragma once

// Multi-head graph attention layers and the encoders stacked from them.

#include "dgen/graph.hpp"
#include "dgen/tensor.hpp"

#include <cmath>
#include <random>
#include <string>
#include <vector>

namespace dgen {

/// Attention entries (target i, source j) for every j in N(i) plus the
/// self-pair (i, i), grouped by target. Self-pairs exist only here.
struct AttentionIndex {
    int num_nodes = 0;
    std::vector<int> target;
    std::vector<int> source;

    static AttentionIndex from(const Topology& t) {
        AttentionIndex idx;
        idx.num_nodes = t.num_nodes();
        idx.target.reserve(2 * t.num_edges() + static_cast<std::size_t>(t.num_nodes()));
        idx.source.reserve(idx.target.capacity());
        for (int i = 0; i < t.num_nodes(); ++i) {
            idx.target.push_back(i);
            idx.source.push_back(i);
            for (int j : t.neighbors(i)) {
                idx.target.push_back(i);
                idx.source.push_back(j);
            }
        }
        return idx;
    }

    std::size_t size() const noexcept { return target.size(); }
};

enum class Activation { identity, elu };

struct GatHead {
    ad::Tensor weight;     ///< in_dim x head_dim, shared by both ends of an edge
    ad::Tensor attention;  ///< head_dim x 2: column 0 scores the target, column 1 the source
};

struct GatLayer {
    std::vector<GatHead> heads;
    int in_dim = 0;
    int head_dim = 0;
    Activation activation = Activation::elu;
    bool concat = true;  ///< concatenate heads, otherwise average them

    int out_dim() const { return concat ? head_dim * static_cast<int>(heads.size()) : head_dim; }

    /// Glorot-uniform initialization of every head.
    static GatLayer create(int in_dim, int head_dim, int num_heads, Activation act, bool concat,
                           std::mt19937_64& rng) {
        require(in_dim > 0 && head_dim > 0 && num_heads > 0, "GatLayer: dimensions must be positive");
        GatLayer layer;
        layer.in_dim = in_dim;
        layer.head_dim = head_dim;
        layer.activation = act;
        layer.concat = concat;
        auto glorot = [&rng](int fan_in, int fan_out, int rows, int cols) {
            double bound = std::sqrt(6.0 / static_cast<double>(fan_in + fan_out));
            std::uniform_real_distribution<double> u(-bound, bound);
            Matrix m(rows, cols);
            for (Eigen::Index i = 0; i < m.size(); ++i) m.data()[i] = u(rng);
            return m;
        };
        for (int m = 0; m < num_heads; ++m) {
            layer.heads.push_back({ad::Tensor::parameter(glorot(in_dim, head_dim, in_dim, head_dim)),
                                   ad::Tensor::parameter(glorot(2 * head_dim, 1, head_dim, 2))});
        }
        return layer;
    }
};

inline ad::Tensor apply_activation(ad::Tape& tape, const ad::Tensor& x, Activation act) {
    return act == Activation::elu ? ad::elu(tape, x) : x;
}

/// One attention layer. Per head m and node i:
///   alpha_ij = softmax over j in N(i) ∪ {i} of LeakyReLU(a^T [W h_i || W h_j])
///   out_i    = act(sum_j alpha_ij W h_j)
/// a^T [x || y] splits into a_1 . x + a_2 . y, so both halves are scored once
/// per node and then gathered per edge.
/// Heads are concatenated or averaged. When `attention` is given it receives
/// each head's alpha column, aligned with `index`.
inline ad::Tensor gat_forward(ad::Tape& tape, const GatLayer& layer, const ad::Tensor& h,
                              const AttentionIndex& index, std::vector<ad::Tensor>* attention = nullptr) {
    if (h.cols() != layer.in_dim)
        throw DimensionError("gat_forward: input " + shape_string(h.value()) + " does not match layer input width " +
                             std::to_string(layer.in_dim));
    if (h.rows() != index.num_nodes)
        throw DimensionError("gat_forward: " + std::to_string(h.rows()) + " feature rows for " +
                             std::to_string(index.num_nodes) + " nodes");
    if (attention) attention->clear();

    static const ad::Tensor first = ad::Tensor::constant(Matrix{{1.0}, {0.0}});
    static const ad::Tensor second = ad::Tensor::constant(Matrix{{0.0}, {1.0}});
    std::vector<ad::Tensor> outputs;
    outputs.reserve(layer.heads.size());
    for (const auto& head : layer.heads) {
        ad::Tensor wh = ad::matmul(tape, h, head.weight);
        ad::Tensor halves = ad::matmul(tape, wh, head.attention);
        ad::Tensor logits = ad::add(tape, ad::matmul(tape, ad::gather_rows(tape, halves, index.target), first),
                                    ad::matmul(tape, ad::gather_rows(tape, halves, index.source), second));
        ad::Tensor wh_j = ad::gather_rows(tape, wh, index.source);
        ad::Tensor alpha =
            ad::softmax_over_segments(tape, ad::leaky_relu(tape, logits), index.target, index.num_nodes);
        if (attention) attention->push_back(alpha);
        ad::Tensor agg = ad::segment_sum(tape, ad::elementwise_mul(tape, wh_j, alpha), index.target, index.num_nodes);
        outputs.push_back(apply_activation(tape, agg, layer.activation));
    }
    if (outputs.size() == 1) return outputs.front();
    if (layer.concat) return ad::concat_cols(tape, outputs);
    ad::Tensor acc = outputs.front();
    for (std::size_t m = 1; m < outputs.size(); ++m) acc = ad::add(tape, acc, outputs[m]);
    return ad::scale(tape, acc, 1.0 / static_cast<double>(outputs.size()));
}

/// Layer widths of a two-layer attention stack.
struct EncoderShape {
    int heads = 4;
    int hidden_per_head = 64;  ///< first layer concatenates heads: width heads * hidden_per_head
    int out_dim = 16;          ///< second layer averages heads
    Activation hidden_activation = Activation::elu;
    Activation out_activation = Activation::identity;
};

struct Encoder {
    std::string name;
    std::vector<GatLayer> layers;

    int in_dim() const { return layers.empty() ? 0 : layers.front().in_dim; }
    int out_dim() const { return layers.empty() ? 0 : layers.back().out_dim(); }

    std::vector<ad::Tensor> parameters() const {
        std::vector<ad::Tensor> out;
        for (const auto& l : layers)
            for (const auto& h : l.heads) {
                out.push_back(h.weight);
                out.push_back(h.attention);
            }
        return out;
    }

    /// Checkpoint names: `<name>.l<i>.h<m>.W` and `<name>.l<i>.h<m>.a`.
    std::vector<ad::NamedMatrix> named_parameters() const {
        std::vector<ad::NamedMatrix> out;
        for (std::size_t i = 0; i < layers.size(); ++i)
            for (std::size_t m = 0; m < layers[i].heads.size(); ++m) {
                std::string base = name + ".l" + std::to_string(i) + ".h" + std::to_string(m);
                out.push_back({base + ".W", layers[i].heads[m].weight.value()});
                out.push_back({base + ".a", layers[i].heads[m].attention.value()});
            }
        return out;
    }

    /// Copies matching entries (by name) into this encoder's parameters.
    void load(const std::vector<ad::NamedMatrix>& entries) {
        for (std::size_t i = 0; i < layers.size(); ++i)
            for (std::size_t m = 0; m < layers[i].heads.size(); ++m) {
                std::string base = name + ".l" + std::to_string(i) + ".h" + std::to_string(m);
                for (const auto& e : entries) {
                    auto& head = layers[i].heads[m];
                    ad::Tensor* target = e.name == base + ".W" ? &head.weight
                                         : e.name == base + ".a" ? &head.attention
                                                                 : nullptr;
                    if (!target) continue;
                    if (e.value.rows() != target->rows() || e.value.cols() != target->cols())
                        throw DimensionError("checkpoint entry " + e.name + " has shape " + shape_string(e.value) +
                                             ", expected " + shape_string(target->value()));
                    target->mutable_value() = e.value;
                }
            }
    }
};

inline Encoder make_encoder(std::string name, int in_dim, const EncoderShape& shape, std::mt19937_64& rng) {
    Encoder enc;
    enc.name = std::move(name);
    enc.layers.push_back(
        GatLayer::create(in_dim, shape.hidden_per_head, shape.heads, shape.hidden_activation, true, rng));
    enc.layers.push_back(GatLayer::create(enc.layers.front().out_dim(), shape.out_dim, shape.heads,
                                          shape.out_activation, false, rng));
    return enc;
}

/// Applies the layers in order.
inline ad::Tensor encode(ad::Tape& tape, const Encoder& enc, const ad::Tensor& x, const AttentionIndex& index) {
    require(!enc.layers.empty(), "encode: encoder has no layers");
    ad::Tensor h = x;
    for (const auto& layer : enc.layers) h = gat_forward(tape, layer, h, index);
    return h;
}

inline ad::Tensor encode(ad::Tape& tape, const Encoder& enc, const AttributedGraph& g) {
    return encode(tape, enc, ad::Tensor::constant(g.features), AttentionIndex::from(g.topology));
}

/// Per-node logits over clusters for every node of the full graph.
inline ad::Tensor classify_forward(ad::Tape& tape, const Encoder& clf, const AttributedGraph& g,
                                   const AttentionIndex& index) {
    return encode(tape, clf, ad::Tensor::constant(g.features), index);
}

inline ad::Tensor classify_forward(ad::Tape& tape, const Encoder& clf, const AttributedGraph& g) {
    return classify_forward(tape, clf, g, AttentionIndex::from(g.topology));
}

}  // namespace dgen
