#pragma once

// The four-phase clustering procedure:
//   1. pretrain the global encoder on full-graph reconstruction;
//   2. jointly train global encoder, pooling and local encoder on
//      L = L_r + lambda * KL(P || Q);
//   3. K-means on the local embedding of the kept nodes;
//   4. train an attention classifier on those labels and predict every node.

#include "dgen/gat.hpp"
#include "dgen/graph.hpp"
#include "dgen/metrics.hpp"
#include "dgen/ncpool.hpp"
#include "dgen/objectives.hpp"
#include "dgen/tensor.hpp"

#include <chrono>
#include <cmath>
#include <cstdint>
#include <filesystem>
#include <fstream>
#include <iomanip>
#include <map>
#include <optional>
#include <random>
#include <set>
#include <sstream>
#include <string>
#include <vector>

namespace dgen {

enum class PoolMode { ncpool, topk, none };

inline std::string to_string(PoolMode m) {
    switch (m) {
        case PoolMode::ncpool: return "ncpool";
        case PoolMode::topk: return "topk";
        default: return "none";
    }
}

inline PoolMode parse_pool_mode(const std::string& s) {
    if (s == "ncpool") return PoolMode::ncpool;
    if (s == "topk") return PoolMode::topk;
    if (s == "none") return PoolMode::none;
    throw ContractError("unknown pooling mode '" + s + "' (expected ncpool, topk or none)");
}

struct TrainConfig {
    double ratio = 0.6;
    double lambda = 10.0;
    int pretrain_epochs = 200;
    int train_epochs = 200;
    int classifier_epochs = 100;
    double learning_rate = 5e-3;
    double classifier_learning_rate = 1e-2;
    std::uint64_t seed = 0;
    int center_refresh_interval = 20;
    int target_refresh_interval = 5;
    int clusters = 0;  ///< 0: take the count from ground-truth labels
    PoolMode pool = PoolMode::ncpool;
    EncoderShape encoder{};
    EncoderShape classifier{4, 64, 0, Activation::elu, Activation::identity};

    void validate() const {
        require(ratio > 0.0 && ratio <= 1.0, "ratio must lie in (0, 1]");
        require(lambda >= 0.0 && std::isfinite(lambda), "lambda must be non-negative");
        require(pretrain_epochs > 0 && train_epochs > 0 && classifier_epochs > 0, "epoch counts must be positive");
        require(center_refresh_interval > 0 && target_refresh_interval > 0, "refresh intervals must be positive");
        require(learning_rate > 0.0 && classifier_learning_rate > 0.0, "learning rates must be positive");
        require(clusters >= 0, "cluster count must be non-negative");
    }

    /// One `key = value` line per setting, defaults included.
    std::string describe() const {
        std::ostringstream os;
        os << std::setprecision(12);
        os << "pool = " << to_string(pool) << '\n'
           << "ratio = " << ratio << '\n'
           << "lambda = " << lambda << '\n'
           << "epochs_pretrain = " << pretrain_epochs << '\n'
           << "epochs_train = " << train_epochs << '\n'
           << "epochs_clf = " << classifier_epochs << '\n'
           << "lr = " << learning_rate << '\n'
           << "lr_clf = " << classifier_learning_rate << '\n'
           << "seed = " << seed << '\n'
           << "clusters = " << (clusters > 0 ? std::to_string(clusters) : std::string("from-labels")) << '\n'
           << "center_refresh = " << center_refresh_interval << '\n'
           << "target_refresh = " << target_refresh_interval << '\n'
           << "encoder = " << encoder.heads << "x" << encoder.hidden_per_head << " -> " << encoder.out_dim << '\n'
           << "classifier = " << classifier.heads << "x" << classifier.hidden_per_head << " -> C\n";
        return os.str();
    }
};

/// The config block as '#'-prefixed comment lines.
inline std::string comment_header(const TrainConfig& cfg, const std::string& title) {
    std::ostringstream os;
    os << "# " << title << '\n';
    std::istringstream lines(cfg.describe());
    for (std::string line; std::getline(lines, line);) os << "# " << line << '\n';
    return os.str();
}

struct LossPoint {
    std::string phase;
    int epoch = 0;
    double loss = 0.0;
};

struct RunReport {
    TrainConfig config;
    int clusters = 0;
    std::vector<int> labels;             ///< final cluster per node
    std::optional<ClusteringScores> scores;
    std::vector<LossPoint> losses;
    std::vector<int> selected;           ///< pooled node ids after training
    std::vector<int> local_labels;       ///< K-means labels of `selected`
    Matrix global_embedding;             ///< N x emb
    Matrix local_embedding;              ///< |selected| x emb
    std::map<std::string, double> seconds;
    std::vector<std::string> warnings;
    std::vector<ad::NamedMatrix> parameters;
};

namespace detail {

inline std::uint64_t derive_seed(std::uint64_t seed, std::uint64_t stream) {
    std::uint64_t z = seed + 0x9E3779B97F4A7C15ULL * (stream + 1);
    z = (z ^ (z >> 30)) * 0xBF58476D1CE4E5B9ULL;
    z = (z ^ (z >> 27)) * 0x94D049BB133111EBULL;
    return z ^ (z >> 31);
}

enum SeedStream : std::uint64_t { global_init, local_init, classifier_init, centers, projection, local_kmeans, pool_kmeans };

inline void check_finite(double loss, const std::string& phase, int epoch) {
    if (!std::isfinite(loss))
        throw NumericalError(phase + ": non-finite loss " + std::to_string(loss) + " at epoch " + std::to_string(epoch));
}

inline void append(std::vector<ad::Tensor>& to, const std::vector<ad::Tensor>& from) {
    to.insert(to.end(), from.begin(), from.end());
}

class Stopwatch {
public:
    double seconds() const {
        return std::chrono::duration<double>(std::chrono::steady_clock::now() - start_).count();
    }

private:
    std::chrono::steady_clock::time_point start_ = std::chrono::steady_clock::now();
};

}  // namespace detail

inline int resolve_clusters(const AttributedGraph& g, const TrainConfig& cfg) {
    int c = cfg.clusters > 0 ? cfg.clusters : g.num_classes();
    require(c >= 1, "cluster count unknown: graph has no labels and no explicit count was given");
    require(c <= g.num_nodes(), "more clusters than nodes");
    return c;
}

/// Trains the global encoder on full-graph reconstruction.
inline Encoder pretrain(const AttributedGraph& g, const TrainConfig& cfg, std::vector<LossPoint>* curve = nullptr) {
    cfg.validate();
    if (g.num_nodes() == 0) throw EmptyInputError("pretrain: empty graph");
    std::mt19937_64 rng(detail::derive_seed(cfg.seed, detail::global_init));
    Encoder global = make_encoder("global", g.feature_dim(), cfg.encoder, rng);
    const auto index = AttentionIndex::from(g.topology);
    const Matrix target = reconstruction_target(g.topology);
    const auto x = ad::Tensor::constant(g.features);
    auto params = global.parameters();
    ad::Adam opt({cfg.learning_rate});
    ad::Tape tape;
    for (int epoch = 0; epoch < cfg.pretrain_epochs; ++epoch) {
        tape.reset();
        ad::zero_grad(params);
        auto loss = reconstruction_loss(tape, encode(tape, global, x, index), target);
        detail::check_finite(loss.item(), "pretrain", epoch);
        if (curve) curve->push_back({"pretrain", epoch, loss.item()});
        tape.backward(loss);
        opt.step(params);
    }
    return global;
}

/// Everything the joint training phase produces.
struct DgenState {
    Encoder global;
    Encoder local;
    Matrix global_embedding;  ///< H_g
    Matrix z;                 ///< local embedding of the pooled nodes
    PooledGraph pooled;
    ClusterState clusters;
    Vector projection;        ///< top-k baseline projection (unused otherwise)
};

namespace detail {

/// Selection, gates and local structure held fixed between center refreshes.
struct PoolingPlan {
    PooledGraph pooled;  ///< features hold the gated embedding at plan time
    AttentionIndex index;
    Matrix target;
};

inline PoolingPlan plan_pooling(const Matrix& hg, const AttributedGraph& g, const SnnTable& snn,
                                const TrainConfig& cfg, int clusters, const Vector& projection,
                                std::uint64_t kmeans_seed) {
    PoolingPlan plan;
    switch (cfg.pool) {
        case PoolMode::ncpool: {
            KmeansModel km = kmeans(hg, clusters, kmeans_seed);
            plan.pooled = ncpool(hg, g, cfg.ratio, km, snn);
            break;
        }
        case PoolMode::topk:
            plan.pooled = topk_pool_baseline(hg, g, cfg.ratio, projection);
            break;
        case PoolMode::none: {
            std::vector<int> all(static_cast<std::size_t>(g.num_nodes()));
            std::iota(all.begin(), all.end(), 0);
            plan.pooled = gather_pooled(hg, g.topology, std::move(all),
                                        std::vector<double>(static_cast<std::size_t>(g.num_nodes()), 0.0),
                                        std::vector<double>(static_cast<std::size_t>(g.num_nodes()), 1.0));
            break;
        }
    }
    plan.index = AttentionIndex::from(plan.pooled.adjacency);
    plan.target = reconstruction_target(plan.pooled.adjacency);
    return plan;
}

/// H' on the tape: kept rows of H_g times their gates. NCPool gates are
/// constants; top-k gates tanh(y) stay differentiable in H_g.
inline ad::Tensor pooled_features(ad::Tape& tape, const ad::Tensor& hg, const PoolingPlan& plan, PoolMode mode,
                                  const Vector& projection) {
    ad::Tensor rows = ad::gather_rows(tape, hg, plan.pooled.selected);
    switch (mode) {
        case PoolMode::none: return rows;
        case PoolMode::topk: {
            Matrix p = projection / projection.norm();
            ad::Tensor y = ad::matmul(tape, rows, ad::Tensor::constant(p));
            return ad::elementwise_mul(tape, rows, ad::tanh(tape, y));
        }
        default: {
            Matrix gates = Eigen::Map<const Vector>(plan.pooled.gates.data(),
                                                    static_cast<Eigen::Index>(plan.pooled.gates.size()));
            return ad::elementwise_mul(tape, rows, ad::Tensor::constant(gates));
        }
    }
}

}  // namespace detail

/// Joint self-optimizing training through the pooling layer and the local
/// encoder, starting from a pretrained global encoder.
inline DgenState train_dgen(const AttributedGraph& g, Encoder global, const TrainConfig& cfg,
                            std::vector<LossPoint>* curve = nullptr, std::vector<std::string>* warnings = nullptr) {
    cfg.validate();
    require(global.in_dim() == g.feature_dim(), "train_dgen: pretrained encoder does not match feature width");
    const int c = resolve_clusters(g, cfg);
    const auto full_index = AttentionIndex::from(g.topology);
    const SnnTable snn = compute_snn(g.topology);
    const auto x = ad::Tensor::constant(g.features);

    DgenState st;
    st.global = std::move(global);
    std::mt19937_64 local_rng(detail::derive_seed(cfg.seed, detail::local_init));
    st.local = make_encoder("local", st.global.out_dim(), cfg.encoder, local_rng);
    {
        std::mt19937_64 prng(detail::derive_seed(cfg.seed, detail::projection));
        std::normal_distribution<double> nd(0.0, 1.0);
        st.projection = Vector(st.global.out_dim());
        for (Eigen::Index k = 0; k < st.projection.size(); ++k) st.projection(k) = nd(prng);
    }

    ad::Tape tape;
    auto global_embedding = [&] { return encode(tape, st.global, x, full_index).value(); };

    int refresh_count = 0;
    auto next_plan = [&](const Matrix& hg) {
        return detail::plan_pooling(hg, g, snn, cfg, c, st.projection,
                                    detail::derive_seed(cfg.seed, detail::pool_kmeans + 16 * refresh_count++));
    };
    detail::PoolingPlan plan = next_plan(global_embedding());

    // Local warm-up: reconstruct the pooled graph from the frozen pretrained H'.
    {
        tape.reset();
        auto hp_value =
            detail::pooled_features(tape, ad::Tensor::constant(global_embedding()), plan, cfg.pool, st.projection)
                .value();
        auto hp = ad::Tensor::constant(hp_value);
        auto params = st.local.parameters();
        ad::Adam opt({cfg.learning_rate});
        for (int epoch = 0; epoch < cfg.pretrain_epochs; ++epoch) {
            tape.reset();
            ad::zero_grad(params);
            auto loss = reconstruction_loss(tape, encode(tape, st.local, hp, plan.index), plan.target);
            detail::check_finite(loss.item(), "pretrain-local", epoch);
            if (curve) curve->push_back({"pretrain-local", epoch, loss.item()});
            tape.backward(loss);
            opt.step(params);
        }
    }

    // Cluster centers start from K-means on the warmed-up local embedding.
    {
        tape.reset();
        auto hg = encode(tape, st.global, x, full_index);
        Matrix z0 = encode(tape, st.local, detail::pooled_features(tape, hg, plan, cfg.pool, st.projection), plan.index)
                        .value();
        KmeansModel km = kmeans(z0, c, detail::derive_seed(cfg.seed, detail::centers));
        st.clusters.centers = ad::Tensor::parameter(km.centers);
    }

    std::vector<ad::Tensor> params = st.global.parameters();
    detail::append(params, st.local.parameters());
    params.push_back(st.clusters.centers);
    ad::Adam opt({cfg.learning_rate});

    int low_mass_streak = 0;
    bool collapse_reported = false;
    bool refresh_target = true;
    std::size_t clamped = 0;
    for (int epoch = 0; epoch < cfg.train_epochs; ++epoch) {
        tape.reset();
        ad::zero_grad(params);
        auto hg = encode(tape, st.global, x, full_index);
        if (epoch > 0 && epoch % cfg.center_refresh_interval == 0) {
            plan = next_plan(hg.value());
            refresh_target = true;
        }
        auto z = encode(tape, st.local, detail::pooled_features(tape, hg, plan, cfg.pool, st.projection), plan.index);
        auto lr = reconstruction_loss(tape, z, plan.target);
        auto q = soft_assign(tape, z, st.clusters.centers);
        if (refresh_target || epoch % cfg.target_refresh_interval == 0) {
            st.clusters.p = target_distribution(q.value());
            refresh_target = false;
            Eigen::RowVectorXd mass = q.value().colwise().mean();
            low_mass_streak = mass.minCoeff() < 1.0 / (10.0 * c) ? low_mass_streak + 1 : 0;
            if (low_mass_streak >= 10 && !collapse_reported && warnings) {
                warnings->push_back("cluster collapse: a cluster held under 1/(10C) of the soft-assignment mass for "
                                    "10 consecutive target refreshes (epoch " + std::to_string(epoch) + ")");
                collapse_reported = true;
            }
        }
        auto lc = clustering_loss(tape, st.clusters.p, q, &clamped);
        auto loss = total_loss(tape, lr, lc, cfg.lambda);
        detail::check_finite(loss.item(), "train", epoch);
        if (curve) curve->push_back({"train", epoch, loss.item()});
        tape.backward(loss);
        opt.step(params);
    }
    if (clamped > 0 && warnings)
        warnings->push_back("clustering loss clamped " + std::to_string(clamped) + " soft-assignment entries");

    tape.reset();
    auto hg = encode(tape, st.global, x, full_index);
    auto z = encode(tape, st.local, detail::pooled_features(tape, hg, plan, cfg.pool, st.projection), plan.index);
    st.global_embedding = hg.value();
    st.z = z.value();
    st.pooled = plan.pooled;
    st.clusters.q = soft_assign(st.z, st.clusters.centers.value());
    st.clusters.p = target_distribution(st.clusters.q);
    st.clusters.hard_labels = argmax_rows(st.clusters.q);
    return st;
}

/// K-means labels for the rows of the local embedding.
inline std::vector<int> local_cluster(const Matrix& z, int clusters, std::uint64_t seed) {
    if (z.rows() == 0) throw EmptyInputError("local_cluster: empty embedding");
    return kmeans(z, clusters, seed).assignments;
}

/// Attention classifier over the full graph, trained with cross-entropy on the
/// `selected` nodes only.
inline Encoder train_classifier(const AttributedGraph& g, const std::vector<int>& selected,
                                const std::vector<int>& labels, const TrainConfig& cfg, int clusters,
                                std::vector<LossPoint>* curve = nullptr) {
    require(selected.size() == labels.size(), "train_classifier: labels do not cover the selected nodes");
    require(!selected.empty(), "train_classifier: no selected nodes");
    if (std::set<int>(labels.begin(), labels.end()).size() < 2)
        throw DegenerateLabelsError("train_classifier: all selected nodes carry the same label");
    for (int l : labels) require(l >= 0 && l < clusters, "train_classifier: label out of range");

    std::mt19937_64 rng(detail::derive_seed(cfg.seed, detail::classifier_init));
    EncoderShape shape = cfg.classifier;
    shape.out_dim = clusters;
    Encoder clf = make_encoder("classifier", g.feature_dim(), shape, rng);
    const auto index = AttentionIndex::from(g.topology);
    const auto x = ad::Tensor::constant(g.features);
    Matrix onehot = Matrix::Zero(static_cast<Eigen::Index>(selected.size()), clusters);
    for (std::size_t r = 0; r < labels.size(); ++r) onehot(static_cast<Eigen::Index>(r), labels[r]) = 1.0;
    const auto target = ad::Tensor::constant(onehot);

    auto params = clf.parameters();
    ad::Adam opt({cfg.classifier_learning_rate});
    ad::Tape tape;
    for (int epoch = 0; epoch < cfg.classifier_epochs; ++epoch) {
        tape.reset();
        ad::zero_grad(params);
        auto logp = ad::log_softmax_rows(tape, encode(tape, clf, x, index));
        auto picked = ad::sum(tape, ad::elementwise_mul(tape, ad::gather_rows(tape, logp, selected), target));
        auto loss = ad::scale(tape, picked, -1.0 / static_cast<double>(selected.size()));
        detail::check_finite(loss.item(), "classifier", epoch);
        if (curve) curve->push_back({"classifier", epoch, loss.item()});
        tape.backward(loss);
        opt.step(params);
    }
    return clf;
}

/// Argmax of the classifier logits for every node (ties to the lowest cluster).
inline std::vector<int> predict_all(const Encoder& clf, const AttributedGraph& g) {
    ad::Tape tape;
    return argmax_rows(classify_forward(tape, clf, g).value());
}

/// Runs all four phases.
inline RunReport run_pipeline(const AttributedGraph& g, const TrainConfig& cfg) {
    cfg.validate();
    if (g.num_nodes() == 0) throw EmptyInputError("run_pipeline: empty graph");
    RunReport rep;
    rep.config = cfg;
    rep.clusters = resolve_clusters(g, cfg);

    detail::Stopwatch sw_pre;
    Encoder global = pretrain(g, cfg, &rep.losses);
    rep.seconds["pretrain"] = sw_pre.seconds();

    detail::Stopwatch sw_train;
    DgenState st = train_dgen(g, std::move(global), cfg, &rep.losses, &rep.warnings);
    rep.seconds["train"] = sw_train.seconds();

    detail::Stopwatch sw_local;
    rep.selected = st.pooled.selected;
    rep.local_labels = local_cluster(st.z, rep.clusters, detail::derive_seed(cfg.seed, detail::local_kmeans));
    rep.seconds["local_cluster"] = sw_local.seconds();

    detail::Stopwatch sw_clf;
    Encoder clf = train_classifier(g, rep.selected, rep.local_labels, cfg, rep.clusters, &rep.losses);
    rep.labels = predict_all(clf, g);
    rep.seconds["classifier"] = sw_clf.seconds();

    rep.global_embedding = std::move(st.global_embedding);
    rep.local_embedding = std::move(st.z);
    if (g.labels) rep.scores = evaluate(rep.labels, *g.labels);

    for (const auto* enc : {&st.global, &st.local, &clf})
        for (auto& e : enc->named_parameters()) rep.parameters.push_back(std::move(e));
    rep.parameters.push_back({"centers", st.clusters.centers.value()});
    return rep;
}

/// Same graph, seed and schedule for every pooling mode; one report each.
inline std::vector<RunReport> run_ablation(const AttributedGraph& g, const TrainConfig& cfg,
                                           const std::vector<PoolMode>& variants) {
    std::vector<RunReport> out;
    for (PoolMode m : variants) {
        TrainConfig c = cfg;
        c.pool = m;
        out.push_back(run_pipeline(g, c));
    }
    return out;
}

// ---------------------------------------------------------------------------
// Report files

inline void write_labels(const std::filesystem::path& path, const AttributedGraph& g, const std::vector<int>& labels,
                         const std::string& header) {
    std::ofstream out(path);
    if (!out) throw DataError("cannot write " + path.string());
    out << header;
    for (std::size_t i = 0; i < labels.size(); ++i) out << g.node_id(static_cast<int>(i)) << ' ' << labels[i] << '\n';
}

/// `node_id v_1 ... v_d` per row; `ids[r]` names row r.
inline void write_embedding(const std::filesystem::path& path, const AttributedGraph& g, const Matrix& emb,
                            const std::vector<int>& ids, const std::string& header) {
    std::ofstream out(path);
    if (!out) throw DataError("cannot write " + path.string());
    out << header << std::setprecision(17);
    for (Eigen::Index r = 0; r < emb.rows(); ++r) {
        out << g.node_id(ids[static_cast<std::size_t>(r)]);
        for (Eigen::Index k = 0; k < emb.cols(); ++k) out << ' ' << emb(r, k);
        out << '\n';
    }
}

inline void write_report(const std::filesystem::path& path, const RunReport& rep, const std::string& header) {
    std::ofstream out(path);
    if (!out) throw DataError("cannot write " + path.string());
    out << header << std::setprecision(10);
    out << "[metrics]\n";
    out << "clusters " << rep.clusters << '\n';
    if (rep.scores) {
        out << "acc " << rep.scores->acc << '\n' << "nmi " << rep.scores->nmi << '\n' << "ari " << rep.scores->ari << '\n';
    }
    out << "selected " << rep.selected.size() << '\n';
    out << "[timing]\n";
    for (const auto& [phase, s] : rep.seconds) out << phase << ' ' << s << '\n';
    out << "[warnings]\n";
    for (const auto& w : rep.warnings) out << w << '\n';
    out << "[selected]\n";
    for (std::size_t k = 0; k < rep.selected.size(); ++k) out << (k ? " " : "") << rep.selected[k];
    out << "\n[losses]\n";
    for (const auto& p : rep.losses) out << p.phase << ' ' << p.epoch << ' ' << p.loss << '\n';
}

/// Writes report.txt, labels.txt, embeddings.txt (H_g, every node),
/// local_embeddings.txt (Z, kept nodes) and model.ckpt into `dir`.
inline void write_run_outputs(const std::filesystem::path& dir, const AttributedGraph& g, const RunReport& rep,
                              const std::string& header) {
    std::filesystem::create_directories(dir);
    write_report(dir / "report.txt", rep, header);
    write_labels(dir / "labels.txt", g, rep.labels, header);
    std::vector<int> all(static_cast<std::size_t>(g.num_nodes()));
    std::iota(all.begin(), all.end(), 0);
    write_embedding(dir / "embeddings.txt", g, rep.global_embedding, all, header);
    write_embedding(dir / "local_embeddings.txt", g, rep.local_embedding, rep.selected, header);
    ad::save_checkpoint(dir / "model.ckpt", rep.parameters, header);
}

}  // namespace dgen
