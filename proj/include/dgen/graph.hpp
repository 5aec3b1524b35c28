#pragma once

// Attributed graphs: storage, citation-file ingestion, synthetic block models,
// noise injection and shared-nearest-neighbor tables.

#include "dgen/error.hpp"
#include "dgen/matrix.hpp"

#include <algorithm>
#include <charconv>
#include <cmath>
#include <cstdint>
#include <filesystem>
#include <fstream>
#include <iomanip>
#include <limits>
#include <map>
#include <numeric>
#include <optional>
#include <random>
#include <set>
#include <span>
#include <sstream>
#include <string>
#include <string_view>
#include <unordered_map>
#include <utility>
#include <vector>

namespace dgen {

struct Edge {
    int u = 0;
    int v = 0;
    friend bool operator==(const Edge&, const Edge&) = default;
    friend auto operator<=>(const Edge&, const Edge&) = default;
};

/// Undirected simple graph in CSR form. Edges are stored once with u < v;
/// neighbor lists are symmetric and sorted. Self-loops are never stored.
class Topology {
public:
    Topology() = default;

    /// Builds from an arbitrary edge list; self-loops are removed, endpoints
    /// are canonicalized to u < v and duplicates collapse.
    Topology(int num_nodes, std::vector<Edge> edges) : num_nodes_(num_nodes) {
        require(num_nodes >= 0, "Topology: negative node count");
        for (auto& e : edges) {
            require(e.u >= 0 && e.u < num_nodes && e.v >= 0 && e.v < num_nodes,
                    "Topology: edge endpoint out of range");
            if (e.u > e.v) std::swap(e.u, e.v);
        }
        std::erase_if(edges, [](const Edge& e) { return e.u == e.v; });
        std::sort(edges.begin(), edges.end());
        edges.erase(std::unique(edges.begin(), edges.end()), edges.end());
        edges_ = std::move(edges);

        offsets_.assign(static_cast<std::size_t>(num_nodes) + 1, 0);
        for (const auto& e : edges_) {
            ++offsets_[e.u + 1];
            ++offsets_[e.v + 1];
        }
        std::partial_sum(offsets_.begin(), offsets_.end(), offsets_.begin());
        indices_.resize(2 * edges_.size());
        std::vector<std::size_t> cursor(offsets_.begin(), offsets_.end() - 1);
        for (const auto& e : edges_) {
            indices_[cursor[e.u]++] = e.v;
            indices_[cursor[e.v]++] = e.u;
        }
        for (int i = 0; i < num_nodes; ++i)
            std::sort(indices_.begin() + offsets_[i], indices_.begin() + offsets_[i + 1]);
    }

    int num_nodes() const noexcept { return num_nodes_; }
    std::size_t num_edges() const noexcept { return edges_.size(); }
    const std::vector<Edge>& edges() const noexcept { return edges_; }

    std::span<const int> neighbors(int i) const {
        return {indices_.data() + offsets_[i], offsets_[i + 1] - offsets_[i]};
    }
    int degree(int i) const { return static_cast<int>(offsets_[i + 1] - offsets_[i]); }

    /// Position of node i's neighbor list inside the flat CSR arrays.
    std::size_t offset(int i) const { return offsets_[i]; }

    bool has_edge(int i, int j) const {
        if (i == j) return false;
        auto nb = neighbors(i);
        return std::binary_search(nb.begin(), nb.end(), j);
    }

    Matrix dense() const {
        Matrix a = Matrix::Zero(num_nodes_, num_nodes_);
        for (const auto& e : edges_) {
            a(e.u, e.v) = 1.0;
            a(e.v, e.u) = 1.0;
        }
        return a;
    }

    /// Subgraph induced on `nodes`; node p of the result is nodes[p].
    Topology induced(std::span<const int> nodes) const {
        std::vector<int> position(static_cast<std::size_t>(num_nodes_), -1);
        for (std::size_t p = 0; p < nodes.size(); ++p) {
            require(nodes[p] >= 0 && nodes[p] < num_nodes_, "induced: node out of range");
            require(position[nodes[p]] < 0, "induced: duplicate node");
            position[nodes[p]] = static_cast<int>(p);
        }
        std::vector<Edge> sub;
        for (const auto& e : edges_)
            if (position[e.u] >= 0 && position[e.v] >= 0) sub.push_back({position[e.u], position[e.v]});
        return Topology(static_cast<int>(nodes.size()), std::move(sub));
    }

    friend bool operator==(const Topology& a, const Topology& b) {
        return a.num_nodes_ == b.num_nodes_ && a.edges_ == b.edges_;
    }

private:
    int num_nodes_ = 0;
    std::vector<Edge> edges_;
    std::vector<std::size_t> offsets_{0};
    std::vector<int> indices_;
};

struct AttributedGraph {
    Topology topology;
    Matrix features;                          ///< N x d
    std::optional<std::vector<int>> labels;   ///< class index per node, in [0, C)
    std::vector<std::string> node_ids;        ///< external ids, used on export
    std::vector<std::string> label_names;     ///< label index -> name

    int num_nodes() const noexcept { return topology.num_nodes(); }
    int feature_dim() const noexcept { return static_cast<int>(features.cols()); }
    std::size_t num_edges() const noexcept { return topology.num_edges(); }
    int num_classes() const {
        if (!labels || labels->empty()) return 0;
        return *std::max_element(labels->begin(), labels->end()) + 1;
    }
    Matrix adjacency() const { return topology.dense(); }

    std::string node_id(int i) const {
        return node_ids.empty() ? std::to_string(i) : node_ids[static_cast<std::size_t>(i)];
    }
};

struct LoadStats {
    std::size_t edge_lines = 0;       ///< non-comment lines in the cites file
    std::size_t dropped_unknown = 0;  ///< edges naming an id absent from the content file
    std::size_t self_loops = 0;
    std::size_t duplicates = 0;       ///< repeated undirected pairs, either direction
};

namespace detail {

inline std::vector<std::string_view> split_fields(std::string_view line) {
    std::vector<std::string_view> out;
    std::size_t pos = 0;
    while (true) {
        // Tabs are the documented separator; runs of spaces are accepted too.
        while (pos < line.size() && (line[pos] == '\t' || line[pos] == ' ')) ++pos;
        if (pos >= line.size()) break;
        std::size_t end = line.find_first_of("\t ", pos);
        if (end == std::string_view::npos) end = line.size();
        out.push_back(line.substr(pos, end - pos));
        pos = end;
    }
    return out;
}

inline bool parse_double(std::string_view s, double& out) {
    auto [ptr, ec] = std::from_chars(s.data(), s.data() + s.size(), out);
    return ec == std::errc() && ptr == s.data() + s.size() && std::isfinite(out);
}

inline std::string_view trim_cr(std::string_view s) {
    if (!s.empty() && s.back() == '\r') s.remove_suffix(1);
    return s;
}

inline std::string format_double(double v) {
    std::ostringstream os;
    os << std::setprecision(17) << v;
    return os.str();
}

}  // namespace detail

/// Reads a citation-style dataset: a content file with
/// `node_id <tab> f_1 ... f_d <tab> label` per line and a cites file with
/// `source_id <tab> target_id` per line (lines starting with '#' are skipped).
/// Edges are symmetrized; unknown endpoints, self-loops and duplicates are dropped
/// and counted in `stats`.
inline AttributedGraph load_citation_dataset(const std::filesystem::path& content_path,
                                             const std::filesystem::path& cites_path,
                                             LoadStats* stats = nullptr) {
    std::ifstream content(content_path);
    if (!content) throw DataError("cannot open content file " + content_path.string());

    AttributedGraph g;
    std::unordered_map<std::string, int> id_index;
    std::map<std::string, int> label_index;  // ordered: label ids follow sorted label names
    std::vector<std::string> raw_labels;
    std::vector<std::vector<double>> rows;
    std::size_t width = 0;

    std::string line;
    std::size_t line_no = 0;
    while (std::getline(content, line)) {
        ++line_no;
        auto view = detail::trim_cr(line);
        if (view.empty() || view.front() == '#') continue;
        auto fields = detail::split_fields(view);
        if (fields.size() < 3)
            throw ParseError(content_path.string(), line_no,
                             "expected node id, features and label, got " +
                                 std::to_string(fields.size()) + " fields");
        std::size_t d = fields.size() - 2;
        if (rows.empty()) {
            width = d;
        } else if (d != width) {
            throw ParseError(content_path.string(), line_no,
                             "expected " + std::to_string(width) + " features, got " +
                                 std::to_string(d));
        }
        std::vector<double> row(d);
        for (std::size_t k = 0; k < d; ++k) {
            if (!detail::parse_double(fields[k + 1], row[k]))
                throw ParseError(content_path.string(), line_no,
                                 "non-numeric feature '" + std::string(fields[k + 1]) + "'");
        }
        std::string id(fields.front());
        if (!id_index.emplace(id, static_cast<int>(rows.size())).second)
            throw ParseError(content_path.string(), line_no, "duplicate node id '" + id + "'");
        g.node_ids.push_back(id);
        raw_labels.emplace_back(fields.back());
        label_index.emplace(raw_labels.back(), 0);
        rows.push_back(std::move(row));
    }
    if (rows.empty()) throw EmptyInputError("content file " + content_path.string() + " has no nodes");

    int next = 0;
    for (auto& [name, idx] : label_index) {
        idx = next++;
        g.label_names.push_back(name);
    }
    std::vector<int> labels;
    labels.reserve(raw_labels.size());
    for (const auto& l : raw_labels) labels.push_back(label_index.at(l));
    g.labels = std::move(labels);

    g.features.resize(static_cast<Eigen::Index>(rows.size()), static_cast<Eigen::Index>(width));
    for (std::size_t i = 0; i < rows.size(); ++i)
        for (std::size_t k = 0; k < width; ++k)
            g.features(static_cast<Eigen::Index>(i), static_cast<Eigen::Index>(k)) = rows[i][k];

    std::ifstream cites(cites_path);
    if (!cites) throw DataError("cannot open cites file " + cites_path.string());
    LoadStats local;
    std::vector<Edge> edges;
    line_no = 0;
    while (std::getline(cites, line)) {
        ++line_no;
        auto view = detail::trim_cr(line);
        if (view.empty() || view.front() == '#') continue;
        auto fields = detail::split_fields(view);
        if (fields.size() != 2)
            throw ParseError(cites_path.string(), line_no,
                             "expected 2 fields, got " + std::to_string(fields.size()));
        ++local.edge_lines;
        auto a = id_index.find(std::string(fields[0]));
        auto b = id_index.find(std::string(fields[1]));
        if (a == id_index.end() || b == id_index.end()) {
            ++local.dropped_unknown;
            continue;
        }
        if (a->second == b->second) {
            ++local.self_loops;
            continue;
        }
        edges.push_back({std::min(a->second, b->second), std::max(a->second, b->second)});
    }
    std::size_t kept = edges.size();
    g.topology = Topology(static_cast<int>(rows.size()), std::move(edges));
    local.duplicates = kept - g.topology.num_edges();
    if (stats) *stats = local;
    return g;
}

/// Writes the graph back in the citation format read by load_citation_dataset.
inline void save_citation_dataset(const AttributedGraph& g, const std::filesystem::path& content_path,
                                  const std::filesystem::path& cites_path,
                                  const std::string& header = {}) {
    std::ofstream content(content_path);
    if (!content) throw DataError("cannot write " + content_path.string());
    if (!header.empty()) content << header;
    for (int i = 0; i < g.num_nodes(); ++i) {
        content << g.node_id(i);
        for (int k = 0; k < g.feature_dim(); ++k) content << '\t' << detail::format_double(g.features(i, k));
        std::string label = "unlabeled";
        if (g.labels) {
            int l = (*g.labels)[static_cast<std::size_t>(i)];
            label = g.label_names.empty() ? std::to_string(l) : g.label_names[static_cast<std::size_t>(l)];
        }
        content << '\t' << label << '\n';
    }
    std::ofstream cites(cites_path);
    if (!cites) throw DataError("cannot write " + cites_path.string());
    if (!header.empty()) cites << header;
    for (const auto& e : g.topology.edges()) cites << g.node_id(e.u) << '\t' << g.node_id(e.v) << '\n';
}

inline void export_edge_list(const AttributedGraph& g, const std::filesystem::path& path,
                             const std::string& header = {}) {
    std::ofstream out(path);
    if (!out) throw DataError("cannot write " + path.string());
    out << header;
    for (const auto& e : g.topology.edges()) out << e.u << ' ' << e.v << '\n';
}

inline void export_features(const AttributedGraph& g, const std::filesystem::path& path,
                            const std::string& header = {}) {
    std::ofstream out(path);
    if (!out) throw DataError("cannot write " + path.string());
    out << header;
    for (int i = 0; i < g.num_nodes(); ++i) {
        for (int k = 0; k < g.feature_dim(); ++k) {
            if (k) out << ' ';
            out << detail::format_double(g.features(i, k));
        }
        out << '\n';
    }
}

/// Stochastic block model with Gaussian node attributes. Block b's feature
/// mean is feature_shift times a random unit direction; labels are block ids.
inline AttributedGraph generate_sbm(const std::vector<int>& blocks, double p_in, double p_out,
                                    int feature_dim, double feature_shift, std::uint64_t seed) {
    require(p_in >= 0.0 && p_in <= 1.0 && p_out >= 0.0 && p_out <= 1.0,
            "generate_sbm: probabilities must lie in [0, 1]");
    require(!blocks.empty(), "generate_sbm: no blocks");
    require(feature_dim >= 1, "generate_sbm: feature_dim must be positive");
    for (int b : blocks) require(b > 0, "generate_sbm: block sizes must be positive");

    std::mt19937_64 rng(seed);
    std::uniform_real_distribution<double> unif(0.0, 1.0);
    std::normal_distribution<double> normal(0.0, 1.0);

    AttributedGraph g;
    std::vector<int> labels;
    for (std::size_t b = 0; b < blocks.size(); ++b) labels.insert(labels.end(), blocks[b], static_cast<int>(b));
    const int n = static_cast<int>(labels.size());

    std::vector<Edge> edges;
    for (int i = 0; i < n; ++i)
        for (int j = i + 1; j < n; ++j) {
            double p = labels[i] == labels[j] ? p_in : p_out;
            // Always draw, so edge sets for different p share the same stream.
            if (unif(rng) < p) edges.push_back({i, j});
        }
    g.topology = Topology(n, std::move(edges));

    Matrix means(static_cast<Eigen::Index>(blocks.size()), feature_dim);
    for (Eigen::Index b = 0; b < means.rows(); ++b) {
        double norm = 0.0;
        do {
            for (int k = 0; k < feature_dim; ++k) means(b, k) = normal(rng);
            norm = means.row(b).norm();
        } while (norm < 1e-12);
        means.row(b) *= feature_shift / norm;
    }
    g.features.resize(n, feature_dim);
    for (int i = 0; i < n; ++i)
        for (int k = 0; k < feature_dim; ++k) g.features(i, k) = means(labels[i], k) + normal(rng);

    for (std::size_t b = 0; b < blocks.size(); ++b) g.label_names.push_back("block" + std::to_string(b));
    g.labels = std::move(labels);
    return g;
}

/// Adds ceil(fraction * |E|) uniformly random new edges (fewer when fewer
/// non-edges exist). Existing edges are kept.
inline AttributedGraph inject_noise_edges(const AttributedGraph& g, double fraction, std::uint64_t seed) {
    require(fraction >= 0.0 && std::isfinite(fraction), "inject_noise_edges: fraction must be >= 0");
    const auto want = static_cast<std::size_t>(std::ceil(fraction * static_cast<double>(g.num_edges())));
    if (want == 0) return g;

    const auto n = static_cast<std::uint64_t>(g.num_nodes());
    const std::uint64_t pairs = n * (n - (n > 0 ? 1 : 0)) / 2;
    const std::uint64_t free_pairs = pairs - g.num_edges();
    if (free_pairs == 0) throw CannotAddError("inject_noise_edges: graph is already complete");
    const auto count = static_cast<std::size_t>(std::min<std::uint64_t>(want, free_pairs));

    std::mt19937_64 rng(seed);
    std::vector<Edge> added;
    if (free_pairs <= 4 * static_cast<std::uint64_t>(count) || free_pairs < 100000) {
        // Enumerate the complement and draw without replacement.
        std::vector<Edge> candidates;
        candidates.reserve(static_cast<std::size_t>(free_pairs));
        for (int i = 0; i < g.num_nodes(); ++i)
            for (int j = i + 1; j < g.num_nodes(); ++j)
                if (!g.topology.has_edge(i, j)) candidates.push_back({i, j});
        for (std::size_t k = 0; k < count; ++k) {
            std::uniform_int_distribution<std::size_t> pick(k, candidates.size() - 1);
            std::swap(candidates[k], candidates[pick(rng)]);
            added.push_back(candidates[k]);
        }
    } else {
        std::set<Edge> chosen;
        std::uniform_int_distribution<int> node(0, g.num_nodes() - 1);
        while (added.size() < count) {
            int a = node(rng), b = node(rng);
            if (a == b) continue;
            Edge e{std::min(a, b), std::max(a, b)};
            if (g.topology.has_edge(e.u, e.v) || !chosen.insert(e).second) continue;
            added.push_back(e);
        }
    }

    AttributedGraph out = g;
    std::vector<Edge> edges = g.topology.edges();
    edges.insert(edges.end(), added.begin(), added.end());
    out.topology = Topology(g.num_nodes(), std::move(edges));
    return out;
}

/// Shared-nearest-neighbor counts for adjacent pairs plus each node's most
/// similar neighbor.
struct SnnTable {
    std::vector<int> nearest_neighbor;
    std::vector<int> similarity;  ///< aligned with the CSR neighbor arrays of `topology`
    Topology topology;

    /// |N(i) ∩ N(j)| for adjacent pairs, 0 otherwise.
    int sim(int i, int j) const {
        auto nb = topology.neighbors(i);
        auto it = std::lower_bound(nb.begin(), nb.end(), j);
        if (it == nb.end() || *it != j) return 0;
        return similarity[topology.offset(i) + static_cast<std::size_t>(it - nb.begin())];
    }
};

inline SnnTable compute_snn(const Topology& topology) {
    SnnTable t;
    t.topology = topology;
    const int n = topology.num_nodes();
    t.nearest_neighbor.resize(static_cast<std::size_t>(n));
    t.similarity.assign(2 * topology.num_edges(), 0);
    for (int i = 0; i < n; ++i) {
        auto ni = topology.neighbors(i);
        int best = i;
        int best_sim = -1;
        for (std::size_t k = 0; k < ni.size(); ++k) {
            const int j = ni[k];
            auto nj = topology.neighbors(j);
            int shared = 0;
            auto a = ni.begin();
            auto b = nj.begin();
            while (a != ni.end() && b != nj.end()) {
                if (*a < *b) ++a;
                else if (*b < *a) ++b;
                else { ++shared; ++a; ++b; }
            }
            t.similarity[topology.offset(i) + k] = shared;
            // Neighbors are sorted, so strict > keeps the lowest index on ties.
            if (shared > best_sim) {
                best_sim = shared;
                best = j;
            }
        }
        t.nearest_neighbor[static_cast<std::size_t>(i)] = best;
    }
    return t;
}

inline SnnTable compute_snn(const AttributedGraph& g) { return compute_snn(g.topology); }

}  // namespace dgen
