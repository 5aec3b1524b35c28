// Acceptance suite: one PASS/FAIL/SKIP line per criterion.
//
//   dgen_acceptance [--only N]... [--exclude N]... [--cora-dir DIR] [--out-dir DIR]
//
// Exit status: 0 when every selected criterion passes, 1 on any failure, 77
// when everything selected was skipped.

#include "dgen/dgen.hpp"
#include "oracles.hpp"

#include <algorithm>
#include <chrono>
#include <cstdio>
#include <filesystem>
#include <fstream>
#include <functional>
#include <iostream>
#include <set>
#include <sstream>

namespace fs = std::filesystem;
using namespace dgen;

namespace {

// Pinned tolerances and budgets.
constexpr double kGradStep = 1e-5;
constexpr double kGradTol = 1e-4;
constexpr int kGradInstances = 20;
constexpr double kOracleTol = 1e-9;
constexpr int kOracleInstances = 100;
constexpr double kRowSumTol = 1e-9;
constexpr double kKlFloorTol = 0.0;
constexpr int kDistributionMatrices = 1000;
constexpr double kSbmNmiThreshold = 0.8;
constexpr double kCoraAcc = 0.65;
constexpr double kCoraNmi = 0.45;
constexpr double kLambdaGap = 0.05;
constexpr double kPeakLo = 0.5, kPeakHi = 0.8;
constexpr double kFastBudget = 60.0;
constexpr double kSbmBudget = 300.0;
constexpr double kCoraBudget = 1800.0;

// Benchmark graph shared by the end-to-end criteria.
constexpr int kSbmFeatureDim = 32;
AttributedGraph benchmark_sbm() { return generate_sbm({100, 100, 100}, 0.1, 0.01, kSbmFeatureDim, 2.0, 0); }
constexpr double kNoise = 0.2;
constexpr std::uint64_t kNoiseSeed = 1;

enum class Status { pass, fail, skip };

struct Outcome {
    Status status;
    std::string summary;
};

Outcome verdict(bool ok, std::string summary) { return {ok ? Status::pass : Status::fail, std::move(summary)}; }

std::string fmt(double v, int prec = 4) {
    std::ostringstream os;
    os.precision(prec);
    os << std::fixed << v;
    return os.str();
}

class Timer {
public:
    double seconds() const { return std::chrono::duration<double>(std::chrono::steady_clock::now() - t0_).count(); }

private:
    std::chrono::steady_clock::time_point t0_ = std::chrono::steady_clock::now();
};

void note(const std::string& s) { std::cout << "    " << s << '\n' << std::flush; }

// ---------------------------------------------------------------------------

Outcome gradient_suite(const fs::path&) {
    Timer t;
    gradcheck::Options opts;
    opts.step = kGradStep;
    opts.tolerance = kGradTol;
    opts.instances = kGradInstances;
    auto cases = gradcheck::default_cases();
    auto results = gradcheck::run_suite(cases, opts);
    int failed = 0;
    double worst = 0.0;
    std::set<std::string> names;
    for (const auto& r : results) {
        names.insert(r.name);
        worst = std::max(worst, r.max_error);
        if (!r.passed || r.instances < kGradInstances) {
            ++failed;
            note("failing case " + r.name + ": " + r.failure);
        }
    }
    int missing = 0;
    for (auto p : ad::primitive_names())
        if (!names.count(std::string(p))) {
            ++missing;
            note("no check for primitive " + std::string(p));
        }
    for (auto extra : {"gat_layer", "reconstruction_loss", "clustering_loss"})
        if (!names.count(extra)) {
            ++missing;
            note(std::string("no check for ") + extra);
        }
    double secs = t.seconds();
    return verdict(failed == 0 && missing == 0 && secs < kFastBudget,
                   std::to_string(results.size()) + " cases x " + std::to_string(kGradInstances) +
                       " instances, max rel err " + fmt(worst, 8) + ", " + std::to_string(failed) + " failed, " +
                       std::to_string(missing) + " uncovered, " + fmt(secs, 1) + " s");
}

Outcome oracle_equivalence(const fs::path&) {
    Timer t;
    std::mt19937_64 rng(2024);
    std::map<std::string, int> mismatches;
    auto bump = [&](const char* what, bool bad) {
        mismatches[what] += bad;
    };
    for (int inst = 0; inst < kOracleInstances; ++inst) {
        const int n = std::uniform_int_distribution<int>(5, 50)(rng);
        const double p = std::uniform_real_distribution<double>(0.05, 0.4)(rng);
        Topology topo = oracle::random_graph(rng, n, p);
        AttributedGraph g;
        g.topology = topo;
        g.features = oracle::random_matrix(rng, n, 4);

        auto snn = compute_snn(topo);
        auto sim = oracle::snn_similarity(topo);
        auto nn = oracle::snn_nearest(topo);
        bool snn_bad = snn.nearest_neighbor != nn;
        for (int i = 0; i < n; ++i)
            for (int j = 0; j < n; ++j) snn_bad = snn_bad || snn.sim(i, j) != sim[i][j];
        bump("snn", snn_bad);

        const int c = std::uniform_int_distribution<int>(1, std::min(5, n))(rng);
        Matrix h = g.features;
        auto km = kmeans(h, c, static_cast<std::uint64_t>(inst));
        Matrix centers = oracle::random_matrix(rng, c, 4);
        bump("kmeans_assign", kmeans_assign(h, centers) != oracle::nearest_centers(h, centers));

        const int tenths = std::uniform_int_distribution<int>(1, 10)(rng);
        auto pooled = ncpool(h, g, tenths / 10.0, km, snn);
        auto ref_scores = oracle::ncpool_scores(h, km.centers, nn);
        auto ref_sel = oracle::smallest(ref_scores, oracle::ceil_tenths(tenths, n));
        bool pool_bad = pooled.selected != ref_sel;
        if (!pool_bad) {
            for (int r = 0; r < pooled.size(); ++r) {
                pool_bad = pool_bad || std::abs(pooled.scores[r] - ref_scores[ref_sel[r]]) > kOracleTol;
                pool_bad = pool_bad || std::abs(pooled.gates[r] - 1.0 / (1.0 + ref_scores[ref_sel[r]])) > kOracleTol;
            }
            for (int a = 0; a < pooled.size(); ++a)
                for (int b = 0; b < pooled.size(); ++b)
                    pool_bad = pool_bad || pooled.adjacency.has_edge(a, b) != topo.has_edge(ref_sel[a], ref_sel[b]);
        }
        bump("ncpool", pool_bad);

        Vector proj = oracle::random_matrix(rng, 4, 1).col(0);
        auto tk = topk_pool_baseline(h, g, tenths / 10.0, proj);
        std::vector<double> y(n);
        for (int i = 0; i < n; ++i) {
            double s = 0, nrm = 0;
            for (int k = 0; k < 4; ++k) {
                s += h(i, k) * proj(k);
                nrm += proj(k) * proj(k);
            }
            y[i] = s / std::sqrt(nrm);
        }
        auto tk_ref = oracle::largest(y, oracle::ceil_tenths(tenths, n));
        bool tk_bad = tk.selected != tk_ref;
        if (!tk_bad)
            for (int r = 0; r < tk.size(); ++r)
                tk_bad = tk_bad || std::abs(tk.gates[r] - std::tanh(y[tk_ref[r]])) > kOracleTol;
        bump("topk", tk_bad);

        const int kp = std::uniform_int_distribution<int>(1, 6)(rng);
        const int kt = std::uniform_int_distribution<int>(1, 6)(rng);
        std::vector<int> pred(n), truth(n);
        for (auto& v : pred) v = std::uniform_int_distribution<int>(0, kp - 1)(rng);
        for (auto& v : truth) v = std::uniform_int_distribution<int>(0, kt - 1)(rng);
        bump("acc", std::abs(accuracy(pred, truth) - oracle::accuracy_exhaustive(pred, truth)) > kOracleTol);
        bump("nmi", std::abs(nmi(pred, truth) - oracle::nmi_direct(pred, truth)) > kOracleTol);
        bump("ari", std::abs(ari(pred, truth) - oracle::ari_pairs(pred, truth)) > kOracleTol);
    }
    int total = 0;
    std::string detail;
    for (const auto& [k, v] : mismatches) {
        total += v;
        detail += k + "=" + std::to_string(v) + " ";
    }
    double secs = t.seconds();
    return verdict(total == 0 && secs < kFastBudget, std::to_string(kOracleInstances) +
                                                         " instances per check, mismatches: " + detail + "(" +
                                                         fmt(secs, 1) + " s)");
}

Outcome distribution_invariants(const fs::path&) {
    std::mt19937_64 rng(77);
    int row_sum_bad = 0, kl_bad = 0, sharpen_rows = 0, sharpen_mats = 0, rows = 0;
    double worst_drop = 0.0;
    for (int m = 0; m < kDistributionMatrices; ++m) {
        const int n = std::uniform_int_distribution<int>(2, 40)(rng);
        const int c = std::uniform_int_distribution<int>(2, 6)(rng);
        const int d = std::uniform_int_distribution<int>(1, 8)(rng);
        const double spread = std::uniform_real_distribution<double>(0.1, 5.0)(rng);
        Matrix q = soft_assign(oracle::random_matrix(rng, n, d, -spread, spread),
                               oracle::random_matrix(rng, c, d, -spread, spread));
        Matrix p = target_distribution(q);
        bool mat_bad = false;
        for (int i = 0; i < n; ++i) {
            ++rows;
            row_sum_bad += std::abs(q.row(i).sum() - 1.0) > kRowSumTol;
            row_sum_bad += std::abs(p.row(i).sum() - 1.0) > kRowSumTol;
            double drop = q.row(i).maxCoeff() - p.row(i).maxCoeff();
            if (drop > 0.0) {
                ++sharpen_rows;
                mat_bad = true;
                worst_drop = std::max(worst_drop, drop);
            }
        }
        sharpen_mats += mat_bad;
        kl_bad += clustering_loss(p, q) < -kKlFloorTol;
    }
    note("row-max sharpening violated on " + std::to_string(sharpen_rows) + " of " + std::to_string(rows) +
         " rows (" + std::to_string(sharpen_mats) + " of " + std::to_string(kDistributionMatrices) +
         " matrices), largest drop " + fmt(worst_drop, 4));
    if (sharpen_rows > 0)
        note("the frequency correction q^2/f can flatten a row whose favored column is popular; "
             "e.g. Q=[(0.6,0.4),(0.7846,0.2154)] maps row 0 to (0.5,0.5)");
    return verdict(row_sum_bad == 0 && kl_bad == 0 && sharpen_rows == 0,
                   std::to_string(kDistributionMatrices) + " random Q: row-sum violations " +
                       std::to_string(row_sum_bad) + ", negative KL " + std::to_string(kl_bad) +
                       ", sharpening violations " + std::to_string(sharpen_rows));
}

Outcome pooling_contract(const fs::path&) {
    std::mt19937_64 rng(404);
    int checks = 0, bad = 0;
    for (int tenths = 2; tenths <= 9; ++tenths)
        for (int rep = 0; rep < 25; ++rep) {
            const int n = std::uniform_int_distribution<int>(3, 60)(rng);
            Topology topo = oracle::random_graph(rng, n, std::uniform_real_distribution<double>(0.02, 0.5)(rng));
            AttributedGraph g;
            g.topology = topo;
            g.features = oracle::random_matrix(rng, n, 3, -3, 3);
            const int c = std::uniform_int_distribution<int>(1, std::min(4, n))(rng);
            auto km = kmeans(g.features, c, static_cast<std::uint64_t>(rep));
            auto pooled = ncpool(g.features, g, tenths / 10.0, km, compute_snn(topo));
            ++checks;
            bool ok = pooled.size() == oracle::ceil_tenths(tenths, n);
            ok = ok && std::set<int>(pooled.selected.begin(), pooled.selected.end()).size() == pooled.selected.size();
            for (double gate : pooled.gates) ok = ok && gate > 0.0 && gate <= 1.0;
            ok = ok && pooled.adjacency.num_nodes() == pooled.size();
            for (int a = 0; a < pooled.size(); ++a)
                for (int b = 0; b < pooled.size(); ++b)
                    ok = ok && pooled.adjacency.has_edge(a, b) == topo.has_edge(pooled.selected[a], pooled.selected[b]);
            bad += !ok;
        }
    return verdict(bad == 0, std::to_string(checks) + " pooled graphs over k=0.2..0.9, " + std::to_string(bad) +
                                 " contract violations");
}

RunReport run_logged(const AttributedGraph& g, const TrainConfig& cfg, const std::string& label) {
    Timer t;
    RunReport rep = run_pipeline(g, cfg);
    note(label + ": acc " + fmt(rep.scores->acc) + " nmi " + fmt(rep.scores->nmi) + " ari " + fmt(rep.scores->ari) +
         " (" + fmt(t.seconds(), 1) + " s)");
    for (const auto& w : rep.warnings) note("  warning: " + w);
    return rep;
}

Outcome sbm_recovery(const fs::path&) {
    Timer t;
    AttributedGraph g = benchmark_sbm();
    TrainConfig cfg;
    RunReport rep = run_logged(g, cfg, "sbm defaults seed 0");
    double secs = t.seconds();
    return verdict(rep.scores->nmi >= kSbmNmiThreshold && secs < kSbmBudget,
                   "NMI " + fmt(rep.scores->nmi) + " (threshold " + fmt(kSbmNmiThreshold, 2) + "), " + fmt(secs, 1) +
                       " s (budget " + fmt(kSbmBudget, 0) + " s)");
}

Outcome robustness(const fs::path&) {
    AttributedGraph clean = benchmark_sbm();
    AttributedGraph noisy = inject_noise_edges(clean, kNoise, kNoiseSeed);
    note("clean " + std::to_string(clean.num_edges()) + " edges, noisy " + std::to_string(noisy.num_edges()));
    std::map<std::pair<PoolMode, bool>, double> mean;
    double kept_nmi = 0, ceiling_nmi = 0;
    for (PoolMode m : {PoolMode::ncpool, PoolMode::none})
        for (bool is_noisy : {false, true})
            for (std::uint64_t seed = 0; seed < 5; ++seed) {
                TrainConfig cfg;
                cfg.pool = m;
                cfg.seed = seed;
                auto rep = run_logged(is_noisy ? noisy : clean, cfg,
                                      to_string(m) + (is_noisy ? " noisy" : " clean") + " seed " + std::to_string(seed));
                mean[{m, is_noisy}] += rep.scores->nmi / 5.0;
                if (m != PoolMode::ncpool || !is_noisy) continue;
                // Where the pooled variant loses: clustering of the kept nodes, or
                // the classifier spreading labels to the dropped ones.
                std::vector<int> truth;
                for (int i : rep.selected) truth.push_back((*noisy.labels)[i]);
                kept_nmi += evaluate(rep.local_labels, truth).nmi / 5.0;
                auto clf = train_classifier(noisy, rep.selected, truth, cfg, rep.clusters);
                ceiling_nmi += evaluate(predict_all(clf, noisy), *noisy.labels).nmi / 5.0;
            }
    note("ncpool noisy: mean NMI of local clusters on kept nodes " + fmt(kept_nmi) +
         "; classifier trained on TRUE labels of kept nodes reaches mean NMI " + fmt(ceiling_nmi));
    double nc_noisy = mean[{PoolMode::ncpool, true}], none_noisy = mean[{PoolMode::none, true}];
    double nc_drop = mean[{PoolMode::ncpool, false}] - nc_noisy;
    double none_drop = mean[{PoolMode::none, false}] - none_noisy;
    return verdict(nc_noisy >= none_noisy && nc_drop <= none_drop,
                   "noisy mean NMI ncpool " + fmt(nc_noisy) + " vs none " + fmt(none_noisy) + "; degradation ncpool " +
                       fmt(nc_drop) + " vs none " + fmt(none_drop));
}

Outcome cora_reproduction(const fs::path& cora_dir) {
    if (cora_dir.empty() || !fs::exists(cora_dir / "cora.content") || !fs::exists(cora_dir / "cora.cites"))
        return {Status::skip, "Cora data not supplied (set DGEN_CORA_DIR to a directory with cora.content and "
                              "cora.cites); reference ACC 0.771 NMI 0.576 ARI 0.566"};
    Timer t;
    LoadStats stats;
    AttributedGraph g = load_citation_dataset(cora_dir / "cora.content", cora_dir / "cora.cites", &stats);
    note("loaded " + std::to_string(g.num_nodes()) + " nodes, " + std::to_string(g.num_edges()) +
         " undirected edges from " + std::to_string(stats.edge_lines) + " edge lines, " +
         std::to_string(g.feature_dim()) + " features, " + std::to_string(g.num_classes()) + " classes");
    fs::path curves = fs::current_path() / "cora_loss_curves.txt";
    std::ofstream out(curves);
    out << "# phase epoch loss, per seed\n";
    double best_acc = 0, best_nmi = 0, best_ari = 0;
    for (std::uint64_t seed = 0; seed < 3; ++seed) {
        TrainConfig cfg;
        cfg.seed = seed;
        auto rep = run_logged(g, cfg, "cora seed " + std::to_string(seed));
        for (const auto& p : rep.losses) out << "seed" << seed << ' ' << p.phase << ' ' << p.epoch << ' ' << p.loss << '\n';
        if (rep.scores->acc > best_acc) {
            best_acc = rep.scores->acc;
            best_nmi = rep.scores->nmi;
            best_ari = rep.scores->ari;
        }
    }
    note("loss curves written to " + curves.string());
    double secs = t.seconds();
    return verdict(best_acc >= kCoraAcc && best_nmi >= kCoraNmi && secs < kCoraBudget,
                   "best of 3 seeds: ACC " + fmt(best_acc, 3) + " NMI " + fmt(best_nmi, 3) + " ARI " +
                       fmt(best_ari, 3) + " (bar ACC>=" + fmt(kCoraAcc, 2) + " NMI>=" + fmt(kCoraNmi, 2) +
                       "; reported 0.771/0.576/0.566), " + fmt(secs, 0) + " s");
}

Outcome sweep_shape(const fs::path&) {
    AttributedGraph g = inject_noise_edges(benchmark_sbm(), kNoise, kNoiseSeed);
    const std::vector<std::uint64_t> seeds{0, 1, 2};
    auto mean_nmi = [&](double ratio, double lambda) {
        double s = 0;
        for (auto seed : seeds) {
            TrainConfig cfg;
            cfg.ratio = ratio;
            cfg.lambda = lambda;
            cfg.seed = seed;
            s += run_logged(g, cfg, "k=" + fmt(ratio, 1) + " lambda=" + fmt(lambda, 0) + " seed " + std::to_string(seed))
                     .scores->nmi;
        }
        return s / static_cast<double>(seeds.size());
    };
    std::vector<double> ratios{0.2, 0.3, 0.4, 0.5, 0.6, 0.7, 0.8, 0.9};
    std::vector<double> curve;
    for (double r : ratios) {
        curve.push_back(mean_nmi(r, 10.0));
        note("k=" + fmt(r, 1) + " mean NMI " + fmt(curve.back()));
    }
    auto peak = std::max_element(curve.begin(), curve.end()) - curve.begin();
    double peak_k = ratios[static_cast<std::size_t>(peak)];
    double at10 = curve[4];
    double at100 = mean_nmi(0.6, 100.0);
    bool ok = peak_k >= kPeakLo - 1e-12 && peak_k <= kPeakHi + 1e-12 && std::abs(at10 - at100) < kLambdaGap;
    return verdict(ok, "noisy SBM: NMI peaks at k=" + fmt(peak_k, 1) + " (bracket [0.5, 0.8]); lambda 10 vs 100: " +
                           fmt(at10) + " vs " + fmt(at100) + " (gap < " + fmt(kLambdaGap, 2) + ")");
}

Outcome determinism(const fs::path&) {
    AttributedGraph g = benchmark_sbm();
    TrainConfig cfg;
    cfg.seed = 7;
    auto base = fs::temp_directory_path() / "dgen_acceptance_determinism";
    fs::remove_all(base);
    std::vector<std::string> contents;
    for (int run = 0; run < 2; ++run) {
        auto rep = run_logged(g, cfg, "run " + std::to_string(run + 1));
        auto path = base / ("labels_" + std::to_string(run) + ".txt");
        fs::create_directories(base);
        write_labels(path, g, rep.labels, comment_header(cfg, "determinism check"));
        std::ifstream in(path, std::ios::binary);
        contents.emplace_back(std::istreambuf_iterator<char>(in), std::istreambuf_iterator<char>());
    }
    fs::remove_all(base);
    return verdict(contents[0] == contents[1] && !contents[0].empty(),
                   std::string("label files ") + (contents[0] == contents[1] ? "bitwise identical" : "differ") + " (" +
                       std::to_string(contents[0].size()) + " bytes)");
}

struct Criterion {
    int id;
    const char* name;
    std::function<Outcome(const fs::path&)> run;
};

}  // namespace

int main(int argc, char** argv) {
    std::set<int> only, exclude;
    fs::path cora_dir;
    for (int i = 1; i < argc; ++i) {
        std::string a = argv[i];
        auto next = [&]() -> std::string {
            if (i + 1 >= argc) {
                std::cerr << "missing value for " << a << '\n';
                std::exit(2);
            }
            return argv[++i];
        };
        if (a == "--only") only.insert(std::stoi(next()));
        else if (a == "--exclude") exclude.insert(std::stoi(next()));
        else if (a == "--cora-dir") cora_dir = next();
        else {
            std::cerr << "unknown argument " << a << '\n';
            return 2;
        }
    }

    const std::vector<Criterion> criteria = {
        {1, "gradient suite", gradient_suite},
        {2, "oracle equivalence", oracle_equivalence},
        {3, "distribution invariants", distribution_invariants},
        {4, "pooling contract", pooling_contract},
        {5, "SBM recovery", sbm_recovery},
        {6, "noise robustness", robustness},
        {7, "Cora reproduction", cora_reproduction},
        {8, "ratio and lambda sweep", sweep_shape},
        {9, "determinism", determinism},
    };

    int ran = 0, failed = 0, skipped = 0;
    for (const auto& c : criteria) {
        if (!only.empty() && !only.count(c.id)) continue;
        if (exclude.count(c.id)) continue;
        std::cout << "[" << c.id << "] " << c.name << '\n' << std::flush;
        Outcome o;
        try {
            o = c.run(cora_dir);
        } catch (const std::exception& e) {
            o = {Status::fail, std::string("exception: ") + e.what()};
        }
        const char* tag = o.status == Status::pass ? "PASS" : o.status == Status::fail ? "FAIL" : "SKIP";
        std::cout << tag << ' ' << c.id << ' ' << c.name << ": " << o.summary << '\n' << std::flush;
        ++ran;
        failed += o.status == Status::fail;
        skipped += o.status == Status::skip;
    }
    if (failed) return 1;
    if (ran > 0 && skipped == ran) return 77;
    return 0;
}
