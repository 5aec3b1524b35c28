// dgen: train, evaluate, generate and ablate from the command line.

#include "dgen/dgen.hpp"

#include "CLI11.hpp"

#include <filesystem>
#include <fstream>
#include <iostream>
#include <sstream>
#include <unordered_map>

namespace fs = std::filesystem;
using namespace dgen;

namespace {

enum Exit { ok = 0, usage = 1, data = 2, numerical = 3 };

struct DatasetFlags {
    std::string content;
    std::string cites;
    double noise = 0.0;
};

struct ConfigFlags {
    std::string pool = "ncpool";
    TrainConfig cfg;
};

void add_dataset_flags(CLI::App* cmd, DatasetFlags& d) {
    cmd->add_option("--content", d.content, "node file: id, features..., label per line")->required();
    cmd->add_option("--cites", d.cites, "edge file: two ids per line")->required();
}

void add_config_flags(CLI::App* cmd, ConfigFlags& c) {
    auto& cfg = c.cfg;
    cmd->add_option("--ratio", cfg.ratio, "fraction of nodes kept by pooling")->capture_default_str();
    cmd->add_option("--lambda", cfg.lambda, "clustering loss weight")->capture_default_str();
    cmd->add_option("--epochs-pretrain", cfg.pretrain_epochs)->capture_default_str();
    cmd->add_option("--epochs-train", cfg.train_epochs)->capture_default_str();
    cmd->add_option("--epochs-clf", cfg.classifier_epochs)->capture_default_str();
    cmd->add_option("--seed", cfg.seed)->capture_default_str();
    cmd->add_option("--clusters", cfg.clusters, "0 takes the count from the labels")->capture_default_str();
    cmd->add_option("--center-refresh", cfg.center_refresh_interval, "epochs between pooling refreshes")
        ->capture_default_str();
    cmd->add_option("--target-refresh", cfg.target_refresh_interval, "epochs between target refreshes")
        ->capture_default_str();
}

AttributedGraph load(const DatasetFlags& d, std::uint64_t seed) {
    LoadStats stats;
    AttributedGraph g = load_citation_dataset(d.content, d.cites, &stats);
    std::cout << "loaded " << g.num_nodes() << " nodes, " << g.num_edges() << " undirected edges ("
              << stats.edge_lines << " edge lines, " << stats.duplicates << " duplicates, " << stats.self_loops
              << " self-loops, " << stats.dropped_unknown << " unknown endpoints), " << g.feature_dim()
              << " features, " << g.num_classes() << " classes\n";
    if (d.noise > 0.0) {
        std::size_t before = g.num_edges();
        g = inject_noise_edges(g, d.noise, detail::derive_seed(seed, 1000));
        std::cout << "injected " << g.num_edges() - before << " noise edges\n";
    }
    return g;
}

std::string header_for(const TrainConfig& cfg, const std::string& title, const DatasetFlags& d) {
    std::ostringstream os;
    os << comment_header(cfg, title);
    os << "# content = " << d.content << "\n# cites = " << d.cites << "\n# noise = " << d.noise << '\n';
    return os.str();
}

int cmd_train(const DatasetFlags& d, ConfigFlags& c, const std::string& out_dir) {
    c.cfg.pool = parse_pool_mode(c.pool);
    c.cfg.validate();
    const std::string header = header_for(c.cfg, "dgen train", d);
    std::cout << header;
    AttributedGraph g = load(d, c.cfg.seed);
    RunReport rep = run_pipeline(g, c.cfg);
    write_run_outputs(out_dir, g, rep, header);
    if (rep.scores)
        std::cout << "acc " << rep.scores->acc << " nmi " << rep.scores->nmi << " ari " << rep.scores->ari << '\n';
    for (const auto& w : rep.warnings) std::cerr << "warning: " << w << '\n';
    std::cout << "wrote " << out_dir << '\n';
    return ok;
}

/// Reads `node_id label` lines written by `train`.
std::unordered_map<std::string, int> read_labels(const fs::path& path) {
    std::ifstream in(path);
    if (!in) throw DataError("cannot open " + path.string());
    std::unordered_map<std::string, int> out;
    std::string line;
    std::size_t no = 0;
    while (std::getline(in, line)) {
        ++no;
        if (line.empty() || line.front() == '#') continue;
        std::istringstream ls(line);
        std::string id;
        int label = 0;
        if (!(ls >> id >> label) || label < 0) throw ParseError(path.string(), no, "expected 'node_id label'");
        out[id] = label;
    }
    if (out.empty()) throw EmptyInputError(path.string() + ": no labels");
    return out;
}

int cmd_eval(const DatasetFlags& d, const std::string& labels_path) {
    AttributedGraph g = load(d, 0);
    if (!g.labels) throw DataError("eval: dataset carries no ground-truth labels");
    auto pred_by_id = read_labels(labels_path);
    std::vector<int> pred, truth;
    for (int i = 0; i < g.num_nodes(); ++i) {
        auto it = pred_by_id.find(g.node_id(i));
        if (it == pred_by_id.end()) throw DataError("eval: no predicted label for node " + g.node_id(i));
        pred.push_back(it->second);
        truth.push_back((*g.labels)[static_cast<std::size_t>(i)]);
    }
    auto s = evaluate(pred, truth);
    std::cout << "acc " << s.acc << "\nnmi " << s.nmi << "\nari " << s.ari << '\n';
    return ok;
}

struct SbmFlags {
    std::vector<int> blocks{100, 100, 100};
    double p_in = 0.1;
    double p_out = 0.01;
    int feature_dim = 32;
    double shift = 2.0;
    std::uint64_t seed = 0;
    double noise = 0.0;
};

int cmd_gen_sbm(const SbmFlags& f, const std::string& out_dir) {
    AttributedGraph g = generate_sbm(f.blocks, f.p_in, f.p_out, f.feature_dim, f.shift, f.seed);
    if (f.noise > 0.0) g = inject_noise_edges(g, f.noise, detail::derive_seed(f.seed, 1000));
    std::ostringstream h;
    h << "# dgen gen-sbm\n# blocks =";
    for (int b : f.blocks) h << ' ' << b;
    h << "\n# p_in = " << f.p_in << "\n# p_out = " << f.p_out << "\n# feature_dim = " << f.feature_dim
      << "\n# shift = " << f.shift << "\n# seed = " << f.seed << "\n# noise = " << f.noise << '\n';
    std::cout << h.str();
    fs::create_directories(out_dir);
    save_citation_dataset(g, fs::path(out_dir) / "sbm.content", fs::path(out_dir) / "sbm.cites", h.str());
    std::cout << "wrote " << g.num_nodes() << " nodes and " << g.num_edges() << " edges to " << out_dir << '\n';
    return ok;
}

struct AblateFlags {
    std::vector<std::string> pools{"ncpool", "topk", "none"};
    std::vector<double> noise{0.0};
    std::vector<double> ratios;
    std::vector<double> lambdas;
    std::vector<std::uint64_t> seeds;
};

/// Grid of pooling variant x noise x ratio x lambda x seed, one metric row each.
int cmd_ablate(const DatasetFlags& d, ConfigFlags& c, const AblateFlags& a, const std::string& out_dir) {
    c.cfg.validate();
    std::vector<PoolMode> modes;
    for (const auto& p : a.pools) modes.push_back(parse_pool_mode(p));
    auto ratios = a.ratios.empty() ? std::vector<double>{c.cfg.ratio} : a.ratios;
    auto lambdas = a.lambdas.empty() ? std::vector<double>{c.cfg.lambda} : a.lambdas;
    auto seeds = a.seeds.empty() ? std::vector<std::uint64_t>{c.cfg.seed} : a.seeds;

    std::ostringstream header;
    header << header_for(c.cfg, "dgen ablate", d);
    header << "# variants =";
    for (const auto& p : a.pools) header << ' ' << p;
    header << "\n# noise =";
    for (double n : a.noise) header << ' ' << n;
    header << "\n# ratios =";
    for (double r : ratios) header << ' ' << r;
    header << "\n# lambdas =";
    for (double l : lambdas) header << ' ' << l;
    header << "\n# seeds =";
    for (auto s : seeds) header << ' ' << s;
    header << '\n';
    std::cout << header.str();

    DatasetFlags clean = d;
    clean.noise = 0.0;
    const AttributedGraph base = load(clean, c.cfg.seed);
    if (!base.labels) throw DataError("ablate: dataset carries no ground-truth labels");

    fs::create_directories(out_dir);
    std::ofstream table(fs::path(out_dir) / "ablation.txt");
    if (!table) throw DataError("cannot write " + (fs::path(out_dir) / "ablation.txt").string());
    table << header.str() << "variant noise ratio lambda seed acc nmi ari\n";
    std::cout << "variant noise ratio lambda seed acc nmi ari\n";
    for (double noise : a.noise) {
        AttributedGraph g = noise > 0.0 ? inject_noise_edges(base, noise, detail::derive_seed(c.cfg.seed, 1000)) : base;
        for (PoolMode m : modes)
            for (double r : ratios)
                for (double l : lambdas)
                    for (auto s : seeds) {
                        TrainConfig cfg = c.cfg;
                        cfg.pool = m;
                        cfg.ratio = r;
                        cfg.lambda = l;
                        cfg.seed = s;
                        RunReport rep = run_pipeline(g, cfg);
                        std::ostringstream row;
                        row << to_string(m) << ' ' << noise << ' ' << r << ' ' << l << ' ' << s << ' '
                            << rep.scores->acc << ' ' << rep.scores->nmi << ' ' << rep.scores->ari << '\n';
                        table << row.str() << std::flush;
                        std::cout << row.str() << std::flush;
                    }
    }
    std::cout << "wrote " << (fs::path(out_dir) / "ablation.txt").string() << '\n';
    return ok;
}

int cmd_gradcheck(int instances) {
    gradcheck::Options opts;
    opts.instances = instances;
    std::cout << "# dgen gradcheck\n# step = " << opts.step << "\n# tolerance = " << opts.tolerance
              << "\n# instances = " << opts.instances << "\n# seed = " << opts.seed << '\n';
    int failed = 0;
    for (const auto& r : gradcheck::run_suite(gradcheck::default_cases(), opts)) {
        std::cout << (r.passed ? "PASS " : "FAIL ") << r.name << " max_rel_err " << r.max_error << " over "
                  << r.instances << " instances";
        if (!r.passed) std::cout << " (" << r.failure << ")";
        std::cout << '\n';
        failed += !r.passed;
    }
    std::cout << (failed ? std::to_string(failed) + " case(s) failed" : std::string("all cases passed")) << '\n';
    return failed ? numerical : ok;
}

}  // namespace

int main(int argc, char** argv) {
    CLI::App app{"Dual graph-attention clustering with neighbor-cluster pooling"};
    app.require_subcommand(1);

    DatasetFlags dataset;
    ConfigFlags config;
    std::string out_dir = "dgen_out";

    auto* train = app.add_subcommand("train", "run the full clustering pipeline");
    add_dataset_flags(train, dataset);
    add_config_flags(train, config);
    train->add_option("--pool", config.pool, "ncpool, topk or none")->capture_default_str();
    train->add_option("--noise", dataset.noise, "fraction of extra random edges to inject")->capture_default_str();
    train->add_option("--out-dir", out_dir)->capture_default_str();

    std::string labels_path;
    auto* eval = app.add_subcommand("eval", "score a labels file against the dataset labels");
    add_dataset_flags(eval, dataset);
    eval->add_option("--labels", labels_path, "labels.txt written by train")->required();

    SbmFlags sbm;
    auto* gen = app.add_subcommand("gen-sbm", "write a stochastic block model dataset");
    gen->add_option("--blocks", sbm.blocks, "block sizes")->delimiter(',')->capture_default_str();
    gen->add_option("--p-in", sbm.p_in)->capture_default_str();
    gen->add_option("--p-out", sbm.p_out)->capture_default_str();
    gen->add_option("--feature-dim", sbm.feature_dim)->capture_default_str();
    gen->add_option("--shift", sbm.shift, "distance of block feature means from the origin")->capture_default_str();
    gen->add_option("--seed", sbm.seed)->capture_default_str();
    gen->add_option("--noise", sbm.noise)->capture_default_str();
    gen->add_option("--out-dir", out_dir)->capture_default_str();

    AblateFlags abl;
    auto* ablate = app.add_subcommand("ablate", "grid of pooling variants and noise levels");
    add_dataset_flags(ablate, dataset);
    add_config_flags(ablate, config);
    ablate->add_option("--pool", abl.pools, "variants to compare")->delimiter(',')->capture_default_str();
    ablate->add_option("--noise", abl.noise, "noise fractions")->delimiter(',')->capture_default_str();
    ablate->add_option("--ratios", abl.ratios, "ratio sweep (default: --ratio)")->delimiter(',');
    ablate->add_option("--lambdas", abl.lambdas, "lambda sweep (default: --lambda)")->delimiter(',');
    ablate->add_option("--seeds", abl.seeds, "seed list (default: --seed)")->delimiter(',');
    ablate->add_option("--out-dir", out_dir)->capture_default_str();

    int instances = 20;
    auto* grad = app.add_subcommand("gradcheck", "finite-difference check of every adjoint");
    grad->add_option("--instances", instances)->capture_default_str();

    try {
        app.parse(argc, argv);
    } catch (const CLI::ParseError& e) {
        int code = app.exit(e);
        return code == 0 ? ok : usage;
    }

    try {
        if (*train) return cmd_train(dataset, config, out_dir);
        if (*eval) return cmd_eval(dataset, labels_path);
        if (*gen) return cmd_gen_sbm(sbm, out_dir);
        if (*ablate) return cmd_ablate(dataset, config, abl, out_dir);
        if (*grad) return cmd_gradcheck(instances);
    } catch (const DataError& e) {
        std::cerr << "data error: " << e.what() << '\n';
        return data;
    } catch (const NumericalError& e) {
        std::cerr << "numerical failure: " << e.what() << '\n';
        return numerical;
    } catch (const ContractError& e) {
        std::cerr << "usage error: " << e.what() << '\n';
        return usage;
    } catch (const std::exception& e) {
        std::cerr << "error: " << e.what() << '\n';
        return data;
    }
    return usage;
}
