#include "dgen/pipeline.hpp"

#include <gtest/gtest.h>

#include <filesystem>
#include <fstream>
#include <set>

using namespace dgen;

namespace {

TrainConfig small_config() {
    TrainConfig cfg;
    cfg.pretrain_epochs = 15;
    cfg.train_epochs = 15;
    cfg.classifier_epochs = 15;
    cfg.center_refresh_interval = 5;
    cfg.target_refresh_interval = 2;
    cfg.encoder = {2, 8, 4, Activation::elu, Activation::identity};
    cfg.classifier = {2, 8, 0, Activation::elu, Activation::identity};
    return cfg;
}

const AttributedGraph& small_graph() {
    static const AttributedGraph g = generate_sbm({20, 20, 20}, 0.3, 0.02, 8, 3.0, 5);
    return g;
}

std::string slurp(const std::filesystem::path& p) {
    std::ifstream in(p);
    return {std::istreambuf_iterator<char>(in), {}};
}

}  // namespace

TEST(Pipeline, SameSeedSameLabels) {
    auto cfg = small_config();
    auto a = run_pipeline(small_graph(), cfg);
    auto b = run_pipeline(small_graph(), cfg);
    EXPECT_EQ(a.labels, b.labels);
    EXPECT_EQ(a.selected, b.selected);
    EXPECT_EQ(a.global_embedding, b.global_embedding);
}

TEST(Pipeline, ProducesOneValidLabelPerNode) {
    auto rep = run_pipeline(small_graph(), small_config());
    ASSERT_EQ(rep.labels.size(), 60u);
    for (int l : rep.labels) {
        EXPECT_GE(l, 0);
        EXPECT_LT(l, 3);
    }
    EXPECT_EQ(rep.selected.size(), static_cast<std::size_t>(selection_count(0.6, 60)));
    EXPECT_EQ(std::set<int>(rep.selected.begin(), rep.selected.end()).size(), rep.selected.size());
    ASSERT_TRUE(rep.scores.has_value());
    EXPECT_GE(rep.scores->acc, 1.0 / 3.0);
    EXPECT_EQ(rep.global_embedding.rows(), 60);
    EXPECT_EQ(rep.local_embedding.rows(), static_cast<Eigen::Index>(rep.selected.size()));
    for (const auto& p : rep.losses) EXPECT_TRUE(std::isfinite(p.loss));
}

TEST(Pipeline, EveryPoolingModeRuns) {
    auto reports = run_ablation(small_graph(), small_config(), {PoolMode::ncpool, PoolMode::topk, PoolMode::none});
    ASSERT_EQ(reports.size(), 3u);
    EXPECT_EQ(reports[2].selected.size(), 60u);
    EXPECT_EQ(reports[1].selected.size(), 36u);
    for (const auto& r : reports) EXPECT_EQ(r.labels.size(), 60u);
}

TEST(Pipeline, ClassifierReproducesCleanLabels) {
    // With well-separated features, fitting the classifier to the true labels
    // of a subset should recover them on that subset.
    const auto& g = small_graph();
    auto cfg = small_config();
    cfg.classifier_epochs = 60;
    std::vector<int> sel, lab;
    for (int i = 0; i < 60; i += 2) {
        sel.push_back(i);
        lab.push_back((*g.labels)[i]);
    }
    auto clf = train_classifier(g, sel, lab, cfg, 3);
    auto pred = predict_all(clf, g);
    int hit = 0;
    for (std::size_t r = 0; r < sel.size(); ++r) hit += pred[sel[r]] == lab[r];
    EXPECT_GE(hit, 27);
}

TEST(Pipeline, SingleLabelIsDegenerate) {
    std::vector<int> sel{0, 1, 2}, lab{1, 1, 1};
    EXPECT_THROW(train_classifier(small_graph(), sel, lab, small_config(), 3), DegenerateLabelsError);
}

TEST(Pipeline, NonFiniteFeaturesRaiseNumericalError) {
    auto g = small_graph();
    g.features(3, 2) = std::numeric_limits<double>::quiet_NaN();
    EXPECT_THROW(run_pipeline(g, small_config()), NumericalError);
}

TEST(Pipeline, ConfigValidation) {
    auto cfg = small_config();
    cfg.ratio = 0.0;
    EXPECT_THROW(run_pipeline(small_graph(), cfg), ContractError);
    cfg = small_config();
    cfg.lambda = -1;
    EXPECT_THROW(cfg.validate(), ContractError);
    EXPECT_THROW(parse_pool_mode("max"), ContractError);
    EXPECT_EQ(parse_pool_mode("topk"), PoolMode::topk);
    AttributedGraph unlabeled = small_graph();
    unlabeled.labels.reset();
    EXPECT_THROW(resolve_clusters(unlabeled, small_config()), ContractError);
}

TEST(Pipeline, WritesOutputsWithHeaders) {
    auto cfg = small_config();
    auto rep = run_pipeline(small_graph(), cfg);
    auto dir = std::filesystem::temp_directory_path() / "dgen_pipeline_outputs";
    std::filesystem::remove_all(dir);
    write_run_outputs(dir, small_graph(), rep, comment_header(cfg, "test run"));
    for (auto name : {"report.txt", "labels.txt", "embeddings.txt", "local_embeddings.txt", "model.ckpt"}) {
        auto text = slurp(dir / name);
        EXPECT_EQ(text.rfind("# test run\n", 0), 0u) << name;
        EXPECT_NE(text.find("# lambda = 10\n"), std::string::npos) << name;
    }
    auto ckpt = ad::load_checkpoint(dir / "model.ckpt");
    EXPECT_EQ(ckpt.size(), rep.parameters.size());
    std::filesystem::remove_all(dir);
}
