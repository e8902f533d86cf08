#define DOCTEST_CONFIG_IMPLEMENT_WITH_MAIN
#include <doctest.h>

#include <cmath>
#include <cstdio>
#include <fstream>
#include <set>
#include <sstream>

#include "fgnn/train.hpp"

using namespace fgnn;
using namespace fgnn::checkers;

namespace {

Dataset small_dataset(uint64_t seed = 1, int games = 60) {
    return gen_synthetic_dataset(seed, games);
}

std::string file_bytes(const std::string& path) {
    std::ifstream is(path, std::ios::binary);
    std::ostringstream os;
    os << is.rdbuf();
    return os.str();
}

}  // namespace

TEST_CASE("cross entropy of a uniform 128-way policy is ln(128)") {
    Tensor probs({4, 128});
    for (auto& v : probs.data) v = real_t(1) / 128;
    Tensor dummy;
    const real_t loss = cross_entropy_loss(probs, {0, 17, 63, 127}, dummy);
    CHECK(loss == doctest::Approx(std::log(128.0)).epsilon(1e-12));
    CHECK(std::log(128.0) == doctest::Approx(4.852030).epsilon(1e-6));
}

TEST_CASE("a fresh network starts near the uniform-policy loss") {
    BuiltNetwork net(build_baseline_cnn(4, 10), 3);
    Dataset data = small_dataset(2, 20);
    std::vector<const PositionRecord*> recs;
    for (const auto& r : data.records) recs.push_back(&r);
    EvalResult res = evaluate(net, recs);
    CHECK(res.mean_loss > 4.2);
    CHECK(res.mean_loss < 5.6);
}

TEST_CASE("cross entropy gradient matches finite differences") {
    Tensor probs({2, 5});
    Rng rng(4);
    rng.fill_uniform(probs, real_t(0.05), real_t(1));
    std::vector<int> labels{3, 1};
    Tensor grad;
    const real_t base = cross_entropy_loss(probs, labels, grad);
    const real_t h = real_t(1e-7);
    for (size_t i = 0; i < probs.data.size(); ++i) {
        Tensor bumped = probs;
        bumped.data[i] += h;
        Tensor unused;
        const real_t fd = (cross_entropy_loss(bumped, labels, unused) - base) / h;
        CHECK(grad.data[i] == doctest::Approx(fd).epsilon(1e-3));
    }
}

TEST_CASE("pixel bce is zero at the targets and penalizes mistakes") {
    Tensor probs({1, 1, 2, 2}, {real_t(0.9), real_t(0.1), real_t(0.5), real_t(0.99)});
    Tensor grad;
    CHECK(pixel_bce_loss(probs, probs, grad) <
          pixel_bce_loss(probs, Tensor({1, 1, 2, 2}, {0, 1, 1, 0}), grad));
    const real_t h = real_t(1e-7);
    Tensor targets({1, 1, 2, 2}, {1, 0, 1, 0});
    const real_t base = pixel_bce_loss(probs, targets, grad);
    for (size_t i = 0; i < probs.data.size(); ++i) {
        Tensor bumped = probs;
        bumped.data[i] += h;
        Tensor unused;
        const real_t fd = (pixel_bce_loss(bumped, targets, unused) - base) / h;
        CHECK(grad.data[i] == doctest::Approx(fd).epsilon(1e-3));
    }
}

TEST_CASE("zero learning rate keeps metrics constant across epochs") {
    BuiltNetwork net(build_baseline_cnn(2, 3), 5);
    TrainConfig cfg;
    cfg.learning_rate = 0;
    cfg.epochs = 2;
    cfg.seed = 5;
    auto metrics = train(net, small_dataset(3, 30), cfg);
    REQUIRE(metrics.size() == 2);
    CHECK(metrics[0].train_loss == metrics[1].train_loss);
    CHECK(metrics[0].train_top1 == metrics[1].train_top1);
    CHECK(metrics[0].test_top1 == metrics[1].test_top1);
    CHECK(metrics[0].test_top3 == metrics[1].test_top3);
}

TEST_CASE("sgd with momentum drives a single sample to near-zero loss") {
    BuiltNetwork net(build_fgnn_cnn(flip_group(), 3, 4), 6);
    Dataset data = small_dataset(4, 5);
    const PositionRecord& rec = data.records[10];
    Tensor x = encode_board(rec.board);
    std::vector<int> label{rec.move.encoding()};
    TrainConfig cfg;
    cfg.learning_rate = real_t(0.05);
    real_t loss = 0;
    int steps = 0;
    for (; steps < 500; ++steps) {
        loss = train_step(net, x, label, cfg);
        if (loss < real_t(0.01)) break;
    }
    CHECK(loss < 0.01);
    CHECK(steps < 500);
}

TEST_CASE("training reduces the loss on a small dataset") {
    BuiltNetwork net(build_baseline_cnn(4, 4), 7);
    TrainConfig cfg;
    cfg.epochs = 3;
    cfg.seed = 7;
    auto metrics = train(net, small_dataset(5, 60), cfg);
    CHECK(metrics.back().train_loss < metrics.front().train_loss);
    for (const auto& m : metrics) CHECK(m.test_top3 >= m.test_top1);
}

TEST_CASE("the game-id split keeps games whole") {
    Dataset data = small_dataset(6, 50);
    SplitDataset split = split_by_game(data, real_t(0.1), 9);
    CHECK(split.train.size() + split.test.size() == data.records.size());
    CHECK_FALSE(split.test.empty());
    std::set<int> train_games, test_games;
    for (const auto* r : split.train) train_games.insert(r->game);
    for (const auto* r : split.test) test_games.insert(r->game);
    for (int g : test_games) CHECK(train_games.count(g) == 0);
}

TEST_CASE("metrics csv bytes are identical across reruns") {
    Dataset data = small_dataset(8, 40);
    TrainConfig cfg;
    cfg.epochs = 2;
    cfg.seed = 11;
    auto run = [&](const std::string& path) {
        BuiltNetwork net(build_fgnn_cnn(flip_group(), 2, 3), cfg.seed);
        auto metrics = train(net, data, cfg);
        write_metrics_csv(path, net.spec().name, net.group().order, net.param_count(), cfg.seed,
                          metrics);
    };
    run("metrics_a_test.csv");
    run("metrics_b_test.csv");
    const std::string a = file_bytes("metrics_a_test.csv");
    CHECK(a == file_bytes("metrics_b_test.csv"));
    CHECK(a.find("model,group,params,seed,epoch,train_loss,train_top1,test_top1,test_top3,"
                 "wall_ms") == 0);
    std::remove("metrics_a_test.csv");
    std::remove("metrics_b_test.csv");
}

TEST_CASE("training an fgnn net preserves its equivariance") {
    BuiltNetwork net(build_fgnn_cnn(flip_group(), 2, 4), 12);
    TrainConfig cfg;
    cfg.epochs = 1;
    cfg.seed = 12;
    train(net, small_dataset(9, 30), cfg);
    EquivarianceReport rep = check_network_equivariance(
        net, net.group(), OutputAction::ReflectPolicy, 5, real_t(1e-9));
    CHECK(rep.pass);
}

TEST_CASE("checkpoints restore evaluation results") {
    BuiltNetwork net(build_baseline_cnn(2, 3), 13);
    Dataset data = small_dataset(10, 30);
    TrainConfig cfg;
    cfg.epochs = 1;
    cfg.seed = 13;
    train(net, data, cfg);
    std::vector<const PositionRecord*> recs;
    for (const auto& r : data.records) recs.push_back(&r);
    EvalResult before = evaluate(net, recs);
    net.params().save("weights_roundtrip_test.fgnn");

    BuiltNetwork fresh(build_baseline_cnn(2, 3), 999);
    fresh.param_count();
    fresh.params().load("weights_roundtrip_test.fgnn");
    EvalResult after = evaluate(fresh, recs);
    CHECK(before.top1 == after.top1);
    CHECK(before.top3 == after.top3);
    CHECK(before.mean_loss == after.mean_loss);
    std::remove("weights_roundtrip_test.fgnn");
}

TEST_CASE("empty datasets are rejected") {
    BuiltNetwork net(build_baseline_cnn(2, 2), 14);
    Dataset empty;
    TrainConfig cfg;
    CHECK_THROWS_AS(train(net, empty, cfg), EmptyDataset);
}

TEST_CASE("train config json roundtrip") {
    TrainConfig cfg;
    cfg.learning_rate = real_t(0.02);
    cfg.epochs = 7;
    cfg.seed = 99;
    cfg.loss = LossKind::PixelBinaryCrossEntropy;
    TrainConfig back = TrainConfig::from_json(cfg.to_json());
    CHECK(back.learning_rate == cfg.learning_rate);
    CHECK(back.epochs == cfg.epochs);
    CHECK(back.seed == cfg.seed);
    CHECK(back.loss == cfg.loss);
}

TEST_CASE("run aggregation orders rows by model, size, seed and epoch") {
    namespace fs = std::filesystem;
    fs::create_directories("runs_agg_test/b");
    fs::create_directories("runs_agg_test/a");
    std::vector<MetricsRecord> recs(1);
    recs[0].epoch = 1;
    write_metrics_csv("runs_agg_test/b/metrics.csv", "zeta", 2, 50, 1, recs);
    write_metrics_csv("runs_agg_test/a/metrics.csv", "alpha", 1, 99, 2, recs);
    aggregate_metrics("runs_agg_test", "runs_agg_test/results.csv");
    std::string all = file_bytes("runs_agg_test/results.csv");
    CHECK(all.find("alpha") < all.find("zeta"));
    fs::remove_all("runs_agg_test");
}
