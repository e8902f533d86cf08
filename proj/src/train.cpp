#include "fgnn/train.hpp"

#include <algorithm>
#include <chrono>
#include <cinttypes>
#include <cstdio>
#include <filesystem>
#include <fstream>

namespace fgnn {

TrainConfig TrainConfig::from_json(const nlohmann::json& doc) {
    TrainConfig cfg;
    cfg.learning_rate = doc.value("learning_rate", cfg.learning_rate);
    cfg.momentum = doc.value("momentum", cfg.momentum);
    if (doc.contains("loss")) {
        const std::string l = doc["loss"].get<std::string>();
        if (l == "categorical-cross-entropy")
            cfg.loss = LossKind::CategoricalCrossEntropy;
        else if (l == "pixel-bce")
            cfg.loss = LossKind::PixelBinaryCrossEntropy;
        else
            throw Error("unknown loss '" + l + "'");
    }
    cfg.epochs = doc.value("epochs", cfg.epochs);
    cfg.batch_size = doc.value("batch_size", cfg.batch_size);
    cfg.seed = doc.value("seed", cfg.seed);
    cfg.test_fraction = doc.value("test_fraction", cfg.test_fraction);
    cfg.record_wall_time = doc.value("record_wall_time", cfg.record_wall_time);
    return cfg;
}

nlohmann::json TrainConfig::to_json() const {
    return {{"learning_rate", learning_rate},
            {"momentum", momentum},
            {"loss", loss == LossKind::CategoricalCrossEntropy ? "categorical-cross-entropy"
                                                               : "pixel-bce"},
            {"epochs", epochs},
            {"batch_size", batch_size},
            {"seed", seed},
            {"test_fraction", test_fraction},
            {"record_wall_time", record_wall_time}};
}

real_t cross_entropy_loss(const Tensor& probs, const std::vector<int>& labels, Tensor& dprobs) {
    if (probs.rank() != 2 || probs.shape[0] != static_cast<int>(labels.size()))
        throw ShapeMismatch("cross entropy: probs " + Tensor::shape_str(probs.shape) + " vs " +
                            std::to_string(labels.size()) + " labels");
    const int B = probs.shape[0];
    dprobs = Tensor(probs.shape);
    real_t loss = 0;
    const real_t floor = real_t(1e-30);
    for (int b = 0; b < B; ++b) {
        const real_t p = std::max(probs(b, labels[static_cast<size_t>(b)]), floor);
        loss -= std::log(p);
        dprobs(b, labels[static_cast<size_t>(b)]) = -real_t(1) / (p * static_cast<real_t>(B));
    }
    return loss / static_cast<real_t>(B);
}

real_t pixel_bce_loss(const Tensor& probs, const Tensor& targets, Tensor& dprobs) {
    if (!probs.same_shape(targets))
        throw ShapeMismatch("bce: " + Tensor::shape_str(probs.shape) + " vs " +
                            Tensor::shape_str(targets.shape));
    dprobs = Tensor(probs.shape);
    const real_t n = static_cast<real_t>(probs.size());
    const real_t eps = real_t(1e-12);
    real_t loss = 0;
    for (size_t i = 0; i < probs.data.size(); ++i) {
        const real_t y = std::clamp(probs.data[i], eps, real_t(1) - eps);
        const real_t t = targets.data[i];
        loss -= t * std::log(y) + (real_t(1) - t) * std::log(real_t(1) - y);
        dprobs.data[i] = (y - t) / (y * (real_t(1) - y)) / n;
    }
    return loss / n;
}

void sgd_momentum_step(ParamStore& params, real_t lr, real_t momentum) {
    for (size_t i = 0; i < params.count(); ++i) {
        Param& p = params.at(static_cast<int>(i));
        for (size_t j = 0; j < p.value.data.size(); ++j) {
            p.velocity.data[j] = momentum * p.velocity.data[j] - lr * p.grad.data[j];
            p.value.data[j] += p.velocity.data[j];
        }
    }
}

real_t train_step(BuiltNetwork& net, const Tensor& inputs, const std::vector<int>& labels,
                  const TrainConfig& cfg) {
    Graph g(net.params());
    Graph::Value out = net.forward_on(g, g.input(inputs));
    Tensor dprobs;
    const real_t loss = cross_entropy_loss(g.value(out), labels, dprobs);
    net.params().zero_grads();
    g.backward(out, dprobs);
    sgd_momentum_step(net.params(), cfg.learning_rate, cfg.momentum);
    return loss;
}

SplitDataset split_by_game(const checkers::Dataset& data, real_t test_fraction, uint64_t seed) {
    std::vector<int> games;
    for (const auto& rec : data.records)
        if (games.empty() || games.back() != rec.game) {
            if (std::find(games.begin(), games.end(), rec.game) == games.end())
                games.push_back(rec.game);
        }
    Rng rng(seed ^ 0x517cc1b7u);
    rng.shuffle(games);
    const size_t n_test = static_cast<size_t>(std::llround(test_fraction * static_cast<double>(games.size())));
    std::vector<bool> is_test_game;
    {
        int max_game = 0;
        for (int g : games) max_game = std::max(max_game, g);
        is_test_game.assign(static_cast<size_t>(max_game) + 1, false);
        for (size_t i = 0; i < n_test; ++i) is_test_game[static_cast<size_t>(games[i])] = true;
    }
    SplitDataset split;
    for (const auto& rec : data.records)
        (is_test_game[static_cast<size_t>(rec.game)] ? split.test : split.train).push_back(&rec);
    return split;
}

namespace {

// rank of the label under descending probability with index tie-break
int label_rank(const Tensor& probs, int row, int label) {
    const real_t pl = probs(row, label);
    int rank = 0;
    for (int i = 0; i < probs.shape[1]; ++i) {
        if (i == label) continue;
        const real_t p = probs(row, i);
        if (p > pl || (p == pl && i < label)) ++rank;
    }
    return rank;
}

Tensor encode_batch(const std::vector<const checkers::PositionRecord*>& recs, size_t begin,
                    size_t count, std::vector<int>& labels) {
    Tensor x({static_cast<int>(count), 1, 8, 8});
    labels.resize(count);
    for (size_t i = 0; i < count; ++i) {
        const auto& rec = *recs[begin + i];
        for (int r = 0; r < 8; ++r)
            for (int c = 0; c < 8; ++c)
                x(static_cast<int>(i), 0, r, c) = static_cast<real_t>(rec.board.at(r, c));
        labels[i] = rec.move.encoding();
    }
    return x;
}

}  // namespace

EvalResult evaluate(BuiltNetwork& net, const std::vector<const checkers::PositionRecord*>& records,
                    int batch_size) {
    EvalResult res;
    if (records.empty()) return res;
    int64_t hit1 = 0, hit3 = 0;
    real_t loss_sum = 0;
    for (size_t begin = 0; begin < records.size(); begin += static_cast<size_t>(batch_size)) {
        const size_t count = std::min(static_cast<size_t>(batch_size), records.size() - begin);
        std::vector<int> labels;
        Tensor x = encode_batch(records, begin, count, labels);
        Tensor probs = net.forward(x);
        Tensor unused;
        loss_sum += cross_entropy_loss(probs, labels, unused) * static_cast<real_t>(count);
        for (size_t i = 0; i < count; ++i) {
            const int rank = label_rank(probs, static_cast<int>(i), labels[i]);
            if (rank < 1) ++hit1;
            if (rank < 3) ++hit3;
        }
    }
    res.count = static_cast<int64_t>(records.size());
    res.top1 = static_cast<real_t>(hit1) / static_cast<real_t>(res.count);
    res.top3 = static_cast<real_t>(hit3) / static_cast<real_t>(res.count);
    res.mean_loss = loss_sum / static_cast<real_t>(res.count);
    return res;
}

std::vector<MetricsRecord> train(BuiltNetwork& net, const checkers::Dataset& data,
                                 const TrainConfig& cfg) {
    if (data.records.empty()) throw EmptyDataset("training on an empty dataset");
    SplitDataset split = split_by_game(data, cfg.test_fraction, cfg.seed);
    if (split.train.empty()) throw EmptyDataset("no games left in the training split");

    Rng shuffle_rng(cfg.seed + 0x9E3779B9u);
    std::vector<size_t> order(split.train.size());
    for (size_t i = 0; i < order.size(); ++i) order[i] = i;

    std::vector<MetricsRecord> out;
    for (int epoch = 1; epoch <= cfg.epochs; ++epoch) {
        const auto t0 = std::chrono::steady_clock::now();
        shuffle_rng.shuffle(order);
        real_t loss_sum = 0;
        int64_t hit1 = 0;
        std::vector<const checkers::PositionRecord*> batch_recs;
        for (size_t begin = 0; begin < order.size(); begin += static_cast<size_t>(cfg.batch_size)) {
            const size_t count =
                std::min(static_cast<size_t>(cfg.batch_size), order.size() - begin);
            batch_recs.clear();
            for (size_t i = 0; i < count; ++i) batch_recs.push_back(split.train[order[begin + i]]);
            std::vector<int> labels;
            Tensor x = encode_batch(batch_recs, 0, count, labels);

            Graph g(net.params());
            Graph::Value out_v = net.forward_on(g, g.input(x));
            const Tensor& probs = g.value(out_v);
            for (size_t i = 0; i < count; ++i)
                if (label_rank(probs, static_cast<int>(i), labels[i]) < 1) ++hit1;
            Tensor dprobs;
            loss_sum += cross_entropy_loss(probs, labels, dprobs) * static_cast<real_t>(count);
            net.params().zero_grads();
            g.backward(out_v, dprobs);
            sgd_momentum_step(net.params(), cfg.learning_rate, cfg.momentum);
        }
        EvalResult test = evaluate(net, split.test, std::max(cfg.batch_size, 64));
        MetricsRecord rec;
        rec.epoch = epoch;
        rec.train_loss = loss_sum / static_cast<real_t>(split.train.size());
        rec.train_top1 = static_cast<real_t>(hit1) / static_cast<real_t>(split.train.size());
        rec.test_top1 = test.top1;
        rec.test_top3 = test.top3;
        if (cfg.record_wall_time)
            rec.wall_ms = std::chrono::duration_cast<std::chrono::milliseconds>(
                              std::chrono::steady_clock::now() - t0)
                              .count();
        out.push_back(rec);
    }
    return out;
}

void write_metrics_csv(const std::string& path, const std::string& model, int group_order,
                       int64_t params, uint64_t seed, const std::vector<MetricsRecord>& records) {
    std::ofstream os(path);
    if (!os) throw Error("cannot write metrics '" + path + "'");
    os << "model,group,params,seed,epoch,train_loss,train_top1,test_top1,test_top3,wall_ms\n";
    char buf[256];
    for (const auto& r : records) {
        std::snprintf(buf, sizeof(buf), "%s,%d,%" PRId64 ",%" PRIu64 ",%d,%.6f,%.6f,%.6f,%.6f,%" PRId64 "\n",
                      model.c_str(), group_order, params, seed, r.epoch,
                      static_cast<double>(r.train_loss), static_cast<double>(r.train_top1),
                      static_cast<double>(r.test_top1), static_cast<double>(r.test_top3),
                      r.wall_ms);
        os << buf;
    }
}

void aggregate_metrics(const std::string& runs_dir, const std::string& out_path) {
    namespace fs = std::filesystem;
    struct Row {
        std::string model;
        int64_t params = 0;
        uint64_t seed = 0;
        int epoch = 0;
        std::string line;
    };
    std::vector<Row> rows;
    std::vector<fs::path> files;
    for (const auto& entry : fs::recursive_directory_iterator(runs_dir))
        if (entry.is_regular_file() && entry.path().filename() == "metrics.csv")
            files.push_back(entry.path());
    std::sort(files.begin(), files.end());
    for (const auto& f : files) {
        std::ifstream is(f);
        std::string line;
        std::getline(is, line);  // header
        while (std::getline(is, line)) {
            if (line.empty()) continue;
            Row row;
            row.line = line;
            // model,group,params,seed,epoch,...
            size_t p0 = line.find(',');
            row.model = line.substr(0, p0);
            size_t p1 = line.find(',', p0 + 1);
            size_t p2 = line.find(',', p1 + 1);
            size_t p3 = line.find(',', p2 + 1);
            size_t p4 = line.find(',', p3 + 1);
            row.params = std::stoll(line.substr(p1 + 1, p2 - p1 - 1));
            row.seed = std::stoull(line.substr(p2 + 1, p3 - p2 - 1));
            row.epoch = std::stoi(line.substr(p3 + 1, p4 - p3 - 1));
            rows.push_back(std::move(row));
        }
    }
    std::stable_sort(rows.begin(), rows.end(), [](const Row& a, const Row& b) {
        return std::tie(a.model, a.params, a.seed, a.epoch) <
               std::tie(b.model, b.params, b.seed, b.epoch);
    });
    std::ofstream os(out_path);
    if (!os) throw Error("cannot write report '" + out_path + "'");
    os << "model,group,params,seed,epoch,train_loss,train_top1,test_top1,test_top3,wall_ms\n";
    for (const auto& r : rows) os << r.line << "\n";
}

}  // namespace fgnn
