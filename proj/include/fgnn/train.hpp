#pragma once

#include <string>
#include <vector>

#include "fgnn/checkers.hpp"
#include "fgnn/network.hpp"

namespace fgnn {

struct EmptyDataset : Error {
    using Error::Error;
};

enum class LossKind { CategoricalCrossEntropy, PixelBinaryCrossEntropy };

struct TrainConfig {
    real_t learning_rate = real_t(0.01);
    real_t momentum = real_t(0.9);
    LossKind loss = LossKind::CategoricalCrossEntropy;
    int epochs = 5;
    int batch_size = 32;
    uint64_t seed = 1;
    real_t test_fraction = real_t(0.1);
    // wall times make the metrics file run-dependent, so they are opt-in
    bool record_wall_time = false;

    static TrainConfig from_json(const nlohmann::json& doc);
    nlohmann::json to_json() const;
};

struct MetricsRecord {
    int epoch = 0;
    real_t train_loss = 0;
    real_t train_top1 = 0;
    real_t test_top1 = 0;
    real_t test_top3 = 0;
    int64_t wall_ms = 0;
};

/// Mean negative log likelihood of the labels under the probability rows;
/// writes the gradient with respect to the probabilities.
real_t cross_entropy_loss(const Tensor& probs, const std::vector<int>& labels, Tensor& dprobs);

/// Mean per-pixel binary cross entropy against targets in [0,1].
real_t pixel_bce_loss(const Tensor& probs, const Tensor& targets, Tensor& dprobs);

void sgd_momentum_step(ParamStore& params, real_t lr, real_t momentum);

/// One forward/backward/update on a labelled batch; returns the batch loss.
real_t train_step(BuiltNetwork& net, const Tensor& inputs, const std::vector<int>& labels,
                  const TrainConfig& cfg);

struct SplitDataset {
    std::vector<const checkers::PositionRecord*> train;
    std::vector<const checkers::PositionRecord*> test;
};

/// Held-out split by game id, so positions of one game never straddle the
/// split. Deterministic in the seed.
SplitDataset split_by_game(const checkers::Dataset& data, real_t test_fraction, uint64_t seed);

struct EvalResult {
    real_t top1 = 0;
    real_t top3 = 0;
    real_t mean_loss = 0;
    int64_t count = 0;
};

EvalResult evaluate(BuiltNetwork& net,
                    const std::vector<const checkers::PositionRecord*>& records,
                    int batch_size = 64);

/// Epoch loop over the game-id split: shuffled minibatches, SGD with
/// momentum, per-epoch metrics on the held-out games.
std::vector<MetricsRecord> train(BuiltNetwork& net, const checkers::Dataset& data,
                                 const TrainConfig& cfg);

// metrics CSV: model,group,params,seed,epoch,train_loss,train_top1,test_top1,test_top3,wall_ms
void write_metrics_csv(const std::string& path, const std::string& model, int group_order,
                       int64_t params, uint64_t seed, const std::vector<MetricsRecord>& records);

/// Concatenates per-run metrics files under runs_dir into one CSV ordered by
/// (model, params, seed, epoch).
void aggregate_metrics(const std::string& runs_dir, const std::string& out_path);

}  // namespace fgnn
