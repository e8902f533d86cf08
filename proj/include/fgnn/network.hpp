#pragma once

#include <string>
#include <vector>

#include <json.hpp>

#include "fgnn/equivariant.hpp"

namespace fgnn {

struct UnsupportedGroup : Error {
    using Error::Error;
};
struct IndivisibleSpatial : Error {
    using Error::Error;
};

enum class NodeOp {
    Conv2d,
    Dense,
    Relu,
    Sigmoid,
    MaxPool,
    AvgPool,
    Upsample,
    Softmax,
    Flatten,
    Lift,
    DropSum,
    DropIdentity,
    MoveDrop,
    Merge,
    MaskDarkSquares,
};

const char* node_op_name(NodeOp op);

struct NetworkNode {
    std::string id;
    NodeOp op = NodeOp::Relu;
    std::vector<std::string> inputs;  // node ids; "$input" is the network input
    bool wrapped = false;
    int filters = 0;
    int kernel = 3;
    int stride = 1;
    int factor = 2;
    MoveDropSpec move_spec;
};

enum class OutputAction { Identity, Spatial, ReflectPolicy };

/// DAG of layers in topological order, with the group annotation and the
/// action the output space transforms under.
struct NetworkSpec {
    std::string name;
    std::vector<int> input_shape;  // (C, H, W)
    nlohmann::json group;          // group definition document
    std::vector<NetworkNode> nodes;
    std::string output;
    OutputAction output_action = OutputAction::Identity;

    static NetworkSpec from_json(const nlohmann::json& doc);
    nlohmann::json to_json() const;
};

/// A spec bound to its group and parameter store. Parameters are created on
/// the first forward pass, in node order, from the seeded initializer.
class BuiltNetwork {
  public:
    BuiltNetwork(NetworkSpec spec, uint64_t param_seed);

    Graph::Value forward_on(Graph& g, Graph::Value input);
    Tensor forward(const Tensor& input);  // records nothing persistent

    const NetworkSpec& spec() const { return spec_; }
    const FiniteGroup& group() const { return group_; }
    ParamStore& params() { return params_; }
    int64_t param_count();

  private:
    NetworkSpec spec_;
    FiniteGroup group_;
    ParamStore params_;
    bool built_ = false;
};

// §: baseline comparison pair
NetworkSpec build_baseline_cnn(int filters_per_layer, int depth = 10);
NetworkSpec build_fgnn_cnn(const nlohmann::json& group, int filters_per_layer, int depth = 10);
NetworkSpec build_mini_unet(const nlohmann::json& group, int levels = 2, int base_filters = 4,
                            int side = 32);

/// Smallest FGNN filter count whose parameter total lands within +-10% of the
/// baseline at the given width, preferring the closest match.
int matched_fgnn_filters(int baseline_filters, int depth = 10);

struct EquivarianceReport {
    std::vector<real_t> residuals;  // max residual per group element
    real_t max_residual = 0;
    real_t tolerance = 0;
    bool pass = false;
    int samples = 0;
    std::string str() const;
};

/// Both-sides check of N(gX) = g'N(X) over random inputs for every element
/// of check_group, with g' selected by the output action.
EquivarianceReport check_network_equivariance(BuiltNetwork& net, const FiniteGroup& check_group,
                                              OutputAction output_action, int n_samples,
                                              real_t tolerance, uint64_t input_seed = 2024);

}  // namespace fgnn
