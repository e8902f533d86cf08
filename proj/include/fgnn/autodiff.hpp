#pragma once

#include <map>
#include <string>
#include <vector>

#include "fgnn/group.hpp"
#include "fgnn/tensor.hpp"

namespace fgnn {

struct NoForwardRecorded : Error {
    using Error::Error;
};

enum class LayerOp {
    Conv2d,
    Dense,
    Relu,
    Sigmoid,
    MaxPool,
    AvgPool,
    Upsample,
    Softmax,
    Flatten,
};

const char* layer_op_name(LayerOp op);

/// A configured layer. Parameterized kinds (conv2d, dense) own named weights
/// in the ParamStore under "<name>.w" / "<name>.b"; using the same name twice
/// shares the parameters.
struct Layer {
    LayerOp op = LayerOp::Relu;
    std::string name;
    int out_channels = 0;
    int kernel = 1;
    int stride = 1;
    int factor = 2;

    static Layer conv2d(std::string name, int filters, int kernel, int stride = 1) {
        return {LayerOp::Conv2d, std::move(name), filters, kernel, stride, 2};
    }
    static Layer dense(std::string name, int out_features) {
        return {LayerOp::Dense, std::move(name), out_features, 1, 1, 2};
    }
    static Layer relu() { return {LayerOp::Relu, "", 0, 1, 1, 2}; }
    static Layer sigmoid() { return {LayerOp::Sigmoid, "", 0, 1, 1, 2}; }
    static Layer maxpool(int k, int stride) { return {LayerOp::MaxPool, "", 0, k, stride, 2}; }
    static Layer avgpool(int k, int stride) { return {LayerOp::AvgPool, "", 0, k, stride, 2}; }
    static Layer upsample(int factor) { return {LayerOp::Upsample, "", 0, 1, 1, factor}; }
    static Layer softmax() { return {LayerOp::Softmax, "", 0, 1, 1, 2}; }
    static Layer flatten() { return {LayerOp::Flatten, "", 0, 1, 1, 2}; }
};

struct Param {
    std::string name;
    Tensor value;
    Tensor grad;
    Tensor velocity;
};

/// Named parameter set with seeded initialization. Parameters are created in
/// build order, so a fixed seed and build order give identical weights.
class ParamStore {
  public:
    explicit ParamStore(uint64_t seed = 0) : rng_(seed) {}

    int find(const std::string& name) const;
    // init_limit > 0 draws Uniform(-limit, limit); 0 zero-fills
    int get_or_create(const std::string& name, const std::vector<int>& shape, real_t init_limit);

    Param& at(int id) { return params_[id]; }
    const Param& at(int id) const { return params_[id]; }
    size_t count() const { return params_.size(); }
    int64_t total_values() const;

    void zero_grads();

    void save(const std::string& path) const;
    void load(const std::string& path);  // overwrites by name, creates missing entries

  private:
    std::vector<Param> params_;
    std::map<std::string, int> index_;
    Rng rng_;
};

/// Reverse-mode tape. forward-style calls record onto the tape; backward
/// walks it in reverse, accumulating node gradients additively (fan-out sums)
/// and parameter gradients into the ParamStore.
class Graph {
  public:
    using Value = int;

    explicit Graph(ParamStore& params) : params_(&params) {}

    Value input(Tensor x);
    Value apply(const Layer& layer, Value x);

    Value spatial(Value x, const SpatialAction& a);
    Value channel_permute(Value x, std::vector<int> channel_map);  // out[c] = in[map[c]]
    Value concat_channels(const std::vector<Value>& xs);
    Value slice_channels(Value x, int begin, int count);
    Value add(const std::vector<Value>& xs);
    Value scale(Value x, real_t s);
    // per batch item: out[j] = in.flat[indices[j]], indices over the C*H*W block
    Value gather(Value x, std::vector<int> indices);

    const Tensor& value(Value v) const { return nodes_.at(v).value; }
    const Tensor& grad(Value v) const { return nodes_.at(v).grad; }
    size_t num_nodes() const { return nodes_.size(); }

    /// Seeds d(out) and accumulates parameter gradients. The tape is consumed
    /// (a second backward without a new forward throws NoForwardRecorded);
    /// node values and gradients stay readable until reset().
    void backward(Value out, const Tensor& dout);

    void reset();
    ParamStore& params() { return *params_; }

  private:
    enum class OpKind {
        Layer,
        Spatial,
        ChannelPermute,
        Concat,
        Slice,
        Add,
        Scale,
        Gather,
    };
    struct Node {
        Tensor value;
        Tensor grad;  // allocated during backward
    };
    struct Op {
        OpKind kind;
        Layer layer;
        std::vector<Value> inputs;
        Value out = -1;
        int param_w = -1, param_b = -1;
        SpatialAction action;
        std::vector<int> imap;       // channel map / gather indices / pool argmax
        std::vector<int> in_shape;   // flatten restore
        real_t factor = 1;           // scale
    };

    Value push_node(Tensor t);
    Tensor& grad_buf(Value v);
    void backward_op(const Op& op);
    void backward_layer(const Op& op);

    std::vector<Node> nodes_;
    std::vector<Op> tape_;
    ParamStore* params_;
};

// pointwise/pooling forwards usable outside a graph
Tensor relu(const Tensor& x);
Tensor sigmoid(const Tensor& x);
Tensor maxpool(const Tensor& x, int k, int stride);
Tensor avgpool(const Tensor& x, int k, int stride);
Tensor upsample_nearest(const Tensor& x, int factor);
Tensor softmax_rows(const Tensor& x);

/// Channel axis split into n equal contiguous blocks; stack is its inverse.
std::vector<Tensor> channel_slice(const Tensor& x, int n_slices);
Tensor channel_stack(const std::vector<Tensor>& slices);

}  // namespace fgnn
