#include "fgnn/network.hpp"

#include <cmath>
#include <map>
#include <sstream>

#include "fgnn/checkers.hpp"

namespace fgnn {

namespace {

constexpr const char* kOpNames[] = {
    "conv2d",   "dense",    "relu",          "sigmoid", "maxpool",
    "avgpool",  "nearest-upsample", "softmax", "flatten", "lift",
    "drop-sum", "drop-identity", "move-drop", "merge",   "mask-dark-squares",
};

NodeOp node_op_from_name(const std::string& s) {
    for (size_t i = 0; i < std::size(kOpNames); ++i)
        if (s == kOpNames[i]) return static_cast<NodeOp>(i);
    throw Error("unknown network op '" + s + "'");
}

const char* output_action_name(OutputAction a) {
    switch (a) {
        case OutputAction::Identity: return "identity";
        case OutputAction::Spatial: return "spatial";
        case OutputAction::ReflectPolicy: return "reflect-policy";
    }
    return "?";
}

OutputAction output_action_from_name(const std::string& s) {
    if (s == "identity") return OutputAction::Identity;
    if (s == "spatial") return OutputAction::Spatial;
    if (s == "reflect-policy") return OutputAction::ReflectPolicy;
    throw Error("unknown output action '" + s + "'");
}

}  // namespace

const char* node_op_name(NodeOp op) { return kOpNames[static_cast<int>(op)]; }

NetworkSpec NetworkSpec::from_json(const nlohmann::json& doc) {
    NetworkSpec spec;
    spec.name = doc.value("name", "network");
    spec.input_shape = doc.at("input").get<std::vector<int>>();
    spec.group = doc.at("group");
    spec.output = doc.at("output").get<std::string>();
    spec.output_action = output_action_from_name(doc.value("output_action", "identity"));
    for (const auto& n : doc.at("nodes")) {
        NetworkNode node;
        node.id = n.at("id").get<std::string>();
        node.op = node_op_from_name(n.at("op").get<std::string>());
        node.inputs = n.at("in").get<std::vector<std::string>>();
        node.wrapped = n.value("wrapped", false);
        node.filters = n.value("filters", 0);
        node.kernel = n.value("kernel", 3);
        node.stride = n.value("stride", 1);
        node.factor = n.value("factor", 2);
        if (n.contains("move_spec")) {
            const auto& m = n["move_spec"];
            node.move_spec = {m.at("s0").get<int>(), m.at("x0").get<int>(), m.at("s0p").get<int>(),
                              m.at("x1").get<int>()};
        }
        spec.nodes.push_back(std::move(node));
    }
    return spec;
}

nlohmann::json NetworkSpec::to_json() const {
    nlohmann::json doc;
    doc["name"] = name;
    doc["input"] = input_shape;
    doc["group"] = group;
    doc["output"] = output;
    doc["output_action"] = output_action_name(output_action);
    auto& arr = doc["nodes"] = nlohmann::json::array();
    for (const auto& n : nodes) {
        nlohmann::json j;
        j["id"] = n.id;
        j["op"] = node_op_name(n.op);
        j["in"] = n.inputs;
        if (n.wrapped) j["wrapped"] = true;
        switch (n.op) {
            case NodeOp::Conv2d:
                j["filters"] = n.filters;
                j["kernel"] = n.kernel;
                if (n.stride != 1) j["stride"] = n.stride;
                break;
            case NodeOp::Dense: j["filters"] = n.filters; break;
            case NodeOp::MaxPool:
            case NodeOp::AvgPool:
                j["kernel"] = n.kernel;
                j["stride"] = n.stride;
                break;
            case NodeOp::Upsample: j["factor"] = n.factor; break;
            case NodeOp::MoveDrop:
                j["move_spec"] = {{"s0", n.move_spec.s0},
                                  {"x0", n.move_spec.x0},
                                  {"s0p", n.move_spec.s0p},
                                  {"x1", n.move_spec.x1}};
                break;
            default: break;
        }
        arr.push_back(std::move(j));
    }
    return doc;
}

BuiltNetwork::BuiltNetwork(NetworkSpec spec, uint64_t param_seed)
    : spec_(std::move(spec)), group_(group_from_json(spec_.group)), params_(param_seed) {}

Graph::Value BuiltNetwork::forward_on(Graph& g, Graph::Value input) {
    struct Slot {
        Graph::Value value = -1;
        int sc = 0;  // slice channels; 0 = unstacked
    };
    std::map<std::string, Slot> slots;
    {
        const Tensor& in = g.value(input);
        if (in.rank() != 4 || in.channels() != spec_.input_shape.at(0) ||
            in.height() != spec_.input_shape.at(1) || in.width() != spec_.input_shape.at(2))
            throw ShapeMismatch("network input " + Tensor::shape_str(in.shape) +
                                " does not match spec input (C,H,W) " +
                                Tensor::shape_str(spec_.input_shape));
    }
    slots["$input"] = {input, 0};
    const int n = group_.order;

    auto arg = [&](const NetworkNode& node, size_t i) -> Slot& {
        if (i >= node.inputs.size())
            throw Error("node '" + node.id + "' is missing input " + std::to_string(i));
        auto it = slots.find(node.inputs[i]);
        if (it == slots.end())
            throw Error("node '" + node.id + "' references unknown node '" + node.inputs[i] + "'");
        return it->second;
    };

    for (const auto& node : spec_.nodes) {
        Slot in = arg(node, 0);
        Slot out;
        auto require_stacked = [&](const char* what) {
            if (in.sc <= 0)
                throw GroupMismatch(std::string(what) + " node '" + node.id +
                                    "' needs a stacked input");
        };
        switch (node.op) {
            case NodeOp::Lift: {
                const int c = g.value(in.value).shape.at(1);
                out = {lift_g(g, in.value, group_), c};
                break;
            }
            case NodeOp::Conv2d: {
                Layer inner = Layer::conv2d(node.id, node.filters, node.kernel, node.stride);
                if (node.wrapped) {
                    require_stacked("wrapped conv");
                    out = {wrap_forward_g(g, inner, in.value, group_, in.sc), node.filters};
                } else {
                    int sc = (in.sc > 0 && node.filters % n == 0) ? node.filters / n : 0;
                    out = {g.apply(inner, in.value), sc};
                }
                break;
            }
            case NodeOp::Dense: {
                out = {g.apply(Layer::dense(node.id, node.filters), in.value), 0};
                break;
            }
            case NodeOp::Relu:
            case NodeOp::Sigmoid: {
                Layer l = node.op == NodeOp::Relu ? Layer::relu() : Layer::sigmoid();
                if (node.wrapped) {
                    require_stacked("wrapped pointwise");
                    out = {wrap_forward_g(g, l, in.value, group_, in.sc), in.sc};
                } else {
                    out = {g.apply(l, in.value), in.sc};
                }
                break;
            }
            case NodeOp::MaxPool:
            case NodeOp::AvgPool: {
                const Tensor& t = g.value(in.value);
                if (in.sc > 0) {
                    // passthrough inside the equivariant core needs whole tiles
                    if (node.kernel != node.stride || t.height() % node.kernel != 0 ||
                        t.width() % node.kernel != 0)
                        throw IndivisibleSpatial("pool " + std::to_string(node.kernel) + "/" +
                                                 std::to_string(node.stride) + " on " +
                                                 Tensor::shape_str(t.shape));
                }
                Layer l = node.op == NodeOp::MaxPool ? Layer::maxpool(node.kernel, node.stride)
                                                     : Layer::avgpool(node.kernel, node.stride);
                out = {g.apply(l, in.value), in.sc};
                break;
            }
            case NodeOp::Upsample: {
                out = {g.apply(Layer::upsample(node.factor), in.value), in.sc};
                break;
            }
            case NodeOp::Softmax: {
                out = {g.apply(Layer::softmax(), in.value), 0};
                break;
            }
            case NodeOp::Flatten: {
                out = {g.apply(Layer::flatten(), in.value), 0};
                break;
            }
            case NodeOp::DropSum: {
                require_stacked("drop-sum");
                out = {drop_sum_g(g, in.value, group_, in.sc), 0};
                break;
            }
            case NodeOp::DropIdentity: {
                require_stacked("drop-identity");
                out = {in.value, 0};
                break;
            }
            case NodeOp::MoveDrop: {
                require_stacked("move-drop");
                out = {move_drop_g(g, in.value, group_, node.move_spec), 0};
                break;
            }
            case NodeOp::Merge: {
                Slot b = arg(node, 1);
                require_stacked("merge");
                if (b.sc <= 0)
                    throw GroupMismatch("merge node '" + node.id + "' needs stacked inputs");
                out = {merge_g(g, in.value, in.sc, b.value, b.sc, group_), in.sc + b.sc};
                break;
            }
            case NodeOp::MaskDarkSquares: {
                out = {g.gather(in.value, checkers::policy_gather_indices()), 0};
                break;
            }
        }
        slots[node.id] = out;
    }
    auto it = slots.find(spec_.output);
    if (it == slots.end()) throw Error("output node '" + spec_.output + "' was never produced");
    built_ = true;
    return it->second.value;
}

Tensor BuiltNetwork::forward(const Tensor& input) {
    Graph g(params_);
    Graph::Value v = forward_on(g, g.input(input));
    Tensor out = g.value(v);
    g.reset();
    return out;
}

int64_t BuiltNetwork::param_count() {
    if (!built_) {
        Tensor probe({1, spec_.input_shape.at(0), spec_.input_shape.at(1), spec_.input_shape.at(2)});
        forward(probe);
    }
    return params_.total_values();
}

// ---------------------------------------------------------------------------
// builders
// ---------------------------------------------------------------------------

namespace {

NetworkNode conv_node(std::string id, std::string in, int filters, int kernel, bool wrapped) {
    NetworkNode n;
    n.id = std::move(id);
    n.op = NodeOp::Conv2d;
    n.inputs = {std::move(in)};
    n.filters = filters;
    n.kernel = kernel;
    n.wrapped = wrapped;
    return n;
}

NetworkNode simple_node(std::string id, NodeOp op, std::vector<std::string> in) {
    NetworkNode n;
    n.id = std::move(id);
    n.op = op;
    n.inputs = std::move(in);
    return n;
}

}  // namespace

NetworkSpec build_baseline_cnn(int filters_per_layer, int depth) {
    if (filters_per_layer < 1 || depth < 1) throw Error("baseline cnn needs filters, depth >= 1");
    NetworkSpec spec;
    spec.name = "cnn-f" + std::to_string(filters_per_layer);
    spec.input_shape = {1, 8, 8};
    spec.group = trivial_group();
    spec.output_action = OutputAction::ReflectPolicy;
    std::string prev = "$input";
    for (int i = 1; i < depth; ++i) {
        std::string cid = "c" + std::to_string(i);
        spec.nodes.push_back(conv_node(cid, prev, filters_per_layer, 3, false));
        spec.nodes.push_back(simple_node(cid + "r", NodeOp::Relu, {cid}));
        prev = cid + "r";
    }
    spec.nodes.push_back(conv_node("head", prev, 4, 3, false));
    spec.nodes.push_back(simple_node("mask", NodeOp::MaskDarkSquares, {"head"}));
    spec.nodes.push_back(simple_node("policy", NodeOp::Softmax, {"mask"}));
    spec.output = "policy";
    return spec;
}

NetworkSpec build_fgnn_cnn(const nlohmann::json& group, int filters_per_layer, int depth) {
    if (filters_per_layer < 1 || depth < 1) throw Error("fgnn cnn needs filters, depth >= 1");
    FiniteGroup grp = group_from_json(group);
    const bool flip_group = grp.order == 2 && grp.actions[1].kind == ActionKind::FlipH &&
                            grp.actions[1].channel_perm.empty();
    if (!flip_group)
        throw UnsupportedGroup("the checkers head needs the horizontal-flip group of order 2");
    NetworkSpec spec;
    spec.name = "fgnn-f" + std::to_string(filters_per_layer);
    spec.input_shape = {1, 8, 8};
    spec.group = group;
    spec.output_action = OutputAction::ReflectPolicy;
    spec.nodes.push_back(simple_node("lift", NodeOp::Lift, {"$input"}));
    std::string prev = "lift";
    for (int i = 1; i < depth; ++i) {
        std::string cid = "c" + std::to_string(i);
        spec.nodes.push_back(conv_node(cid, prev, filters_per_layer, 3, true));
        spec.nodes.push_back(simple_node(cid + "r", NodeOp::Relu, {cid}));
        prev = cid + "r";
    }
    // 2 filters per slice stack to the 4 direction channels NE SE NW SW, so
    // T_g on the output is exactly the move reflection and Drop is identity
    spec.nodes.push_back(conv_node("head", prev, 2, 3, true));
    spec.nodes.push_back(simple_node("drop", NodeOp::DropIdentity, {"head"}));
    spec.nodes.push_back(simple_node("mask", NodeOp::MaskDarkSquares, {"drop"}));
    spec.nodes.push_back(simple_node("policy", NodeOp::Softmax, {"mask"}));
    spec.output = "policy";
    return spec;
}

NetworkSpec build_mini_unet(const nlohmann::json& group, int levels, int base_filters, int side) {
    FiniteGroup grp = group_from_json(group);
    if (grp.order != 1 && grp.order != 2 && grp.order != 4 && grp.order != 8)
        throw UnsupportedGroup("mini U-Net supports groups of order 1, 2, 4 or 8");
    for (const auto& a : grp.actions)
        if (!a.channel_perm.empty())
            throw UnsupportedGroup("mini U-Net needs purely spatial group actions");
    if (levels < 1 || base_filters < 1) throw Error("mini U-Net needs levels, filters >= 1");
    if (side % (1 << levels) != 0)
        throw IndivisibleSpatial("input side " + std::to_string(side) + " not divisible by " +
                                 std::to_string(1 << levels));

    NetworkSpec spec;
    spec.name = "unet-g" + std::to_string(grp.order) + "-f" + std::to_string(base_filters);
    spec.input_shape = {1, side, side};
    spec.group = group;
    spec.output_action = OutputAction::Spatial;
    spec.nodes.push_back(simple_node("lift", NodeOp::Lift, {"$input"}));
    std::string prev = "lift";
    std::vector<std::string> skips;
    for (int l = 0; l < levels; ++l) {
        std::string cid = "enc" + std::to_string(l);
        spec.nodes.push_back(conv_node(cid, prev, base_filters << l, 3, true));
        spec.nodes.push_back(simple_node(cid + "r", NodeOp::Relu, {cid}));
        skips.push_back(cid + "r");
        NetworkNode pool = simple_node("pool" + std::to_string(l), NodeOp::MaxPool, {cid + "r"});
        pool.kernel = pool.stride = 2;
        spec.nodes.push_back(pool);
        prev = pool.id;
    }
    spec.nodes.push_back(conv_node("mid", prev, base_filters << levels, 3, true));
    spec.nodes.push_back(simple_node("midr", NodeOp::Relu, {"mid"}));
    prev = "midr";
    for (int l = levels - 1; l >= 0; --l) {
        std::string up = "up" + std::to_string(l);
        NetworkNode u = simple_node(up, NodeOp::Upsample, {prev});
        u.factor = 2;
        spec.nodes.push_back(u);
        std::string did = "dec" + std::to_string(l);
        spec.nodes.push_back(conv_node(did + "a", up, base_filters << l, 3, true));
        spec.nodes.push_back(simple_node(did + "ar", NodeOp::Relu, {did + "a"}));
        spec.nodes.push_back(simple_node("skip" + std::to_string(l), NodeOp::Merge,
                                         {skips[static_cast<size_t>(l)], did + "ar"}));
        spec.nodes.push_back(conv_node(did + "b", "skip" + std::to_string(l),
                                       base_filters << l, 3, true));
        spec.nodes.push_back(simple_node(did + "br", NodeOp::Relu, {did + "b"}));
        prev = did + "br";
    }
    spec.nodes.push_back(conv_node("headc", prev, 1, 1, true));
    spec.nodes.push_back(simple_node("drop", NodeOp::DropSum, {"headc"}));
    spec.nodes.push_back(simple_node("seg", NodeOp::Sigmoid, {"drop"}));
    spec.output = "seg";
    return spec;
}

int matched_fgnn_filters(int baseline_filters, int depth) {
    BuiltNetwork base(build_baseline_cnn(baseline_filters, depth), 0);
    const double target = static_cast<double>(base.param_count());
    const nlohmann::json flip = flip_group();
    int best = 1;
    double best_err = 1e300;
    for (int h = 1; h <= baseline_filters * 2 + 2; ++h) {
        BuiltNetwork cand(build_fgnn_cnn(flip, h, depth), 0);
        const double err =
            std::abs(static_cast<double>(cand.param_count()) / target - 1.0);
        if (err < best_err) {
            best_err = err;
            best = h;
        }
    }
    return best;
}

// ---------------------------------------------------------------------------
// equivariance certification
// ---------------------------------------------------------------------------

std::string EquivarianceReport::str() const {
    std::ostringstream os;
    for (size_t i = 0; i < residuals.size(); ++i)
        os << "element " << i << ": max residual " << residuals[i] << "\n";
    os << "max residual " << max_residual << " over " << samples << " samples, tolerance "
       << tolerance << ": " << (pass ? "PASS" : "FAIL") << "\n";
    return os.str();
}

EquivarianceReport check_network_equivariance(BuiltNetwork& net, const FiniteGroup& check_group,
                                              OutputAction output_action, int n_samples,
                                              real_t tolerance, uint64_t input_seed) {
    EquivarianceReport rep;
    rep.tolerance = tolerance;
    rep.samples = n_samples;
    rep.residuals.assign(static_cast<size_t>(check_group.order), 0);
    if (output_action == OutputAction::ReflectPolicy && check_group.order > 2)
        throw UnsupportedGroup("reflect-policy output action is defined for |G| <= 2");

    Rng rng(input_seed);
    const auto& shape = net.spec().input_shape;
    for (int s = 0; s < n_samples; ++s) {
        Tensor x({1, shape.at(0), shape.at(1), shape.at(2)});
        rng.fill_uniform(x, -1, 1);
        Tensor y0 = net.forward(x);
        for (int e = 0; e < check_group.order; ++e) {
            Tensor lhs = net.forward(apply_spatial_action(x, check_group.action(e)));
            Tensor rhs;
            if (e == 0) {
                rhs = y0;
            } else {
                switch (output_action) {
                    case OutputAction::Identity: rhs = y0; break;
                    case OutputAction::Spatial:
                        rhs = apply_spatial_action(y0, check_group.action(e));
                        break;
                    case OutputAction::ReflectPolicy: rhs = checkers::reflect_policy(y0); break;
                }
            }
            const real_t r = max_abs_diff(lhs, rhs);
            rep.residuals[static_cast<size_t>(e)] =
                std::max(rep.residuals[static_cast<size_t>(e)], r);
        }
    }
    for (real_t r : rep.residuals) rep.max_residual = std::max(rep.max_residual, r);
    rep.pass = rep.max_residual < tolerance;
    return rep;
}

}  // namespace fgnn
