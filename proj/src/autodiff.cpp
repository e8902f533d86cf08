#include "fgnn/autodiff.hpp"

#include <cmath>
#include <cstring>
#include <fstream>

#include "fgnn/kernels.hpp"

namespace fgnn {

const char* layer_op_name(LayerOp op) {
    switch (op) {
        case LayerOp::Conv2d: return "conv2d";
        case LayerOp::Dense: return "dense";
        case LayerOp::Relu: return "relu";
        case LayerOp::Sigmoid: return "sigmoid";
        case LayerOp::MaxPool: return "maxpool";
        case LayerOp::AvgPool: return "avgpool";
        case LayerOp::Upsample: return "nearest-upsample";
        case LayerOp::Softmax: return "softmax";
        case LayerOp::Flatten: return "flatten";
    }
    return "?";
}

// ---------------------------------------------------------------------------
// standalone forwards
// ---------------------------------------------------------------------------

Tensor relu(const Tensor& x) {
    Tensor y = x;
    for (auto& v : y.data) v = v > 0 ? v : 0;
    return y;
}

Tensor sigmoid(const Tensor& x) {
    Tensor y = x;
    for (auto& v : y.data) v = real_t(1) / (real_t(1) + std::exp(-v));
    return y;
}

static std::vector<int> pool_out_shape(const Tensor& x, int k, int stride) {
    if (x.rank() != 4) throw ShapeMismatch("pooling expects a 4-d tensor");
    if (x.height() < k || x.width() < k)
        throw ShapeMismatch("pool kernel " + std::to_string(k) + " on " +
                            Tensor::shape_str(x.shape));
    return {x.batch(), x.channels(), (x.height() - k) / stride + 1, (x.width() - k) / stride + 1};
}

// argmax holds the flat input index feeding each output element (first max in
// row-major window order)
static Tensor maxpool_fwd(const Tensor& x, int k, int stride, std::vector<int>* argmax) {
    Tensor y(pool_out_shape(x, k, stride));
    if (argmax) argmax->assign(y.data.size(), 0);
    size_t o = 0;
    for (int b = 0; b < y.batch(); ++b)
        for (int c = 0; c < y.channels(); ++c)
            for (int oh = 0; oh < y.height(); ++oh)
                for (int ow = 0; ow < y.width(); ++ow, ++o) {
                    real_t best = 0;
                    int best_idx = -1;
                    for (int i = 0; i < k; ++i)
                        for (int j = 0; j < k; ++j) {
                            const int h = oh * stride + i, w = ow * stride + j;
                            const real_t v = x(b, c, h, w);
                            if (best_idx < 0 || v > best) {
                                best = v;
                                best_idx = static_cast<int>(
                                    ((static_cast<size_t>(b) * x.channels() + c) * x.height() + h) *
                                        x.width() +
                                    w);
                            }
                        }
                    y.data[o] = best;
                    if (argmax) (*argmax)[o] = best_idx;
                }
    return y;
}

Tensor maxpool(const Tensor& x, int k, int stride) { return maxpool_fwd(x, k, stride, nullptr); }

Tensor avgpool(const Tensor& x, int k, int stride) {
    Tensor y(pool_out_shape(x, k, stride));
    const real_t inv = real_t(1) / (real_t(k) * k);
    size_t o = 0;
    for (int b = 0; b < y.batch(); ++b)
        for (int c = 0; c < y.channels(); ++c)
            for (int oh = 0; oh < y.height(); ++oh)
                for (int ow = 0; ow < y.width(); ++ow, ++o) {
                    real_t acc = 0;
                    for (int i = 0; i < k; ++i)
                        for (int j = 0; j < k; ++j) acc += x(b, c, oh * stride + i, ow * stride + j);
                    y.data[o] = acc * inv;
                }
    return y;
}

Tensor upsample_nearest(const Tensor& x, int factor) {
    if (x.rank() != 4) throw ShapeMismatch("upsample expects a 4-d tensor");
    Tensor y({x.batch(), x.channels(), x.height() * factor, x.width() * factor});
    for (int b = 0; b < y.batch(); ++b)
        for (int c = 0; c < y.channels(); ++c)
            for (int h = 0; h < y.height(); ++h)
                for (int w = 0; w < y.width(); ++w) y(b, c, h, w) = x(b, c, h / factor, w / factor);
    return y;
}

Tensor softmax_rows(const Tensor& x) {
    if (x.rank() != 2) throw ShapeMismatch("softmax expects a 2-d tensor");
    Tensor y(x.shape);
    const int B = x.shape[0], F = x.shape[1];
    for (int b = 0; b < B; ++b) {
        real_t mx = x(b, 0);
        for (int f = 1; f < F; ++f) mx = std::max(mx, x(b, f));
        real_t sum = 0;
        for (int f = 0; f < F; ++f) {
            const real_t e = std::exp(x(b, f) - mx);
            y(b, f) = e;
            sum += e;
        }
        for (int f = 0; f < F; ++f) y(b, f) /= sum;
    }
    return y;
}

std::vector<Tensor> channel_slice(const Tensor& x, int n_slices) {
    if (x.rank() != 4 && x.rank() != 2) throw ShapeMismatch("channel_slice expects 2-d or 4-d");
    const int C = x.shape[1];
    if (n_slices < 1 || C % n_slices != 0)
        throw IndivisibleChannels(std::to_string(C) + " channels into " +
                                  std::to_string(n_slices) + " slices");
    const int sc = C / n_slices;
    const size_t plane = x.rank() == 4 ? static_cast<size_t>(x.height()) * x.width() : 1;
    std::vector<Tensor> out;
    out.reserve(n_slices);
    for (int s = 0; s < n_slices; ++s) {
        std::vector<int> shape = x.shape;
        shape[1] = sc;
        Tensor t(shape);
        if (sc > 0)
            for (int b = 0; b < x.shape[0]; ++b)
                std::memcpy(&t.data[static_cast<size_t>(b) * sc * plane],
                            &x.data[(static_cast<size_t>(b) * C + static_cast<size_t>(s) * sc) * plane],
                            sizeof(real_t) * sc * plane);
        out.push_back(std::move(t));
    }
    return out;
}

Tensor channel_stack(const std::vector<Tensor>& slices) {
    if (slices.empty()) throw ShapeMismatch("channel_stack of nothing");
    int C = 0;
    for (const auto& s : slices) {
        if (s.shape.size() != slices[0].shape.size()) throw ShapeMismatch("channel_stack rank mix");
        C += s.shape[1];
    }
    std::vector<int> shape = slices[0].shape;
    shape[1] = C;
    Tensor out(shape);
    const size_t plane =
        slices[0].rank() == 4 ? static_cast<size_t>(slices[0].height()) * slices[0].width() : 1;
    for (int b = 0; b < shape[0]; ++b) {
        size_t off = static_cast<size_t>(b) * C * plane;
        for (const auto& s : slices) {
            const size_t n = static_cast<size_t>(s.shape[1]) * plane;
            if (n > 0)
                std::memcpy(&out.data[off], &s.data[static_cast<size_t>(b) * n], sizeof(real_t) * n);
            off += n;
        }
    }
    return out;
}

// ---------------------------------------------------------------------------
// ParamStore
// ---------------------------------------------------------------------------

int ParamStore::find(const std::string& name) const {
    auto it = index_.find(name);
    return it == index_.end() ? -1 : it->second;
}

int ParamStore::get_or_create(const std::string& name, const std::vector<int>& shape,
                              real_t init_limit) {
    if (int id = find(name); id >= 0) {
        if (params_[id].value.shape != shape)
            throw ShapeMismatch("parameter '" + name + "' exists with shape " +
                                Tensor::shape_str(params_[id].value.shape) + ", requested " +
                                Tensor::shape_str(shape));
        return id;
    }
    Param p;
    p.name = name;
    p.value = Tensor(shape);
    p.grad = Tensor(shape);
    p.velocity = Tensor(shape);
    if (init_limit > 0) rng_.fill_uniform(p.value, -init_limit, init_limit);
    int id = static_cast<int>(params_.size());
    params_.push_back(std::move(p));
    index_[name] = id;
    return id;
}

int64_t ParamStore::total_values() const {
    int64_t n = 0;
    for (const auto& p : params_) n += p.value.size();
    return n;
}

void ParamStore::zero_grads() {
    for (auto& p : params_) std::fill(p.grad.data.begin(), p.grad.data.end(), real_t(0));
}

namespace {

void put_u32(std::ostream& os, uint32_t v) {
    unsigned char b[4] = {static_cast<unsigned char>(v), static_cast<unsigned char>(v >> 8),
                          static_cast<unsigned char>(v >> 16), static_cast<unsigned char>(v >> 24)};
    os.write(reinterpret_cast<char*>(b), 4);
}

uint32_t get_u32(std::istream& is) {
    unsigned char b[4];
    is.read(reinterpret_cast<char*>(b), 4);
    return static_cast<uint32_t>(b[0]) | static_cast<uint32_t>(b[1]) << 8 |
           static_cast<uint32_t>(b[2]) << 16 | static_cast<uint32_t>(b[3]) << 24;
}

void put_f64(std::ostream& os, double v) {
    uint64_t u;
    std::memcpy(&u, &v, 8);
    unsigned char b[8];
    for (int i = 0; i < 8; ++i) b[i] = static_cast<unsigned char>(u >> (8 * i));
    os.write(reinterpret_cast<char*>(b), 8);
}

double get_f64(std::istream& is) {
    unsigned char b[8];
    is.read(reinterpret_cast<char*>(b), 8);
    uint64_t u = 0;
    for (int i = 0; i < 8; ++i) u |= static_cast<uint64_t>(b[i]) << (8 * i);
    double v;
    std::memcpy(&v, &u, 8);
    return v;
}

}  // namespace

void ParamStore::save(const std::string& path) const {
    std::ofstream os(path, std::ios::binary);
    if (!os) throw Error("cannot write checkpoint '" + path + "'");
    os.write("FGNN", 4);
    put_u32(os, 1);
    for (const auto& p : params_) {
        put_u32(os, static_cast<uint32_t>(p.name.size()));
        os.write(p.name.data(), static_cast<std::streamsize>(p.name.size()));
        put_u32(os, static_cast<uint32_t>(p.value.shape.size()));
        for (int d : p.value.shape) put_u32(os, static_cast<uint32_t>(d));
        for (real_t v : p.value.data) put_f64(os, static_cast<double>(v));
    }
    if (!os) throw Error("short write to checkpoint '" + path + "'");
}

void ParamStore::load(const std::string& path) {
    std::ifstream is(path, std::ios::binary);
    if (!is) throw Error("cannot read checkpoint '" + path + "'");
    char magic[4];
    is.read(magic, 4);
    if (!is || std::memcmp(magic, "FGNN", 4) != 0)
        throw Error("'" + path + "' is not a parameter checkpoint");
    const uint32_t version = get_u32(is);
    if (version != 1) throw Error("unsupported checkpoint version " + std::to_string(version));
    while (true) {
        const uint32_t name_len = get_u32(is);
        if (is.eof()) break;
        std::string name(name_len, '\0');
        is.read(name.data(), name_len);
        const uint32_t rank = get_u32(is);
        std::vector<int> shape(rank);
        for (auto& d : shape) d = static_cast<int>(get_u32(is));
        Tensor value(shape);
        for (auto& v : value.data) v = static_cast<real_t>(get_f64(is));
        if (!is) throw Error("truncated checkpoint '" + path + "'");
        int id = get_or_create(name, shape, 0);
        params_[id].value = std::move(value);
    }
}

// ---------------------------------------------------------------------------
// Graph
// ---------------------------------------------------------------------------

Graph::Value Graph::push_node(Tensor t) {
    nodes_.push_back({std::move(t), Tensor{}});
    return static_cast<Value>(nodes_.size() - 1);
}

Tensor& Graph::grad_buf(Value v) {
    Node& n = nodes_.at(v);
    if (n.grad.shape != n.value.shape) n.grad = Tensor(n.value.shape);
    return n.grad;
}

Graph::Value Graph::input(Tensor x) { return push_node(std::move(x)); }

Graph::Value Graph::apply(const Layer& layer, Value x) {
    const Tensor& in = value(x);
    Op op;
    op.kind = OpKind::Layer;
    op.layer = layer;
    op.inputs = {x};
    Tensor out;
    switch (layer.op) {
        case LayerOp::Conv2d: {
            if (in.rank() != 4)
                throw ShapeMismatch("conv2d input must be 4-d, got " + Tensor::shape_str(in.shape));
            const int fan_in = in.channels() * layer.kernel * layer.kernel;
            op.param_w = params_->get_or_create(
                layer.name + ".w", {layer.out_channels, in.channels(), layer.kernel, layer.kernel},
                std::sqrt(real_t(6) / static_cast<real_t>(fan_in)));
            op.param_b = params_->get_or_create(layer.name + ".b", {1, layer.out_channels}, 0);
            kernels::conv2d_forward(in, params_->at(op.param_w).value,
                                    params_->at(op.param_b).value, layer.stride, out);
            break;
        }
        case LayerOp::Dense: {
            if (in.rank() != 2)
                throw ShapeMismatch("dense input must be 2-d, got " + Tensor::shape_str(in.shape));
            op.param_w = params_->get_or_create(
                layer.name + ".w", {layer.out_channels, in.shape[1]},
                std::sqrt(real_t(6) / static_cast<real_t>(in.shape[1])));
            op.param_b = params_->get_or_create(layer.name + ".b", {1, layer.out_channels}, 0);
            kernels::dense_forward(in, params_->at(op.param_w).value, params_->at(op.param_b).value,
                                   out);
            break;
        }
        case LayerOp::Relu: out = relu(in); break;
        case LayerOp::Sigmoid: out = sigmoid(in); break;
        case LayerOp::MaxPool: out = maxpool_fwd(in, layer.kernel, layer.stride, &op.imap); break;
        case LayerOp::AvgPool: out = avgpool(in, layer.kernel, layer.stride); break;
        case LayerOp::Upsample: out = upsample_nearest(in, layer.factor); break;
        case LayerOp::Softmax: out = softmax_rows(in); break;
        case LayerOp::Flatten:
            op.in_shape = in.shape;
            out = in.reshaped({in.shape[0], static_cast<int>(in.size() / in.shape[0])});
            break;
    }
    op.out = push_node(std::move(out));
    tape_.push_back(std::move(op));
    return tape_.back().out;
}

Graph::Value Graph::spatial(Value x, const SpatialAction& a) {
    Op op;
    op.kind = OpKind::Spatial;
    op.action = a;
    op.inputs = {x};
    op.out = push_node(apply_spatial_action(value(x), a));
    tape_.push_back(std::move(op));
    return tape_.back().out;
}

Graph::Value Graph::channel_permute(Value x, std::vector<int> channel_map) {
    const Tensor& in = value(x);
    if (static_cast<int>(channel_map.size()) != in.shape[1])
        throw ShapeMismatch("channel map length " + std::to_string(channel_map.size()) + " vs " +
                            std::to_string(in.shape[1]) + " channels");
    Tensor out(in.shape);
    const size_t plane = in.rank() == 4 ? static_cast<size_t>(in.height()) * in.width() : 1;
    const int C = in.shape[1];
    for (int b = 0; b < in.shape[0]; ++b)
        for (int c = 0; c < C; ++c)
            std::memcpy(&out.data[(static_cast<size_t>(b) * C + c) * plane],
                        &in.data[(static_cast<size_t>(b) * C + channel_map[c]) * plane],
                        sizeof(real_t) * plane);
    Op op;
    op.kind = OpKind::ChannelPermute;
    op.imap = std::move(channel_map);
    op.inputs = {x};
    op.out = push_node(std::move(out));
    tape_.push_back(std::move(op));
    return tape_.back().out;
}

Graph::Value Graph::concat_channels(const std::vector<Value>& xs) {
    std::vector<Tensor> parts;
    parts.reserve(xs.size());
    for (Value v : xs) parts.push_back(value(v));
    Op op;
    op.kind = OpKind::Concat;
    op.inputs = xs;
    op.out = push_node(channel_stack(parts));
    tape_.push_back(std::move(op));
    return tape_.back().out;
}

Graph::Value Graph::slice_channels(Value x, int begin, int count) {
    const Tensor& in = value(x);
    if (begin < 0 || count < 1 || begin + count > in.shape[1])
        throw ShapeMismatch("slice [" + std::to_string(begin) + "," +
                            std::to_string(begin + count) + ") of " + std::to_string(in.shape[1]) +
                            " channels");
    std::vector<int> shape = in.shape;
    shape[1] = count;
    Tensor out(shape);
    const size_t plane = in.rank() == 4 ? static_cast<size_t>(in.height()) * in.width() : 1;
    for (int b = 0; b < in.shape[0]; ++b)
        std::memcpy(&out.data[static_cast<size_t>(b) * count * plane],
                    &in.data[(static_cast<size_t>(b) * in.shape[1] + begin) * plane],
                    sizeof(real_t) * count * plane);
    Op op;
    op.kind = OpKind::Slice;
    op.imap = {begin, count};
    op.inputs = {x};
    op.out = push_node(std::move(out));
    tape_.push_back(std::move(op));
    return tape_.back().out;
}

Graph::Value Graph::add(const std::vector<Value>& xs) {
    if (xs.empty()) throw ShapeMismatch("add of nothing");
    Tensor out = value(xs[0]);
    for (size_t i = 1; i < xs.size(); ++i) {
        const Tensor& t = value(xs[i]);
        if (!t.same_shape(out))
            throw ShapeMismatch("add: " + Tensor::shape_str(out.shape) + " vs " +
                                Tensor::shape_str(t.shape));
        for (size_t j = 0; j < out.data.size(); ++j) out.data[j] += t.data[j];
    }
    Op op;
    op.kind = OpKind::Add;
    op.inputs = xs;
    op.out = push_node(std::move(out));
    tape_.push_back(std::move(op));
    return tape_.back().out;
}

Graph::Value Graph::scale(Value x, real_t s) {
    Tensor out = value(x);
    for (auto& v : out.data) v *= s;
    Op op;
    op.kind = OpKind::Scale;
    op.factor = s;
    op.inputs = {x};
    op.out = push_node(std::move(out));
    tape_.push_back(std::move(op));
    return tape_.back().out;
}

Graph::Value Graph::gather(Value x, std::vector<int> indices) {
    const Tensor& in = value(x);
    const size_t block = static_cast<size_t>(in.size() / in.shape[0]);
    Tensor out({in.shape[0], static_cast<int>(indices.size())});
    for (int b = 0; b < in.shape[0]; ++b)
        for (size_t j = 0; j < indices.size(); ++j)
            out(b, static_cast<int>(j)) = in.data[static_cast<size_t>(b) * block + indices[j]];
    Op op;
    op.kind = OpKind::Gather;
    op.imap = std::move(indices);
    op.inputs = {x};
    op.out = push_node(std::move(out));
    tape_.push_back(std::move(op));
    return tape_.back().out;
}

void Graph::backward(Value out, const Tensor& dout) {
    if (tape_.empty()) throw NoForwardRecorded("backward with no recorded forward pass");
    if (out < 0 || out >= static_cast<Value>(nodes_.size()))
        throw NoForwardRecorded("backward target is not a recorded node");
    if (!dout.same_shape(nodes_[out].value))
        throw ShapeMismatch("backward seed " + Tensor::shape_str(dout.shape) + " vs output " +
                            Tensor::shape_str(nodes_[out].value.shape));
    grad_buf(out) = dout;
    // the tape is consumed; node values and gradients stay readable until the
    // next reset(), parameter gradients accumulate in the store
    std::vector<Op> tape = std::move(tape_);
    tape_.clear();
    for (auto it = tape.rbegin(); it != tape.rend(); ++it) {
        const Op& op = *it;
        if (nodes_[op.out].grad.shape != nodes_[op.out].value.shape) continue;  // no contribution
        backward_op(op);
    }
}

void Graph::reset() {
    nodes_.clear();
    tape_.clear();
}

void Graph::backward_op(const Op& op) {
    const Tensor& dy = nodes_[op.out].grad;
    switch (op.kind) {
        case OpKind::Layer: backward_layer(op); break;
        case OpKind::Spatial: {
            Tensor dx = apply_spatial_action(dy, inverse(op.action));
            Tensor& g = grad_buf(op.inputs[0]);
            for (size_t i = 0; i < g.data.size(); ++i) g.data[i] += dx.data[i];
            break;
        }
        case OpKind::ChannelPermute: {
            Tensor& g = grad_buf(op.inputs[0]);
            const size_t plane =
                g.rank() == 4 ? static_cast<size_t>(g.height()) * g.width() : 1;
            const int C = g.shape[1];
            for (int b = 0; b < g.shape[0]; ++b)
                for (int c = 0; c < C; ++c) {
                    const real_t* src = &dy.data[(static_cast<size_t>(b) * C + c) * plane];
                    real_t* dst = &g.data[(static_cast<size_t>(b) * C + op.imap[c]) * plane];
                    for (size_t i = 0; i < plane; ++i) dst[i] += src[i];
                }
            break;
        }
        case OpKind::Concat: {
            int begin = 0;
            for (Value v : op.inputs) {
                Tensor& g = grad_buf(v);
                const int c = g.shape[1];
                const size_t plane =
                    g.rank() == 4 ? static_cast<size_t>(g.height()) * g.width() : 1;
                for (int b = 0; b < g.shape[0]; ++b) {
                    const real_t* src =
                        &dy.data[(static_cast<size_t>(b) * dy.shape[1] + begin) * plane];
                    real_t* dst = &g.data[static_cast<size_t>(b) * c * plane];
                    for (size_t i = 0; i < static_cast<size_t>(c) * plane; ++i) dst[i] += src[i];
                }
                begin += c;
            }
            break;
        }
        case OpKind::Slice: {
            Tensor& g = grad_buf(op.inputs[0]);
            const int begin = op.imap[0], count = op.imap[1];
            const size_t plane = g.rank() == 4 ? static_cast<size_t>(g.height()) * g.width() : 1;
            for (int b = 0; b < g.shape[0]; ++b) {
                const real_t* src = &dy.data[static_cast<size_t>(b) * count * plane];
                real_t* dst = &g.data[(static_cast<size_t>(b) * g.shape[1] + begin) * plane];
                for (size_t i = 0; i < static_cast<size_t>(count) * plane; ++i) dst[i] += src[i];
            }
            break;
        }
        case OpKind::Add:
            for (Value v : op.inputs) {
                Tensor& g = grad_buf(v);
                for (size_t i = 0; i < g.data.size(); ++i) g.data[i] += dy.data[i];
            }
            break;
        case OpKind::Scale: {
            Tensor& g = grad_buf(op.inputs[0]);
            for (size_t i = 0; i < g.data.size(); ++i) g.data[i] += op.factor * dy.data[i];
            break;
        }
        case OpKind::Gather: {
            Tensor& g = grad_buf(op.inputs[0]);
            const size_t block = static_cast<size_t>(g.size() / g.shape[0]);
            for (int b = 0; b < g.shape[0]; ++b)
                for (size_t j = 0; j < op.imap.size(); ++j)
                    g.data[static_cast<size_t>(b) * block + op.imap[j]] +=
                        dy(b, static_cast<int>(j));
            break;
        }
    }
}

void Graph::backward_layer(const Op& op) {
    const Tensor& dy = nodes_[op.out].grad;
    const Tensor& x = nodes_[op.inputs[0]].value;
    const Tensor& y = nodes_[op.out].value;
    switch (op.layer.op) {
        case LayerOp::Conv2d: {
            Param& w = params_->at(op.param_w);
            Param& b = params_->at(op.param_b);
            kernels::conv2d_backward_input(dy, w.value, op.layer.stride, grad_buf(op.inputs[0]));
            kernels::conv2d_backward_params(dy, x, op.layer.stride, w.grad, b.grad);
            break;
        }
        case LayerOp::Dense: {
            Param& w = params_->at(op.param_w);
            Param& b = params_->at(op.param_b);
            kernels::dense_backward(dy, x, w.value, grad_buf(op.inputs[0]), w.grad, b.grad);
            break;
        }
        case LayerOp::Relu: {
            Tensor& g = grad_buf(op.inputs[0]);
            for (size_t i = 0; i < g.data.size(); ++i)
                if (x.data[i] > 0) g.data[i] += dy.data[i];
            break;
        }
        case LayerOp::Sigmoid: {
            Tensor& g = grad_buf(op.inputs[0]);
            for (size_t i = 0; i < g.data.size(); ++i)
                g.data[i] += dy.data[i] * y.data[i] * (real_t(1) - y.data[i]);
            break;
        }
        case LayerOp::MaxPool: {
            Tensor& g = grad_buf(op.inputs[0]);
            for (size_t i = 0; i < dy.data.size(); ++i) g.data[op.imap[i]] += dy.data[i];
            break;
        }
        case LayerOp::AvgPool: {
            Tensor& g = grad_buf(op.inputs[0]);
            const int k = op.layer.kernel, s = op.layer.stride;
            const real_t inv = real_t(1) / (real_t(k) * k);
            for (int b = 0; b < dy.batch(); ++b)
                for (int c = 0; c < dy.channels(); ++c)
                    for (int oh = 0; oh < dy.height(); ++oh)
                        for (int ow = 0; ow < dy.width(); ++ow) {
                            const real_t v = dy(b, c, oh, ow) * inv;
                            for (int i = 0; i < k; ++i)
                                for (int j = 0; j < k; ++j) g(b, c, oh * s + i, ow * s + j) += v;
                        }
            break;
        }
        case LayerOp::Upsample: {
            Tensor& g = grad_buf(op.inputs[0]);
            const int f = op.layer.factor;
            for (int b = 0; b < dy.batch(); ++b)
                for (int c = 0; c < dy.channels(); ++c)
                    for (int h = 0; h < dy.height(); ++h)
                        for (int w = 0; w < dy.width(); ++w)
                            g(b, c, h / f, w / f) += dy(b, c, h, w);
            break;
        }
        case LayerOp::Softmax: {
            Tensor& g = grad_buf(op.inputs[0]);
            const int B = y.shape[0], F = y.shape[1];
            for (int b = 0; b < B; ++b) {
                real_t dot = 0;
                for (int f = 0; f < F; ++f) dot += dy(b, f) * y(b, f);
                for (int f = 0; f < F; ++f) g(b, f) += y(b, f) * (dy(b, f) - dot);
            }
            break;
        }
        case LayerOp::Flatten: {
            Tensor& g = grad_buf(op.inputs[0]);
            for (size_t i = 0; i < g.data.size(); ++i) g.data[i] += dy.data[i];
            break;
        }
    }
}

}  // namespace fgnn
