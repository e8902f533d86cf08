#include "fgnn/equivariant.hpp"

namespace fgnn {

namespace {

void check_stacked(const StackedTensor& x) {
    if (!x.group) throw GroupMismatch("stacked tensor without a group");
    const int C = x.tensor.shape.at(1);
    if (x.slice_channels < 0 || C != x.group->order * x.slice_channels)
        throw IndivisibleChannels(std::to_string(C) + " channels is not " +
                                  std::to_string(x.group->order) + " slices of " +
                                  std::to_string(x.slice_channels));
}

void check_element(const FiniteGroup& g, int s) {
    if (s < 0 || s >= g.order)
        throw GroupMismatch("element index " + std::to_string(s) + " outside group of order " +
                            std::to_string(g.order));
}

bool is_identity_map(const std::vector<int>& m) {
    for (size_t i = 0; i < m.size(); ++i)
        if (m[i] != static_cast<int>(i)) return false;
    return true;
}

}  // namespace

StackedTensor make_stacked(Tensor t, const FiniteGroup& g) {
    const int C = t.shape.at(1);
    if (C % g.order != 0)
        throw IndivisibleChannels(std::to_string(C) + " channels over a group of order " +
                                  std::to_string(g.order));
    StackedTensor out{std::move(t), &g, C / g.order};
    return out;
}

std::vector<int> slice_channel_map(const FiniteGroup& g, int s, int sc) {
    check_element(g, s);
    const auto& perm = g.slice_perms[s];
    std::vector<int> map(static_cast<size_t>(g.order) * sc);
    for (int i = 0; i < g.order; ++i)
        for (int c = 0; c < sc; ++c) map[static_cast<size_t>(i) * sc + c] = perm[i] * sc + c;
    return map;
}

StackedTensor t_apply(const StackedTensor& x, int s) {
    check_stacked(x);
    check_element(*x.group, s);
    const auto map = slice_channel_map(*x.group, s, x.slice_channels);
    Tensor permuted(x.tensor.shape);
    const Tensor& in = x.tensor;
    const size_t plane = in.rank() == 4 ? static_cast<size_t>(in.height()) * in.width() : 1;
    const int C = in.shape[1];
    for (int b = 0; b < in.shape[0]; ++b)
        for (int c = 0; c < C; ++c)
            std::copy_n(&in.data[(static_cast<size_t>(b) * C + map[c]) * plane], plane,
                        &permuted.data[(static_cast<size_t>(b) * C + c) * plane]);
    return {apply_spatial_action(permuted, x.group->action(s)), x.group, x.slice_channels};
}

StackedTensor t_apply(const StackedTensor& x, const GroupElement& s) { return t_apply(x, s.index); }

StackedTensor lift(const Tensor& x, const FiniteGroup& g) {
    std::vector<Tensor> copies(static_cast<size_t>(g.order), x);
    return {channel_stack(copies), &g, x.shape.at(1)};
}

Tensor drop_sum(const StackedTensor& x) {
    check_stacked(x);
    auto slices = channel_slice(x.tensor, x.group->order);
    Tensor out = std::move(slices[0]);
    for (size_t i = 1; i < slices.size(); ++i)
        for (size_t j = 0; j < out.data.size(); ++j) out.data[j] += slices[i].data[j];
    return out;
}

Tensor drop_identity(const StackedTensor& x) {
    check_stacked(x);
    return x.tensor;
}

StackedTensor merge(const StackedTensor& a, const StackedTensor& b) {
    check_stacked(a);
    check_stacked(b);
    if (!a.group->same_structure(*b.group)) throw GroupMismatch("merge across different groups");
    auto sa = channel_slice(a.tensor, a.group->order);
    auto sb = channel_slice(b.tensor, b.group->order);
    std::vector<Tensor> zipped;
    zipped.reserve(sa.size() * 2);
    for (size_t i = 0; i < sa.size(); ++i) {
        zipped.push_back(std::move(sa[i]));
        zipped.push_back(std::move(sb[i]));
    }
    return {channel_stack(zipped), a.group, a.slice_channels + b.slice_channels};
}

StackedTensor wrap_forward(const std::function<Tensor(const Tensor&)>& inner,
                           const StackedTensor& x) {
    check_stacked(x);
    const FiniteGroup& g = *x.group;
    std::vector<Tensor> branches;
    branches.reserve(g.order);
    for (int i = 0; i < g.order; ++i) {
        Tensor y = inner(t_apply(x, i).tensor);
        branches.push_back(apply_spatial_action(y, inverse(g.action(i))));
        if (!branches.back().same_shape(branches.front()))
            throw ShapeMismatch("wrapped branches disagree: " +
                                Tensor::shape_str(branches.front().shape) + " vs " +
                                Tensor::shape_str(branches.back().shape));
    }
    const int out_sc = branches.front().shape.at(1);
    return {channel_stack(branches), &g, out_sc};
}

namespace {

void check_move_drop(const FiniteGroup& g, int slice_channels, const MoveDropSpec& spec) {
    if (g.order != 2)
        throw GroupArityUnsupported("move-embedding drop needs |G| = 2, got order " +
                                    std::to_string(g.order));
    if (spec.s0 < 0 || spec.x0 < 0 || spec.s0p < 0 || spec.x1 < 0)
        throw PartitionMismatch("negative block size");
    if (spec.s0 != spec.s0p)
        throw PartitionMismatch("symmetric blocks differ: " + std::to_string(spec.s0) + " vs " +
                                std::to_string(spec.s0p));
    if (spec.s0 + spec.x0 != slice_channels || spec.s0p + spec.x1 != slice_channels)
        throw PartitionMismatch("blocks [" + std::to_string(spec.s0) + "," +
                                std::to_string(spec.x0) + "," + std::to_string(spec.s0p) + "," +
                                std::to_string(spec.x1) + "] do not tile two slices of " +
                                std::to_string(slice_channels));
}

}  // namespace

Tensor move_drop(const StackedTensor& x, const MoveDropSpec& spec) {
    check_stacked(x);
    check_move_drop(*x.group, x.slice_channels, spec);
    const Tensor& in = x.tensor;
    std::vector<int> shape = in.shape;
    shape[1] = spec.s0 + spec.x0 + spec.x1;
    Tensor out(shape);
    const size_t plane = in.rank() == 4 ? static_cast<size_t>(in.height()) * in.width() : 1;
    const int Cin = in.shape[1], Cout = shape[1];
    const int s0_begin = 0, x0_begin = spec.s0, s0p_begin = spec.s0 + spec.x0,
              x1_begin = spec.s0 + spec.x0 + spec.s0p;
    for (int b = 0; b < in.shape[0]; ++b) {
        const real_t* src = &in.data[static_cast<size_t>(b) * Cin * plane];
        real_t* dst = &out.data[static_cast<size_t>(b) * Cout * plane];
        for (int c = 0; c < spec.s0; ++c)
            for (size_t i = 0; i < plane; ++i)
                dst[static_cast<size_t>(c) * plane + i] =
                    (src[static_cast<size_t>(s0_begin + c) * plane + i] +
                     src[static_cast<size_t>(s0p_begin + c) * plane + i]) /
                    real_t(2);
        for (int c = 0; c < spec.x0; ++c)
            std::copy_n(&src[static_cast<size_t>(x0_begin + c) * plane], plane,
                        &dst[static_cast<size_t>(spec.s0 + c) * plane]);
        for (int c = 0; c < spec.x1; ++c)
            std::copy_n(&src[static_cast<size_t>(x1_begin + c) * plane], plane,
                        &dst[static_cast<size_t>(spec.s0 + spec.x0 + c) * plane]);
    }
    return out;
}

// ---------------------------------------------------------------------------
// graph-recorded versions
// ---------------------------------------------------------------------------

Graph::Value t_apply_g(Graph& g, Graph::Value x, const FiniteGroup& grp, int slice_channels,
                       int s) {
    check_element(grp, s);
    auto map = slice_channel_map(grp, s, slice_channels);
    Graph::Value v = x;
    if (!is_identity_map(map)) v = g.channel_permute(v, std::move(map));
    if (!(grp.action(s) == SpatialAction{})) v = g.spatial(v, grp.action(s));
    return v;
}

Graph::Value lift_g(Graph& g, Graph::Value x, const FiniteGroup& grp) {
    if (grp.order == 1) return x;
    return g.concat_channels(std::vector<Graph::Value>(static_cast<size_t>(grp.order), x));
}

Graph::Value drop_sum_g(Graph& g, Graph::Value x, const FiniteGroup& grp, int slice_channels) {
    if (grp.order == 1) return x;
    std::vector<Graph::Value> slices;
    slices.reserve(grp.order);
    for (int i = 0; i < grp.order; ++i)
        slices.push_back(g.slice_channels(x, i * slice_channels, slice_channels));
    return g.add(slices);
}

Graph::Value merge_g(Graph& g, Graph::Value a, int slice_a, Graph::Value b, int slice_b,
                     const FiniteGroup& grp) {
    std::vector<Graph::Value> zipped;
    zipped.reserve(static_cast<size_t>(grp.order) * 2);
    for (int i = 0; i < grp.order; ++i) {
        zipped.push_back(g.slice_channels(a, i * slice_a, slice_a));
        zipped.push_back(g.slice_channels(b, i * slice_b, slice_b));
    }
    return g.concat_channels(zipped);
}

Graph::Value wrap_forward_g(Graph& g, const Layer& inner, Graph::Value x, const FiniteGroup& grp,
                            int slice_channels_in) {
    std::vector<Graph::Value> branches;
    branches.reserve(grp.order);
    for (int i = 0; i < grp.order; ++i) {
        Graph::Value v = t_apply_g(g, x, grp, slice_channels_in, i);
        v = g.apply(inner, v);
        const SpatialAction inv_a = inverse(grp.action(i));
        if (!(inv_a == SpatialAction{})) v = g.spatial(v, inv_a);
        branches.push_back(v);
    }
    return branches.size() == 1 ? branches[0] : g.concat_channels(branches);
}

Graph::Value move_drop_g(Graph& g, Graph::Value x, const FiniteGroup& grp,
                         const MoveDropSpec& spec) {
    const int sc = spec.s0 + spec.x0;
    check_move_drop(grp, sc, spec);
    std::vector<Graph::Value> parts;
    if (spec.s0 > 0) {
        Graph::Value s0 = g.slice_channels(x, 0, spec.s0);
        Graph::Value s0p = g.slice_channels(x, spec.s0 + spec.x0, spec.s0p);
        parts.push_back(g.scale(g.add({s0, s0p}), real_t(0.5)));
    }
    if (spec.x0 > 0) parts.push_back(g.slice_channels(x, spec.s0, spec.x0));
    if (spec.x1 > 0) parts.push_back(g.slice_channels(x, spec.s0 + spec.x0 + spec.s0p, spec.x1));
    return parts.size() == 1 ? parts[0] : g.concat_channels(parts);
}

}  // namespace fgnn
