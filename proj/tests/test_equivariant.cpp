#define DOCTEST_CONFIG_IMPLEMENT_WITH_MAIN
#include <doctest.h>

#include "fgnn/checkers.hpp"
#include "fgnn/equivariant.hpp"
#include "fgnn/kernels.hpp"

using namespace fgnn;

namespace {

Tensor random_tensor(std::vector<int> shape, uint64_t seed) {
    Tensor t(std::move(shape));
    Rng rng(seed);
    rng.fill_uniform(t, -1, 1);
    return t;
}

struct ConvInner {
    Tensor w, b;
    ConvInner(int in_ch, int out_ch, int k, uint64_t seed)
        : w(random_tensor({out_ch, in_ch, k, k}, seed)), b(random_tensor({1, out_ch}, seed + 1)) {}
    Tensor operator()(const Tensor& x) const {
        Tensor y;
        kernels::conv2d_forward(x, w, b, 1, y);
        return y;
    }
};

const FiniteGroup& flip() {
    static FiniteGroup g = group_from_json(flip_group());
    return g;
}
const FiniteGroup& d8() {
    static FiniteGroup g = group_from_json(d8_group());
    return g;
}

}  // namespace

TEST_CASE("t_apply with the identity leaves the tensor alone") {
    StackedTensor x = make_stacked(random_tensor({1, 8, 4, 4}, 1), d8());
    CHECK(t_apply(x, 0).tensor.data == x.tensor.data);
}

TEST_CASE("t_apply on the flip group permutes slices then reflects") {
    // x = [A; B] -> [flip(B); flip(A)]
    StackedTensor x = make_stacked(random_tensor({1, 2, 4, 4}, 2), flip());
    Tensor y = t_apply(x, 1).tensor;
    auto slices = channel_slice(x.tensor, 2);
    Tensor fa = apply_spatial_action(slices[0], ActionKind::FlipH);
    Tensor fb = apply_spatial_action(slices[1], ActionKind::FlipH);
    auto out = channel_slice(y, 2);
    CHECK(out[0].data == fb.data);
    CHECK(out[1].data == fa.data);
}

TEST_CASE("t_apply composes along the group over all 64 D8 pairs") {
    StackedTensor x = make_stacked(random_tensor({2, 8, 6, 6}, 3), d8());
    for (int h = 0; h < 8; ++h)
        for (int s = 0; s < 8; ++s) {
            Tensor lhs = t_apply(t_apply(x, s), h).tensor;
            Tensor rhs = t_apply(x, d8().mul(h, s)).tensor;
            CHECK(lhs.data == rhs.data);
        }
}

TEST_CASE("lift stacks identical copies") {
    Tensor x = random_tensor({1, 3, 4, 4}, 4);
    StackedTensor lx = lift(x, flip());
    CHECK(lx.slice_channels == 3);
    auto slices = channel_slice(lx.tensor, 2);
    CHECK(slices[0].data == x.data);
    CHECK(slices[1].data == x.data);
}

TEST_CASE("lift then drop_sum scales by the group order") {
    Tensor x = random_tensor({1, 2, 4, 4}, 5);
    Tensor y = drop_sum(lift(x, d8()));
    for (size_t i = 0; i < x.data.size(); ++i)
        CHECK(y.data[i] == doctest::Approx(8 * x.data[i]).epsilon(1e-12));
}

TEST_CASE("lift intertwines the spatial action with T") {
    Tensor x = random_tensor({1, 2, 6, 6}, 6);
    for (int g = 0; g < 8; ++g) {
        Tensor lhs = lift(apply_spatial_action(x, d8().action(g)), d8()).tensor;
        Tensor rhs = t_apply(lift(x, d8()), g).tensor;
        CHECK(lhs.data == rhs.data);
    }
}

TEST_CASE("drop_sum intertwines T with the spatial action") {
    StackedTensor x = make_stacked(random_tensor({1, 16, 6, 6}, 7), d8());
    for (int g = 0; g < 8; ++g) {
        Tensor lhs = drop_sum(t_apply(x, g));
        Tensor rhs = apply_spatial_action(drop_sum(x), d8().action(g));
        CHECK(max_abs_diff(lhs, rhs) < 1e-12);
    }
}

TEST_CASE("drop_sum adds slices elementwise") {
    StackedTensor z = make_stacked(Tensor({1, 2, 1, 1}, {0, 0}), flip());
    CHECK(drop_sum(z).data == std::vector<real_t>{0});
    StackedTensor x = make_stacked(Tensor({1, 4, 1, 1}, {1, 2, 3, 4}), flip());
    CHECK(drop_sum(x).data == std::vector<real_t>{4, 6});
}

TEST_CASE("merge zips slice by slice") {
    // |G|=2: merge([A1;A2],[B1;B2]) = [A1;B1;A2;B2]
    Tensor a({1, 4, 1, 1}, {1, 2, 3, 4});
    Tensor b({1, 2, 1, 1}, {10, 20});
    StackedTensor m = merge(make_stacked(a, flip()), make_stacked(b, flip()));
    CHECK(m.slice_channels == 3);
    CHECK(m.tensor.data == std::vector<real_t>{1, 2, 10, 3, 4, 20});
}

TEST_CASE("merge with a zero-channel second input is the identity") {
    StackedTensor a = make_stacked(random_tensor({1, 6, 3, 3}, 8), flip());
    StackedTensor b = make_stacked(Tensor({1, 0, 3, 3}), flip());
    StackedTensor m = merge(a, b);
    CHECK(m.slice_channels == 3);
    CHECK(m.tensor.data == a.tensor.data);
}

TEST_CASE("merge commutes with every t_apply exactly") {
    StackedTensor a = make_stacked(random_tensor({1, 16, 4, 4}, 9), d8());
    StackedTensor b = make_stacked(random_tensor({1, 24, 4, 4}, 10), d8());
    for (int s = 0; s < 8; ++s) {
        Tensor lhs = merge(t_apply(a, s), t_apply(b, s)).tensor;
        Tensor rhs = t_apply(merge(a, b), s).tensor;
        CHECK(lhs.data == rhs.data);
    }
}

TEST_CASE("merging across different groups fails") {
    StackedTensor a = make_stacked(random_tensor({1, 2, 4, 4}, 11), flip());
    StackedTensor b = make_stacked(random_tensor({1, 8, 4, 4}, 12), d8());
    CHECK_THROWS_AS(merge(a, b), GroupMismatch);
}

TEST_CASE("wrapping over the trivial group is the plain layer") {
    FiniteGroup triv = group_from_json(trivial_group());
    Tensor x = random_tensor({1, 3, 5, 5}, 13);
    ConvInner conv(3, 4, 3, 14);
    StackedTensor wrapped = wrap_forward(conv, make_stacked(x, triv));
    CHECK(wrapped.tensor.data == conv(x).data);
}

TEST_CASE("wrapping the identity function is T-equivariant exactly") {
    auto ident = [](const Tensor& t) { return t; };
    StackedTensor x = make_stacked(random_tensor({1, 8, 4, 4}, 15), d8());
    StackedTensor fx = wrap_forward(ident, x);
    CHECK(fx.slice_channels == 8);
    for (int s = 0; s < 8; ++s) {
        Tensor lhs = t_apply(fx, s).tensor;
        Tensor rhs = wrap_forward(ident, t_apply(x, s)).tensor;
        CHECK(lhs.data == rhs.data);
    }
}

TEST_CASE("a wrapped random conv is T-equivariant within 1e-9 on the flip group") {
    ConvInner conv(4, 3, 3, 16);
    StackedTensor x = make_stacked(random_tensor({2, 4, 8, 8}, 17), flip());
    StackedTensor fx = wrap_forward(conv, x);
    CHECK(fx.slice_channels == 3);
    for (int s = 0; s < 2; ++s) {
        Tensor lhs = t_apply(fx, s).tensor;
        Tensor rhs = wrap_forward(conv, t_apply(x, s)).tensor;
        CHECK(max_abs_diff(lhs, rhs) < 1e-9);
    }
}

TEST_CASE("a wrapped random conv is T-equivariant within 1e-9 on D8") {
    ConvInner conv(8, 2, 3, 18);
    StackedTensor x = make_stacked(random_tensor({1, 8, 6, 6}, 19), d8());
    StackedTensor fx = wrap_forward(conv, x);
    for (int s = 0; s < 8; ++s) {
        Tensor lhs = t_apply(fx, s).tensor;
        Tensor rhs = wrap_forward(conv, t_apply(x, s)).tensor;
        CHECK(max_abs_diff(lhs, rhs) < 1e-9);
    }
}

TEST_CASE("an unwrapped conv in the stack is not T-equivariant") {
    ConvInner conv(8, 8, 3, 20);
    StackedTensor x = make_stacked(random_tensor({1, 8, 6, 6}, 21), d8());
    real_t worst = 0;
    for (int s = 1; s < 8; ++s) {
        Tensor lhs = conv(t_apply(x, s).tensor);
        Tensor rhs = t_apply(make_stacked(conv(x.tensor), d8()), s).tensor;
        worst = std::max(worst, max_abs_diff(lhs, rhs));
    }
    CHECK(worst > 1e-2);
}

TEST_CASE("move_drop averages the symmetric blocks") {
    // scalar channels [a; b; c; d] -> [(a+c)/2, b, d]
    StackedTensor x = make_stacked(Tensor({1, 4, 1, 1}, {1, 2, 5, 7}), flip());
    Tensor y = move_drop(x, {1, 1, 1, 1});
    CHECK(y.data == std::vector<real_t>{3, 2, 7});

    StackedTensor same = make_stacked(Tensor({1, 4, 1, 1}, {4, 0, 4, 9}), flip());
    CHECK(move_drop(same, {1, 1, 1, 1}).data[0] == 4);  // S0 = S0' passes through
}

TEST_CASE("move_drop satisfies the reflection display on random tensors") {
    // Drop'(T_g x) must equal the spatially flipped output with X0 and X1
    // exchanged
    const int s0 = 2, x0 = 3;
    StackedTensor x = make_stacked(random_tensor({2, 2 * (s0 + x0), 8, 8}, 22), flip());
    MoveDropSpec spec{s0, x0, s0, x0};
    Tensor lhs = move_drop(t_apply(x, 1), spec);

    Tensor base = move_drop(x, spec);
    std::vector<int> swap_map(static_cast<size_t>(s0 + 2 * x0));
    for (int c = 0; c < s0; ++c) swap_map[static_cast<size_t>(c)] = c;
    for (int c = 0; c < x0; ++c) {
        swap_map[static_cast<size_t>(s0 + c)] = s0 + x0 + c;
        swap_map[static_cast<size_t>(s0 + x0 + c)] = s0 + c;
    }
    Tensor rhs = apply_spatial_action(base, SpatialAction(ActionKind::FlipH, swap_map));
    CHECK(max_abs_diff(lhs, rhs) < 1e-12);
}

TEST_CASE("move_drop rejects bad partitions and groups") {
    StackedTensor x = make_stacked(random_tensor({1, 8, 4, 4}, 23), d8());
    CHECK_THROWS_AS(move_drop(x, {0, 1, 0, 1}), GroupArityUnsupported);
    StackedTensor y = make_stacked(random_tensor({1, 4, 4, 4}, 24), flip());
    CHECK_THROWS_AS(move_drop(y, {2, 0, 1, 1}), PartitionMismatch);
    CHECK_THROWS_AS(move_drop(y, {1, 0, 1, 0}), PartitionMismatch);
}

TEST_CASE("drop_identity returns the underlying tensor") {
    StackedTensor x = make_stacked(random_tensor({1, 4, 8, 8}, 25), flip());
    CHECK(drop_identity(x).data == x.tensor.data);
}

TEST_CASE("the checkers head action equals the policy reflection") {
    // 2 filters per slice stacked to 4 channels in NE SE NW SW order: T_flip
    // swaps the channel pairs and reflects, which is reflect_policy
    StackedTensor head = make_stacked(random_tensor({3, 4, 8, 8}, 26), flip());
    Tensor lhs = t_apply(head, 1).tensor;
    Tensor rhs = checkers::reflect_policy(head.tensor);
    CHECK(lhs.data == rhs.data);
}

TEST_CASE("group element out of range is a group mismatch") {
    StackedTensor x = make_stacked(random_tensor({1, 2, 4, 4}, 27), flip());
    CHECK_THROWS_AS(t_apply(x, 5), GroupMismatch);
}

TEST_CASE("graph-recorded construction matches the pure one") {
    const FiniteGroup& grp = d8();
    Tensor x = random_tensor({1, 2, 6, 6}, 28);
    ConvInner conv(16, 3, 3, 29);

    StackedTensor lifted = lift(x, grp);
    StackedTensor wrapped = wrap_forward(conv, lifted);
    Tensor pure = drop_sum(wrapped);

    ParamStore params(0);
    params.get_or_create("w.w", {3, 16, 3, 3}, 0);
    params.get_or_create("w.b", {1, 3}, 0);
    params.at(params.find("w.w")).value = conv.w;
    params.at(params.find("w.b")).value = conv.b;
    Graph g(params);
    Graph::Value v = g.input(x);
    v = lift_g(g, v, grp);
    v = wrap_forward_g(g, Layer::conv2d("w", 3, 3), v, grp, 2);
    v = drop_sum_g(g, v, grp, 3);
    CHECK(max_abs_diff(g.value(v), pure) < 1e-12);
}

TEST_CASE("graph merge and move_drop match the pure versions") {
    const FiniteGroup& grp = flip();
    Tensor ta = random_tensor({1, 4, 4, 4}, 30);
    Tensor tb = random_tensor({1, 6, 4, 4}, 31);
    Tensor pure_merge = merge(make_stacked(ta, grp), make_stacked(tb, grp)).tensor;
    Tensor pure_md = move_drop(make_stacked(ta, grp), {1, 1, 1, 1});

    ParamStore params(0);
    Graph g(params);
    Graph::Value va = g.input(ta);
    Graph::Value vb = g.input(tb);
    CHECK(g.value(merge_g(g, va, 2, vb, 3, grp)).data == pure_merge.data);
    CHECK(g.value(move_drop_g(g, va, grp, {1, 1, 1, 1})).data == pure_md.data);
}

TEST_CASE("gradients flow through a wrapped layer to the shared parameters") {
    const FiniteGroup& grp = flip();
    ParamStore params(33);
    Tensor x = random_tensor({1, 2, 4, 4}, 34);

    auto build = [&](Graph& g) {
        Graph::Value v = g.input(x);
        v = lift_g(g, v, grp);
        v = wrap_forward_g(g, Layer::conv2d("wc", 2, 3), v, grp, 2);
        return drop_sum_g(g, v, grp, 2);
    };
    Graph g(params);
    Graph::Value out = build(g);
    Tensor R = random_tensor(g.value(out).shape, 35);
    params.zero_grads();
    g.backward(out, R);

    auto loss = [&]() {
        Graph g2(params);
        Graph::Value v = build(g2);
        real_t s = 0;
        const Tensor& y = g2.value(v);
        for (size_t i = 0; i < y.data.size(); ++i) s += y.data[i] * R.data[i];
        return s;
    };
    const real_t h = real_t(1e-5);
    real_t worst = 0;
    for (size_t p = 0; p < params.count(); ++p) {
        Param& prm = params.at(static_cast<int>(p));
        for (size_t j = 0; j < prm.value.data.size(); ++j) {
            const real_t orig = prm.value.data[j];
            prm.value.data[j] = orig + h;
            const real_t lp = loss();
            prm.value.data[j] = orig - h;
            const real_t lm = loss();
            prm.value.data[j] = orig;
            const real_t fd = (lp - lm) / (2 * h);
            const real_t an = prm.grad.data[j];
            worst = std::max(
                worst, std::abs(fd - an) / std::max({real_t(1), std::abs(fd), std::abs(an)}));
        }
    }
    CHECK(worst < 1e-6);
}
