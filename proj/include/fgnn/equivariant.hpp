#pragma once

#include <functional>

#include "fgnn/autodiff.hpp"
#include "fgnn/group.hpp"

namespace fgnn {

struct GroupArityUnsupported : Error {
    using Error::Error;
};
struct PartitionMismatch : Error {
    using Error::Error;
};

/// A tensor whose channel axis is partitioned into |G| equal slices; slice i
/// (0-based) occupies the channel block [i*slice_channels, (i+1)*slice_channels).
struct StackedTensor {
    Tensor tensor;
    const FiniteGroup* group = nullptr;
    int slice_channels = 0;

    int slices() const { return group ? group->order : 0; }
};

StackedTensor make_stacked(Tensor t, const FiniteGroup& g);

/// Channel pull-map realizing the slice permutation of element s on a tensor
/// with n slices of sc channels each.
std::vector<int> slice_channel_map(const FiniteGroup& g, int s, int sc);

/// T_s: permute slices by R_s, then apply the spatial action of s to the
/// whole tensor. The two steps commute.
StackedTensor t_apply(const StackedTensor& x, int s);
StackedTensor t_apply(const StackedTensor& x, const GroupElement& s);

/// Stacks |G| identical copies of x along the channel axis.
StackedTensor lift(const Tensor& x, const FiniteGroup& g);

/// Elementwise sum of the |G| slices.
Tensor drop_sum(const StackedTensor& x);

/// Returns the underlying tensor unchanged. Equivariance then holds against
/// whatever T_g itself does on the output layout, so the output channel
/// ordering must be chosen to mean the intended output action.
Tensor drop_identity(const StackedTensor& x);

/// Zips two stacked tensors slice-by-slice: output slice i = [a_i ; b_i].
StackedTensor merge(const StackedTensor& a, const StackedTensor& b);

/// The wrapped layer f': branch i computes inv(g_i)( f( T_{g_i} x ) ); the
/// |G| branch outputs are stacked, one per output slice. All branches share
/// f's parameters.
StackedTensor wrap_forward(const std::function<Tensor(const Tensor&)>& inner,
                           const StackedTensor& x);

/// Channel partition of a two-slice tensor into [S0; X0; S0'; X1]: symmetric
/// move channels and the left/right-moving non-symmetric ones.
struct MoveDropSpec {
    int s0 = 0, x0 = 0, s0p = 0, x1 = 0;  // contiguous block sizes, in order
};

/// Drop': [S0; X0; S0'; X1] -> [(S0+S0')/2; X0; X1]. Requires |G| = 2.
Tensor move_drop(const StackedTensor& x, const MoveDropSpec& spec);

// graph-recorded counterparts, used when the construction must be trainable
Graph::Value t_apply_g(Graph& g, Graph::Value x, const FiniteGroup& grp, int slice_channels,
                       int s);
Graph::Value lift_g(Graph& g, Graph::Value x, const FiniteGroup& grp);
Graph::Value drop_sum_g(Graph& g, Graph::Value x, const FiniteGroup& grp, int slice_channels);
Graph::Value merge_g(Graph& g, Graph::Value a, int slice_a, Graph::Value b, int slice_b,
                     const FiniteGroup& grp);
Graph::Value wrap_forward_g(Graph& g, const Layer& inner, Graph::Value x, const FiniteGroup& grp,
                            int slice_channels_in);
Graph::Value move_drop_g(Graph& g, Graph::Value x, const FiniteGroup& grp,
                         const MoveDropSpec& spec);

}  // namespace fgnn
