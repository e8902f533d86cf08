#pragma once

#include <array>
#include <optional>
#include <string>
#include <vector>

#include "fgnn/tensor.hpp"

#include <json.hpp>

namespace fgnn {

struct ClosureExceeded : Error {
    using Error::Error;
};
struct NonInvertibleGenerator : Error {
    using Error::Error;
};
struct GroupMismatch : Error {
    using Error::Error;
};

/// The eight symmetries of the square, acting on the (height, width) axes.
enum class ActionKind : uint8_t {
    Identity,
    Rot90,
    Rot180,
    Rot270,
    FlipH,
    FlipV,
    Transpose,
    AntiTranspose,
};

const char* action_kind_name(ActionKind k);
std::optional<ActionKind> action_kind_from_name(const std::string& name);

// pull map: output pixel (r, c) reads input pixel (src_r, src_c).
// Rotations and transposes require square spatial dims.
void action_pull(ActionKind k, int n, int r, int c, int& src_r, int& src_c);

ActionKind compose_kind(ActionKind a, ActionKind b);  // a after b
ActionKind inverse_kind(ActionKind a);
bool kind_swaps_axes(ActionKind k);

/// An invertible tensor action: one of the square symmetries, optionally
/// composed with a channel permutation applied within each contiguous
/// channel block of length channel_perm.size().
struct SpatialAction {
    ActionKind kind = ActionKind::Identity;
    std::vector<int> channel_perm;  // empty = none; pull form, out[j] = in[perm[j]]

    SpatialAction() = default;
    SpatialAction(ActionKind k) : kind(k) {}
    SpatialAction(ActionKind k, std::vector<int> perm);

    bool operator==(const SpatialAction& o) const = default;
    std::string str() const;
};

SpatialAction compose(const SpatialAction& a, const SpatialAction& b);  // a ∘ b, b first
SpatialAction inverse(const SpatialAction& a);

/// Applies the spatial symmetry to the (h, w) axes of a 4-d tensor, then the
/// per-block channel permutation if present. The batch axis is untouched.
Tensor apply_spatial_action(const Tensor& x, const SpatialAction& a);

struct GroupElement {
    int index = 0;     // m(g) - 1; identity has index 0
    std::string word;  // shortest generator word, BFS order ("e" for identity)
};

/// A finite group presented by tables: element actions, Cayley and inverse
/// tables, and the slice permutation each element induces on a tensor whose
/// channel axis is split into |G| slices. Immutable after construction.
struct FiniteGroup {
    int order = 0;
    std::vector<GroupElement> elements;
    std::vector<SpatialAction> actions;
    std::vector<std::vector<int>> cayley;       // [i][j] = index of g_i * g_j
    std::vector<int> inverses;                  // [i] = index of g_i^-1
    std::vector<std::vector<int>> slice_perms;  // [g][i] = source slice for output slice i

    int mul(int i, int j) const { return cayley[i][j]; }
    int inv(int i) const { return inverses[i]; }
    const SpatialAction& action(int i) const { return actions[i]; }

    GroupElement multiply(const GroupElement& g, const GroupElement& h) const {
        return elements[cayley[g.index][h.index]];
    }
    GroupElement inverse_of(const GroupElement& g) const { return elements[inverses[g.index]]; }

    // output slice i of R_s is sourced from input slice m(g_i * s)
    const std::vector<int>& slice_permutation(int s) const { return slice_perms[s]; }

    bool same_structure(const FiniteGroup& o) const {
        return order == o.order && cayley == o.cayley && actions == o.actions;
    }
};

/// BFS closure of the generating actions. The identity gets index 0 and the
/// remaining elements are indexed in discovery order, so the assignment is
/// deterministic given the generator list.
FiniteGroup close_generators(const std::vector<SpatialAction>& generators, int max_order = 64);

struct AxiomCheck {
    std::string name;
    bool pass = false;
    int64_t checked = 0;
    std::string detail;
};

struct AxiomReport {
    std::vector<AxiomCheck> checks;
    bool all_pass() const {
        for (const auto& c : checks)
            if (!c.pass) return false;
        return true;
    }
    std::string str() const;
};

/// Exhaustive verification of the group tables: closure, associativity over
/// all |G|^3 triples, identity, inverses, the action homomorphism on a probe
/// tensor, and compatibility of slice permutations with the Cayley table.
/// Failures are report entries, not exceptions.
AxiomReport verify_axioms(const FiniteGroup& g);

// {"generators": [{"spatial": "flip-h", "channel_perm": [...]}], "max_order": 64}
FiniteGroup group_from_json(const nlohmann::json& doc);
nlohmann::json group_to_json(const FiniteGroup& g);

// common group documents
inline nlohmann::json trivial_group() {
    return {{"generators", {{{"spatial", "identity"}}}}, {"max_order", 64}};
}
inline nlohmann::json flip_group() {
    return {{"generators", {{{"spatial", "flip-h"}}}}, {"max_order", 64}};
}
inline nlohmann::json klein_group() {
    return {{"generators", {{{"spatial", "flip-h"}}, {{"spatial", "flip-v"}}}}, {"max_order", 64}};
}
inline nlohmann::json d8_group() {
    return {{"generators", {{{"spatial", "rot90"}}, {{"spatial", "flip-h"}}}}, {"max_order", 64}};
}

}  // namespace fgnn
