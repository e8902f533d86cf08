#include "fgnn/group.hpp"

#include <algorithm>
#include <deque>
#include <sstream>

namespace fgnn {

namespace {

// Each square symmetry factors as (swap axes?, negate row?, negate col?)
// applied in that order to the pull coordinates.
struct KindTriple {
    bool swap, neg_r, neg_c;
};

constexpr KindTriple kKindTriples[8] = {
    {false, false, false},  // Identity
    {true, false, true},    // Rot90
    {false, true, true},    // Rot180
    {true, true, false},    // Rot270
    {false, false, true},   // FlipH
    {false, true, false},   // FlipV
    {true, false, false},   // Transpose
    {true, true, true},     // AntiTranspose
};

constexpr const char* kKindNames[8] = {"identity", "rot90",  "rot180",    "rot270",
                                       "flip-h",   "flip-v", "transpose", "anti-transpose"};

void pull_hw(ActionKind k, int h, int w, int r, int c, int& sr, int& sc) {
    const KindTriple& t = kKindTriples[static_cast<int>(k)];
    int a = r, b = c;
    if (t.swap) std::swap(a, b);
    sr = t.neg_r ? h - 1 - a : a;
    sc = t.neg_c ? w - 1 - b : b;
}

bool is_permutation(const std::vector<int>& p) {
    std::vector<bool> seen(p.size(), false);
    for (int v : p) {
        if (v < 0 || v >= static_cast<int>(p.size()) || seen[v]) return false;
        seen[v] = true;
    }
    return true;
}

bool is_identity_perm(const std::vector<int>& p) {
    for (size_t i = 0; i < p.size(); ++i)
        if (p[i] != static_cast<int>(i)) return false;
    return true;
}

}  // namespace

const char* action_kind_name(ActionKind k) { return kKindNames[static_cast<int>(k)]; }

std::optional<ActionKind> action_kind_from_name(const std::string& name) {
    for (int i = 0; i < 8; ++i)
        if (name == kKindNames[i]) return static_cast<ActionKind>(i);
    return std::nullopt;
}

void action_pull(ActionKind k, int n, int r, int c, int& src_r, int& src_c) {
    pull_hw(k, n, n, r, c, src_r, src_c);
}

bool kind_swaps_axes(ActionKind k) { return kKindTriples[static_cast<int>(k)].swap; }

ActionKind compose_kind(ActionKind a, ActionKind b) {
    // pull of (a ∘ b) is pull_b ∘ pull_a; identified on a 4x4 grid
    static const auto table = [] {
        std::array<std::array<ActionKind, 8>, 8> t{};
        const int n = 4;
        for (int ia = 0; ia < 8; ++ia) {
            for (int ib = 0; ib < 8; ++ib) {
                for (int k = 0; k < 8; ++k) {
                    bool match = true;
                    for (int r = 0; r < n && match; ++r)
                        for (int c = 0; c < n && match; ++c) {
                            int qr, qc, sr, sc, kr, kc;
                            pull_hw(static_cast<ActionKind>(ia), n, n, r, c, qr, qc);
                            pull_hw(static_cast<ActionKind>(ib), n, n, qr, qc, sr, sc);
                            pull_hw(static_cast<ActionKind>(k), n, n, r, c, kr, kc);
                            match = (sr == kr && sc == kc);
                        }
                    if (match) {
                        t[ia][ib] = static_cast<ActionKind>(k);
                        break;
                    }
                }
            }
        }
        return t;
    }();
    return table[static_cast<int>(a)][static_cast<int>(b)];
}

ActionKind inverse_kind(ActionKind a) {
    for (int k = 0; k < 8; ++k)
        if (compose_kind(static_cast<ActionKind>(k), a) == ActionKind::Identity)
            return static_cast<ActionKind>(k);
    return ActionKind::Identity;  // unreachable
}

SpatialAction::SpatialAction(ActionKind k, std::vector<int> perm) : kind(k), channel_perm(std::move(perm)) {
    if (!channel_perm.empty() && !is_permutation(channel_perm))
        throw NonInvertibleGenerator("channel_perm is not a permutation");
    if (is_identity_perm(channel_perm)) channel_perm.clear();
}

std::string SpatialAction::str() const {
    std::string s = action_kind_name(kind);
    if (!channel_perm.empty()) {
        s += "+perm[";
        for (size_t i = 0; i < channel_perm.size(); ++i) {
            if (i) s += ",";
            s += std::to_string(channel_perm[i]);
        }
        s += "]";
    }
    return s;
}

SpatialAction compose(const SpatialAction& a, const SpatialAction& b) {
    SpatialAction out;
    out.kind = compose_kind(a.kind, b.kind);
    if (a.channel_perm.empty()) {
        out.channel_perm = b.channel_perm;
    } else if (b.channel_perm.empty()) {
        out.channel_perm = a.channel_perm;
    } else {
        if (a.channel_perm.size() != b.channel_perm.size())
            throw GroupMismatch("composing actions with channel_perm lengths " +
                                std::to_string(a.channel_perm.size()) + " and " +
                                std::to_string(b.channel_perm.size()));
        out.channel_perm.resize(a.channel_perm.size());
        // pull composition: out[j] = b.perm[a.perm[j]]
        for (size_t j = 0; j < a.channel_perm.size(); ++j)
            out.channel_perm[j] = b.channel_perm[a.channel_perm[j]];
    }
    if (is_identity_perm(out.channel_perm)) out.channel_perm.clear();
    return out;
}

SpatialAction inverse(const SpatialAction& a) {
    SpatialAction out;
    out.kind = inverse_kind(a.kind);
    if (!a.channel_perm.empty()) {
        out.channel_perm.resize(a.channel_perm.size());
        for (size_t j = 0; j < a.channel_perm.size(); ++j)
            out.channel_perm[a.channel_perm[j]] = static_cast<int>(j);
    }
    return out;
}

Tensor apply_spatial_action(const Tensor& x, const SpatialAction& a) {
    if (x.rank() == 2) {
        if (a.kind != ActionKind::Identity)
            throw ShapeMismatch("spatial symmetry on a 2-d tensor");
        if (a.channel_perm.empty()) return x;
        const int L = static_cast<int>(a.channel_perm.size());
        if (x.features() % L != 0)
            throw IndivisibleChannels("channel_perm length " + std::to_string(L) +
                                      " does not divide " + std::to_string(x.features()));
        Tensor y(x.shape);
        const int blocks = x.features() / L;
        for (int b = 0; b < x.batch(); ++b)
            for (int blk = 0; blk < blocks; ++blk)
                for (int j = 0; j < L; ++j)
                    y(b, blk * L + j) = x(b, blk * L + a.channel_perm[j]);
        return y;
    }
    if (x.rank() != 4) throw ShapeMismatch("spatial action expects a 2-d or 4-d tensor");

    const int B = x.batch(), C = x.channels(), H = x.height(), W = x.width();
    if (kind_swaps_axes(a.kind) && H != W)
        throw NonSquareSpatial(std::string(action_kind_name(a.kind)) + " on " +
                               std::to_string(H) + "x" + std::to_string(W) + " input");
    const int L = static_cast<int>(a.channel_perm.size());
    if (L > 0 && C % L != 0)
        throw IndivisibleChannels("channel_perm length " + std::to_string(L) +
                                  " does not divide " + std::to_string(C));

    Tensor y(x.shape);
    for (int b = 0; b < B; ++b) {
        for (int c = 0; c < C; ++c) {
            const int sc_ch = L > 0 ? (c / L) * L + a.channel_perm[c % L] : c;
            for (int r = 0; r < H; ++r) {
                for (int k = 0; k < W; ++k) {
                    int sr, sk;
                    pull_hw(a.kind, H, W, r, k, sr, sk);
                    y(b, c, r, k) = x(b, sc_ch, sr, sk);
                }
            }
        }
    }
    return y;
}

FiniteGroup close_generators(const std::vector<SpatialAction>& generators, int max_order) {
    if (generators.empty()) throw Error("close_generators: empty generating set");
    if (max_order < 1) throw Error("close_generators: max_order must be >= 1");

    size_t perm_len = 0;
    for (const auto& g : generators) {
        if (!g.channel_perm.empty() && !is_permutation(g.channel_perm))
            throw NonInvertibleGenerator("generator " + g.str() + " has a non-bijective channel_perm");
        if (!g.channel_perm.empty()) {
            if (perm_len != 0 && g.channel_perm.size() != perm_len)
                throw GroupMismatch("generators carry channel_perms of different lengths");
            perm_len = g.channel_perm.size();
        }
    }

    FiniteGroup grp;
    auto find = [&](const SpatialAction& a) -> int {
        for (int i = 0; i < static_cast<int>(grp.actions.size()); ++i)
            if (grp.actions[i] == a) return i;
        return -1;
    };

    grp.actions.push_back(SpatialAction{});
    grp.elements.push_back({0, "e"});
    std::deque<int> queue{0};
    const std::string letters = "abcdefgh";

    while (!queue.empty()) {
        int cur = queue.front();
        queue.pop_front();
        for (size_t gi = 0; gi < generators.size(); ++gi) {
            SpatialAction next = compose(grp.actions[cur], generators[gi]);
            if (find(next) >= 0) continue;
            if (static_cast<int>(grp.actions.size()) >= max_order)
                throw ClosureExceeded("closure exceeds max_order = " + std::to_string(max_order));
            int idx = static_cast<int>(grp.actions.size());
            std::string word = grp.elements[cur].word == "e" ? "" : grp.elements[cur].word;
            word += gi < letters.size() ? std::string(1, letters[gi]) : "g" + std::to_string(gi);
            grp.actions.push_back(std::move(next));
            grp.elements.push_back({idx, std::move(word)});
            queue.push_back(idx);
        }
    }

    grp.order = static_cast<int>(grp.actions.size());
    grp.cayley.assign(grp.order, std::vector<int>(grp.order, -1));
    for (int i = 0; i < grp.order; ++i) {
        for (int j = 0; j < grp.order; ++j) {
            int k = find(compose(grp.actions[i], grp.actions[j]));
            if (k < 0) throw Error("closure produced an open product; this should be impossible");
            grp.cayley[i][j] = k;
        }
    }
    grp.inverses.assign(grp.order, -1);
    for (int i = 0; i < grp.order; ++i)
        for (int j = 0; j < grp.order; ++j)
            if (grp.cayley[i][j] == 0) {
                grp.inverses[i] = j;
                break;
            }
    grp.slice_perms.assign(grp.order, std::vector<int>(grp.order, 0));
    for (int s = 0; s < grp.order; ++s)
        for (int i = 0; i < grp.order; ++i) grp.slice_perms[s][i] = grp.cayley[i][s];
    return grp;
}

AxiomReport verify_axioms(const FiniteGroup& g) {
    AxiomReport rep;
    const int n = g.order;
    auto add = [&](std::string name, bool pass, int64_t checked, std::string detail = "") {
        rep.checks.push_back({std::move(name), pass, checked, std::move(detail)});
    };

    bool shapes_ok = n > 0 && static_cast<int>(g.cayley.size()) == n &&
                     static_cast<int>(g.inverses.size()) == n &&
                     static_cast<int>(g.actions.size()) == n &&
                     static_cast<int>(g.slice_perms.size()) == n;
    for (int i = 0; shapes_ok && i < n; ++i)
        shapes_ok = static_cast<int>(g.cayley[i].size()) == n &&
                    static_cast<int>(g.slice_perms[i].size()) == n;
    if (!shapes_ok) {
        add("tables", false, 0, "table dimensions inconsistent with order");
        return rep;
    }

    bool closure = true;
    for (int i = 0; i < n; ++i)
        for (int j = 0; j < n; ++j)
            if (g.cayley[i][j] < 0 || g.cayley[i][j] >= n) closure = false;
    add("closure", closure, int64_t(n) * n, std::to_string(int64_t(n) * n) + " products");

    bool assoc = true;
    for (int i = 0; i < n && assoc; ++i)
        for (int j = 0; j < n && assoc; ++j)
            for (int k = 0; k < n; ++k)
                if (g.cayley[g.cayley[i][j]][k] != g.cayley[i][g.cayley[j][k]]) {
                    assoc = false;
                    break;
                }
    add("associativity", assoc, int64_t(n) * n * n, std::to_string(int64_t(n) * n * n) + " triples");

    bool ident = true;
    for (int i = 0; i < n; ++i)
        if (g.cayley[0][i] != i || g.cayley[i][0] != i) ident = false;
    add("identity", ident, 2 * int64_t(n));

    bool invs = true;
    for (int i = 0; i < n; ++i)
        if (g.cayley[i][g.inverses[i]] != 0 || g.cayley[g.inverses[i]][i] != 0) invs = false;
    add("inverses", invs, 2 * int64_t(n));

    // actions(g*h) must equal actions(g) ∘ actions(h) on a probe with distinct entries
    size_t perm_len = 1;
    for (const auto& a : g.actions) perm_len = std::max(perm_len, a.channel_perm.size());
    Tensor probe({1, static_cast<int>(perm_len), 4, 4});
    for (size_t i = 0; i < probe.data.size(); ++i) probe.data[i] = static_cast<real_t>(i + 1);
    bool hom = true;
    for (int i = 0; i < n && hom; ++i)
        for (int j = 0; j < n; ++j) {
            Tensor lhs = apply_spatial_action(probe, g.actions[g.cayley[i][j]]);
            Tensor rhs = apply_spatial_action(apply_spatial_action(probe, g.actions[j]), g.actions[i]);
            if (lhs.data != rhs.data) {
                hom = false;
                break;
            }
        }
    add("action homomorphism", hom, int64_t(n) * n, std::to_string(int64_t(n) * n) + " pairs on a 4x4 probe");

    // R_h ∘ R_s = R_{hs}, and each R matches the Cayley table
    bool lemma = true;
    for (int s = 0; s < n && lemma; ++s)
        for (int i = 0; i < n; ++i)
            if (g.slice_perms[s][i] != g.cayley[i][s]) {
                lemma = false;
                break;
            }
    for (int h = 0; h < n && lemma; ++h)
        for (int s = 0; s < n && lemma; ++s) {
            int hs = g.cayley[h][s];
            for (int i = 0; i < n; ++i)
                if (g.slice_perms[s][g.slice_perms[h][i]] != g.slice_perms[hs][i]) {
                    lemma = false;
                    break;
                }
        }
    add("slice permutation composition", lemma, int64_t(n) * n,
        std::to_string(int64_t(n) * n) + " pairs");

    return rep;
}

std::string AxiomReport::str() const {
    std::ostringstream os;
    for (const auto& c : checks) {
        os << c.name << ": " << (c.pass ? "PASS" : "FAIL");
        if (!c.detail.empty())
            os << " (" << c.detail << ")";
        else if (c.checked > 0)
            os << " (" << c.checked << " checks)";
        os << "\n";
    }
    os << (all_pass() ? "all axioms hold" : "AXIOM VIOLATION") << "\n";
    return os.str();
}

FiniteGroup group_from_json(const nlohmann::json& doc) {
    std::vector<SpatialAction> gens;
    for (const auto& item : doc.at("generators")) {
        std::string name = item.at("spatial").get<std::string>();
        auto kind = action_kind_from_name(name);
        if (!kind) throw Error("unknown spatial action '" + name + "'");
        std::vector<int> perm;
        if (item.contains("channel_perm")) perm = item["channel_perm"].get<std::vector<int>>();
        gens.emplace_back(*kind, std::move(perm));
    }
    int max_order = doc.value("max_order", 64);
    return close_generators(gens, max_order);
}

nlohmann::json group_to_json(const FiniteGroup& g) {
    nlohmann::json gens = nlohmann::json::array();
    // one-letter words are the generators, in discovery order
    for (const auto& e : g.elements) {
        if (e.word.size() != 1 || e.word == "e") continue;
        nlohmann::json item;
        item["spatial"] = action_kind_name(g.actions[e.index].kind);
        if (!g.actions[e.index].channel_perm.empty())
            item["channel_perm"] = g.actions[e.index].channel_perm;
        gens.push_back(item);
    }
    if (gens.empty()) gens.push_back({{"spatial", "identity"}});
    return {{"generators", gens}, {"max_order", std::max(64, g.order)}};
}

}  // namespace fgnn
