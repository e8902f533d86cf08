#include "fgnn/checkers.hpp"

#include <fstream>
#include <random>

#include <json.hpp>

#include "fgnn/group.hpp"

namespace fgnn::checkers {

namespace {
constexpr const char* kDirNames[4] = {"NE", "SE", "NW", "SW"};
}

const char* direction_name(Direction d) { return kDirNames[static_cast<int>(d)]; }

Direction direction_from_name(const std::string& name) {
    for (int i = 0; i < 4; ++i)
        if (name == kDirNames[i]) return static_cast<Direction>(i);
    throw Error("unknown direction '" + name + "'");
}

Direction reflect_direction(Direction d) {
    return static_cast<Direction>(static_cast<int>(d) ^ 2);  // NE<->NW, SE<->SW
}

void square_coords(int sq, int& r, int& c) {
    r = sq / 4;
    c = (sq % 4) * 2 + (r % 2);
}

Board Board::initial() {
    Board b;
    for (int r = 0; r < 8; ++r)
        for (int c = 0; c < 8; ++c)
            if (is_dark(r, c)) {
                if (r < 3) b.at(r, c) = 1;
                if (r > 4) b.at(r, c) = -1;
            }
    return b;
}

// Canonical boards keep pieces on the (r+c)-even lattice; a mirrored board
// lives on the opposite lattice, so any single consistent lattice is valid.
int board_lattice(const Board& b) {
    for (int r = 0; r < 8; ++r)
        for (int c = 0; c < 8; ++c)
            if (b.at(r, c) != 0) return (r + c) % 2;
    return 0;
}

void validate_board(const Board& b) {
    const int parity = board_lattice(b);
    int pos = 0, neg = 0;
    for (int r = 0; r < 8; ++r)
        for (int c = 0; c < 8; ++c) {
            const int v = b.at(r, c);
            if (v == 0) continue;
            if (v != 1 && v != -1 && v != 3 && v != -3)
                throw InvalidBoard("value " + std::to_string(v) + " at (" + std::to_string(r) +
                                   "," + std::to_string(c) + ")");
            if ((r + c) % 2 != parity)
                throw InvalidBoard("pieces straddle both diagonal lattices at (" +
                                   std::to_string(r) + "," + std::to_string(c) + ")");
            (v > 0 ? pos : neg)++;
        }
    if (pos > 12 || neg > 12) throw InvalidBoard("more than 12 pieces on one side");
}

std::vector<Move> piece_jumps(const Board& b, int r, int c) {
    std::vector<Move> out;
    const int v = b.at(r, c);
    if (v <= 0) return out;
    const bool king = v == 3;
    for (int d = 0; d < 4; ++d) {
        if (!king && kDirDr[d] < 0) continue;  // men capture forward only
        const int mr = r + kDirDr[d], mc = c + kDirDc[d];
        const int lr = r + 2 * kDirDr[d], lc = c + 2 * kDirDc[d];
        if (!on_board(lr, lc)) continue;
        if (b.at(mr, mc) < 0 && b.at(lr, lc) == 0)
            out.push_back({square_index(r, c), static_cast<Direction>(d), true});
    }
    return out;
}

std::vector<Move> legal_moves(const Board& b, bool forced_capture) {
    validate_board(b);
    std::vector<Move> steps, jumps;
    for (int sq = 0; sq < 32; ++sq) {
        int r, c;
        square_coords(sq, r, c);
        const int v = b.at(r, c);
        if (v <= 0) continue;
        const bool king = v == 3;
        for (int d = 0; d < 4; ++d) {
            if (!king && kDirDr[d] < 0) continue;
            const int nr = r + kDirDr[d], nc = c + kDirDc[d];
            if (!on_board(nr, nc)) continue;
            if (b.at(nr, nc) == 0) {
                steps.push_back({sq, static_cast<Direction>(d), false});
            } else if (b.at(nr, nc) < 0) {
                const int lr = r + 2 * kDirDr[d], lc = c + 2 * kDirDc[d];
                if (on_board(lr, lc) && b.at(lr, lc) == 0)
                    jumps.push_back({sq, static_cast<Direction>(d), true});
            }
        }
    }
    if (forced_capture && !jumps.empty()) return jumps;
    if (jumps.empty()) return steps;
    steps.insert(steps.end(), jumps.begin(), jumps.end());
    std::sort(steps.begin(), steps.end(),
              [](const Move& a, const Move& b2) { return a.encoding() < b2.encoding(); });
    return steps;
}

Board reflect_board(const Board& b) {
    Board out;
    for (int r = 0; r < 8; ++r)
        for (int c = 0; c < 8; ++c) out.at(r, c) = b.at(r, 7 - c);
    return out;
}

Move reflect_move(const Move& m) {
    int r, c;
    square_coords(m.from_square, r, c);
    return {square_index(r, 7 - c), reflect_direction(m.dir), m.is_jump};
}

std::vector<int> reflect_policy_index_map() {
    std::vector<int> map(128);
    for (int sq = 0; sq < 32; ++sq) {
        int r, c;
        square_coords(sq, r, c);
        const int msq = square_index(r, 7 - c);
        for (int d = 0; d < 4; ++d) map[sq * 4 + d] = msq * 4 + (d ^ 2);
    }
    return map;
}

Tensor reflect_policy(const Tensor& p) {
    if (p.rank() == 4) {
        if (p.channels() != 4 || p.height() != 8 || p.width() != 8)
            throw ShapeMismatch("dense policy must be (B,4,8,8), got " +
                                Tensor::shape_str(p.shape));
        return apply_spatial_action(p, SpatialAction(ActionKind::FlipH, {2, 3, 0, 1}));
    }
    if (p.rank() != 2 || p.shape[1] != 128)
        throw ShapeMismatch("policy vector must be (B,128), got " + Tensor::shape_str(p.shape));
    static const std::vector<int> map = reflect_policy_index_map();
    Tensor out(p.shape);
    for (int b = 0; b < p.shape[0]; ++b)
        for (int i = 0; i < 128; ++i) out(b, i) = p(b, map[i]);
    return out;
}

std::vector<int> policy_gather_indices() {
    std::vector<int> idx(128);
    for (int sq = 0; sq < 32; ++sq) {
        int r, c;
        square_coords(sq, r, c);
        for (int d = 0; d < 4; ++d) idx[sq * 4 + d] = d * 64 + r * 8 + c;
    }
    return idx;
}

Tensor mask_to_32(const Tensor& dense) {
    if (dense.rank() != 4 || dense.channels() != 4 || dense.height() != 8 || dense.width() != 8)
        throw ShapeMismatch("mask_to_32 expects (B,4,8,8), got " + Tensor::shape_str(dense.shape));
    static const std::vector<int> idx = policy_gather_indices();
    Tensor out({dense.batch(), 128});
    for (int b = 0; b < dense.batch(); ++b)
        for (int i = 0; i < 128; ++i)
            out(b, i) = dense.data[static_cast<size_t>(b) * 256 + idx[i]];
    return out;
}

Tensor unmask(const Tensor& vec) {
    if (vec.rank() != 2 || vec.shape[1] != 128)
        throw ShapeMismatch("unmask expects (B,128), got " + Tensor::shape_str(vec.shape));
    static const std::vector<int> idx = policy_gather_indices();
    Tensor out({vec.shape[0], 4, 8, 8});
    for (int b = 0; b < vec.shape[0]; ++b)
        for (int i = 0; i < 128; ++i)
            out.data[static_cast<size_t>(b) * 256 + idx[i]] = vec(b, i);
    return out;
}

real_t light_square_mass(const Tensor& dense) {
    real_t total = 0;
    for (int b = 0; b < dense.batch(); ++b)
        for (int d = 0; d < 4; ++d)
            for (int r = 0; r < 8; ++r)
                for (int c = 0; c < 8; ++c)
                    if (!is_dark(r, c)) total += std::abs(dense(b, d, r, c));
    return total;
}

Tensor encode_board(const Board& b) {
    Tensor t({1, 1, 8, 8});
    for (int r = 0; r < 8; ++r)
        for (int c = 0; c < 8; ++c) t(0, 0, r, c) = static_cast<real_t>(b.at(r, c));
    return t;
}

Tensor encode_move(const Move& m) {
    Tensor t({1, 128});
    t(0, m.encoding()) = 1;
    return t;
}

Move decode_policy(const Tensor& policy, const Board& b, bool legal_only, bool forced_capture) {
    if (policy.rank() != 2 || policy.shape[0] != 1 || policy.shape[1] != 128)
        throw ShapeMismatch("decode_policy expects (1,128), got " + Tensor::shape_str(policy.shape));
    if (legal_only) {
        const auto moves = legal_moves(b, forced_capture);
        if (moves.empty()) throw NoLegalMoves("no legal moves to decode");
        const Move* best = &moves.front();
        for (const auto& m : moves)
            if (policy(0, m.encoding()) > policy(0, best->encoding())) best = &m;
        return *best;  // the move list is encoding-sorted, so ties keep the lowest index
    }
    int best = 0;
    for (int i = 1; i < 128; ++i)
        if (policy(0, i) > policy(0, best)) best = i;
    int r, c;
    square_coords(best / 4, r, c);
    Move m{best / 4, static_cast<Direction>(best % 4), false};
    const auto moves = legal_moves(b, forced_capture);
    for (const auto& lm : moves)
        if (lm.encoding() == best) m.is_jump = lm.is_jump;
    return m;
}

StepResult apply_move(const Board& b, const Move& m) {
    int r, c;
    square_coords(m.from_square, r, c);
    const int v = b.at(r, c);
    if (v <= 0) throw InvalidBoard("move from an empty or opposing square");
    const int d = static_cast<int>(m.dir);
    Board nb = b;
    int nr = r + kDirDr[d], nc = c + kDirDc[d];
    if (m.is_jump) {
        nb.at(nr, nc) = 0;  // captured piece
        nr += kDirDr[d];
        nc += kDirDc[d];
    }
    nb.at(r, c) = 0;
    const bool promoted = (v == 1 && nr == 7);
    nb.at(nr, nc) = static_cast<int8_t>(promoted ? 3 : v);

    // a jump continues only if the same piece can jump again and did not promote
    if (m.is_jump && !promoted && !piece_jumps(nb, nr, nc).empty())
        return {nb, true, square_index(nr, nc)};

    Board canon;  // opponent to move: rotate 180 and recolour
    for (int rr = 0; rr < 8; ++rr)
        for (int cc = 0; cc < 8; ++cc)
            canon.at(rr, cc) = static_cast<int8_t>(-nb.at(7 - rr, 7 - cc));
    return {canon, false, -1};
}

namespace {

struct Playout {
    std::vector<PositionRecord> records;
};

Playout play_game(uint64_t seed, int game_id, bool forced_capture, int max_plies = 150) {
    Rng rng(seed);
    Playout out;
    Board board = Board::initial();
    int forced_from = -1;
    for (int ply = 0; ply < max_plies; ++ply) {
        std::vector<Move> moves;
        if (forced_from >= 0) {
            int r, c;
            square_coords(forced_from, r, c);
            moves = piece_jumps(board, r, c);
        } else {
            moves = legal_moves(board, forced_capture);
        }
        if (moves.empty()) break;  // mover has lost
        const Move m = moves[static_cast<size_t>(rng.uniform_int(static_cast<int>(moves.size())))];
        out.records.push_back({board, m, game_id, ply});
        StepResult step = apply_move(board, m);
        board = step.next;
        forced_from = step.same_player ? step.forced_from : -1;
    }
    return out;
}

}  // namespace

Dataset gen_synthetic_dataset(uint64_t seed, int n_games, bool forced_capture) {
    if (n_games < 1) throw Error("gen_synthetic_dataset: n_games must be >= 1");
    std::vector<Playout> games(static_cast<size_t>(n_games));
#pragma omp parallel for schedule(dynamic)
    for (int g = 0; g < n_games; ++g)
        games[g] = play_game(seed + static_cast<uint64_t>(g), g, forced_capture);
    Dataset d;
    d.forced_capture = forced_capture;
    for (auto& g : games)
        d.records.insert(d.records.end(), g.records.begin(), g.records.end());
    return d;
}

std::vector<Board> sample_positions(uint64_t seed, int count, bool forced_capture) {
    std::vector<Board> out;
    out.reserve(static_cast<size_t>(count));
    uint64_t game = 0;
    while (static_cast<int>(out.size()) < count) {
        Playout p = play_game(seed + game, static_cast<int>(game), forced_capture);
        for (const auto& rec : p.records) {
            out.push_back(rec.board);
            if (static_cast<int>(out.size()) == count) break;
        }
        ++game;
    }
    return out;
}

void save_dataset_jsonl(const Dataset& d, const std::string& path) {
    std::ofstream os(path);
    if (!os) throw Error("cannot write dataset '" + path + "'");
    nlohmann::json header = {{"rules", "american"},
                             {"forced_capture", d.forced_capture},
                             {"indexing", "row-major-dark"}};
    os << header.dump() << "\n";
    for (const auto& rec : d.records) {
        nlohmann::json row;
        std::array<int, 64> grid;
        for (int i = 0; i < 64; ++i) grid[static_cast<size_t>(i)] = rec.board.grid[static_cast<size_t>(i)];
        row["board"] = grid;
        row["move"] = {{"sq", rec.move.from_square}, {"dir", direction_name(rec.move.dir)}};
        row["game"] = rec.game;
        row["ply"] = rec.ply;
        os << row.dump() << "\n";
    }
}

Dataset load_dataset_jsonl(const std::string& path) {
    std::ifstream is(path);
    if (!is) throw Error("cannot read dataset '" + path + "'");
    std::string line;
    if (!std::getline(is, line)) throw Error("dataset '" + path + "' is empty");
    nlohmann::json header = nlohmann::json::parse(line);
    Dataset d;
    d.forced_capture = header.value("forced_capture", true);
    while (std::getline(is, line)) {
        if (line.empty()) continue;
        nlohmann::json row = nlohmann::json::parse(line);
        PositionRecord rec;
        const auto& grid = row.at("board");
        if (grid.size() != 64) throw Error("dataset row with board of size " + std::to_string(grid.size()));
        for (int i = 0; i < 64; ++i)
            rec.board.grid[static_cast<size_t>(i)] = static_cast<int8_t>(grid[static_cast<size_t>(i)].get<int>());
        rec.move.from_square = row.at("move").at("sq").get<int>();
        rec.move.dir = direction_from_name(row.at("move").at("dir").get<std::string>());
        rec.game = row.value("game", 0);
        rec.ply = row.value("ply", 0);
        d.records.push_back(rec);
    }
    // restore jump flags from board context
    for (auto& rec : d.records)
        for (const auto& m : legal_moves(rec.board, false))
            if (m.from_square == rec.move.from_square && m.dir == rec.move.dir) {
                rec.move.is_jump = m.is_jump;
                break;
            }
    return d;
}

void validate_dataset(const Dataset& d) {
    for (size_t i = 0; i < d.records.size(); ++i) {
        const auto& rec = d.records[i];
        const auto moves = legal_moves(rec.board, d.forced_capture);
        bool found = false;
        for (const auto& m : moves)
            if (m == rec.move) {
                found = true;
                break;
            }
        if (!found)
            throw Error("dataset record " + std::to_string(i) + " holds an illegal move");
    }
}

}  // namespace fgnn::checkers
