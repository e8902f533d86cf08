#define DOCTEST_CONFIG_IMPLEMENT_WITH_MAIN
#include <doctest.h>

#include <algorithm>
#include <cstdio>
#include <set>
#include <sstream>

#include "fgnn/checkers.hpp"

using namespace fgnn;
using namespace fgnn::checkers;

namespace {

std::set<int> encodings(const std::vector<Move>& moves) {
    std::set<int> out;
    for (const auto& m : moves) out.insert(m.encoding());
    return out;
}

}  // namespace

TEST_CASE("dark-square indexing is a row-major bijection") {
    std::set<int> seen;
    for (int r = 0; r < 8; ++r)
        for (int c = 0; c < 8; ++c)
            if (is_dark(r, c)) {
                const int sq = square_index(r, c);
                CHECK(sq >= 0);
                CHECK(sq < 32);
                seen.insert(sq);
                int rr, cc;
                square_coords(sq, rr, cc);
                CHECK(rr == r);
                CHECK(cc == c);
            }
    CHECK(seen.size() == 32);
}

TEST_CASE("a lone man steps forward to both diagonals") {
    Board b;
    b.at(2, 2) = 1;
    auto moves = legal_moves(b, true);
    REQUIRE(moves.size() == 2);
    std::set<Direction> dirs{moves[0].dir, moves[1].dir};
    CHECK(dirs == std::set<Direction>{Direction::NE, Direction::NW});
    for (const auto& m : moves) {
        CHECK(m.from_square == square_index(2, 2));
        CHECK_FALSE(m.is_jump);
    }
}

TEST_CASE("forced capture returns exactly the jump") {
    Board b;
    b.at(2, 2) = 1;
    b.at(3, 3) = -1;
    auto moves = legal_moves(b, true);
    REQUIRE(moves.size() == 1);
    CHECK(moves[0].is_jump);
    CHECK(moves[0].dir == Direction::NE);
    CHECK(moves[0].from_square == square_index(2, 2));

    auto relaxed = legal_moves(b, false);
    CHECK(relaxed.size() == 2);  // NW step stays available without the rule
}

TEST_CASE("kings move in all four directions") {
    Board b;
    b.at(4, 4) = 3;
    auto moves = legal_moves(b, true);
    CHECK(moves.size() == 4);
    b.at(4, 4) = 1;
    CHECK(legal_moves(b, true).size() == 2);
}

TEST_CASE("men do not capture backwards") {
    Board b;
    b.at(4, 4) = 1;
    b.at(3, 3) = -1;  // behind the man
    auto moves = legal_moves(b, true);
    for (const auto& m : moves) CHECK_FALSE(m.is_jump);
}

TEST_CASE("legality is reflection-equivariant on 1000 random positions") {
    auto boards = sample_positions(99, 1000);
    REQUIRE(boards.size() == 1000);
    for (const auto& b : boards) {
        auto mirrored = legal_moves(reflect_board(b), true);
        std::set<int> expect;
        for (const auto& m : legal_moves(b, true)) expect.insert(reflect_move(m).encoding());
        CHECK(encodings(mirrored) == expect);
    }
}

TEST_CASE("reflections are involutions") {
    auto boards = sample_positions(7, 50);
    for (const auto& b : boards) CHECK(reflect_board(reflect_board(b)) == b);
    for (int sq = 0; sq < 32; ++sq)
        for (int d = 0; d < 4; ++d) {
            Move m{sq, static_cast<Direction>(d), false};
            CHECK(reflect_move(reflect_move(m)) == m);
        }
    Tensor p({1, 128});
    Rng rng(8);
    rng.fill_uniform(p, 0, 1);
    CHECK(reflect_policy(reflect_policy(p)).data == p.data);
    Tensor dense({1, 4, 8, 8});
    rng.fill_uniform(dense, 0, 1);
    CHECK(reflect_policy(reflect_policy(dense)).data == dense.data);
}

TEST_CASE("a NE move at the left wall mirrors to a NW move at the right wall") {
    Move m{square_index(0, 0), Direction::NE, false};
    Move r = reflect_move(m);
    int rr, rc;
    square_coords(r.from_square, rr, rc);
    CHECK(rr == 0);
    CHECK(rc == 7);
    CHECK(r.dir == Direction::NW);
}

TEST_CASE("move encoding commutes with reflection") {
    for (int sq = 0; sq < 32; ++sq)
        for (int d = 0; d < 4; ++d) {
            Move m{sq, static_cast<Direction>(d), false};
            Tensor lhs = encode_move(reflect_move(m));
            Tensor rhs = reflect_policy(encode_move(m));
            CHECK(lhs.data == rhs.data);
        }
}

TEST_CASE("masked and dense policies interconvert losslessly") {
    Tensor ones({1, 4, 8, 8});
    for (auto& v : ones.data) v = 1;
    Tensor vec = mask_to_32(ones);
    CHECK(vec.shape == std::vector<int>{1, 128});
    for (real_t v : vec.data) CHECK(v == 1);

    Tensor dense({2, 4, 8, 8});
    Rng rng(9);
    rng.fill_uniform(dense, -1, 1);
    Tensor masked = mask_to_32(dense);
    Tensor back = unmask(masked);
    CHECK(mask_to_32(back).data == masked.data);
    // dark-square values survive the roundtrip exactly
    for (int b = 0; b < 2; ++b)
        for (int d = 0; d < 4; ++d)
            for (int r = 0; r < 8; ++r)
                for (int c = 0; c < 8; ++c)
                    if (is_dark(r, c)) CHECK(back(b, d, r, c) == dense(b, d, r, c));
    CHECK(light_square_mass(back) == 0);
    CHECK(light_square_mass(dense) > 0);  // the mask drops this mass
}

TEST_CASE("mask reflects compatibly with the dense policy") {
    Tensor dense({1, 4, 8, 8});
    Rng rng(10);
    rng.fill_uniform(dense, -1, 1);
    Tensor lhs = mask_to_32(reflect_policy(dense));
    Tensor rhs = reflect_policy(mask_to_32(dense));
    CHECK(lhs.data == rhs.data);
}

TEST_CASE("board encoding and move decoding roundtrip") {
    Board b = Board::initial();
    Tensor enc = encode_board(b);
    CHECK(enc.shape == std::vector<int>{1, 1, 8, 8});
    CHECK(enc(0, 0, 0, 0) == 1);
    CHECK(enc(0, 0, 7, 7) == -1);
    CHECK(encode_board(Board{}).data == std::vector<real_t>(64, 0));

    for (const auto& m : legal_moves(b, true)) {
        Move decoded = decode_policy(encode_move(m), b, true);
        CHECK(decoded.from_square == m.from_square);
        CHECK(decoded.dir == m.dir);
    }
}

TEST_CASE("uniform policies decode to the lowest-index legal move") {
    Board b = Board::initial();
    Tensor uniform({1, 128});
    for (auto& v : uniform.data) v = real_t(1) / 128;
    Move m = decode_policy(uniform, b, true);
    auto moves = legal_moves(b, true);
    int lowest = moves.front().encoding();
    for (const auto& mv : moves) lowest = std::min(lowest, mv.encoding());
    CHECK(m.encoding() == lowest);
}

TEST_CASE("decoding a terminal position with legal_only throws") {
    Board b;  // no positive pieces at all
    b.at(7, 7) = -1;
    Tensor uniform({1, 128});
    CHECK_THROWS_AS(decode_policy(uniform, b, true), NoLegalMoves);
}

TEST_CASE("invalid boards are rejected") {
    Board b;
    b.at(0, 1) = 1;  // light square
    CHECK_THROWS_AS(legal_moves(b, true), InvalidBoard);
    Board c;
    c.at(0, 0) = 2;  // not a piece value
    CHECK_THROWS_AS(legal_moves(c, true), InvalidBoard);
}

TEST_CASE("promotion crowns the man and ends the move") {
    Board b;
    b.at(6, 2) = 1;
    b.at(5, 5) = -1;  // unrelated opponent piece so the game goes on
    Move up{square_index(6, 2), Direction::NE, false};
    StepResult step = apply_move(b, up);
    CHECK_FALSE(step.same_player);
    // after the 180-degree turn the promoted king sits at (0,4) as -3
    CHECK(step.next.at(0, 4) == -3);
}

TEST_CASE("multi-jumps continue from the landing square") {
    Board b;
    b.at(0, 0) = 1;
    b.at(1, 1) = -1;
    b.at(3, 3) = -1;
    Move jump{square_index(0, 0), Direction::NE, true};
    StepResult step = apply_move(b, jump);
    CHECK(step.same_player);
    CHECK(step.forced_from == square_index(2, 2));
    int r, c;
    square_coords(step.forced_from, r, c);
    auto cont = piece_jumps(step.next, r, c);
    REQUIRE(cont.size() == 1);
    StepResult done = apply_move(step.next, cont[0]);
    CHECK_FALSE(done.same_player);
}

TEST_CASE("synthetic datasets are deterministic and legal") {
    Dataset a = gen_synthetic_dataset(5, 40);
    Dataset b = gen_synthetic_dataset(5, 40);
    REQUIRE(a.records.size() == b.records.size());
    for (size_t i = 0; i < a.records.size(); ++i) {
        CHECK(a.records[i].board == b.records[i].board);
        CHECK(a.records[i].move == b.records[i].move);
    }
    CHECK_NOTHROW(validate_dataset(a));
}

TEST_CASE("200 games produce at least 5000 positions") {
    Dataset d = gen_synthetic_dataset(1, 200);
    CHECK(d.records.size() >= 5000);
}

TEST_CASE("dataset jsonl files roundtrip") {
    Dataset d = gen_synthetic_dataset(3, 10);
    const std::string path = "dataset_roundtrip_test.jsonl";
    save_dataset_jsonl(d, path);
    Dataset back = load_dataset_jsonl(path);
    CHECK(back.forced_capture == d.forced_capture);
    REQUIRE(back.records.size() == d.records.size());
    for (size_t i = 0; i < d.records.size(); ++i) {
        CHECK(back.records[i].board == d.records[i].board);
        CHECK(back.records[i].move == d.records[i].move);
        CHECK(back.records[i].game == d.records[i].game);
        CHECK(back.records[i].ply == d.records[i].ply);
    }
    std::remove(path.c_str());
}

TEST_CASE("dataset records are canonical for the mover") {
    Dataset d = gen_synthetic_dataset(11, 20);
    for (const auto& rec : d.records) {
        bool has_positive = false;
        for (int v : rec.board.grid) has_positive |= v > 0;
        CHECK(has_positive);  // the mover always owns positive pieces
    }
}
