#pragma once

#include <array>
#include <cstdint>
#include <string>
#include <vector>

#include "fgnn/tensor.hpp"

namespace fgnn::checkers {

struct InvalidBoard : Error {
    using Error::Error;
};
struct NoLegalMoves : Error {
    using Error::Error;
};

// The mover owns the positive pieces and moves up the board (increasing row);
// row 0 is the mover's back rank. N = +row, E = +col.
enum class Direction : uint8_t { NE = 0, SE = 1, NW = 2, SW = 3 };

constexpr int kDirDr[4] = {+1, -1, +1, -1};
constexpr int kDirDc[4] = {+1, +1, -1, -1};

const char* direction_name(Direction d);
Direction direction_from_name(const std::string& name);
Direction reflect_direction(Direction d);  // NE<->NW, SE<->SW

inline bool is_dark(int r, int c) { return (r + c) % 2 == 0; }
inline bool on_board(int r, int c) { return r >= 0 && r < 8 && c >= 0 && c < 8; }

// dark squares numbered 0..31 row-major from the mover's bottom-left
inline int square_index(int r, int c) { return r * 4 + c / 2; }
void square_coords(int sq, int& r, int& c);

/// 8x8 signed grid: 0 empty, +-1 men, +-3 kings; pieces on dark squares only.
struct Board {
    std::array<int8_t, 64> grid{};

    int8_t at(int r, int c) const { return grid[static_cast<size_t>(r) * 8 + c]; }
    int8_t& at(int r, int c) { return grid[static_cast<size_t>(r) * 8 + c]; }
    bool operator==(const Board&) const = default;

    static Board initial();
};

void validate_board(const Board& b);  // throws InvalidBoard

struct Move {
    int from_square = 0;  // 0..31
    Direction dir = Direction::NE;
    bool is_jump = false;

    int encoding() const { return from_square * 4 + static_cast<int>(dir); }
    bool operator==(const Move& o) const {
        return from_square == o.from_square && dir == o.dir && is_jump == o.is_jump;
    }
};

/// Single-hop moves for the positive player. Men step diagonally forward,
/// kings in all four directions; jumps capture the adjacent opposing piece
/// and land just beyond it. With forced_capture, any available jump
/// suppresses the simple moves.
std::vector<Move> legal_moves(const Board& b, bool forced_capture);

// continuation hops available to the piece on (r, c)
std::vector<Move> piece_jumps(const Board& b, int r, int c);

Board reflect_board(const Board& b);  // columns mirrored
Move reflect_move(const Move& m);

// policy layout: vector index = square * 4 + direction; dense form is
// (B, 4, 8, 8) with channels ordered NE SE NW SW
std::vector<int> reflect_policy_index_map();       // involution over [0,128)
Tensor reflect_policy(const Tensor& p);            // (B,128) or (B,4,8,8)
std::vector<int> policy_gather_indices();          // 128 indices into the 4*8*8 block
Tensor mask_to_32(const Tensor& dense);            // (B,4,8,8) -> (B,128)
Tensor unmask(const Tensor& vec);                  // (B,128) -> (B,4,8,8), light squares zero
real_t light_square_mass(const Tensor& dense);     // lint: mass the mask would drop

Tensor encode_board(const Board& b);  // (1,1,8,8)
Tensor encode_move(const Move& m);    // (1,128) one-hot
/// Argmax over the policy row, lowest index on ties; with legal_only the
/// argmax is over the legal move encodings and throws NoLegalMoves on a
/// terminal position.
Move decode_policy(const Tensor& policy, const Board& b, bool legal_only,
                   bool forced_capture = true);

/// Applies a move for the positive player. If a multi-jump continues, the
/// mover keeps the turn and must jump again from forced_from; otherwise the
/// board is handed to the opponent (rotated 180 degrees and recoloured so the
/// new mover is positive and moves upward).
struct StepResult {
    Board next;
    bool same_player = false;
    int forced_from = -1;  // square index of the piece that must continue
};
StepResult apply_move(const Board& b, const Move& m);

struct PositionRecord {
    Board board;
    Move move;
    int game = 0;
    int ply = 0;
};

struct Dataset {
    bool forced_capture = true;
    std::vector<PositionRecord> records;
};

/// Uniform-random legal playouts from the initial position, 150-ply draw
/// cutoff, one record per single hop. Game g uses rng seed (seed + g), so the
/// result is deterministic and games can be generated in parallel.
Dataset gen_synthetic_dataset(uint64_t seed, int n_games, bool forced_capture = true);

// decision-point boards from random playouts, for property checks
std::vector<Board> sample_positions(uint64_t seed, int count, bool forced_capture = true);

void save_dataset_jsonl(const Dataset& d, const std::string& path);
Dataset load_dataset_jsonl(const std::string& path);
void validate_dataset(const Dataset& d);  // throws on an illegal record

}  // namespace fgnn::checkers
