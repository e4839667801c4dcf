#pragma once

#include <cstddef>
#include <vector>

#include "fipa/tensor.hpp"

namespace fipa {

// Row/column block sizes of the tiled kernel. Any positive sizes give the
// same answer (within roundoff); the defaults are merely cache-friendly.
struct TileSpec {
    std::size_t block_rows = 64;  // B_r
    std::size_t block_cols = 64;  // B_c
};

// Oracle path: materialize the full logit matrix, softmax it, multiply by V.
// Q and K are [L, d] or [H, L, d]; V is [L, d_v] or [H, L, d_v]; the output
// matches V's leading shape. `mask` marks valid key positions (empty = all
// valid); masked keys receive a floor logit and thus zero weight. Rows with
// no valid key come back as zeros.
//
// No scaling is applied internally — callers fold any 1/sqrt(d)-style factor
// into Q or K beforehand.
Tensor naive_attention(const Tensor& q, const Tensor& k, const Tensor& v,
                       const std::vector<bool>& mask = {});

// Tiled online-softmax attention, mathematically equal to naive_attention
// but without ever materializing an L×L object: each row block keeps a
// running max, a running denominator, and a rescaled accumulator while
// streaming over column blocks. Tracked scratch per worker is
// O(B_r·B_c + B_r·d_v) regardless of L.
//
// Rows with no valid key yield zeros; when `fully_masked` is non-null it is
// resized to L with one flag per query position. Row blocks are distributed
// over `threads` workers (each with private state), so results are identical
// for any thread count.
Tensor flash_attention(const Tensor& q, const Tensor& k, const Tensor& v,
                       const std::vector<bool>& mask = {}, const TileSpec& tiles = {},
                       int threads = 1, std::vector<bool>* fully_masked = nullptr);

}  // namespace fipa
