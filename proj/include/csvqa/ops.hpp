#pragma once

#include <span>
#include <vector>

#include "csvqa/tensor.hpp"

namespace csvqa {

// Elementwise; shapes must match exactly (no broadcasting beyond scalar —
// bias addition is the explicit row-broadcast add_row_bias below).
Tensor add(const Tensor& a, const Tensor& b);
Tensor sub(const Tensor& a, const Tensor& b);
Tensor mul(const Tensor& a, const Tensor& b);
Tensor scale(const Tensor& a, double factor);
Tensor add_scalar(const Tensor& a, double value);

// [r,k] x [k,c] -> [r,c]. Backward: dA = G B^T, dB = A^T G.
Tensor matmul(const Tensor& a, const Tensor& b);

// x: [N,F], bias: [F]; adds bias to every row.
Tensor add_row_bias(const Tensor& x, const Tensor& bias);

// x: [N,C,H,W], bias: [C]; adds bias to every plane (the conv analogue of
// add_row_bias, same explicit-broadcast convention).
Tensor add_channel_bias(const Tensor& x, const Tensor& bias);

// Cross-correlation (no kernel flip). input [C,H,W] or [N,C,H,W], kernels
// [C_out,C_in,k,k]. Output dims must be integral.
Tensor conv2d(const Tensor& input, const Tensor& kernels, int stride, int pad);

Tensor relu(const Tensor& x);     // subgradient 0 at exactly 0
Tensor sigmoid(const Tensor& x);  // bounded output activation

Tensor reshape(const Tensor& x, std::vector<int> shape);
Tensor concat(const Tensor& a, const Tensor& b, int axis);

// Mean over all elements, 64-bit accumulation; scalar output.
Tensor mean(const Tensor& x);

// logits [N,C], labels in [0,C). Mean over the batch of -log softmax[label];
// backward is (softmax - onehot) / N.
Tensor softmax_cross_entropy(const Tensor& logits, std::span<const int> labels);

// Forward-only row softmax (inference path).
std::vector<float> softmax_rows(const Tensor& logits);

// Rearranges per-block pixel rows into an image batch. blocks is
// [N, nblocks, B^2] with block order [channel][block_row][block_col] and
// row-major pixels inside a block; output is [N, C, gr*B, gc*B]. Pure
// permutation; the gradient is the inverse permutation.
Tensor assemble_blocks(const Tensor& blocks, int channels, int grid_rows, int grid_cols,
                       int block_size);

namespace detail {
// c (+)= a*b with a [r,k], b [k,n], all row-major, f32 accumulation.
void gemm(const float* a, const float* b, float* c, int r, int k, int n, bool accumulate);
// c (+)= a * b^T with a [r,k], b [n,k].
void gemm_nt(const float* a, const float* b, float* c, int r, int k, int n, bool accumulate);
// c (+)= a^T * b with a [k,r], b [k,n].
void gemm_tn(const float* a, const float* b, float* c, int r, int k, int n, bool accumulate);
}  // namespace detail

}  // namespace csvqa
