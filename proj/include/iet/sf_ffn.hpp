#pragma once

#include <cstdint>
#include <span>
#include <vector>

#include "iet/candidates.hpp"
#include "iet/flops.hpp"
#include "iet/tensor.hpp"

namespace iet::ffn {

// Similarity-fused FFN weights. Each head fuses [token ; most-similar
// neighbor] through its own two-layer MLP; a depthwise conv stirs the
// result spatially before the residual join.
struct SfFfnParams {
  // headwise_in: [h x 2d x rd], headwise_out: [h x rd x d], d = C/h.
  Tensor headwise_in;
  Tensor headwise_out;
  Tensor dw;  // [3 x 3 x C]
  int32_t heads = 1;
  int32_t ratio = 2;

  int64_t channels() const { return heads * headwise_out.dim(2); }
  void validate() const;
};

struct FfnSave {
  Tensor x_in;     // [N x C]
  Tensor x_sim;    // [N x C]
  Tensor t1;       // [h x N x rd] pre-activation
  Tensor g;        // [h x N x rd] post-gelu
  Tensor z;        // [N x C] pre-conv fusion
  std::vector<int32_t> gather;
  bool valid = false;
};

// Core fusion (no residual): dwconv(headwise_out(gelu(headwise_in([x ; x_sim])))).
Tensor sf_ffn_core(const Tensor& x_in, std::span<const int32_t> i_highest,
                   const SfFfnParams& params, graph::GridGeom geom,
                   FfnSave* save = nullptr, FlopCount* flops = nullptr);

// The full op: x_in + core(x_in). Zero dw weights make this the identity.
Tensor sf_ffn_forward(const Tensor& x_in, std::span<const int32_t> i_highest,
                      const SfFfnParams& params, graph::GridGeom geom,
                      FfnSave* save = nullptr, FlopCount* flops = nullptr);

struct FfnGrads {
  Tensor dx;  // gradient w.r.t. x_in for the core path only
  Tensor dheadwise_in, dheadwise_out, ddw;
};

// Backward of sf_ffn_core. Gather indices are constants; the x_sim path
// scatter-adds into source tokens in fixed row order. For sf_ffn_forward
// add dy itself to dx (residual term).
FfnGrads sf_ffn_core_backward(const Tensor& dy, const SfFfnParams& params,
                              const FfnSave& save, graph::GridGeom geom);

// FLOPs of a plain C -> rC -> C token-wise FFN on n tokens, the baseline
// the fusion overhead is compared against.
int64_t plain_ffn_flops(int64_t n, int64_t channels, int32_t ratio);
int64_t sf_ffn_flops(int64_t n, int64_t channels, int32_t heads, int32_t ratio);

}  // namespace iet::ffn
