#pragma once

#include <cstdint>
#include <vector>

#include "iet/candidates.hpp"
#include "iet/flops.hpp"
#include "iet/tensor.hpp"

namespace iet::attn {

// Projection weights and positional terms for one attention layer. First
// block carries a per-head relative-position table over the local window
// (plus one shared "far" slot for distant candidates); later blocks use a
// depthwise conv on V instead.
struct AttnParams {
  Tensor w_q, w_k, w_v, w_o;  // [C x C], no biases
  int32_t heads = 1;
  int32_t window = 0;  // local window the rel table is indexed over
  Tensor rel_bias;     // [h x ((2w-1)^2 + 1)], empty when unused
  Tensor lepe_w;       // [3 x 3 x C], empty when unused

  int64_t channels() const { return w_q.dim(0); }
  int64_t head_dim() const { return channels() / heads; }
  bool has_rel_bias() const { return rel_bias.numel() > 0; }
  bool has_lepe() const { return lepe_w.numel() > 0; }
  void validate() const;
};

// Per-layer slice of the candidate maintenance policy.
struct LayerPlan {
  bool sparsify_enabled = true;
  double keep_fraction = 0.5;
  int32_t k_min = 16;
  bool expand = false;
  int32_t k1 = 0;
  int32_t k2 = 0;
  int32_t k_out_max = 96;
};

// [N x C] <-> [h x N x d] head layout converters (d = C/h).
Tensor split_heads(const Tensor& x, int32_t heads);
Tensor merge_heads(const Tensor& x);

// Row-gather QK similarity: out[h][i][j] = <Q[h,i], K[h,I[i,j]]> / sqrt(d)
// for j < len(i); sentinel positions are filled with -1e30.
Tensor smm_qk(const Tensor& q, const Tensor& k, const graph::CandidateSet& I,
              FlopCount* flops = nullptr);

// Row-gather AV aggregation: out[h][i] = sum_j A[h,i,j] * V[h,I[i,j]].
Tensor smm_av(const Tensor& a, const Tensor& v, const graph::CandidateSet& I,
              FlopCount* flops = nullptr);

// Everything the backward pass (and the property tests) need from forward.
struct LayerSave {
  Tensor x;        // layer input [N x C]
  Tensor q, k, v;  // head layout [h x N x d]
  Tensor a_cal;    // [h x N x k_in] attention over the incoming candidates
  Tensor sel;      // [N x k_in] head-averaged selection scores
  Tensor a_norm;   // [h x N x k_s] renormalized surviving rows
  Tensor row_sum;  // [h x N] pre-renormalization row sums
  Tensor o_pre;    // [N x C] pre-projection output (LePE included)
  Tensor lepe_in;  // [N x C] V in token layout when LePE is active
  graph::CandidateSet i_in;
  graph::CandidateSet i_s;
  std::vector<int32_t> source_pos;  // N * k_s positions into the I_in rows
  bool valid = false;
};

struct LayerForward {
  Tensor y;                        // [N x C]
  graph::CandidateSet i_next;      // candidates handed to the next layer
  Tensor a_s;                      // surviving head-averaged scores [N x k_s]
  graph::CandidateSet i_s;         // surviving candidates
  std::vector<int32_t> i_highest;  // most similar neighbor per token
  LayerSave save;
};

// One IEA layer: project, gather-score over I_in, softmax (+ positional
// term), sparsify, renormalize survivors per head, aggregate, optionally
// expand. No normalization or residual here; the model wraps those around.
LayerForward iea_layer_forward(const Tensor& x, const AttnParams& params,
                               const graph::CandidateSet& i_in,
                               const LayerPlan& plan, graph::GridGeom geom,
                               FlopCount* flops = nullptr);

struct LayerGrads {
  Tensor dx;
  Tensor dw_q, dw_k, dw_v, dw_o;
  Tensor drel_bias;  // empty when unused
  Tensor dlepe_w;    // empty when unused
};

// Exact gradients treating candidate indices and top-k selections as
// constants: gradients flow through attention values at selected positions
// only. Requires the LayerSave of the matching forward call.
LayerGrads iea_layer_backward(const Tensor& dy, const AttnParams& params,
                              const LayerSave& save, graph::GridGeom geom);

// Relative-offset slot in the first-block bias table: offsets inside
// [-(w-1), w-1]^2 map to a dense (2w-1)^2 grid, everything else shares the
// trailing "far" slot.
int32_t rel_bias_slot(int32_t dr, int32_t dc, int32_t window);

}  // namespace iet::attn
