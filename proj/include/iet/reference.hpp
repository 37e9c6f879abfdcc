#pragma once

#include <cstdint>
#include <set>
#include <vector>

#include "iet/candidates.hpp"
#include "iet/image.hpp"
#include "iet/tensor.hpp"

namespace iet::ref {

// Deliberately naive second implementations of everything the fast paths
// compute. These stay independent of the production code so tests and the
// verify suites can cross-check against them.

Tensor matmul(const Tensor& a, const Tensor& b);  // plain triple loop

std::vector<int32_t> topk_by_sort(const std::vector<double>& values,
                                  int64_t count);

Tensor conv3x3_direct(const Tensor& x, const Tensor& w, const Tensor& b);
Tensor depthwise_direct(const Tensor& x, const Tensor& w, const Tensor& b);

// Dense multi-head attention y = concat_h(softmax(QK^T/sqrt(d)) V) W_o,
// straight-line loops, no candidate machinery.
Tensor dense_mha(const Tensor& x, const Tensor& w_q, const Tensor& w_k,
                 const Tensor& w_v, const Tensor& w_o, int32_t heads);

struct DenseMhaGrads {
  Tensor dx, dw_q, dw_k, dw_v, dw_o;
};
DenseMhaGrads dense_mha_backward(const Tensor& x, const Tensor& w_q,
                                 const Tensor& w_k, const Tensor& w_v,
                                 const Tensor& w_o, int32_t heads,
                                 const Tensor& dy);

// Literal two-hop expansion: top-k1 neighbors, each contributing its top-k2
// neighbors, unioned and deduplicated as plain sets. Scores/candidates as in
// graph::expand.
std::vector<std::set<int32_t>> two_hop_sets(const Tensor& scores,
                                            const graph::CandidateSet& cands,
                                            int32_t k1, int32_t k2);

// Brute-force DLSG row enumeration: walks every token and every sampling
// cell, returning per-token candidate sets.
std::vector<std::set<int32_t>> dlsg_sets(graph::GridGeom geom, int32_t window,
                                         int32_t dilation);

// Non-separable 4x4-tap bicubic evaluation (same Catmull-Rom kernel).
img::Image bicubic_direct(const img::Image& img, int32_t num, int32_t den);

}  // namespace iet::ref
