#pragma once

#include <cstdint>
#include <functional>
#include <span>
#include <vector>

#include "iet/tensor.hpp"

namespace iet::ops {

// ---- dense linear algebra -------------------------------------------------
// All products use a fixed left-to-right summation order per output element,
// so results are bit-identical across runs and thread counts.

Tensor matmul(const Tensor& a, const Tensor& b);     // [MxK]*[KxP]
Tensor matmul_tn(const Tensor& a, const Tensor& b);  // a^T * b, a is [KxM]
Tensor matmul_nt(const Tensor& a, const Tensor& b);  // a * b^T, b is [PxK]

void add_inplace(Tensor& a, const Tensor& b);
void axpy_inplace(Tensor& a, double alpha, const Tensor& b);  // a += alpha*b
Tensor add(const Tensor& a, const Tensor& b);
Tensor sub(const Tensor& a, const Tensor& b);
Tensor scale(const Tensor& a, double s);

// ---- row softmax ------------------------------------------------------------
// x is [N x k]. lengths[i] gives the valid prefix of row i; pass an empty
// span to treat every entry as valid. Valid segments are max-subtracted and
// normalized to sum 1; positions >= lengths[i] come out exactly 0. A row
// with zero valid entries raises NumericError (degenerate row).
Tensor softmax_rows(const Tensor& x, std::span<const int32_t> lengths = {});

// ---- top-k selection --------------------------------------------------------
// Indices of the `count` largest values, sorted by descending value then
// ascending index; ties keep the smaller index. count > size clamps.
std::vector<int32_t> topk(std::span<const double> values, int64_t count);

// ---- convolutions -----------------------------------------------------------
// Feature maps are [H x W x C]; zero padding, stride 1.
// conv3x3 weights are [3 x 3 x Cin x Cout], bias [Cout] (empty = none).
Tensor conv3x3(const Tensor& x, const Tensor& w, const Tensor& b);
void conv3x3_backward(const Tensor& x, const Tensor& w, const Tensor& dy,
                      Tensor& dx, Tensor& dw, Tensor& db);

// depthwise weights are [3 x 3 x C], bias [C] (empty = none).
Tensor depthwise_conv3x3(const Tensor& x, const Tensor& w, const Tensor& b);
void depthwise_conv3x3_backward(const Tensor& x, const Tensor& w,
                                const Tensor& dy, Tensor& dx, Tensor& dw,
                                Tensor& db);

// ---- pointwise & norm -------------------------------------------------------
Tensor gelu(const Tensor& x);                          // exact erf form
Tensor gelu_backward(const Tensor& x, const Tensor& dy);

// Per-row normalization of [N x C] to mean 0 / variance 1 (eps 1e-12),
// then affine gamma/beta of size [C].
Tensor layer_norm(const Tensor& x, const Tensor& gamma, const Tensor& beta);
void layer_norm_backward(const Tensor& x, const Tensor& gamma,
                         const Tensor& dy, Tensor& dx, Tensor& dgamma,
                         Tensor& dbeta);

// ---- pixel shuffle ----------------------------------------------------------
// [H x W x C*s^2] -> [sH x sW x C]; input channel c*s*s + dy*s + dx lands at
// spatial offset (dy, dx). Exact permutation; unshuffle inverts it.
Tensor pixel_shuffle(const Tensor& x, int64_t s);
Tensor pixel_unshuffle(const Tensor& x, int64_t s);

// ---- row gather / scatter ---------------------------------------------------
// gather_rows: out[i] = x[idx[i]]. scatter_add_rows is its exact adjoint:
// out[idx[i]] += g[i], accumulated in ascending i order (deterministic).
Tensor gather_rows(const Tensor& x, std::span<const int32_t> idx);
void scatter_add_rows(Tensor& acc, std::span<const int32_t> idx,
                      const Tensor& g);

// ---- finite differences -----------------------------------------------------
// Central-difference gradient of a scalar function, step h per coordinate.
Grad finite_diff_grad(const std::function<double(const Tensor&)>& f,
                      const Tensor& x, double h);

}  // namespace iet::ops
