#pragma once

#include <cstdint>

namespace iet {

// Floating-point operation tallies, incremented at the call sites with the
// realized (post-masking) sizes. A fused multiply-add counts as 2.
struct FlopCount {
  int64_t qk = 0;        // row-gather QK dot products
  int64_t softmax = 0;   // exp/normalize over valid entries
  int64_t av = 0;        // row-gather AV aggregation
  int64_t proj = 0;      // q/k/v/o projections
  int64_t bias = 0;      // positional terms (rel table or LePE conv)
  int64_t ffn = 0;       // SF-FFN mats + depthwise fusion
  int64_t conv = 0;      // head/tail/block convolutions
  int64_t norm = 0;      // layer norms
  int64_t other = 0;

  int64_t attention_core() const { return qk + softmax + av; }
  int64_t total() const {
    return qk + softmax + av + proj + bias + ffn + conv + norm + other;
  }
  void add(const FlopCount& o) {
    qk += o.qk;
    softmax += o.softmax;
    av += o.av;
    proj += o.proj;
    bias += o.bias;
    ffn += o.ffn;
    conv += o.conv;
    norm += o.norm;
    other += o.other;
  }
};

}  // namespace iet
