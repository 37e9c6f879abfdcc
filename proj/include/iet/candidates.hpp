#pragma once

#include <cstdint>
#include <iosfwd>
#include <span>
#include <string>
#include <vector>

#include "iet/tensor.hpp"

namespace iet::graph {

// Token grid: token i sits at (i / width, i % width).
struct GridGeom {
  int32_t height = 0;
  int32_t width = 0;

  int32_t tokens() const { return height * width; }
  int32_t row_of(int32_t i) const { return i / width; }
  int32_t col_of(int32_t i) const { return i % width; }
  int32_t token_at(int32_t r, int32_t c) const { return r * width + c; }
};

// Per-token attention-candidate rows: a fixed-width [N x k_max] index matrix
// with per-row valid lengths. Positions past the length hold the pad
// sentinel N, which is never a valid token index. Rows contain pairwise
// distinct indices in [0, N) and are immutable once built.
class CandidateSet {
 public:
  CandidateSet() = default;
  CandidateSet(int32_t tokens, int32_t k_max);

  // Builds from ragged rows, validating every invariant.
  static CandidateSet from_rows(int32_t tokens,
                                const std::vector<std::vector<int32_t>>& rows);

  int32_t tokens() const { return tokens_; }
  int32_t k_max() const { return k_max_; }
  int32_t pad_sentinel() const { return tokens_; }

  int32_t length(int32_t row) const { return lengths_[static_cast<size_t>(row)]; }
  std::span<const int32_t> row(int32_t i) const {
    return {indices_.data() + static_cast<size_t>(i) * k_max_,
            static_cast<size_t>(lengths_[static_cast<size_t>(i)])};
  }
  std::span<const int32_t> lengths() const { return lengths_; }

  // Full fixed-width row including sentinel padding.
  std::span<const int32_t> padded_row(int32_t i) const {
    return {indices_.data() + static_cast<size_t>(i) * k_max_,
            static_cast<size_t>(k_max_)};
  }

  bool operator==(const CandidateSet& o) const {
    return tokens_ == o.tokens_ && k_max_ == o.k_max_ &&
           lengths_ == o.lengths_ && indices_ == o.indices_;
  }

  // Checks index range, per-row uniqueness, sentinel padding, length >= 1.
  // Throws CandidateError on the first violation.
  void validate() const;

  // FNV-1a over the canonical serialized form; stable across runs.
  uint64_t content_hash() const;

  // Binary dump: magic, version, H, W (0x0 if not grid-derived), k_max,
  // then per row: length + indices. See README for the exact layout.
  void save(const std::string& path) const;
  static CandidateSet load(const std::string& path);
  void serialize(std::ostream& os) const;
  static CandidateSet deserialize(std::istream& is);

  // Grid geometry carried for visualization; (0,0) when unknown.
  void set_geom(GridGeom g) { geom_ = g; }
  GridGeom geom() const { return geom_; }

  // Histogram text "length count" per line, for the CLI stats output.
  std::string length_histogram() const;

 private:
  friend struct CandidateBuilder;

  int32_t tokens_ = 0;
  int32_t k_max_ = 0;
  GridGeom geom_{};
  std::vector<int32_t> lengths_;
  std::vector<int32_t> indices_;  // N * k_max, sentinel-padded
};

// Per-block candidate maintenance policy.
struct ExpansionSchedule {
  std::vector<uint8_t> expand_in_block;  // expansion in the block's last layer?
  std::vector<int32_t> k1;               // one-hop fan-out per block
  std::vector<int32_t> k2;               // two-hop fan-out per block
  double keep_fraction = 0.5;            // sparsification rho
  int32_t k_min = 16;                    // sparsification floor
  int32_t k_out_max = 96;                // fixed-width cap after expansion

  // Paper-style default truncated to `blocks`: expansion in the last layer
  // of the first four blocks with fan-outs (22,12) (20,11) (14,9) (12,8).
  static ExpansionSchedule default_for(int32_t blocks);

  void validate(int32_t blocks) const;
  int32_t sparsify_budget(int32_t row_length) const;
};

// Dense-Local Sparse-Global initialization. Every row holds the w x w
// window centered on the token (shifted inward near borders, never shrunk)
// plus one deterministic sample per d x d cell: the token at offset
// (d/2, d/2) from the cell origin, clamped to the grid. Samples already in
// the window are dropped. d = 1 samples every token, reducing to full
// attention.
CandidateSet dlsg_init(GridGeom geom, int32_t window, int32_t dilation);

// Sparsification: keeps the top-k_s scored candidates per row. `scores` is
// [N x k_max], row-masked to the candidate lengths (head-averaged attention
// in the model path). Survivors appear in top-k order (descending score,
// position index breaking ties). Returns the pruned set, the surviving raw
// scores [N x k_s_max], and for each survivor its source position in the
// input row (needed to gather per-head values).
struct SparsifyResult {
  CandidateSet kept;
  Tensor scores;                        // [N x width], row-masked
  std::vector<int32_t> source_pos;      // N * width, -1 past length
  int32_t width = 0;
};
SparsifyResult sparsify(const Tensor& scores, const CandidateSet& cands,
                        int32_t k_s);
SparsifyResult sparsify(const Tensor& scores, const CandidateSet& cands,
                        std::span<const int32_t> k_per_row);

// Two-hop expansion. For each token: take its top-k1 scored candidates, for
// each of those (in rank order) take their top-k2 candidates, union in
// (one-hop rank, two-hop rank) order, then append the novel ones after the
// existing row. Overflow past k_out_max truncates only the appended tail.
CandidateSet expand(const Tensor& scores, const CandidateSet& cands,
                    int32_t k1, int32_t k2, int32_t k_out_max);

// Most similar neighbor per token: the candidate with the highest score,
// excluding the token itself whenever any other candidate exists. Ties pick
// the smallest token index.
std::vector<int32_t> highest_neighbor(const Tensor& scores,
                                      const CandidateSet& cands);

}  // namespace iet::graph
