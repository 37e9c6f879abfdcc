#pragma once

#include <algorithm>
#include <cmath>
#include <vector>

#include "iet/candidates.hpp"
#include "iet/rng.hpp"
#include "iet/tensor.hpp"

namespace tut {

inline iet::Tensor random_tensor(iet::Rng& rng, std::vector<int64_t> shape,
                                 double scale = 1.0) {
  iet::Tensor t(std::move(shape));
  for (double& v : t.vec()) v = rng.uniform(-scale, scale);
  return t;
}

inline double max_abs_diff(const iet::Tensor& a, const iet::Tensor& b) {
  REQUIRE(a.shape() == b.shape());
  double m = 0.0;
  for (int64_t i = 0; i < a.numel(); ++i)
    m = std::max(m, std::abs(a[i] - b[i]));
  return m;
}

// Tensor-level relative error with a floor so near-zero gradients do not
// blow the ratio up.
inline double rel_err(const iet::Tensor& got, const iet::Tensor& want) {
  REQUIRE(got.shape() == want.shape());
  double num = 0.0, den = 0.0;
  for (int64_t i = 0; i < got.numel(); ++i) {
    num = std::max(num, std::abs(got[i] - want[i]));
    den = std::max({den, std::abs(got[i]), std::abs(want[i])});
  }
  return num / std::max(den, 1e-6);
}

inline iet::graph::CandidateSet full_candidates(int32_t n) {
  std::vector<std::vector<int32_t>> rows(static_cast<size_t>(n));
  for (int32_t i = 0; i < n; ++i)
    for (int32_t j = 0; j < n; ++j) rows[static_cast<size_t>(i)].push_back(j);
  return iet::graph::CandidateSet::from_rows(n, rows);
}

// Random valid candidate rows; self is always included first so attention
// rows are never empty of structure.
inline iet::graph::CandidateSet random_candidates(iet::Rng& rng, int32_t n,
                                                  int32_t max_len,
                                                  bool include_self = false) {
  std::vector<std::vector<int32_t>> rows(static_cast<size_t>(n));
  std::vector<int32_t> pool(static_cast<size_t>(n));
  for (int32_t i = 0; i < n; ++i) pool[static_cast<size_t>(i)] = i;
  for (int32_t i = 0; i < n; ++i) {
    for (size_t j = pool.size(); j > 1; --j)
      std::swap(pool[j - 1], pool[rng.below(j)]);
    int32_t len = 1 + static_cast<int32_t>(rng.below(
                          static_cast<uint64_t>(std::min(max_len, n))));
    auto& row = rows[static_cast<size_t>(i)];
    if (include_self) row.push_back(i);
    for (int32_t t = 0; t < len && static_cast<int32_t>(row.size()) <
                                        std::min(max_len, n); ++t) {
      if (include_self && pool[static_cast<size_t>(t)] == i) continue;
      row.push_back(pool[static_cast<size_t>(t)]);
    }
  }
  return iet::graph::CandidateSet::from_rows(n, rows);
}

inline iet::Tensor random_row_scores(iet::Rng& rng,
                                     const iet::graph::CandidateSet& cands) {
  iet::Tensor s({cands.tokens(), cands.k_max()});
  for (int32_t i = 0; i < cands.tokens(); ++i)
    for (int32_t j = 0; j < cands.length(i); ++j) s.at2(i, j) = rng.uniform();
  return s;
}

}  // namespace tut
