#pragma once

#include <cstdint>
#include <string>
#include <vector>

namespace iet::bench {

// One measurement: sparse row-gather attention vs the dense N^2 path at the
// same head dimension, median wall time over `reps` runs plus exact FLOP
// counts for the work performed.
struct BenchRow {
  int32_t n = 0;
  int32_t k = 0;
  int32_t head_dim = 0;
  double sparse_ms = 0.0;
  double dense_ms = 0.0;
  int64_t sparse_flops = 0;
  int64_t dense_flops = 0;
};

struct BenchReport {
  std::vector<BenchRow> rows;
  bool f32 = false;
  std::string to_text() const;
  std::string to_json() const;
};

// Random Q/K/V and k random candidates per row (deterministic from seed).
// use_f32 switches the kernel storage/arithmetic to float for throughput
// comparisons; verification paths elsewhere stay f64.
BenchReport run_bench(const std::vector<int32_t>& n_values,
                      const std::vector<int32_t>& k_values, int32_t head_dim,
                      int32_t reps, bool use_f32, uint64_t seed,
                      bool skip_dense_above_n = false);

}  // namespace iet::bench
