#include "iet/bench.hpp"

#include <algorithm>
#include <chrono>
#include <cmath>
#include <cstdio>
#include <sstream>
#include <vector>

#include <nlohmann/json.hpp>

#include "iet/error.hpp"
#include "iet/parallel.hpp"
#include "iet/rng.hpp"

namespace iet::bench {

namespace {

// Self-contained kernels at either precision; the benchmark measures raw
// gather/dot throughput, not the Tensor plumbing.
template <typename T>
struct Problem {
  int32_t n, k, d;
  std::vector<T> q, key, v;        // n * d each
  std::vector<int32_t> cand;       // n * k
  std::vector<T> logits;           // n * k scratch
  std::vector<T> out;              // n * d
  std::vector<T> dense_logits;     // n * n scratch (dense path)
};

template <typename T>
Problem<T> make_problem(int32_t n, int32_t k, int32_t d, uint64_t seed) {
  Problem<T> p;
  p.n = n;
  p.k = k;
  p.d = d;
  Rng rng(seed);
  auto fill = [&rng](std::vector<T>& v, size_t count) {
    v.resize(count);
    for (auto& x : v) x = static_cast<T>(rng.uniform(-1.0, 1.0));
  };
  fill(p.q, static_cast<size_t>(n) * d);
  fill(p.key, static_cast<size_t>(n) * d);
  fill(p.v, static_cast<size_t>(n) * d);
  p.cand.resize(static_cast<size_t>(n) * k);
  std::vector<int32_t> pool(static_cast<size_t>(n));
  for (int32_t i = 0; i < n; ++i) pool[static_cast<size_t>(i)] = i;
  for (int32_t i = 0; i < n; ++i) {
    for (size_t j = pool.size(); j > 1; --j)
      std::swap(pool[j - 1], pool[rng.below(j)]);
    std::copy(pool.begin(), pool.begin() + k,
              p.cand.begin() + static_cast<size_t>(i) * k);
  }
  p.logits.assign(static_cast<size_t>(n) * k, T(0));
  p.out.assign(static_cast<size_t>(n) * d, T(0));
  return p;
}

template <typename T>
void sparse_attention_pass(Problem<T>& p) {
  const int32_t n = p.n, k = p.k, d = p.d;
  const T inv_sqrt_d = static_cast<T>(1.0 / std::sqrt(static_cast<double>(d)));
  parallel_for_ranges(n, [&](int64_t r0, int64_t r1) {
    for (int64_t i = r0; i < r1; ++i) {
      const T* qrow = p.q.data() + i * d;
      T* lrow = p.logits.data() + i * k;
      const int32_t* crow = p.cand.data() + i * k;
      for (int32_t j = 0; j < k; ++j) {
        const T* krow = p.key.data() + static_cast<int64_t>(crow[j]) * d;
        T acc = 0;
        for (int32_t t = 0; t < d; ++t) acc += qrow[t] * krow[t];
        lrow[j] = acc * inv_sqrt_d;
      }
      T mx = lrow[0];
      for (int32_t j = 1; j < k; ++j) mx = std::max(mx, lrow[j]);
      T sum = 0;
      for (int32_t j = 0; j < k; ++j) {
        lrow[j] = std::exp(lrow[j] - mx);
        sum += lrow[j];
      }
      const T inv = T(1) / sum;
      T* orow = p.out.data() + i * d;
      for (int32_t t = 0; t < d; ++t) orow[t] = 0;
      for (int32_t j = 0; j < k; ++j) {
        const T w = lrow[j] * inv;
        const T* vrow = p.v.data() + static_cast<int64_t>(crow[j]) * d;
        for (int32_t t = 0; t < d; ++t) orow[t] += w * vrow[t];
      }
    }
  });
}

template <typename T>
void dense_attention_pass(Problem<T>& p) {
  const int32_t n = p.n, d = p.d;
  const T inv_sqrt_d = static_cast<T>(1.0 / std::sqrt(static_cast<double>(d)));
  if (p.dense_logits.size() != static_cast<size_t>(n) * n)
    p.dense_logits.assign(static_cast<size_t>(n) * n, T(0));
  parallel_for_ranges(n, [&](int64_t r0, int64_t r1) {
    for (int64_t i = r0; i < r1; ++i) {
      const T* qrow = p.q.data() + i * d;
      T* lrow = p.dense_logits.data() + i * n;
      for (int32_t j = 0; j < n; ++j) {
        const T* krow = p.key.data() + static_cast<int64_t>(j) * d;
        T acc = 0;
        for (int32_t t = 0; t < d; ++t) acc += qrow[t] * krow[t];
        lrow[j] = acc * inv_sqrt_d;
      }
      T mx = lrow[0];
      for (int32_t j = 1; j < n; ++j) mx = std::max(mx, lrow[j]);
      T sum = 0;
      for (int32_t j = 0; j < n; ++j) {
        lrow[j] = std::exp(lrow[j] - mx);
        sum += lrow[j];
      }
      const T inv = T(1) / sum;
      T* orow = p.out.data() + i * d;
      for (int32_t t = 0; t < d; ++t) orow[t] = 0;
      for (int32_t j = 0; j < n; ++j) {
        const T w = lrow[j] * inv;
        const T* vrow = p.v.data() + static_cast<int64_t>(j) * d;
        for (int32_t t = 0; t < d; ++t) orow[t] += w * vrow[t];
      }
    }
  });
}

template <typename Fn>
double median_ms(int32_t reps, Fn&& fn) {
  std::vector<double> times;
  times.reserve(static_cast<size_t>(reps));
  for (int32_t r = 0; r < reps; ++r) {
    const auto t0 = std::chrono::steady_clock::now();
    fn();
    const auto t1 = std::chrono::steady_clock::now();
    times.push_back(std::chrono::duration<double, std::milli>(t1 - t0).count());
  }
  std::sort(times.begin(), times.end());
  return times[times.size() / 2];
}

template <typename T>
BenchRow bench_one(int32_t n, int32_t k, int32_t d, int32_t reps,
                   uint64_t seed) {
  Problem<T> p = make_problem<T>(n, k, d, seed);
  BenchRow row;
  row.n = n;
  row.k = k;
  row.head_dim = d;
  sparse_attention_pass(p);  // warm up caches before timing
  row.sparse_ms = median_ms(reps, [&] { sparse_attention_pass(p); });
  dense_attention_pass(p);
  row.dense_ms = median_ms(reps, [&] { dense_attention_pass(p); });
  const int64_t nn = n;
  row.sparse_flops = nn * k * (4 * static_cast<int64_t>(d) + 4);
  row.dense_flops = nn * nn * (4 * static_cast<int64_t>(d) + 4);
  return row;
}

}  // namespace

BenchReport run_bench(const std::vector<int32_t>& n_values,
                      const std::vector<int32_t>& k_values, int32_t head_dim,
                      int32_t reps, bool use_f32, uint64_t seed,
                      bool /*skip_dense_above_n*/) {
  if (head_dim < 1 || reps < 1) throw ConfigError("bench: bad head_dim/reps");
  BenchReport rep;
  rep.f32 = use_f32;
  for (int32_t n : n_values) {
    for (int32_t k : k_values) {
      if (k > n) throw ConfigError("bench: k exceeds n");
      rep.rows.push_back(use_f32
                             ? bench_one<float>(n, k, head_dim, reps, seed)
                             : bench_one<double>(n, k, head_dim, reps, seed));
    }
  }
  return rep;
}

std::string BenchReport::to_text() const {
  std::ostringstream os;
  os << "     N     k   d    sparse_ms     dense_ms  sparse_flops   dense_flops\n";
  char buf[160];
  for (const auto& r : rows) {
    std::snprintf(buf, sizeof(buf), "%6d %5d %3d %12.3f %12.3f %13lld %13lld\n",
                  r.n, r.k, r.head_dim, r.sparse_ms, r.dense_ms,
                  static_cast<long long>(r.sparse_flops),
                  static_cast<long long>(r.dense_flops));
    os << buf;
  }
  return os.str();
}

std::string BenchReport::to_json() const {
  nlohmann::json j;
  j["precision"] = f32 ? "f32" : "f64";
  auto arr = nlohmann::json::array();
  for (const auto& r : rows) {
    arr.push_back({{"n", r.n},
                   {"k", r.k},
                   {"head_dim", r.head_dim},
                   {"sparse_ms", r.sparse_ms},
                   {"dense_ms", r.dense_ms},
                   {"sparse_flops", r.sparse_flops},
                   {"dense_flops", r.dense_flops}});
  }
  j["rows"] = arr;
  return j.dump(2);
}

}  // namespace iet::bench
