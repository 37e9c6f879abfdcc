#include "iet/candidates.hpp"

#include <algorithm>
#include <cmath>
#include <cstring>
#include <fstream>
#include <map>
#include <sstream>

#include "iet/ops.hpp"
#include "iet/parallel.hpp"

namespace iet::graph {

// Internal mutable access used while a set is under construction.
struct CandidateBuilder {
  static int32_t* row_ptr(CandidateSet& cs, int64_t i) {
    return cs.indices_.data() + static_cast<size_t>(i) * cs.k_max_;
  }
  static void set_length(CandidateSet& cs, int64_t i, int32_t len) {
    cs.lengths_[static_cast<size_t>(i)] = len;
  }
};

namespace {

constexpr char kMagic[8] = {'I', 'E', 'T', 'C', 'A', 'N', 'D', '1'};
constexpr uint32_t kVersion = 1;

void write_u32(std::ostream& os, uint32_t v) {
  unsigned char b[4] = {static_cast<unsigned char>(v),
                        static_cast<unsigned char>(v >> 8),
                        static_cast<unsigned char>(v >> 16),
                        static_cast<unsigned char>(v >> 24)};
  os.write(reinterpret_cast<const char*>(b), 4);
}

uint32_t read_u32(std::istream& is, size_t& offset) {
  unsigned char b[4];
  is.read(reinterpret_cast<char*>(b), 4);
  if (!is) throw ParseError("candidate dump truncated", offset);
  offset += 4;
  return static_cast<uint32_t>(b[0]) | (static_cast<uint32_t>(b[1]) << 8) |
         (static_cast<uint32_t>(b[2]) << 16) |
         (static_cast<uint32_t>(b[3]) << 24);
}

}  // namespace

CandidateSet::CandidateSet(int32_t tokens, int32_t k_max)
    : tokens_(tokens), k_max_(k_max) {
  lengths_.assign(static_cast<size_t>(tokens), 0);
  indices_.assign(static_cast<size_t>(tokens) * static_cast<size_t>(k_max),
                  tokens);
}

CandidateSet CandidateSet::from_rows(
    int32_t tokens, const std::vector<std::vector<int32_t>>& rows) {
  if (static_cast<int32_t>(rows.size()) != tokens)
    throw CandidateError("from_rows: row count mismatch");
  int32_t k_max = 1;
  for (const auto& r : rows)
    k_max = std::max(k_max, static_cast<int32_t>(r.size()));
  CandidateSet cs(tokens, k_max);
  for (int32_t i = 0; i < tokens; ++i) {
    cs.lengths_[static_cast<size_t>(i)] = static_cast<int32_t>(rows[i].size());
    std::copy(rows[i].begin(), rows[i].end(),
              cs.indices_.begin() + static_cast<size_t>(i) * k_max);
  }
  cs.validate();
  return cs;
}

void CandidateSet::validate() const {
  std::vector<uint8_t> seen(static_cast<size_t>(tokens_), 0);
  for (int32_t i = 0; i < tokens_; ++i) {
    const int32_t len = lengths_[static_cast<size_t>(i)];
    if (len < 1 || len > k_max_)
      throw CandidateError("row " + std::to_string(i) + " has invalid length " +
                           std::to_string(len));
    const int32_t* row = indices_.data() + static_cast<size_t>(i) * k_max_;
    for (int32_t j = 0; j < len; ++j) {
      const int32_t v = row[j];
      if (v < 0 || v >= tokens_)
        throw CandidateError("row " + std::to_string(i) + " index " +
                             std::to_string(v) + " out of range");
      if (seen[static_cast<size_t>(v)])
        throw CandidateError("row " + std::to_string(i) + " duplicates index " +
                             std::to_string(v));
      seen[static_cast<size_t>(v)] = 1;
    }
    for (int32_t j = len; j < k_max_; ++j) {
      if (row[j] != tokens_)
        throw CandidateError("row " + std::to_string(i) +
                             " padding is not the sentinel");
    }
    for (int32_t j = 0; j < len; ++j) seen[static_cast<size_t>(row[j])] = 0;
  }
}

uint64_t CandidateSet::content_hash() const {
  uint64_t h = 0xcbf29ce484222325ULL;
  auto mix = [&h](uint32_t v) {
    for (int b = 0; b < 4; ++b) {
      h ^= (v >> (8 * b)) & 0xffu;
      h *= 0x100000001b3ULL;
    }
  };
  mix(static_cast<uint32_t>(tokens_));
  mix(static_cast<uint32_t>(k_max_));
  for (int32_t i = 0; i < tokens_; ++i) {
    mix(static_cast<uint32_t>(lengths_[static_cast<size_t>(i)]));
    for (int32_t v : row(i)) mix(static_cast<uint32_t>(v));
  }
  return h;
}

void CandidateSet::serialize(std::ostream& os) const {
  os.write(kMagic, 8);
  write_u32(os, kVersion);
  write_u32(os, static_cast<uint32_t>(geom_.height));
  write_u32(os, static_cast<uint32_t>(geom_.width));
  write_u32(os, static_cast<uint32_t>(tokens_));
  write_u32(os, static_cast<uint32_t>(k_max_));
  for (int32_t i = 0; i < tokens_; ++i) {
    write_u32(os, static_cast<uint32_t>(length(i)));
    for (int32_t v : row(i)) write_u32(os, static_cast<uint32_t>(v));
  }
}

CandidateSet CandidateSet::deserialize(std::istream& is) {
  size_t offset = 0;
  char magic[8];
  is.read(magic, 8);
  if (!is || std::memcmp(magic, kMagic, 8) != 0)
    throw ParseError("bad candidate dump magic", 0);
  offset = 8;
  const uint32_t version = read_u32(is, offset);
  if (version != kVersion)
    throw ParseError("unsupported candidate dump version", offset - 4);
  const uint32_t h = read_u32(is, offset);
  const uint32_t w = read_u32(is, offset);
  const uint32_t n = read_u32(is, offset);
  const uint32_t k_max = read_u32(is, offset);
  if (n == 0 || k_max == 0 || n > (1u << 26) || k_max > n)
    throw ParseError("implausible candidate dump header", offset - 8);
  if (h * w != 0 && h * w != n)
    throw ParseError("geometry does not match token count", offset - 16);
  CandidateSet cs(static_cast<int32_t>(n), static_cast<int32_t>(k_max));
  cs.geom_ = GridGeom{static_cast<int32_t>(h), static_cast<int32_t>(w)};
  for (uint32_t i = 0; i < n; ++i) {
    const uint32_t len = read_u32(is, offset);
    if (len == 0 || len > k_max)
      throw ParseError("row " + std::to_string(i) + " has invalid length",
                       offset - 4);
    for (uint32_t j = 0; j < len; ++j) {
      const uint32_t v = read_u32(is, offset);
      if (v >= n)
        throw ParseError("row " + std::to_string(i) + " index out of range",
                         offset - 4);
      cs.indices_[static_cast<size_t>(i) * k_max + j] = static_cast<int32_t>(v);
    }
    cs.lengths_[i] = static_cast<int32_t>(len);
  }
  cs.validate();
  return cs;
}

void CandidateSet::save(const std::string& path) const {
  std::ofstream os(path, std::ios::binary);
  if (!os) throw IoError("cannot open for write: " + path);
  serialize(os);
  if (!os) throw IoError("write failed: " + path);
}

CandidateSet CandidateSet::load(const std::string& path) {
  std::ifstream is(path, std::ios::binary);
  if (!is) throw IoError("cannot open: " + path);
  return deserialize(is);
}

std::string CandidateSet::length_histogram() const {
  std::map<int32_t, int64_t> counts;
  for (int32_t i = 0; i < tokens_; ++i) ++counts[length(i)];
  std::ostringstream os;
  for (const auto& [len, cnt] : counts) os << len << " " << cnt << "\n";
  return os.str();
}

ExpansionSchedule ExpansionSchedule::default_for(int32_t blocks) {
  static constexpr int32_t kK1[4] = {22, 20, 14, 12};
  static constexpr int32_t kK2[4] = {12, 11, 9, 8};
  ExpansionSchedule s;
  s.expand_in_block.assign(static_cast<size_t>(blocks), 0);
  s.k1.assign(static_cast<size_t>(blocks), 0);
  s.k2.assign(static_cast<size_t>(blocks), 0);
  for (int32_t b = 0; b < std::min(blocks, 4); ++b) {
    s.expand_in_block[static_cast<size_t>(b)] = 1;
    s.k1[static_cast<size_t>(b)] = kK1[b];
    s.k2[static_cast<size_t>(b)] = kK2[b];
  }
  return s;
}

void ExpansionSchedule::validate(int32_t blocks) const {
  if (static_cast<int32_t>(expand_in_block.size()) > blocks ||
      expand_in_block.size() != k1.size() || k1.size() != k2.size())
    throw ConfigError("expansion schedule length mismatch");
  for (size_t b = 0; b < expand_in_block.size(); ++b) {
    if (expand_in_block[b] && (k1[b] < 1 || k2[b] < 1))
      throw ConfigError("expansion fan-outs must be >= 1 where enabled");
  }
  if (!(keep_fraction > 0.0 && keep_fraction <= 1.0))
    throw ConfigError("keep_fraction must be in (0, 1]");
  if (k_min < 1) throw ConfigError("k_min must be >= 1");
  if (k_out_max < k_min) throw ConfigError("k_out_max must be >= k_min");
}

int32_t ExpansionSchedule::sparsify_budget(int32_t row_length) const {
  const int32_t target = static_cast<int32_t>(
      std::ceil(keep_fraction * static_cast<double>(row_length)));
  return std::max(k_min, target);
}

CandidateSet dlsg_init(GridGeom geom, int32_t window, int32_t dilation) {
  if (geom.height < 1 || geom.width < 1) throw ConfigError("empty grid");
  if (window < 1 || window % 2 == 0)
    throw ConfigError("window must be odd and >= 1");
  if (window > std::min(geom.height, geom.width))
    throw ConfigError("window exceeds grid extent");
  if (dilation < 1) throw ConfigError("dilation must be >= 1");

  const int32_t H = geom.height, W = geom.width, N = geom.tokens();
  const int32_t cells_y = (H + dilation - 1) / dilation;
  const int32_t cells_x = (W + dilation - 1) / dilation;

  // Global samples: one token per d x d cell, offset (d/2, d/2) from the
  // cell origin, clamped to the grid. Same set for every row.
  std::vector<int32_t> samples;
  samples.reserve(static_cast<size_t>(cells_y) * cells_x);
  for (int32_t cy = 0; cy < cells_y; ++cy) {
    const int32_t r = std::min(cy * dilation + dilation / 2, H - 1);
    for (int32_t cx = 0; cx < cells_x; ++cx) {
      const int32_t c = std::min(cx * dilation + dilation / 2, W - 1);
      samples.push_back(geom.token_at(r, c));
    }
  }

  const int32_t k_max = window * window + static_cast<int32_t>(samples.size());
  CandidateSet cs(N, k_max);
  cs.set_geom(geom);
  const int32_t half = window / 2;

  parallel_for_ranges(N, [&](int64_t t0, int64_t t1) {
    std::vector<uint8_t> in_row(static_cast<size_t>(N), 0);
    for (int64_t ti = t0; ti < t1; ++ti) {
      const int32_t i = static_cast<int32_t>(ti);
      const int32_t r = geom.row_of(i), c = geom.col_of(i);
      // Window start shifts inward so the window always holds w^2 tokens.
      const int32_t r0 = std::clamp(r - half, 0, H - window);
      const int32_t c0 = std::clamp(c - half, 0, W - window);
      int32_t* row = CandidateBuilder::row_ptr(cs, ti);
      int32_t len = 0;
      for (int32_t wr = r0; wr < r0 + window; ++wr)
        for (int32_t wc = c0; wc < c0 + window; ++wc) {
          const int32_t t = geom.token_at(wr, wc);
          row[len++] = t;
          in_row[static_cast<size_t>(t)] = 1;
        }
      for (int32_t s : samples) {
        if (!in_row[static_cast<size_t>(s)]) {
          row[len++] = s;
          in_row[static_cast<size_t>(s)] = 1;
        }
      }
      CandidateBuilder::set_length(cs, ti, len);
      for (int32_t j = 0; j < len; ++j) in_row[static_cast<size_t>(row[j])] = 0;
    }
  });
  return cs;
}

SparsifyResult sparsify(const Tensor& scores, const CandidateSet& cands,
                        std::span<const int32_t> k_per_row) {
  const int32_t n = cands.tokens(), k_max = cands.k_max();
  if (scores.rank() != 2 || scores.dim(0) != n || scores.dim(1) != k_max)
    throw DimensionError("sparsify: scores not aligned with candidates");
  if (static_cast<int32_t>(k_per_row.size()) != n)
    throw DimensionError("sparsify: budget vector size mismatch");

  std::vector<int32_t> keep(static_cast<size_t>(n), 0);
  for (int32_t i = 0; i < n; ++i) {
    if (k_per_row[static_cast<size_t>(i)] < 1)
      throw ConfigError("sparsify: budget must be >= 1");
    keep[static_cast<size_t>(i)] =
        std::min(k_per_row[static_cast<size_t>(i)], cands.length(i));
  }
  const int32_t width = *std::max_element(keep.begin(), keep.end());

  SparsifyResult res;
  res.width = width;
  res.kept = CandidateSet(n, width);
  res.kept.set_geom(cands.geom());
  res.scores = Tensor({n, width});
  res.source_pos.assign(static_cast<size_t>(n) * width, -1);

  const double* ps = scores.data();
  parallel_for_ranges(n, [&](int64_t r0, int64_t r1) {
    for (int64_t i = r0; i < r1; ++i) {
      const int32_t len = cands.length(static_cast<int32_t>(i));
      const int32_t kk = keep[static_cast<size_t>(i)];
      auto order = ops::topk({ps + i * k_max, static_cast<size_t>(len)}, kk);
      auto in_row = cands.row(static_cast<int32_t>(i));
      int32_t* out_row = CandidateBuilder::row_ptr(res.kept, i);
      double* out_sc = res.scores.data() + i * width;
      int32_t* out_pos = res.source_pos.data() + i * width;
      for (int32_t t = 0; t < kk; ++t) {
        const int32_t j = order[static_cast<size_t>(t)];
        out_row[t] = in_row[static_cast<size_t>(j)];
        out_sc[t] = ps[i * k_max + j];
        out_pos[t] = j;
      }
      CandidateBuilder::set_length(res.kept, i, kk);
    }
  });
  return res;
}

SparsifyResult sparsify(const Tensor& scores, const CandidateSet& cands,
                        int32_t k_s) {
  if (k_s < 1) throw ConfigError("sparsify: k_s must be >= 1");
  std::vector<int32_t> budget(static_cast<size_t>(cands.tokens()), k_s);
  return sparsify(scores, cands, budget);
}

CandidateSet expand(const Tensor& scores, const CandidateSet& cands,
                    int32_t k1, int32_t k2, int32_t k_out_max) {
  const int32_t n = cands.tokens(), k_max = cands.k_max();
  if (scores.rank() != 2 || scores.dim(0) != n || scores.dim(1) != k_max)
    throw DimensionError("expand: scores not aligned with candidates");
  if (k_out_max < 1) throw ConfigError("expand: k_out_max must be >= 1");

  // Rank-ordered top selections are shared across rows: precompute each
  // token's top-k2 candidate list once.
  const double* ps = scores.data();
  std::vector<std::vector<int32_t>> top2(static_cast<size_t>(n));
  if (k1 > 0 && k2 > 0) {
    parallel_for_ranges(n, [&](int64_t r0, int64_t r1) {
      for (int64_t u = r0; u < r1; ++u) {
        const int32_t len = cands.length(static_cast<int32_t>(u));
        auto order = ops::topk({ps + u * k_max, static_cast<size_t>(len)}, k2);
        auto row = cands.row(static_cast<int32_t>(u));
        auto& dst = top2[static_cast<size_t>(u)];
        dst.reserve(order.size());
        for (int32_t j : order) dst.push_back(row[static_cast<size_t>(j)]);
      }
    });
  }

  std::vector<std::vector<int32_t>> out_rows(static_cast<size_t>(n));
  parallel_for_ranges(n, [&](int64_t r0, int64_t r1) {
    std::vector<uint8_t> seen(static_cast<size_t>(n), 0);
    for (int64_t i = r0; i < r1; ++i) {
      auto row = cands.row(static_cast<int32_t>(i));
      auto& out = out_rows[static_cast<size_t>(i)];
      out.assign(row.begin(), row.end());
      for (int32_t v : row) seen[static_cast<size_t>(v)] = 1;
      if (k1 > 0 && k2 > 0) {
        const int32_t len = cands.length(static_cast<int32_t>(i));
        auto hop1 = ops::topk({ps + i * k_max, static_cast<size_t>(len)}, k1);
        const size_t cap =
            std::max(out.size(), static_cast<size_t>(k_out_max));
        for (int32_t j : hop1) {
          const int32_t u = row[static_cast<size_t>(j)];
          for (int32_t v : top2[static_cast<size_t>(u)]) {
            if (!seen[static_cast<size_t>(v)] && out.size() < cap) {
              out.push_back(v);
              seen[static_cast<size_t>(v)] = 1;
            }
          }
        }
      }
      for (int32_t v : out) seen[static_cast<size_t>(v)] = 0;
    }
  });

  int32_t width = 1;
  for (const auto& r : out_rows)
    width = std::max(width, static_cast<int32_t>(r.size()));
  CandidateSet cs(n, width);
  cs.set_geom(cands.geom());
  for (int32_t i = 0; i < n; ++i) {
    const auto& r = out_rows[static_cast<size_t>(i)];
    CandidateBuilder::set_length(cs, i, static_cast<int32_t>(r.size()));
    std::copy(r.begin(), r.end(), CandidateBuilder::row_ptr(cs, i));
  }
  return cs;
}

std::vector<int32_t> highest_neighbor(const Tensor& scores,
                                      const CandidateSet& cands) {
  const int32_t n = cands.tokens(), k_max = cands.k_max();
  if (scores.rank() != 2 || scores.dim(0) != n || scores.dim(1) != k_max)
    throw DimensionError("highest_neighbor: scores not aligned");
  std::vector<int32_t> out(static_cast<size_t>(n), -1);
  const double* ps = scores.data();
  parallel_for_ranges(n, [&](int64_t r0, int64_t r1) {
    for (int64_t i = r0; i < r1; ++i) {
      auto row = cands.row(static_cast<int32_t>(i));
      int32_t best = -1;
      double best_score = 0.0;
      for (size_t j = 0; j < row.size(); ++j) {
        const int32_t tok = row[j];
        if (tok == static_cast<int32_t>(i)) continue;
        const double s = ps[i * k_max + static_cast<int64_t>(j)];
        if (best < 0 || s > best_score || (s == best_score && tok < best)) {
          best = tok;
          best_score = s;
        }
      }
      // A row holding only the token itself falls back to self.
      out[static_cast<size_t>(i)] = best < 0 ? static_cast<int32_t>(i) : best;
    }
  });
  return out;
}

}  // namespace iet::graph
