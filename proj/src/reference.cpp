#include "iet/reference.hpp"

#include <algorithm>
#include <cmath>
#include <numeric>

namespace iet::ref {

Tensor matmul(const Tensor& a, const Tensor& b) {
  const int64_t m = a.dim(0), k = a.dim(1), p = b.dim(1);
  if (b.dim(0) != k) throw DimensionError("ref::matmul: inner extents differ");
  Tensor out({m, p});
  for (int64_t i = 0; i < m; ++i)
    for (int64_t j = 0; j < p; ++j) {
      double acc = 0.0;
      for (int64_t t = 0; t < k; ++t) acc += a.at2(i, t) * b.at2(t, j);
      out.at2(i, j) = acc;
    }
  return out;
}

std::vector<int32_t> topk_by_sort(const std::vector<double>& values,
                                  int64_t count) {
  std::vector<int32_t> idx(values.size());
  std::iota(idx.begin(), idx.end(), 0);
  std::stable_sort(idx.begin(), idx.end(), [&](int32_t a, int32_t b) {
    return values[static_cast<size_t>(a)] > values[static_cast<size_t>(b)];
  });
  idx.resize(static_cast<size_t>(
      std::clamp<int64_t>(count, 0, static_cast<int64_t>(values.size()))));
  return idx;
}

Tensor conv3x3_direct(const Tensor& x, const Tensor& w, const Tensor& b) {
  const int64_t h = x.dim(0), wd = x.dim(1), cin = x.dim(2), cout = w.dim(3);
  Tensor out({h, wd, cout});
  for (int64_t y = 0; y < h; ++y)
    for (int64_t xx = 0; xx < wd; ++xx)
      for (int64_t co = 0; co < cout; ++co) {
        double acc = b.numel() > 0 ? b[co] : 0.0;
        for (int64_t ky = 0; ky < 3; ++ky)
          for (int64_t kx = 0; kx < 3; ++kx)
            for (int64_t ci = 0; ci < cin; ++ci) {
              const int64_t sy = y + ky - 1, sx = xx + kx - 1;
              if (sy < 0 || sy >= h || sx < 0 || sx >= wd) continue;
              acc += x.at3(sy, sx, ci) *
                     w[((ky * 3 + kx) * cin + ci) * cout + co];
            }
        out.at3(y, xx, co) = acc;
      }
  return out;
}

Tensor depthwise_direct(const Tensor& x, const Tensor& w, const Tensor& b) {
  const int64_t h = x.dim(0), wd = x.dim(1), c = x.dim(2);
  Tensor out({h, wd, c});
  for (int64_t y = 0; y < h; ++y)
    for (int64_t xx = 0; xx < wd; ++xx)
      for (int64_t ch = 0; ch < c; ++ch) {
        double acc = b.numel() > 0 ? b[ch] : 0.0;
        for (int64_t ky = 0; ky < 3; ++ky)
          for (int64_t kx = 0; kx < 3; ++kx) {
            const int64_t sy = y + ky - 1, sx = xx + kx - 1;
            if (sy < 0 || sy >= h || sx < 0 || sx >= wd) continue;
            acc += x.at3(sy, sx, ch) * w[(ky * 3 + kx) * c + ch];
          }
        out.at3(y, xx, ch) = acc;
      }
  return out;
}

namespace {

// Row softmax into a fresh buffer, max-subtracted.
void softmax_row(const double* in, double* out, int64_t n) {
  double mx = in[0];
  for (int64_t i = 1; i < n; ++i) mx = std::max(mx, in[i]);
  double sum = 0.0;
  for (int64_t i = 0; i < n; ++i) {
    out[i] = std::exp(in[i] - mx);
    sum += out[i];
  }
  for (int64_t i = 0; i < n; ++i) out[i] /= sum;
}

}  // namespace

Tensor dense_mha(const Tensor& x, const Tensor& w_q, const Tensor& w_k,
                 const Tensor& w_v, const Tensor& w_o, int32_t heads) {
  const int64_t n = x.dim(0), c = x.dim(1);
  const int64_t d = c / heads;
  Tensor q = matmul(x, w_q), k = matmul(x, w_k), v = matmul(x, w_v);
  Tensor o({n, c});
  std::vector<double> logits(static_cast<size_t>(n));
  std::vector<double> attn(static_cast<size_t>(n));
  const double inv = 1.0 / std::sqrt(static_cast<double>(d));
  for (int32_t hh = 0; hh < heads; ++hh) {
    const int64_t off = static_cast<int64_t>(hh) * d;
    for (int64_t i = 0; i < n; ++i) {
      for (int64_t j = 0; j < n; ++j) {
        double acc = 0.0;
        for (int64_t t = 0; t < d; ++t)
          acc += q.at2(i, off + t) * k.at2(j, off + t);
        logits[static_cast<size_t>(j)] = acc * inv;
      }
      softmax_row(logits.data(), attn.data(), n);
      for (int64_t t = 0; t < d; ++t) {
        double acc = 0.0;
        for (int64_t j = 0; j < n; ++j)
          acc += attn[static_cast<size_t>(j)] * v.at2(j, off + t);
        o.at2(i, off + t) = acc;
      }
    }
  }
  return matmul(o, w_o);
}

DenseMhaGrads dense_mha_backward(const Tensor& x, const Tensor& w_q,
                                 const Tensor& w_k, const Tensor& w_v,
                                 const Tensor& w_o, int32_t heads,
                                 const Tensor& dy) {
  const int64_t n = x.dim(0), c = x.dim(1);
  const int64_t d = c / heads;
  const double inv = 1.0 / std::sqrt(static_cast<double>(d));
  Tensor q = matmul(x, w_q), k = matmul(x, w_k), v = matmul(x, w_v);

  // Recompute attention per head (saved densely).
  Tensor attn({heads, n, n});
  std::vector<double> logits(static_cast<size_t>(n));
  for (int32_t hh = 0; hh < heads; ++hh) {
    const int64_t off = static_cast<int64_t>(hh) * d;
    for (int64_t i = 0; i < n; ++i) {
      for (int64_t j = 0; j < n; ++j) {
        double acc = 0.0;
        for (int64_t t = 0; t < d; ++t)
          acc += q.at2(i, off + t) * k.at2(j, off + t);
        logits[static_cast<size_t>(j)] = acc * inv;
      }
      softmax_row(logits.data(), &attn.at3(hh, i, 0), n);
    }
  }
  Tensor o({n, c});
  for (int32_t hh = 0; hh < heads; ++hh) {
    const int64_t off = static_cast<int64_t>(hh) * d;
    for (int64_t i = 0; i < n; ++i)
      for (int64_t t = 0; t < d; ++t) {
        double acc = 0.0;
        for (int64_t j = 0; j < n; ++j) acc += attn.at3(hh, i, j) * v.at2(j, off + t);
        o.at2(i, off + t) = acc;
      }
  }

  DenseMhaGrads g;
  // y = o * w_o
  g.dw_o = Tensor({c, c});
  for (int64_t a = 0; a < c; ++a)
    for (int64_t bcol = 0; bcol < c; ++bcol) {
      double acc = 0.0;
      for (int64_t i = 0; i < n; ++i) acc += o.at2(i, a) * dy.at2(i, bcol);
      g.dw_o.at2(a, bcol) = acc;
    }
  Tensor do_({n, c});
  for (int64_t i = 0; i < n; ++i)
    for (int64_t a = 0; a < c; ++a) {
      double acc = 0.0;
      for (int64_t bcol = 0; bcol < c; ++bcol)
        acc += dy.at2(i, bcol) * w_o.at2(a, bcol);
      do_.at2(i, a) = acc;
    }

  Tensor dq({n, c}), dk({n, c}), dv({n, c});
  std::vector<double> da(static_cast<size_t>(n));
  std::vector<double> dlogit(static_cast<size_t>(n));
  for (int32_t hh = 0; hh < heads; ++hh) {
    const int64_t off = static_cast<int64_t>(hh) * d;
    for (int64_t i = 0; i < n; ++i) {
      // o_i = sum_j a_ij v_j
      for (int64_t j = 0; j < n; ++j) {
        double acc = 0.0;
        for (int64_t t = 0; t < d; ++t)
          acc += do_.at2(i, off + t) * v.at2(j, off + t);
        da[static_cast<size_t>(j)] = acc;
        for (int64_t t = 0; t < d; ++t)
          dv.at2(j, off + t) += attn.at3(hh, i, j) * do_.at2(i, off + t);
      }
      double inner = 0.0;
      for (int64_t j = 0; j < n; ++j)
        inner += da[static_cast<size_t>(j)] * attn.at3(hh, i, j);
      for (int64_t j = 0; j < n; ++j)
        dlogit[static_cast<size_t>(j)] =
            attn.at3(hh, i, j) * (da[static_cast<size_t>(j)] - inner);
      for (int64_t j = 0; j < n; ++j) {
        const double dl = dlogit[static_cast<size_t>(j)] * inv;
        for (int64_t t = 0; t < d; ++t) {
          dq.at2(i, off + t) += dl * k.at2(j, off + t);
          dk.at2(j, off + t) += dl * q.at2(i, off + t);
        }
      }
    }
  }

  auto at_b = [n](const Tensor& a, const Tensor& b_, int64_t ca, int64_t cb) {
    Tensor out({ca, cb});
    for (int64_t i = 0; i < ca; ++i)
      for (int64_t j = 0; j < cb; ++j) {
        double acc = 0.0;
        for (int64_t r = 0; r < n; ++r) acc += a.at2(r, i) * b_.at2(r, j);
        out.at2(i, j) = acc;
      }
    return out;
  };
  g.dw_q = at_b(x, dq, c, c);
  g.dw_k = at_b(x, dk, c, c);
  g.dw_v = at_b(x, dv, c, c);
  g.dx = Tensor({n, c});
  for (int64_t i = 0; i < n; ++i)
    for (int64_t a = 0; a < c; ++a) {
      double acc = 0.0;
      for (int64_t bcol = 0; bcol < c; ++bcol) {
        acc += dq.at2(i, bcol) * w_q.at2(a, bcol);
        acc += dk.at2(i, bcol) * w_k.at2(a, bcol);
        acc += dv.at2(i, bcol) * w_v.at2(a, bcol);
      }
      g.dx.at2(i, a) = acc;
    }
  return g;
}

std::vector<std::set<int32_t>> two_hop_sets(const Tensor& scores,
                                            const graph::CandidateSet& cands,
                                            int32_t k1, int32_t k2) {
  const int32_t n = cands.tokens();
  const int64_t k_max = cands.k_max();
  auto top_tokens = [&](int32_t row, int32_t count) {
    std::vector<double> vals;
    auto r = cands.row(row);
    vals.reserve(r.size());
    for (size_t j = 0; j < r.size(); ++j)
      vals.push_back(scores[static_cast<int64_t>(row) * k_max +
                            static_cast<int64_t>(j)]);
    auto order = topk_by_sort(vals, count);
    std::vector<int32_t> toks;
    toks.reserve(order.size());
    for (int32_t j : order) toks.push_back(r[static_cast<size_t>(j)]);
    return toks;
  };

  std::vector<std::set<int32_t>> out(static_cast<size_t>(n));
  for (int32_t i = 0; i < n; ++i) {
    auto row = cands.row(i);
    std::set<int32_t> result(row.begin(), row.end());
    if (k1 > 0 && k2 > 0) {
      std::set<int32_t> two_hop;
      for (int32_t u : top_tokens(i, k1)) {
        for (int32_t v : top_tokens(u, k2)) two_hop.insert(v);
      }
      result.insert(two_hop.begin(), two_hop.end());
    }
    out[static_cast<size_t>(i)] = std::move(result);
  }
  return out;
}

std::vector<std::set<int32_t>> dlsg_sets(graph::GridGeom geom, int32_t window,
                                         int32_t dilation) {
  const int32_t H = geom.height, W = geom.width;
  std::vector<std::set<int32_t>> out(static_cast<size_t>(geom.tokens()));
  for (int32_t i = 0; i < geom.tokens(); ++i) {
    const int32_t r = geom.row_of(i), c = geom.col_of(i);
    int32_t r0 = r - window / 2, c0 = c - window / 2;
    if (r0 < 0) r0 = 0;
    if (c0 < 0) c0 = 0;
    if (r0 + window > H) r0 = H - window;
    if (c0 + window > W) c0 = W - window;
    auto& s = out[static_cast<size_t>(i)];
    for (int32_t t = 0; t < geom.tokens(); ++t) {
      const int32_t tr = geom.row_of(t), tc = geom.col_of(t);
      if (tr >= r0 && tr < r0 + window && tc >= c0 && tc < c0 + window)
        s.insert(t);
    }
    for (int32_t cy = 0; cy * dilation < H; ++cy)
      for (int32_t cx = 0; cx * dilation < W; ++cx) {
        int32_t sr = cy * dilation + dilation / 2;
        int32_t sc = cx * dilation + dilation / 2;
        if (sr > H - 1) sr = H - 1;
        if (sc > W - 1) sc = W - 1;
        s.insert(geom.token_at(sr, sc));
      }
  }
  return out;
}

img::Image bicubic_direct(const img::Image& im, int32_t num, int32_t den) {
  auto weight = [](double t) {
    constexpr double a = -0.5;
    t = std::abs(t);
    if (t <= 1.0) return ((a + 2.0) * t - (a + 3.0)) * t * t + 1.0;
    if (t < 2.0) return a * (((t - 5.0) * t + 8.0) * t - 4.0);
    return 0.0;
  };
  const int64_t h = im.height, w = im.width;
  const int64_t oh = std::max<int64_t>(1, h * num / den);
  const int64_t ow = std::max<int64_t>(1, w * num / den);
  const double ratio = static_cast<double>(den) / num;
  img::Image out;
  out.height = static_cast<int32_t>(oh);
  out.width = static_cast<int32_t>(ow);
  out.data.assign(static_cast<size_t>(oh) * ow * 3, 0.0);
  for (int64_t oy = 0; oy < oh; ++oy)
    for (int64_t ox = 0; ox < ow; ++ox) {
      const double sy = (oy + 0.5) * ratio - 0.5;
      const double sx = (ox + 0.5) * ratio - 0.5;
      const int64_t by = static_cast<int64_t>(std::floor(sy));
      const int64_t bx = static_cast<int64_t>(std::floor(sx));
      for (int ch = 0; ch < 3; ++ch) {
        double acc = 0.0;
        for (int ty = 0; ty < 4; ++ty)
          for (int tx = 0; tx < 4; ++tx) {
            const int64_t yy = std::clamp<int64_t>(by + ty - 1, 0, h - 1);
            const int64_t xx = std::clamp<int64_t>(bx + tx - 1, 0, w - 1);
            acc += weight(sy - static_cast<double>(by + ty - 1)) *
                   weight(sx - static_cast<double>(bx + tx - 1)) *
                   im.at(static_cast<int32_t>(yy), static_cast<int32_t>(xx), ch);
          }
        out.data[(static_cast<size_t>(oy) * ow + ox) * 3 + ch] = acc;
      }
    }
  return out;
}

}  // namespace iet::ref
