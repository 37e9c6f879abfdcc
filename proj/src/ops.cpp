#include "iet/ops.hpp"

#include <algorithm>
#include <cmath>
#include <numeric>

#include "iet/parallel.hpp"

namespace iet::ops {

namespace {

void require(bool cond, const char* msg) {
  if (!cond) throw DimensionError(msg);
}

constexpr double kInvSqrt2 = 0.7071067811865475244;
constexpr double kInvSqrt2Pi = 0.3989422804014326779;

}  // namespace

Tensor matmul(const Tensor& a, const Tensor& b) {
  require(a.rank() == 2 && b.rank() == 2, "matmul expects rank-2 tensors");
  require(a.dim(1) == b.dim(0), "matmul inner extents differ");
  const int64_t m = a.dim(0), k = a.dim(1), p = b.dim(1);
  Tensor out({m, p});
  const double* pa = a.data();
  const double* pb = b.data();
  double* po = out.data();
  parallel_for_ranges(m, [&](int64_t r0, int64_t r1) {
    for (int64_t i = r0; i < r1; ++i) {
      double* orow = po + i * p;
      const double* arow = pa + i * k;
      for (int64_t kk = 0; kk < k; ++kk) {
        const double av = arow[kk];
        const double* brow = pb + kk * p;
        for (int64_t j = 0; j < p; ++j) orow[j] += av * brow[j];
      }
    }
  });
  out.check_finite("matmul");
  return out;
}

Tensor matmul_tn(const Tensor& a, const Tensor& b) {
  require(a.rank() == 2 && b.rank() == 2, "matmul_tn expects rank-2 tensors");
  require(a.dim(0) == b.dim(0), "matmul_tn inner extents differ");
  const int64_t k = a.dim(0), m = a.dim(1), p = b.dim(1);
  Tensor out({m, p});
  const double* pa = a.data();
  const double* pb = b.data();
  double* po = out.data();
  parallel_for_ranges(m, [&](int64_t r0, int64_t r1) {
    for (int64_t i = r0; i < r1; ++i) {
      double* orow = po + i * p;
      for (int64_t kk = 0; kk < k; ++kk) {
        const double av = pa[kk * m + i];
        const double* brow = pb + kk * p;
        for (int64_t j = 0; j < p; ++j) orow[j] += av * brow[j];
      }
    }
  });
  out.check_finite("matmul_tn");
  return out;
}

Tensor matmul_nt(const Tensor& a, const Tensor& b) {
  require(a.rank() == 2 && b.rank() == 2, "matmul_nt expects rank-2 tensors");
  require(a.dim(1) == b.dim(1), "matmul_nt inner extents differ");
  const int64_t m = a.dim(0), k = a.dim(1), p = b.dim(0);
  Tensor out({m, p});
  const double* pa = a.data();
  const double* pb = b.data();
  double* po = out.data();
  parallel_for_ranges(m, [&](int64_t r0, int64_t r1) {
    for (int64_t i = r0; i < r1; ++i) {
      double* orow = po + i * p;
      const double* arow = pa + i * k;
      for (int64_t j = 0; j < p; ++j) {
        const double* brow = pb + j * k;
        double acc = 0.0;
        for (int64_t kk = 0; kk < k; ++kk) acc += arow[kk] * brow[kk];
        orow[j] = acc;
      }
    }
  });
  out.check_finite("matmul_nt");
  return out;
}

void add_inplace(Tensor& a, const Tensor& b) {
  require(a.same_shape(b), "add: shape mismatch");
  double* pa = a.data();
  const double* pb = b.data();
  for (int64_t i = 0; i < a.numel(); ++i) pa[i] += pb[i];
}

void axpy_inplace(Tensor& a, double alpha, const Tensor& b) {
  require(a.same_shape(b), "axpy: shape mismatch");
  double* pa = a.data();
  const double* pb = b.data();
  for (int64_t i = 0; i < a.numel(); ++i) pa[i] += alpha * pb[i];
}

Tensor add(const Tensor& a, const Tensor& b) {
  Tensor out = a;
  add_inplace(out, b);
  return out;
}

Tensor sub(const Tensor& a, const Tensor& b) {
  Tensor out = a;
  axpy_inplace(out, -1.0, b);
  return out;
}

Tensor scale(const Tensor& a, double s) {
  Tensor out = a;
  for (double& v : out.vec()) v *= s;
  return out;
}

Tensor softmax_rows(const Tensor& x, std::span<const int32_t> lengths) {
  require(x.rank() == 2, "softmax_rows expects [N x k]");
  const int64_t n = x.dim(0), k = x.dim(1);
  if (!lengths.empty())
    require(static_cast<int64_t>(lengths.size()) == n,
            "softmax_rows: lengths size mismatch");
  Tensor out({n, k});
  const double* px = x.data();
  double* po = out.data();
  // Degenerate rows are detected up front so the parallel section stays
  // exception-free.
  for (int64_t i = 0; i < n; ++i) {
    int64_t len = lengths.empty() ? k : lengths[static_cast<size_t>(i)];
    if (len <= 0) {
      throw NumericError("softmax_rows: row " + std::to_string(i) +
                         " has no valid entries");
    }
    if (len > k) throw DimensionError("softmax_rows: length exceeds row width");
  }
  parallel_for_ranges(n, [&](int64_t r0, int64_t r1) {
    for (int64_t i = r0; i < r1; ++i) {
      const int64_t len = lengths.empty() ? k : lengths[static_cast<size_t>(i)];
      const double* row = px + i * k;
      double* orow = po + i * k;
      double mx = row[0];
      for (int64_t j = 1; j < len; ++j) mx = std::max(mx, row[j]);
      double sum = 0.0;
      for (int64_t j = 0; j < len; ++j) {
        orow[j] = std::exp(row[j] - mx);
        sum += orow[j];
      }
      const double inv = 1.0 / sum;
      for (int64_t j = 0; j < len; ++j) orow[j] *= inv;
      for (int64_t j = len; j < k; ++j) orow[j] = 0.0;
    }
  });
  out.check_finite("softmax_rows");
  return out;
}

std::vector<int32_t> topk(std::span<const double> values, int64_t count) {
  const int64_t n = static_cast<int64_t>(values.size());
  const int64_t take = std::clamp<int64_t>(count, 0, n);
  std::vector<int32_t> idx(static_cast<size_t>(n));
  std::iota(idx.begin(), idx.end(), 0);
  auto cmp = [&values](int32_t a, int32_t b) {
    if (values[static_cast<size_t>(a)] != values[static_cast<size_t>(b)])
      return values[static_cast<size_t>(a)] > values[static_cast<size_t>(b)];
    return a < b;
  };
  std::partial_sort(idx.begin(), idx.begin() + take, idx.end(), cmp);
  idx.resize(static_cast<size_t>(take));
  return idx;
}

Tensor conv3x3(const Tensor& x, const Tensor& w, const Tensor& b) {
  require(x.rank() == 3, "conv3x3: input must be [H x W x Cin]");
  require(w.rank() == 4 && w.dim(0) == 3 && w.dim(1) == 3,
          "conv3x3: weights must be [3 x 3 x Cin x Cout]");
  require(w.dim(2) == x.dim(2), "conv3x3: channel mismatch");
  const int64_t h = x.dim(0), wd = x.dim(1), cin = x.dim(2), cout = w.dim(3);
  const bool has_bias = b.numel() > 0;
  if (has_bias) require(b.numel() == cout, "conv3x3: bias size mismatch");
  Tensor out({h, wd, cout});
  const double* px = x.data();
  const double* pw = w.data();
  const double* pb = b.data();
  double* po = out.data();
  parallel_for_ranges(h * wd, [&](int64_t p0, int64_t p1) {
    for (int64_t p = p0; p < p1; ++p) {
      const int64_t y = p / wd, xx = p % wd;
      double* orow = po + p * cout;
      if (has_bias) {
        for (int64_t co = 0; co < cout; ++co) orow[co] = pb[co];
      }
      for (int64_t ky = 0; ky < 3; ++ky) {
        const int64_t sy = y + ky - 1;
        if (sy < 0 || sy >= h) continue;
        for (int64_t kx = 0; kx < 3; ++kx) {
          const int64_t sx = xx + kx - 1;
          if (sx < 0 || sx >= wd) continue;
          const double* xrow = px + (sy * wd + sx) * cin;
          const double* wrow = pw + (ky * 3 + kx) * cin * cout;
          for (int64_t ci = 0; ci < cin; ++ci) {
            const double xv = xrow[ci];
            const double* wv = wrow + ci * cout;
            for (int64_t co = 0; co < cout; ++co) orow[co] += xv * wv[co];
          }
        }
      }
    }
  });
  out.check_finite("conv3x3");
  return out;
}

void conv3x3_backward(const Tensor& x, const Tensor& w, const Tensor& dy,
                      Tensor& dx, Tensor& dw, Tensor& db) {
  const int64_t h = x.dim(0), wd = x.dim(1), cin = x.dim(2), cout = w.dim(3);
  require(dy.rank() == 3 && dy.dim(0) == h && dy.dim(1) == wd &&
              dy.dim(2) == cout,
          "conv3x3_backward: dy shape mismatch");
  dx = Tensor({h, wd, cin});
  dw = Tensor({3, 3, cin, cout});
  db = Tensor({cout});
  const double* px = x.data();
  const double* pw = w.data();
  const double* pdy = dy.data();

  // dx: each input pixel gathers from the output pixels that read it.
  double* pdx = dx.data();
  parallel_for_ranges(h * wd, [&](int64_t p0, int64_t p1) {
    for (int64_t p = p0; p < p1; ++p) {
      const int64_t y = p / wd, xx = p % wd;
      double* dxrow = pdx + p * cin;
      for (int64_t ky = 0; ky < 3; ++ky) {
        const int64_t oy = y - (ky - 1);
        if (oy < 0 || oy >= h) continue;
        for (int64_t kx = 0; kx < 3; ++kx) {
          const int64_t ox = xx - (kx - 1);
          if (ox < 0 || ox >= wd) continue;
          const double* dyrow = pdy + (oy * wd + ox) * cout;
          const double* wrow = pw + (ky * 3 + kx) * cin * cout;
          for (int64_t ci = 0; ci < cin; ++ci) {
            const double* wv = wrow + ci * cout;
            double acc = 0.0;
            for (int64_t co = 0; co < cout; ++co) acc += dyrow[co] * wv[co];
            dxrow[ci] += acc;
          }
        }
      }
    }
  });

  // dw / db: accumulate over pixels in fixed order; parallel over cout keeps
  // writes disjoint.
  double* pdw = dw.data();
  double* pdb = db.data();
  parallel_for_ranges(cout, [&](int64_t c0, int64_t c1) {
    for (int64_t co = c0; co < c1; ++co) {
      for (int64_t p = 0; p < h * wd; ++p) {
        const int64_t y = p / wd, xx = p % wd;
        const double dyv = pdy[p * cout + co];
        pdb[co] += dyv;
        for (int64_t ky = 0; ky < 3; ++ky) {
          const int64_t sy = y + ky - 1;
          if (sy < 0 || sy >= h) continue;
          for (int64_t kx = 0; kx < 3; ++kx) {
            const int64_t sx = xx + kx - 1;
            if (sx < 0 || sx >= wd) continue;
            const double* xrow = px + (sy * wd + sx) * cin;
            double* dwrow = pdw + (ky * 3 + kx) * cin * cout + co;
            for (int64_t ci = 0; ci < cin; ++ci)
              dwrow[ci * cout] += dyv * xrow[ci];
          }
        }
      }
    }
  });
}

Tensor depthwise_conv3x3(const Tensor& x, const Tensor& w, const Tensor& b) {
  require(x.rank() == 3, "depthwise_conv3x3: input must be [H x W x C]");
  require(w.rank() == 3 && w.dim(0) == 3 && w.dim(1) == 3 && w.dim(2) == x.dim(2),
          "depthwise_conv3x3: weights must be [3 x 3 x C]");
  const int64_t h = x.dim(0), wd = x.dim(1), c = x.dim(2);
  const bool has_bias = b.numel() > 0;
  if (has_bias) require(b.numel() == c, "depthwise_conv3x3: bias size mismatch");
  Tensor out({h, wd, c});
  const double* px = x.data();
  const double* pw = w.data();
  const double* pb = b.data();
  double* po = out.data();
  parallel_for_ranges(h * wd, [&](int64_t p0, int64_t p1) {
    for (int64_t p = p0; p < p1; ++p) {
      const int64_t y = p / wd, xx = p % wd;
      double* orow = po + p * c;
      if (has_bias)
        for (int64_t ch = 0; ch < c; ++ch) orow[ch] = pb[ch];
      for (int64_t ky = 0; ky < 3; ++ky) {
        const int64_t sy = y + ky - 1;
        if (sy < 0 || sy >= h) continue;
        for (int64_t kx = 0; kx < 3; ++kx) {
          const int64_t sx = xx + kx - 1;
          if (sx < 0 || sx >= wd) continue;
          const double* xrow = px + (sy * wd + sx) * c;
          const double* wrow = pw + (ky * 3 + kx) * c;
          for (int64_t ch = 0; ch < c; ++ch) orow[ch] += xrow[ch] * wrow[ch];
        }
      }
    }
  });
  out.check_finite("depthwise_conv3x3");
  return out;
}

void depthwise_conv3x3_backward(const Tensor& x, const Tensor& w,
                                const Tensor& dy, Tensor& dx, Tensor& dw,
                                Tensor& db) {
  const int64_t h = x.dim(0), wd = x.dim(1), c = x.dim(2);
  require(dy.rank() == 3 && dy.dim(0) == h && dy.dim(1) == wd && dy.dim(2) == c,
          "depthwise_conv3x3_backward: dy shape mismatch");
  dx = Tensor({h, wd, c});
  dw = Tensor({3, 3, c});
  db = Tensor({c});
  const double* px = x.data();
  const double* pw = w.data();
  const double* pdy = dy.data();
  double* pdx = dx.data();
  parallel_for_ranges(h * wd, [&](int64_t p0, int64_t p1) {
    for (int64_t p = p0; p < p1; ++p) {
      const int64_t y = p / wd, xx = p % wd;
      double* dxrow = pdx + p * c;
      for (int64_t ky = 0; ky < 3; ++ky) {
        const int64_t oy = y - (ky - 1);
        if (oy < 0 || oy >= h) continue;
        for (int64_t kx = 0; kx < 3; ++kx) {
          const int64_t ox = xx - (kx - 1);
          if (ox < 0 || ox >= wd) continue;
          const double* dyrow = pdy + (oy * wd + ox) * c;
          const double* wrow = pw + (ky * 3 + kx) * c;
          for (int64_t ch = 0; ch < c; ++ch) dxrow[ch] += dyrow[ch] * wrow[ch];
        }
      }
    }
  });
  double* pdw = dw.data();
  double* pdb = db.data();
  parallel_for_ranges(c, [&](int64_t c0, int64_t c1) {
    for (int64_t ch = c0; ch < c1; ++ch) {
      for (int64_t p = 0; p < h * wd; ++p) {
        const int64_t y = p / wd, xx = p % wd;
        const double dyv = pdy[p * c + ch];
        pdb[ch] += dyv;
        for (int64_t ky = 0; ky < 3; ++ky) {
          const int64_t sy = y + ky - 1;
          if (sy < 0 || sy >= h) continue;
          for (int64_t kx = 0; kx < 3; ++kx) {
            const int64_t sx = xx + kx - 1;
            if (sx < 0 || sx >= wd) continue;
            pdw[(ky * 3 + kx) * c + ch] += dyv * px[(sy * wd + sx) * c + ch];
          }
        }
      }
    }
  });
}

Tensor gelu(const Tensor& x) {
  Tensor out = x;
  double* p = out.data();
  for (int64_t i = 0; i < out.numel(); ++i) {
    const double v = p[i];
    p[i] = 0.5 * v * (1.0 + std::erf(v * kInvSqrt2));
  }
  out.check_finite("gelu");
  return out;
}

Tensor gelu_backward(const Tensor& x, const Tensor& dy) {
  require(x.same_shape(dy), "gelu_backward: shape mismatch");
  Tensor dx = x;
  double* p = dx.data();
  const double* pdy = dy.data();
  for (int64_t i = 0; i < dx.numel(); ++i) {
    const double v = p[i];
    const double cdf = 0.5 * (1.0 + std::erf(v * kInvSqrt2));
    const double pdf = kInvSqrt2Pi * std::exp(-0.5 * v * v);
    p[i] = (cdf + v * pdf) * pdy[i];
  }
  return dx;
}

namespace {
constexpr double kLnEps = 1e-12;
}

Tensor layer_norm(const Tensor& x, const Tensor& gamma, const Tensor& beta) {
  require(x.rank() == 2, "layer_norm expects [N x C]");
  const int64_t n = x.dim(0), c = x.dim(1);
  require(gamma.numel() == c && beta.numel() == c, "layer_norm: affine size");
  Tensor out({n, c});
  const double* px = x.data();
  const double* pg = gamma.data();
  const double* pbt = beta.data();
  double* po = out.data();
  parallel_for_ranges(n, [&](int64_t r0, int64_t r1) {
    for (int64_t i = r0; i < r1; ++i) {
      const double* row = px + i * c;
      double* orow = po + i * c;
      double mean = 0.0;
      for (int64_t j = 0; j < c; ++j) mean += row[j];
      mean /= static_cast<double>(c);
      double var = 0.0;
      for (int64_t j = 0; j < c; ++j) {
        const double d = row[j] - mean;
        var += d * d;
      }
      var /= static_cast<double>(c);
      const double inv = 1.0 / std::sqrt(var + kLnEps);
      for (int64_t j = 0; j < c; ++j)
        orow[j] = (row[j] - mean) * inv * pg[j] + pbt[j];
    }
  });
  out.check_finite("layer_norm");
  return out;
}

void layer_norm_backward(const Tensor& x, const Tensor& gamma,
                         const Tensor& dy, Tensor& dx, Tensor& dgamma,
                         Tensor& dbeta) {
  const int64_t n = x.dim(0), c = x.dim(1);
  require(dy.same_shape(x), "layer_norm_backward: dy shape mismatch");
  dx = Tensor({n, c});
  dgamma = Tensor({c});
  dbeta = Tensor({c});
  const double* px = x.data();
  const double* pg = gamma.data();
  const double* pdy = dy.data();
  double* pdx = dx.data();
  double* pdg = dgamma.data();
  double* pdb = dbeta.data();
  // dgamma/dbeta accumulate over rows sequentially (fixed order); dx rows in
  // parallel.
  std::vector<double> xhat(static_cast<size_t>(n * c));
  std::vector<double> invstd(static_cast<size_t>(n));
  parallel_for_ranges(n, [&](int64_t r0, int64_t r1) {
    for (int64_t i = r0; i < r1; ++i) {
      const double* row = px + i * c;
      double mean = 0.0;
      for (int64_t j = 0; j < c; ++j) mean += row[j];
      mean /= static_cast<double>(c);
      double var = 0.0;
      for (int64_t j = 0; j < c; ++j) {
        const double d = row[j] - mean;
        var += d * d;
      }
      var /= static_cast<double>(c);
      const double inv = 1.0 / std::sqrt(var + kLnEps);
      invstd[static_cast<size_t>(i)] = inv;
      for (int64_t j = 0; j < c; ++j)
        xhat[static_cast<size_t>(i * c + j)] = (row[j] - mean) * inv;
    }
  });
  for (int64_t i = 0; i < n; ++i) {
    const double* dyrow = pdy + i * c;
    const double* xh = xhat.data() + i * c;
    for (int64_t j = 0; j < c; ++j) {
      pdg[j] += dyrow[j] * xh[j];
      pdb[j] += dyrow[j];
    }
  }
  parallel_for_ranges(n, [&](int64_t r0, int64_t r1) {
    for (int64_t i = r0; i < r1; ++i) {
      const double* dyrow = pdy + i * c;
      const double* xh = xhat.data() + i * c;
      double* dxrow = pdx + i * c;
      double mean_dxhat = 0.0, mean_dxhat_xhat = 0.0;
      for (int64_t j = 0; j < c; ++j) {
        const double dxh = dyrow[j] * pg[j];
        mean_dxhat += dxh;
        mean_dxhat_xhat += dxh * xh[j];
      }
      mean_dxhat /= static_cast<double>(c);
      mean_dxhat_xhat /= static_cast<double>(c);
      const double inv = invstd[static_cast<size_t>(i)];
      for (int64_t j = 0; j < c; ++j) {
        const double dxh = dyrow[j] * pg[j];
        dxrow[j] = inv * (dxh - mean_dxhat - xh[j] * mean_dxhat_xhat);
      }
    }
  });
}

Tensor pixel_shuffle(const Tensor& x, int64_t s) {
  require(x.rank() == 3, "pixel_shuffle expects [H x W x C*s^2]");
  const int64_t h = x.dim(0), w = x.dim(1), cs2 = x.dim(2);
  require(s >= 1 && cs2 % (s * s) == 0, "pixel_shuffle: channels not divisible by s^2");
  const int64_t c = cs2 / (s * s);
  Tensor out({h * s, w * s, c});
  const double* px = x.data();
  double* po = out.data();
  for (int64_t y = 0; y < h; ++y)
    for (int64_t xx = 0; xx < w; ++xx) {
      const double* in = px + (y * w + xx) * cs2;
      for (int64_t ch = 0; ch < c; ++ch)
        for (int64_t dy = 0; dy < s; ++dy)
          for (int64_t dx = 0; dx < s; ++dx) {
            const int64_t oy = y * s + dy, ox = xx * s + dx;
            po[(oy * w * s + ox) * c + ch] = in[ch * s * s + dy * s + dx];
          }
    }
  return out;
}

Tensor pixel_unshuffle(const Tensor& x, int64_t s) {
  require(x.rank() == 3, "pixel_unshuffle expects [sH x sW x C]");
  const int64_t hs = x.dim(0), ws = x.dim(1), c = x.dim(2);
  require(s >= 1 && hs % s == 0 && ws % s == 0, "pixel_unshuffle: size not divisible");
  const int64_t h = hs / s, w = ws / s;
  Tensor out({h, w, c * s * s});
  const double* px = x.data();
  double* po = out.data();
  for (int64_t y = 0; y < h; ++y)
    for (int64_t xx = 0; xx < w; ++xx) {
      double* orow = po + (y * w + xx) * c * s * s;
      for (int64_t ch = 0; ch < c; ++ch)
        for (int64_t dy = 0; dy < s; ++dy)
          for (int64_t dx = 0; dx < s; ++dx) {
            const int64_t sy = y * s + dy, sx = xx * s + dx;
            orow[ch * s * s + dy * s + dx] = px[(sy * ws + sx) * c + ch];
          }
    }
  return out;
}

Tensor gather_rows(const Tensor& x, std::span<const int32_t> idx) {
  require(x.rank() == 2, "gather_rows expects [N x C]");
  const int64_t n = x.dim(0), c = x.dim(1);
  Tensor out({static_cast<int64_t>(idx.size()), c});
  double* po = out.data();
  const double* px = x.data();
  for (size_t i = 0; i < idx.size(); ++i) {
    const int32_t r = idx[i];
    if (r < 0 || r >= n)
      throw CandidateError("gather_rows: index " + std::to_string(r) +
                           " out of range");
    const double* src = px + static_cast<int64_t>(r) * c;
    double* dst = po + static_cast<int64_t>(i) * c;
    for (int64_t j = 0; j < c; ++j) dst[j] = src[j];
  }
  return out;
}

void scatter_add_rows(Tensor& acc, std::span<const int32_t> idx,
                      const Tensor& g) {
  require(acc.rank() == 2 && g.rank() == 2 && acc.dim(1) == g.dim(1),
          "scatter_add_rows: shape mismatch");
  require(static_cast<int64_t>(idx.size()) == g.dim(0),
          "scatter_add_rows: index count mismatch");
  const int64_t n = acc.dim(0), c = acc.dim(1);
  double* pa = acc.data();
  const double* pg = g.data();
  for (size_t i = 0; i < idx.size(); ++i) {
    const int32_t r = idx[i];
    if (r < 0 || r >= n)
      throw CandidateError("scatter_add_rows: index " + std::to_string(r) +
                           " out of range");
    double* dst = pa + static_cast<int64_t>(r) * c;
    const double* src = pg + static_cast<int64_t>(i) * c;
    for (int64_t j = 0; j < c; ++j) dst[j] += src[j];
  }
}

Grad finite_diff_grad(const std::function<double(const Tensor&)>& f,
                      const Tensor& x, double h) {
  Grad g(x.shape());
  Tensor probe = x;
  double* pp = probe.data();
  double* pg = g.data();
  for (int64_t i = 0; i < x.numel(); ++i) {
    const double orig = pp[i];
    pp[i] = orig + h;
    const double fp = f(probe);
    pp[i] = orig - h;
    const double fm = f(probe);
    pp[i] = orig;
    if (!std::isfinite(fp) || !std::isfinite(fm))
      throw NumericError("finite_diff_grad: non-finite function value");
    pg[i] = (fp - fm) / (2.0 * h);
  }
  return g;
}

}  // namespace iet::ops
