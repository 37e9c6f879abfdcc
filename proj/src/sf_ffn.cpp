#include "iet/sf_ffn.hpp"

#include <cmath>

#include "iet/ops.hpp"
#include "iet/parallel.hpp"

namespace iet::ffn {

namespace {

void require(bool cond, const char* msg) {
  if (!cond) throw DimensionError(msg);
}

}  // namespace

void SfFfnParams::validate() const {
  if (heads < 1 || ratio < 1) throw ConfigError("sf_ffn: heads/ratio must be >= 1");
  if (headwise_in.rank() != 3 || headwise_out.rank() != 3)
    throw ConfigError("sf_ffn: head-wise mats must be rank 3");
  const int64_t d = headwise_out.dim(2);
  const int64_t rd = static_cast<int64_t>(ratio) * d;
  if (headwise_in.dim(0) != heads || headwise_in.dim(1) != 2 * d ||
      headwise_in.dim(2) != rd)
    throw ConfigError("sf_ffn: headwise_in must be [h x 2d x rd]");
  if (headwise_out.dim(0) != heads || headwise_out.dim(1) != rd)
    throw ConfigError("sf_ffn: headwise_out must be [h x rd x d]");
  const int64_t c = heads * d;
  if (dw.rank() != 3 || dw.dim(0) != 3 || dw.dim(1) != 3 || dw.dim(2) != c)
    throw ConfigError("sf_ffn: dw must be [3 x 3 x C]");
}

Tensor sf_ffn_core(const Tensor& x_in, std::span<const int32_t> i_highest,
                   const SfFfnParams& params, graph::GridGeom geom,
                   FfnSave* save, FlopCount* flops) {
  params.validate();
  require(x_in.rank() == 2, "sf_ffn expects [N x C]");
  const int64_t n = x_in.dim(0), c = x_in.dim(1);
  require(c == params.channels(), "sf_ffn: channel mismatch");
  require(static_cast<int64_t>(i_highest.size()) == n,
          "sf_ffn: neighbor vector size mismatch");
  if (geom.tokens() != n) throw DimensionError("sf_ffn: grid geometry mismatch");
  const int32_t h = params.heads;
  const int64_t d = c / h;
  const int64_t rd = static_cast<int64_t>(params.ratio) * d;

  Tensor x_sim = ops::gather_rows(x_in, i_highest);

  Tensor t1({h, n, rd});
  Tensor g({h, n, rd});
  Tensor z({n, c});
  const double* pxin = x_in.data();
  const double* pxs = x_sim.data();
  const double* pwi = params.headwise_in.data();
  const double* pwo = params.headwise_out.data();
  double* pt1 = t1.data();
  double* pg = g.data();
  double* pz = z.data();
  constexpr double kInvSqrt2 = 0.7071067811865475244;

  parallel_for_ranges(static_cast<int64_t>(h) * n, [&](int64_t r0, int64_t r1) {
    for (int64_t hi = r0; hi < r1; ++hi) {
      const int64_t hh = hi / n, i = hi % n;
      const double* xin_h = pxin + i * c + hh * d;
      const double* xs_h = pxs + i * c + hh * d;
      const double* win = pwi + hh * 2 * d * rd;
      double* t1row = pt1 + hi * rd;
      // cat = [x_in_head ; x_sim_head]; t1 = cat * W_in
      for (int64_t u = 0; u < d; ++u) {
        const double xv = xin_h[u];
        const double* wrow = win + u * rd;
        for (int64_t j = 0; j < rd; ++j) t1row[j] += xv * wrow[j];
      }
      for (int64_t u = 0; u < d; ++u) {
        const double xv = xs_h[u];
        const double* wrow = win + (d + u) * rd;
        for (int64_t j = 0; j < rd; ++j) t1row[j] += xv * wrow[j];
      }
      double* grow = pg + hi * rd;
      for (int64_t j = 0; j < rd; ++j) {
        const double v = t1row[j];
        grow[j] = 0.5 * v * (1.0 + std::erf(v * kInvSqrt2));
      }
      const double* wout = pwo + hh * rd * d;
      double* zrow = pz + i * c + hh * d;
      for (int64_t j = 0; j < rd; ++j) {
        const double gv = grow[j];
        const double* wrow = wout + j * d;
        for (int64_t u = 0; u < d; ++u) zrow[u] += gv * wrow[u];
      }
    }
  });
  z.check_finite("sf_ffn_core");

  Tensor out =
      ops::depthwise_conv3x3(z.reshaped({geom.height, geom.width, c}),
                             params.dw, Tensor{})
          .reshaped({n, c});

  if (flops) flops->ffn += sf_ffn_flops(n, c, h, params.ratio);
  if (save) {
    save->x_in = x_in;
    save->x_sim = std::move(x_sim);
    save->t1 = std::move(t1);
    save->g = std::move(g);
    save->z = std::move(z);
    save->gather.assign(i_highest.begin(), i_highest.end());
    save->valid = true;
  }
  return out;
}

Tensor sf_ffn_forward(const Tensor& x_in, std::span<const int32_t> i_highest,
                      const SfFfnParams& params, graph::GridGeom geom,
                      FfnSave* save, FlopCount* flops) {
  Tensor out = sf_ffn_core(x_in, i_highest, params, geom, save, flops);
  ops::add_inplace(out, x_in);
  return out;
}

FfnGrads sf_ffn_core_backward(const Tensor& dy, const SfFfnParams& params,
                              const FfnSave& save, graph::GridGeom geom) {
  if (!save.valid) throw UsageError("sf_ffn backward: missing saved state");
  const int64_t n = save.x_in.dim(0), c = save.x_in.dim(1);
  require(dy.rank() == 2 && dy.dim(0) == n && dy.dim(1) == c,
          "sf_ffn backward: dy shape mismatch");
  const int32_t h = params.heads;
  const int64_t d = c / h;
  const int64_t rd = static_cast<int64_t>(params.ratio) * d;

  FfnGrads grads;
  Tensor dz, ddw, db_unused;
  ops::depthwise_conv3x3_backward(
      save.z.reshaped({geom.height, geom.width, c}), params.dw,
      dy.reshaped({geom.height, geom.width, c}), dz, ddw, db_unused);
  grads.ddw = ddw;
  Tensor dz_tok = dz.reshaped({n, c});

  grads.dx = Tensor({n, c});
  grads.dheadwise_in = Tensor({h, 2 * d, rd});
  grads.dheadwise_out = Tensor({h, rd, d});

  const double* pdz = dz_tok.data();
  const double* pg = save.g.data();
  const double* pt1 = save.t1.data();
  const double* pwo = params.headwise_out.data();
  const double* pwi = params.headwise_in.data();
  const double* pxin = save.x_in.data();
  const double* pxs = save.x_sim.data();
  double* pdx = grads.dx.data();
  double* pdwi = grads.dheadwise_in.data();
  double* pdwo = grads.dheadwise_out.data();
  const int32_t* gat = save.gather.data();
  constexpr double kInvSqrt2 = 0.7071067811865475244;
  constexpr double kInvSqrt2Pi = 0.3989422804014326779;

  // Heads own disjoint channel blocks and weight slabs; rows run
  // sequentially within a head so every accumulation order is fixed.
  parallel_for(h, [&](int64_t hh) {
    std::vector<double> dg(static_cast<size_t>(rd));
    std::vector<double> dt1(static_cast<size_t>(rd));
    const double* win = pwi + hh * 2 * d * rd;
    const double* wout = pwo + hh * rd * d;
    double* dwin = pdwi + hh * 2 * d * rd;
    double* dwout = pdwo + hh * rd * d;
    for (int64_t i = 0; i < n; ++i) {
      const double* dzrow = pdz + i * c + hh * d;
      const double* grow = pg + (hh * n + i) * rd;
      const double* t1row = pt1 + (hh * n + i) * rd;
      // z = g * W_out
      for (int64_t j = 0; j < rd; ++j) {
        const double* wrow = wout + j * d;
        double* dwrow = dwout + j * d;
        const double gv = grow[j];
        double acc = 0.0;
        for (int64_t u = 0; u < d; ++u) {
          acc += dzrow[u] * wrow[u];
          dwrow[u] += gv * dzrow[u];
        }
        dg[static_cast<size_t>(j)] = acc;
      }
      // gelu
      for (int64_t j = 0; j < rd; ++j) {
        const double v = t1row[j];
        const double cdf = 0.5 * (1.0 + std::erf(v * kInvSqrt2));
        const double pdf = kInvSqrt2Pi * std::exp(-0.5 * v * v);
        dt1[static_cast<size_t>(j)] = (cdf + v * pdf) * dg[static_cast<size_t>(j)];
      }
      // t1 = [x_in ; x_sim] * W_in
      const double* xin_h = pxin + i * c + hh * d;
      const double* xs_h = pxs + i * c + hh * d;
      double* dx_h = pdx + i * c + hh * d;
      double* dxsim_h = pdx + static_cast<int64_t>(gat[i]) * c + hh * d;
      for (int64_t u = 0; u < d; ++u) {
        const double* wrow = win + u * rd;
        double* dwrow = dwin + u * rd;
        const double xv = xin_h[u];
        double acc = 0.0;
        for (int64_t j = 0; j < rd; ++j) {
          acc += dt1[static_cast<size_t>(j)] * wrow[j];
          dwrow[j] += xv * dt1[static_cast<size_t>(j)];
        }
        dx_h[u] += acc;
      }
      for (int64_t u = 0; u < d; ++u) {
        const double* wrow = win + (d + u) * rd;
        double* dwrow = dwin + (d + u) * rd;
        const double xv = xs_h[u];
        double acc = 0.0;
        for (int64_t j = 0; j < rd; ++j) {
          acc += dt1[static_cast<size_t>(j)] * wrow[j];
          dwrow[j] += xv * dt1[static_cast<size_t>(j)];
        }
        dxsim_h[u] += acc;  // scatter into the gathered source token
      }
    }
  });
  return grads;
}

int64_t plain_ffn_flops(int64_t n, int64_t channels, int32_t ratio) {
  const int64_t hidden = channels * ratio;
  return 2 * n * channels * hidden + n * hidden + 2 * n * hidden * channels;
}

int64_t sf_ffn_flops(int64_t n, int64_t channels, int32_t heads, int32_t ratio) {
  const int64_t d = channels / heads;
  const int64_t rd = static_cast<int64_t>(ratio) * d;
  const int64_t mats = 2 * n * heads * (2 * d * rd + rd * d);
  const int64_t act = n * heads * rd;
  const int64_t conv = 2 * 9 * n * channels;
  return mats + act + conv;
}

}  // namespace iet::ffn
