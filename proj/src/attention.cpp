#include "iet/attention.hpp"

#include <algorithm>
#include <cmath>

#include "iet/ops.hpp"
#include "iet/parallel.hpp"

namespace iet::attn {

namespace {

constexpr double kMaskValue = -1e30;

void require(bool cond, const char* msg) {
  if (!cond) throw DimensionError(msg);
}

}  // namespace

void AttnParams::validate() const {
  const int64_t c = w_q.dim(0);
  for (const Tensor* t : {&w_q, &w_k, &w_v, &w_o}) {
    if (t->rank() != 2 || t->dim(0) != c || t->dim(1) != c)
      throw ConfigError("attention projections must be square [C x C]");
  }
  if (heads < 1 || c % heads != 0)
    throw ConfigError("channels must divide evenly into heads");
  if (has_rel_bias()) {
    if (window < 1) throw ConfigError("rel bias requires a window size");
    const int64_t slots = (2 * window - 1) * (2 * window - 1) + 1;
    if (rel_bias.rank() != 2 || rel_bias.dim(0) != heads ||
        rel_bias.dim(1) != slots)
      throw ConfigError("rel bias table must be [heads x (2w-1)^2+1]");
  }
  if (has_lepe()) {
    if (lepe_w.rank() != 3 || lepe_w.dim(0) != 3 || lepe_w.dim(1) != 3 ||
        lepe_w.dim(2) != c)
      throw ConfigError("LePE weights must be [3 x 3 x C]");
  }
}

int32_t rel_bias_slot(int32_t dr, int32_t dc, int32_t window) {
  const int32_t lim = window - 1;
  if (dr < -lim || dr > lim || dc < -lim || dc > lim)
    return (2 * window - 1) * (2 * window - 1);  // shared far slot
  return (dr + lim) * (2 * window - 1) + (dc + lim);
}

Tensor split_heads(const Tensor& x, int32_t heads) {
  require(x.rank() == 2, "split_heads expects [N x C]");
  const int64_t n = x.dim(0), c = x.dim(1);
  require(c % heads == 0, "channels not divisible by heads");
  const int64_t d = c / heads;
  Tensor out({heads, n, d});
  const double* px = x.data();
  double* po = out.data();
  for (int64_t h = 0; h < heads; ++h)
    for (int64_t i = 0; i < n; ++i)
      for (int64_t j = 0; j < d; ++j)
        po[(h * n + i) * d + j] = px[i * c + h * d + j];
  return out;
}

Tensor merge_heads(const Tensor& x) {
  require(x.rank() == 3, "merge_heads expects [h x N x d]");
  const int64_t h = x.dim(0), n = x.dim(1), d = x.dim(2);
  Tensor out({n, h * d});
  const double* px = x.data();
  double* po = out.data();
  for (int64_t hh = 0; hh < h; ++hh)
    for (int64_t i = 0; i < n; ++i)
      for (int64_t j = 0; j < d; ++j)
        po[i * h * d + hh * d + j] = px[(hh * n + i) * d + j];
  return out;
}

Tensor smm_qk(const Tensor& q, const Tensor& k, const graph::CandidateSet& I,
              FlopCount* flops) {
  require(q.rank() == 3 && k.rank() == 3, "smm_qk expects [h x N x d]");
  require(q.same_shape(k), "smm_qk: Q/K shape mismatch");
  const int64_t h = q.dim(0), n = q.dim(1), d = q.dim(2);
  require(I.tokens() == n, "smm_qk: candidate set token count mismatch");
  const int32_t k_max = I.k_max();
  Tensor out({h, n, k_max});
  const double inv_sqrt_d = 1.0 / std::sqrt(static_cast<double>(d));
  const double* pq = q.data();
  const double* pk = k.data();
  double* po = out.data();
  int64_t valid = 0;
  for (int64_t i = 0; i < n; ++i) valid += I.length(static_cast<int32_t>(i));
  parallel_for_ranges(h * n, [&](int64_t r0, int64_t r1) {
    for (int64_t hi = r0; hi < r1; ++hi) {
      const int64_t hh = hi / n, i = hi % n;
      const int32_t len = I.length(static_cast<int32_t>(i));
      auto row = I.row(static_cast<int32_t>(i));
      const double* qrow = pq + (hh * n + i) * d;
      double* orow = po + hi * k_max;
      for (int32_t j = 0; j < len; ++j) {
        const int32_t cand = row[static_cast<size_t>(j)];
        if (cand < 0 || cand >= n)
          throw CandidateError("smm_qk: corrupt candidate index");
        const double* krow = pk + (hh * n + cand) * d;
        double acc = 0.0;
        for (int64_t t = 0; t < d; ++t) acc += qrow[t] * krow[t];
        orow[j] = acc * inv_sqrt_d;
      }
      for (int32_t j = len; j < k_max; ++j) orow[j] = kMaskValue;
    }
  });
  if (flops) flops->qk += 2 * h * valid * d;
  return out;
}

Tensor smm_av(const Tensor& a, const Tensor& v, const graph::CandidateSet& I,
              FlopCount* flops) {
  require(a.rank() == 3 && v.rank() == 3, "smm_av expects [h x N x k], [h x N x d]");
  const int64_t h = a.dim(0), n = a.dim(1), k_max = a.dim(2);
  require(v.dim(0) == h && v.dim(1) == n, "smm_av: V shape mismatch");
  require(I.tokens() == n && I.k_max() == k_max, "smm_av: candidates mismatch");
  const int64_t d = v.dim(2);
  Tensor out({h, n, d});
  const double* pa = a.data();
  const double* pv = v.data();
  double* po = out.data();
  int64_t valid = 0;
  for (int64_t i = 0; i < n; ++i) valid += I.length(static_cast<int32_t>(i));
  parallel_for_ranges(h * n, [&](int64_t r0, int64_t r1) {
    for (int64_t hi = r0; hi < r1; ++hi) {
      const int64_t hh = hi / n, i = hi % n;
      const int32_t len = I.length(static_cast<int32_t>(i));
      auto row = I.row(static_cast<int32_t>(i));
      const double* arow = pa + hi * k_max;
      double* orow = po + hi * d;
      for (int32_t j = 0; j < len; ++j) {
        const int32_t cand = row[static_cast<size_t>(j)];
        if (cand < 0 || cand >= n)
          throw CandidateError("smm_av: corrupt candidate index");
        const double w = arow[j];
        const double* vrow = pv + (hh * n + cand) * d;
        for (int64_t t = 0; t < d; ++t) orow[t] += w * vrow[t];
      }
    }
  });
  if (flops) flops->av += 2 * h * valid * d;
  return out;
}

LayerForward iea_layer_forward(const Tensor& x, const AttnParams& params,
                               const graph::CandidateSet& i_in,
                               const LayerPlan& plan, graph::GridGeom geom,
                               FlopCount* flops) {
  params.validate();
  require(x.rank() == 2, "iea_layer_forward expects [N x C]");
  const int64_t n = x.dim(0), c = x.dim(1);
  require(c == params.channels(), "iea_layer_forward: channel mismatch");
  require(i_in.tokens() == n, "iea_layer_forward: candidate token mismatch");
  if (geom.tokens() != n)
    throw DimensionError("iea_layer_forward: grid geometry mismatch");
  const int32_t h = params.heads;
  const int32_t k_in = i_in.k_max();

  LayerForward out;
  LayerSave& save = out.save;
  save.x = x;
  save.i_in = i_in;

  Tensor q_tok = ops::matmul(x, params.w_q);
  Tensor k_tok = ops::matmul(x, params.w_k);
  Tensor v_tok = ops::matmul(x, params.w_v);
  if (flops) flops->proj += 3 * 2 * n * c * c;
  save.q = split_heads(q_tok, h);
  save.k = split_heads(k_tok, h);
  save.v = split_heads(v_tok, h);

  Tensor logits = smm_qk(save.q, save.k, i_in, flops);

  int64_t valid = 0;
  for (int64_t i = 0; i < n; ++i) valid += i_in.length(static_cast<int32_t>(i));

  if (params.has_rel_bias()) {
    double* pl = logits.data();
    const double* pb = params.rel_bias.data();
    const int64_t slots = params.rel_bias.dim(1);
    parallel_for_ranges(static_cast<int64_t>(h) * n, [&](int64_t r0, int64_t r1) {
      for (int64_t hi = r0; hi < r1; ++hi) {
        const int64_t hh = hi / n, i = hi % n;
        const int32_t ri = geom.row_of(static_cast<int32_t>(i));
        const int32_t ci = geom.col_of(static_cast<int32_t>(i));
        auto row = i_in.row(static_cast<int32_t>(i));
        double* lrow = pl + hi * k_in;
        for (size_t j = 0; j < row.size(); ++j) {
          const int32_t cand = row[j];
          const int32_t slot = rel_bias_slot(geom.row_of(cand) - ri,
                                             geom.col_of(cand) - ci,
                                             params.window);
          lrow[j] += pb[hh * slots + slot];
        }
      }
    });
    if (flops) flops->bias += static_cast<int64_t>(h) * valid;
  }

  // Masked softmax over each (head, token) row; padded entries exactly 0.
  save.a_cal = Tensor({h, n, k_in});
  {
    const double* pl = logits.data();
    double* pa = save.a_cal.data();
    parallel_for_ranges(static_cast<int64_t>(h) * n, [&](int64_t r0, int64_t r1) {
      for (int64_t hi = r0; hi < r1; ++hi) {
        const int64_t i = hi % n;
        const int32_t len = i_in.length(static_cast<int32_t>(i));
        const double* lrow = pl + hi * k_in;
        double* arow = pa + hi * k_in;
        double mx = lrow[0];
        for (int32_t j = 1; j < len; ++j) mx = std::max(mx, lrow[j]);
        double sum = 0.0;
        for (int32_t j = 0; j < len; ++j) {
          arow[j] = std::exp(lrow[j] - mx);
          sum += arow[j];
        }
        const double inv = 1.0 / sum;
        for (int32_t j = 0; j < len; ++j) arow[j] *= inv;
        for (int32_t j = len; j < k_in; ++j) arow[j] = 0.0;
      }
    });
    if (flops) flops->softmax += 4 * static_cast<int64_t>(h) * valid;
  }

  // Head-averaged selection scores drive all discrete choices.
  save.sel = Tensor({n, k_in});
  {
    const double* pa = save.a_cal.data();
    double* psel = save.sel.data();
    const double inv_h = 1.0 / static_cast<double>(h);
    parallel_for_ranges(n, [&](int64_t r0, int64_t r1) {
      for (int64_t i = r0; i < r1; ++i) {
        double* srow = psel + i * k_in;
        for (int64_t hh = 0; hh < h; ++hh) {
          const double* arow = pa + (hh * n + i) * k_in;
          for (int32_t j = 0; j < k_in; ++j) srow[j] += arow[j];
        }
        for (int32_t j = 0; j < k_in; ++j) srow[j] *= inv_h;
      }
    });
    if (flops) flops->other += static_cast<int64_t>(h) * valid;
  }

  std::vector<int32_t> budget(static_cast<size_t>(n));
  for (int64_t i = 0; i < n; ++i) {
    const int32_t len = i_in.length(static_cast<int32_t>(i));
    budget[static_cast<size_t>(i)] =
        plan.sparsify_enabled
            ? std::max(plan.k_min,
                       static_cast<int32_t>(std::ceil(plan.keep_fraction *
                                                      static_cast<double>(len))))
            : len;
  }
  graph::SparsifyResult sp = graph::sparsify(save.sel, i_in, budget);
  const int32_t k_s = sp.width;
  save.i_s = sp.kept;
  save.source_pos = sp.source_pos;
  out.a_s = sp.scores;
  out.i_s = sp.kept;

  // Gather surviving per-head attention values and renormalize each row to
  // sum 1 before aggregation.
  save.a_norm = Tensor({h, n, k_s});
  save.row_sum = Tensor({h, n});
  int64_t valid_s = 0;
  for (int64_t i = 0; i < n; ++i)
    valid_s += save.i_s.length(static_cast<int32_t>(i));
  {
    const double* pa = save.a_cal.data();
    double* pn = save.a_norm.data();
    double* prs = save.row_sum.data();
    const int32_t* pos = save.source_pos.data();
    parallel_for_ranges(static_cast<int64_t>(h) * n, [&](int64_t r0, int64_t r1) {
      for (int64_t hi = r0; hi < r1; ++hi) {
        const int64_t hh = hi / n, i = hi % n;
        const int32_t len = save.i_s.length(static_cast<int32_t>(i));
        const double* arow = pa + hi * k_in;
        double* nrow = pn + hi * k_s;
        double sum = 0.0;
        for (int32_t t = 0; t < len; ++t) {
          nrow[t] = arow[pos[i * k_s + t]];
          sum += nrow[t];
        }
        if (sum <= 0.0)
          throw NumericError("iea_layer_forward: surviving attention row " +
                             std::to_string(i) + " sums to zero");
        prs[hh * n + i] = sum;
        const double inv = 1.0 / sum;
        for (int32_t t = 0; t < len; ++t) nrow[t] *= inv;
        for (int32_t t = len; t < k_s; ++t) nrow[t] = 0.0;
      }
    });
    if (flops) flops->softmax += 2 * static_cast<int64_t>(h) * valid_s;
  }

  Tensor o_heads = smm_av(save.a_norm, save.v, save.i_s, flops);
  save.o_pre = merge_heads(o_heads);

  if (params.has_lepe()) {
    save.lepe_in = merge_heads(save.v);
    Tensor grid = save.lepe_in.reshaped({geom.height, geom.width, c});
    Tensor lepe = ops::depthwise_conv3x3(grid, params.lepe_w, Tensor{});
    ops::add_inplace(save.o_pre, lepe.reshaped({n, c}));
    if (flops) flops->bias += (2 * 9 + 1) * n * c;
  }

  out.y = ops::matmul(save.o_pre, params.w_o);
  if (flops) flops->proj += 2 * n * c * c;
  out.y.check_finite("iea_layer_forward");

  out.i_next = plan.expand
                   ? graph::expand(out.a_s, out.i_s, plan.k1, plan.k2,
                                   plan.k_out_max)
                   : out.i_s;
  out.i_highest = graph::highest_neighbor(out.a_s, out.i_s);
  save.valid = true;
  return out;
}

LayerGrads iea_layer_backward(const Tensor& dy, const AttnParams& params,
                              const LayerSave& save, graph::GridGeom geom) {
  if (!save.valid)
    throw UsageError("iea_layer_backward: missing saved forward state");
  const int64_t n = save.x.dim(0), c = save.x.dim(1);
  require(dy.rank() == 2 && dy.dim(0) == n && dy.dim(1) == c,
          "iea_layer_backward: dy shape mismatch");
  const int32_t h = params.heads;
  const int64_t d = params.head_dim();
  const int32_t k_in = save.i_in.k_max();
  const int32_t k_s = static_cast<int32_t>(save.a_norm.dim(2));

  LayerGrads g;
  g.dw_o = ops::matmul_tn(save.o_pre, dy);
  Tensor d_opre = ops::matmul_nt(dy, params.w_o);

  Tensor dv_tok({n, c});
  if (params.has_lepe()) {
    Tensor grid_in = save.lepe_in.reshaped({geom.height, geom.width, c});
    Tensor dy_grid = d_opre.reshaped({geom.height, geom.width, c});
    Tensor dx_lepe, dlepe, db_unused;
    ops::depthwise_conv3x3_backward(grid_in, params.lepe_w, dy_grid, dx_lepe,
                                    dlepe, db_unused);
    g.dlepe_w = dlepe;
    ops::add_inplace(dv_tok, dx_lepe.reshaped({n, c}));
  }

  Tensor d_oh = split_heads(d_opre, h);

  Tensor dvh({h, n, d});
  Tensor dqh({h, n, d});
  Tensor dkh({h, n, d});
  Tensor d_logits({h, n, k_in});

  const double inv_sqrt_d = 1.0 / std::sqrt(static_cast<double>(d));
  const double* pv = save.v.data();
  const double* pq = save.q.data();
  const double* pk = save.k.data();
  const double* pan = save.a_norm.data();
  const double* prs = save.row_sum.data();
  const double* pac = save.a_cal.data();
  const double* pdo = d_oh.data();
  const int32_t* pos = save.source_pos.data();
  double* pdv = dvh.data();
  double* pdq = dqh.data();
  double* pdk = dkh.data();
  double* pdl = d_logits.data();

  // Heads are independent scatter targets; rows stay sequential inside a
  // head so accumulation order is fixed for every thread count.
  parallel_for(h, [&](int64_t hh) {
    std::vector<double> da_norm(static_cast<size_t>(k_s));
    std::vector<double> da_cal(static_cast<size_t>(k_in));
    for (int64_t i = 0; i < n; ++i) {
      const int32_t len_s = save.i_s.length(static_cast<int32_t>(i));
      const int32_t len_in = save.i_in.length(static_cast<int32_t>(i));
      auto row_s = save.i_s.row(static_cast<int32_t>(i));
      auto row_in = save.i_in.row(static_cast<int32_t>(i));
      const double* dorow = pdo + (hh * n + i) * d;
      const double* nrow = pan + (hh * n + i) * k_s;

      // smm_av adjoint
      double dot_sum = 0.0;
      for (int32_t t = 0; t < len_s; ++t) {
        const int32_t cand = row_s[static_cast<size_t>(t)];
        const double* vrow = pv + (hh * n + cand) * d;
        double* dvrow = pdv + (hh * n + cand) * d;
        double acc = 0.0;
        const double w = nrow[t];
        for (int64_t u = 0; u < d; ++u) {
          acc += dorow[u] * vrow[u];
          dvrow[u] += w * dorow[u];
        }
        da_norm[static_cast<size_t>(t)] = acc;
        dot_sum += acc * nrow[t];
      }
      // renormalization adjoint: a_norm = a_sel / sum
      const double inv_sum = 1.0 / prs[hh * n + i];
      std::fill(da_cal.begin(), da_cal.end(), 0.0);
      for (int32_t t = 0; t < len_s; ++t) {
        da_cal[static_cast<size_t>(pos[i * k_s + t])] =
            (da_norm[static_cast<size_t>(t)] - dot_sum) * inv_sum;
      }
      // softmax adjoint over the full incoming row
      const double* acrow = pac + (hh * n + i) * k_in;
      double inner = 0.0;
      for (int32_t j = 0; j < len_in; ++j)
        inner += da_cal[static_cast<size_t>(j)] * acrow[j];
      double* dlrow = pdl + (hh * n + i) * k_in;
      for (int32_t j = 0; j < len_in; ++j)
        dlrow[j] = acrow[j] * (da_cal[static_cast<size_t>(j)] - inner);

      // smm_qk adjoint
      const double* qrow = pq + (hh * n + i) * d;
      double* dqrow = pdq + (hh * n + i) * d;
      for (int32_t j = 0; j < len_in; ++j) {
        const double dl = dlrow[j] * inv_sqrt_d;
        if (dl == 0.0) continue;
        const int32_t cand = row_in[static_cast<size_t>(j)];
        const double* krow = pk + (hh * n + cand) * d;
        double* dkrow = pdk + (hh * n + cand) * d;
        for (int64_t u = 0; u < d; ++u) {
          dqrow[u] += dl * krow[u];
          dkrow[u] += dl * qrow[u];
        }
      }
    }
  });

  if (params.has_rel_bias()) {
    const int64_t slots = params.rel_bias.dim(1);
    g.drel_bias = Tensor({h, slots});
    double* pdb = g.drel_bias.data();
    parallel_for(h, [&](int64_t hh) {
      for (int64_t i = 0; i < n; ++i) {
        const int32_t ri = geom.row_of(static_cast<int32_t>(i));
        const int32_t ci = geom.col_of(static_cast<int32_t>(i));
        auto row = save.i_in.row(static_cast<int32_t>(i));
        const double* dlrow = pdl + (hh * n + i) * k_in;
        for (size_t j = 0; j < row.size(); ++j) {
          const int32_t slot = rel_bias_slot(geom.row_of(row[j]) - ri,
                                             geom.col_of(row[j]) - ci,
                                             params.window);
          pdb[hh * slots + slot] += dlrow[j];
        }
      }
    });
  }

  Tensor dq_tok = merge_heads(dqh);
  Tensor dk_tok = merge_heads(dkh);
  ops::add_inplace(dv_tok, merge_heads(dvh));

  g.dw_q = ops::matmul_tn(save.x, dq_tok);
  g.dw_k = ops::matmul_tn(save.x, dk_tok);
  g.dw_v = ops::matmul_tn(save.x, dv_tok);
  g.dx = ops::matmul_nt(dq_tok, params.w_q);
  ops::add_inplace(g.dx, ops::matmul_nt(dk_tok, params.w_k));
  ops::add_inplace(g.dx, ops::matmul_nt(dv_tok, params.w_v));
  return g;
}

}  // namespace iet::attn
