#include <doctest.h>

#include <cmath>
#include <set>

#include "iet/attention.hpp"
#include "iet/ops.hpp"
#include "iet/reference.hpp"
#include "iet/rng.hpp"
#include "test_util.hpp"

using namespace iet;
using graph::CandidateSet;
using graph::GridGeom;

namespace {

attn::AttnParams random_params(Rng& rng, int64_t c, int32_t heads) {
  attn::AttnParams p;
  p.heads = heads;
  p.w_q = tut::random_tensor(rng, {c, c}, 0.4);
  p.w_k = tut::random_tensor(rng, {c, c}, 0.4);
  p.w_v = tut::random_tensor(rng, {c, c}, 0.4);
  p.w_o = tut::random_tensor(rng, {c, c}, 0.4);
  return p;
}

}  // namespace

TEST_CASE("smm_qk over the full index set equals dense QK^T/sqrt(d)") {
  Rng rng(100);
  const int32_t n = 10, heads = 2;
  const int64_t d = 3;
  Tensor q = tut::random_tensor(rng, {heads, n, d});
  Tensor k = tut::random_tensor(rng, {heads, n, d});
  CandidateSet full = tut::full_candidates(n);
  Tensor got = attn::smm_qk(q, k, full);
  const double inv = 1.0 / std::sqrt(static_cast<double>(d));
  for (int32_t hh = 0; hh < heads; ++hh)
    for (int32_t i = 0; i < n; ++i)
      for (int32_t j = 0; j < n; ++j) {
        double acc = 0.0;
        for (int64_t t = 0; t < d; ++t)
          acc += q.at3(hh, i, t) * k.at3(hh, j, t);
        CHECK(std::abs(got.at3(hh, i, j) - acc * inv) < 1e-12);
      }
}

TEST_CASE("smm_qk masks the sentinel tail; gather-dot oracle on random rows") {
  Rng rng(101);
  const int32_t n = 32, heads = 2;
  const int64_t d = 4;
  CandidateSet cands = tut::random_candidates(rng, n, 9);
  Tensor q = tut::random_tensor(rng, {heads, n, d});
  Tensor k = tut::random_tensor(rng, {heads, n, d});
  Tensor got = attn::smm_qk(q, k, cands);
  const double inv = 1.0 / std::sqrt(static_cast<double>(d));
  for (int32_t hh = 0; hh < heads; ++hh)
    for (int32_t i = 0; i < n; ++i) {
      auto row = cands.row(i);
      for (size_t j = 0; j < row.size(); ++j) {
        double acc = 0.0;
        for (int64_t t = 0; t < d; ++t)
          acc += q.at3(hh, i, t) * k.at3(hh, row[j], t);
        CHECK(std::abs(got.at3(hh, i, static_cast<int64_t>(j)) - acc * inv) <
              1e-12);
      }
      for (int64_t j = cands.length(i); j < cands.k_max(); ++j)
        CHECK(got.at3(hh, i, j) == -1e30);
    }
}

TEST_CASE("smm_av: one-hot attention on self returns V rows") {
  Rng rng(102);
  const int32_t n = 8, heads = 2;
  const int64_t d = 3;
  // rows start with self so a one-hot on position 0 selects V[i]
  std::vector<std::vector<int32_t>> rows(static_cast<size_t>(n));
  for (int32_t i = 0; i < n; ++i) rows[static_cast<size_t>(i)] = {i, (i + 1) % n};
  CandidateSet cands = CandidateSet::from_rows(n, rows);
  Tensor a({heads, n, cands.k_max()});
  for (int32_t hh = 0; hh < heads; ++hh)
    for (int32_t i = 0; i < n; ++i) a.at3(hh, i, 0) = 1.0;
  Tensor v = tut::random_tensor(rng, {heads, n, d});
  Tensor out = attn::smm_av(a, v, cands);
  CHECK(tut::max_abs_diff(out, v) == 0.0);
}

TEST_CASE("smm_av matches the loop oracle on random instances") {
  Rng rng(103);
  const int32_t n = 24, heads = 2;
  const int64_t d = 5;
  CandidateSet cands = tut::random_candidates(rng, n, 7);
  Tensor a({heads, n, cands.k_max()});
  for (int32_t hh = 0; hh < heads; ++hh)
    for (int32_t i = 0; i < n; ++i)
      for (int32_t j = 0; j < cands.length(i); ++j)
        a.at3(hh, i, j) = rng.uniform();
  Tensor v = tut::random_tensor(rng, {heads, n, d});
  Tensor out = attn::smm_av(a, v, cands);
  for (int32_t hh = 0; hh < heads; ++hh)
    for (int32_t i = 0; i < n; ++i)
      for (int64_t t = 0; t < d; ++t) {
        double acc = 0.0;
        auto row = cands.row(i);
        for (size_t j = 0; j < row.size(); ++j)
          acc += a.at3(hh, i, static_cast<int64_t>(j)) * v.at3(hh, row[j], t);
        CHECK(std::abs(out.at3(hh, i, t) - acc) < 1e-12);
      }
}

TEST_CASE("full-coverage layer equals reference dense attention") {
  for (uint64_t seed : {1ull, 2ull, 3ull}) {
    for (int32_t heads : {1, 2, 4}) {
      Rng rng(seed * 997 + heads);
      const int32_t side = 4;
      const int32_t n = side * side;
      const int64_t c = 8;
      attn::AttnParams p = random_params(rng, c, heads);
      Tensor x = tut::random_tensor(rng, {n, c});
      attn::LayerPlan plan;
      plan.sparsify_enabled = false;
      auto lf = attn::iea_layer_forward(x, p, tut::full_candidates(n), plan,
                                        GridGeom{side, side});
      Tensor want = ref::dense_mha(x, p.w_q, p.w_k, p.w_v, p.w_o, heads);
      CHECK(tut::max_abs_diff(lf.y, want) < 1e-10);
    }
  }
}

TEST_CASE("single-candidate rows collapse softmax to weight one") {
  Rng rng(104);
  const int32_t n = 6;
  const int64_t c = 4;
  std::vector<std::vector<int32_t>> rows(static_cast<size_t>(n));
  for (int32_t i = 0; i < n; ++i) rows[static_cast<size_t>(i)] = {(i + 2) % n};
  CandidateSet cands = CandidateSet::from_rows(n, rows);
  attn::AttnParams p = random_params(rng, c, 2);
  Tensor x = tut::random_tensor(rng, {n, c});
  attn::LayerPlan plan;
  plan.sparsify_enabled = false;
  auto lf = attn::iea_layer_forward(x, p, cands, plan, GridGeom{2, 3});
  for (int64_t i = 0; i < n; ++i) CHECK(lf.save.a_cal.at3(0, i, 0) == 1.0);
}

TEST_CASE("renormalized surviving rows sum to one per head; output convex") {
  Rng rng(105);
  const int32_t side = 6;
  const int32_t n = side * side;
  const int64_t c = 8;
  const int32_t heads = 2;
  attn::AttnParams p = random_params(rng, c, heads);
  Tensor x = tut::random_tensor(rng, {n, c});
  CandidateSet cands = graph::dlsg_init(GridGeom{side, side}, 3, 2);
  attn::LayerPlan plan;
  plan.k_min = 4;
  plan.keep_fraction = 0.4;
  auto lf = attn::iea_layer_forward(x, p, cands, plan, GridGeom{side, side});

  const auto& a_norm = lf.save.a_norm;
  const int32_t k_s = static_cast<int32_t>(a_norm.dim(2));
  for (int32_t hh = 0; hh < heads; ++hh)
    for (int32_t i = 0; i < n; ++i) {
      double sum = 0.0;
      for (int32_t t = 0; t < k_s; ++t) {
        CHECK(a_norm.at3(hh, i, t) >= 0.0);
        sum += a_norm.at3(hh, i, t);
      }
      CHECK(std::abs(sum - 1.0) < 1e-12);
    }

  // barycentric recomposition of the pre-projection output per head
  const int64_t d = c / heads;
  for (int32_t hh = 0; hh < heads; ++hh)
    for (int32_t i = 0; i < n; ++i) {
      auto row = lf.i_s.row(i);
      for (int64_t t = 0; t < d; ++t) {
        double acc = 0.0;
        for (size_t j = 0; j < row.size(); ++j)
          acc += a_norm.at3(hh, i, static_cast<int64_t>(j)) *
                 lf.save.v.at3(hh, row[j], t);
        const double got = lf.save.o_pre.at2(i, hh * d + t);
        CHECK(std::abs(got - acc) < 1e-10);
      }
    }
}

TEST_CASE("permuting a candidate row leaves the output unchanged to 1e-12") {
  Rng rng(106);
  const int32_t n = 12;
  const int64_t c = 8;
  std::vector<std::vector<int32_t>> rows(static_cast<size_t>(n));
  for (int32_t i = 0; i < n; ++i) {
    std::set<int32_t> s = {i, (i + 3) % n, (i + 5) % n, (i + 7) % n};
    rows[static_cast<size_t>(i)].assign(s.begin(), s.end());
  }
  auto permuted = rows;
  for (auto& r : permuted) std::rotate(r.begin(), r.begin() + 1, r.end());

  attn::AttnParams p = random_params(rng, c, 2);
  Tensor x = tut::random_tensor(rng, {n, c});
  attn::LayerPlan plan;
  plan.sparsify_enabled = false;
  auto a = attn::iea_layer_forward(x, p, CandidateSet::from_rows(n, rows), plan,
                                   GridGeom{3, 4});
  auto b = attn::iea_layer_forward(x, p, CandidateSet::from_rows(n, permuted),
                                   plan, GridGeom{3, 4});
  CHECK(tut::max_abs_diff(a.y, b.y) < 1e-12);
}

TEST_CASE("expansion layer output candidates are supersets (paper schedule)") {
  Rng rng(107);
  const int32_t side = 8;
  const int32_t n = side * side;
  const int64_t c = 8;
  attn::AttnParams p = random_params(rng, c, 2);
  Tensor x = tut::random_tensor(rng, {n, c});
  CandidateSet cands = graph::dlsg_init(GridGeom{side, side}, 3, 2);
  attn::LayerPlan plan;
  plan.k_min = 8;
  plan.expand = true;
  plan.k1 = 22;
  plan.k2 = 12;
  plan.k_out_max = 96;
  auto lf = attn::iea_layer_forward(x, p, cands, plan, GridGeom{side, side});
  for (int32_t i = 0; i < n; ++i) {
    auto s_row = lf.i_s.row(i);
    auto n_row = lf.i_next.row(i);
    std::set<int32_t> sup(n_row.begin(), n_row.end());
    for (int32_t tok : s_row) CHECK(sup.count(tok) == 1);
  }
  CHECK(lf.i_highest.size() == static_cast<size_t>(n));
}

TEST_CASE("relative-position bias is applied by clamped offset slot") {
  Rng rng(108);
  const int32_t side = 4;
  const int32_t n = 16;
  const int64_t c = 4;
  const int32_t w = 3;
  attn::AttnParams p = random_params(rng, c, 1);
  p.window = w;
  const int64_t slots = (2 * w - 1) * (2 * w - 1) + 1;
  p.rel_bias = tut::random_tensor(rng, {1, slots}, 0.8);
  Tensor x = tut::random_tensor(rng, {n, c});
  attn::LayerPlan plan;
  plan.sparsify_enabled = false;
  GridGeom geom{side, side};
  auto lf = attn::iea_layer_forward(x, p, tut::full_candidates(n), plan, geom);

  // independent recomputation: dense logits + table lookup, then softmax
  Tensor q = ref::matmul(x, p.w_q), k = ref::matmul(x, p.w_k);
  for (int32_t i = 0; i < n; ++i) {
    std::vector<double> logits(static_cast<size_t>(n));
    for (int32_t j = 0; j < n; ++j) {
      double acc = 0.0;
      for (int64_t t = 0; t < c; ++t) acc += q.at2(i, t) * k.at2(j, t);
      const int32_t dr = geom.row_of(j) - geom.row_of(i);
      const int32_t dc = geom.col_of(j) - geom.col_of(i);
      int32_t slot = (2 * w - 1) * (2 * w - 1);
      if (std::abs(dr) <= w - 1 && std::abs(dc) <= w - 1)
        slot = (dr + w - 1) * (2 * w - 1) + (dc + w - 1);
      logits[static_cast<size_t>(j)] =
          acc / std::sqrt(static_cast<double>(c)) + p.rel_bias.at2(0, slot);
    }
    double mx = logits[0];
    for (double v : logits) mx = std::max(mx, v);
    double sum = 0.0;
    std::vector<double> e(logits.size());
    for (size_t j = 0; j < logits.size(); ++j) {
      e[j] = std::exp(logits[j] - mx);
      sum += e[j];
    }
    for (size_t j = 0; j < e.size(); ++j)
      CHECK(std::abs(lf.save.a_cal.at3(0, i, static_cast<int64_t>(j)) -
                     e[j] / sum) < 1e-12);
  }
}

TEST_CASE("layer backward: zero cotangent gives zero grads") {
  Rng rng(109);
  const int32_t n = 12;
  const int64_t c = 8;
  attn::AttnParams p = random_params(rng, c, 2);
  Tensor x = tut::random_tensor(rng, {n, c});
  attn::LayerPlan plan;
  plan.k_min = 4;
  auto lf = attn::iea_layer_forward(x, p, graph::dlsg_init(GridGeom{3, 4}, 3, 2),
                                    plan, GridGeom{3, 4});
  Tensor dy({n, c});
  auto g = attn::iea_layer_backward(dy, p, lf.save, GridGeom{3, 4});
  CHECK(tut::max_abs_diff(g.dx, dy) == 0.0);
  for (int64_t i = 0; i < g.dw_q.numel(); ++i) CHECK(g.dw_q[i] == 0.0);
  for (int64_t i = 0; i < g.dw_o.numel(); ++i) CHECK(g.dw_o[i] == 0.0);
}

TEST_CASE("layer backward requires saved state") {
  attn::LayerSave empty;
  attn::AttnParams p;
  p.w_q = Tensor({2, 2});
  p.w_k = Tensor({2, 2});
  p.w_v = Tensor({2, 2});
  p.w_o = Tensor({2, 2});
  CHECK_THROWS_AS(
      attn::iea_layer_backward(Tensor({1, 2}), p, empty, GridGeom{1, 1}),
      UsageError);
}

namespace {

// <y, r> probe for finite differences through the full layer.
double layer_probe(const Tensor& x, const attn::AttnParams& p,
                   const CandidateSet& cands, const attn::LayerPlan& plan,
                   GridGeom geom, const Tensor& r) {
  auto lf = attn::iea_layer_forward(x, p, cands, plan, geom);
  double acc = 0.0;
  for (int64_t i = 0; i < lf.y.numel(); ++i) acc += lf.y[i] * r[i];
  return acc;
}

}  // namespace

TEST_CASE("layer backward matches finite differences (sparsified, biased)") {
  const GridGeom geom{3, 4};
  const int32_t n = 12;
  const int64_t c = 8;
  const double h = 1e-5;
  int done = 0;
  for (uint64_t seed = 0; seed < 40 && done < 5; ++seed) {
    Rng rng(7000 + seed);
    attn::AttnParams p = random_params(rng, c, 2);
    p.window = 3;
    p.rel_bias = tut::random_tensor(rng, {2, 26}, 0.3);
    Tensor x = tut::random_tensor(rng, {n, c});
    CandidateSet cands = graph::dlsg_init(geom, 3, 2);
    attn::LayerPlan plan;
    plan.k_min = 4;
    plan.keep_fraction = 0.5;
    auto lf = attn::iea_layer_forward(x, p, cands, plan, geom);

    // skip seeds whose top-k cut could flip under the probe step
    double margin = 1e300;
    for (int32_t i = 0; i < n; ++i) {
      const int32_t len = cands.length(i);
      const int32_t ks = lf.i_s.length(i);
      if (ks >= len) continue;
      std::vector<double> row(lf.save.sel.data() + i * cands.k_max(),
                              lf.save.sel.data() + i * cands.k_max() + len);
      std::sort(row.begin(), row.end(), std::greater<double>());
      margin = std::min(margin, row[ks - 1] - row[ks]);
    }
    if (margin < 1e-6) continue;
    ++done;

    Tensor r = tut::random_tensor(rng, {n, c});
    auto grads = attn::iea_layer_backward(r, p, lf.save, geom);
    auto fd_x = ops::finite_diff_grad(
        [&](const Tensor& xv) { return layer_probe(xv, p, cands, plan, geom, r); },
        x, h);
    CHECK(tut::rel_err(grads.dx, fd_x) < 1e-4);

    auto probe_param = [&](Tensor attn::AttnParams::*field) {
      attn::AttnParams pv = p;
      return ops::finite_diff_grad(
          [&](const Tensor& t) {
            pv.*field = t;
            return layer_probe(x, pv, cands, plan, geom, r);
          },
          p.*field, h);
    };
    CHECK(tut::rel_err(grads.dw_q, probe_param(&attn::AttnParams::w_q)) < 1e-4);
    CHECK(tut::rel_err(grads.dw_k, probe_param(&attn::AttnParams::w_k)) < 1e-4);
    CHECK(tut::rel_err(grads.dw_v, probe_param(&attn::AttnParams::w_v)) < 1e-4);
    CHECK(tut::rel_err(grads.dw_o, probe_param(&attn::AttnParams::w_o)) < 1e-4);
    CHECK(tut::rel_err(grads.drel_bias,
                       probe_param(&attn::AttnParams::rel_bias)) < 1e-4);
  }
  CHECK(done == 5);
}

TEST_CASE("layer backward with LePE matches finite differences") {
  const GridGeom geom{4, 4};
  const int32_t n = 16;
  const int64_t c = 8;
  Rng rng(7777);
  attn::AttnParams p = random_params(rng, c, 2);
  p.lepe_w = tut::random_tensor(rng, {3, 3, c}, 0.3);
  Tensor x = tut::random_tensor(rng, {n, c});
  CandidateSet cands = tut::full_candidates(n);
  attn::LayerPlan plan;
  plan.sparsify_enabled = false;
  auto lf = attn::iea_layer_forward(x, p, cands, plan, geom);
  Tensor r = tut::random_tensor(rng, {n, c});
  auto grads = attn::iea_layer_backward(r, p, lf.save, geom);
  auto fd_lepe = ops::finite_diff_grad(
      [&](const Tensor& t) {
        attn::AttnParams pv = p;
        pv.lepe_w = t;
        return layer_probe(x, pv, cands, plan, geom, r);
      },
      p.lepe_w, 1e-5);
  CHECK(tut::rel_err(grads.dlepe_w, fd_lepe) < 1e-4);
  auto fd_x = ops::finite_diff_grad(
      [&](const Tensor& xv) { return layer_probe(xv, p, cands, plan, geom, r); },
      x, 1e-5);
  CHECK(tut::rel_err(grads.dx, fd_x) < 1e-4);
}

TEST_CASE("full-coverage backward equals the dense reference backward") {
  Rng rng(110);
  const int32_t n = 9;
  const int64_t c = 6;
  attn::AttnParams p = random_params(rng, c, 2);
  Tensor x = tut::random_tensor(rng, {n, c});
  Tensor dy = tut::random_tensor(rng, {n, c});
  attn::LayerPlan plan;
  plan.sparsify_enabled = false;
  auto lf = attn::iea_layer_forward(x, p, tut::full_candidates(n), plan,
                                    GridGeom{3, 3});
  auto got = attn::iea_layer_backward(dy, p, lf.save, GridGeom{3, 3});
  auto want = ref::dense_mha_backward(x, p.w_q, p.w_k, p.w_v, p.w_o, 2, dy);
  CHECK(tut::max_abs_diff(got.dx, want.dx) < 1e-10);
  CHECK(tut::max_abs_diff(got.dw_q, want.dw_q) < 1e-10);
  CHECK(tut::max_abs_diff(got.dw_k, want.dw_k) < 1e-10);
  CHECK(tut::max_abs_diff(got.dw_v, want.dw_v) < 1e-10);
  CHECK(tut::max_abs_diff(got.dw_o, want.dw_o) < 1e-10);
}

TEST_CASE("attention core FLOPs scale with realized candidate width") {
  Rng rng(111);
  const int64_t c = 8;
  attn::AttnParams p = random_params(rng, c, 2);
  attn::LayerPlan plan;
  plan.sparsify_enabled = false;
  auto run = [&](int32_t side, int32_t window, int32_t dil) {
    const int32_t n = side * side;
    Tensor x = tut::random_tensor(rng, {n, c});
    FlopCount fc;
    auto lf = attn::iea_layer_forward(
        x, p, graph::dlsg_init(GridGeom{side, side}, window, dil), plan,
        GridGeom{side, side}, &fc);
    (void)lf;
    return fc;
  };
  FlopCount a = run(6, 3, 6);   // k = 9 + 1
  FlopCount b = run(12, 3, 12); // same k, 4x tokens
  const double ratio = static_cast<double>(b.qk) / static_cast<double>(a.qk);
  CHECK(ratio == doctest::Approx(4.0).epsilon(0.05));
}
