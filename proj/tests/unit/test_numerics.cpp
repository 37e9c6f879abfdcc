#include <doctest.h>

#include <cmath>
#include <limits>

#include "iet/ops.hpp"
#include "iet/parallel.hpp"
#include "iet/reference.hpp"
#include "iet/rng.hpp"
#include "test_util.hpp"

using namespace iet;

TEST_CASE("matmul identity and hand-checked products") {
  Tensor eye({2, 2}, {1, 0, 0, 1});
  Tensor same = ops::matmul(eye, eye);
  CHECK(tut::max_abs_diff(same, eye) == 0.0);

  Tensor a({2, 2}, {1, 2, 3, 4});
  Tensor b({2, 1}, {0, 1});
  Tensor c = ops::matmul(a, b);
  CHECK(c.at2(0, 0) == 2.0);
  CHECK(c.at2(1, 0) == 4.0);
}

TEST_CASE("matmul matches triple-loop reference") {
  Rng rng(11);
  Tensor a = tut::random_tensor(rng, {7, 5});
  Tensor b = tut::random_tensor(rng, {5, 3});
  CHECK(tut::max_abs_diff(ops::matmul(a, b), ref::matmul(a, b)) < 1e-12);
  CHECK_THROWS_AS(ops::matmul(a, tut::random_tensor(rng, {4, 3})),
                  DimensionError);
}

TEST_CASE("matmul is bit-identical across thread counts") {
  Rng rng(12);
  Tensor a = tut::random_tensor(rng, {33, 17});
  Tensor b = tut::random_tensor(rng, {17, 29});
  const int saved = thread_count();
  set_thread_count(1);
  Tensor seq = ops::matmul(a, b);
  set_thread_count(4);
  Tensor par = ops::matmul(a, b);
  set_thread_count(saved);
  for (int64_t i = 0; i < seq.numel(); ++i) CHECK(seq[i] == par[i]);
}

TEST_CASE("matmul rejects non-finite input products") {
  Tensor a({1, 1}, {1e308});
  Tensor b({1, 1}, {1e308});
  CHECK_THROWS_AS(ops::matmul(a, b), NumericError);
}

TEST_CASE("softmax_rows symmetry, stability, masking") {
  Tensor flat({1, 3}, {0, 0, 0});
  Tensor s = ops::softmax_rows(flat);
  for (int j = 0; j < 3; ++j) CHECK(s.at2(0, j) == doctest::Approx(1.0 / 3).epsilon(1e-12));

  Tensor big({1, 2}, {1000, 0});
  Tensor sb = ops::softmax_rows(big);
  CHECK(sb.at2(0, 0) == doctest::Approx(1.0));
  CHECK(sb.at2(0, 1) < 1e-300);

  // padded entry ignored and forced to exactly zero
  Tensor padded({1, 3}, {0.3, -0.7, 99.0});
  std::vector<int32_t> lens = {2};
  Tensor sp = ops::softmax_rows(padded, lens);
  Tensor trunc({1, 2}, {0.3, -0.7});
  Tensor st = ops::softmax_rows(trunc);
  CHECK(sp.at2(0, 0) == doctest::Approx(st.at2(0, 0)).epsilon(1e-14));
  CHECK(sp.at2(0, 1) == doctest::Approx(st.at2(0, 1)).epsilon(1e-14));
  CHECK(sp.at2(0, 2) == 0.0);

  std::vector<int32_t> zero_len = {0};
  CHECK_THROWS_AS(ops::softmax_rows(trunc, zero_len), NumericError);
}

TEST_CASE("softmax_rows valid segments sum to one") {
  Rng rng(5);
  Tensor x = tut::random_tensor(rng, {40, 17}, 4.0);
  std::vector<int32_t> lens(40);
  for (auto& l : lens) l = 1 + static_cast<int32_t>(rng.below(17));
  Tensor s = ops::softmax_rows(x, lens);
  for (int64_t i = 0; i < 40; ++i) {
    double sum = 0.0;
    for (int64_t j = 0; j < 17; ++j) {
      if (j >= lens[static_cast<size_t>(i)]) CHECK(s.at2(i, j) == 0.0);
      sum += s.at2(i, j);
    }
    CHECK(std::abs(sum - 1.0) < 1e-12);
  }
}

TEST_CASE("topk hand cases and tie-break") {
  std::vector<double> v = {5, 1, 9};
  auto idx = ops::topk(v, 2);
  REQUIRE(idx.size() == 2);
  CHECK(idx[0] == 2);
  CHECK(idx[1] == 0);

  std::vector<double> ties = {3, 3, 3};
  auto t = ops::topk(ties, 2);
  CHECK(t[0] == 0);
  CHECK(t[1] == 1);

  CHECK(ops::topk(ties, 99).size() == 3);  // clamps
  CHECK(ops::topk(ties, 0).empty());
}

TEST_CASE("topk equals sort oracle up to length 256") {
  Rng rng(300);
  for (int trial = 0; trial < 50; ++trial) {
    const int64_t n = 1 + static_cast<int64_t>(rng.below(256));
    std::vector<double> v(static_cast<size_t>(n));
    // coarse values provoke ties
    for (auto& x : v) x = std::floor(rng.uniform() * 16.0);
    const int64_t count = static_cast<int64_t>(rng.below(static_cast<uint64_t>(n + 2)));
    auto got = ops::topk(v, count);
    auto want = ref::topk_by_sort(v, count);
    REQUIRE(got.size() == want.size());
    for (size_t i = 0; i < got.size(); ++i) CHECK(got[i] == want[i]);
  }
}

TEST_CASE("depthwise conv: bias broadcast and identity kernel") {
  Tensor zero({4, 5, 2});
  Tensor w({3, 3, 2});
  Tensor b({2}, {0.25, -0.5});
  Tensor out = ops::depthwise_conv3x3(zero, w, b);
  for (int64_t p = 0; p < 20; ++p) {
    CHECK(out[p * 2 + 0] == 0.25);
    CHECK(out[p * 2 + 1] == -0.5);
  }

  Rng rng(8);
  Tensor x = tut::random_tensor(rng, {6, 6, 3});
  Tensor ident({3, 3, 3});
  for (int c = 0; c < 3; ++c) ident[(1 * 3 + 1) * 3 + c] = 1.0;  // center tap
  Tensor y = ops::depthwise_conv3x3(x, ident, Tensor{});
  CHECK(tut::max_abs_diff(y, x) == 0.0);
}

TEST_CASE("convs match direct loop references") {
  Rng rng(9);
  Tensor x = tut::random_tensor(rng, {5, 5, 2});
  Tensor wd = tut::random_tensor(rng, {3, 3, 2});
  Tensor bd = tut::random_tensor(rng, {2});
  CHECK(tut::max_abs_diff(ops::depthwise_conv3x3(x, wd, bd),
                          ref::depthwise_direct(x, wd, bd)) < 1e-12);

  Tensor wf = tut::random_tensor(rng, {3, 3, 2, 4});
  Tensor bf = tut::random_tensor(rng, {4});
  CHECK(tut::max_abs_diff(ops::conv3x3(x, wf, bf),
                          ref::conv3x3_direct(x, wf, bf)) < 1e-12);
}

TEST_CASE("conv backward matches finite differences") {
  Rng rng(10);
  Tensor x = tut::random_tensor(rng, {4, 4, 2});
  Tensor w = tut::random_tensor(rng, {3, 3, 2, 3});
  Tensor b = tut::random_tensor(rng, {3});
  Tensor r = tut::random_tensor(rng, {4, 4, 3});
  auto probe_x = [&](const Tensor& xv) {
    Tensor y = ops::conv3x3(xv, w, b);
    double acc = 0.0;
    for (int64_t i = 0; i < y.numel(); ++i) acc += y[i] * r[i];
    return acc;
  };
  auto probe_w = [&](const Tensor& wv) {
    Tensor y = ops::conv3x3(x, wv, b);
    double acc = 0.0;
    for (int64_t i = 0; i < y.numel(); ++i) acc += y[i] * r[i];
    return acc;
  };
  Tensor dx, dw, db;
  ops::conv3x3_backward(x, w, r, dx, dw, db);
  CHECK(tut::rel_err(dx, ops::finite_diff_grad(probe_x, x, 1e-5)) < 1e-8);
  CHECK(tut::rel_err(dw, ops::finite_diff_grad(probe_w, w, 1e-5)) < 1e-8);
}

TEST_CASE("gelu, layer_norm, pixel_shuffle basics") {
  Tensor z({1, 1});
  CHECK(ops::gelu(z)[0] == 0.0);

  Rng rng(21);
  Tensor x = tut::random_tensor(rng, {12, 9}, 2.0);
  Tensor gamma = Tensor::full({9}, 1.0);
  Tensor beta({9});
  Tensor y = ops::layer_norm(x, gamma, beta);
  for (int64_t i = 0; i < 12; ++i) {
    double mean = 0.0, var = 0.0;
    for (int64_t j = 0; j < 9; ++j) mean += y.at2(i, j);
    mean /= 9;
    for (int64_t j = 0; j < 9; ++j) var += (y.at2(i, j) - mean) * (y.at2(i, j) - mean);
    var /= 9;
    CHECK(std::abs(mean) < 1e-10);
    CHECK(std::abs(var - 1.0) < 1e-10);
  }

  Tensor px = tut::random_tensor(rng, {3, 4, 12});
  Tensor shuffled = ops::pixel_shuffle(px, 2);
  CHECK(shuffled.dim(0) == 6);
  CHECK(shuffled.dim(1) == 8);
  CHECK(shuffled.dim(2) == 3);
  Tensor back = ops::pixel_unshuffle(shuffled, 2);
  CHECK(tut::max_abs_diff(back, px) == 0.0);
}

TEST_CASE("layer_norm backward matches finite differences") {
  Rng rng(22);
  Tensor x = tut::random_tensor(rng, {6, 7});
  Tensor gamma = tut::random_tensor(rng, {7});
  Tensor beta = tut::random_tensor(rng, {7});
  Tensor r = tut::random_tensor(rng, {6, 7});
  auto probe = [&](const Tensor& xv) {
    Tensor y = ops::layer_norm(xv, gamma, beta);
    double acc = 0.0;
    for (int64_t i = 0; i < y.numel(); ++i) acc += y[i] * r[i];
    return acc;
  };
  Tensor dx, dg, db;
  ops::layer_norm_backward(x, gamma, r, dx, dg, db);
  CHECK(tut::rel_err(dx, ops::finite_diff_grad(probe, x, 1e-5)) < 1e-7);
}

TEST_CASE("finite differences on analytic functions") {
  auto sum_sq = [](const Tensor& t) {
    double acc = 0.0;
    for (int64_t i = 0; i < t.numel(); ++i) acc += t[i] * t[i];
    return acc;
  };
  Tensor x({2}, {1, 2});
  Grad g = ops::finite_diff_grad(sum_sq, x, 1e-5);
  CHECK(g[0] == doctest::Approx(2.0).epsilon(1e-8));
  CHECK(g[1] == doctest::Approx(4.0).epsilon(1e-8));

  Tensor target({3}, {0.5, -0.25, 0.75});
  auto l1 = [&target](const Tensor& t) {
    double acc = 0.0;
    for (int64_t i = 0; i < t.numel(); ++i) acc += std::abs(t[i] - target[i]);
    return acc;
  };
  Tensor probe({3}, {1.0, 0.5, 0.25});
  Grad gl = ops::finite_diff_grad(l1, probe, 1e-6);
  CHECK(gl[0] == doctest::Approx(1.0));
  CHECK(gl[1] == doctest::Approx(1.0));
  CHECK(gl[2] == doctest::Approx(-1.0));
}

TEST_CASE("gather and scatter-add are exact adjoints") {
  Rng rng(31);
  const int32_t n = 20, c = 6, m = 33;
  Tensor x = tut::random_tensor(rng, {n, c});
  Tensor y = tut::random_tensor(rng, {m, c});
  std::vector<int32_t> idx(static_cast<size_t>(m));
  for (auto& i : idx) i = static_cast<int32_t>(rng.below(n));

  Tensor gx = ops::gather_rows(x, idx);
  double lhs = 0.0;
  for (int64_t i = 0; i < gx.numel(); ++i) lhs += gx[i] * y[i];

  Tensor acc({n, c});
  ops::scatter_add_rows(acc, idx, y);
  double rhs = 0.0;
  for (int64_t i = 0; i < acc.numel(); ++i) rhs += acc[i] * x[i];
  CHECK(std::abs(lhs - rhs) < 1e-12);

  std::vector<int32_t> bad = {-1};
  Tensor one({1, c});
  CHECK_THROWS_AS(ops::gather_rows(x, bad), CandidateError);
  CHECK_THROWS_AS(ops::scatter_add_rows(acc, bad, one), CandidateError);
}
