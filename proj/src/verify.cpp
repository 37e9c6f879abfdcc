#include "iet/verify.hpp"

#include <algorithm>
#include <cmath>
#include <cstdio>
#include <set>
#include <sstream>

#include <nlohmann/json.hpp>

#include "iet/attention.hpp"
#include "iet/candidates.hpp"
#include "iet/image.hpp"
#include "iet/model.hpp"
#include "iet/ops.hpp"
#include "iet/parallel.hpp"
#include "iet/pipeline.hpp"
#include "iet/reference.hpp"
#include "iet/rng.hpp"

namespace iet::verify {

namespace {

double tol_or(const std::map<std::string, double>& t, const std::string& key,
              double fallback) {
  auto it = t.find(key);
  return it == t.end() ? fallback : it->second;
}

Tensor random_tensor(Rng& rng, std::vector<int64_t> shape, double scale = 1.0) {
  Tensor t(std::move(shape));
  for (double& v : t.vec()) v = rng.uniform(-scale, scale);
  return t;
}

attn::AttnParams random_attn(Rng& rng, int64_t c, int32_t heads) {
  attn::AttnParams p;
  p.heads = heads;
  p.w_q = random_tensor(rng, {c, c}, 0.3);
  p.w_k = random_tensor(rng, {c, c}, 0.3);
  p.w_v = random_tensor(rng, {c, c}, 0.3);
  p.w_o = random_tensor(rng, {c, c}, 0.3);
  return p;
}

graph::CandidateSet full_candidates(int32_t n) {
  std::vector<std::vector<int32_t>> rows(static_cast<size_t>(n));
  for (int32_t i = 0; i < n; ++i) {
    rows[static_cast<size_t>(i)].resize(static_cast<size_t>(n));
    for (int32_t j = 0; j < n; ++j) rows[static_cast<size_t>(i)][static_cast<size_t>(j)] = j;
  }
  return graph::CandidateSet::from_rows(n, rows);
}

graph::CandidateSet random_candidates(Rng& rng, int32_t n, int32_t max_len) {
  std::vector<std::vector<int32_t>> rows(static_cast<size_t>(n));
  std::vector<int32_t> pool(static_cast<size_t>(n));
  for (int32_t i = 0; i < n; ++i) pool[static_cast<size_t>(i)] = i;
  for (int32_t i = 0; i < n; ++i) {
    for (size_t j = pool.size(); j > 1; --j)
      std::swap(pool[j - 1], pool[rng.below(j)]);
    const int32_t len =
        1 + static_cast<int32_t>(rng.below(static_cast<uint64_t>(max_len)));
    rows[static_cast<size_t>(i)].assign(pool.begin(), pool.begin() + len);
  }
  return graph::CandidateSet::from_rows(n, rows);
}

Tensor random_scores(Rng& rng, const graph::CandidateSet& cands) {
  Tensor s({cands.tokens(), cands.k_max()});
  for (int32_t i = 0; i < cands.tokens(); ++i)
    for (int32_t j = 0; j < cands.length(i); ++j)
      s.at2(i, j) = rng.uniform();
  return s;
}

double max_abs_diff(const Tensor& a, const Tensor& b) {
  double m = 0.0;
  for (int64_t i = 0; i < a.numel(); ++i) m = std::max(m, std::abs(a[i] - b[i]));
  return m;
}

std::string fmt(double v) {
  char buf[64];
  std::snprintf(buf, sizeof(buf), "%.3e", v);
  return buf;
}

using Check = CheckResult;

// -- dense equivalence -------------------------------------------------------

void suite_dense(SuiteReport& rep, uint64_t seed, double tol) {
  for (int32_t n_side : {4, 6}) {
    for (int32_t heads : {1, 2}) {
      const int32_t n = n_side * n_side;
      const int64_t c = 8;
      Rng rng(seed ^ (static_cast<uint64_t>(n) << 8) ^ heads);
      attn::AttnParams p = random_attn(rng, c, heads);
      Tensor x = random_tensor(rng, {n, c});
      graph::CandidateSet cands = full_candidates(n);
      attn::LayerPlan plan;
      plan.sparsify_enabled = false;
      auto lf = attn::iea_layer_forward(x, p, cands, plan,
                                        graph::GridGeom{n_side, n_side});
      Tensor want = ref::dense_mha(x, p.w_q, p.w_k, p.w_v, p.w_o, heads);
      const double err = max_abs_diff(lf.y, want);
      Check ck;
      ck.name = "dense_equivalence_n" + std::to_string(n) + "_h" +
                std::to_string(heads);
      ck.pass = err < tol;
      ck.detail = "max_abs " + fmt(err) + " tol " + fmt(tol);
      rep.checks.push_back(ck);
    }
  }
}

// -- expansion oracle --------------------------------------------------------

void suite_expand(SuiteReport& rep, uint64_t seed) {
  int fails = 0;
  std::string detail = "20 instances";
  for (int inst = 0; inst < 20; ++inst) {
    Rng rng(seed + static_cast<uint64_t>(inst) * 977);
    const int32_t n = 8 + static_cast<int32_t>(rng.below(57));
    graph::CandidateSet cands =
        random_candidates(rng, n, std::min<int32_t>(n, 12));
    Tensor scores = random_scores(rng, cands);
    const int32_t k1 = 1 + static_cast<int32_t>(rng.below(6));
    const int32_t k2 = 1 + static_cast<int32_t>(rng.below(6));
    graph::CandidateSet got = graph::expand(scores, cands, k1, k2, 4 * n);
    auto want = ref::two_hop_sets(scores, cands, k1, k2);
    for (int32_t i = 0; i < n; ++i) {
      auto row = got.row(i);
      std::set<int32_t> got_set(row.begin(), row.end());
      if (got_set != want[static_cast<size_t>(i)]) {
        ++fails;
        detail = "instance " + std::to_string(inst) + " row " +
                 std::to_string(i) + " differs";
        break;
      }
    }
  }
  Check ck;
  ck.name = "expand_matches_bruteforce";
  ck.pass = fails == 0;
  ck.detail = detail;
  rep.checks.push_back(ck);
}

// -- sparsify oracle ---------------------------------------------------------

void suite_sparsify(SuiteReport& rep, uint64_t seed) {
  int fails = 0;
  std::string detail = "40 rows incl ties";
  for (int inst = 0; inst < 40; ++inst) {
    Rng rng(seed + static_cast<uint64_t>(inst) * 131);
    const int32_t n = 4 + static_cast<int32_t>(rng.below(29));
    graph::CandidateSet cands =
        random_candidates(rng, n, std::min<int32_t>(n, 10));
    Tensor scores({n, cands.k_max()});
    for (int32_t i = 0; i < n; ++i)
      for (int32_t j = 0; j < cands.length(i); ++j)
        scores.at2(i, j) = std::floor(rng.uniform() * 8.0) / 8.0;  // forces ties
    const int32_t k_s = 1 + static_cast<int32_t>(rng.below(8));
    auto res = graph::sparsify(scores, cands, k_s);
    for (int32_t i = 0; i < n; ++i) {
      std::vector<double> vals(scores.data() + static_cast<int64_t>(i) * cands.k_max(),
                               scores.data() + static_cast<int64_t>(i) * cands.k_max() +
                                   cands.length(i));
      auto order = ref::topk_by_sort(vals, k_s);
      auto got = res.kept.row(i);
      auto in_row = cands.row(i);
      if (static_cast<size_t>(got.size()) != order.size()) {
        ++fails;
        break;
      }
      for (size_t t = 0; t < order.size(); ++t) {
        if (got[t] != in_row[static_cast<size_t>(order[t])]) {
          ++fails;
          detail = "instance " + std::to_string(inst) + " row " +
                   std::to_string(i) + " order mismatch";
          break;
        }
      }
      if (fails) break;
    }
    if (fails) break;
  }
  Check ck;
  ck.name = "sparsify_matches_sort_oracle";
  ck.pass = fails == 0;
  ck.detail = detail;
  rep.checks.push_back(ck);
}

// -- DLSG structure ----------------------------------------------------------

void suite_dlsg(SuiteReport& rep, uint64_t /*seed*/) {
  Check structural{"dlsg_structure", true, ""};
  Check full{"dlsg_d1_full_attention", true, ""};
  for (auto [hgt, wid] : {std::pair{5, 7}, {8, 8}, {16, 16}}) {
    for (int32_t w : {3, 5}) {
      for (int32_t d : {1, 2, 3}) {
        graph::GridGeom geom{hgt, wid};
        graph::CandidateSet cs = graph::dlsg_init(geom, w, d);
        try {
          cs.validate();
        } catch (const Error& e) {
          structural.pass = false;
          structural.detail = e.what();
        }
        auto want = ref::dlsg_sets(geom, w, d);
        for (int32_t i = 0; i < geom.tokens(); ++i) {
          auto row = cs.row(i);
          std::set<int32_t> got(row.begin(), row.end());
          if (got != want[static_cast<size_t>(i)]) {
            structural.pass = false;
            structural.detail = "set mismatch at token " + std::to_string(i);
          }
        }
        if (d == 1) {
          for (int32_t i = 0; i < geom.tokens(); ++i)
            if (cs.length(i) != geom.tokens()) {
              full.pass = false;
              full.detail = "row " + std::to_string(i) + " not full";
            }
        }
      }
    }
  }
  rep.checks.push_back(structural);
  rep.checks.push_back(full);
}

// -- gradient spot checks ------------------------------------------------------

double grad_rel_err(const Tensor& got, const Tensor& want) {
  double num = 0.0, den = 0.0;
  for (int64_t i = 0; i < got.numel(); ++i) {
    num = std::max(num, std::abs(got[i] - want[i]));
    den = std::max({den, std::abs(got[i]), std::abs(want[i])});
  }
  return num / std::max(den, 1e-6);
}

void suite_grad(SuiteReport& rep, uint64_t seed, double tol) {
  const double h = 1e-5;
  // attention layer via <y, R> probe
  {
    double worst = 0.0;
    for (int trial = 0; trial < 3; ++trial) {
      Rng rng(seed + static_cast<uint64_t>(trial) * 7919);
      const graph::GridGeom geom{3, 4};
      const int32_t n = 12;
      const int64_t c = 8;
      attn::AttnParams p = random_attn(rng, c, 2);
      p.window = 3;
      p.rel_bias = random_tensor(rng, {2, (2 * 3 - 1) * (2 * 3 - 1) + 1}, 0.2);
      Tensor x = random_tensor(rng, {n, c});
      graph::CandidateSet cands = graph::dlsg_init(geom, 3, 2);
      attn::LayerPlan plan;
      plan.k_min = 4;
      plan.keep_fraction = 0.5;
      Tensor r = random_tensor(rng, {n, c});
      auto fwd = attn::iea_layer_forward(x, p, cands, plan, geom);
      Tensor dy = r;
      auto grads = attn::iea_layer_backward(dy, p, fwd.save, geom);
      auto probe = [&](const Tensor& xv) {
        auto f = attn::iea_layer_forward(xv, p, cands, plan, geom);
        double acc = 0.0;
        for (int64_t i = 0; i < f.y.numel(); ++i) acc += f.y[i] * r[i];
        return acc;
      };
      Grad fd = ops::finite_diff_grad(probe, x, h);
      worst = std::max(worst, grad_rel_err(grads.dx, fd));
    }
    Check ck{"attention_layer_grad_x", worst < tol,
             "rel " + fmt(worst) + " tol " + fmt(tol)};
    rep.checks.push_back(ck);
  }
  // sf-ffn
  {
    double worst = 0.0;
    for (int trial = 0; trial < 3; ++trial) {
      Rng rng(seed * 31 + static_cast<uint64_t>(trial));
      const graph::GridGeom geom{4, 4};
      const int32_t n = 16;
      const int64_t c = 8;
      ffn::SfFfnParams p;
      p.heads = 2;
      p.ratio = 2;
      p.headwise_in = random_tensor(rng, {2, 8, 8}, 0.4);
      p.headwise_out = random_tensor(rng, {2, 8, 4}, 0.4);
      p.dw = random_tensor(rng, {3, 3, c}, 0.4);
      Tensor x = random_tensor(rng, {n, c});
      std::vector<int32_t> hi(static_cast<size_t>(n));
      for (int32_t i = 0; i < n; ++i)
        hi[static_cast<size_t>(i)] = static_cast<int32_t>(rng.below(n));
      Tensor r = random_tensor(rng, {n, c});
      ffn::FfnSave save;
      (void)ffn::sf_ffn_core(x, hi, p, geom, &save);
      auto grads = ffn::sf_ffn_core_backward(r, p, save, geom);
      auto probe = [&](const Tensor& xv) {
        Tensor y = ffn::sf_ffn_core(xv, hi, p, geom);
        double acc = 0.0;
        for (int64_t i = 0; i < y.numel(); ++i) acc += y[i] * r[i];
        return acc;
      };
      Grad fd = ops::finite_diff_grad(probe, x, h);
      worst = std::max(worst, grad_rel_err(grads.dx, fd));
    }
    Check ck{"sf_ffn_grad_x", worst < tol, "rel " + fmt(worst) + " tol " + fmt(tol)};
    rep.checks.push_back(ck);
  }
}

// -- candidate threading -------------------------------------------------------

void suite_threading(SuiteReport& rep, uint64_t seed) {
  net::ModelConfig cfg;
  cfg.blocks = 3;
  cfg.layers_per_block = 2;
  cfg.heads = 2;
  cfg.channels = 8;
  cfg.scale = 2;
  cfg.window = 3;
  cfg.schedule.k_min = 6;
  cfg.finalize();
  net::TrainState st = net::build_model(cfg, seed);
  Tensor lr({8, 8, 3});
  Rng rng(seed);
  for (double& v : lr.vec()) v = rng.uniform();

  net::ForwardTrace trace;
  Tensor sr1 = net::forward(st, lr, 2, &trace);
  Check chain{"candidate_state_threads_through_layers", true, ""};
  for (size_t i = 0; i + 1 < trace.layers.size(); ++i) {
    if (trace.layers[i].i_next_hash != trace.layers[i + 1].i_in_hash) {
      chain.pass = false;
      chain.detail = "break after layer " + std::to_string(i);
    }
  }
  Check fire{"expansion_fires_only_where_configured", true, ""};
  for (const auto& lt : trace.layers) {
    const bool should =
        lt.layer == cfg.layers_per_block - 1 &&
        cfg.schedule.expand_in_block[static_cast<size_t>(lt.block)] != 0;
    if (lt.expanded != should) {
      fire.pass = false;
      fire.detail = "block " + std::to_string(lt.block) + " layer " +
                    std::to_string(lt.layer);
    }
    if (!should && lt.i_next_hash != lt.i_s_hash) {
      fire.pass = false;
      fire.detail = "non-expansion layer changed candidates";
    }
  }
  rep.checks.push_back(chain);
  rep.checks.push_back(fire);

  const int saved = thread_count();
  set_thread_count(1);
  Tensor seq = net::forward(st, lr, 2);
  set_thread_count(4);
  Tensor par = net::forward(st, lr, 2);
  set_thread_count(saved);
  bool identical = seq.numel() == par.numel();
  for (int64_t i = 0; identical && i < seq.numel(); ++i)
    identical = seq[i] == par[i];
  rep.checks.push_back(
      {"bit_identical_across_thread_counts", identical, ""});
}

// -- io ------------------------------------------------------------------------

void suite_io(SuiteReport& rep, uint64_t seed) {
  Rng rng(seed);
  img::Image im;
  im.height = 13;
  im.width = 9;
  im.data.resize(static_cast<size_t>(13) * 9 * 3);
  for (double& v : im.data)
    v = static_cast<double>(rng.below(256)) / 255.0;  // already quantized

  auto ppm = img::encode_ppm(im);
  img::Image back = img::decode_ppm(ppm, "mem");
  bool lossless = back.height == im.height && back.width == im.width;
  for (size_t i = 0; lossless && i < im.data.size(); ++i)
    lossless = back.data[i] == im.data[i];
  rep.checks.push_back({"ppm_round_trip_lossless", lossless, ""});

  auto png = img::encode_png(im);
  img::Image back2 = img::decode_png(png, "mem");
  bool cross = back2.height == im.height;
  for (size_t i = 0; cross && i < im.data.size(); ++i)
    cross = back2.data[i] == back.data[i];
  rep.checks.push_back({"png_matches_ppm_decode", cross, ""});

  const double inf_psnr = img::psnr(im, im);
  rep.checks.push_back({"psnr_identical_is_infinite",
                        std::isinf(inf_psnr) && inf_psnr > 0, ""});

  img::Image shifted = im;
  for (double& v : shifted.data) v = std::clamp(v, 0.0, 0.9) + 0.1;
  img::Image base = shifted;
  for (double& v : base.data) v -= 0.1;
  const double db = img::psnr(base, shifted);
  rep.checks.push_back({"psnr_uniform_0p1_is_20db",
                        std::abs(db - 20.0) < 1e-9, fmt(db)});
}

}  // namespace

std::vector<std::string> suite_names() {
  return {"dense", "expand", "sparsify", "dlsg", "grad", "threading", "io", "all"};
}

SuiteReport run_suite(const std::string& suite, uint64_t seed,
                      const std::map<std::string, double>& tolerances) {
  SuiteReport rep;
  rep.suite = suite;
  rep.seed = seed;
  const double dense_tol = tol_or(tolerances, "dense_tol", 1e-10);
  const double grad_tol = tol_or(tolerances, "grad_tol", 1e-4);

  bool known = false;
  auto want = [&](const char* name) {
    const bool match = suite == name || suite == "all";
    known = known || suite == name;
    return match;
  };
  if (want("dense")) suite_dense(rep, seed, dense_tol);
  if (want("expand")) suite_expand(rep, seed);
  if (want("sparsify")) suite_sparsify(rep, seed);
  if (want("dlsg")) suite_dlsg(rep, seed);
  if (want("grad")) suite_grad(rep, seed, grad_tol);
  if (want("threading")) suite_threading(rep, seed);
  if (want("io")) suite_io(rep, seed);
  if (!known && suite != "all")
    throw ConfigError("unknown verify suite: " + suite);

  for (const auto& c : rep.checks) {
    if (!c.pass) {
      rep.all_pass = false;
      if (rep.first_failure.empty()) rep.first_failure = c.name;
    }
  }
  return rep;
}

std::string SuiteReport::to_text() const {
  std::ostringstream os;
  for (const auto& c : checks)
    os << (c.pass ? "[PASS] " : "[FAIL] ") << c.name
       << (c.detail.empty() ? "" : "  (" + c.detail + ")") << "\n";
  os << (all_pass ? "OK" : "FAILED: " + first_failure) << "\n";
  return os.str();
}

std::string SuiteReport::to_json() const {
  nlohmann::json j;
  j["suite"] = suite;
  j["seed"] = seed;
  j["all_pass"] = all_pass;
  j["first_failure"] = first_failure;
  auto arr = nlohmann::json::array();
  for (const auto& c : checks)
    arr.push_back({{"name", c.name}, {"pass", c.pass}, {"detail", c.detail}});
  j["checks"] = arr;
  return j.dump(2);
}

}  // namespace iet::verify
