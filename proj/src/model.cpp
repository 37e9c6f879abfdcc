#include "iet/model.hpp"

#include <algorithm>
#include <cmath>
#include <cstring>
#include <fstream>

#include <nlohmann/json.hpp>

#include "iet/ops.hpp"
#include "iet/rng.hpp"

namespace iet::net {

using json = nlohmann::json;

void ModelConfig::finalize() {
  if (schedule.expand_in_block.empty())
    schedule = graph::ExpansionSchedule::default_for(blocks);
  if (static_cast<int32_t>(schedule.expand_in_block.size()) < blocks) {
    schedule.expand_in_block.resize(static_cast<size_t>(blocks), 0);
    schedule.k1.resize(static_cast<size_t>(blocks), 0);
    schedule.k2.resize(static_cast<size_t>(blocks), 0);
  }
  validate();
}

void ModelConfig::validate() const {
  if (blocks < 1 || layers_per_block < 1) throw ConfigError("blocks/layers must be >= 1");
  if (heads < 1 || channels < 1 || channels % heads != 0)
    throw ConfigError("channels must be a positive multiple of heads");
  if (scale != 2 && scale != 3 && scale != 4)
    throw ConfigError("scale must be 2, 3 or 4");
  if (window < 1 || window % 2 == 0) throw ConfigError("window must be odd");
  if (dilation_train < 1 || dilation_infer < 1)
    throw ConfigError("dilation must be >= 1");
  if (ffn_ratio < 1) throw ConfigError("ffn_ratio must be >= 1");
  if (!(lr > 0.0)) throw ConfigError("lr must be positive");
  schedule.validate(blocks);
}

std::string ModelConfig::to_json() const {
  json j;
  j["blocks"] = blocks;
  j["layers_per_block"] = layers_per_block;
  j["heads"] = heads;
  j["channels"] = channels;
  j["scale"] = scale;
  j["window"] = window;
  j["dilation_train"] = dilation_train;
  j["dilation_infer"] = dilation_infer;
  j["ffn_ratio"] = ffn_ratio;
  j["reset_candidates_between_blocks"] = reset_candidates_between_blocks;
  j["expand_in_block"] = schedule.expand_in_block;
  j["k1"] = schedule.k1;
  j["k2"] = schedule.k2;
  j["rho"] = schedule.keep_fraction;
  j["k_min"] = schedule.k_min;
  j["k_out_max"] = schedule.k_out_max;
  j["lr"] = lr;
  j["beta1"] = beta1;
  j["beta2"] = beta2;
  j["adam_eps"] = adam_eps;
  j["warmup_steps"] = warmup_steps;
  return j.dump(2);
}

ModelConfig ModelConfig::from_json(const std::string& text) {
  json j;
  try {
    j = json::parse(text);
  } catch (const json::parse_error& e) {
    throw ParseError(std::string("config json: ") + e.what(),
                     static_cast<size_t>(e.byte));
  }
  ModelConfig c;
  c.blocks = j.value("blocks", c.blocks);
  c.layers_per_block = j.value("layers_per_block", c.layers_per_block);
  c.heads = j.value("heads", c.heads);
  c.channels = j.value("channels", c.channels);
  c.scale = j.value("scale", c.scale);
  c.window = j.value("window", c.window);
  c.dilation_train = j.value("dilation_train", c.dilation_train);
  c.dilation_infer = j.value("dilation_infer", c.dilation_infer);
  c.ffn_ratio = j.value("ffn_ratio", c.ffn_ratio);
  c.reset_candidates_between_blocks =
      j.value("reset_candidates_between_blocks", false);
  if (j.contains("expand_in_block")) {
    c.schedule.expand_in_block =
        j["expand_in_block"].get<std::vector<uint8_t>>();
    c.schedule.k1 = j["k1"].get<std::vector<int32_t>>();
    c.schedule.k2 = j["k2"].get<std::vector<int32_t>>();
  }
  c.schedule.keep_fraction = j.value("rho", c.schedule.keep_fraction);
  c.schedule.k_min = j.value("k_min", c.schedule.k_min);
  c.schedule.k_out_max = j.value("k_out_max", c.schedule.k_out_max);
  c.lr = j.value("lr", c.lr);
  c.beta1 = j.value("beta1", c.beta1);
  c.beta2 = j.value("beta2", c.beta2);
  c.adam_eps = j.value("adam_eps", c.adam_eps);
  c.warmup_steps = j.value("warmup_steps", c.warmup_steps);
  c.finalize();
  return c;
}

namespace {

template <typename P, typename F>
void visit_params(P& p, const F& fn) {
  fn("head.w", p.head_w);
  fn("head.b", p.head_b);
  for (size_t b = 0; b < p.blocks.size(); ++b) {
    auto& blk = p.blocks[b];
    const std::string bp = "block" + std::to_string(b) + ".";
    for (size_t l = 0; l < blk.layers.size(); ++l) {
      auto& ly = blk.layers[l];
      const std::string lp = bp + "layer" + std::to_string(l) + ".";
      fn(lp + "ln1.gamma", ly.ln1_gamma);
      fn(lp + "ln1.beta", ly.ln1_beta);
      fn(lp + "attn.w_q", ly.attn.w_q);
      fn(lp + "attn.w_k", ly.attn.w_k);
      fn(lp + "attn.w_v", ly.attn.w_v);
      fn(lp + "attn.w_o", ly.attn.w_o);
      if (ly.attn.rel_bias.numel() > 0) fn(lp + "attn.rel_bias", ly.attn.rel_bias);
      if (ly.attn.lepe_w.numel() > 0) fn(lp + "attn.lepe", ly.attn.lepe_w);
      fn(lp + "ln2.gamma", ly.ln2_gamma);
      fn(lp + "ln2.beta", ly.ln2_beta);
      fn(lp + "ffn.in", ly.ffn.headwise_in);
      fn(lp + "ffn.out", ly.ffn.headwise_out);
      fn(lp + "ffn.dw", ly.ffn.dw);
    }
    fn(bp + "conv.w", blk.conv_w);
    fn(bp + "conv.b", blk.conv_b);
  }
  fn("body.w", p.body_w);
  fn("body.b", p.body_b);
  fn("tail.w", p.tail_w);
  fn("tail.b", p.tail_b);
}

ModelParams make_params(const ModelConfig& cfg) {
  const int64_t c = cfg.channels;
  const int64_t d = c / cfg.heads;
  const int64_t rd = static_cast<int64_t>(cfg.ffn_ratio) * d;
  ModelParams p;
  p.head_w = Tensor({3, 3, 3, c});
  p.head_b = Tensor({c});
  p.blocks.resize(static_cast<size_t>(cfg.blocks));
  for (int32_t b = 0; b < cfg.blocks; ++b) {
    auto& blk = p.blocks[static_cast<size_t>(b)];
    blk.layers.resize(static_cast<size_t>(cfg.layers_per_block));
    for (int32_t l = 0; l < cfg.layers_per_block; ++l) {
      auto& ly = blk.layers[static_cast<size_t>(l)];
      ly.ln1_gamma = Tensor({c});
      ly.ln1_beta = Tensor({c});
      ly.ln2_gamma = Tensor({c});
      ly.ln2_beta = Tensor({c});
      ly.attn.w_q = Tensor({c, c});
      ly.attn.w_k = Tensor({c, c});
      ly.attn.w_v = Tensor({c, c});
      ly.attn.w_o = Tensor({c, c});
      ly.attn.heads = cfg.heads;
      ly.attn.window = cfg.window;
      if (b == 0) {
        const int64_t slots =
            (2 * cfg.window - 1) * (2 * cfg.window - 1) + 1;
        ly.attn.rel_bias = Tensor({cfg.heads, slots});
      } else {
        ly.attn.lepe_w = Tensor({3, 3, c});
      }
      ly.ffn.heads = cfg.heads;
      ly.ffn.ratio = cfg.ffn_ratio;
      ly.ffn.headwise_in = Tensor({cfg.heads, 2 * d, rd});
      ly.ffn.headwise_out = Tensor({cfg.heads, rd, d});
      ly.ffn.dw = Tensor({3, 3, c});
    }
    blk.conv_w = Tensor({3, 3, c, c});
    blk.conv_b = Tensor({c});
  }
  p.body_w = Tensor({3, 3, c, c});
  p.body_b = Tensor({c});
  const int64_t out_c = 3 * static_cast<int64_t>(cfg.scale) * cfg.scale;
  p.tail_w = Tensor({3, 3, c, out_c});
  p.tail_b = Tensor({out_c});
  return p;
}

bool ends_with(const std::string& s, const std::string& suf) {
  return s.size() >= suf.size() &&
         s.compare(s.size() - suf.size(), suf.size(), suf) == 0;
}

// Residual-feeding maps and all bias-like tables start at zero; LN gains at
// one; everything else truncated normal.
enum class InitKind { kZero, kOne, kTruncNormal };

InitKind init_kind(const std::string& name) {
  if (ends_with(name, "gamma")) return InitKind::kOne;
  if (ends_with(name, "beta") || ends_with(name, ".b")) return InitKind::kZero;
  if (ends_with(name, "w_o") || ends_with(name, "rel_bias") ||
      ends_with(name, "lepe") || ends_with(name, "ffn.dw"))
    return InitKind::kZero;
  return InitKind::kTruncNormal;
}

}  // namespace

void for_each_param(ModelParams& p,
                    const std::function<void(const std::string&, Tensor&)>& fn) {
  visit_params(p, fn);
}

void for_each_param(
    const ModelParams& p,
    const std::function<void(const std::string&, const Tensor&)>& fn) {
  visit_params(p, fn);
}

int64_t TrainState::param_count() const {
  int64_t n = 0;
  for_each_param(params, [&n](const std::string&, const Tensor& t) {
    n += t.numel();
  });
  return n;
}

TrainState build_model(const ModelConfig& cfg, uint64_t seed) {
  ModelConfig c = cfg;
  c.finalize();
  TrainState st;
  st.cfg = c;
  st.seed = seed;
  st.params = make_params(c);
  st.moment1 = make_params(c);
  st.moment2 = make_params(c);
  Rng rng(seed);
  for_each_param(st.params, [&rng](const std::string& name, Tensor& t) {
    switch (init_kind(name)) {
      case InitKind::kZero:
        break;  // already zeros
      case InitKind::kOne:
        for (double& v : t.vec()) v = 1.0;
        break;
      case InitKind::kTruncNormal:
        for (double& v : t.vec()) v = rng.trunc_normal(0.02);
        break;
    }
  });
  return st;
}

// ---------------------------------------------------------------------------
// forward / backward

struct ForwardCache {
  Tensor lr_grid;
  Tensor head_tokens;
  struct LayerCache {
    Tensor x_in;   // pre-LN1 tokens
    attn::LayerSave attn_save;
    Tensor x_mid;  // post-attention residual, pre-LN2
    ffn::FfnSave ffn_save;
  };
  struct BlockCache {
    Tensor block_in;
    std::vector<LayerCache> layers;
    Tensor conv_in;  // tokens entering the block conv
  };
  std::vector<BlockCache> blocks;
  Tensor body_in;
  Tensor skip_sum;
  int32_t height = 0, width = 0;
  int32_t dilation = 1;
};

namespace {

// Smallest sorted-score gap at every discrete cut this layer makes.
double layer_selection_margin(const attn::LayerForward& lf,
                              const attn::LayerPlan& plan) {
  double margin = 1e300;
  const graph::CandidateSet& i_in = lf.save.i_in;
  const graph::CandidateSet& i_s = lf.i_s;
  const int64_t n = i_in.tokens();
  const int64_t k_in = i_in.k_max();
  const int64_t k_s_w = lf.a_s.dim(1);
  std::vector<double> row;
  for (int64_t i = 0; i < n; ++i) {
    const int32_t len = i_in.length(static_cast<int32_t>(i));
    const int32_t ks = i_s.length(static_cast<int32_t>(i));
    if (ks < len) {
      row.assign(lf.save.sel.data() + i * k_in,
                 lf.save.sel.data() + i * k_in + len);
      std::nth_element(row.begin(), row.begin() + (ks - 1), row.end(),
                       std::greater<double>());
      const double kth = row[static_cast<size_t>(ks - 1)];
      std::nth_element(row.begin(), row.begin() + ks, row.end(),
                       std::greater<double>());
      margin = std::min(margin, kth - row[static_cast<size_t>(ks)]);
    }
    // Surviving scores are already sorted descending.
    const double* srow = lf.a_s.data() + i * k_s_w;
    if (plan.expand) {
      if (plan.k1 < ks) margin = std::min(margin, srow[plan.k1 - 1] - srow[plan.k1]);
      if (plan.k2 < ks) margin = std::min(margin, srow[plan.k2 - 1] - srow[plan.k2]);
    }
    // most-similar-neighbor argmax gap (self excluded)
    auto cand = i_s.row(static_cast<int32_t>(i));
    double best = -1.0, second = -1.0;
    for (int32_t t = 0; t < ks; ++t) {
      if (cand[static_cast<size_t>(t)] == static_cast<int32_t>(i)) continue;
      const double v = srow[t];
      if (v > best) {
        second = best;
        best = v;
      } else if (v > second) {
        second = v;
      }
    }
    if (second >= 0.0) margin = std::min(margin, best - second);
  }
  return margin;
}

attn::LayerPlan plan_for(const ModelConfig& cfg, int32_t block, int32_t layer) {
  attn::LayerPlan plan;
  plan.sparsify_enabled = true;
  plan.keep_fraction = cfg.schedule.keep_fraction;
  plan.k_min = cfg.schedule.k_min;
  plan.k_out_max = cfg.schedule.k_out_max;
  const bool last_layer = layer == cfg.layers_per_block - 1;
  if (last_layer && cfg.schedule.expand_in_block[static_cast<size_t>(block)]) {
    plan.expand = true;
    plan.k1 = cfg.schedule.k1[static_cast<size_t>(block)];
    plan.k2 = cfg.schedule.k2[static_cast<size_t>(block)];
  }
  return plan;
}

Tensor run_forward(const TrainState& state, const Tensor& lr_image,
                   int32_t dilation, ForwardTrace* trace, ForwardCache* cache) {
  const ModelConfig& cfg = state.cfg;
  if (lr_image.rank() != 3 || lr_image.dim(2) != 3)
    throw DimensionError("forward expects an [H x W x 3] image tensor");
  if (dilation < 1) throw ConfigError("dilation must be >= 1");
  const int32_t h = static_cast<int32_t>(lr_image.dim(0));
  const int32_t w = static_cast<int32_t>(lr_image.dim(1));
  if (cfg.window > std::min(h, w))
    throw ConfigError("window exceeds input extent");
  const graph::GridGeom geom{h, w};
  const int64_t n = geom.tokens();
  const int64_t c = cfg.channels;
  FlopCount local_flops;
  FlopCount* fl = trace ? &trace->flops : &local_flops;

  Tensor head_grid = ops::conv3x3(lr_image, state.params.head_w, state.params.head_b);
  fl->conv += 2 * 9 * n * 3 * c;
  Tensor x = head_grid.reshaped({n, c});

  if (cache) {
    cache->lr_grid = lr_image;
    cache->head_tokens = x;
    cache->blocks.resize(static_cast<size_t>(cfg.blocks));
    cache->height = h;
    cache->width = w;
    cache->dilation = dilation;
  }

  graph::CandidateSet cands = graph::dlsg_init(geom, cfg.window, dilation);
  const Tensor x0 = x;

  for (int32_t b = 0; b < cfg.blocks; ++b) {
    if (cfg.reset_candidates_between_blocks && b > 0)
      cands = graph::dlsg_init(geom, cfg.window, dilation);
    const auto& blk = state.params.blocks[static_cast<size_t>(b)];
    Tensor block_in = x;
    if (cache) cache->blocks[static_cast<size_t>(b)].block_in = block_in;
    for (int32_t l = 0; l < cfg.layers_per_block; ++l) {
      const auto& ly = blk.layers[static_cast<size_t>(l)];
      const attn::LayerPlan plan = plan_for(cfg, b, l);
      const uint64_t in_hash = trace ? cands.content_hash() : 0;

      Tensor u = ops::layer_norm(x, ly.ln1_gamma, ly.ln1_beta);
      fl->norm += 8 * n * c;
      attn::LayerForward lf =
          attn::iea_layer_forward(u, ly.attn, cands, plan, geom, fl);
      Tensor x_mid = ops::add(x, lf.y);

      Tensor v2 = ops::layer_norm(x_mid, ly.ln2_gamma, ly.ln2_beta);
      fl->norm += 8 * n * c;
      ffn::FfnSave* fsave = nullptr;
      ForwardCache::LayerCache* lc = nullptr;
      if (cache) {
        auto& bc = cache->blocks[static_cast<size_t>(b)];
        bc.layers.emplace_back();
        lc = &bc.layers.back();
        lc->x_in = x;
        lc->x_mid = x_mid;
        fsave = &lc->ffn_save;
      }
      Tensor core = ffn::sf_ffn_core(v2, lf.i_highest, ly.ffn, geom, fsave, fl);
      x = ops::add(x_mid, core);

      if (trace) {
        trace->min_selection_margin =
            std::min(trace->min_selection_margin,
                     layer_selection_margin(lf, plan));
        LayerTrace lt;
        lt.block = b;
        lt.layer = l;
        lt.i_in_hash = in_hash;
        lt.i_s_hash = lf.i_s.content_hash();
        lt.i_next_hash = lf.i_next.content_hash();
        lt.expanded = plan.expand;
        if (trace->keep_sets) {
          lt.i_s = lf.i_s;
          lt.i_next = lf.i_next;
        }
        trace->layers.push_back(std::move(lt));
      }
      if (lc) lc->attn_save = std::move(lf.save);
      cands = std::move(lf.i_next);
    }
    Tensor conv_in = x;
    Tensor conv_out =
        ops::conv3x3(conv_in.reshaped({h, w, c}), blk.conv_w, blk.conv_b)
            .reshaped({n, c});
    fl->conv += 2 * 9 * n * c * c;
    x = ops::add(block_in, conv_out);
    if (cache) cache->blocks[static_cast<size_t>(b)].conv_in = std::move(conv_in);
  }

  if (cache) cache->body_in = x;
  Tensor body_out =
      ops::conv3x3(x.reshaped({h, w, c}), state.params.body_w, state.params.body_b)
          .reshaped({n, c});
  fl->conv += 2 * 9 * n * c * c;
  Tensor skip = ops::add(x0, body_out);
  if (cache) cache->skip_sum = skip;

  Tensor tail =
      ops::conv3x3(skip.reshaped({h, w, c}), state.params.tail_w, state.params.tail_b);
  fl->conv += 2 * 9 * n * c * state.params.tail_w.dim(3);
  Tensor sr = ops::pixel_shuffle(tail, cfg.scale);
  sr.check_finite("model forward");
  return sr;
}

}  // namespace

Tensor forward(const TrainState& state, const Tensor& lr_image,
               int32_t dilation, ForwardTrace* trace, ForwardCache* cache) {
  return run_forward(state, lr_image, dilation, trace, cache);
}

double loss_and_grads(const TrainState& state, const Tensor& lr_image,
                      const Tensor& hr_image, int32_t dilation,
                      ModelGrads& grads, ForwardTrace* trace) {
  const ModelConfig& cfg = state.cfg;
  ForwardCache cache;
  Tensor sr = run_forward(state, lr_image, dilation, trace, &cache);
  if (!sr.same_shape(hr_image))
    throw DimensionError("loss: hr shape must be scale x lr shape");

  const int64_t m = sr.numel();
  double loss = 0.0;
  Tensor dsr(sr.shape());
  {
    const double* ps = sr.data();
    const double* ph = hr_image.data();
    double* pd = dsr.data();
    const double inv_m = 1.0 / static_cast<double>(m);
    for (int64_t i = 0; i < m; ++i) {
      const double r = ps[i] - ph[i];
      loss += std::abs(r);
      pd[i] = r > 0.0 ? inv_m : (r < 0.0 ? -inv_m : 0.0);  // sign(0) = 0
    }
    loss *= inv_m;
  }

  grads.g = make_params(cfg);
  ModelParams& g = grads.g;
  const int32_t h = cache.height, w = cache.width;
  const int64_t n = static_cast<int64_t>(h) * w;
  const int64_t c = cfg.channels;
  const graph::GridGeom geom{h, w};

  Tensor dtail = ops::pixel_unshuffle(dsr, cfg.scale);
  Tensor dskip_grid;
  ops::conv3x3_backward(cache.skip_sum.reshaped({h, w, c}), state.params.tail_w,
                        dtail, dskip_grid, g.tail_w, g.tail_b);
  Tensor dskip = dskip_grid.reshaped({n, c});

  // skip_sum = head_tokens + conv_after_body(body_in)
  Tensor dx0 = dskip;
  Tensor dbody_in_grid;
  ops::conv3x3_backward(cache.body_in.reshaped({h, w, c}), state.params.body_w,
                        dskip_grid, dbody_in_grid, g.body_w, g.body_b);
  Tensor dx = dbody_in_grid.reshaped({n, c});

  for (int32_t b = cfg.blocks - 1; b >= 0; --b) {
    const auto& blk = state.params.blocks[static_cast<size_t>(b)];
    auto& gblk = g.blocks[static_cast<size_t>(b)];
    auto& bc = cache.blocks[static_cast<size_t>(b)];

    Tensor dblock_residual = dx;
    Tensor dconv_in_grid;
    ops::conv3x3_backward(bc.conv_in.reshaped({h, w, c}), blk.conv_w,
                          dx.reshaped({h, w, c}), dconv_in_grid, gblk.conv_w,
                          gblk.conv_b);
    Tensor dcur = dconv_in_grid.reshaped({n, c});

    for (int32_t l = cfg.layers_per_block - 1; l >= 0; --l) {
      const auto& ly = blk.layers[static_cast<size_t>(l)];
      auto& gly = gblk.layers[static_cast<size_t>(l)];
      auto& lc = bc.layers[static_cast<size_t>(l)];

      // x2 = x1 + ffn_core(LN2(x1))
      ffn::FfnGrads fg = ffn::sf_ffn_core_backward(dcur, ly.ffn, lc.ffn_save, geom);
      gly.ffn.headwise_in = std::move(fg.dheadwise_in);
      gly.ffn.headwise_out = std::move(fg.dheadwise_out);
      gly.ffn.dw = std::move(fg.ddw);
      Tensor dx1_ln;
      ops::layer_norm_backward(lc.x_mid, ly.ln2_gamma, fg.dx, dx1_ln,
                               gly.ln2_gamma, gly.ln2_beta);
      Tensor dx1 = ops::add(dcur, dx1_ln);

      // x1 = x + attn(LN1(x))
      attn::LayerGrads ag =
          attn::iea_layer_backward(dx1, ly.attn, lc.attn_save, geom);
      gly.attn.w_q = std::move(ag.dw_q);
      gly.attn.w_k = std::move(ag.dw_k);
      gly.attn.w_v = std::move(ag.dw_v);
      gly.attn.w_o = std::move(ag.dw_o);
      if (ly.attn.rel_bias.numel() > 0)
        gly.attn.rel_bias = std::move(ag.drel_bias);
      if (ly.attn.lepe_w.numel() > 0) gly.attn.lepe_w = std::move(ag.dlepe_w);
      Tensor dx_ln;
      ops::layer_norm_backward(lc.x_in, ly.ln1_gamma, ag.dx, dx_ln,
                               gly.ln1_gamma, gly.ln1_beta);
      dcur = ops::add(dx1, dx_ln);
    }
    dx = ops::add(dblock_residual, dcur);
  }

  Tensor dhead = ops::add(dx, dx0);
  Tensor dlr_unused;
  ops::conv3x3_backward(cache.lr_grid, state.params.head_w,
                        dhead.reshaped({h, w, c}), dlr_unused, g.head_w,
                        g.head_b);
  return loss;
}

void apply_adam(TrainState& state, const ModelGrads& grads, double loss) {
  if (!std::isfinite(loss))
    throw NumericError("train_step: non-finite loss, aborting");
  const ModelConfig& cfg = state.cfg;
  state.step += 1;
  const double t = static_cast<double>(state.step);
  double lr_t = cfg.lr;
  if (cfg.warmup_steps > 0)
    lr_t *= std::min(1.0, t / static_cast<double>(cfg.warmup_steps));
  const double bc1 = 1.0 - std::pow(cfg.beta1, t);
  const double bc2 = 1.0 - std::pow(cfg.beta2, t);

  // Walk the three parameter trees in lockstep (identical layout).
  std::vector<Tensor*> ps, ms, vs;
  std::vector<const Tensor*> gs;
  for_each_param(state.params, [&ps](const std::string&, Tensor& t_) { ps.push_back(&t_); });
  for_each_param(state.moment1, [&ms](const std::string&, Tensor& t_) { ms.push_back(&t_); });
  for_each_param(state.moment2, [&vs](const std::string&, Tensor& t_) { vs.push_back(&t_); });
  for_each_param(grads.g, [&gs](const std::string&, const Tensor& t_) { gs.push_back(&t_); });
  if (ps.size() != gs.size())
    throw UsageError("apply_adam: gradient tree does not match parameters");

  for (size_t i = 0; i < ps.size(); ++i) {
    double* p = ps[i]->data();
    double* m = ms[i]->data();
    double* v = vs[i]->data();
    const double* gr = gs[i]->data();
    const int64_t count = ps[i]->numel();
    for (int64_t j = 0; j < count; ++j) {
      m[j] = cfg.beta1 * m[j] + (1.0 - cfg.beta1) * gr[j];
      v[j] = cfg.beta2 * v[j] + (1.0 - cfg.beta2) * gr[j] * gr[j];
      const double mhat = m[j] / bc1;
      const double vhat = v[j] / bc2;
      p[j] -= lr_t * mhat / (std::sqrt(vhat) + cfg.adam_eps);
    }
  }
}

double train_step(TrainState& state, const Tensor& lr_image,
                  const Tensor& hr_image, int32_t dilation) {
  ModelGrads grads;
  const double loss = loss_and_grads(state, lr_image, hr_image, dilation, grads);
  apply_adam(state, grads, loss);
  return loss;
}

// ---------------------------------------------------------------------------
// checkpoints

namespace {

constexpr char kCkptMagic[8] = {'I', 'E', 'T', 'C', 'K', 'P', 'T', '1'};

template <typename T>
void write_pod(std::ostream& os, T v) {
  os.write(reinterpret_cast<const char*>(&v), sizeof(T));
}

template <typename T>
T read_pod(std::istream& is, size_t& offset) {
  T v{};
  is.read(reinterpret_cast<char*>(&v), sizeof(T));
  if (!is) throw ParseError("checkpoint truncated", offset);
  offset += sizeof(T);
  return v;
}

}  // namespace

void save_checkpoint(const TrainState& state, const std::string& path) {
  {
    std::ofstream js(path + ".json");
    if (!js) throw IoError("cannot write config sidecar: " + path + ".json");
    js << state.cfg.to_json() << "\n";
  }
  std::ofstream os(path, std::ios::binary);
  if (!os) throw IoError("cannot write checkpoint: " + path);
  os.write(kCkptMagic, 8);
  write_pod<uint32_t>(os, 1);  // version
  write_pod<uint64_t>(os, state.seed);
  write_pod<int64_t>(os, state.step);
  uint32_t count = 0;
  for_each_param(state.params, [&count](const std::string&, const Tensor&) { ++count; });
  write_pod<uint32_t>(os, count);
  for_each_param(state.params, [&os](const std::string& name, const Tensor& t) {
    write_pod<uint32_t>(os, static_cast<uint32_t>(name.size()));
    os.write(name.data(), static_cast<std::streamsize>(name.size()));
    write_pod<uint32_t>(os, static_cast<uint32_t>(t.rank()));
    for (int64_t e : t.shape()) write_pod<int64_t>(os, e);
    os.write(reinterpret_cast<const char*>(t.data()),
             static_cast<std::streamsize>(t.numel() * sizeof(double)));
  });
  if (!os) throw IoError("checkpoint write failed: " + path);
}

TrainState load_checkpoint(const std::string& path) {
  std::ifstream js(path + ".json");
  if (!js) throw IoError("missing config sidecar: " + path + ".json");
  std::string cfg_text((std::istreambuf_iterator<char>(js)),
                       std::istreambuf_iterator<char>());
  ModelConfig cfg = ModelConfig::from_json(cfg_text);

  std::ifstream is(path, std::ios::binary);
  if (!is) throw IoError("cannot open checkpoint: " + path);
  size_t offset = 0;
  char magic[8];
  is.read(magic, 8);
  if (!is || std::memcmp(magic, kCkptMagic, 8) != 0)
    throw ParseError("bad checkpoint magic", 0);
  offset = 8;
  const uint32_t version = read_pod<uint32_t>(is, offset);
  if (version != 1) throw ParseError("unsupported checkpoint version", offset - 4);
  TrainState st = build_model(cfg, 0);
  st.seed = read_pod<uint64_t>(is, offset);
  st.step = read_pod<int64_t>(is, offset);
  const uint32_t count = read_pod<uint32_t>(is, offset);

  std::vector<std::pair<std::string, Tensor*>> slots;
  for_each_param(st.params, [&slots](const std::string& name, Tensor& t) {
    slots.emplace_back(name, &t);
  });
  if (count != slots.size())
    throw ParseError("checkpoint tensor count does not match config", offset - 4);

  for (auto& [expected_name, tensor] : slots) {
    const uint32_t name_len = read_pod<uint32_t>(is, offset);
    if (name_len > 4096) throw ParseError("implausible tensor name length", offset - 4);
    std::string name(name_len, '\0');
    is.read(name.data(), name_len);
    if (!is) throw ParseError("checkpoint truncated in name", offset);
    offset += name_len;
    if (name != expected_name)
      throw ParseError("unexpected tensor '" + name + "', wanted '" +
                           expected_name + "'", offset - name_len);
    const uint32_t rank = read_pod<uint32_t>(is, offset);
    if (rank != tensor->rank())
      throw ParseError("tensor '" + name + "' rank mismatch", offset - 4);
    for (size_t r = 0; r < rank; ++r) {
      const int64_t e = read_pod<int64_t>(is, offset);
      if (e != tensor->shape()[r])
        throw ParseError("tensor '" + name + "' extent mismatch", offset - 8);
    }
    is.read(reinterpret_cast<char*>(tensor->data()),
            static_cast<std::streamsize>(tensor->numel() * sizeof(double)));
    if (!is) throw ParseError("checkpoint truncated in data", offset);
    offset += static_cast<size_t>(tensor->numel()) * sizeof(double);
    tensor->check_finite(name.c_str());
  }
  return st;
}

}  // namespace iet::net
