#pragma once

#include <cstdint>
#include <functional>
#include <string>
#include <vector>

#include "iet/attention.hpp"
#include "iet/candidates.hpp"
#include "iet/flops.hpp"
#include "iet/sf_ffn.hpp"
#include "iet/tensor.hpp"

namespace iet::net {

// Architecture and training hyperparameters.
struct ModelConfig {
  int32_t blocks = 2;
  int32_t layers_per_block = 2;
  int32_t heads = 2;
  int32_t channels = 16;
  int32_t scale = 2;
  int32_t window = 3;
  int32_t dilation_train = 2;
  int32_t dilation_infer = 3;
  int32_t ffn_ratio = 2;
  bool reset_candidates_between_blocks = false;
  graph::ExpansionSchedule schedule;  // sized to `blocks` by finalize()

  // optimizer
  double lr = 2e-3;
  double beta1 = 0.9;
  double beta2 = 0.99;
  double adam_eps = 1e-8;
  int32_t warmup_steps = 50;

  // Fills an empty schedule with the block-truncated default and validates
  // everything. Call after mutating fields by hand.
  void finalize();
  void validate() const;
  std::string to_json() const;
  static ModelConfig from_json(const std::string& text);
};

struct LayerParams {
  Tensor ln1_gamma, ln1_beta;
  Tensor ln2_gamma, ln2_beta;
  attn::AttnParams attn;
  ffn::SfFfnParams ffn;
};

struct BlockParams {
  std::vector<LayerParams> layers;
  Tensor conv_w, conv_b;  // trailing 3x3 conv inside the block residual
};

struct ModelParams {
  Tensor head_w, head_b;  // 3 -> C
  std::vector<BlockParams> blocks;
  Tensor body_w, body_b;  // C -> C after the block stack
  Tensor tail_w, tail_b;  // C -> 3*s^2 before pixel shuffle
};

// Visits every parameter tensor with a stable dotted name; the same order
// every call, which the optimizer and checkpoint format both rely on.
void for_each_param(ModelParams& p,
                    const std::function<void(const std::string&, Tensor&)>& fn);
void for_each_param(const ModelParams& p,
                    const std::function<void(const std::string&, const Tensor&)>& fn);

struct TrainState {
  ModelConfig cfg;
  ModelParams params;
  ModelParams moment1, moment2;  // Adam buffers, parameter-shaped
  int64_t step = 0;
  uint64_t seed = 0;

  int64_t param_count() const;
};

// Deterministic initialization from the seed: truncated normal (std 0.02)
// for linear/conv weights, zeros for biases and for the maps feeding the
// residual joins (w_o, sf-ffn dw) so every layer starts as the identity.
TrainState build_model(const ModelConfig& cfg, uint64_t seed);

// Per-layer candidate bookkeeping recorded during a forward pass.
struct LayerTrace {
  int32_t block = 0;
  int32_t layer = 0;
  uint64_t i_in_hash = 0;
  uint64_t i_s_hash = 0;
  uint64_t i_next_hash = 0;
  bool expanded = false;
  graph::CandidateSet i_s;    // populated only when keep_sets
  graph::CandidateSet i_next;
};

struct ForwardTrace {
  bool keep_sets = false;
  std::vector<LayerTrace> layers;
  FlopCount flops;
  // Smallest score gap at any discrete selection boundary (sparsify cut,
  // expansion fan-out cuts, most-similar-neighbor argmax) seen during the
  // pass. Finite-difference tests require this to dominate the probe step;
  // a tiny margin means a top-k choice could flip under perturbation.
  double min_selection_margin = 1e300;
};

// Saved activations for one full forward, consumed by the backward pass.
struct ForwardCache;

// Full SR forward: conv head, candidate-threaded IEA/SF-FFN blocks with
// pre-norm residuals, long skip, conv tail, pixel shuffle. The output is
// unclamped; clamp only when quantizing for evaluation or export.
Tensor forward(const TrainState& state, const Tensor& lr_image,
               int32_t dilation, ForwardTrace* trace = nullptr,
               ForwardCache* cache = nullptr);

struct ModelGrads {
  ModelParams g;  // parameter-shaped gradients
};

// Mean absolute error over all pixels/channels plus exact gradients for
// every parameter. hr must be scale x the lr extent.
double loss_and_grads(const TrainState& state, const Tensor& lr_image,
                      const Tensor& hr_image, int32_t dilation,
                      ModelGrads& grads, ForwardTrace* trace = nullptr);

// One adaptive-moment update (beta1/beta2/eps/lr from cfg, linear warmup).
// Aborts with NumericError if the supplied loss is non-finite.
void apply_adam(TrainState& state, const ModelGrads& grads, double loss);

// Convenience: loss_and_grads + apply_adam.
double train_step(TrainState& state, const Tensor& lr_image,
                  const Tensor& hr_image, int32_t dilation);

// Versioned binary checkpoint of the named parameter tensors, with a JSON
// config sidecar at <path>.json. Loading validates every shape.
void save_checkpoint(const TrainState& state, const std::string& path);
TrainState load_checkpoint(const std::string& path);

}  // namespace iet::net
