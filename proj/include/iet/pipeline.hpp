#pragma once

#include <cstdint>
#include <string>
#include <vector>

#include "iet/image.hpp"
#include "iet/model.hpp"

namespace iet::pipe {

// Per-run evaluation summary, emitted as text lines and as JSON.
struct EvalReport {
  std::vector<double> per_image_psnr;
  double mean_psnr = 0.0;
  double baseline_psnr = 0.0;  // bicubic upscale reference, when relevant
  double final_loss = 0.0;
  double runtime_seconds = 0.0;
  int64_t steps = 0;
  int64_t flops = 0;
  std::vector<double> loss_curve;  // optional per-step losses

  std::string to_text() const;
  std::string to_json() const;
  void write_json(const std::string& path) const;
};

// One training sample: a HR crop plus its bicubic-downscaled LR partner.
struct PatchPair {
  img::Image lr;
  img::Image hr;
};

// Deterministic crops of `size` x `size` HR pixels on a stride grid,
// shuffled by the seed (seed 0 keeps scan order). size must be a multiple
// of scale; the LR partner is the pinned bicubic 1/scale downscale.
std::vector<PatchPair> extract_patches(const img::Image& hr, int32_t size,
                                       int32_t stride, int32_t scale,
                                       uint64_t seed);

// Trains a fresh model on one LR/HR pair for `steps` deterministic steps and
// reports the PSNR trajectory against the bicubic baseline on that patch.
EvalReport overfit_run(const net::ModelConfig& cfg, const PatchPair& patch,
                       int32_t steps, uint64_t seed,
                       net::TrainState* out_state = nullptr);

// PSNR of `state` run at `dilation` on the given pair (evaluation clamps).
double eval_psnr(const net::TrainState& state, const PatchPair& patch,
                 int32_t dilation);

// Deterministic synthetic RGB texture (edges, ramps, and disks) used by the
// toy training commands and tests when no image is supplied.
img::Image synthetic_texture(int32_t height, int32_t width, uint64_t seed);

}  // namespace iet::pipe
