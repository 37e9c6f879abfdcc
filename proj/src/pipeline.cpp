#include "iet/pipeline.hpp"

#include <algorithm>
#include <chrono>
#include <cmath>
#include <fstream>
#include <sstream>

#include <nlohmann/json.hpp>

#include "iet/rng.hpp"

namespace iet::pipe {

using json = nlohmann::json;

std::string EvalReport::to_text() const {
  std::ostringstream os;
  os << "steps " << steps << "\n";
  os << "final_loss " << final_loss << "\n";
  for (size_t i = 0; i < per_image_psnr.size(); ++i)
    os << "psnr[" << i << "] " << per_image_psnr[i] << " dB\n";
  os << "mean_psnr " << mean_psnr << " dB\n";
  if (baseline_psnr != 0.0) os << "baseline_psnr " << baseline_psnr << " dB\n";
  os << "runtime_seconds " << runtime_seconds << "\n";
  os << "flops " << flops << "\n";
  return os.str();
}

std::string EvalReport::to_json() const {
  json j;
  j["steps"] = steps;
  j["final_loss"] = final_loss;
  j["per_image_psnr"] = per_image_psnr;
  j["mean_psnr"] = mean_psnr;
  j["baseline_psnr"] = baseline_psnr;
  j["runtime_seconds"] = runtime_seconds;
  j["flops"] = flops;
  if (!loss_curve.empty()) j["loss_curve"] = loss_curve;
  return j.dump(2);
}

void EvalReport::write_json(const std::string& path) const {
  std::ofstream os(path);
  if (!os) throw IoError("cannot write report: " + path);
  os << to_json() << "\n";
}

std::vector<PatchPair> extract_patches(const img::Image& hr, int32_t size,
                                       int32_t stride, int32_t scale,
                                       uint64_t seed) {
  if (size < 1 || stride < 1) throw ConfigError("patch size/stride must be >= 1");
  if (size % scale != 0)
    throw ConfigError("patch size must be a multiple of the scale");
  if (size > hr.height || size > hr.width)
    throw ConfigError("patch larger than image");

  std::vector<std::pair<int32_t, int32_t>> origins;
  for (int32_t y = 0; y + size <= hr.height; y += stride)
    for (int32_t x = 0; x + size <= hr.width; x += stride)
      origins.emplace_back(y, x);

  if (seed != 0) {
    Rng rng(seed);
    for (size_t i = origins.size(); i > 1; --i)
      std::swap(origins[i - 1], origins[rng.below(i)]);
  }

  std::vector<PatchPair> out;
  out.reserve(origins.size());
  for (auto [y, x] : origins) {
    PatchPair p;
    p.hr.height = size;
    p.hr.width = size;
    p.hr.data.resize(static_cast<size_t>(size) * size * 3);
    for (int32_t r = 0; r < size; ++r)
      for (int32_t c = 0; c < size; ++c)
        for (int32_t ch = 0; ch < 3; ++ch)
          p.hr.at(r, c, ch) = hr.at(y + r, x + c, ch);
    p.lr = img::bicubic_resize(p.hr, 1, scale);
    out.push_back(std::move(p));
  }
  return out;
}

double eval_psnr(const net::TrainState& state, const PatchPair& patch,
                 int32_t dilation) {
  Tensor sr = net::forward(state, patch.lr.to_tensor(), dilation);
  img::Image sr_img = img::Image::from_tensor(sr, /*clamp=*/true);
  return img::psnr(sr_img, patch.hr);
}

EvalReport overfit_run(const net::ModelConfig& cfg, const PatchPair& patch,
                       int32_t steps, uint64_t seed,
                       net::TrainState* out_state) {
  const auto t0 = std::chrono::steady_clock::now();
  net::TrainState state = net::build_model(cfg, seed);
  Tensor lr = patch.lr.to_tensor();
  Tensor hr = patch.hr.to_tensor();

  EvalReport report;
  report.steps = steps;
  report.loss_curve.reserve(static_cast<size_t>(steps));
  for (int32_t s = 0; s < steps; ++s) {
    const double loss = net::train_step(state, lr, hr, cfg.dilation_train);
    report.loss_curve.push_back(loss);
  }
  report.final_loss = report.loss_curve.empty() ? 0.0 : report.loss_curve.back();

  net::ForwardTrace trace;
  Tensor sr = net::forward(state, lr, cfg.dilation_infer, &trace);
  report.flops = trace.flops.total();
  img::Image sr_img = img::Image::from_tensor(sr, /*clamp=*/true);
  report.per_image_psnr.push_back(img::psnr(sr_img, patch.hr));
  report.mean_psnr = report.per_image_psnr[0];

  img::Image bicubic_up = img::bicubic_resize(patch.lr, cfg.scale, 1);
  report.baseline_psnr = img::psnr(bicubic_up, patch.hr);

  report.runtime_seconds =
      std::chrono::duration<double>(std::chrono::steady_clock::now() - t0)
          .count();
  if (out_state) *out_state = std::move(state);
  return report;
}

img::Image synthetic_texture(int32_t height, int32_t width, uint64_t seed) {
  Rng rng(seed);
  img::Image img;
  img.height = height;
  img.width = width;
  img.data.assign(static_cast<size_t>(height) * width * 3, 0.0);

  // Smooth ramps as a base.
  const double ph = rng.uniform(0.0, 6.283);
  for (int32_t y = 0; y < height; ++y)
    for (int32_t x = 0; x < width; ++x) {
      img.at(y, x, 0) = 0.5 + 0.3 * std::sin(0.19 * x + ph);
      img.at(y, x, 1) = 0.5 + 0.3 * std::sin(0.13 * y + 0.7 * ph);
      img.at(y, x, 2) =
          0.5 + 0.25 * std::sin(0.11 * (x + y) + 1.3 * ph);
    }
  // Sharp disks and bars give the SR model edges worth learning.
  const int32_t disks = 3 + static_cast<int32_t>(rng.below(3));
  for (int32_t k = 0; k < disks; ++k) {
    const double cy = rng.uniform(0.2, 0.8) * height;
    const double cx = rng.uniform(0.2, 0.8) * width;
    const double rad = rng.uniform(0.08, 0.22) * std::min(height, width);
    const double v[3] = {rng.uniform(), rng.uniform(), rng.uniform()};
    for (int32_t y = 0; y < height; ++y)
      for (int32_t x = 0; x < width; ++x) {
        const double dy = y - cy, dx = x - cx;
        if (dy * dy + dx * dx <= rad * rad)
          for (int c = 0; c < 3; ++c) img.at(y, x, c) = v[c];
      }
  }
  const int32_t bar = 2 + static_cast<int32_t>(rng.below(3));
  for (int32_t y = 0; y < height; ++y)
    for (int32_t x = 0; x < width; ++x)
      if ((x / bar) % 2 == 0 && y < height / 3)
        img.at(y, x, 0) = 0.9, img.at(y, x, 1) = 0.1;
  for (double& v : img.data) v = std::clamp(v, 0.0, 1.0);
  return img;
}

}  // namespace iet::pipe
