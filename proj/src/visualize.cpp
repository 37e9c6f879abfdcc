#include "iet/visualize.hpp"

#include <algorithm>
#include <set>

namespace iet::viz {

namespace {

constexpr double kBackground[3] = {0.12, 0.12, 0.14};
constexpr double kKept[3] = {0.85, 0.15, 0.12};
constexpr double kAdded[3] = {0.95, 0.55, 0.10};
constexpr double kQuery[3] = {0.15, 0.85, 0.25};
constexpr double kWindow[3] = {0.95, 0.90, 0.15};

void fill_cell(img::Image& im, int32_t ty, int32_t tx, int32_t px,
               const double rgb[3]) {
  for (int32_t y = ty * px; y < (ty + 1) * px; ++y)
    for (int32_t x = tx * px; x < (tx + 1) * px; ++x)
      for (int c = 0; c < 3; ++c) im.at(y, x, c) = rgb[c];
}

}  // namespace

img::Image render_candidates(const graph::CandidateSet& kept,
                             const graph::CandidateSet& added,
                             graph::GridGeom geom, int32_t query_r,
                             int32_t query_c) {
  if (geom.tokens() != kept.tokens())
    throw DimensionError("visualize: geometry does not match candidate set");
  if (query_r < 0 || query_r >= geom.height || query_c < 0 ||
      query_c >= geom.width)
    throw ConfigError("visualize: query token out of bounds");
  const int32_t px = std::clamp(512 / std::max(geom.height, geom.width), 3, 16);
  img::Image im;
  im.height = geom.height * px;
  im.width = geom.width * px;
  im.data.resize(static_cast<size_t>(im.height) * im.width * 3);
  for (int32_t y = 0; y < geom.height; ++y)
    for (int32_t x = 0; x < geom.width; ++x) fill_cell(im, y, x, px, kBackground);

  const int32_t query = geom.token_at(query_r, query_c);
  auto kept_row = kept.row(query);
  std::set<int32_t> kept_set(kept_row.begin(), kept_row.end());
  auto added_row = added.row(query);
  for (int32_t tok : added_row) {
    if (kept_set.count(tok)) continue;
    fill_cell(im, tok / geom.width, tok % geom.width, px, kAdded);
  }
  for (int32_t tok : kept_row)
    fill_cell(im, tok / geom.width, tok % geom.width, px, kKept);
  fill_cell(im, query_r, query_c, px, kQuery);

  // 32x32 reference window outline, clamped into the grid.
  const int32_t half = 16;
  int32_t r0 = std::clamp(query_r - half, 0, std::max(0, geom.height - 32));
  int32_t c0 = std::clamp(query_c - half, 0, std::max(0, geom.width - 32));
  const int32_t r1 = std::min(geom.height, r0 + 32);
  const int32_t c1 = std::min(geom.width, c0 + 32);
  auto paint_px = [&](int32_t y, int32_t x) {
    if (y < 0 || y >= im.height || x < 0 || x >= im.width) return;
    for (int c = 0; c < 3; ++c) im.at(y, x, c) = kWindow[c];
  };
  for (int32_t x = c0 * px; x < c1 * px; ++x) {
    paint_px(r0 * px, x);
    paint_px(r1 * px - 1, x);
  }
  for (int32_t y = r0 * px; y < r1 * px; ++y) {
    paint_px(y, c0 * px);
    paint_px(y, c1 * px - 1);
  }
  return im;
}

std::vector<std::string> visualize_model(const net::TrainState& state,
                                         const img::Image& input,
                                         int32_t dilation, int32_t query_r,
                                         int32_t query_c,
                                         const std::string& prefix) {
  net::ForwardTrace trace;
  trace.keep_sets = true;
  (void)net::forward(state, input.to_tensor(), dilation, &trace);
  const graph::GridGeom geom{input.height, input.width};

  std::vector<std::string> written;
  // Initial DLSG scope first, then each layer's kept/expanded pair.
  graph::CandidateSet init =
      graph::dlsg_init(geom, state.cfg.window, dilation);
  {
    img::Image im = render_candidates(init, init, geom, query_r, query_c);
    std::string path = prefix + "_init.ppm";
    img::save_image(im, path);
    written.push_back(path);
  }
  for (const auto& lt : trace.layers) {
    img::Image im =
        render_candidates(lt.i_s, lt.i_next, geom, query_r, query_c);
    std::string path = prefix + "_b" + std::to_string(lt.block) + "l" +
                       std::to_string(lt.layer) + ".ppm";
    img::save_image(im, path);
    written.push_back(path);
  }
  return written;
}

std::string visualize_dump(const std::string& dump_path, int32_t query_r,
                           int32_t query_c, const std::string& out_path) {
  graph::CandidateSet cs = graph::CandidateSet::load(dump_path);
  graph::GridGeom geom = cs.geom();
  if (geom.tokens() != cs.tokens())
    throw ConfigError("visualize: dump carries no grid geometry");
  img::Image im = render_candidates(cs, cs, geom, query_r, query_c);
  img::save_image(im, out_path);
  return out_path;
}

}  // namespace iet::viz
