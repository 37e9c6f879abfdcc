#pragma once

#include <cstdint>
#include <string>
#include <vector>

#include "iet/candidates.hpp"
#include "iet/image.hpp"
#include "iet/model.hpp"

namespace iet::viz {

// Renders one token's candidate row on the grid: kept candidates red,
// expansion-added candidates orange, the query token green, and a yellow
// 32x32 reference-window outline centered on the query. `added` may be the
// same set as `kept` (nothing highlighted).
img::Image render_candidates(const graph::CandidateSet& kept,
                             const graph::CandidateSet& added,
                             graph::GridGeom geom, int32_t query_r,
                             int32_t query_c);

// Runs the model on `input`, tracing candidates, and writes one raster per
// layer (plus the initial DLSG scope) under `prefix`. Returns the written
// paths.
std::vector<std::string> visualize_model(const net::TrainState& state,
                                         const img::Image& input,
                                         int32_t dilation, int32_t query_r,
                                         int32_t query_c,
                                         const std::string& prefix);

// Renders a serialized dump (geometry from its header) to one image.
std::string visualize_dump(const std::string& dump_path, int32_t query_r,
                           int32_t query_c, const std::string& out_path);

}  // namespace iet::viz
