#include "iet_c.h"

#include <cstring>
#include <fstream>
#include <map>
#include <sstream>
#include <string>

#include "iet/bench.hpp"
#include "iet/candidates.hpp"
#include "iet/config.hpp"
#include "iet/error.hpp"
#include "iet/image.hpp"
#include "iet/model.hpp"
#include "iet/parallel.hpp"
#include "iet/pipeline.hpp"
#include "iet/verify.hpp"
#include "iet/visualize.hpp"

struct iet_candidates_s {
  iet::graph::CandidateSet set;
};

struct iet_model_s {
  iet::net::TrainState state;
};

namespace {

thread_local std::string g_last_error;

void set_error(const std::string& msg) { g_last_error = msg; }

void copy_out(const std::string& s, char* buf, size_t cap) {
  if (!buf || cap == 0) return;
  const size_t n = std::min(s.size(), cap - 1);
  std::memcpy(buf, s.data(), n);
  buf[n] = '\0';
}

// Maps C++ exceptions onto status codes; every API body runs inside this.
template <typename Fn>
iet_status guarded(Fn&& fn) {
  try {
    g_last_error.clear();
    return fn();
  } catch (const iet::ConfigError& e) {
    set_error(e.what());
    return IET_ERR_CONFIG;
  } catch (const iet::DimensionError& e) {
    set_error(e.what());
    return IET_ERR_DIMENSION;
  } catch (const iet::ParseError& e) {
    set_error(e.what());
    return IET_ERR_PARSE;
  } catch (const iet::IoError& e) {
    set_error(e.what());
    return IET_ERR_IO;
  } catch (const iet::CandidateError& e) {
    set_error(e.what());
    return IET_ERR_CANDIDATE;
  } catch (const iet::NumericError& e) {
    set_error(e.what());
    return IET_ERR_NUMERIC;
  } catch (const iet::UsageError& e) {
    set_error(e.what());
    return IET_ERR_USAGE;
  } catch (const std::exception& e) {
    set_error(e.what());
    return IET_ERR_INTERNAL;
  } catch (...) {
    set_error("unknown error");
    return IET_ERR_INTERNAL;
  }
}

iet_status require_arg(bool ok, const char* msg) {
  if (!ok) {
    set_error(msg);
    return IET_ERR_INVALID_ARG;
  }
  return IET_OK;
}

}  // namespace

extern "C" {

const char* iet_status_name(iet_status s) {
  switch (s) {
    case IET_OK: return "ok";
    case IET_ERR_INVALID_ARG: return "invalid_argument";
    case IET_ERR_CONFIG: return "config_error";
    case IET_ERR_DIMENSION: return "dimension_error";
    case IET_ERR_PARSE: return "parse_error";
    case IET_ERR_IO: return "io_error";
    case IET_ERR_CANDIDATE: return "candidate_error";
    case IET_ERR_NUMERIC: return "numeric_error";
    case IET_ERR_USAGE: return "usage_error";
    case IET_ERR_VERIFY_FAILED: return "verify_failed";
    case IET_ERR_INTERNAL: return "internal_error";
  }
  return "unknown";
}

const char* iet_last_error(void) { return g_last_error.c_str(); }

void iet_set_threads(int n) { iet::set_thread_count(n); }
int iet_threads(void) { return iet::thread_count(); }

/* ---- candidates ---------------------------------------------------------- */

iet_status iet_dlsg_init(int height, int width, int window, int dilation,
                         iet_candidates** out) {
  if (auto rc = require_arg(out != nullptr, "out is NULL")) return rc;
  return guarded([&]() {
    auto* c = new iet_candidates_s{
        iet::graph::dlsg_init(iet::graph::GridGeom{height, width}, window,
                              dilation)};
    *out = c;
    return IET_OK;
  });
}

iet_status iet_candidates_load(const char* path, iet_candidates** out) {
  if (auto rc = require_arg(path && out, "path/out is NULL")) return rc;
  return guarded([&]() {
    *out = new iet_candidates_s{iet::graph::CandidateSet::load(path)};
    return IET_OK;
  });
}

iet_status iet_candidates_save(const iet_candidates* c, const char* path) {
  if (auto rc = require_arg(c && path, "handle/path is NULL")) return rc;
  return guarded([&]() {
    c->set.save(path);
    return IET_OK;
  });
}

int iet_candidates_rows(const iet_candidates* c) {
  return c ? c->set.tokens() : 0;
}

int iet_candidates_width(const iet_candidates* c) {
  return c ? c->set.k_max() : 0;
}

int iet_candidates_length(const iet_candidates* c, int row) {
  if (!c || row < 0 || row >= c->set.tokens()) return -1;
  return c->set.length(row);
}

iet_status iet_candidates_row(const iet_candidates* c, int row, int32_t* out,
                              int cap, int* written) {
  if (auto rc = require_arg(c && out, "handle/out is NULL")) return rc;
  if (auto rc = require_arg(row >= 0 && row < c->set.tokens(),
                            "row out of range"))
    return rc;
  return guarded([&]() {
    auto r = c->set.row(row);
    const int n = static_cast<int>(r.size());
    if (cap < n) {
      set_error("row buffer too small");
      return IET_ERR_INVALID_ARG;
    }
    std::memcpy(out, r.data(), static_cast<size_t>(n) * sizeof(int32_t));
    if (written) *written = n;
    return IET_OK;
  });
}

uint64_t iet_candidates_hash(const iet_candidates* c) {
  return c ? c->set.content_hash() : 0;
}

iet_status iet_candidates_stats(const iet_candidates* c, char* buf,
                                size_t cap) {
  if (auto rc = require_arg(c && buf && cap > 0, "handle/buffer is NULL"))
    return rc;
  return guarded([&]() {
    copy_out(c->set.length_histogram(), buf, cap);
    return IET_OK;
  });
}

void iet_candidates_free(iet_candidates* c) { delete c; }

/* ---- model ---------------------------------------------------------------- */

iet_status iet_model_create(const char* config_text, uint64_t seed,
                            iet_model** out) {
  if (auto rc = require_arg(out != nullptr, "out is NULL")) return rc;
  return guarded([&]() {
    iet::net::ModelConfig cfg =
        iet::net::config_from_kv_text(config_text ? config_text : "");
    *out = new iet_model_s{iet::net::build_model(cfg, seed)};
    return IET_OK;
  });
}

iet_status iet_model_load(const char* checkpoint_path, iet_model** out) {
  if (auto rc = require_arg(checkpoint_path && out, "path/out is NULL"))
    return rc;
  return guarded([&]() {
    *out = new iet_model_s{iet::net::load_checkpoint(checkpoint_path)};
    return IET_OK;
  });
}

iet_status iet_model_save(const iet_model* m, const char* path) {
  if (auto rc = require_arg(m && path, "handle/path is NULL")) return rc;
  return guarded([&]() {
    iet::net::save_checkpoint(m->state, path);
    return IET_OK;
  });
}

int64_t iet_model_param_count(const iet_model* m) {
  return m ? m->state.param_count() : 0;
}

iet_status iet_model_config_json(const iet_model* m, char* buf, size_t cap) {
  if (auto rc = require_arg(m && buf && cap > 0, "handle/buffer is NULL"))
    return rc;
  return guarded([&]() {
    copy_out(m->state.cfg.to_json(), buf, cap);
    return IET_OK;
  });
}

iet_status iet_model_sr_file(iet_model* m, const char* lr_path, int dilation,
                             const char* out_path) {
  if (auto rc = require_arg(m && lr_path && out_path, "NULL argument"))
    return rc;
  return guarded([&]() {
    iet::img::Image lr = iet::img::load_image(lr_path);
    const int d = dilation > 0 ? dilation : m->state.cfg.dilation_infer;
    iet::Tensor sr = iet::net::forward(m->state, lr.to_tensor(), d);
    iet::img::save_image(iet::img::Image::from_tensor(sr, /*clamp=*/true),
                         out_path);
    return IET_OK;
  });
}

iet_status iet_model_train_toy(iet_model* m, const char* image_path, int steps,
                               const char* report_json_path,
                               double* final_psnr_db,
                               double* bicubic_psnr_db) {
  if (auto rc = require_arg(m && image_path, "NULL argument")) return rc;
  if (auto rc = require_arg(steps > 0, "steps must be positive")) return rc;
  return guarded([&]() {
    iet::img::Image hr = iet::img::load_image(image_path);
    const int32_t s = m->state.cfg.scale;
    if (hr.height % s != 0 || hr.width % s != 0) {
      set_error("image extent must be divisible by the scale");
      return IET_ERR_CONFIG;
    }
    iet::pipe::PatchPair patch;
    patch.hr = std::move(hr);
    patch.lr = iet::img::bicubic_resize(patch.hr, 1, s);
    iet::pipe::EvalReport rep = iet::pipe::overfit_run(
        m->state.cfg, patch, steps, m->state.seed, &m->state);
    if (report_json_path) rep.write_json(report_json_path);
    if (final_psnr_db) *final_psnr_db = rep.mean_psnr;
    if (bicubic_psnr_db) *bicubic_psnr_db = rep.baseline_psnr;
    return IET_OK;
  });
}

void iet_model_free(iet_model* m) { delete m; }

/* ---- verify ----------------------------------------------------------------- */

iet_status iet_verify(const char* suite, uint64_t seed,
                      const char* tol_overrides, const char* report_json_path,
                      char* text_out, size_t text_cap, char* first_fail,
                      size_t first_fail_cap) {
  if (auto rc = require_arg(suite != nullptr, "suite is NULL")) return rc;
  return guarded([&]() {
    std::map<std::string, double> tols;
    if (tol_overrides && *tol_overrides) {
      std::stringstream ss(tol_overrides);
      std::string item;
      while (std::getline(ss, item, ',')) {
        const auto eq = item.find('=');
        if (eq == std::string::npos)
          throw iet::ConfigError("bad tolerance override: " + item);
        tols[item.substr(0, eq)] = std::stod(item.substr(eq + 1));
      }
    }
    iet::verify::SuiteReport rep = iet::verify::run_suite(suite, seed, tols);
    if (report_json_path) {
      std::ofstream os(report_json_path);
      if (!os) throw iet::IoError(std::string("cannot write report: ") +
                                  report_json_path);
      os << rep.to_json() << "\n";
    }
    copy_out(rep.to_text(), text_out, text_cap);
    if (!rep.all_pass) {
      copy_out(rep.first_failure, first_fail, first_fail_cap);
      set_error("verify suite failed at: " + rep.first_failure);
      return IET_ERR_VERIFY_FAILED;
    }
    return IET_OK;
  });
}

/* ---- bench ------------------------------------------------------------------- */

iet_status iet_bench(const int32_t* n_values, int n_count,
                     const int32_t* k_values, int k_count, int head_dim,
                     int reps, int use_f32, const char* report_json_path,
                     char* table_out, size_t table_cap) {
  if (auto rc = require_arg(n_values && k_values && n_count > 0 && k_count > 0,
                            "empty size lists"))
    return rc;
  return guarded([&]() {
    std::vector<int32_t> ns(n_values, n_values + n_count);
    std::vector<int32_t> ks(k_values, k_values + k_count);
    iet::bench::BenchReport rep =
        iet::bench::run_bench(ns, ks, head_dim, reps, use_f32 != 0, 1234);
    if (report_json_path) {
      std::ofstream os(report_json_path);
      if (!os) throw iet::IoError(std::string("cannot write report: ") +
                                  report_json_path);
      os << rep.to_json() << "\n";
    }
    copy_out(rep.to_text(), table_out, table_cap);
    return IET_OK;
  });
}

/* ---- visualize ----------------------------------------------------------------- */

iet_status iet_visualize_dump(const char* dump_path, int token_r, int token_c,
                              const char* out_image) {
  if (auto rc = require_arg(dump_path && out_image, "NULL argument")) return rc;
  return guarded([&]() {
    iet::viz::visualize_dump(dump_path, token_r, token_c, out_image);
    return IET_OK;
  });
}

iet_status iet_visualize_model(iet_model* m, const char* image_path,
                               int dilation, int token_r, int token_c,
                               const char* out_prefix, int* files_written) {
  if (auto rc = require_arg(m && image_path && out_prefix, "NULL argument"))
    return rc;
  return guarded([&]() {
    iet::img::Image input = iet::img::load_image(image_path);
    const int d = dilation > 0 ? dilation : m->state.cfg.dilation_infer;
    auto files = iet::viz::visualize_model(m->state, input, d, token_r,
                                           token_c, out_prefix);
    if (files_written) *files_written = static_cast<int>(files.size());
    return IET_OK;
  });
}

} /* extern "C" */
