// Command-line front end. Talks to the library exclusively through the C
// API in iet_c.h; all numeric work happens behind that boundary.

#include <cstdint>
#include <cstdio>
#include <fstream>
#include <sstream>
#include <string>
#include <vector>

#include <CLI11.hpp>

#include "iet_c.h"

namespace {

int fail_with(iet_status rc, const std::string& what) {
  std::fprintf(stderr, "error: %s: %s (%s)\n", what.c_str(), iet_last_error(),
               iet_status_name(rc));
  return static_cast<int>(rc);
}

std::string read_file_or_empty(const std::string& path) {
  if (path.empty()) return "";
  std::ifstream is(path);
  if (!is) {
    std::fprintf(stderr, "error: cannot read config file %s\n", path.c_str());
    std::exit(static_cast<int>(IET_ERR_IO));
  }
  std::stringstream ss;
  ss << is.rdbuf();
  return ss.str();
}

bool parse_token(const std::string& s, int& r, int& c) {
  const auto comma = s.find(',');
  if (comma == std::string::npos) return false;
  try {
    r = std::stoi(s.substr(0, comma));
    c = std::stoi(s.substr(comma + 1));
  } catch (...) {
    return false;
  }
  return true;
}

std::vector<int32_t> parse_list(const std::string& s) {
  std::vector<int32_t> out;
  std::stringstream ss(s);
  std::string item;
  while (std::getline(ss, item, ',')) out.push_back(std::stoi(item));
  return out;
}

}  // namespace

int main(int argc, char** argv) {
  CLI::App app{"IET sparse-attention super-resolution toolkit"};
  app.require_subcommand(1);

  // init-candidates ----------------------------------------------------------
  auto* init = app.add_subcommand(
      "init-candidates", "Build a DLSG candidate set and dump it");
  int ic_h = 16, ic_w = 16, ic_window = 3, ic_dilation = 2;
  std::string ic_out = "candidates.bin";
  init->add_option("--height", ic_h, "grid height in tokens");
  init->add_option("--width", ic_w, "grid width in tokens");
  init->add_option("--window", ic_window, "dense local window (odd)");
  init->add_option("--dilation", ic_dilation, "sparse-global cell size");
  init->add_option("--out", ic_out, "dump file path");

  // visualize ----------------------------------------------------------------
  auto* vis = app.add_subcommand("visualize",
                                 "Render candidate scopes for one token");
  std::string vz_dump, vz_ckpt, vz_image, vz_token = "0,0", vz_out = "viz";
  int vz_dilation = 0;
  vis->add_option("--candidates", vz_dump, "candidate dump to render");
  vis->add_option("--checkpoint", vz_ckpt, "model checkpoint (live trace)");
  vis->add_option("--image", vz_image, "input image for the live trace");
  vis->add_option("--token", vz_token, "query token as r,c");
  vis->add_option("--dilation", vz_dilation, "inference dilation (0 = config)");
  vis->add_option("--out", vz_out, "output image path or prefix");

  // verify ---------------------------------------------------------------------
  auto* ver = app.add_subcommand("verify", "Run property suites");
  std::string ve_suite = "all", ve_report = "verify_report.json";
  std::vector<std::string> ve_tols;
  uint64_t ve_seed = 7;
  ver->add_option("--suite", ve_suite, "dense|expand|sparsify|dlsg|grad|threading|io|all");
  ver->add_option("--seed", ve_seed, "random seed");
  ver->add_option("--tol", ve_tols, "tolerance override key=value (repeatable)");
  ver->add_option("--out", ve_report, "JSON report path");

  // bench ------------------------------------------------------------------------
  auto* ben = app.add_subcommand("bench", "Sparse vs dense attention timings");
  std::string be_n = "1024,4096", be_k = "128", be_out;
  int be_dim = 32, be_reps = 5;
  bool be_f32 = false;
  ben->add_option("--n-list", be_n, "token counts, comma separated");
  ben->add_option("--k-list", be_k, "candidate counts, comma separated");
  ben->add_option("--dim", be_dim, "head dimension");
  ben->add_option("--reps", be_reps, "repetitions per measurement (median)");
  ben->add_flag("--f32", be_f32, "run kernels in 32-bit storage mode");
  ben->add_option("--out", be_out, "JSON report path");

  // train-toy -----------------------------------------------------------------------
  auto* tr = app.add_subcommand("train-toy", "Overfit one image patch");
  std::string tr_config, tr_image, tr_out = "toy.ckpt", tr_report;
  int tr_steps = 2000, tr_dilation = 0, tr_window = 0, tr_scale = 0;
  uint64_t tr_seed = 1;
  tr->add_option("--config", tr_config, "key=value config file");
  tr->add_option("--image", tr_image, "HR training image (ppm/png)")->required();
  tr->add_option("--steps", tr_steps, "training steps");
  tr->add_option("--seed", tr_seed, "init seed");
  tr->add_option("--dilation", tr_dilation, "override train+infer dilation");
  tr->add_option("--window", tr_window, "override window");
  tr->add_option("--scale", tr_scale, "override scale");
  tr->add_option("--out", tr_out, "checkpoint output path");
  tr->add_option("--report", tr_report, "JSON eval report path");

  // sr ----------------------------------------------------------------------------
  auto* sr = app.add_subcommand("sr", "Super-resolve an image");
  std::string sr_ckpt, sr_image, sr_out = "sr.png";
  int sr_dilation = 0;
  sr->add_option("--checkpoint", sr_ckpt, "model checkpoint")->required();
  sr->add_option("--image", sr_image, "LR input image")->required();
  sr->add_option("--dilation", sr_dilation, "inference dilation (0 = config)");
  sr->add_option("--out", sr_out, "output image path");

  CLI11_PARSE(app, argc, argv);

  if (init->parsed()) {
    iet_candidates* c = nullptr;
    iet_status rc = iet_dlsg_init(ic_h, ic_w, ic_window, ic_dilation, &c);
    if (rc != IET_OK) return fail_with(rc, "init-candidates");
    rc = iet_candidates_save(c, ic_out.c_str());
    if (rc != IET_OK) {
      iet_candidates_free(c);
      return fail_with(rc, "saving dump");
    }
    std::vector<char> stats(16384);
    iet_candidates_stats(c, stats.data(), stats.size());
    std::printf("tokens %d  k_max %d  hash %016llx\n", iet_candidates_rows(c),
                iet_candidates_width(c),
                static_cast<unsigned long long>(iet_candidates_hash(c)));
    std::printf("length histogram (length count):\n%s", stats.data());
    std::printf("wrote %s\n", ic_out.c_str());
    iet_candidates_free(c);
    return 0;
  }

  if (vis->parsed()) {
    int r = 0, c = 0;
    if (!parse_token(vz_token, r, c)) {
      std::fprintf(stderr, "error: --token expects r,c\n");
      return static_cast<int>(IET_ERR_INVALID_ARG);
    }
    if (!vz_dump.empty()) {
      iet_status rc = iet_visualize_dump(vz_dump.c_str(), r, c, vz_out.c_str());
      if (rc != IET_OK) return fail_with(rc, "visualize");
      std::printf("wrote %s\n", vz_out.c_str());
      return 0;
    }
    if (vz_ckpt.empty() || vz_image.empty()) {
      std::fprintf(stderr,
                   "error: need --candidates or both --checkpoint and --image\n");
      return static_cast<int>(IET_ERR_INVALID_ARG);
    }
    iet_model* m = nullptr;
    iet_status rc = iet_model_load(vz_ckpt.c_str(), &m);
    if (rc != IET_OK) return fail_with(rc, "loading checkpoint");
    int files = 0;
    rc = iet_visualize_model(m, vz_image.c_str(), vz_dilation, r, c,
                             vz_out.c_str(), &files);
    iet_model_free(m);
    if (rc != IET_OK) return fail_with(rc, "visualize");
    std::printf("wrote %d layer rasters under %s_*\n", files, vz_out.c_str());
    return 0;
  }

  if (ver->parsed()) {
    std::string tols;
    for (const auto& t : ve_tols) {
      if (!tols.empty()) tols += ",";
      tols += t;
    }
    std::vector<char> text(1 << 16);
    std::vector<char> first(256);
    iet_status rc =
        iet_verify(ve_suite.c_str(), ve_seed, tols.empty() ? nullptr : tols.c_str(),
                   ve_report.c_str(), text.data(), text.size(), first.data(),
                   first.size());
    std::printf("%s", text.data());
    std::printf("report: %s\n", ve_report.c_str());
    if (rc == IET_ERR_VERIFY_FAILED) {
      std::fprintf(stderr, "first failing property: %s\n", first.data());
      return static_cast<int>(rc);
    }
    if (rc != IET_OK) return fail_with(rc, "verify");
    return 0;
  }

  if (ben->parsed()) {
    auto ns = parse_list(be_n);
    auto ks = parse_list(be_k);
    std::vector<char> table(1 << 16);
    iet_status rc = iet_bench(ns.data(), static_cast<int>(ns.size()), ks.data(),
                              static_cast<int>(ks.size()), be_dim, be_reps,
                              be_f32 ? 1 : 0,
                              be_out.empty() ? nullptr : be_out.c_str(),
                              table.data(), table.size());
    if (rc != IET_OK) return fail_with(rc, "bench");
    std::printf("%s", table.data());
    if (!be_out.empty()) std::printf("report: %s\n", be_out.c_str());
    return 0;
  }

  if (tr->parsed()) {
    std::string cfg = read_file_or_empty(tr_config);
    // CLI overrides append after the file so they win.
    if (tr_window > 0) cfg += "\nwindow = " + std::to_string(tr_window);
    if (tr_scale > 0) cfg += "\nscale = " + std::to_string(tr_scale);
    if (tr_dilation > 0) {
      cfg += "\ndilation_train = " + std::to_string(tr_dilation);
      cfg += "\ndilation_infer = " + std::to_string(tr_dilation);
    }
    iet_model* m = nullptr;
    iet_status rc = iet_model_create(cfg.c_str(), tr_seed, &m);
    if (rc != IET_OK) return fail_with(rc, "building model");
    std::printf("parameters: %lld\n",
                static_cast<long long>(iet_model_param_count(m)));
    double psnr = 0.0, baseline = 0.0;
    rc = iet_model_train_toy(m, tr_image.c_str(), tr_steps,
                             tr_report.empty() ? nullptr : tr_report.c_str(),
                             &psnr, &baseline);
    if (rc != IET_OK) {
      iet_model_free(m);
      return fail_with(rc, "training");
    }
    rc = iet_model_save(m, tr_out.c_str());
    iet_model_free(m);
    if (rc != IET_OK) return fail_with(rc, "saving checkpoint");
    std::printf("final PSNR %.2f dB (bicubic baseline %.2f dB)\n", psnr,
                baseline);
    std::printf("checkpoint: %s\n", tr_out.c_str());
    if (!tr_report.empty()) std::printf("report: %s\n", tr_report.c_str());
    return 0;
  }

  if (sr->parsed()) {
    iet_model* m = nullptr;
    iet_status rc = iet_model_load(sr_ckpt.c_str(), &m);
    if (rc != IET_OK) return fail_with(rc, "loading checkpoint");
    rc = iet_model_sr_file(m, sr_image.c_str(), sr_dilation, sr_out.c_str());
    iet_model_free(m);
    if (rc != IET_OK) return fail_with(rc, "super-resolve");
    std::printf("wrote %s\n", sr_out.c_str());
    return 0;
  }

  return 0;
}
