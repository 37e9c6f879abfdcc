#include <doctest.h>

#include <filesystem>
#include <fstream>
#include <set>

#include "iet/candidates.hpp"
#include "iet/reference.hpp"
#include "iet/rng.hpp"
#include "test_util.hpp"

using namespace iet;
using graph::CandidateSet;
using graph::GridGeom;

TEST_CASE("dlsg 4x4 w3 d4: shifted window plus the single cell sample") {
  GridGeom geom{4, 4};
  CandidateSet cs = graph::dlsg_init(geom, 3, 4);
  cs.validate();
  // one 4x4 cell, sample offset (2,2) -> token 10
  auto row0 = cs.row(0);
  std::set<int32_t> got(row0.begin(), row0.end());
  std::set<int32_t> want = {0, 1, 2, 4, 5, 6, 8, 9, 10};  // shifted window holds 10
  CHECK(got == want);
  CHECK(cs.length(0) == 9);
  // every row: 9 window tokens plus sample 10 unless already covered
  for (int32_t i = 0; i < 16; ++i) {
    auto row = cs.row(i);
    std::set<int32_t> s(row.begin(), row.end());
    CHECK(s.count(10) == 1);
    CHECK((cs.length(i) == 9 || cs.length(i) == 10));
  }
}

TEST_CASE("dlsg reduces to full attention when d=1 or the window covers") {
  GridGeom geom{6, 6};
  CandidateSet d1 = graph::dlsg_init(geom, 3, 1);
  for (int32_t i = 0; i < geom.tokens(); ++i) CHECK(d1.length(i) == 36);

  GridGeom small{5, 5};
  CandidateSet cover = graph::dlsg_init(small, 5, 4);
  for (int32_t i = 0; i < small.tokens(); ++i)
    CHECK(cover.length(i) == 25);
}

TEST_CASE("dlsg matches brute-force enumeration") {
  for (auto [h, w] : {std::pair{8, 8}, {7, 9}, {12, 5}}) {
    for (int32_t win : {3, 5}) {
      for (int32_t d : {1, 2, 3, 4}) {
        GridGeom geom{h, w};
        if (win > std::min(h, w)) continue;
        CandidateSet cs = graph::dlsg_init(geom, win, d);
        cs.validate();
        auto want = ref::dlsg_sets(geom, win, d);
        for (int32_t i = 0; i < geom.tokens(); ++i) {
          auto row = cs.row(i);
          std::set<int32_t> got(row.begin(), row.end());
          CHECK(got == want[static_cast<size_t>(i)]);
        }
      }
    }
  }
}

TEST_CASE("dlsg interior rows: window translates, global samples shared") {
  GridGeom geom{12, 12};
  const int32_t win = 3, d = 3;
  CandidateSet cs = graph::dlsg_init(geom, win, d);

  // The global sample set, computed independently.
  std::set<int32_t> samples;
  for (int32_t cy = 0; cy * d < 12; ++cy)
    for (int32_t cx = 0; cx * d < 12; ++cx)
      samples.insert(geom.token_at(std::min(cy * d + d / 2, 11),
                                   std::min(cx * d + d / 2, 11)));

  auto window_of = [&](int32_t r, int32_t c) {
    std::set<int32_t> w;
    for (int32_t dr = -1; dr <= 1; ++dr)
      for (int32_t dc = -1; dc <= 1; ++dc)
        w.insert(geom.token_at(r + dr, c + dc));
    return w;
  };

  for (auto [r, c] : {std::pair{4, 4}, {4, 7}, {7, 4}, {8, 8}}) {
    auto row = cs.row(geom.token_at(r, c));
    std::set<int32_t> got(row.begin(), row.end());
    std::set<int32_t> win_set = window_of(r, c);
    // window part is the exact translate of the centered window
    for (int32_t t : win_set) CHECK(got.count(t) == 1);
    // everything else is exactly the shared global sample set minus overlap
    std::set<int32_t> rest;
    for (int32_t t : got)
      if (!win_set.count(t)) rest.insert(t);
    std::set<int32_t> expect;
    for (int32_t t : samples)
      if (!win_set.count(t)) expect.insert(t);
    CHECK(rest == expect);
  }
}

TEST_CASE("dlsg rejects invalid geometry") {
  CHECK_THROWS_AS(graph::dlsg_init(GridGeom{4, 4}, 2, 1), ConfigError);
  CHECK_THROWS_AS(graph::dlsg_init(GridGeom{4, 4}, 5, 1), ConfigError);
  CHECK_THROWS_AS(graph::dlsg_init(GridGeom{4, 4}, 3, 0), ConfigError);
}

TEST_CASE("sparsify keeps whole row when the budget covers it") {
  Rng rng(40);
  CandidateSet cands = tut::random_candidates(rng, 12, 6);
  Tensor scores = tut::random_row_scores(rng, cands);
  auto res = graph::sparsify(scores, cands, 99);
  for (int32_t i = 0; i < 12; ++i) {
    auto in = cands.row(i);
    auto out = res.kept.row(i);
    CHECK(std::set<int32_t>(in.begin(), in.end()) ==
          std::set<int32_t>(out.begin(), out.end()));
  }
}

TEST_CASE("sparsify picks the stated hand example") {
  CandidateSet cands = CandidateSet::from_rows(10, [] {
    std::vector<std::vector<int32_t>> rows(10, std::vector<int32_t>{0});
    rows[0] = {7, 2, 9};
    return rows;
  }());
  Tensor scores({10, 3});
  scores.at2(0, 0) = 0.5;
  scores.at2(0, 1) = 0.3;
  scores.at2(0, 2) = 0.2;
  auto res = graph::sparsify(scores, cands, 2);
  CHECK(res.kept.row(0)[0] == 7);
  CHECK(res.kept.row(0)[1] == 2);
  CHECK(res.scores.at2(0, 0) == 0.5);
  CHECK(res.scores.at2(0, 1) == 0.3);
}

TEST_CASE("sparsify matches the sort oracle including ties") {
  Rng rng(41);
  for (int trial = 0; trial < 30; ++trial) {
    const int32_t n = 4 + static_cast<int32_t>(rng.below(29));
    CandidateSet cands = tut::random_candidates(rng, n, 10);
    Tensor scores({n, cands.k_max()});
    for (int32_t i = 0; i < n; ++i)
      for (int32_t j = 0; j < cands.length(i); ++j)
        scores.at2(i, j) = std::floor(rng.uniform() * 6.0) / 6.0;
    const int32_t k_s = 1 + static_cast<int32_t>(rng.below(8));
    auto res = graph::sparsify(scores, cands, k_s);
    res.kept.validate();
    for (int32_t i = 0; i < n; ++i) {
      std::vector<double> vals;
      for (int32_t j = 0; j < cands.length(i); ++j) vals.push_back(scores.at2(i, j));
      auto order = ref::topk_by_sort(vals, k_s);
      auto got = res.kept.row(i);
      REQUIRE(static_cast<size_t>(got.size()) == order.size());
      for (size_t t = 0; t < order.size(); ++t)
        CHECK(got[t] == cands.row(i)[static_cast<size_t>(order[t])]);
    }
  }
}

TEST_CASE("sparsify never invents indices") {
  Rng rng(42);
  CandidateSet cands = tut::random_candidates(rng, 24, 8);
  Tensor scores = tut::random_row_scores(rng, cands);
  auto res = graph::sparsify(scores, cands, 3);
  for (int32_t i = 0; i < 24; ++i) {
    auto in = cands.row(i);
    std::set<int32_t> allowed(in.begin(), in.end());
    for (int32_t tok : res.kept.row(i)) CHECK(allowed.count(tok) == 1);
  }
}

TEST_CASE("expand reproduces the three-token chain motivating example") {
  // rows: A={A,B}, B={B,C}, C={C}; B ranks first for A
  std::vector<std::vector<int32_t>> rows = {{0, 1}, {1, 2}, {2}};
  CandidateSet cands = CandidateSet::from_rows(3, rows);
  Tensor scores({3, 2});
  scores.at2(0, 0) = 0.2;  // A->A
  scores.at2(0, 1) = 0.8;  // A->B ranks first
  scores.at2(1, 0) = 0.6;  // B->B
  scores.at2(1, 1) = 0.4;  // B->C
  scores.at2(2, 0) = 1.0;  // C->C
  CandidateSet out = graph::expand(scores, cands, 1, 2, 8);
  auto row = out.row(0);
  std::set<int32_t> got(row.begin(), row.end());
  CHECK(got == std::set<int32_t>{0, 1, 2});  // C became reachable through B
}

TEST_CASE("expand with k1=0 or subsumed neighbors is the identity") {
  Rng rng(50);
  CandidateSet cands = tut::random_candidates(rng, 16, 6);
  Tensor scores = tut::random_row_scores(rng, cands);
  CandidateSet same = graph::expand(scores, cands, 0, 4, 64);
  CHECK(same == cands);

  CandidateSet full = tut::full_candidates(8);
  Tensor fs({8, 8});
  Rng rng2(51);
  for (double& v : fs.vec()) v = rng2.uniform();
  CandidateSet out = graph::expand(fs, full, 3, 3, 64);
  for (int32_t i = 0; i < 8; ++i) CHECK(out.length(i) == 8);
}

TEST_CASE("expand equals the literal brute-force oracle") {
  Rng rng(52);
  for (int trial = 0; trial < 25; ++trial) {
    const int32_t n = 8 + static_cast<int32_t>(rng.below(57));
    CandidateSet cands = tut::random_candidates(rng, n, 12);
    Tensor scores = tut::random_row_scores(rng, cands);
    const int32_t k1 = 1 + static_cast<int32_t>(rng.below(4));
    const int32_t k2 = 1 + static_cast<int32_t>(rng.below(3));
    CandidateSet got = graph::expand(scores, cands, k1, k2, 4 * n);
    got.validate();
    auto want = ref::two_hop_sets(scores, cands, k1, k2);
    for (int32_t i = 0; i < n; ++i) {
      auto row = got.row(i);
      CHECK(std::set<int32_t>(row.begin(), row.end()) ==
            want[static_cast<size_t>(i)]);
    }
  }
}

TEST_CASE("expand grows monotonically and keeps the prefix under the cap") {
  Rng rng(53);
  CandidateSet cands = tut::random_candidates(rng, 40, 10);
  Tensor scores = tut::random_row_scores(rng, cands);
  CandidateSet wide = graph::expand(scores, cands, 5, 5, 1000);
  for (int32_t i = 0; i < 40; ++i) {
    auto in = cands.row(i);
    auto out = wide.row(i);
    // prefix preserved in order
    REQUIRE(out.size() >= in.size());
    for (size_t j = 0; j < in.size(); ++j) CHECK(out[j] == in[j]);
  }
  // tight cap: appended tail truncated, prefix intact
  CandidateSet tight = graph::expand(scores, cands, 5, 5, 4);
  for (int32_t i = 0; i < 40; ++i) {
    auto in = cands.row(i);
    auto out = tight.row(i);
    CHECK(out.size() == std::max<size_t>(in.size(), 4));
    for (size_t j = 0; j < in.size(); ++j) CHECK(out[j] == in[j]);
  }
}

TEST_CASE("highest_neighbor excludes self unless alone") {
  std::vector<std::vector<int32_t>> rows = {{0}, {3, 8, 1}, {2, 0}};
  rows.resize(9, {0});
  CandidateSet cands = CandidateSet::from_rows(9, rows);
  Tensor scores({9, 3});
  scores.at2(1, 0) = 0.2;  // token 3
  scores.at2(1, 1) = 0.7;  // token 8
  scores.at2(1, 2) = 0.1;
  scores.at2(2, 0) = 0.9;  // self
  scores.at2(2, 1) = 0.1;
  auto hi = graph::highest_neighbor(scores, cands);
  CHECK(hi[0] == 0);  // only self available
  CHECK(hi[1] == 8);
  CHECK(hi[2] == 0);  // self excluded despite higher score
}

TEST_CASE("highest_neighbor matches a linear-scan oracle") {
  Rng rng(60);
  CandidateSet cands = tut::random_candidates(rng, 32, 9, /*include_self=*/true);
  Tensor scores = tut::random_row_scores(rng, cands);
  auto got = graph::highest_neighbor(scores, cands);
  for (int32_t i = 0; i < 32; ++i) {
    auto row = cands.row(i);
    int32_t best = -1;
    double best_v = -1.0;
    for (size_t j = 0; j < row.size(); ++j) {
      if (row[j] == i) continue;
      const double v = scores.at2(i, static_cast<int64_t>(j));
      if (v > best_v || (v == best_v && row[j] < best)) {
        best = row[j];
        best_v = v;
      }
    }
    CHECK(got[static_cast<size_t>(i)] == (best < 0 ? i : best));
  }
}

TEST_CASE("candidate serialization round-trips and hashes stably") {
  Rng rng(70);
  CandidateSet cs = graph::dlsg_init(GridGeom{6, 7}, 3, 2);
  const auto path = std::filesystem::temp_directory_path() / "iet_cand_test.bin";
  cs.save(path.string());
  CandidateSet back = CandidateSet::load(path.string());
  CHECK(back == cs);
  CHECK(back.content_hash() == cs.content_hash());
  CHECK(back.geom().height == 6);
  CHECK(back.geom().width == 7);

  CandidateSet again = graph::dlsg_init(GridGeom{6, 7}, 3, 2);
  CHECK(again.content_hash() == cs.content_hash());

  // truncated file raises a parse error carrying the byte offset
  std::ofstream os(path, std::ios::binary);
  os.write("IETCAND1\x01\x00\x00\x00", 12);
  os.close();
  CHECK_THROWS_AS(CandidateSet::load(path.string()), ParseError);
  std::filesystem::remove(path);
}

TEST_CASE("from_rows enforces the invariants") {
  CHECK_THROWS_AS(CandidateSet::from_rows(3, {{0, 0}, {1}, {2}}),
                  CandidateError);
  CHECK_THROWS_AS(CandidateSet::from_rows(3, {{5}, {1}, {2}}), CandidateError);
  CHECK_THROWS_AS(CandidateSet::from_rows(3, {{}, {1}, {2}}), CandidateError);
}

TEST_CASE("expansion schedule defaults follow the block-truncated table") {
  auto s = graph::ExpansionSchedule::default_for(8);
  s.validate(8);
  CHECK(s.expand_in_block == std::vector<uint8_t>({1, 1, 1, 1, 0, 0, 0, 0}));
  CHECK(s.k1 == std::vector<int32_t>({22, 20, 14, 12, 0, 0, 0, 0}));
  CHECK(s.k2 == std::vector<int32_t>({12, 11, 9, 8, 0, 0, 0, 0}));

  auto s2 = graph::ExpansionSchedule::default_for(2);
  CHECK(s2.k1 == std::vector<int32_t>({22, 20}));
  CHECK(s2.sparsify_budget(30) == 16);  // floor dominates
  CHECK(s2.sparsify_budget(100) == 50);
}
