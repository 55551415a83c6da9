// Copyright (c) 2026 FlowDiar Authors
//
// Licensed under the Apache License, Version 2.0 (the "License");
// you may not use this file except in compliance with the License.
// You may obtain a copy of the License at
//
//     http://www.apache.org/licenses/LICENSE-2.0
//
// Unless required by applicable law or agreed to in writing, software
// distributed under the License is distributed on an "AS IS" BASIS,
// WITHOUT WARRANTIES OR CONDITIONS OF ANY KIND, either express or implied.
// See the License for the specific language governing permissions and
// limitations under the License.

#define DOCTEST_CONFIG_IMPLEMENT_WITH_MAIN
#include <cmath>
#include <filesystem>
#include <fstream>

#include "doctest.h"
#include "flowdiar/dataset.hpp"
#include "flowdiar/errors.hpp"
#include "flowdiar/simulator.hpp"

using namespace flowdiar;
namespace fs = std::filesystem;

namespace {

std::string temp_dir(const std::string& tag) {
  auto dir = fs::temp_directory_path() / ("flowdiar_test_" + tag);
  fs::remove_all(dir);
  return dir.string();
}

std::string slurp(const std::string& path) {
  std::ifstream in(path, std::ios::binary);
  REQUIRE(in.good());
  return std::string(std::istreambuf_iterator<char>(in), {});
}

}  // namespace

TEST_CASE("single speaker with zero overlap never double-books a frame") {
  ConversationSpec spec;
  spec.num_speakers = 1;
  spec.overlap_prob = 0.0;
  spec.duration = 64.0;
  Rng rng(5);
  auto res = simulate_labels(spec, 0.08, rng);
  REQUIRE(res.tracks.size() == 1);
  CHECK(res.tracks[0].size() == 800);
  CHECK(res.overlap_ratio == 0.0);
  bool any_speech = false;
  for (auto v : res.tracks[0]) {
    CHECK((v == 0 || v == 1));
    any_speech = any_speech || v;
  }
  CHECK(any_speech);
}

TEST_CASE("label simulation is deterministic under the seed") {
  ConversationSpec spec;
  Rng a(123), b(123);
  auto ra = simulate_labels(spec, 0.08, a);
  auto rb = simulate_labels(spec, 0.08, b);
  REQUIRE(ra.tracks.size() == rb.tracks.size());
  for (std::size_t s = 0; s < ra.tracks.size(); ++s)
    CHECK(ra.tracks[s] == rb.tracks[s]);
}

TEST_CASE("realized overlap is consistent with its Monte Carlo estimate") {
  ConversationSpec spec;
  spec.num_speakers = 2;
  spec.overlap_prob = 0.3;
  spec.duration = 1000.0;
  Rng probe(777);
  double probe_ratio = simulate_labels(spec, 0.08, probe).overlap_ratio;
  double mc = 0.0;
  const int reruns = 50;
  for (int i = 0; i < reruns; ++i) {
    Rng rng(1000 + static_cast<std::uint64_t>(i));
    mc += simulate_labels(spec, 0.08, rng).overlap_ratio;
  }
  mc /= reruns;
  CHECK(std::fabs(probe_ratio - mc) < 0.05);
}

TEST_CASE("simulate_features reference cases") {
  SUBCASE("silence and zero noise give all zeros") {
    std::vector<std::vector<std::uint8_t>> labels = {{0, 0, 0}, {0, 0, 0}};
    std::vector<std::vector<double>> sigs = {{1.0, 2.0}, {3.0, 4.0}};
    Rng rng(1);
    auto f = simulate_features(labels, sigs, 4, 0.0, rng);
    REQUIRE(f.size() == 3u * 4u * 2u);
    for (double v : f) CHECK(v == 0.0);
  }
  SUBCASE("single active speaker with zero noise copies the signature") {
    std::vector<std::vector<std::uint8_t>> labels = {{1, 0}, {0, 0}};
    std::vector<std::vector<double>> sigs = {{1.5, -2.0}, {3.0, 4.0}};
    Rng rng(1);
    auto f = simulate_features(labels, sigs, 2, 0.0, rng);
    // First two rows = speaker 0's signature, last two rows silence.
    CHECK(f[0] == 1.5);
    CHECK(f[1] == -2.0);
    CHECK(f[2] == 1.5);
    CHECK(f[3] == -2.0);
    CHECK(f[4] == 0.0);
    CHECK(f[7] == 0.0);
  }
  SUBCASE("random case matches the direct summation oracle") {
    Rng gen(9);
    std::vector<std::vector<std::uint8_t>> labels(3);
    for (auto& t : labels) {
      t.resize(7);
      for (auto& v : t) v = gen.uniform() < 0.5;
    }
    std::vector<std::vector<double>> sigs(3);
    for (auto& s : sigs) {
      s.resize(4);
      for (auto& v : s) v = gen.gaussian();
    }
    Rng ra(55), rb(55);
    auto f = simulate_features(labels, sigs, 2, 0.25, ra);
    // Oracle: same accumulation order, independent arithmetic.
    for (std::size_t row = 0; row < 14; ++row) {
      std::size_t frame = row / 2;
      for (std::size_t c = 0; c < 4; ++c) {
        double expect = 0.0;
        for (std::size_t s = 0; s < 3; ++s)
          if (labels[s][frame]) expect += sigs[s][c];
        expect += 0.25 * rb.gaussian();
        CHECK(f[row * 4 + c] == doctest::Approx(expect).epsilon(1e-12));
      }
    }
  }
}

TEST_CASE("make_dataset writes a loadable, reproducible dataset") {
  DatasetBuildConfig cfg;
  cfg.n_segments = 12;
  cfg.pool_size = 8;
  cfg.seed = 99;
  std::string dir_a = temp_dir("ds_a");
  std::string dir_b = temp_dir("ds_b");
  make_dataset(cfg, dir_a);
  make_dataset(cfg, dir_b);

  for (const char* name : {"manifest.txt", "labels.bin", "features.bin",
                           "enroll.bin", "pool.bin", "ref.rttm",
                           "checksums.txt"}) {
    CHECK(slurp(dir_a + "/" + name) == slurp(dir_b + "/" + name));
  }

  Dataset ds = Dataset::load(dir_a);
  CHECK(ds.size() == 12);
  CHECK(ds.meta().speakers == 3);
  auto labels = ds.labels(0);
  REQUIRE(labels.size() == 3);
  for (const auto& t : labels) {
    REQUIRE(t.size() == 200);
    for (auto v : t) CHECK((v == 0 || v == 1));
  }
  auto feats = ds.features(0);
  CHECK(feats.dim(0) == 1600);
  CHECK(feats.dim(1) == 16);
  auto enr = ds.enrollments(0);
  REQUIRE(enr.size() == 3);
  CHECK(enr[0].size() == 16);
  CHECK(ds.pool().size() == 8);

  // every 4th segment held out by default
  auto eval = ds.split_indices(true);
  CHECK(eval.size() == 3);
  auto train = ds.split_indices(false);
  CHECK(train.size() == 9);

  fs::remove_all(dir_a);
  fs::remove_all(dir_b);
}

TEST_CASE("empty dataset still has a valid manifest") {
  DatasetBuildConfig cfg;
  cfg.n_segments = 0;
  cfg.pool_size = 4;
  std::string dir = temp_dir("ds_empty");
  make_dataset(cfg, dir);
  Dataset ds = Dataset::load(dir);
  CHECK(ds.size() == 0);
  fs::remove_all(dir);
}

TEST_CASE("dataset label statistics match the spec-implied values") {
  // 2000 segments is enough for ~1% standard error on the speech fraction.
  DatasetBuildConfig cfg;
  cfg.n_segments = 2000;
  cfg.with_features = false;
  cfg.pool_size = 0;
  cfg.conversation.overlap_prob = 0.0;
  cfg.conversation.mean_turn = 3.0;
  cfg.conversation.mean_pause = 1.0;
  cfg.seed = 31337;
  std::string dir = temp_dir("ds_stats");
  make_dataset(cfg, dir);
  Dataset ds = Dataset::load(dir);

  std::int64_t speech = 0, total = 0;
  for (std::size_t i = 0; i < ds.size(); ++i) {
    for (const auto& track : ds.labels(i)) {
      for (auto v : track) speech += v;
      total += static_cast<std::int64_t>(track.size());
    }
  }
  double frac = static_cast<double>(speech) / (3.0 * 200.0 * 2000.0 / 3.0);
  // With no overlap the union timeline alternates Exp(turn)/Exp(pause), so
  // aggregate speech time over all tracks approaches turn/(turn+pause) of
  // the wall clock.
  double speech_per_wall = static_cast<double>(speech) / (200.0 * 2000.0);
  double expect = 3.0 / (3.0 + 1.0);
  CHECK(std::fabs(speech_per_wall - expect) / expect < 0.05);
  (void)frac;
  (void)total;
  fs::remove_all(dir);
}
