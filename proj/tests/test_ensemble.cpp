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
#include <algorithm>
#include <cmath>

#include "doctest.h"
#include "flowdiar/ensemble.hpp"
#include "flowdiar/errors.hpp"
#include "oracles.hpp"

using namespace flowdiar;

namespace {

std::string canon(const DiarizationHypothesis& h) {
  return emit_rttm({{h.file_id, h}});
}

}  // namespace

TEST_CASE("align_speakers") {
  DiarizationHypothesis base{"f", {{"a", 0.0, 4.0}, {"b", 5.0, 9.0}}};

  SUBCASE("single hypothesis returned unchanged") {
    auto out = align_speakers({base});
    REQUIRE(out.size() == 1);
    CHECK(canon(out[0]) == canon(base));
  }
  SUBCASE("permuted names align back to the first label space") {
    DiarizationHypothesis renamed{"f", {{"x", 0.0, 4.0}, {"y", 5.0, 9.0}}};
    auto out = align_speakers({base, renamed});
    REQUIRE(out.size() == 2);
    CHECK(canon(out[1]) == canon(base));
  }
  SUBCASE("crossed two-speaker mapping matches the permutation oracle") {
    Rng rng(17);
    for (int trial = 0; trial < 20; ++trial) {
      DiarizationHypothesis h1 = test::random_hypothesis(rng, "f", 2, 4);
      DiarizationHypothesis h2 = test::random_hypothesis(rng, "f", 2, 4);
      auto out = align_speakers({h1, h2});

      // Oracle: try both possible assignments of h2's speakers onto h1's.
      auto overlap = [](const DiarizationHypothesis& a, const std::string& sa,
                        const DiarizationHypothesis& b, const std::string& sb) {
        double total = 0.0;
        for (const auto& x : a.turns) {
          if (x.speaker != sa) continue;
          for (const auto& y : b.turns) {
            if (y.speaker != sb) continue;
            total += std::max(0.0, std::min(x.end, y.end) -
                                       std::max(x.start, y.start));
          }
        }
        return total;
      };
      std::vector<std::string> s1, s2;
      for (const auto& t : h1.turns)
        if (std::find(s1.begin(), s1.end(), t.speaker) == s1.end())
          s1.push_back(t.speaker);
      for (const auto& t : h2.turns)
        if (std::find(s2.begin(), s2.end(), t.speaker) == s2.end())
          s2.push_back(t.speaker);
      if (s1.size() != 2 || s2.size() != 2) continue;
      std::sort(s1.begin(), s1.end());
      std::sort(s2.begin(), s2.end());
      double straight = overlap(h2, s2[0], h1, s1[0]) +
                        overlap(h2, s2[1], h1, s1[1]);
      double crossed = overlap(h2, s2[0], h1, s1[1]) +
                       overlap(h2, s2[1], h1, s1[0]);
      if (straight == crossed) continue;  // degenerate tie, mapping free
      bool expect_straight = straight > crossed;

      // Recover the realized mapping from the relabeled output. Pairs with
      // zero overlap are legitimately given fresh labels instead.
      std::map<std::string, std::string> realized;
      for (std::size_t i = 0; i < h2.turns.size(); ++i)
        realized[h2.turns[i].speaker] = out[1].turns[i].speaker;
      if (expect_straight) {
        if (overlap(h2, s2[0], h1, s1[0]) > 0.0)
          CHECK(realized[s2[0]] == s1[0]);
        if (overlap(h2, s2[1], h1, s1[1]) > 0.0)
          CHECK(realized[s2[1]] == s1[1]);
      } else {
        if (overlap(h2, s2[0], h1, s1[1]) > 0.0)
          CHECK(realized[s2[0]] == s1[1]);
        if (overlap(h2, s2[1], h1, s1[0]) > 0.0)
          CHECK(realized[s2[1]] == s1[0]);
      }
    }
  }
}

TEST_CASE("vote basics") {
  // Grid-aligned turns so resolution quantization is exact.
  DiarizationHypothesis h{"f", {{"a", 0.0, 2.0}, {"b", 1.0, 3.0}}};

  SUBCASE("identical hypotheses vote to the same result") {
    auto out = vote({h, h, h});
    CHECK(canon(out) == canon(h));
  }
  SUBCASE("single hypothesis is passed through (quantized)") {
    auto out = vote({h});
    CHECK(canon(out) == canon(h));
  }
  SUBCASE("two of three agreeing on a speaker keeps it active") {
    DiarizationHypothesis h1{"f", {{"a", 0.0, 0.05}}};
    DiarizationHypothesis h2{"f", {{"a", 0.0, 0.05}}};
    DiarizationHypothesis h3{"f", {{"a", 0.03, 0.05}}};
    EnsembleOptions opts;
    opts.weights = {1.0, 1.0, 1.0};
    auto out = vote({h1, h2, h3}, opts);
    // frames 0,1,2 have counts (1,1,0): mean 2/3 -> 1 active; a wins.
    REQUIRE(out.turns.size() == 1);
    CHECK(out.turns[0].speaker == "a");
    CHECK(out.turns[0].start == doctest::Approx(0.0));
    CHECK(out.turns[0].end == doctest::Approx(0.05));
  }
  SUBCASE("vote order invariance for identical equal-weight inputs") {
    DiarizationHypothesis g{"f", {{"a", 0.0, 1.0}, {"b", 0.5, 2.0}}};
    EnsembleOptions opts;
    opts.weights = {1.0, 1.0, 1.0};
    auto out1 = vote({h, g, g}, opts);
    auto out2 = vote({g, g, h}, opts);
    CHECK(canon(out1) == canon(out2));
  }
  SUBCASE("non-positive weights rejected") {
    EnsembleOptions opts;
    opts.weights = {1.0, 0.0};
    CHECK_THROWS_AS(vote({h, h}, opts), Error);
  }
  SUBCASE("mismatched file ids rejected") {
    DiarizationHypothesis other{"g", {{"a", 0.0, 1.0}}};
    CHECK_THROWS_AS(vote({h, other}), Error);
  }
}

TEST_CASE("voted speech time is bounded on count-agreeing frames") {
  Rng rng(71);
  for (int trial = 0; trial < 10; ++trial) {
    std::vector<DiarizationHypothesis> hyps;
    for (int i = 0; i < 3; ++i)
      hyps.push_back(test::random_hypothesis(rng, "f", 3, 5));
    EnsembleOptions opts;
    opts.weights = {1.0, 1.0, 1.0};
    auto out = vote(hyps, opts);

    double res = opts.frame_resolution;
    double max_end = 0.0;
    for (const auto& hh : hyps)
      for (const auto& t : hh.turns) max_end = std::max(max_end, t.end);
    int n = static_cast<int>(std::ceil(max_end / res - 1e-9));
    auto count_at = [&](const DiarizationHypothesis& hh, double mid) {
      std::set<std::string> s;
      for (const auto& t : hh.turns)
        if (t.start <= mid && mid < t.end) s.insert(t.speaker);
      return static_cast<int>(s.size());
    };
    for (int f = 0; f < n; ++f) {
      double mid = (f + 0.5) * res;
      int c0 = count_at(hyps[0], mid);
      if (count_at(hyps[1], mid) != c0 || count_at(hyps[2], mid) != c0)
        continue;
      CHECK(count_at(out, mid) == c0);
    }
  }
}

TEST_CASE("rank weighting favors the consensus hypothesis") {
  // Two identical good runs and one bad run: the consensus must win where
  // they disagree, whatever the bad run says.
  DiarizationHypothesis good{"f", {{"a", 0.0, 2.0}}};
  DiarizationHypothesis bad{"f", {{"a", 0.0, 4.0}}};
  auto out = vote({good, bad, good});
  REQUIRE(out.turns.size() == 1);
  CHECK(out.turns[0].end == doctest::Approx(2.0));
}
