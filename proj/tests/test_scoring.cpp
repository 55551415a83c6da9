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

#include "doctest.h"
#include "flowdiar/errors.hpp"
#include "flowdiar/scoring.hpp"
#include "oracles.hpp"

using namespace flowdiar;

TEST_CASE("rttm parse basics") {
  auto set = parse_rttm("SPEAKER f1 1 0.00 2.50 <NA> <NA> spkA <NA> <NA>\n");
  REQUIRE(set.size() == 1);
  const auto& h = set.at("f1");
  REQUIRE(h.turns.size() == 1);
  CHECK(h.turns[0].speaker == "spkA");
  CHECK(h.turns[0].start == doctest::Approx(0.0));
  CHECK(h.turns[0].end == doctest::Approx(2.5));

  CHECK(parse_rttm("").empty());
  CHECK(parse_rttm("; comment\n\n# another\n").empty());

  CHECK_THROWS_AS(parse_rttm("SPEAKER f1 1 0.0 -1.0 <NA> <NA> a <NA> <NA>\n"),
                  Error);
  CHECK_THROWS_AS(parse_rttm("LATTICE f1 1 0.0 1.0 <NA> <NA> a <NA> <NA>\n"),
                  Error);
  CHECK_THROWS_AS(parse_rttm("SPEAKER f1 1 zero 1.0 <NA> <NA> a <NA> <NA>\n"),
                  Error);
  try {
    parse_rttm("SPEAKER f1 1 0.0 1.0 <NA> <NA> a <NA> <NA>\nbogus line\n");
    FAIL("expected parse error");
  } catch (const Error& e) {
    CHECK(std::string(e.what()).find("2") != std::string::npos);
  }
}

TEST_CASE("rttm round trip: parse after emit reproduces the parse") {
  Rng rng(101);
  for (int trial = 0; trial < 50; ++trial) {
    HypothesisSet set;
    int n_files = 1 + rng.uniform_int(3);
    for (int f = 0; f < n_files; ++f) {
      std::string id = "file" + std::to_string(f);
      set[id] = test::random_hypothesis(rng, id);
    }
    std::string text = emit_rttm(set);
    HypothesisSet parsed = parse_rttm(text);
    // Emission of the parse is byte-identical.
    CHECK(emit_rttm(parsed) == text);
    HypothesisSet parsed2 = parse_rttm(emit_rttm(parsed));
    REQUIRE(parsed2.size() == parsed.size());
    for (const auto& [id, hyp] : parsed) {
      const auto& hyp2 = parsed2.at(id);
      REQUIRE(hyp2.turns.size() == hyp.turns.size());
      for (std::size_t i = 0; i < hyp.turns.size(); ++i) {
        CHECK(hyp2.turns[i].speaker == hyp.turns[i].speaker);
        CHECK(hyp2.turns[i].start == hyp.turns[i].start);
        CHECK(hyp2.turns[i].end == hyp.turns[i].end);
      }
    }
  }
}

TEST_CASE("frames to segments and back") {
  std::vector<std::uint8_t> frames = {0, 0, 1, 1, 1, 0, 0};
  auto segs = frames_to_segments(frames, 0.08, "a");
  REQUIRE(segs.size() == 1);
  CHECK(segs[0].start == doctest::Approx(0.16));
  CHECK(segs[0].end == doctest::Approx(0.40));

  CHECK(frames_to_segments({0, 0, 0}, 0.08, "a").empty());

  Rng rng(7);
  for (int trial = 0; trial < 30; ++trial) {
    std::vector<std::uint8_t> f(40);
    for (auto& v : f) v = rng.uniform() < 0.4 ? 1 : 0;
    auto back = segments_to_frames(frames_to_segments(f, 0.08, "x"), 0.08,
                                   static_cast<int>(f.size()));
    CHECK(back == f);
  }
}

TEST_CASE("compute_der reference cases") {
  SUBCASE("identical hypothesis scores zero") {
    DiarizationHypothesis ref{"f", {{"a", 0.0, 5.0}, {"b", 3.0, 8.0}}};
    auto r = compute_der(ref, ref, 0.25, SpeakerMapping::kOptimal);
    CHECK(r.miss == doctest::Approx(0.0));
    CHECK(r.false_alarm == doctest::Approx(0.0));
    CHECK(r.confusion == doctest::Approx(0.0));
    CHECK(r.der == doctest::Approx(0.0));
  }
  SUBCASE("truncated hypothesis at collar zero gives 20 percent miss") {
    DiarizationHypothesis ref{"f", {{"a", 0.0, 10.0}}};
    DiarizationHypothesis hyp{"f", {{"a", 0.0, 8.0}}};
    auto r = compute_der(ref, hyp, 0.0, SpeakerMapping::kOptimal);
    CHECK(r.miss == doctest::Approx(20.0).epsilon(1e-9));
    CHECK(r.false_alarm == doctest::Approx(0.0));
    CHECK(r.confusion == doctest::Approx(0.0));
    CHECK(r.der == doctest::Approx(20.0).epsilon(1e-9));
  }
  SUBCASE("renamed speaker: optimal forgives, identity confuses") {
    DiarizationHypothesis ref{"f", {{"A", 0.0, 10.0}}};
    DiarizationHypothesis hyp{"f", {{"B", 0.0, 10.0}}};
    auto opt = compute_der(ref, hyp, 0.0, SpeakerMapping::kOptimal);
    CHECK(opt.der == doctest::Approx(0.0));
    auto idm = compute_der(ref, hyp, 0.0, SpeakerMapping::kIdentity);
    CHECK(idm.confusion == doctest::Approx(100.0));
    CHECK(idm.der == doctest::Approx(100.0));
  }
  SUBCASE("empty scored reference is an error") {
    DiarizationHypothesis ref{"f", {}};
    DiarizationHypothesis hyp{"f", {{"a", 0.0, 1.0}}};
    CHECK_THROWS_AS(compute_der(ref, hyp, 0.0), Error);
  }
  SUBCASE("mismatched file ids rejected") {
    DiarizationHypothesis ref{"f1", {{"a", 0.0, 1.0}}};
    DiarizationHypothesis hyp{"f2", {{"a", 0.0, 1.0}}};
    CHECK_THROWS_AS(compute_der(ref, hyp), Error);
  }
}

TEST_CASE("compute_der matches the 10ms frame oracle on random cases") {
  Rng rng(2024);
  int cases = 0;
  while (cases < 100) {
    DiarizationHypothesis ref = test::random_hypothesis(rng, "f");
    DiarizationHypothesis hyp = test::random_hypothesis(rng, "f");
    for (double collar : {0.0, 0.25}) {
      for (auto mapping : {SpeakerMapping::kOptimal, SpeakerMapping::kIdentity}) {
        test::FrameDerOracle oracle =
            test::frame_der_oracle(ref, hyp, collar, mapping);
        if (oracle.scored_ref_seconds <= 0.0) {
          CHECK_THROWS_AS(compute_der(ref, hyp, collar, mapping), Error);
          continue;
        }
        DerReport r = compute_der(ref, hyp, collar, mapping);
        CHECK(std::fabs(r.miss_seconds - oracle.miss_seconds) <= 1e-9);
        CHECK(std::fabs(r.fa_seconds - oracle.fa_seconds) <= 1e-9);
        CHECK(std::fabs(r.conf_seconds - oracle.conf_seconds) <= 1e-9);
        CHECK(std::fabs(r.scored_speech_seconds - oracle.scored_ref_seconds) <=
              1e-9);
      }
    }
    ++cases;
  }
}

TEST_CASE("der is invariant under hypothesis relabeling with optimal mapping") {
  Rng rng(55);
  for (int trial = 0; trial < 20; ++trial) {
    DiarizationHypothesis ref = test::random_hypothesis(rng, "f");
    DiarizationHypothesis hyp = test::random_hypothesis(rng, "f");
    DiarizationHypothesis renamed = hyp;
    for (auto& t : renamed.turns) t.speaker = "zz_" + t.speaker;
    bool ok = true;
    DerReport a, b;
    try {
      a = compute_der(ref, hyp, 0.25, SpeakerMapping::kOptimal);
      b = compute_der(ref, renamed, 0.25, SpeakerMapping::kOptimal);
    } catch (const Error&) {
      ok = false;  // no scored speech in this draw
    }
    if (ok) CHECK(a.der == doctest::Approx(b.der).epsilon(1e-9));
  }
}

TEST_CASE("hypothesis segments inside collar zones never change the score") {
  DiarizationHypothesis ref{"f", {{"a", 1.0, 5.0}, {"b", 8.0, 12.0}}};
  DiarizationHypothesis hyp{"f", {{"a", 1.0, 5.0}, {"b", 8.0, 12.0}}};
  auto base = compute_der(ref, hyp, 0.25, SpeakerMapping::kOptimal);
  // Entirely inside the exclusion zones around 1.0, 5.0 and 8.0.
  DiarizationHypothesis padded = hyp;
  padded.turns.push_back({"c", 0.8, 1.2});
  padded.turns.push_back({"a", 4.8, 5.2});
  padded.turns.push_back({"zz", 7.8, 8.2});
  auto scored = compute_der(ref, padded, 0.25, SpeakerMapping::kOptimal);
  CHECK(scored.miss_seconds == doctest::Approx(base.miss_seconds).epsilon(1e-12));
  CHECK(scored.fa_seconds == doctest::Approx(base.fa_seconds).epsilon(1e-12));
  CHECK(scored.conf_seconds == doctest::Approx(base.conf_seconds).epsilon(1e-12));
  CHECK(scored.der == doctest::Approx(base.der).epsilon(1e-12));
}

TEST_CASE("score_corpus aggregates time-weighted") {
  DiarizationHypothesis ref1{"f1", {{"a", 0.0, 10.0}}};
  DiarizationHypothesis hyp1{"f1", {{"a", 0.0, 8.0}}};
  DiarizationHypothesis ref2{"f2", {{"a", 0.0, 2.0}}};
  DiarizationHypothesis hyp2{"f2", {{"a", 0.0, 2.0}}};

  SUBCASE("single file equals compute_der") {
    HypothesisSet ref{{"f1", ref1}}, hyp{{"f1", hyp1}};
    auto corpus = score_corpus(ref, hyp, 0.0);
    auto single = compute_der(ref1, hyp1, 0.0);
    CHECK(corpus.der == doctest::Approx(single.der));
  }
  SUBCASE("two files weight by reference duration") {
    HypothesisSet ref{{"f1", ref1}, {"f2", ref2}};
    HypothesisSet hyp{{"f1", hyp1}, {"f2", hyp2}};
    auto corpus = score_corpus(ref, hyp, 0.0);
    // 2s missed of 12s total reference speech.
    CHECK(corpus.der == doctest::Approx(100.0 * 2.0 / 12.0).epsilon(1e-9));
  }
  SUBCASE("equal-duration equal-DER files aggregate to the same DER") {
    DiarizationHypothesis ref3{"f3", {{"x", 0.0, 10.0}}};
    DiarizationHypothesis hyp3{"f3", {{"x", 0.0, 8.0}}};
    HypothesisSet ref{{"f1", ref1}, {"f3", ref3}};
    HypothesisSet hyp{{"f1", hyp1}, {"f3", hyp3}};
    auto corpus = score_corpus(ref, hyp, 0.0);
    CHECK(corpus.der == doctest::Approx(20.0).epsilon(1e-9));
  }
  SUBCASE("missing hypothesis file counts as all miss and is reported") {
    HypothesisSet ref{{"f1", ref1}, {"f2", ref2}};
    HypothesisSet hyp{{"f1", hyp1}};
    auto corpus = score_corpus(ref, hyp, 0.0);
    REQUIRE(corpus.missing_files.size() == 1);
    CHECK(corpus.missing_files[0] == "f2");
    CHECK(corpus.miss_seconds == doctest::Approx(2.0 + 2.0).epsilon(1e-9));
  }
}

TEST_CASE("der components always sum to der") {
  Rng rng(77);
  for (int trial = 0; trial < 40; ++trial) {
    DiarizationHypothesis ref = test::random_hypothesis(rng, "f");
    DiarizationHypothesis hyp = test::random_hypothesis(rng, "f");
    try {
      auto r = compute_der(ref, hyp, 0.25);
      CHECK(std::fabs(r.der - (r.miss + r.false_alarm + r.confusion)) < 1e-9);
      CHECK(r.miss >= 0.0);
      CHECK(r.false_alarm >= 0.0);
      CHECK(r.confusion >= 0.0);
    } catch (const Error&) {
      // acceptable: the random reference had no scored speech
    }
  }
}
