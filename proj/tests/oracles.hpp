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

// Test-only brute-force references, kept independent of the library
// implementations they check.

#ifndef FLOWDIAR_TESTS_ORACLES_HPP_
#define FLOWDIAR_TESTS_ORACLES_HPP_

#include <algorithm>
#include <cmath>
#include <map>
#include <set>
#include <string>
#include <vector>

#include "flowdiar/assignment.hpp"
#include "flowdiar/rng.hpp"
#include "flowdiar/scoring.hpp"

namespace flowdiar::test {

struct FrameDerOracle {
  double miss_seconds = 0.0;
  double fa_seconds = 0.0;
  double conf_seconds = 0.0;
  double scored_ref_seconds = 0.0;
  double der_percent() const {
    return 100.0 * (miss_seconds + fa_seconds + conf_seconds) /
           scored_ref_seconds;
  }
};

// Frame-level DER at a fixed resolution. Only valid when all segment times
// and the collar are multiples of the resolution.
inline FrameDerOracle frame_der_oracle(const DiarizationHypothesis& ref,
                                       const DiarizationHypothesis& hyp,
                                       double collar, SpeakerMapping mapping,
                                       double resolution = 0.01) {
  double max_t = 0.0;
  for (const auto& t : ref.turns) max_t = std::max(max_t, t.end + collar);
  for (const auto& t : hyp.turns) max_t = std::max(max_t, t.end);
  int n_frames = static_cast<int>(std::ceil(max_t / resolution - 1e-9));

  std::map<std::string, int> rid, hid;
  for (const auto& t : ref.turns) rid.emplace(t.speaker, 0);
  for (const auto& t : hyp.turns) hid.emplace(t.speaker, 0);
  int nr = 0, nh = 0;
  for (auto& [k, v] : rid) v = nr++;
  for (auto& [k, v] : hid) v = nh++;

  auto active_at = [](const std::vector<Turn>& turns, double m) {
    std::set<std::string> s;
    for (const auto& t : turns)
      if (t.start <= m && m < t.end) s.insert(t.speaker);
    return s;
  };

  std::vector<char> excluded(static_cast<std::size_t>(n_frames), 0);
  for (int i = 0; i < n_frames; ++i) {
    double m = (i + 0.5) * resolution;
    for (const auto& t : ref.turns) {
      if ((m >= t.start - collar && m <= t.start + collar) ||
          (m >= t.end - collar && m <= t.end + collar)) {
        excluded[static_cast<std::size_t>(i)] = 1;
        break;
      }
    }
  }

  // Mapping from the scored-frame overlap counts.
  std::vector<int> ref_to_hyp(static_cast<std::size_t>(nr), -1);
  if (mapping == SpeakerMapping::kIdentity) {
    for (const auto& [name, r] : rid) {
      auto it = hid.find(name);
      if (it != hid.end()) ref_to_hyp[static_cast<std::size_t>(r)] = it->second;
    }
  } else if (nr > 0 && nh > 0) {
    std::vector<std::vector<double>> counts(
        static_cast<std::size_t>(nr),
        std::vector<double>(static_cast<std::size_t>(nh), 0.0));
    for (int i = 0; i < n_frames; ++i) {
      if (excluded[static_cast<std::size_t>(i)]) continue;
      double m = (i + 0.5) * resolution;
      auto ra = active_at(ref.turns, m);
      auto ha = active_at(hyp.turns, m);
      for (const auto& r : ra)
        for (const auto& h : ha)
          counts[static_cast<std::size_t>(rid[r])]
                [static_cast<std::size_t>(hid[h])] += 1.0;
    }
    max_score_assignment(counts, &ref_to_hyp);
  }

  std::map<int, int> inv_hid;  // hyp index -> hyp index (for lookup symmetry)
  FrameDerOracle acc;
  for (int i = 0; i < n_frames; ++i) {
    if (excluded[static_cast<std::size_t>(i)]) continue;
    double m = (i + 0.5) * resolution;
    auto ra = active_at(ref.turns, m);
    auto ha = active_at(hyp.turns, m);
    int cr = static_cast<int>(ra.size());
    int ch = static_cast<int>(ha.size());
    int matched = 0;
    for (const auto& r : ra) {
      int h = ref_to_hyp[static_cast<std::size_t>(rid[r])];
      if (h < 0) continue;
      for (const auto& [name, id] : hid)
        if (id == h && ha.count(name)) ++matched;
    }
    acc.miss_seconds += std::max(0, cr - ch) * resolution;
    acc.fa_seconds += std::max(0, ch - cr) * resolution;
    acc.conf_seconds += (std::min(cr, ch) - matched) * resolution;
    acc.scored_ref_seconds += cr * resolution;
  }
  return acc;
}

// Random diarization hypothesis on a 10 ms grid.
inline DiarizationHypothesis random_hypothesis(Rng& rng,
                                               const std::string& file_id,
                                               int max_speakers = 3,
                                               int max_turns = 6,
                                               double horizon = 20.0) {
  DiarizationHypothesis h;
  h.file_id = file_id;
  int n_spk = 1 + rng.uniform_int(max_speakers);
  int n_turns = 1 + rng.uniform_int(max_turns);
  for (int i = 0; i < n_turns; ++i) {
    int spk = rng.uniform_int(n_spk);
    double start = 0.01 * rng.uniform_int(static_cast<int>(horizon * 100) - 50);
    double dur = 0.01 * (10 + rng.uniform_int(300));
    h.turns.push_back(
        Turn{"spk" + std::to_string(spk), start, start + dur});
  }
  return h;
}

}  // namespace flowdiar::test

#endif  // FLOWDIAR_TESTS_ORACLES_HPP_
