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

#ifndef FLOWDIAR_ENSEMBLE_HPP_
#define FLOWDIAR_ENSEMBLE_HPP_

#include <vector>

#include "flowdiar/scoring.hpp"

namespace flowdiar {

// Maps every hypothesis into the label space of the first one: each
// subsequent hypothesis is relabeled by the exact assignment maximizing
// overlap duration with the accumulated relabeled set; speakers without any
// overlap get fresh labels.
std::vector<DiarizationHypothesis> align_speakers(
    const std::vector<DiarizationHypothesis>& hypotheses);

struct EnsembleOptions {
  double frame_resolution = 0.01;  // seconds
  // Optional explicit positive weights (hypotheses then used as given).
  // When absent, hypotheses are aligned and weighted 1/rank, ranked by
  // average pairwise DER against the others (lowest first).
  std::vector<double> weights;
};

// Rank-weighted overlap-aware frame voting. Per frame the speaker count is
// the weighted mean of the per-hypothesis counts rounded half-down, and the
// top-count speakers by weighted vote are emitted (lexicographic tie-break).
DiarizationHypothesis vote(const std::vector<DiarizationHypothesis>& hypotheses,
                           const EnsembleOptions& options = {});

}  // namespace flowdiar

#endif  // FLOWDIAR_ENSEMBLE_HPP_
