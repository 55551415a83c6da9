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

#ifndef FLOWDIAR_SCORING_HPP_
#define FLOWDIAR_SCORING_HPP_

#include <cstdint>
#include <map>
#include <string>
#include <vector>

namespace flowdiar {

// One attributed speech segment, [start, end) in seconds.
struct Turn {
  std::string speaker;
  double start = 0.0;
  double end = 0.0;
};

struct DiarizationHypothesis {
  std::string file_id;
  std::vector<Turn> turns;
};

// Keyed by file id; ordered so that iteration (and emission) is stable.
using HypothesisSet = std::map<std::string, DiarizationHypothesis>;

enum class SpeakerMapping { kOptimal, kIdentity };

SpeakerMapping parse_mapping(const std::string& name);
const char* mapping_name(SpeakerMapping m);

struct DerReport {
  // Percentages of scored reference speech.
  double miss = 0.0;
  double false_alarm = 0.0;
  double confusion = 0.0;
  double der = 0.0;
  // Raw accumulations in seconds.
  double miss_seconds = 0.0;
  double fa_seconds = 0.0;
  double conf_seconds = 0.0;
  double scored_speech_seconds = 0.0;
  std::vector<std::string> missing_files;  // corpus scoring only
};

// RTTM interchange. Parsing accepts SPEAKER records, skips blank lines and
// lines starting with ';' or '#', and reports malformed lines by number.
HypothesisSet parse_rttm(const std::string& text);
HypothesisSet parse_rttm_file(const std::string& path);
// One line per segment, 3-decimal times, sorted by (file, start, end, name).
std::string emit_rttm(const HypothesisSet& hypotheses);
void write_rttm_file(const HypothesisSet& hypotheses, const std::string& path);

// Maximal runs of ones become [i*dt, (i+run)*dt) segments.
std::vector<Turn> frames_to_segments(const std::vector<std::uint8_t>& frames,
                                     double frame_duration,
                                     const std::string& speaker);
// A frame is active when its midpoint lies inside some segment.
std::vector<std::uint8_t> segments_to_frames(const std::vector<Turn>& turns,
                                             double frame_duration,
                                             int n_frames);

// Diarization error rate decomposed into miss / false alarm / confusion.
// Regions within +-collar of any reference boundary are excluded; overlap
// regions are scored; the optimal speaker map maximizes matched time via
// exact assignment on the scored-overlap matrix.
DerReport compute_der(const DiarizationHypothesis& reference,
                      const DiarizationHypothesis& hypothesis,
                      double collar = 0.25,
                      SpeakerMapping mapping = SpeakerMapping::kOptimal);

// Time-weighted aggregation: error seconds summed over files before
// normalization. Files missing from `hyp` score as all-miss and are listed
// in the report.
DerReport score_corpus(const HypothesisSet& ref, const HypothesisSet& hyp,
                       double collar = 0.25,
                       SpeakerMapping mapping = SpeakerMapping::kOptimal);

}  // namespace flowdiar

#endif  // FLOWDIAR_SCORING_HPP_
