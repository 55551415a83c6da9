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

#ifndef FLOWDIAR_SIMULATOR_HPP_
#define FLOWDIAR_SIMULATOR_HPP_

#include <cstdint>
#include <string>
#include <vector>

#include "flowdiar/dataset.hpp"
#include "flowdiar/rng.hpp"

namespace flowdiar {

// Turn-taking statistics for one synthetic conversation.
struct ConversationSpec {
  int num_speakers = 3;
  double duration = 16.0;     // seconds
  double mean_turn = 3.0;     // exponential mean, seconds
  double mean_pause = 1.0;    // exponential mean, seconds
  double overlap_prob = 0.2;  // chance a turn starts before the previous ends
};

void validate_spec(const ConversationSpec& spec);

struct LabelSimResult {
  // num_speakers tracks of {0,1}, frame_duration seconds per frame.
  std::vector<std::vector<std::uint8_t>> tracks;
  double overlap_ratio = 0.0;  // frames with >=2 active / frames with >=1
};

// Alternating exponential talk/pause turn-taking; with probability
// overlap_prob a turn starts before the previous one ends.
LabelSimResult simulate_labels(const ConversationSpec& spec,
                               double frame_duration, Rng& rng);

// (repeat * L, F) features: the sum of active speakers' signatures per
// acoustic frame plus isotropic Gaussian noise. Activity is each label frame
// repeated `repeat` times.
std::vector<double> simulate_features(
    const std::vector<std::vector<std::uint8_t>>& labels,
    const std::vector<std::vector<double>>& signatures, int repeat,
    double noise_sigma, Rng& rng);

struct DatasetBuildConfig {
  ConversationSpec conversation;
  int n_segments = 256;
  int feature_dim = 16;
  int downsample = 8;
  double frame_seconds = 0.08;
  int label_frames = 200;
  double noise_sigma = 0.5;
  double enroll_noise = 0.1;
  int pool_size = 64;
  int eval_every = 4;  // every k-th segment held out; 0 disables
  bool with_features = true;
  std::uint64_t seed = 17;
};

// Writes manifest.txt, labels.bin, enroll.bin, pool.bin, ref.rttm,
// checksums.txt and (optionally) features.bin into out_dir. Pure function of
// (config, seed): reruns are byte-identical. Per-segment draws come from
// seeds forked on the segment index, so generation order cannot matter.
void make_dataset(const DatasetBuildConfig& config, const std::string& out_dir);

}  // namespace flowdiar

#endif  // FLOWDIAR_SIMULATOR_HPP_
