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

#ifndef FLOWDIAR_LABEL_CODEC_HPP_
#define FLOWDIAR_LABEL_CODEC_HPP_

#include <cstdint>
#include <vector>

#include "flowdiar/rng.hpp"
#include "flowdiar/tensor.hpp"

namespace flowdiar {

// Fixed segment geometry: 16 s of audio at 80 ms per voice-activity frame.
inline constexpr int kLabelFrames = 200;
inline constexpr double kFrameSeconds = 0.08;

struct BinaryLabelSequence {
  std::vector<std::uint8_t> frames;  // strictly {0,1}, length kLabelFrames
  double frame_duration = kFrameSeconds;
};

void validate_labels(const std::vector<std::uint8_t>& frames);

struct LabelAEConfig {
  int latent_dim = 32;  // one of {16, 32, 64} in the studied range
  double layer_norm_eps = 1e-5;
};

// Convolutional auto-encoder between binary voice-activity sequences and a
// dense latent vector.
//
//   encoder: Conv+SiLU (16,5,2,2) -> Conv+SiLU (32,3,2,1) -> Conv+SiLU
//            (64,3,1,1) -> Flatten(3200) -> Linear -> LayerNorm
//   decoder: LayerNorm+SiLU -> Linear(k->2k)+SiLU -> Linear(2k->3200)+SiLU
//            -> Unflatten(64,50) -> ConvT+SiLU (32,3,1,1,0)
//            -> ConvT+SiLU (16,3,2,1,1) -> ConvT (1,5,2,2,1)
//            -> Conv (16,5,1,2) -> Conv+Sigmoid (1,3,1,1)
class LabelCodec {
 public:
  LabelCodec(const LabelAEConfig& config, Rng& init_rng);

  int latent_dim() const { return config_.latent_dim; }
  const LabelAEConfig& config() const { return config_; }

  // labels: (1, 200) or (200,) tensor of {0,1} values. Optionally records
  // the per-layer output shapes.
  num::Tensor encode(const num::Tensor& labels,
                     std::vector<std::vector<int>>* trace = nullptr) const;
  num::Tensor decode(const num::Tensor& latent,
                     std::vector<std::vector<int>>* trace = nullptr) const;

  // Graph-free conveniences.
  std::vector<double> encode_labels(const std::vector<std::uint8_t>& frames) const;
  std::vector<double> decode_latent(const std::vector<double>& latent) const;

  num::ParamList& parameters() { return params_; }
  const num::ParamList& parameters() const { return params_; }
  void set_trainable(bool on);

 private:
  num::Tensor param(const char* name) const;

  LabelAEConfig config_;
  num::ParamList params_;
};

// Sum over frames of -y log(p) - (1-y) log(1-p), p clamped to
// [clamp_eps, 1-clamp_eps].
double bce_loss(const std::vector<std::uint8_t>& target,
                const std::vector<double>& prediction,
                double clamp_eps = 1e-7);

struct LabelAETrainConfig {
  int latent_dim = 32;
  int epochs = 8;
  double lr = 1e-3;
  int batch = 32;
  std::uint64_t seed = 5;
  double clamp_eps = 1e-7;
};

struct TrainCurvePoint {
  std::int64_t step;
  double loss;
};

// Minimizes mean-over-batch of the per-sequence BCE sum with Adam.
// Deterministic given the seed; aborts on non-finite loss.
LabelCodec train_label_ae(const std::vector<std::vector<std::uint8_t>>& dataset,
                          const LabelAETrainConfig& config,
                          std::vector<TrainCurvePoint>* curve = nullptr);

// Frame-level miss+false-alarm rate of hyps against refs, as a percentage of
// reference active frames (collar 0, identity speakers).
double frame_error_percent(const std::vector<std::vector<std::uint8_t>>& refs,
                           const std::vector<std::vector<std::uint8_t>>& hyps);

// Round-trips every sequence through the codec, binarizes at the threshold,
// and reports frame_error_percent against the originals.
double reconstruction_der(const LabelCodec& codec,
                          const std::vector<std::vector<std::uint8_t>>& dataset,
                          double threshold = 0.5);

}  // namespace flowdiar

#endif  // FLOWDIAR_LABEL_CODEC_HPP_
