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

#ifndef FLOWDIAR_TSVAD_HPP_
#define FLOWDIAR_TSVAD_HPP_

#include <cstdint>
#include <string>
#include <unordered_map>
#include <vector>

#include "flowdiar/dataset.hpp"
#include "flowdiar/flow.hpp"
#include "flowdiar/label_codec.hpp"
#include "flowdiar/rng.hpp"
#include "flowdiar/scoring.hpp"
#include "flowdiar/tensor.hpp"

namespace flowdiar {

// Generative decoder regressing a vector field, or the discriminative
// comparator with learned queries and a per-speaker activity head.
enum class ModelKind { kFlow, kBaseline };
// Flow state space: codec latents, or the raw 200-dim binary label vectors.
enum class FlowSpace { kLatent, kBinary };

ModelKind parse_model_kind(const std::string& name);
const char* model_kind_name(ModelKind k);
FlowSpace parse_flow_space(const std::string& name);
const char* flow_space_name(FlowSpace s);

struct TsvadConfig {
  ModelKind kind = ModelKind::kFlow;
  FlowSpace space = FlowSpace::kLatent;
  int feature_dim = 16;    // F
  int downsample = 8;      // R, a power of two (one stride-2 stage per bit)
  int frame_repr_dim = 64; // E
  int model_dim = 64;      // d
  int latent_dim = 32;     // k; 200 when space == binary
  int enroll_dim = 16;     // c
  int num_heads = 4;
  int encoder_blocks = 2;
  int decoder_blocks = 2;
  int num_slots = 8;       // speaker slots after padding
  int time_embed_dim = 64;
  int conv_kernel = 7;     // depthwise kernel in encoder blocks
  int ff_multiplier = 2;
  double layer_norm_eps = 1e-5;
  double adain_eps = 1e-5;
};

void validate_config(const TsvadConfig& config);

// Standard interleaved sin/cos positional table, (length, dim).
num::Tensor sinusoidal_positions(int length, int dim);
// Sinusoidal embedding of a continuous t in [0,1].
num::Tensor time_embedding(double t, int dim);

enum class SlotKind { kReal, kZero, kForeign };

struct EnrollmentSet {
  std::vector<std::vector<double>> embeddings;  // num_slots x c
  std::vector<std::string> names;               // empty for non-real slots
  std::vector<SlotKind> kinds;
};

// Zero-pads real enrollments up to `slots`.
EnrollmentSet pad_enrollments(const std::vector<std::vector<double>>& real,
                              const std::vector<std::string>& names,
                              int slots);

struct AugmentResult {
  EnrollmentSet set;
  std::vector<std::vector<std::uint8_t>> targets;  // per slot, all-zero on pads
  bool all_replaced = false;
};

// Training-time slot augmentation: with probability p_replace_all every slot
// becomes a zero/foreign embedding with an all-silence target; otherwise the
// real speakers keep their labels and each pad slot is zero with probability
// p_zero, else a random foreign embedding.
AugmentResult augment_enrollments(
    const std::vector<std::vector<double>>& real_embeddings,
    const std::vector<std::string>& real_names,
    const std::vector<std::vector<std::uint8_t>>& real_labels,
    const std::vector<std::vector<double>>& foreign_pool, int slots, Rng& rng,
    double p_zero = 0.5, double p_replace_all = 0.2);

class TsvadModel {
 public:
  TsvadModel(const TsvadConfig& config, Rng& init_rng);

  const TsvadConfig& config() const { return config_; }
  num::ParamList& parameters() { return params_; }
  const num::ParamList& parameters() const { return params_; }
  void set_frame_encoder_trainable(bool on);

  // (R*L, F) acoustic rows -> (L, E) frame representation.
  num::Tensor frame_encode(const num::Tensor& features) const;
  // (L, E) -> (L, d) contextualized encoder output.
  num::Tensor context_encode(const num::Tensor& frame_repr) const;
  num::Tensor encode_features(const num::Tensor& features) const;

  // Flow decoder: per-slot latents (N, k) + time + enrollments + encoder
  // output -> predicted field (N, k). Exactly equivariant to permutations of
  // the slot axis.
  num::Tensor predict_field(const num::Tensor& z_t, double t,
                            const num::Tensor& enroll,
                            const num::Tensor& encoder_out) const;

  // Baseline decoder: (N, L) activity logits from learned queries.
  num::Tensor predict_activity_logits(const num::Tensor& enroll,
                                      const num::Tensor& encoder_out) const;

  num::Tensor param(const std::string& name) const;

 private:
  num::Tensor mha(const num::Tensor& q_in, const num::Tensor& k_in,
                  const num::Tensor& v_in, const std::string& prefix,
                  bool project_v, bool invariant) const;

  TsvadConfig config_;
  num::ParamList params_;
  std::unordered_map<std::string, std::size_t> index_;
};

struct TsvadTrainConfig {
  double lr = 1e-3;
  int batch = 4;
  std::uint64_t seed = 11;
  int stage_a_epochs = 3;  // frame encoder frozen, simulation data
  int stage_b_epochs = 3;  // everything trainable, simulation data
  int stage_c_epochs = 3;  // everything trainable, finetune data
  double p_zero = 0.5;
  double p_replace_all = 0.2;
  double sigma_min = 0.0;
  double bce_clamp = 1e-7;
};

struct TsvadTrainResult {
  std::vector<TrainCurvePoint> curve;
  // Loss on a frozen probe batch: initial, then after each stage.
  std::vector<double> probe_losses;
};

// Three-stage schedule over (sim, finetune). For flow models in latent space
// the codec must be provided; it is frozen for the whole run. Deterministic
// given config.seed.
TsvadTrainResult train_tsvad(TsvadModel& model, const Dataset& sim,
                             const Dataset& finetune, LabelCodec* codec,
                             const TsvadTrainConfig& config);

struct DiarizeOptions {
  FlowConfig flow;
  double threshold = 0.5;
  std::uint64_t seed = 0;
};

struct DiarizeResult {
  std::vector<std::vector<double>> probabilities;  // per slot, length L
  DiarizationHypothesis hypothesis;                // real slots only
};

// Generative inference: per-slot noise -> ODE integration of the predicted
// field -> codec decode -> threshold -> segments. The per-slot noise is
// seeded on (seed, embedding bytes), so permuting slots permutes the output
// and reruns with one seed are bit-identical.
DiarizeResult diarize(const TsvadModel& model, const LabelCodec* codec,
                      const num::Tensor& features,
                      const EnrollmentSet& enrollments,
                      const DiarizeOptions& options,
                      const std::string& file_id);

// Deterministic comparator inference (no sampling).
DiarizeResult baseline_diarize(const TsvadModel& model,
                               const num::Tensor& features,
                               const EnrollmentSet& enrollments,
                               double threshold, const std::string& file_id);

}  // namespace flowdiar

#endif  // FLOWDIAR_TSVAD_HPP_
