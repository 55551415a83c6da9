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

#include "flowdiar/tsvad.hpp"

#include <algorithm>
#include <cmath>
#include <cstring>

#include "flowdiar/errors.hpp"
#include "flowdiar/optim.hpp"

namespace flowdiar {

using num::Tensor;

ModelKind parse_model_kind(const std::string& name) {
  if (name == "flow") return ModelKind::kFlow;
  if (name == "baseline") return ModelKind::kBaseline;
  throw Error(ErrorCategory::kConfig, "unknown model kind: " + name);
}

const char* model_kind_name(ModelKind k) {
  return k == ModelKind::kFlow ? "flow" : "baseline";
}

FlowSpace parse_flow_space(const std::string& name) {
  if (name == "latent") return FlowSpace::kLatent;
  if (name == "binary") return FlowSpace::kBinary;
  throw Error(ErrorCategory::kConfig, "unknown flow space: " + name);
}

const char* flow_space_name(FlowSpace s) {
  return s == FlowSpace::kLatent ? "latent" : "binary";
}

void validate_config(const TsvadConfig& c) {
  if (c.model_dim < 1 || c.feature_dim < 1 || c.frame_repr_dim < 1 ||
      c.latent_dim < 1 || c.enroll_dim < 1 || c.num_slots < 1) {
    throw Error(ErrorCategory::kConfig, "model dimensions must be positive");
  }
  if (c.num_heads < 1 || c.model_dim % c.num_heads != 0) {
    throw Error(ErrorCategory::kConfig,
                "model_dim must be divisible by num_heads");
  }
  if (c.time_embed_dim % 2 != 0 || c.model_dim % 2 != 0) {
    throw Error(ErrorCategory::kConfig, "embedding dims must be even");
  }
  int r = c.downsample;
  if (r < 2 || (r & (r - 1)) != 0) {
    throw Error(ErrorCategory::kConfig,
                "downsample must be a power of two >= 2");
  }
  if (c.conv_kernel % 2 != 1) {
    throw Error(ErrorCategory::kConfig, "conv_kernel must be odd");
  }
  if (c.space == FlowSpace::kBinary && c.latent_dim != kLabelFrames) {
    throw Error(ErrorCategory::kConfig,
                "binary space requires latent_dim == " +
                    std::to_string(kLabelFrames));
  }
}

Tensor sinusoidal_positions(int length, int dim) {
  if (dim % 2 != 0) {
    throw Error(ErrorCategory::kConfig, "position dim must be even");
  }
  std::vector<double> v(static_cast<std::size_t>(length) * dim);
  for (int pos = 0; pos < length; ++pos) {
    for (int i = 0; i < dim / 2; ++i) {
      double rate =
          std::pow(10000.0, -2.0 * static_cast<double>(i) / dim);
      double angle = static_cast<double>(pos) * rate;
      v[static_cast<std::size_t>(pos) * dim + 2 * i] = std::sin(angle);
      v[static_cast<std::size_t>(pos) * dim + 2 * i + 1] = std::cos(angle);
    }
  }
  return Tensor::from({length, dim}, std::move(v));
}

Tensor time_embedding(double t, int dim) {
  if (dim % 2 != 0) {
    throw Error(ErrorCategory::kConfig, "time embedding dim must be even");
  }
  // Continuous position t*1000 spreads [0,1] across the frequency bands.
  std::vector<double> v(static_cast<std::size_t>(dim));
  double pos = t * 1000.0;
  for (int i = 0; i < dim / 2; ++i) {
    double rate = std::pow(10000.0, -2.0 * static_cast<double>(i) / dim);
    v[static_cast<std::size_t>(2 * i)] = std::sin(pos * rate);
    v[static_cast<std::size_t>(2 * i + 1)] = std::cos(pos * rate);
  }
  return Tensor::from({1, dim}, std::move(v));
}

EnrollmentSet pad_enrollments(const std::vector<std::vector<double>>& real,
                              const std::vector<std::string>& names,
                              int slots) {
  if (static_cast<int>(real.size()) > slots) {
    throw Error(ErrorCategory::kConfig,
                "more real speakers than slots (" +
                    std::to_string(real.size()) + " > " +
                    std::to_string(slots) + ")");
  }
  if (real.size() != names.size()) {
    throw Error(ErrorCategory::kShape, "enrollment names/embeddings mismatch");
  }
  std::size_t c = real.empty() ? 0 : real[0].size();
  EnrollmentSet set;
  for (std::size_t i = 0; i < real.size(); ++i) {
    set.embeddings.push_back(real[i]);
    set.names.push_back(names[i]);
    set.kinds.push_back(SlotKind::kReal);
  }
  while (static_cast<int>(set.embeddings.size()) < slots) {
    set.embeddings.emplace_back(c, 0.0);
    set.names.emplace_back();
    set.kinds.push_back(SlotKind::kZero);
  }
  return set;
}

AugmentResult augment_enrollments(
    const std::vector<std::vector<double>>& real_embeddings,
    const std::vector<std::string>& real_names,
    const std::vector<std::vector<std::uint8_t>>& real_labels,
    const std::vector<std::vector<double>>& foreign_pool, int slots, Rng& rng,
    double p_zero, double p_replace_all) {
  if (static_cast<int>(real_embeddings.size()) > slots) {
    throw Error(ErrorCategory::kConfig,
                "more real speakers than slots (" +
                    std::to_string(real_embeddings.size()) + " > " +
                    std::to_string(slots) + ")");
  }
  if (real_embeddings.size() != real_names.size() ||
      real_embeddings.size() != real_labels.size()) {
    throw Error(ErrorCategory::kShape, "augment: real speaker arrays mismatch");
  }
  std::size_t c = real_embeddings.empty()
                      ? (foreign_pool.empty() ? 0 : foreign_pool[0].size())
                      : real_embeddings[0].size();
  std::size_t label_len =
      real_labels.empty() ? kLabelFrames : real_labels[0].size();

  AugmentResult res;
  res.all_replaced = rng.uniform() < p_replace_all;
  auto pad_slot = [&](Rng& r) {
    if (r.uniform() < p_zero) {
      res.set.embeddings.emplace_back(c, 0.0);
      res.set.kinds.push_back(SlotKind::kZero);
    } else {
      if (foreign_pool.empty()) {
        throw Error(ErrorCategory::kPrereq,
                    "augment: foreign pool is empty but a foreign embedding "
                    "was requested");
      }
      int pick = r.uniform_int(static_cast<int>(foreign_pool.size()));
      res.set.embeddings.push_back(foreign_pool[static_cast<std::size_t>(pick)]);
      res.set.kinds.push_back(SlotKind::kForeign);
    }
    res.set.names.emplace_back();
    res.targets.emplace_back(label_len, 0);
  };

  if (res.all_replaced) {
    for (int i = 0; i < slots; ++i) pad_slot(rng);
    return res;
  }
  for (std::size_t i = 0; i < real_embeddings.size(); ++i) {
    res.set.embeddings.push_back(real_embeddings[i]);
    res.set.names.push_back(real_names[i]);
    res.set.kinds.push_back(SlotKind::kReal);
    res.targets.push_back(real_labels[i]);
  }
  while (static_cast<int>(res.set.embeddings.size()) < slots) pad_slot(rng);
  return res;
}

namespace {

Tensor init_weight(std::vector<int> shape, int fan_in, Rng& rng) {
  double bound = 1.0 / std::sqrt(static_cast<double>(fan_in));
  return Tensor::rand_uniform(std::move(shape), rng, -bound, bound, true);
}

int frame_encoder_stages(int downsample) {
  int stages = 0;
  while ((1 << stages) < downsample) ++stages;
  return stages;
}

}  // namespace

TsvadModel::TsvadModel(const TsvadConfig& config, Rng& rng) : config_(config) {
  validate_config(config);
  int d = config.model_dim;
  int e = config.frame_repr_dim;
  int f = config.feature_dim;
  int k = config.latent_dim;
  int c = config.enroll_dim;
  int dt = config.time_embed_dim;
  int m = config.ff_multiplier * d;
  int kk = config.conv_kernel;

  auto add = [this](const std::string& name, Tensor t) {
    index_[name] = params_.size();
    params_.push_back({name, std::move(t), true});
  };
  auto add_linear = [&](const std::string& p, int in, int out) {
    add(p + ".w", init_weight({in, out}, in, rng));
    add(p + ".b", Tensor::zeros({out}, true));
  };
  auto add_ln = [&](const std::string& p, int dim) {
    add(p + ".g", Tensor::full({dim}, 1.0, true));
    add(p + ".b", Tensor::zeros({dim}, true));
  };
  auto add_attn = [&](const std::string& p, int q_in, int k_in, bool with_v) {
    add_linear(p + ".q", q_in, d);
    add_linear(p + ".k", k_in, d);
    if (with_v) add_linear(p + ".v", d, d);
    add_linear(p + ".o", d, d);
  };

  // Frame encoder: stride-2 conv stages, kernel 5, padding 2.
  int stages = frame_encoder_stages(config.downsample);
  int hidden = std::max(8, e / 2);
  for (int i = 0; i < stages; ++i) {
    int in_ch = i == 0 ? f : hidden;
    int out_ch = i == stages - 1 ? e : hidden;
    add("fe.conv" + std::to_string(i) + ".w",
        init_weight({out_ch, in_ch, 5}, in_ch * 5, rng));
    add("fe.conv" + std::to_string(i) + ".b", Tensor::zeros({out_ch}, true));
  }

  // Context encoder.
  add_linear("ctx.in", e, d);
  for (int b = 0; b < config.encoder_blocks; ++b) {
    std::string p = "ctx.b" + std::to_string(b);
    add_ln(p + ".ff1.ln", d);
    add_linear(p + ".ff1.1", d, m);
    add_linear(p + ".ff1.2", m, d);
    add_ln(p + ".attn.ln", d);
    add_attn(p + ".attn", d, d, true);
    add_ln(p + ".conv.ln", d);
    add_linear(p + ".conv.1", d, d);
    add(p + ".conv.dw", init_weight({d, kk}, kk, rng));
    add(p + ".conv.dwb", Tensor::zeros({d}, true));
    add_linear(p + ".conv.2", d, d);
    add_ln(p + ".ff2.ln", d);
    add_linear(p + ".ff2.1", d, m);
    add_linear(p + ".ff2.2", m, d);
  }

  // Decoder.
  bool flow = config.kind == ModelKind::kFlow;
  if (flow) {
    add_linear("time", dt, dt);
    add_linear("dec.tok", k, d);
  } else {
    add("dec.query", Tensor::randn({d}, rng, 0.02, true));
  }
  for (int b = 0; b < config.decoder_blocks; ++b) {
    std::string p = "dec.b" + std::to_string(b);
    if (flow) {
      // Small modulation weights: near-identity normalization at start while
      // keeping the time input live.
      add(p + ".self.tmod.w",
          Tensor::rand_uniform({dt, 2 * d}, rng, -0.01, 0.01, true));
      add(p + ".self.tmod.b", Tensor::zeros({2 * d}, true));
      add(p + ".cross.tmod.w",
          Tensor::rand_uniform({dt, 2 * d}, rng, -0.01, 0.01, true));
      add(p + ".cross.tmod.b", Tensor::zeros({2 * d}, true));
    } else {
      add_ln(p + ".self.ln", d);
      add_ln(p + ".cross.ln", d);
    }
    add_attn(p + ".self", d, d, true);
    add_attn(p + ".cross", d + c, d + d, false);
    add_ln(p + ".ff.ln", d);
    add_linear(p + ".ff.1", d, m);
    add_linear(p + ".ff.2", m, d);
  }
  add_linear("dec.out", d, flow ? k : kLabelFrames);
}

Tensor TsvadModel::param(const std::string& name) const {
  auto it = index_.find(name);
  if (it == index_.end()) {
    throw Error(ErrorCategory::kInternal, "missing parameter " + name);
  }
  return params_[it->second].tensor;
}

void TsvadModel::set_frame_encoder_trainable(bool on) {
  for (auto& p : params_) {
    if (p.name.rfind("fe.", 0) == 0) {
      p.trainable = on;
      p.tensor.set_requires_grad(on);
    }
  }
}

Tensor TsvadModel::frame_encode(const Tensor& features) const {
  if (features.ndim() != 2 || features.dim(1) != config_.feature_dim) {
    throw Error(ErrorCategory::kShape,
                "frame_encode expects (T, " +
                    std::to_string(config_.feature_dim) + ") features");
  }
  if (features.dim(0) % config_.downsample != 0) {
    throw Error(ErrorCategory::kShape,
                "feature length " + std::to_string(features.dim(0)) +
                    " is not divisible by downsample " +
                    std::to_string(config_.downsample));
  }
  Tensor x = num::transpose(features);  // (F, T)
  int stages = frame_encoder_stages(config_.downsample);
  for (int i = 0; i < stages; ++i) {
    std::string p = "fe.conv" + std::to_string(i);
    x = num::silu(num::add_channel_bias(num::conv1d(x, param(p + ".w"), 2, 2),
                                        param(p + ".b")));
  }
  return num::transpose(x);  // (L, E)
}

namespace {

Tensor linear(const TsvadModel& model, const std::string& p, const Tensor& x) {
  return num::add_rowvec(num::matmul(x, model.param(p + ".w")),
                         model.param(p + ".b"));
}

Tensor feed_forward(const TsvadModel& model, const std::string& p,
                    const Tensor& x) {
  return linear(model, p + ".2", num::silu(linear(model, p + ".1", x)));
}

}  // namespace

Tensor TsvadModel::mha(const Tensor& q_in, const Tensor& k_in,
                       const Tensor& v_in, const std::string& prefix,
                       bool project_v, bool invariant) const {
  Tensor q = linear(*this, prefix + ".q", q_in);
  Tensor k = linear(*this, prefix + ".k", k_in);
  Tensor v = project_v ? linear(*this, prefix + ".v", v_in) : v_in;
  int heads = config_.num_heads;
  int dh = config_.model_dim / heads;
  Tensor merged;
  for (int h = 0; h < heads; ++h) {
    Tensor oh = num::attention(num::slice_cols(q, h * dh, dh),
                               num::slice_cols(k, h * dh, dh),
                               num::slice_cols(v, h * dh, dh), invariant);
    merged = h == 0 ? oh : num::concat_cols(merged, oh);
  }
  return linear(*this, prefix + ".o", merged);
}

Tensor TsvadModel::context_encode(const Tensor& frame_repr) const {
  if (frame_repr.ndim() != 2 || frame_repr.dim(1) != config_.frame_repr_dim) {
    throw Error(ErrorCategory::kShape, "context_encode expects (L, E) input");
  }
  int l = frame_repr.dim(0);
  Tensor x = num::add(linear(*this, "ctx.in", frame_repr),
                      sinusoidal_positions(l, config_.model_dim));
  double eps = config_.layer_norm_eps;
  for (int b = 0; b < config_.encoder_blocks; ++b) {
    std::string p = "ctx.b" + std::to_string(b);
    Tensor n1 = num::layer_norm(x, param(p + ".ff1.ln.g"),
                                param(p + ".ff1.ln.b"), eps);
    x = num::add(x, num::scale(feed_forward(*this, p + ".ff1", n1), 0.5));
    Tensor n2 = num::layer_norm(x, param(p + ".attn.ln.g"),
                                param(p + ".attn.ln.b"), eps);
    x = num::add(x, mha(n2, n2, n2, p + ".attn", true, false));
    Tensor n3 = num::layer_norm(x, param(p + ".conv.ln.g"),
                                param(p + ".conv.ln.b"), eps);
    Tensor y = num::silu(linear(*this, p + ".conv.1", n3));
    y = num::add_rowvec(
        num::depthwise_conv_time(y, param(p + ".conv.dw"),
                                 (config_.conv_kernel - 1) / 2),
        param(p + ".conv.dwb"));
    y = linear(*this, p + ".conv.2", num::silu(y));
    x = num::add(x, y);
    Tensor n4 = num::layer_norm(x, param(p + ".ff2.ln.g"),
                                param(p + ".ff2.ln.b"), eps);
    x = num::add(x, num::scale(feed_forward(*this, p + ".ff2", n4), 0.5));
  }
  return x;
}

Tensor TsvadModel::encode_features(const Tensor& features) const {
  return context_encode(frame_encode(features));
}

namespace {

// scale = 1 + W_s(th), shift = W_b(th), both from the shared time hidden.
struct TimeMod {
  Tensor scale;
  Tensor shift;
};

TimeMod time_modulation(const TsvadModel& model, const std::string& prefix,
                        const Tensor& time_hidden) {
  int d = model.config().model_dim;
  Tensor mod = num::add_rowvec(
      num::matmul(time_hidden, model.param(prefix + ".tmod.w")),
      model.param(prefix + ".tmod.b"));
  Tensor delta = num::reshape(num::slice_cols(mod, 0, d), {d});
  Tensor shift = num::reshape(num::slice_cols(mod, d, d), {d});
  return {num::add(Tensor::full({d}, 1.0), delta), shift};
}

}  // namespace

Tensor TsvadModel::predict_field(const Tensor& z_t, double t,
                                 const Tensor& enroll,
                                 const Tensor& encoder_out) const {
  if (config_.kind != ModelKind::kFlow) {
    throw Error(ErrorCategory::kPrereq,
                "predict_field requires a flow-mode model");
  }
  int n = config_.num_slots;
  if (z_t.ndim() != 2 || z_t.dim(0) != n || z_t.dim(1) != config_.latent_dim) {
    throw Error(ErrorCategory::kShape,
                "predict_field: z_t must be (slots, latent_dim)");
  }
  if (enroll.ndim() != 2 || enroll.dim(0) != n ||
      enroll.dim(1) != config_.enroll_dim) {
    throw Error(ErrorCategory::kShape,
                "predict_field: enrollments must be (slots, enroll_dim)");
  }
  if (encoder_out.ndim() != 2 || encoder_out.dim(1) != config_.model_dim) {
    throw Error(ErrorCategory::kShape,
                "predict_field: encoder output must be (L, d)");
  }
  Tensor th = num::silu(linear(*this, "time",
                               time_embedding(t, config_.time_embed_dim)));
  Tensor tok = linear(*this, "dec.tok", z_t);
  Tensor pos = sinusoidal_positions(encoder_out.dim(0), config_.model_dim);
  for (int b = 0; b < config_.decoder_blocks; ++b) {
    std::string p = "dec.b" + std::to_string(b);
    TimeMod sm = time_modulation(*this, p + ".self", th);
    Tensor a = num::adain(tok, sm.scale, sm.shift, config_.adain_eps);
    tok = num::add(tok, mha(a, a, a, p + ".self", true, true));
    TimeMod cm = time_modulation(*this, p + ".cross", th);
    Tensor a2 = num::adain(tok, cm.scale, cm.shift, config_.adain_eps);
    Tensor q_in = num::concat_cols(a2, enroll);
    Tensor k_in = num::concat_cols(encoder_out, pos);
    tok = num::add(tok, mha(q_in, k_in, encoder_out, p + ".cross", false, false));
    Tensor f = num::layer_norm(tok, param(p + ".ff.ln.g"),
                               param(p + ".ff.ln.b"), config_.layer_norm_eps);
    tok = num::add(tok, feed_forward(*this, p + ".ff", f));
  }
  return linear(*this, "dec.out", tok);
}

Tensor TsvadModel::predict_activity_logits(const Tensor& enroll,
                                           const Tensor& encoder_out) const {
  if (config_.kind != ModelKind::kBaseline) {
    throw Error(ErrorCategory::kPrereq,
                "predict_activity_logits requires a baseline-mode model");
  }
  int n = config_.num_slots;
  if (enroll.ndim() != 2 || enroll.dim(0) != n ||
      enroll.dim(1) != config_.enroll_dim) {
    throw Error(ErrorCategory::kShape,
                "predict_activity_logits: enrollments must be (slots, c)");
  }
  Tensor tok = num::broadcast_rows(param("dec.query"), n);
  Tensor pos = sinusoidal_positions(encoder_out.dim(0), config_.model_dim);
  double eps = config_.layer_norm_eps;
  for (int b = 0; b < config_.decoder_blocks; ++b) {
    std::string p = "dec.b" + std::to_string(b);
    Tensor a = num::layer_norm(tok, param(p + ".self.ln.g"),
                               param(p + ".self.ln.b"), eps);
    tok = num::add(tok, mha(a, a, a, p + ".self", true, true));
    Tensor a2 = num::layer_norm(tok, param(p + ".cross.ln.g"),
                                param(p + ".cross.ln.b"), eps);
    Tensor q_in = num::concat_cols(a2, enroll);
    Tensor k_in = num::concat_cols(encoder_out, pos);
    tok = num::add(tok, mha(q_in, k_in, encoder_out, p + ".cross", false, false));
    Tensor f = num::layer_norm(tok, param(p + ".ff.ln.g"),
                               param(p + ".ff.ln.b"), eps);
    tok = num::add(tok, feed_forward(*this, p + ".ff", f));
  }
  return linear(*this, "dec.out", tok);
}

// ---------------------------------------------------------------- training

namespace {

struct SlotBatch {
  Tensor enroll;   // (N, c)
  Tensor z_t;      // (N, k), flow only
  Tensor u_target; // (N, k), flow only
  Tensor targets;  // (N, L), baseline only
  double t = 0.0;
};

Tensor rows_to_tensor(const std::vector<std::vector<double>>& rows) {
  int n = static_cast<int>(rows.size());
  int c = n ? static_cast<int>(rows[0].size()) : 0;
  std::vector<double> flat;
  flat.reserve(static_cast<std::size_t>(n) * c);
  for (const auto& r : rows) flat.insert(flat.end(), r.begin(), r.end());
  return Tensor::from({n, c}, std::move(flat));
}

// Latents for the slot targets; real speakers resolve through the cache.
class LatentCache {
 public:
  LatentCache(const LabelCodec* codec, FlowSpace space) : codec_(codec) {
    if (codec_ && space == FlowSpace::kLatent) {
      num::NoGradGuard ng;
      zero_latent_ = codec_->encode_labels(
          std::vector<std::uint8_t>(kLabelFrames, 0));
    } else {
      zero_latent_.assign(kLabelFrames, 0.0);
    }
  }

  std::vector<double> latent(const std::vector<std::uint8_t>& labels) const {
    bool all_zero = true;
    for (auto v : labels) {
      if (v) {
        all_zero = false;
        break;
      }
    }
    if (all_zero) return zero_latent_;
    if (!codec_) return std::vector<double>(labels.begin(), labels.end());
    num::NoGradGuard ng;
    return codec_->encode_labels(labels);
  }

 private:
  const LabelCodec* codec_;
  std::vector<double> zero_latent_;
};

SlotBatch draw_slot_batch(const Dataset& ds, std::size_t idx,
                          const TsvadConfig& mc, const TsvadTrainConfig& tc,
                          const LatentCache& latents,
                          const std::vector<std::vector<std::vector<double>>>* latent_cache,
                          Rng& rng) {
  auto labels = ds.labels(idx);
  auto enr = ds.enrollments(idx);
  std::vector<std::string> names = ds.info(idx).speakers;
  AugmentResult aug =
      augment_enrollments(enr, names, labels, ds.pool(), mc.num_slots, rng,
                          tc.p_zero, tc.p_replace_all);
  SlotBatch batch;
  batch.enroll = rows_to_tensor(aug.set.embeddings);
  if (mc.kind == ModelKind::kBaseline) {
    std::vector<double> flat;
    flat.reserve(static_cast<std::size_t>(mc.num_slots) * kLabelFrames);
    for (const auto& tgt : aug.targets)
      flat.insert(flat.end(), tgt.begin(), tgt.end());
    batch.targets = Tensor::from({mc.num_slots, kLabelFrames}, std::move(flat));
    return batch;
  }
  batch.t = sample_timestep(rng);
  std::vector<std::vector<double>> zt_rows, u_rows;
  for (int s = 0; s < mc.num_slots; ++s) {
    std::vector<double> z1;
    if (latent_cache && aug.set.kinds[static_cast<std::size_t>(s)] == SlotKind::kReal) {
      z1 = (*latent_cache)[idx][static_cast<std::size_t>(s)];
    } else {
      z1 = latents.latent(aug.targets[static_cast<std::size_t>(s)]);
    }
    std::vector<double> z0(z1.size());
    for (auto& v : z0) v = rng.gaussian();
    PathSample ps = sample_path(z1, batch.t, z0, tc.sigma_min);
    zt_rows.push_back(std::move(ps.z_t));
    u_rows.push_back(std::move(ps.u_target));
  }
  batch.z_t = rows_to_tensor(zt_rows);
  batch.u_target = rows_to_tensor(u_rows);
  return batch;
}

Tensor segment_loss(const TsvadModel& model, const Tensor& features,
                    const SlotBatch& batch, const TsvadTrainConfig& tc) {
  Tensor enc = model.encode_features(features);
  if (model.config().kind == ModelKind::kFlow) {
    Tensor v = model.predict_field(batch.z_t, batch.t, batch.enroll, enc);
    return cfm_reduction(v, batch.u_target);
  }
  Tensor probs = num::sigmoid(model.predict_activity_logits(batch.enroll, enc));
  return num::scale(num::bce_sum(probs, batch.targets, tc.bce_clamp),
                    1.0 / model.config().num_slots);
}

void check_dataset(const TsvadConfig& mc, const Dataset& ds,
                   const char* which) {
  if (ds.meta().feature_dim != mc.feature_dim ||
      ds.meta().downsample != mc.downsample ||
      ds.meta().enroll_dim != mc.enroll_dim ||
      ds.meta().label_frames != kLabelFrames) {
    throw Error(ErrorCategory::kPrereq,
                std::string(which) + " dataset geometry does not match the model");
  }
  if (!ds.meta().with_features) {
    throw Error(ErrorCategory::kPrereq,
                std::string(which) + " dataset has no features");
  }
  if (ds.meta().speakers > mc.num_slots) {
    throw Error(ErrorCategory::kPrereq,
                std::string(which) + " dataset has more speakers than slots");
  }
}

}  // namespace

TsvadTrainResult train_tsvad(TsvadModel& model, const Dataset& sim,
                             const Dataset& finetune, LabelCodec* codec,
                             const TsvadTrainConfig& tc) {
  const TsvadConfig& mc = model.config();
  check_dataset(mc, sim, "simulation");
  check_dataset(mc, finetune, "finetune");
  bool needs_codec =
      mc.kind == ModelKind::kFlow && mc.space == FlowSpace::kLatent;
  if (needs_codec) {
    if (!codec) {
      throw Error(ErrorCategory::kPrereq,
                  "latent-space flow training requires a label codec");
    }
    if (codec->latent_dim() != mc.latent_dim) {
      throw Error(ErrorCategory::kPrereq,
                  "codec latent_dim does not match the model");
    }
    codec->set_trainable(false);
  }
  const LabelCodec* frozen = needs_codec ? codec : nullptr;
  LatentCache latents(frozen, mc.space);

  Rng rng(tc.seed);
  num::Adam opt(&model.parameters(), tc.lr);
  TsvadTrainResult result;

  // Precompute real-speaker latents once per dataset (the codec is frozen).
  auto build_cache = [&](const Dataset& ds) {
    std::vector<std::vector<std::vector<double>>> cache(ds.size());
    if (mc.kind == ModelKind::kBaseline) return cache;
    for (std::size_t i = 0; i < ds.size(); ++i) {
      auto labels = ds.labels(i);
      for (const auto& track : labels) cache[i].push_back(latents.latent(track));
    }
    return cache;
  };
  auto sim_cache = build_cache(sim);
  auto ft_cache = build_cache(finetune);

  // Frozen probe batch with fixed augmentation, noise and timestep.
  struct ProbeItem {
    Tensor features;
    SlotBatch batch;
  };
  std::vector<ProbeItem> probe;
  {
    Rng probe_rng = rng.fork(0x9909);
    auto train_idx = sim.split_indices(false);
    std::size_t n = std::min<std::size_t>(4, train_idx.size());
    for (std::size_t i = 0; i < n; ++i) {
      std::size_t idx = train_idx[i];
      probe.push_back({sim.features(idx),
                       draw_slot_batch(sim, idx, mc, tc, latents, &sim_cache,
                                       probe_rng)});
    }
  }
  auto probe_loss = [&]() {
    if (probe.empty()) return 0.0;
    num::NoGradGuard ng;
    double total = 0.0;
    for (const auto& item : probe)
      total += segment_loss(model, item.features, item.batch, tc).item();
    return total / static_cast<double>(probe.size());
  };
  result.probe_losses.push_back(probe_loss());

  struct Stage {
    int epochs;
    const Dataset* data;
    const std::vector<std::vector<std::vector<double>>>* cache;
    bool freeze_frame_encoder;
  };
  const Stage stages[] = {
      {tc.stage_a_epochs, &sim, &sim_cache, true},
      {tc.stage_b_epochs, &sim, &sim_cache, false},
      {tc.stage_c_epochs, &finetune, &ft_cache, false},
  };

  std::int64_t step = 0;
  for (const Stage& stage : stages) {
    model.set_frame_encoder_trainable(!stage.freeze_frame_encoder);
    auto indices = stage.data->split_indices(false);
    if (indices.empty() && stage.epochs > 0) {
      throw Error(ErrorCategory::kPrereq, "no training segments in dataset");
    }
    for (int epoch = 0; epoch < stage.epochs; ++epoch) {
      for (std::size_t i = indices.size(); i > 1; --i) {
        std::size_t j =
            static_cast<std::size_t>(rng.uniform_int(static_cast<int>(i)));
        std::swap(indices[i - 1], indices[j]);
      }
      for (std::size_t start = 0; start < indices.size();
           start += static_cast<std::size_t>(tc.batch)) {
        std::size_t stop = std::min(indices.size(),
                                    start + static_cast<std::size_t>(tc.batch));
        opt.zero_grad();
        Tensor total;
        for (std::size_t bi = start; bi < stop; ++bi) {
          std::size_t idx = indices[bi];
          SlotBatch batch = draw_slot_batch(*stage.data, idx, mc, tc, latents,
                                            stage.cache, rng);
          Tensor item = segment_loss(model, stage.data->features(idx), batch, tc);
          total = total.defined() ? num::add(total, item) : item;
        }
        Tensor loss = num::scale(total, 1.0 / static_cast<double>(stop - start));
        double value = loss.item();
        if (!std::isfinite(value)) {
          throw Error(ErrorCategory::kNumeric,
                      "training diverged at step " + std::to_string(step));
        }
        loss.backward();
        opt.step();
        result.curve.push_back({step, value});
        ++step;
      }
    }
    result.probe_losses.push_back(probe_loss());
  }
  model.set_frame_encoder_trainable(true);
  return result;
}

// --------------------------------------------------------------- inference

namespace {

std::uint64_t embedding_fingerprint(const std::vector<double>& e) {
  std::uint64_t h = 1469598103934665603ULL;
  for (double v : e) {
    std::uint64_t bits;
    std::memcpy(&bits, &v, 8);
    for (int i = 0; i < 8; ++i) {
      h ^= (bits >> (8 * i)) & 0xff;
      h *= 1099511628211ULL;
    }
  }
  return h;
}

void check_enrollments(const TsvadConfig& mc, const EnrollmentSet& set) {
  if (static_cast<int>(set.embeddings.size()) != mc.num_slots) {
    throw Error(ErrorCategory::kShape,
                "enrollment set must have exactly " +
                    std::to_string(mc.num_slots) + " slots");
  }
  for (const auto& e : set.embeddings) {
    if (static_cast<int>(e.size()) != mc.enroll_dim) {
      throw Error(ErrorCategory::kShape, "enrollment dimension mismatch");
    }
  }
}

DiarizationHypothesis probs_to_hypothesis(
    const std::vector<std::vector<double>>& probs, const EnrollmentSet& set,
    double threshold, const std::string& file_id) {
  DiarizationHypothesis hyp;
  hyp.file_id = file_id;
  for (std::size_t s = 0; s < probs.size(); ++s) {
    if (set.kinds[s] != SlotKind::kReal) continue;
    std::vector<std::uint8_t> frames(probs[s].size());
    for (std::size_t i = 0; i < frames.size(); ++i)
      frames[i] = probs[s][i] >= threshold ? 1 : 0;
    auto turns = frames_to_segments(frames, kFrameSeconds, set.names[s]);
    hyp.turns.insert(hyp.turns.end(), turns.begin(), turns.end());
  }
  return hyp;
}

}  // namespace

DiarizeResult diarize(const TsvadModel& model, const LabelCodec* codec,
                      const Tensor& features, const EnrollmentSet& enrollments,
                      const DiarizeOptions& options,
                      const std::string& file_id) {
  const TsvadConfig& mc = model.config();
  if (mc.kind != ModelKind::kFlow) {
    throw Error(ErrorCategory::kPrereq, "diarize requires a flow-mode model");
  }
  if (mc.space == FlowSpace::kLatent) {
    if (!codec) {
      throw Error(ErrorCategory::kPrereq, "latent-space diarize needs a codec");
    }
    if (codec->latent_dim() != mc.latent_dim) {
      throw Error(ErrorCategory::kPrereq, "codec does not match the checkpoint");
    }
  }
  check_enrollments(mc, enrollments);
  num::NoGradGuard ng;

  int n = mc.num_slots;
  int k = mc.latent_dim;
  Tensor enc = model.encode_features(features);
  Tensor enroll = rows_to_tensor(enrollments.embeddings);

  // Per-slot noise keyed on (seed, embedding bytes): permuting slots permutes
  // the samples, and a rerun with the same seed is bit-identical.
  std::vector<double> state(static_cast<std::size_t>(n) * k);
  for (int s = 0; s < n; ++s) {
    Rng slot_rng(mix_seed(options.seed,
                          embedding_fingerprint(
                              enrollments.embeddings[static_cast<std::size_t>(s)])));
    for (int i = 0; i < k; ++i)
      state[static_cast<std::size_t>(s) * k + i] = slot_rng.gaussian();
  }

  auto field = [&](const std::vector<double>& z, double t) {
    Tensor zt = Tensor::from({n, k}, z);
    Tensor v = model.predict_field(zt, t, enroll, enc);
    return v.values();
  };
  std::vector<double> final_state = integrate(field, state, options.flow);

  DiarizeResult res;
  for (int s = 0; s < n; ++s) {
    std::vector<double> z(final_state.begin() + static_cast<std::ptrdiff_t>(s) * k,
                          final_state.begin() +
                              static_cast<std::ptrdiff_t>(s + 1) * k);
    std::vector<double> probs;
    if (mc.space == FlowSpace::kLatent) {
      probs = codec->decode_latent(z);
    } else {
      probs.resize(z.size());
      for (std::size_t i = 0; i < z.size(); ++i)
        probs[i] = std::min(1.0, std::max(0.0, z[i]));
    }
    res.probabilities.push_back(std::move(probs));
  }
  res.hypothesis = probs_to_hypothesis(res.probabilities, enrollments,
                                       options.threshold, file_id);
  return res;
}

DiarizeResult baseline_diarize(const TsvadModel& model, const Tensor& features,
                               const EnrollmentSet& enrollments,
                               double threshold, const std::string& file_id) {
  const TsvadConfig& mc = model.config();
  if (mc.kind != ModelKind::kBaseline) {
    throw Error(ErrorCategory::kPrereq,
                "baseline_diarize requires a baseline-mode model");
  }
  check_enrollments(mc, enrollments);
  num::NoGradGuard ng;
  Tensor enc = model.encode_features(features);
  Tensor enroll = rows_to_tensor(enrollments.embeddings);
  Tensor probs = num::sigmoid(model.predict_activity_logits(enroll, enc));
  DiarizeResult res;
  for (int s = 0; s < mc.num_slots; ++s) {
    res.probabilities.emplace_back(
        probs.values().begin() + static_cast<std::ptrdiff_t>(s) * kLabelFrames,
        probs.values().begin() +
            static_cast<std::ptrdiff_t>(s + 1) * kLabelFrames);
  }
  res.hypothesis = probs_to_hypothesis(res.probabilities, enrollments,
                                       threshold, file_id);
  return res;
}

}  // namespace flowdiar
