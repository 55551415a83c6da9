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

#include "flowdiar/label_codec.hpp"

#include <algorithm>
#include <cmath>
#include <string>

#include "flowdiar/errors.hpp"
#include "flowdiar/optim.hpp"

namespace flowdiar {

using num::Tensor;

void validate_labels(const std::vector<std::uint8_t>& frames) {
  if (static_cast<int>(frames.size()) != kLabelFrames) {
    throw Error(ErrorCategory::kShape,
                "label sequence must have " + std::to_string(kLabelFrames) +
                    " frames, got " + std::to_string(frames.size()));
  }
  for (auto v : frames) {
    if (v != 0 && v != 1) {
      throw Error(ErrorCategory::kFormat, "label values must be 0 or 1");
    }
  }
}

namespace {

Tensor init_weight(std::vector<int> shape, int fan_in, Rng& rng) {
  double bound = 1.0 / std::sqrt(static_cast<double>(fan_in));
  return Tensor::rand_uniform(std::move(shape), rng, -bound, bound, true);
}

}  // namespace

LabelCodec::LabelCodec(const LabelAEConfig& config, Rng& rng)
    : config_(config) {
  int k = config.latent_dim;
  if (k < 1) throw Error(ErrorCategory::kConfig, "latent_dim must be positive");
  auto add = [this](const char* name, Tensor t) {
    params_.push_back({name, std::move(t), true});
  };
  add("enc.conv1.w", init_weight({16, 1, 5}, 1 * 5, rng));
  add("enc.conv1.b", Tensor::zeros({16}, true));
  add("enc.conv2.w", init_weight({32, 16, 3}, 16 * 3, rng));
  add("enc.conv2.b", Tensor::zeros({32}, true));
  add("enc.conv3.w", init_weight({64, 32, 3}, 32 * 3, rng));
  add("enc.conv3.b", Tensor::zeros({64}, true));
  add("enc.fc.w", init_weight({3200, k}, 3200, rng));
  add("enc.fc.b", Tensor::zeros({k}, true));
  add("enc.ln.g", Tensor::full({k}, 1.0, true));
  add("enc.ln.b", Tensor::zeros({k}, true));

  add("dec.ln.g", Tensor::full({k}, 1.0, true));
  add("dec.ln.b", Tensor::zeros({k}, true));
  add("dec.fc1.w", init_weight({k, 2 * k}, k, rng));
  add("dec.fc1.b", Tensor::zeros({2 * k}, true));
  add("dec.fc2.w", init_weight({2 * k, 3200}, 2 * k, rng));
  add("dec.fc2.b", Tensor::zeros({3200}, true));
  add("dec.convt1.w", init_weight({64, 32, 3}, 64 * 3, rng));
  add("dec.convt1.b", Tensor::zeros({32}, true));
  add("dec.convt2.w", init_weight({32, 16, 3}, 32 * 3, rng));
  add("dec.convt2.b", Tensor::zeros({16}, true));
  add("dec.convt3.w", init_weight({16, 1, 5}, 16 * 5, rng));
  add("dec.convt3.b", Tensor::zeros({1}, true));
  add("dec.conv4.w", init_weight({16, 1, 5}, 1 * 5, rng));
  add("dec.conv4.b", Tensor::zeros({16}, true));
  add("dec.conv5.w", init_weight({1, 16, 3}, 16 * 3, rng));
  add("dec.conv5.b", Tensor::zeros({1}, true));
}

Tensor LabelCodec::param(const char* name) const {
  for (const auto& p : params_) {
    if (p.name == name) return p.tensor;
  }
  throw Error(ErrorCategory::kInternal, std::string("missing parameter ") + name);
}

void LabelCodec::set_trainable(bool on) {
  for (auto& p : params_) {
    p.trainable = on;
    p.tensor.set_requires_grad(on);
  }
}

Tensor LabelCodec::encode(const Tensor& labels,
                          std::vector<std::vector<int>>* trace) const {
  Tensor x = labels;
  if (x.ndim() == 1) x = num::reshape(x, {1, x.dim(0)});
  if (x.ndim() != 2 || x.dim(0) != 1 || x.dim(1) != kLabelFrames) {
    throw Error(ErrorCategory::kShape,
                "encode expects a (1, " + std::to_string(kLabelFrames) +
                    ") label sequence");
  }
  auto rec = [trace](const Tensor& t) {
    if (trace) trace->push_back(t.shape());
  };
  rec(x);
  Tensor h = num::silu(num::add_channel_bias(
      num::conv1d(x, param("enc.conv1.w"), 2, 2), param("enc.conv1.b")));
  rec(h);
  h = num::silu(num::add_channel_bias(num::conv1d(h, param("enc.conv2.w"), 2, 1),
                                      param("enc.conv2.b")));
  rec(h);
  h = num::silu(num::add_channel_bias(num::conv1d(h, param("enc.conv3.w"), 1, 1),
                                      param("enc.conv3.b")));
  rec(h);
  Tensor flat = num::flatten(h);
  rec(flat);
  Tensor z = num::add_rowvec(
      num::matmul(num::reshape(flat, {1, 3200}), param("enc.fc.w")),
      param("enc.fc.b"));
  z = num::layer_norm(num::reshape(z, {config_.latent_dim}), param("enc.ln.g"),
                      param("enc.ln.b"), config_.layer_norm_eps);
  rec(z);
  return z;
}

Tensor LabelCodec::decode(const Tensor& latent,
                          std::vector<std::vector<int>>* trace) const {
  int k = config_.latent_dim;
  Tensor z = latent;
  if (z.ndim() == 2 && z.dim(0) == 1) z = num::reshape(z, {z.dim(1)});
  if (z.ndim() != 1 || z.dim(0) != k) {
    throw Error(ErrorCategory::kShape,
                "decode expects a latent of dimension " + std::to_string(k));
  }
  auto rec = [trace](const Tensor& t) {
    if (trace) trace->push_back(t.shape());
  };
  Tensor h = num::silu(num::layer_norm(z, param("dec.ln.g"), param("dec.ln.b"),
                                       config_.layer_norm_eps));
  rec(h);
  h = num::silu(num::add_rowvec(
      num::matmul(num::reshape(h, {1, k}), param("dec.fc1.w")),
      param("dec.fc1.b")));
  h = num::reshape(h, {2 * k});
  rec(h);
  h = num::silu(num::add_rowvec(
      num::matmul(num::reshape(h, {1, 2 * k}), param("dec.fc2.w")),
      param("dec.fc2.b")));
  h = num::reshape(h, {3200});
  rec(h);
  h = num::reshape(h, {64, 50});
  rec(h);
  h = num::silu(num::add_channel_bias(
      num::conv_transpose1d(h, param("dec.convt1.w"), 1, 1, 0),
      param("dec.convt1.b")));
  rec(h);
  h = num::silu(num::add_channel_bias(
      num::conv_transpose1d(h, param("dec.convt2.w"), 2, 1, 1),
      param("dec.convt2.b")));
  rec(h);
  h = num::add_channel_bias(
      num::conv_transpose1d(h, param("dec.convt3.w"), 2, 2, 1),
      param("dec.convt3.b"));
  rec(h);
  h = num::add_channel_bias(num::conv1d(h, param("dec.conv4.w"), 1, 2),
                            param("dec.conv4.b"));
  rec(h);
  h = num::sigmoid(num::add_channel_bias(num::conv1d(h, param("dec.conv5.w"), 1, 1),
                                         param("dec.conv5.b")));
  rec(h);
  return h;
}

std::vector<double> LabelCodec::encode_labels(
    const std::vector<std::uint8_t>& frames) const {
  validate_labels(frames);
  std::vector<double> v(frames.begin(), frames.end());
  Tensor z = encode(Tensor::from({1, kLabelFrames}, std::move(v)));
  return z.values();
}

std::vector<double> LabelCodec::decode_latent(
    const std::vector<double>& latent) const {
  Tensor y = decode(Tensor::from({static_cast<int>(latent.size())}, latent));
  return y.values();
}

double bce_loss(const std::vector<std::uint8_t>& target,
                const std::vector<double>& prediction, double clamp_eps) {
  if (target.size() != prediction.size()) {
    throw Error(ErrorCategory::kShape, "bce_loss: length mismatch");
  }
  double lo = clamp_eps, hi = 1.0 - clamp_eps;
  double loss = 0.0;
  for (std::size_t i = 0; i < target.size(); ++i) {
    double p = std::min(std::max(prediction[i], lo), hi);
    double y = target[i];
    loss += -y * std::log(p) - (1.0 - y) * std::log(1.0 - p);
  }
  return loss;
}

LabelCodec train_label_ae(const std::vector<std::vector<std::uint8_t>>& dataset,
                          const LabelAETrainConfig& config,
                          std::vector<TrainCurvePoint>* curve) {
  if (dataset.empty()) {
    throw Error(ErrorCategory::kPrereq, "label-ae training set is empty");
  }
  for (const auto& seq : dataset) validate_labels(seq);

  Rng rng(config.seed);
  LabelAEConfig mc;
  mc.latent_dim = config.latent_dim;
  LabelCodec codec(mc, rng);
  num::Adam opt(&codec.parameters(), config.lr);

  std::vector<std::size_t> order(dataset.size());
  for (std::size_t i = 0; i < order.size(); ++i) order[i] = i;

  std::int64_t step = 0;
  for (int epoch = 0; epoch < config.epochs; ++epoch) {
    // Fisher-Yates with the run RNG.
    for (std::size_t i = order.size(); i > 1; --i) {
      std::size_t j = static_cast<std::size_t>(rng.uniform_int(static_cast<int>(i)));
      std::swap(order[i - 1], order[j]);
    }
    for (std::size_t start = 0; start < order.size();
         start += static_cast<std::size_t>(config.batch)) {
      std::size_t stop =
          std::min(order.size(), start + static_cast<std::size_t>(config.batch));
      opt.zero_grad();
      Tensor total;
      for (std::size_t bi = start; bi < stop; ++bi) {
        const auto& seq = dataset[order[bi]];
        std::vector<double> v(seq.begin(), seq.end());
        Tensor x = Tensor::from({1, kLabelFrames}, std::move(v));
        Tensor y = codec.decode(codec.encode(x));
        Tensor item = num::bce_sum(y, x, config.clamp_eps);
        total = total.defined() ? num::add(total, item) : item;
      }
      Tensor loss =
          num::scale(total, 1.0 / static_cast<double>(stop - start));
      double value = loss.item();
      if (!std::isfinite(value)) {
        throw Error(ErrorCategory::kNumeric,
                    "label-ae training diverged at step " +
                        std::to_string(step) + " (loss not finite)");
      }
      loss.backward();
      opt.step();
      if (curve) curve->push_back({step, value});
      ++step;
    }
  }
  return codec;
}

double frame_error_percent(const std::vector<std::vector<std::uint8_t>>& refs,
                           const std::vector<std::vector<std::uint8_t>>& hyps) {
  if (refs.size() != hyps.size()) {
    throw Error(ErrorCategory::kShape, "frame_error_percent: count mismatch");
  }
  std::int64_t miss = 0, fa = 0, active = 0;
  for (std::size_t i = 0; i < refs.size(); ++i) {
    if (refs[i].size() != hyps[i].size()) {
      throw Error(ErrorCategory::kShape, "frame_error_percent: length mismatch");
    }
    for (std::size_t j = 0; j < refs[i].size(); ++j) {
      active += refs[i][j];
      if (refs[i][j] && !hyps[i][j]) ++miss;
      if (!refs[i][j] && hyps[i][j]) ++fa;
    }
  }
  if (active == 0) {
    if (miss + fa == 0) return 0.0;
    throw Error(ErrorCategory::kNumeric,
                "frame error rate undefined: no reference speech");
  }
  return 100.0 * static_cast<double>(miss + fa) / static_cast<double>(active);
}

double reconstruction_der(const LabelCodec& codec,
                          const std::vector<std::vector<std::uint8_t>>& dataset,
                          double threshold) {
  if (threshold <= 0.0 || threshold >= 1.0) {
    throw Error(ErrorCategory::kConfig, "threshold must lie in (0, 1)");
  }
  std::vector<std::vector<std::uint8_t>> hyps;
  hyps.reserve(dataset.size());
  for (const auto& seq : dataset) {
    auto probs = codec.decode_latent(codec.encode_labels(seq));
    std::vector<std::uint8_t> hyp(probs.size());
    for (std::size_t i = 0; i < probs.size(); ++i)
      hyp[i] = probs[i] >= threshold ? 1 : 0;
    hyps.push_back(std::move(hyp));
  }
  return frame_error_percent(dataset, hyps);
}

}  // namespace flowdiar
