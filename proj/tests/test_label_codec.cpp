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
#include "flowdiar/label_codec.hpp"
#include "flowdiar/simulator.hpp"

using namespace flowdiar;
using num::Tensor;

namespace {

std::vector<std::uint8_t> random_labels(Rng& rng, double p = 0.5) {
  std::vector<std::uint8_t> f(kLabelFrames);
  for (auto& v : f) v = rng.uniform() < p ? 1 : 0;
  return f;
}

}  // namespace

TEST_CASE("encoder and decoder shape traces") {
  for (int k : {16, 32, 64}) {
    Rng rng(1);
    LabelAEConfig cfg;
    cfg.latent_dim = k;
    LabelCodec codec(cfg, rng);

    std::vector<std::vector<int>> enc_trace;
    Tensor labels = Tensor::zeros({1, 200});
    Tensor z = codec.encode(labels, &enc_trace);
    std::vector<std::vector<int>> expect_enc = {
        {1, 200}, {16, 100}, {32, 50}, {64, 50}, {3200}, {k}};
    CHECK(enc_trace == expect_enc);
    CHECK(z.shape() == std::vector<int>{k});

    std::vector<std::vector<int>> dec_trace;
    Tensor y = codec.decode(z, &dec_trace);
    std::vector<std::vector<int>> expect_dec = {
        {k},      {2 * k},  {3200},   {64, 50}, {32, 50},
        {16, 100}, {1, 200}, {16, 200}, {1, 200}};
    CHECK(dec_trace == expect_dec);
    CHECK(y.shape() == std::vector<int>{1, 200});
  }
}

TEST_CASE("all-zero labels stay finite through a zero final linear") {
  Rng rng(2);
  LabelAEConfig cfg;
  LabelCodec codec(cfg, rng);
  for (auto& p : codec.parameters()) {
    if (p.name == "enc.fc.w" || p.name == "enc.fc.b") {
      std::fill(p.tensor.values().begin(), p.tensor.values().end(), 0.0);
    }
  }
  Tensor z = codec.encode(Tensor::zeros({1, 200}));
  for (double v : z.values()) CHECK(std::isfinite(v));
}

TEST_CASE("encode is deterministic") {
  Rng rng(3);
  LabelCodec codec(LabelAEConfig{}, rng);
  Rng lr(9);
  auto labels = random_labels(lr);
  auto a = codec.encode_labels(labels);
  auto b = codec.encode_labels(labels);
  CHECK(a == b);
  for (double v : a) CHECK(std::isfinite(v));
}

TEST_CASE("decode output lies strictly inside (0,1)") {
  Rng rng(4);
  LabelCodec codec(LabelAEConfig{}, rng);
  for (int trial = 0; trial < 5; ++trial) {
    std::vector<double> z(32);
    for (auto& v : z) v = rng.gaussian() * 5.0;
    auto y = codec.decode_latent(z);
    REQUIRE(y.size() == 200);
    for (double v : y) {
      CHECK(v > 0.0);
      CHECK(v < 1.0);
    }
  }
}

TEST_CASE("bce_loss closed forms and oracle") {
  std::vector<std::uint8_t> target(200, 0);
  for (std::size_t i = 0; i < 200; i += 3) target[i] = 1;

  SUBCASE("uniform half predictions give 200 ln 2") {
    std::vector<double> half(200, 0.5);
    CHECK(bce_loss(target, half) ==
          doctest::Approx(200.0 * std::log(2.0)).epsilon(1e-12));
    CHECK(bce_loss(target, half) == doctest::Approx(138.6294).epsilon(1e-4));
  }
  SUBCASE("perfect predictions at the clamp are effectively zero") {
    std::vector<double> perfect(200);
    for (std::size_t i = 0; i < 200; ++i) perfect[i] = target[i] ? 1.0 : 0.0;
    double loss = bce_loss(target, perfect, 1e-7);
    CHECK(loss >= 0.0);
    CHECK(loss <= 200.0 * 1e-7 * 1.1);
  }
  SUBCASE("random pair matches the term-by-term oracle") {
    Rng rng(11);
    std::vector<double> pred(200);
    for (auto& v : pred) v = rng.uniform(0.01, 0.99);
    double expect = 0.0;
    for (std::size_t i = 0; i < 200; ++i) {
      expect += target[i] ? -std::log(pred[i]) : -std::log(1.0 - pred[i]);
    }
    CHECK(bce_loss(target, pred) == doctest::Approx(expect).epsilon(1e-12));
    CHECK(bce_loss(target, pred) >= 0.0);
  }
}

TEST_CASE("full encode-decode-bce pipeline passes grad_check") {
  Rng rng(21);
  LabelAEConfig cfg;
  cfg.latent_dim = 16;
  LabelCodec codec(cfg, rng);
  Rng lr(5);
  auto labels = random_labels(lr);
  std::vector<double> lv(labels.begin(), labels.end());
  Tensor x = Tensor::from({1, 200}, lv);

  std::vector<Tensor> inputs;
  for (auto& p : codec.parameters()) inputs.push_back(p.tensor);
  auto fn = [&codec, &x](std::vector<Tensor>&) {
    return num::bce_sum(codec.decode(codec.encode(x)), x);
  };
  double err = num::grad_check(fn, inputs, 1e-5, 4, rng);
  CHECK(err <= 1e-4);
}

TEST_CASE("two-point dataset is memorized to zero reconstruction error") {
  std::vector<std::vector<std::uint8_t>> data = {
      std::vector<std::uint8_t>(200, 0), std::vector<std::uint8_t>(200, 1)};
  LabelAETrainConfig cfg;
  cfg.latent_dim = 16;
  cfg.epochs = 40;
  cfg.batch = 2;
  cfg.lr = 3e-3;
  cfg.seed = 7;
  std::vector<TrainCurvePoint> curve;
  LabelCodec codec = train_label_ae(data, cfg, &curve);
  CHECK(reconstruction_der(codec, data) == doctest::Approx(0.0));
  REQUIRE(curve.size() >= 2);
  CHECK(curve.back().loss < curve.front().loss);
}

TEST_CASE("training is bit-reproducible under a fixed seed") {
  Rng lr(31);
  std::vector<std::vector<std::uint8_t>> data;
  for (int i = 0; i < 6; ++i) data.push_back(random_labels(lr, 0.3));
  LabelAETrainConfig cfg;
  cfg.latent_dim = 16;
  cfg.epochs = 2;
  cfg.batch = 3;
  LabelCodec a = train_label_ae(data, cfg);
  LabelCodec b = train_label_ae(data, cfg);
  REQUIRE(a.parameters().size() == b.parameters().size());
  for (std::size_t i = 0; i < a.parameters().size(); ++i) {
    CHECK(a.parameters()[i].tensor.values() ==
          b.parameters()[i].tensor.values());
  }
}

TEST_CASE("empty training set is rejected") {
  CHECK_THROWS_AS(train_label_ae({}, LabelAETrainConfig{}), Error);
}

TEST_CASE("frame_error_percent hand-count oracle") {
  // Three all-active sequences: 600 active frames, one flipped.
  std::vector<std::vector<std::uint8_t>> refs(3,
                                              std::vector<std::uint8_t>(200, 1));
  auto hyps = refs;
  hyps[1][77] = 0;
  CHECK(frame_error_percent(refs, hyps) ==
        doctest::Approx(100.0 / 600.0).epsilon(1e-12));
  CHECK(frame_error_percent(refs, refs) == doctest::Approx(0.0));
}

TEST_CASE("untrained codec reports a large reconstruction error") {
  Rng rng(77);
  LabelCodec codec(LabelAEConfig{}, rng);
  ConversationSpec spec;
  Rng sim(3);
  std::vector<std::vector<std::uint8_t>> data;
  for (int i = 0; i < 8; ++i) {
    auto tracks = simulate_labels(spec, kFrameSeconds, sim).tracks;
    data.insert(data.end(), tracks.begin(), tracks.end());
  }
  double der = reconstruction_der(codec, data);
  CHECK(std::isfinite(der));
  MESSAGE("untrained reconstruction DER (%): ", der);
}
