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
#include <filesystem>

#include "doctest.h"
#include "flowdiar/errors.hpp"
#include "flowdiar/simulator.hpp"
#include "flowdiar/tsvad.hpp"

using namespace flowdiar;
using num::Tensor;

namespace {

TsvadConfig tiny_config(ModelKind kind = ModelKind::kFlow) {
  TsvadConfig c;
  c.kind = kind;
  c.feature_dim = 4;
  c.downsample = 4;
  c.frame_repr_dim = 8;
  c.model_dim = 8;
  c.latent_dim = 8;
  c.enroll_dim = 4;
  c.num_heads = 2;
  c.encoder_blocks = 1;
  c.decoder_blocks = 1;
  c.num_slots = 3;
  c.time_embed_dim = 8;
  c.conv_kernel = 3;
  return c;
}

DatasetBuildConfig tiny_dataset_config(std::uint64_t seed) {
  DatasetBuildConfig cfg;
  cfg.n_segments = 8;
  cfg.feature_dim = 4;
  cfg.downsample = 4;
  cfg.pool_size = 8;
  cfg.conversation.num_speakers = 2;
  cfg.noise_sigma = 0.3;
  cfg.seed = seed;
  return cfg;
}

struct TempDataset {
  std::string dir;
  explicit TempDataset(const std::string& tag, std::uint64_t seed) {
    dir = (std::filesystem::temp_directory_path() / ("flowdiar_tsvad_" + tag))
              .string();
    std::filesystem::remove_all(dir);
    make_dataset(tiny_dataset_config(seed), dir);
  }
  ~TempDataset() { std::filesystem::remove_all(dir); }
};

}  // namespace

TEST_CASE("sinusoidal position table") {
  Tensor p = sinusoidal_positions(16, 8);
  REQUIRE(p.shape() == std::vector<int>{16, 8});
  for (int i = 0; i < 4; ++i) {
    CHECK(p.values()[static_cast<std::size_t>(2 * i)] == doctest::Approx(0.0));
    CHECK(p.values()[static_cast<std::size_t>(2 * i + 1)] ==
          doctest::Approx(1.0));
  }
  for (double v : p.values()) {
    CHECK(v >= -1.0);
    CHECK(v <= 1.0);
  }
  // pos = 1, lowest-frequency pair: sin(1)
  CHECK(p.values()[8] == doctest::Approx(std::sin(1.0)).epsilon(1e-9));
  CHECK(p.values()[8] == doctest::Approx(0.84147).epsilon(1e-4));
  CHECK_THROWS_AS(sinusoidal_positions(4, 7), Error);
}

TEST_CASE("frame encoder geometry") {
  SUBCASE("1600xF maps to 200xE at downsample 8") {
    TsvadConfig c = tiny_config();
    c.downsample = 8;
    Rng rng(3);
    TsvadModel model(c, rng);
    Tensor feats = Tensor::randn({1600, 4}, rng);
    Tensor h = model.frame_encode(feats);
    CHECK(h.shape() == std::vector<int>{200, 8});
  }
  SUBCASE("length formula across downsample rates") {
    Rng lr(5);
    for (int r : {2, 4, 8}) {
      TsvadConfig c = tiny_config();
      c.downsample = r;
      Rng rng(7);
      TsvadModel model(c, rng);
      for (int trial = 0; trial < 3; ++trial) {
        int len = r * (20 + lr.uniform_int(60));
        Tensor feats = Tensor::randn({len, 4}, lr);
        CHECK(model.frame_encode(feats).dim(0) == len / r);
      }
      Tensor bad = Tensor::randn({r * 10 + 1, 4}, lr);
      CHECK_THROWS_AS(model.frame_encode(bad), Error);
    }
  }
  SUBCASE("zero input with zero bias stays zero") {
    TsvadConfig c = tiny_config();
    Rng rng(9);
    TsvadModel model(c, rng);
    Tensor h = model.frame_encode(Tensor::zeros({160, 4}));
    for (double v : h.values()) CHECK(v == 0.0);
  }
}

TEST_CASE("context encoder behavior") {
  TsvadConfig c = tiny_config();
  Rng rng(11);
  TsvadModel model(c, rng);

  SUBCASE("shape (L,E) to (L,d)") {
    Tensor h = Tensor::randn({40, 8}, rng);
    Tensor o = model.context_encode(h);
    CHECK(o.shape() == std::vector<int>{40, 8});
  }
  SUBCASE("zeroed sublayers reduce to the projected position-added input") {
    for (auto& p : model.parameters()) {
      if (p.name.rfind("ctx.b0.", 0) == 0) {
        std::fill(p.tensor.values().begin(), p.tensor.values().end(), 0.0);
      }
    }
    Tensor h = Tensor::randn({24, 8}, rng);
    Tensor o = model.context_encode(h);
    Tensor expect =
        num::add(num::add_rowvec(num::matmul(h, model.param("ctx.in.w")),
                                 model.param("ctx.in.b")),
                 sinusoidal_positions(24, 8));
    REQUIRE(o.shape() == expect.shape());
    for (std::size_t i = 0; i < o.values().size(); ++i)
      CHECK(o.values()[i] == doctest::Approx(expect.values()[i]).epsilon(1e-12));
  }
  SUBCASE("permuting input rows changes the output") {
    Rng rr(13);
    TsvadModel m2(tiny_config(), rr);
    Tensor h = Tensor::randn({24, 8}, rr);
    Tensor o1 = m2.context_encode(h);
    // reverse the rows
    std::vector<double> rev(h.values().size());
    for (int r = 0; r < 24; ++r)
      for (int cc = 0; cc < 8; ++cc)
        rev[static_cast<std::size_t>(r) * 8 + cc] =
            h.values()[static_cast<std::size_t>(23 - r) * 8 + cc];
    Tensor o2 = m2.context_encode(Tensor::from({24, 8}, rev));
    double diff = 0.0;
    for (int r = 0; r < 24; ++r)
      for (int cc = 0; cc < 8; ++cc)
        diff = std::max(diff, std::fabs(o2.values()[static_cast<std::size_t>(
                                            23 - r) * 8 + cc] -
                                        o1.values()[static_cast<std::size_t>(r) *
                                                    8 + cc]));
    CHECK(diff > 1e-6);
  }
}

TEST_CASE("augment_enrollments") {
  std::vector<std::vector<double>> real = {{1, 0, 0, 0}, {0, 1, 0, 0}};
  std::vector<std::string> names = {"a", "b"};
  std::vector<std::vector<std::uint8_t>> labels(
      2, std::vector<std::uint8_t>(200, 1));
  std::vector<std::vector<double>> pool = {{9, 9, 9, 9}, {8, 8, 8, 8}};

  SUBCASE("deterministic under a seed, two silence targets") {
    Rng a(5), b(5);
    auto ra = augment_enrollments(real, names, labels, pool, 4, a, 0.5, 0.0);
    auto rb = augment_enrollments(real, names, labels, pool, 4, b, 0.5, 0.0);
    CHECK(ra.set.embeddings == rb.set.embeddings);
    REQUIRE(ra.targets.size() == 4);
    CHECK(ra.set.kinds[0] == SlotKind::kReal);
    CHECK(ra.set.kinds[1] == SlotKind::kReal);
    int silence = 0;
    for (int s = 2; s < 4; ++s) {
      bool all_zero = true;
      for (auto v : ra.targets[static_cast<std::size_t>(s)]) all_zero &= (v == 0);
      silence += all_zero;
    }
    CHECK(silence == 2);
  }
  SUBCASE("p_replace_all = 1 silences every slot") {
    Rng rng(6);
    auto res = augment_enrollments(real, names, labels, pool, 4, rng, 0.5, 1.0);
    CHECK(res.all_replaced);
    for (const auto& tgt : res.targets) {
      for (auto v : tgt) CHECK(v == 0);
    }
    for (auto kind : res.set.kinds) CHECK(kind != SlotKind::kReal);
  }
  SUBCASE("empirical frequencies approach (0.2, 0.5)") {
    Rng rng(7);
    int replaced = 0;
    std::int64_t pad_slots = 0, zero_slots = 0;
    const int trials = 10000;
    for (int i = 0; i < trials; ++i) {
      auto res = augment_enrollments(real, names, labels, pool, 6, rng);
      replaced += res.all_replaced;
      for (std::size_t s = 0; s < res.set.kinds.size(); ++s) {
        if (res.set.kinds[s] == SlotKind::kReal) continue;
        ++pad_slots;
        zero_slots += res.set.kinds[s] == SlotKind::kZero;
      }
    }
    CHECK(std::fabs(replaced / static_cast<double>(trials) - 0.2) < 0.02);
    CHECK(std::fabs(zero_slots / static_cast<double>(pad_slots) - 0.5) < 0.02);
  }
  SUBCASE("too many real speakers rejected") {
    Rng rng(8);
    CHECK_THROWS_AS(
        augment_enrollments(real, names, labels, pool, 1, rng), Error);
  }
}

TEST_CASE("predict_field shape, equivariance and time sensitivity") {
  TsvadConfig c = tiny_config();
  Rng rng(21);
  TsvadModel model(c, rng);
  Tensor feats = Tensor::randn({160, 4}, rng);
  Tensor enc = model.encode_features(feats);
  Tensor z = Tensor::randn({3, 8}, rng);
  Tensor e = Tensor::randn({3, 4}, rng);

  Tensor v = model.predict_field(z, 0.3, e, enc);
  CHECK(v.shape() == std::vector<int>{3, 8});

  SUBCASE("slot permutation permutes the output bitwise") {
    std::vector<int> perm = {2, 0, 1};
    auto permute = [&](const Tensor& t) {
      int cols = t.dim(1);
      std::vector<double> out(t.values().size());
      for (int r = 0; r < 3; ++r)
        for (int cc = 0; cc < cols; ++cc)
          out[static_cast<std::size_t>(r) * cols + cc] =
              t.values()[static_cast<std::size_t>(perm[static_cast<std::size_t>(r)]) *
                             cols +
                         cc];
      return Tensor::from(t.shape(), out);
    };
    Tensor vp = model.predict_field(permute(z), 0.3, permute(e), enc);
    for (int r = 0; r < 3; ++r)
      for (int cc = 0; cc < 8; ++cc)
        CHECK(vp.values()[static_cast<std::size_t>(r) * 8 + cc] ==
              v.values()[static_cast<std::size_t>(
                             perm[static_cast<std::size_t>(r)]) *
                             8 +
                         cc]);
  }
  SUBCASE("time conditioning is live") {
    Tensor v2 = model.predict_field(z, 0.8, e, enc);
    double diff = 0.0;
    for (std::size_t i = 0; i < v.values().size(); ++i)
      diff = std::max(diff, std::fabs(v.values()[i] - v2.values()[i]));
    CHECK(diff > 1e-8);
  }
  SUBCASE("slot mismatch rejected") {
    Tensor bad = Tensor::randn({4, 8}, rng);
    CHECK_THROWS_AS(model.predict_field(bad, 0.3, e, enc), Error);
  }
}

TEST_CASE("full training step passes grad_check on a tiny model") {
  TsvadConfig c = tiny_config();
  Rng rng(31);
  TsvadModel model(c, rng);
  LabelAEConfig lc;
  lc.latent_dim = 8;
  Rng crng(32);
  LabelCodec codec(lc, crng);
  codec.set_trainable(false);

  // One fixed segment: labels -> latents -> path sample -> field -> loss.
  Rng data_rng(33);
  Tensor feats = Tensor::randn({160, 4}, data_rng);
  std::vector<std::vector<std::uint8_t>> labels(3);
  for (auto& track : labels) {
    track.assign(200, 0);
    for (int i = 60; i < 140; ++i) track[static_cast<std::size_t>(i)] =
        data_rng.uniform() < 0.7;
  }
  double t = 0.37;
  std::vector<std::vector<double>> zt_rows, u_rows, e_rows;
  for (int s = 0; s < 3; ++s) {
    auto z1 = codec.encode_labels(labels[static_cast<std::size_t>(s)]);
    std::vector<double> z0(z1.size());
    for (auto& vv : z0) vv = data_rng.gaussian();
    auto ps = sample_path(z1, t, z0, 0.0);
    zt_rows.push_back(ps.z_t);
    u_rows.push_back(ps.u_target);
    std::vector<double> e(4);
    for (auto& vv : e) vv = data_rng.gaussian();
    e_rows.push_back(e);
  }
  auto rows = [](const std::vector<std::vector<double>>& r) {
    std::vector<double> flat;
    for (const auto& row : r) flat.insert(flat.end(), row.begin(), row.end());
    return Tensor::from({static_cast<int>(r.size()),
                         static_cast<int>(r[0].size())},
                        flat);
  };
  Tensor z_t = rows(zt_rows);
  Tensor u = rows(u_rows);
  Tensor e = rows(e_rows);

  std::vector<Tensor> inputs;
  for (auto& p : model.parameters()) inputs.push_back(p.tensor);
  auto fn = [&](std::vector<Tensor>&) {
    Tensor enc = model.encode_features(feats);
    Tensor v = model.predict_field(z_t, t, e, enc);
    return cfm_reduction(v, u);
  };
  double err = num::grad_check(fn, inputs, 1e-5, 1, rng);
  CHECK(err <= 1e-4);
}

TEST_CASE("training stages: freezing, determinism, zero-epoch identity") {
  TempDataset sim("sim", 41);
  TempDataset ft("ft", 42);
  Dataset sim_ds = Dataset::load(sim.dir);
  Dataset ft_ds = Dataset::load(ft.dir);

  LabelAETrainConfig lcfg;
  lcfg.latent_dim = 8;
  lcfg.epochs = 1;
  lcfg.batch = 8;
  std::vector<std::vector<std::uint8_t>> seqs;
  for (std::size_t i = 0; i < sim_ds.size(); ++i) {
    auto l = sim_ds.labels(i);
    seqs.insert(seqs.end(), l.begin(), l.end());
  }
  LabelCodec codec = train_label_ae(seqs, lcfg);

  TsvadTrainConfig tc;
  tc.batch = 3;
  tc.seed = 17;

  SUBCASE("zero-epoch training returns the initialized model unchanged") {
    Rng rng(51);
    TsvadModel model(tiny_config(), rng);
    std::vector<std::vector<double>> before;
    for (auto& p : model.parameters()) before.push_back(p.tensor.values());
    TsvadTrainConfig zero = tc;
    zero.stage_a_epochs = zero.stage_b_epochs = zero.stage_c_epochs = 0;
    train_tsvad(model, sim_ds, ft_ds, &codec, zero);
    for (std::size_t i = 0; i < before.size(); ++i)
      CHECK(model.parameters()[i].tensor.values() == before[i]);
  }
  SUBCASE("stage A leaves the frame encoder bit-identical") {
    Rng rng(52);
    TsvadModel model(tiny_config(), rng);
    std::vector<std::vector<double>> fe_before;
    for (auto& p : model.parameters())
      if (p.name.rfind("fe.", 0) == 0) fe_before.push_back(p.tensor.values());
    TsvadTrainConfig stage_a = tc;
    stage_a.stage_a_epochs = 2;
    stage_a.stage_b_epochs = 0;
    stage_a.stage_c_epochs = 0;
    auto result = train_tsvad(model, sim_ds, ft_ds, &codec, stage_a);
    std::size_t fe_i = 0;
    bool others_changed = false;
    for (auto& p : model.parameters()) {
      if (p.name.rfind("fe.", 0) == 0) {
        CHECK(p.tensor.values() == fe_before[fe_i++]);
      } else if (p.name == "dec.tok.w") {
        others_changed = true;
      }
    }
    CHECK(others_changed);
    REQUIRE(result.probe_losses.size() == 4);
    MESSAGE("probe loss ", result.probe_losses[0], " -> ",
            result.probe_losses[1]);
  }
  SUBCASE("training twice with one seed is bit-reproducible") {
    TsvadTrainConfig small = tc;
    small.stage_a_epochs = 1;
    small.stage_b_epochs = 1;
    small.stage_c_epochs = 1;
    Rng r1(53), r2(53);
    TsvadModel m1(tiny_config(), r1), m2(tiny_config(), r2);
    train_tsvad(m1, sim_ds, ft_ds, &codec, small);
    train_tsvad(m2, sim_ds, ft_ds, &codec, small);
    for (std::size_t i = 0; i < m1.parameters().size(); ++i)
      CHECK(m1.parameters()[i].tensor.values() ==
            m2.parameters()[i].tensor.values());
  }
  SUBCASE("probe loss decreases over stage A") {
    Rng rng(54);
    TsvadModel model(tiny_config(), rng);
    TsvadTrainConfig stage_a = tc;
    stage_a.stage_a_epochs = 6;
    stage_a.stage_b_epochs = 0;
    stage_a.stage_c_epochs = 0;
    stage_a.lr = 3e-3;
    auto result = train_tsvad(model, sim_ds, ft_ds, &codec, stage_a);
    CHECK(result.probe_losses[1] < result.probe_losses[0]);
  }
}

TEST_CASE("diarize determinism and seed sensitivity") {
  TempDataset sim("diar", 60);
  Dataset ds = Dataset::load(sim.dir);
  TsvadConfig c = tiny_config();
  Rng rng(61);
  TsvadModel model(c, rng);
  LabelAEConfig lc;
  lc.latent_dim = 8;
  Rng crng(62);
  LabelCodec codec(lc, crng);

  Tensor feats = ds.features(0);
  auto set = pad_enrollments(ds.enrollments(0), ds.info(0).speakers, 3);

  DiarizeOptions opts;
  opts.seed = 1001;
  auto r1 = diarize(model, &codec, feats, set, opts, "seg00000");
  auto r2 = diarize(model, &codec, feats, set, opts, "seg00000");
  CHECK(r1.probabilities == r2.probabilities);
  CHECK(emit_rttm({{r1.hypothesis.file_id, r1.hypothesis}}) ==
        emit_rttm({{r2.hypothesis.file_id, r2.hypothesis}}));

  DiarizeOptions other = opts;
  other.seed = 2002;
  auto r3 = diarize(model, &codec, feats, set, other, "seg00000");
  CHECK(r3.probabilities != r1.probabilities);

  SUBCASE("slot permutation permutes diarize outputs exactly") {
    EnrollmentSet permuted;
    std::vector<int> perm = {1, 2, 0};
    for (int s : perm) {
      permuted.embeddings.push_back(set.embeddings[static_cast<std::size_t>(s)]);
      permuted.names.push_back(set.names[static_cast<std::size_t>(s)]);
      permuted.kinds.push_back(set.kinds[static_cast<std::size_t>(s)]);
    }
    auto rp = diarize(model, &codec, feats, permuted, opts, "seg00000");
    for (std::size_t r = 0; r < perm.size(); ++r)
      CHECK(rp.probabilities[r] ==
            r1.probabilities[static_cast<std::size_t>(perm[r])]);
    CHECK(emit_rttm({{rp.hypothesis.file_id, rp.hypothesis}}) ==
          emit_rttm({{r1.hypothesis.file_id, r1.hypothesis}}));
  }
}

TEST_CASE("baseline head shape and determinism") {
  TempDataset sim("base", 70);
  Dataset ds = Dataset::load(sim.dir);
  TsvadConfig c = tiny_config(ModelKind::kBaseline);
  Rng rng(71);
  TsvadModel model(c, rng);
  Tensor feats = ds.features(0);
  auto set = pad_enrollments(ds.enrollments(0), ds.info(0).speakers, 3);

  auto r1 = baseline_diarize(model, feats, set, 0.5, "seg00000");
  REQUIRE(r1.probabilities.size() == 3);
  for (const auto& track : r1.probabilities) {
    REQUIRE(track.size() == 200);
    for (double v : track) {
      CHECK(v >= 0.0);
      CHECK(v <= 1.0);
    }
  }
  auto r2 = baseline_diarize(model, feats, set, 0.5, "seg00000");
  CHECK(r1.probabilities == r2.probabilities);
}
