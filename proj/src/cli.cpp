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

#include "flowdiar/cli.hpp"

#include <cinttypes>
#include <cstdio>
#include <filesystem>
#include <fstream>
#include <iostream>
#include <map>
#include <sstream>

#include "CLI11.hpp"
#include "flowdiar/dataset.hpp"
#include "flowdiar/ensemble.hpp"
#include "flowdiar/errors.hpp"
#include "flowdiar/scoring.hpp"
#include "flowdiar/simulator.hpp"

namespace flowdiar {

namespace fs = std::filesystem;

namespace {

std::string require_path(const RunConfig& cfg, const std::string& key,
                         const std::string& what) {
  const std::string& p = cfg.get_string(key);
  if (p.empty()) {
    throw Error(ErrorCategory::kUsage,
                "missing " + what + " (set " + key + ")");
  }
  return p;
}

void write_text_file(const std::string& path, const std::string& text) {
  std::ofstream out(path, std::ios::binary);
  if (!out) throw Error(ErrorCategory::kIo, "cannot write " + path);
  out << text;
  if (!out) throw Error(ErrorCategory::kIo, "write failed: " + path);
}

void echo_config(const RunConfig& cfg, const std::string& path) {
  write_text_file(path, cfg.to_text());
}

void write_curve(const std::string& path,
                 const std::vector<TrainCurvePoint>& curve) {
  std::string text;
  char buf[64];
  for (const auto& p : curve) {
    std::snprintf(buf, sizeof(buf), "%lld %.6f\n",
                  static_cast<long long>(p.step), p.loss);
    text += buf;
  }
  write_text_file(path, text);
}

DatasetBuildConfig dataset_config(const RunConfig& cfg) {
  DatasetBuildConfig d;
  d.conversation.num_speakers = cfg.get_int("data_speakers");
  d.conversation.mean_turn = cfg.get_double("data_mean_turn");
  d.conversation.mean_pause = cfg.get_double("data_mean_pause");
  d.conversation.overlap_prob = cfg.get_double("data_overlap_prob");
  d.n_segments = cfg.get_int("data_segments");
  d.feature_dim = cfg.get_int("data_feature_dim");
  d.downsample = cfg.get_int("data_downsample");
  d.noise_sigma = cfg.get_double("data_noise_sigma");
  d.enroll_noise = cfg.get_double("data_enroll_noise");
  d.pool_size = cfg.get_int("data_pool_size");
  d.eval_every = cfg.get_int("data_eval_every");
  d.with_features = cfg.get_bool("data_with_features");
  d.seed = cfg.get_u64("data_seed");
  return d;
}

std::vector<std::size_t> split_segments(const Dataset& ds,
                                        const std::string& split) {
  if (split == "eval") return ds.split_indices(true);
  if (split == "train") return ds.split_indices(false);
  if (split == "all") {
    std::vector<std::size_t> all(ds.size());
    for (std::size_t i = 0; i < all.size(); ++i) all[i] = i;
    return all;
  }
  throw Error(ErrorCategory::kConfig, "unknown split: " + split);
}

}  // namespace

void cmd_simulate(const RunConfig& cfg) {
  std::string out_dir = require_path(cfg, "path_out", "output directory");
  if (fs::exists(out_dir) && !fs::is_empty(out_dir) && !cfg.get_bool("force")) {
    throw Error(ErrorCategory::kUsage,
                "output directory " + out_dir +
                    " is not empty (pass force = true to overwrite)");
  }
  make_dataset(dataset_config(cfg), out_dir);
  echo_config(cfg, out_dir + "/config_used.cfg");
  std::cout << "wrote dataset with " << cfg.get_int("data_segments")
            << " segments to " << out_dir << "\n";
}

Checkpoint label_codec_checkpoint(const LabelCodec& codec,
                                  const LabelAETrainConfig& tc, bool trained) {
  Checkpoint ckpt = Checkpoint::from_params(codec.parameters());
  ckpt.set_meta("model", "label-ae");
  ckpt.set_meta("latent_dim", std::to_string(codec.latent_dim()));
  ckpt.set_meta("epochs", std::to_string(tc.epochs));
  ckpt.set_meta("lr", std::to_string(tc.lr));
  ckpt.set_meta("batch", std::to_string(tc.batch));
  ckpt.set_meta("seed", std::to_string(tc.seed));
  ckpt.set_meta("trained", trained ? "1" : "0");
  return ckpt;
}

LabelCodec load_label_codec(const std::string& path) {
  Checkpoint ckpt = Checkpoint::load(path);
  if (ckpt.get_meta("model") != "label-ae") {
    throw Error(ErrorCategory::kFormat, path + " is not a label-ae checkpoint");
  }
  LabelAEConfig cfg;
  cfg.latent_dim = ckpt.get_meta_int("latent_dim");
  Rng rng(0);
  LabelCodec codec(cfg, rng);
  ckpt.apply_to(&codec.parameters());
  return codec;
}

TsvadConfig tsvad_config_from_checkpoint(const Checkpoint& ckpt) {
  TsvadConfig c;
  c.kind = parse_model_kind(ckpt.get_meta("kind"));
  c.space = parse_flow_space(ckpt.get_meta("space"));
  c.feature_dim = ckpt.get_meta_int("feature_dim");
  c.downsample = ckpt.get_meta_int("downsample");
  c.frame_repr_dim = ckpt.get_meta_int("frame_repr_dim");
  c.model_dim = ckpt.get_meta_int("model_dim");
  c.latent_dim = ckpt.get_meta_int("latent_dim");
  c.enroll_dim = ckpt.get_meta_int("enroll_dim");
  c.num_heads = ckpt.get_meta_int("heads");
  c.encoder_blocks = ckpt.get_meta_int("encoder_blocks");
  c.decoder_blocks = ckpt.get_meta_int("decoder_blocks");
  c.num_slots = ckpt.get_meta_int("slots");
  c.time_embed_dim = ckpt.get_meta_int("time_embed_dim");
  c.conv_kernel = ckpt.get_meta_int("conv_kernel");
  c.ff_multiplier = ckpt.get_meta_int("ff_multiplier");
  return c;
}

TsvadModel load_tsvad_model(const Checkpoint& ckpt) {
  TsvadConfig c = tsvad_config_from_checkpoint(ckpt);
  Rng rng(0);
  TsvadModel model(c, rng);
  ckpt.apply_to(&model.parameters());
  return model;
}

namespace {

void train_label_ae_cmd(const RunConfig& cfg) {
  std::string ds_path = require_path(cfg, "path_dataset", "dataset directory");
  std::string out = require_path(cfg, "path_out", "checkpoint path");
  Dataset ds = Dataset::load(ds_path);
  std::vector<std::vector<std::uint8_t>> seqs;
  for (std::size_t i : ds.split_indices(false)) {
    auto labels = ds.labels(i);
    seqs.insert(seqs.end(), labels.begin(), labels.end());
  }
  int zeros = static_cast<int>(
      std::llround(cfg.get_double("labelae_zero_fraction") *
                   static_cast<double>(seqs.size())));
  for (int i = 0; i < zeros; ++i) {
    seqs.emplace_back(static_cast<std::size_t>(kLabelFrames), 0);
  }

  LabelAETrainConfig tc;
  tc.latent_dim = cfg.get_int("labelae_latent_dim");
  tc.epochs = cfg.get_int("labelae_epochs");
  tc.lr = cfg.get_double("labelae_lr");
  tc.batch = cfg.get_int("labelae_batch");
  tc.seed = cfg.get_u64("labelae_seed");

  std::vector<TrainCurvePoint> curve;
  LabelCodec codec = train_label_ae(seqs, tc, &curve);
  Checkpoint ckpt = label_codec_checkpoint(codec, tc, tc.epochs > 0);
  ckpt.save(out);
  write_curve(out + ".curve", curve);
  echo_config(cfg, out + ".config");
  std::cout << "trained label-ae on " << seqs.size() << " sequences, final loss "
            << (curve.empty() ? 0.0 : curve.back().loss) << "\n";
}

void train_tsvad_cmd(const RunConfig& cfg, ModelKind kind) {
  std::string ds_path = require_path(cfg, "path_dataset", "dataset directory");
  std::string out = require_path(cfg, "path_out", "checkpoint path");
  std::string ft_path = cfg.get_string("path_finetune_dataset");
  if (ft_path.empty()) ft_path = ds_path;
  Dataset sim = Dataset::load(ds_path);
  Dataset ft = Dataset::load(ft_path);

  FlowSpace space = parse_flow_space(cfg.get_string("model_space"));
  LabelCodec* codec_ptr = nullptr;
  LabelCodec codec = [&]() {
    if (kind == ModelKind::kFlow && space == FlowSpace::kLatent) {
      std::string codec_path =
          require_path(cfg, "path_label_ae", "label-ae checkpoint");
      return load_label_codec(codec_path);
    }
    Rng dummy(0);
    return LabelCodec(LabelAEConfig{}, dummy);
  }();
  if (kind == ModelKind::kFlow && space == FlowSpace::kLatent) {
    codec_ptr = &codec;
  }

  TsvadConfig mc;
  mc.kind = kind;
  mc.space = space;
  mc.feature_dim = sim.meta().feature_dim;
  mc.downsample = sim.meta().downsample;
  mc.enroll_dim = sim.meta().enroll_dim;
  mc.latent_dim = kind == ModelKind::kFlow
                      ? (space == FlowSpace::kLatent ? codec.latent_dim()
                                                     : kLabelFrames)
                      : cfg.get_int("labelae_latent_dim");
  if (kind == ModelKind::kBaseline) mc.latent_dim = 32;  // unused by the head
  mc.frame_repr_dim = cfg.get_int("model_frame_repr_dim");
  mc.model_dim = cfg.get_int("model_dim");
  mc.num_heads = cfg.get_int("model_heads");
  mc.encoder_blocks = cfg.get_int("model_encoder_blocks");
  mc.decoder_blocks = cfg.get_int("model_decoder_blocks");
  mc.num_slots = cfg.get_int("model_slots");
  mc.time_embed_dim = cfg.get_int("model_time_embed_dim");
  mc.conv_kernel = cfg.get_int("model_conv_kernel");
  mc.ff_multiplier = cfg.get_int("model_ff_multiplier");

  TsvadTrainConfig tc;
  tc.lr = cfg.get_double("train_lr");
  tc.batch = cfg.get_int("train_batch");
  tc.seed = cfg.get_u64("train_seed");
  tc.stage_a_epochs = cfg.get_int("train_stage_a");
  tc.stage_b_epochs = cfg.get_int("train_stage_b");
  tc.stage_c_epochs = cfg.get_int("train_stage_c");
  tc.p_zero = cfg.get_double("train_p_zero");
  tc.p_replace_all = cfg.get_double("train_p_replace_all");
  tc.sigma_min = cfg.get_double("train_sigma_min");

  Rng init(tc.seed);
  TsvadModel model(mc, init);
  TsvadTrainResult result = train_tsvad(model, sim, ft, codec_ptr, tc);

  Checkpoint ckpt = Checkpoint::from_params(model.parameters());
  ckpt.set_meta("model", kind == ModelKind::kFlow ? "flow-tsvad" : "baseline");
  ckpt.set_meta("kind", model_kind_name(mc.kind));
  ckpt.set_meta("space", flow_space_name(mc.space));
  ckpt.set_meta("feature_dim", std::to_string(mc.feature_dim));
  ckpt.set_meta("downsample", std::to_string(mc.downsample));
  ckpt.set_meta("frame_repr_dim", std::to_string(mc.frame_repr_dim));
  ckpt.set_meta("model_dim", std::to_string(mc.model_dim));
  ckpt.set_meta("latent_dim", std::to_string(mc.latent_dim));
  ckpt.set_meta("enroll_dim", std::to_string(mc.enroll_dim));
  ckpt.set_meta("heads", std::to_string(mc.num_heads));
  ckpt.set_meta("encoder_blocks", std::to_string(mc.encoder_blocks));
  ckpt.set_meta("decoder_blocks", std::to_string(mc.decoder_blocks));
  ckpt.set_meta("slots", std::to_string(mc.num_slots));
  ckpt.set_meta("time_embed_dim", std::to_string(mc.time_embed_dim));
  ckpt.set_meta("conv_kernel", std::to_string(mc.conv_kernel));
  ckpt.set_meta("ff_multiplier", std::to_string(mc.ff_multiplier));
  ckpt.set_meta("train_seed", std::to_string(tc.seed));
  ckpt.set_meta("stage_a_epochs", std::to_string(tc.stage_a_epochs));
  ckpt.set_meta("stage_b_epochs", std::to_string(tc.stage_b_epochs));
  ckpt.set_meta("stage_c_epochs", std::to_string(tc.stage_c_epochs));
  int total_epochs =
      tc.stage_a_epochs + tc.stage_b_epochs + tc.stage_c_epochs;
  ckpt.set_meta("trained", total_epochs > 0 ? "1" : "0");
  {
    std::ostringstream probes;
    for (std::size_t i = 0; i < result.probe_losses.size(); ++i) {
      if (i) probes << ",";
      char buf[32];
      std::snprintf(buf, sizeof(buf), "%.6f", result.probe_losses[i]);
      probes << buf;
    }
    ckpt.set_meta("probe_losses", probes.str());
  }
  ckpt.save(out);
  write_curve(out + ".curve", result.curve);
  echo_config(cfg, out + ".config");
  std::cout << "trained " << ckpt.get_meta("model") << ", "
            << result.curve.size() << " steps, probe loss "
            << result.probe_losses.front() << " -> "
            << result.probe_losses.back() << "\n";
}

}  // namespace

void cmd_train(const RunConfig& cfg, const std::string& target) {
  if (target == "label-ae") {
    train_label_ae_cmd(cfg);
  } else if (target == "flow-tsvad") {
    train_tsvad_cmd(cfg, ModelKind::kFlow);
  } else if (target == "baseline") {
    train_tsvad_cmd(cfg, ModelKind::kBaseline);
  } else {
    throw Error(ErrorCategory::kUsage,
                "unknown train target: " + target +
                    " (expected label-ae | flow-tsvad | baseline)");
  }
}

void cmd_infer(const RunConfig& cfg) {
  std::string ckpt_path = require_path(cfg, "path_checkpoint", "checkpoint");
  std::string ds_path = require_path(cfg, "path_dataset", "dataset directory");
  std::string out_dir = require_path(cfg, "path_out", "output directory");

  Checkpoint ckpt = Checkpoint::load(ckpt_path);
  if (ckpt.get_meta("trained") != "1") {
    throw Error(ErrorCategory::kPrereq,
                "checkpoint " + ckpt_path + " is untrained");
  }
  TsvadModel model = load_tsvad_model(ckpt);
  const TsvadConfig& mc = model.config();

  Dataset ds = Dataset::load(ds_path);
  if (ds.meta().feature_dim != mc.feature_dim ||
      ds.meta().downsample != mc.downsample ||
      ds.meta().enroll_dim != mc.enroll_dim) {
    throw Error(ErrorCategory::kPrereq,
                "dataset geometry does not match the checkpoint");
  }

  LabelCodec* codec_ptr = nullptr;
  LabelCodec codec = [&]() {
    if (mc.kind == ModelKind::kFlow && mc.space == FlowSpace::kLatent) {
      return load_label_codec(
          require_path(cfg, "path_label_ae", "label-ae checkpoint"));
    }
    Rng dummy(0);
    return LabelCodec(LabelAEConfig{}, dummy);
  }();
  if (mc.kind == ModelKind::kFlow && mc.space == FlowSpace::kLatent) {
    if (codec.latent_dim() != mc.latent_dim) {
      throw Error(ErrorCategory::kPrereq,
                  "label-ae latent_dim does not match the checkpoint");
    }
    codec_ptr = &codec;
  }

  auto indices = split_segments(ds, cfg.get_string("infer_split"));
  if (indices.empty()) {
    throw Error(ErrorCategory::kPrereq, "no segments in the requested split");
  }
  HypothesisSet all_refs = parse_rttm_file(ds_path + "/ref.rttm");
  HypothesisSet refs;
  for (std::size_t i : indices) {
    auto it = all_refs.find(ds.info(i).id);
    if (it != all_refs.end()) refs.insert(*it);
  }

  fs::create_directories(out_dir);
  double collar = cfg.get_double("score_collar");
  double threshold = cfg.get_double("infer_threshold");

  std::string summary = "# steps\tseed\tder_percent\n";
  char buf[160];

  auto run_one = [&](int steps, std::uint64_t seed, const std::string& tag) {
    HypothesisSet hyps;
    std::string probs_text;
    for (std::size_t i : indices) {
      const auto& info = ds.info(i);
      auto set = pad_enrollments(ds.enrollments(i), info.speakers,
                                 mc.num_slots);
      DiarizeResult res;
      if (mc.kind == ModelKind::kFlow) {
        DiarizeOptions opts;
        opts.flow.steps = steps;
        opts.flow.solver = parse_solver(cfg.get_string("infer_solver"));
        opts.threshold = threshold;
        opts.seed = seed;
        res = diarize(model, codec_ptr, ds.features(i), set, opts, info.id);
      } else {
        res = baseline_diarize(model, ds.features(i), set, threshold, info.id);
      }
      if (!res.hypothesis.turns.empty()) {
        hyps[info.id] = res.hypothesis;
      }
      for (std::size_t s = 0; s < res.probabilities.size(); ++s) {
        probs_text += info.id + "\t" + std::to_string(s) + "\t" +
                      (set.names[s].empty() ? "-" : set.names[s]);
        for (double p : res.probabilities[s]) {
          std::snprintf(buf, sizeof(buf), "\t%.6f", p);
          probs_text += buf;
        }
        probs_text += "\n";
      }
    }
    write_rttm_file(hyps, out_dir + "/hyp_" + tag + ".rttm");
    write_text_file(out_dir + "/probs_" + tag + ".tsv", probs_text);
    DerReport report =
        score_corpus(refs, hyps, collar, SpeakerMapping::kIdentity);
    return report.der;
  };

  if (mc.kind == ModelKind::kBaseline) {
    double der = run_one(0, 0, "baseline");
    std::snprintf(buf, sizeof(buf), "0\t0\t%.4f\n", der);
    summary += buf;
  } else {
    auto steps_list = cfg.get_int_list("infer_steps");
    if (steps_list.empty()) {
      throw Error(ErrorCategory::kConfig, "infer_steps is empty");
    }
    int runs = cfg.get_int("infer_runs");
    if (runs < 1) throw Error(ErrorCategory::kConfig, "infer_runs must be >= 1");
    std::uint64_t seed0 = cfg.get_u64("infer_seed");
    for (int steps : steps_list) {
      for (int r = 0; r < runs; ++r) {
        std::uint64_t seed = seed0 + static_cast<std::uint64_t>(r);
        std::string tag =
            "steps" + std::to_string(steps) + "_seed" + std::to_string(seed);
        double der = run_one(steps, seed, tag);
        std::snprintf(buf, sizeof(buf), "%d\t%" PRIu64 "\t%.4f\n", steps, seed,
                      der);
        summary += buf;
      }
    }
  }
  write_text_file(out_dir + "/summary.tsv", summary);
  echo_config(cfg, out_dir + "/config_used.cfg");
  std::cout << summary;
}

void cmd_score(const RunConfig& cfg, std::ostream& out) {
  std::string ref_path = require_path(cfg, "path_ref", "reference RTTM");
  std::string hyp_path = require_path(cfg, "path_hyp", "hypothesis RTTM");
  HypothesisSet ref = parse_rttm_file(ref_path);
  HypothesisSet hyp;
  if (fs::exists(hyp_path)) {
    hyp = parse_rttm_file(hyp_path);
  }
  DerReport r = score_corpus(ref, hyp, cfg.get_double("score_collar"),
                             parse_mapping(cfg.get_string("score_mapping")));
  char buf[512];
  std::snprintf(buf, sizeof(buf),
                "scored_speech_seconds = %.3f\n"
                "miss = %.4f\n"
                "false_alarm = %.4f\n"
                "confusion = %.4f\n"
                "der = %.4f\n",
                r.scored_speech_seconds, r.miss, r.false_alarm, r.confusion,
                r.der);
  std::string text = buf;
  if (!r.missing_files.empty()) {
    text += "missing_files =";
    for (const auto& f : r.missing_files) text += " " + f;
    text += "\n";
  }
  out << text;
  const std::string& out_path = cfg.get_string("path_out");
  if (!out_path.empty()) write_text_file(out_path, text);
}

void cmd_ensemble(const RunConfig& cfg) {
  auto inputs = cfg.get_string_list("path_hyps");
  if (inputs.empty()) {
    throw Error(ErrorCategory::kUsage,
                "ensemble needs at least one input (set path_hyps)");
  }
  std::string out_path = require_path(cfg, "path_out", "output RTTM");
  std::vector<HypothesisSet> sets;
  for (const auto& p : inputs) sets.push_back(parse_rttm_file(p));

  std::map<std::string, std::vector<DiarizationHypothesis>> per_file;
  for (const auto& set : sets) {
    for (const auto& [id, hyp] : set) per_file[id].push_back(hyp);
  }
  EnsembleOptions opts;
  opts.frame_resolution = cfg.get_double("ensemble_resolution");
  HypothesisSet combined;
  for (const auto& [id, hyps] : per_file) {
    DiarizationHypothesis voted = vote(hyps, opts);
    if (!voted.turns.empty()) combined[id] = voted;
  }
  write_rttm_file(combined, out_path);
  echo_config(cfg, out_path + ".config");
  std::cout << "ensembled " << inputs.size() << " hypothesis sets over "
            << per_file.size() << " files into " << out_path << "\n";
}

namespace {

struct SubcommandState {
  std::string config_file;
  std::vector<std::string> sets;
  std::map<std::string, std::string> flag_values;
  std::map<std::string, CLI::Option*> flag_options;

  RunConfig build() const {
    RunConfig cfg;
    if (!config_file.empty()) cfg.load_file(config_file);
    for (const auto& kv : sets) {
      auto eq = kv.find('=');
      if (eq == std::string::npos) {
        throw Error(ErrorCategory::kUsage,
                    "--set expects key=value, got: " + kv);
      }
      cfg.set(kv.substr(0, eq), kv.substr(eq + 1));
    }
    for (const auto& [key, opt] : flag_options) {
      if (opt->count() > 0) cfg.set(key, flag_values.at(key));
    }
    return cfg;
  }
};

void attach_config_options(CLI::App* sub, SubcommandState* state) {
  sub->add_option("--config", state->config_file,
                  "key = value configuration file");
  sub->add_option("--set", state->sets, "override: --set key=value");
  for (const auto& e : RunConfig::registry()) {
    state->flag_values[e.key] = "";
    state->flag_options[e.key] =
        sub->add_option("--" + std::string(e.key), state->flag_values[e.key],
                        e.help);
  }
}

}  // namespace

int run_cli(int argc, char** argv) {
  CLI::App app{"flow-matching target-speaker diarization, desk scale"};
  app.require_subcommand(1);

  SubcommandState sim_state, train_state, infer_state, score_state,
      ensemble_state;
  std::string train_target;
  std::vector<std::string> ensemble_inputs;

  CLI::App* sim = app.add_subcommand("simulate", "generate a synthetic dataset");
  attach_config_options(sim, &sim_state);
  CLI::App* train = app.add_subcommand("train", "train a model");
  attach_config_options(train, &train_state);
  train->add_option("--target", train_target,
                    "label-ae | flow-tsvad | baseline")
      ->required();
  CLI::App* infer = app.add_subcommand("infer", "run diarization inference");
  attach_config_options(infer, &infer_state);
  CLI::App* score = app.add_subcommand("score", "score hypothesis against reference");
  attach_config_options(score, &score_state);
  CLI::App* ens = app.add_subcommand("ensemble", "combine hypothesis RTTMs");
  attach_config_options(ens, &ensemble_state);
  ens->add_option("inputs", ensemble_inputs, "hypothesis RTTM files");

  try {
    app.parse(argc, argv);
  } catch (const CLI::ParseError& e) {
    if (e.get_exit_code() == 0) {
      // --help and friends
      return app.exit(e);
    }
    std::cerr << "ERROR usage: " << e.what() << "\n";
    return error_category_exit_code(ErrorCategory::kUsage);
  }

  try {
    if (sim->parsed()) {
      cmd_simulate(sim_state.build());
    } else if (train->parsed()) {
      cmd_train(train_state.build(), train_target);
    } else if (infer->parsed()) {
      cmd_infer(infer_state.build());
    } else if (score->parsed()) {
      cmd_score(score_state.build(), std::cout);
    } else if (ens->parsed()) {
      RunConfig cfg = ensemble_state.build();
      if (!ensemble_inputs.empty()) {
        std::string joined = cfg.get_string("path_hyps");
        for (const auto& p : ensemble_inputs) {
          if (!joined.empty()) joined += ",";
          joined += p;
        }
        cfg.set("path_hyps", joined);
      }
      cmd_ensemble(cfg);
    }
  } catch (const Error& e) {
    std::cerr << "ERROR " << error_category_name(e.category()) << ": "
              << e.what() << "\n";
    return error_category_exit_code(e.category());
  } catch (const std::exception& e) {
    std::cerr << "ERROR internal: " << e.what() << "\n";
    return error_category_exit_code(ErrorCategory::kInternal);
  }
  return 0;
}

}  // namespace flowdiar
