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

#include "flowdiar/simulator.hpp"

#include <algorithm>
#include <cmath>
#include <filesystem>
#include <fstream>

#include "flowdiar/errors.hpp"
#include "flowdiar/scoring.hpp"

namespace flowdiar {

void validate_spec(const ConversationSpec& spec) {
  if (spec.num_speakers < 1) {
    throw Error(ErrorCategory::kConfig, "num_speakers must be >= 1");
  }
  if (spec.duration <= 0.0 || spec.mean_turn <= 0.0 || spec.mean_pause <= 0.0) {
    throw Error(ErrorCategory::kConfig, "durations must be positive");
  }
  if (spec.overlap_prob < 0.0 || spec.overlap_prob > 1.0) {
    throw Error(ErrorCategory::kConfig, "overlap_prob must lie in [0, 1]");
  }
}

namespace {

double exp_draw(double mean, Rng& rng) {
  return -mean * std::log(1.0 - rng.uniform());
}

}  // namespace

LabelSimResult simulate_labels(const ConversationSpec& spec,
                               double frame_duration, Rng& rng) {
  validate_spec(spec);
  if (frame_duration <= 0.0) {
    throw Error(ErrorCategory::kConfig, "frame_duration must be positive");
  }
  int n_frames =
      static_cast<int>(std::llround(spec.duration / frame_duration));
  struct Interval {
    int speaker;
    double start, end;
  };
  std::vector<Interval> intervals;

  double prev_end = 0.0;
  double prev_start = 0.0;
  int prev_speaker = -1;
  while (prev_end < spec.duration) {
    int speaker = 0;
    if (spec.num_speakers > 1) {
      if (prev_speaker < 0) {
        speaker = rng.uniform_int(spec.num_speakers);
      } else {
        // next speaker differs from the previous one
        speaker = rng.uniform_int(spec.num_speakers - 1);
        if (speaker >= prev_speaker) ++speaker;
      }
    }
    double dur = exp_draw(spec.mean_turn, rng);
    double start;
    if (prev_speaker >= 0 && rng.uniform() < spec.overlap_prob) {
      // start inside the previous turn
      double back = rng.uniform() * 0.5 * (prev_end - prev_start);
      start = std::max(0.0, prev_end - back);
    } else {
      start = prev_end + exp_draw(spec.mean_pause, rng);
    }
    double end = start + dur;
    if (start < spec.duration) {
      intervals.push_back({speaker, start, std::min(end, spec.duration)});
    }
    prev_start = start;
    prev_end = end;
    prev_speaker = speaker;
  }

  LabelSimResult res;
  res.tracks.assign(static_cast<std::size_t>(spec.num_speakers),
                    std::vector<std::uint8_t>(static_cast<std::size_t>(n_frames), 0));
  for (int i = 0; i < n_frames; ++i) {
    double mid = (static_cast<double>(i) + 0.5) * frame_duration;
    for (const auto& iv : intervals) {
      if (iv.start <= mid && mid < iv.end) {
        res.tracks[static_cast<std::size_t>(iv.speaker)]
                  [static_cast<std::size_t>(i)] = 1;
      }
    }
  }
  int any = 0, multi = 0;
  for (int i = 0; i < n_frames; ++i) {
    int active = 0;
    for (const auto& track : res.tracks)
      active += track[static_cast<std::size_t>(i)];
    if (active >= 1) ++any;
    if (active >= 2) ++multi;
  }
  res.overlap_ratio = any > 0 ? static_cast<double>(multi) / any : 0.0;
  return res;
}

std::vector<double> simulate_features(
    const std::vector<std::vector<std::uint8_t>>& labels,
    const std::vector<std::vector<double>>& signatures, int repeat,
    double noise_sigma, Rng& rng) {
  if (labels.size() != signatures.size()) {
    throw Error(ErrorCategory::kShape,
                "simulate_features: one signature per speaker required");
  }
  if (repeat < 1) {
    throw Error(ErrorCategory::kConfig, "repeat must be >= 1");
  }
  std::size_t n_spk = labels.size();
  std::size_t l = n_spk ? labels[0].size() : 0;
  std::size_t f = n_spk ? signatures[0].size() : 0;
  for (const auto& track : labels) {
    if (track.size() != l) {
      throw Error(ErrorCategory::kShape, "simulate_features: ragged labels");
    }
  }
  for (const auto& sig : signatures) {
    if (sig.size() != f) {
      throw Error(ErrorCategory::kShape, "simulate_features: ragged signatures");
    }
  }
  std::size_t rows = l * static_cast<std::size_t>(repeat);
  std::vector<double> out(rows * f, 0.0);
  for (std::size_t r = 0; r < rows; ++r) {
    std::size_t frame = r / static_cast<std::size_t>(repeat);
    double* row = out.data() + r * f;
    for (std::size_t s = 0; s < n_spk; ++s) {
      if (!labels[s][frame]) continue;
      const auto& sig = signatures[s];
      for (std::size_t c = 0; c < f; ++c) row[c] += sig[c];
    }
    if (noise_sigma > 0.0) {
      for (std::size_t c = 0; c < f; ++c) row[c] += noise_sigma * rng.gaussian();
    }
  }
  return out;
}

void make_dataset(const DatasetBuildConfig& config, const std::string& out_dir) {
  validate_spec(config.conversation);
  if (config.n_segments < 0 || config.pool_size < 0) {
    throw Error(ErrorCategory::kConfig, "negative dataset sizes");
  }
  double expect_frames = config.conversation.duration / config.frame_seconds;
  if (std::llround(expect_frames) != config.label_frames) {
    throw Error(ErrorCategory::kConfig,
                "duration / frame_seconds must equal label_frames");
  }
  std::filesystem::create_directories(out_dir);

  Rng base(config.seed);
  int n_spk = config.conversation.num_speakers;
  int l = config.label_frames;
  int f = config.feature_dim;
  int r = config.downsample;

  std::vector<std::uint8_t> label_bytes;
  std::vector<double> feature_data;
  std::vector<double> enroll_data;
  HypothesisSet refs;
  std::ofstream manifest(out_dir + "/manifest.txt");
  if (!manifest) {
    throw Error(ErrorCategory::kIo, "cannot write manifest in " + out_dir);
  }
  manifest << "flowdiar-dataset 1\n";
  manifest << "segments " << config.n_segments << "\n";
  manifest << "speakers_per_segment " << n_spk << "\n";
  manifest << "label_frames " << l << "\n";
  manifest << "frame_seconds " << config.frame_seconds << "\n";
  manifest << "feature_dim " << f << "\n";
  manifest << "downsample " << r << "\n";
  manifest << "enroll_dim " << f << "\n";
  manifest << "pool_size " << config.pool_size << "\n";
  manifest << "with_features " << (config.with_features ? 1 : 0) << "\n";
  manifest << "seed " << config.seed << "\n";

  for (int i = 0; i < config.n_segments; ++i) {
    Rng seg_rng = base.fork(static_cast<std::uint64_t>(i));
    auto sim = simulate_labels(config.conversation, config.frame_seconds,
                               seg_rng);
    std::vector<std::vector<double>> signatures(
        static_cast<std::size_t>(n_spk));
    for (auto& sig : signatures) {
      sig.resize(static_cast<std::size_t>(f));
      for (auto& v : sig) v = seg_rng.gaussian();
    }
    char id_buf[32];
    std::snprintf(id_buf, sizeof(id_buf), "seg%05d", i);
    std::string id = id_buf;

    std::int64_t labels_offset = static_cast<std::int64_t>(label_bytes.size());
    for (const auto& track : sim.tracks) {
      label_bytes.insert(label_bytes.end(), track.begin(), track.end());
    }
    int feature_index = -1;
    if (config.with_features) {
      auto feats = simulate_features(sim.tracks, signatures, r,
                                     config.noise_sigma, seg_rng);
      feature_index = i;
      feature_data.insert(feature_data.end(), feats.begin(), feats.end());
    }
    std::vector<std::string> names;
    DiarizationHypothesis ref;
    ref.file_id = id;
    for (int s = 0; s < n_spk; ++s) {
      std::string name = id + "_spk" + std::to_string(s);
      names.push_back(name);
      auto turns = frames_to_segments(sim.tracks[static_cast<std::size_t>(s)],
                                      config.frame_seconds, name);
      ref.turns.insert(ref.turns.end(), turns.begin(), turns.end());
      for (int c = 0; c < f; ++c) {
        enroll_data.push_back(signatures[static_cast<std::size_t>(s)]
                                        [static_cast<std::size_t>(c)] +
                              config.enroll_noise * seg_rng.gaussian());
      }
    }
    if (!ref.turns.empty()) refs[id] = ref;

    bool eval = config.eval_every > 0 &&
                (i % config.eval_every) == config.eval_every - 1;
    manifest << "segment " << id << " " << (eval ? "eval" : "train") << " "
             << labels_offset << " " << feature_index;
    for (const auto& n : names) manifest << " " << n;
    manifest << "\n";
  }
  manifest.close();

  {
    std::ofstream lf(out_dir + "/labels.bin", std::ios::binary);
    if (!lf) throw Error(ErrorCategory::kIo, "cannot write labels.bin");
    lf.write(reinterpret_cast<const char*>(label_bytes.data()),
             static_cast<std::streamsize>(label_bytes.size()));
  }
  if (config.with_features) {
    write_tensor_file_f32(out_dir + "/features.bin",
                          {config.n_segments, r * l, f}, feature_data);
  }
  write_tensor_file_f32(out_dir + "/enroll.bin",
                        {config.n_segments, n_spk, f}, enroll_data);
  {
    Rng pool_rng = base.fork(0xf00dULL);
    std::vector<double> pool_data;
    for (int i = 0; i < config.pool_size; ++i) {
      for (int c = 0; c < f; ++c) {
        pool_data.push_back(pool_rng.gaussian() +
                            config.enroll_noise * pool_rng.gaussian());
      }
    }
    write_tensor_file_f32(out_dir + "/pool.bin", {config.pool_size, f},
                          pool_data);
  }
  write_rttm_file(refs, out_dir + "/ref.rttm");

  {
    std::ofstream cs(out_dir + "/checksums.txt");
    std::vector<std::string> files = {"manifest.txt", "labels.bin",
                                      "enroll.bin", "pool.bin", "ref.rttm"};
    if (config.with_features) files.insert(files.begin() + 2, "features.bin");
    char buf[64];
    for (const auto& name : files) {
      std::snprintf(buf, sizeof(buf), "%016llx",
                    static_cast<unsigned long long>(
                        file_checksum(out_dir + "/" + name)));
      cs << buf << "  " << name << "\n";
    }
  }
}

}  // namespace flowdiar
