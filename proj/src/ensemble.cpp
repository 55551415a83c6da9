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

#include "flowdiar/ensemble.hpp"

#include <algorithm>
#include <cmath>
#include <map>
#include <set>
#include <string>

#include "flowdiar/assignment.hpp"
#include "flowdiar/errors.hpp"

namespace flowdiar {

namespace {

double pair_overlap(const std::vector<Turn>& a, const std::vector<Turn>& b) {
  double total = 0.0;
  for (const auto& x : a)
    for (const auto& y : b)
      total += std::max(0.0, std::min(x.end, y.end) - std::max(x.start, y.start));
  return total;
}

std::map<std::string, std::vector<Turn>> by_speaker(
    const DiarizationHypothesis& hyp) {
  std::map<std::string, std::vector<Turn>> out;
  for (const auto& t : hyp.turns) out[t.speaker].push_back(t);
  return out;
}

void check_same_file(const std::vector<DiarizationHypothesis>& hyps) {
  for (std::size_t i = 1; i < hyps.size(); ++i) {
    if (hyps[i].file_id != hyps[0].file_id) {
      throw Error(ErrorCategory::kUsage,
                  "ensemble inputs refer to different files (" +
                      hyps[0].file_id + " vs " + hyps[i].file_id + ")");
    }
  }
}

}  // namespace

std::vector<DiarizationHypothesis> align_speakers(
    const std::vector<DiarizationHypothesis>& hypotheses) {
  if (hypotheses.size() <= 1) return hypotheses;
  check_same_file(hypotheses);

  std::vector<DiarizationHypothesis> aligned;
  aligned.push_back(hypotheses[0]);
  std::set<std::string> used_labels;
  for (const auto& t : hypotheses[0].turns) used_labels.insert(t.speaker);

  int fresh_counter = 0;
  auto fresh_label = [&]() {
    std::string label;
    do {
      label = "spk_extra" + std::to_string(++fresh_counter);
    } while (used_labels.count(label));
    return label;
  };

  for (std::size_t h = 1; h < hypotheses.size(); ++h) {
    auto speakers = by_speaker(hypotheses[h]);
    // Accumulated turns per label over everything already relabeled.
    std::map<std::string, std::vector<Turn>> accumulated;
    for (const auto& prev : aligned)
      for (const auto& t : prev.turns) accumulated[t.speaker].push_back(t);

    std::vector<std::string> src_names, dst_names;
    for (const auto& [name, turns] : speakers) src_names.push_back(name);
    for (const auto& [name, turns] : accumulated) dst_names.push_back(name);

    std::vector<std::vector<double>> overlap(
        src_names.size(), std::vector<double>(dst_names.size(), 0.0));
    for (std::size_t s = 0; s < src_names.size(); ++s)
      for (std::size_t d = 0; d < dst_names.size(); ++d)
        overlap[s][d] =
            pair_overlap(speakers[src_names[s]], accumulated[dst_names[d]]);

    std::vector<int> mapping;
    max_score_assignment(overlap, &mapping);

    std::map<std::string, std::string> rename;
    for (std::size_t s = 0; s < src_names.size(); ++s) {
      if (mapping[s] >= 0) {
        rename[src_names[s]] = dst_names[static_cast<std::size_t>(mapping[s])];
      } else {
        std::string label = fresh_label();
        used_labels.insert(label);
        rename[src_names[s]] = label;
      }
    }
    DiarizationHypothesis relabeled = hypotheses[h];
    for (auto& t : relabeled.turns) t.speaker = rename[t.speaker];
    aligned.push_back(std::move(relabeled));
  }
  return aligned;
}

DiarizationHypothesis vote(const std::vector<DiarizationHypothesis>& hypotheses,
                           const EnsembleOptions& options) {
  if (hypotheses.empty()) {
    throw Error(ErrorCategory::kUsage, "ensemble needs at least one hypothesis");
  }
  check_same_file(hypotheses);
  if (options.frame_resolution <= 0.0) {
    throw Error(ErrorCategory::kConfig, "frame_resolution must be positive");
  }

  std::vector<DiarizationHypothesis> hyps;
  std::vector<double> weights;
  if (!options.weights.empty()) {
    if (options.weights.size() != hypotheses.size()) {
      throw Error(ErrorCategory::kConfig,
                  "one weight per hypothesis is required");
    }
    for (double w : options.weights) {
      if (!(w > 0.0)) {
        throw Error(ErrorCategory::kConfig, "weights must be positive");
      }
    }
    hyps = hypotheses;
    weights = options.weights;
  } else {
    hyps = align_speakers(hypotheses);
    // Rank by average pairwise DER against the others, lowest first.
    std::vector<double> avg_der(hyps.size(), 0.0);
    for (std::size_t i = 0; i < hyps.size(); ++i) {
      double total = 0.0;
      int counted = 0;
      for (std::size_t j = 0; j < hyps.size(); ++j) {
        if (i == j) continue;
        try {
          total += compute_der(hyps[j], hyps[i], 0.0, SpeakerMapping::kIdentity)
                       .der;
          ++counted;
        } catch (const Error&) {
          // the reference run had no scored speech; skip the pair
        }
      }
      avg_der[i] = counted ? total / counted : 0.0;
    }
    std::vector<std::size_t> order(hyps.size());
    for (std::size_t i = 0; i < order.size(); ++i) order[i] = i;
    std::stable_sort(order.begin(), order.end(),
                     [&](std::size_t a, std::size_t b) {
                       return avg_der[a] < avg_der[b];
                     });
    weights.assign(hyps.size(), 0.0);
    for (std::size_t rank = 0; rank < order.size(); ++rank)
      weights[order[rank]] = 1.0 / static_cast<double>(rank + 1);
  }

  double res = options.frame_resolution;
  double max_end = 0.0;
  for (const auto& h : hyps)
    for (const auto& t : h.turns) max_end = std::max(max_end, t.end);
  int n_frames = static_cast<int>(std::ceil(max_end / res - 1e-9));

  std::set<std::string> speaker_set;
  for (const auto& h : hyps)
    for (const auto& t : h.turns) speaker_set.insert(t.speaker);
  std::vector<std::string> speakers(speaker_set.begin(), speaker_set.end());

  // active[h][spk] -> frame bitmap
  std::vector<std::vector<std::vector<std::uint8_t>>> active(hyps.size());
  for (std::size_t h = 0; h < hyps.size(); ++h) {
    auto per_speaker = by_speaker(hyps[h]);
    active[h].resize(speakers.size());
    for (std::size_t s = 0; s < speakers.size(); ++s) {
      auto it = per_speaker.find(speakers[s]);
      if (it == per_speaker.end()) {
        active[h][s].assign(static_cast<std::size_t>(n_frames), 0);
      } else {
        active[h][s] = segments_to_frames(it->second, res, n_frames);
      }
    }
  }

  double weight_sum = 0.0;
  for (double w : weights) weight_sum += w;

  std::vector<std::vector<std::uint8_t>> out_frames(
      speakers.size(), std::vector<std::uint8_t>(static_cast<std::size_t>(n_frames), 0));
  std::vector<double> votes(speakers.size());
  std::vector<std::size_t> chosen;
  for (int f = 0; f < n_frames; ++f) {
    double count_mean = 0.0;
    for (std::size_t h = 0; h < hyps.size(); ++h) {
      int count = 0;
      for (std::size_t s = 0; s < speakers.size(); ++s)
        count += active[h][s][static_cast<std::size_t>(f)];
      count_mean += weights[h] * count;
    }
    count_mean /= weight_sum;
    // round half down
    double fl = std::floor(count_mean);
    int target = static_cast<int>(fl) + ((count_mean - fl) > 0.5 ? 1 : 0);
    if (target <= 0) continue;

    for (std::size_t s = 0; s < speakers.size(); ++s) {
      votes[s] = 0.0;
      for (std::size_t h = 0; h < hyps.size(); ++h)
        if (active[h][s][static_cast<std::size_t>(f)]) votes[s] += weights[h];
    }
    chosen.clear();
    for (std::size_t s = 0; s < speakers.size(); ++s)
      if (votes[s] > 0.0) chosen.push_back(s);
    std::stable_sort(chosen.begin(), chosen.end(),
                     [&](std::size_t a, std::size_t b) {
                       if (votes[a] != votes[b]) return votes[a] > votes[b];
                       return speakers[a] < speakers[b];
                     });
    if (static_cast<int>(chosen.size()) > target) chosen.resize(
        static_cast<std::size_t>(target));
    for (std::size_t s : chosen) out_frames[s][static_cast<std::size_t>(f)] = 1;
  }

  DiarizationHypothesis out;
  out.file_id = hyps[0].file_id;
  for (std::size_t s = 0; s < speakers.size(); ++s) {
    auto turns = frames_to_segments(out_frames[s], res, speakers[s]);
    out.turns.insert(out.turns.end(), turns.begin(), turns.end());
  }
  return out;
}

}  // namespace flowdiar
