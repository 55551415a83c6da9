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

#include "flowdiar/scoring.hpp"

#include <algorithm>
#include <cmath>
#include <cstdio>
#include <fstream>
#include <sstream>

#include "flowdiar/assignment.hpp"
#include "flowdiar/errors.hpp"

namespace flowdiar {

SpeakerMapping parse_mapping(const std::string& name) {
  if (name == "optimal") return SpeakerMapping::kOptimal;
  if (name == "identity") return SpeakerMapping::kIdentity;
  throw Error(ErrorCategory::kConfig, "unknown speaker mapping: " + name);
}

const char* mapping_name(SpeakerMapping m) {
  return m == SpeakerMapping::kOptimal ? "optimal" : "identity";
}

namespace {

void validate_turn(const Turn& t, const std::string& context) {
  if (t.start < 0.0 || !(t.end > t.start)) {
    throw Error(ErrorCategory::kFormat,
                context + ": segment must satisfy 0 <= start < end (speaker " +
                    t.speaker + ", start " + std::to_string(t.start) +
                    ", end " + std::to_string(t.end) + ")");
  }
}

}  // namespace

HypothesisSet parse_rttm(const std::string& text) {
  HypothesisSet out;
  std::istringstream in(text);
  std::string line;
  int line_no = 0;
  while (std::getline(in, line)) {
    ++line_no;
    std::istringstream ls(line);
    std::vector<std::string> tok;
    std::string t;
    while (ls >> t) tok.push_back(t);
    if (tok.empty()) continue;
    if (tok[0][0] == ';' || tok[0][0] == '#') continue;
    if (tok[0] != "SPEAKER" || tok.size() < 9) {
      throw Error(ErrorCategory::kFormat,
                  "rttm line " + std::to_string(line_no) +
                      ": expected a SPEAKER record with at least 9 fields");
    }
    double tbeg, tdur;
    try {
      std::size_t p1 = 0, p2 = 0;
      tbeg = std::stod(tok[3], &p1);
      tdur = std::stod(tok[4], &p2);
      if (p1 != tok[3].size() || p2 != tok[4].size()) throw std::invalid_argument("");
    } catch (const std::exception&) {
      throw Error(ErrorCategory::kFormat,
                  "rttm line " + std::to_string(line_no) +
                      ": non-numeric onset/duration");
    }
    if (tbeg < 0.0 || tdur <= 0.0) {
      throw Error(ErrorCategory::kFormat,
                  "rttm line " + std::to_string(line_no) +
                      ": onset must be >= 0 and duration > 0");
    }
    auto& hyp = out[tok[1]];
    hyp.file_id = tok[1];
    hyp.turns.push_back(Turn{tok[7], tbeg, tbeg + tdur});
  }
  return out;
}

HypothesisSet parse_rttm_file(const std::string& path) {
  std::ifstream in(path);
  if (!in) throw Error(ErrorCategory::kIo, "cannot open rttm file: " + path);
  std::ostringstream ss;
  ss << in.rdbuf();
  return parse_rttm(ss.str());
}

std::string emit_rttm(const HypothesisSet& hypotheses) {
  std::string out;
  char buf[256];
  for (const auto& [file_id, hyp] : hypotheses) {
    std::vector<Turn> turns = hyp.turns;
    for (const auto& t : turns) validate_turn(t, "emit_rttm " + file_id);
    std::sort(turns.begin(), turns.end(), [](const Turn& a, const Turn& b) {
      if (a.start != b.start) return a.start < b.start;
      if (a.end != b.end) return a.end < b.end;
      return a.speaker < b.speaker;
    });
    for (const auto& t : turns) {
      std::snprintf(buf, sizeof(buf),
                    "SPEAKER %s 1 %.3f %.3f <NA> <NA> %s <NA> <NA>\n",
                    file_id.c_str(), t.start, t.end - t.start,
                    t.speaker.c_str());
      out += buf;
    }
  }
  return out;
}

void write_rttm_file(const HypothesisSet& hypotheses, const std::string& path) {
  std::ofstream out(path, std::ios::binary);
  if (!out) throw Error(ErrorCategory::kIo, "cannot write rttm file: " + path);
  out << emit_rttm(hypotheses);
  if (!out) throw Error(ErrorCategory::kIo, "write failed: " + path);
}

std::vector<Turn> frames_to_segments(const std::vector<std::uint8_t>& frames,
                                     double frame_duration,
                                     const std::string& speaker) {
  if (frame_duration <= 0.0) {
    throw Error(ErrorCategory::kConfig, "frame_duration must be positive");
  }
  std::vector<Turn> out;
  std::size_t i = 0;
  while (i < frames.size()) {
    if (!frames[i]) {
      ++i;
      continue;
    }
    std::size_t j = i;
    while (j < frames.size() && frames[j]) ++j;
    out.push_back(Turn{speaker, static_cast<double>(i) * frame_duration,
                       static_cast<double>(j) * frame_duration});
    i = j;
  }
  return out;
}

std::vector<std::uint8_t> segments_to_frames(const std::vector<Turn>& turns,
                                             double frame_duration,
                                             int n_frames) {
  if (frame_duration <= 0.0) {
    throw Error(ErrorCategory::kConfig, "frame_duration must be positive");
  }
  std::vector<std::uint8_t> frames(static_cast<std::size_t>(n_frames), 0);
  for (const auto& t : turns) {
    for (int i = 0; i < n_frames; ++i) {
      double mid = (static_cast<double>(i) + 0.5) * frame_duration;
      if (mid >= t.start && mid < t.end) frames[static_cast<std::size_t>(i)] = 1;
    }
  }
  return frames;
}

namespace {

struct ErrorSeconds {
  double miss = 0.0;
  double fa = 0.0;
  double conf = 0.0;
  double scored_ref = 0.0;
};

// Region-sweep scorer over one file. Cut points come from every segment
// boundary and every collar-zone edge, so each region is homogeneous in
// speaker content and exclusion status.
ErrorSeconds score_file(const DiarizationHypothesis& ref,
                        const DiarizationHypothesis& hyp, double collar,
                        SpeakerMapping mapping) {
  if (collar < 0.0) {
    throw Error(ErrorCategory::kConfig, "collar must be nonnegative");
  }
  for (const auto& t : ref.turns) validate_turn(t, "reference " + ref.file_id);
  for (const auto& t : hyp.turns) validate_turn(t, "hypothesis " + hyp.file_id);

  std::vector<double> cuts;
  std::vector<double> zone_centers;
  for (const auto& t : ref.turns) {
    zone_centers.push_back(t.start);
    zone_centers.push_back(t.end);
    cuts.push_back(t.start);
    cuts.push_back(t.end);
    cuts.push_back(std::max(0.0, t.start - collar));
    cuts.push_back(t.start + collar);
    cuts.push_back(std::max(0.0, t.end - collar));
    cuts.push_back(t.end + collar);
  }
  for (const auto& t : hyp.turns) {
    cuts.push_back(t.start);
    cuts.push_back(t.end);
  }
  ErrorSeconds acc;
  if (cuts.empty()) return acc;
  cuts.push_back(0.0);
  std::sort(cuts.begin(), cuts.end());
  cuts.erase(std::unique(cuts.begin(), cuts.end()), cuts.end());

  std::map<std::string, int> ref_ids, hyp_ids;
  for (const auto& t : ref.turns) ref_ids.emplace(t.speaker, 0);
  for (const auto& t : hyp.turns) hyp_ids.emplace(t.speaker, 0);
  int nr_total = 0, nh_total = 0;
  for (auto& [name, id] : ref_ids) id = nr_total++;
  for (auto& [name, id] : hyp_ids) id = nh_total++;

  struct Region {
    double dur;
    std::vector<char> ref_active, hyp_active;
    int nr = 0, nh = 0;
  };
  std::vector<Region> regions;
  regions.reserve(cuts.size());
  for (std::size_t i = 0; i + 1 < cuts.size(); ++i) {
    double a = cuts[i], b = cuts[i + 1];
    if (!(b > a)) continue;
    double m = 0.5 * (a + b);
    bool excluded = false;
    for (double z : zone_centers) {
      if (m >= z - collar && m <= z + collar) {
        excluded = true;
        break;
      }
    }
    if (excluded) continue;
    Region rg;
    rg.dur = b - a;
    rg.ref_active.assign(static_cast<std::size_t>(nr_total), 0);
    rg.hyp_active.assign(static_cast<std::size_t>(nh_total), 0);
    for (const auto& t : ref.turns) {
      if (t.start <= m && m < t.end)
        rg.ref_active[static_cast<std::size_t>(ref_ids[t.speaker])] = 1;
    }
    for (const auto& t : hyp.turns) {
      if (t.start <= m && m < t.end)
        rg.hyp_active[static_cast<std::size_t>(hyp_ids[t.speaker])] = 1;
    }
    for (char c : rg.ref_active) rg.nr += c;
    for (char c : rg.hyp_active) rg.nh += c;
    if (rg.nr == 0 && rg.nh == 0) continue;
    regions.push_back(std::move(rg));
  }

  // Speaker map: identity matches equal names; optimal maximizes matched
  // time over the scored-region overlap matrix.
  std::vector<int> ref_to_hyp(static_cast<std::size_t>(nr_total), -1);
  if (mapping == SpeakerMapping::kIdentity) {
    for (const auto& [name, rid] : ref_ids) {
      auto it = hyp_ids.find(name);
      if (it != hyp_ids.end()) ref_to_hyp[static_cast<std::size_t>(rid)] = it->second;
    }
  } else if (nr_total > 0 && nh_total > 0) {
    std::vector<std::vector<double>> overlap(
        static_cast<std::size_t>(nr_total),
        std::vector<double>(static_cast<std::size_t>(nh_total), 0.0));
    for (const auto& rg : regions) {
      for (int r = 0; r < nr_total; ++r) {
        if (!rg.ref_active[static_cast<std::size_t>(r)]) continue;
        for (int h = 0; h < nh_total; ++h) {
          if (rg.hyp_active[static_cast<std::size_t>(h)])
            overlap[static_cast<std::size_t>(r)][static_cast<std::size_t>(h)] +=
                rg.dur;
        }
      }
    }
    max_score_assignment(overlap, &ref_to_hyp);
  }

  for (const auto& rg : regions) {
    int matched = 0;
    for (int r = 0; r < nr_total; ++r) {
      if (!rg.ref_active[static_cast<std::size_t>(r)]) continue;
      int h = ref_to_hyp[static_cast<std::size_t>(r)];
      if (h >= 0 && rg.hyp_active[static_cast<std::size_t>(h)]) ++matched;
    }
    acc.miss += std::max(0, rg.nr - rg.nh) * rg.dur;
    acc.fa += std::max(0, rg.nh - rg.nr) * rg.dur;
    acc.conf += (std::min(rg.nr, rg.nh) - matched) * rg.dur;
    acc.scored_ref += rg.nr * rg.dur;
  }
  return acc;
}

DerReport finalize(const ErrorSeconds& e) {
  if (e.scored_ref <= 0.0) {
    throw Error(ErrorCategory::kNumeric,
                "DER undefined: no scored reference speech");
  }
  DerReport r;
  r.miss_seconds = e.miss;
  r.fa_seconds = e.fa;
  r.conf_seconds = e.conf;
  r.scored_speech_seconds = e.scored_ref;
  r.miss = 100.0 * e.miss / e.scored_ref;
  r.false_alarm = 100.0 * e.fa / e.scored_ref;
  r.confusion = 100.0 * e.conf / e.scored_ref;
  r.der = r.miss + r.false_alarm + r.confusion;
  return r;
}

}  // namespace

DerReport compute_der(const DiarizationHypothesis& reference,
                      const DiarizationHypothesis& hypothesis, double collar,
                      SpeakerMapping mapping) {
  if (!hypothesis.file_id.empty() && !reference.file_id.empty() &&
      hypothesis.file_id != reference.file_id) {
    throw Error(ErrorCategory::kUsage,
                "compute_der: hypotheses refer to different files (" +
                    reference.file_id + " vs " + hypothesis.file_id + ")");
  }
  return finalize(score_file(reference, hypothesis, collar, mapping));
}

DerReport score_corpus(const HypothesisSet& ref, const HypothesisSet& hyp,
                       double collar, SpeakerMapping mapping) {
  ErrorSeconds total;
  std::vector<std::string> missing;
  for (const auto& [file_id, r] : ref) {
    DiarizationHypothesis empty{file_id, {}};
    const DiarizationHypothesis* h = &empty;
    auto it = hyp.find(file_id);
    if (it != hyp.end()) {
      h = &it->second;
    } else {
      missing.push_back(file_id);
    }
    ErrorSeconds e = score_file(r, *h, collar, mapping);
    total.miss += e.miss;
    total.fa += e.fa;
    total.conf += e.conf;
    total.scored_ref += e.scored_ref;
  }
  DerReport report = finalize(total);
  report.missing_files = std::move(missing);
  return report;
}

}  // namespace flowdiar
