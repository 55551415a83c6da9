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

#include "flowdiar/config.hpp"

#include <algorithm>
#include <fstream>
#include <sstream>

#include "flowdiar/errors.hpp"

namespace flowdiar {

const std::vector<RunConfig::Entry>& RunConfig::registry() {
  static const std::vector<Entry> entries = {
      // simulation
      {"data_segments", Type::kInt, "256", "number of 16 s segments"},
      {"data_speakers", Type::kInt, "3", "speakers per segment"},
      {"data_mean_turn", Type::kDouble, "3.0", "mean turn length (s)"},
      {"data_mean_pause", Type::kDouble, "1.0", "mean pause length (s)"},
      {"data_overlap_prob", Type::kDouble, "0.2",
       "chance a turn overlaps the previous one"},
      {"data_noise_sigma", Type::kDouble, "0.5", "feature noise sigma"},
      {"data_enroll_noise", Type::kDouble, "0.1", "enrollment noise sigma"},
      {"data_pool_size", Type::kInt, "64", "foreign-speaker pool size"},
      {"data_feature_dim", Type::kInt, "16", "acoustic feature dimension"},
      {"data_downsample", Type::kInt, "8", "acoustic frames per label frame"},
      {"data_eval_every", Type::kInt, "4",
       "hold out every k-th segment (0 = none)"},
      {"data_with_features", Type::kBool, "true",
       "write acoustic features (labels-only datasets turn this off)"},
      {"data_seed", Type::kUint64, "17", "dataset seed"},
      // label auto-encoder
      {"labelae_latent_dim", Type::kInt, "32", "latent dimension"},
      {"labelae_epochs", Type::kInt, "8", "training epochs"},
      {"labelae_lr", Type::kDouble, "1e-3", "learning rate"},
      {"labelae_batch", Type::kInt, "32", "batch size"},
      {"labelae_seed", Type::kUint64, "5", "training seed"},
      {"labelae_zero_fraction", Type::kDouble, "0.1",
       "fraction of extra all-silence training sequences"},
      // model
      {"model_space", Type::kString, "latent",
       "flow state space: latent | binary"},
      {"model_frame_repr_dim", Type::kInt, "64", "frame representation dim"},
      {"model_dim", Type::kInt, "64", "encoder/decoder width"},
      {"model_heads", Type::kInt, "4", "attention heads"},
      {"model_encoder_blocks", Type::kInt, "2", "encoder blocks"},
      {"model_decoder_blocks", Type::kInt, "2", "decoder blocks"},
      {"model_slots", Type::kInt, "8", "speaker slots after padding"},
      {"model_time_embed_dim", Type::kInt, "64", "time embedding dim"},
      {"model_conv_kernel", Type::kInt, "7", "encoder depthwise kernel"},
      {"model_ff_multiplier", Type::kInt, "2", "feed-forward expansion"},
      // training
      {"train_lr", Type::kDouble, "1e-3", "learning rate"},
      {"train_batch", Type::kInt, "4", "segments per step"},
      {"train_seed", Type::kUint64, "11", "training seed"},
      {"train_stage_a", Type::kInt, "3", "epochs with frozen frame encoder"},
      {"train_stage_b", Type::kInt, "3", "epochs with everything trainable"},
      {"train_stage_c", Type::kInt, "3", "finetune epochs"},
      {"train_p_zero", Type::kDouble, "0.5", "pad slot zero probability"},
      {"train_p_replace_all", Type::kDouble, "0.2",
       "probability of replacing all enrollments"},
      {"train_sigma_min", Type::kDouble, "0.0", "flow sigma_min"},
      // inference
      {"infer_steps", Type::kString, "2",
       "comma-separated ODE step counts to sweep"},
      {"infer_solver", Type::kString, "euler", "ODE solver: euler | midpoint"},
      {"infer_seed", Type::kUint64, "100", "first sampling seed"},
      {"infer_runs", Type::kInt, "1", "number of seeded sampling runs"},
      {"infer_threshold", Type::kDouble, "0.5", "binarization threshold"},
      {"infer_split", Type::kString, "eval",
       "segments to diarize: eval | train | all"},
      // scoring
      {"score_collar", Type::kDouble, "0.25", "collar in seconds"},
      {"score_mapping", Type::kString, "optimal",
       "speaker mapping: optimal | identity"},
      // ensembling
      {"ensemble_resolution", Type::kDouble, "0.01",
       "voting frame resolution (s)"},
      // common
      {"force", Type::kBool, "false", "overwrite non-empty output directories"},
      // paths
      {"path_out", Type::kString, "", "output file or directory"},
      {"path_dataset", Type::kString, "", "dataset directory"},
      {"path_finetune_dataset", Type::kString, "",
       "finetune dataset directory (defaults to path_dataset)"},
      {"path_label_ae", Type::kString, "", "label auto-encoder checkpoint"},
      {"path_checkpoint", Type::kString, "", "model checkpoint"},
      {"path_ref", Type::kString, "", "reference RTTM"},
      {"path_hyp", Type::kString, "", "hypothesis RTTM"},
      {"path_hyps", Type::kString, "",
       "comma-separated hypothesis RTTMs (ensemble)"},
  };
  return entries;
}

RunConfig::RunConfig() {
  for (const auto& e : registry()) values_[e.key] = e.default_value;
}

const RunConfig::Entry& RunConfig::entry(const std::string& key) const {
  for (const auto& e : registry()) {
    if (key == e.key) return e;
  }
  throw Error(ErrorCategory::kConfig, "unknown config key: " + key);
}

namespace {

bool parse_bool(const std::string& v, const std::string& key) {
  if (v == "true" || v == "1" || v == "yes" || v == "on") return true;
  if (v == "false" || v == "0" || v == "no" || v == "off") return false;
  throw Error(ErrorCategory::kConfig, "key " + key + ": not a boolean: " + v);
}

}  // namespace

void RunConfig::set(const std::string& key, const std::string& value) {
  const Entry& e = entry(key);
  switch (e.type) {
    case Type::kInt: {
      try {
        std::size_t pos = 0;
        (void)std::stoi(value, &pos);
        if (pos != value.size()) throw std::invalid_argument("");
      } catch (const std::exception&) {
        throw Error(ErrorCategory::kConfig,
                    "key " + key + ": not an integer: " + value);
      }
      break;
    }
    case Type::kUint64: {
      try {
        std::size_t pos = 0;
        (void)std::stoull(value, &pos);
        if (pos != value.size()) throw std::invalid_argument("");
      } catch (const std::exception&) {
        throw Error(ErrorCategory::kConfig,
                    "key " + key + ": not an unsigned integer: " + value);
      }
      break;
    }
    case Type::kDouble: {
      try {
        std::size_t pos = 0;
        (void)std::stod(value, &pos);
        if (pos != value.size()) throw std::invalid_argument("");
      } catch (const std::exception&) {
        throw Error(ErrorCategory::kConfig,
                    "key " + key + ": not a number: " + value);
      }
      break;
    }
    case Type::kBool:
      (void)parse_bool(value, key);
      break;
    case Type::kString:
      break;
  }
  values_[key] = value;
}

void RunConfig::load_file(const std::string& path) {
  std::ifstream in(path);
  if (!in) throw Error(ErrorCategory::kIo, "cannot open config file: " + path);
  std::string line;
  int line_no = 0;
  while (std::getline(in, line)) {
    ++line_no;
    std::string trimmed = line;
    auto hash = trimmed.find('#');
    if (hash != std::string::npos) trimmed.resize(hash);
    auto first = trimmed.find_first_not_of(" \t\r");
    if (first == std::string::npos) continue;
    auto eq = trimmed.find('=');
    if (eq == std::string::npos) {
      throw Error(ErrorCategory::kConfig,
                  path + " line " + std::to_string(line_no) +
                      ": expected 'key = value'");
    }
    auto strip = [](std::string s) {
      auto b = s.find_first_not_of(" \t\r");
      auto e = s.find_last_not_of(" \t\r");
      return b == std::string::npos ? std::string() : s.substr(b, e - b + 1);
    };
    set(strip(trimmed.substr(0, eq)), strip(trimmed.substr(eq + 1)));
  }
}

bool RunConfig::has(const std::string& key) const {
  return values_.count(key) > 0;
}

int RunConfig::get_int(const std::string& key) const {
  entry(key);
  return std::stoi(values_.at(key));
}

std::uint64_t RunConfig::get_u64(const std::string& key) const {
  entry(key);
  return std::stoull(values_.at(key));
}

double RunConfig::get_double(const std::string& key) const {
  entry(key);
  return std::stod(values_.at(key));
}

bool RunConfig::get_bool(const std::string& key) const {
  entry(key);
  return parse_bool(values_.at(key), key);
}

const std::string& RunConfig::get_string(const std::string& key) const {
  entry(key);
  return values_.at(key);
}

std::vector<int> RunConfig::get_int_list(const std::string& key) const {
  std::vector<int> out;
  for (const auto& item : get_string_list(key)) {
    try {
      out.push_back(std::stoi(item));
    } catch (const std::exception&) {
      throw Error(ErrorCategory::kConfig,
                  "key " + key + ": not an integer list item: " + item);
    }
  }
  return out;
}

std::vector<std::string> RunConfig::get_string_list(
    const std::string& key) const {
  const std::string& raw = get_string(key);
  std::vector<std::string> out;
  std::string item;
  std::istringstream ss(raw);
  while (std::getline(ss, item, ',')) {
    if (!item.empty()) out.push_back(item);
  }
  return out;
}

std::string RunConfig::to_text() const {
  std::ostringstream os;
  for (const auto& e : registry()) {
    os << e.key << " = " << values_.at(e.key) << "\n";
  }
  return os.str();
}

}  // namespace flowdiar
