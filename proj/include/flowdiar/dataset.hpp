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

#ifndef FLOWDIAR_DATASET_HPP_
#define FLOWDIAR_DATASET_HPP_

#include <cstdint>
#include <string>
#include <vector>

#include "flowdiar/tensor.hpp"

namespace flowdiar {

// Flat binary tensor files: magic "FDTN", u32 version, u32 dtype
// (4 = float32), u32 ndim, u32 dims, then little-endian payload.
void write_tensor_file_f32(const std::string& path,
                           const std::vector<int>& dims,
                           const std::vector<double>& data);
void read_tensor_file_f32(const std::string& path, std::vector<int>* dims,
                          std::vector<double>* data);

// FNV-1a over the file bytes.
std::uint64_t file_checksum(const std::string& path);

struct DatasetMeta {
  int segments = 0;
  int speakers = 0;        // per segment
  int label_frames = 200;  // L
  double frame_seconds = 0.08;
  int feature_dim = 16;  // F
  int downsample = 8;    // R: acoustic frames per label frame
  int enroll_dim = 16;   // c
  int pool_size = 0;
  bool with_features = true;
  std::uint64_t seed = 0;
};

struct SegmentInfo {
  std::string id;
  bool eval = false;
  std::vector<std::string> speakers;
  std::int64_t labels_offset = 0;  // byte offset into labels.bin
  int feature_index = -1;          // first-axis index into features.bin
};

// Reader over a simulated dataset directory; loads everything into memory.
class Dataset {
 public:
  static Dataset load(const std::string& dir);

  const DatasetMeta& meta() const { return meta_; }
  std::size_t size() const { return segments_.size(); }
  const SegmentInfo& info(std::size_t i) const { return segments_[i]; }

  // Per-speaker binary tracks, speakers x label_frames.
  std::vector<std::vector<std::uint8_t>> labels(std::size_t i) const;
  // (R*L, F) acoustic features.
  num::Tensor features(std::size_t i) const;
  // Per-speaker enrollment embeddings.
  std::vector<std::vector<double>> enrollments(std::size_t i) const;
  const std::vector<std::vector<double>>& pool() const { return pool_; }

  std::vector<std::size_t> split_indices(bool eval) const;
  const std::string& dir() const { return dir_; }

 private:
  std::string dir_;
  DatasetMeta meta_;
  std::vector<SegmentInfo> segments_;
  std::vector<std::uint8_t> label_bytes_;
  std::vector<double> feature_data_;  // empty when !with_features
  std::vector<double> enroll_data_;
  std::vector<std::vector<double>> pool_;
};

}  // namespace flowdiar

#endif  // FLOWDIAR_DATASET_HPP_
