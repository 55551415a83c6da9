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

#include "flowdiar/dataset.hpp"

#include <cstring>
#include <fstream>
#include <sstream>

#include "flowdiar/errors.hpp"

namespace flowdiar {

namespace {

constexpr char kTensorMagic[4] = {'F', 'D', 'T', 'N'};
constexpr std::uint32_t kTensorVersion = 1;
constexpr std::uint32_t kDtypeF32 = 4;

void write_u32(std::ofstream& out, std::uint32_t v) {
  unsigned char b[4] = {static_cast<unsigned char>(v & 0xff),
                        static_cast<unsigned char>((v >> 8) & 0xff),
                        static_cast<unsigned char>((v >> 16) & 0xff),
                        static_cast<unsigned char>((v >> 24) & 0xff)};
  out.write(reinterpret_cast<const char*>(b), 4);
}

std::uint32_t read_u32(std::ifstream& in, const std::string& path) {
  unsigned char b[4];
  if (!in.read(reinterpret_cast<char*>(b), 4)) {
    throw Error(ErrorCategory::kFormat, "truncated tensor file: " + path);
  }
  return static_cast<std::uint32_t>(b[0]) |
         (static_cast<std::uint32_t>(b[1]) << 8) |
         (static_cast<std::uint32_t>(b[2]) << 16) |
         (static_cast<std::uint32_t>(b[3]) << 24);
}

}  // namespace

void write_tensor_file_f32(const std::string& path,
                           const std::vector<int>& dims,
                           const std::vector<double>& data) {
  std::int64_t n = 1;
  for (int d : dims) n *= d;
  if (n != static_cast<std::int64_t>(data.size())) {
    throw Error(ErrorCategory::kShape, "tensor file: dims do not match data");
  }
  std::ofstream out(path, std::ios::binary);
  if (!out) throw Error(ErrorCategory::kIo, "cannot write " + path);
  out.write(kTensorMagic, 4);
  write_u32(out, kTensorVersion);
  write_u32(out, kDtypeF32);
  write_u32(out, static_cast<std::uint32_t>(dims.size()));
  for (int d : dims) write_u32(out, static_cast<std::uint32_t>(d));
  for (double v : data) {
    float f = static_cast<float>(v);
    std::uint32_t bits;
    std::memcpy(&bits, &f, 4);
    write_u32(out, bits);
  }
  if (!out) throw Error(ErrorCategory::kIo, "write failed: " + path);
}

void read_tensor_file_f32(const std::string& path, std::vector<int>* dims,
                          std::vector<double>* data) {
  std::ifstream in(path, std::ios::binary);
  if (!in) throw Error(ErrorCategory::kIo, "cannot open " + path);
  char magic[4];
  if (!in.read(magic, 4) || std::memcmp(magic, kTensorMagic, 4) != 0) {
    throw Error(ErrorCategory::kFormat, "bad tensor magic in " + path);
  }
  std::uint32_t version = read_u32(in, path);
  if (version != kTensorVersion) {
    throw Error(ErrorCategory::kFormat,
                "unsupported tensor version " + std::to_string(version) +
                    " in " + path);
  }
  std::uint32_t dtype = read_u32(in, path);
  if (dtype != kDtypeF32) {
    throw Error(ErrorCategory::kFormat, "unsupported tensor dtype in " + path);
  }
  std::uint32_t ndim = read_u32(in, path);
  dims->clear();
  std::int64_t n = 1;
  for (std::uint32_t i = 0; i < ndim; ++i) {
    std::uint32_t d = read_u32(in, path);
    dims->push_back(static_cast<int>(d));
    n *= d;
  }
  data->resize(static_cast<std::size_t>(n));
  for (std::int64_t i = 0; i < n; ++i) {
    std::uint32_t bits = read_u32(in, path);
    float f;
    std::memcpy(&f, &bits, 4);
    (*data)[static_cast<std::size_t>(i)] = static_cast<double>(f);
  }
}

std::uint64_t file_checksum(const std::string& path) {
  std::ifstream in(path, std::ios::binary);
  if (!in) throw Error(ErrorCategory::kIo, "cannot open " + path);
  std::uint64_t h = 1469598103934665603ULL;
  char buf[4096];
  while (in) {
    in.read(buf, sizeof(buf));
    std::streamsize got = in.gcount();
    for (std::streamsize i = 0; i < got; ++i) {
      h ^= static_cast<unsigned char>(buf[i]);
      h *= 1099511628211ULL;
    }
  }
  return h;
}

Dataset Dataset::load(const std::string& dir) {
  Dataset ds;
  ds.dir_ = dir;
  std::ifstream in(dir + "/manifest.txt");
  if (!in) {
    throw Error(ErrorCategory::kIo, "cannot open dataset manifest in " + dir);
  }
  std::string line;
  if (!std::getline(in, line) || line.rfind("flowdiar-dataset 1", 0) != 0) {
    throw Error(ErrorCategory::kFormat, "not a dataset manifest: " + dir);
  }
  while (std::getline(in, line)) {
    std::istringstream ls(line);
    std::string key;
    if (!(ls >> key)) continue;
    if (key == "segment") {
      SegmentInfo seg;
      std::string split;
      if (!(ls >> seg.id >> split >> seg.labels_offset >> seg.feature_index)) {
        throw Error(ErrorCategory::kFormat, "bad segment record: " + line);
      }
      seg.eval = (split == "eval");
      std::string spk;
      while (ls >> spk) seg.speakers.push_back(spk);
      ds.segments_.push_back(std::move(seg));
    } else if (key == "segments") {
      ls >> ds.meta_.segments;
    } else if (key == "speakers_per_segment") {
      ls >> ds.meta_.speakers;
    } else if (key == "label_frames") {
      ls >> ds.meta_.label_frames;
    } else if (key == "frame_seconds") {
      ls >> ds.meta_.frame_seconds;
    } else if (key == "feature_dim") {
      ls >> ds.meta_.feature_dim;
    } else if (key == "downsample") {
      ls >> ds.meta_.downsample;
    } else if (key == "enroll_dim") {
      ls >> ds.meta_.enroll_dim;
    } else if (key == "pool_size") {
      ls >> ds.meta_.pool_size;
    } else if (key == "with_features") {
      int v = 0;
      ls >> v;
      ds.meta_.with_features = (v != 0);
    } else if (key == "seed") {
      ls >> ds.meta_.seed;
    } else {
      throw Error(ErrorCategory::kFormat, "unknown manifest key: " + key);
    }
  }
  if (static_cast<int>(ds.segments_.size()) != ds.meta_.segments) {
    throw Error(ErrorCategory::kFormat, "manifest segment count mismatch");
  }

  {
    std::ifstream lf(dir + "/labels.bin", std::ios::binary);
    if (!lf) throw Error(ErrorCategory::kIo, "cannot open labels.bin in " + dir);
    std::ostringstream ss;
    ss << lf.rdbuf();
    std::string bytes = ss.str();
    ds.label_bytes_.assign(bytes.begin(), bytes.end());
  }
  std::size_t expect_labels = static_cast<std::size_t>(ds.meta_.segments) *
                              ds.meta_.speakers * ds.meta_.label_frames;
  if (ds.label_bytes_.size() != expect_labels) {
    throw Error(ErrorCategory::kFormat, "labels.bin size mismatch");
  }

  if (ds.meta_.with_features && ds.meta_.segments > 0) {
    std::vector<int> dims;
    read_tensor_file_f32(dir + "/features.bin", &dims, &ds.feature_data_);
    if (dims.size() != 3 || dims[0] != ds.meta_.segments ||
        dims[1] != ds.meta_.downsample * ds.meta_.label_frames ||
        dims[2] != ds.meta_.feature_dim) {
      throw Error(ErrorCategory::kFormat, "features.bin shape mismatch");
    }
  }
  if (ds.meta_.segments > 0) {
    std::vector<int> dims;
    read_tensor_file_f32(dir + "/enroll.bin", &dims, &ds.enroll_data_);
    if (dims.size() != 3 || dims[0] != ds.meta_.segments ||
        dims[1] != ds.meta_.speakers || dims[2] != ds.meta_.enroll_dim) {
      throw Error(ErrorCategory::kFormat, "enroll.bin shape mismatch");
    }
  }
  {
    std::vector<int> dims;
    std::vector<double> pool_data;
    read_tensor_file_f32(dir + "/pool.bin", &dims, &pool_data);
    if (dims.size() != 2 || dims[0] != ds.meta_.pool_size ||
        dims[1] != ds.meta_.enroll_dim) {
      throw Error(ErrorCategory::kFormat, "pool.bin shape mismatch");
    }
    ds.pool_.resize(static_cast<std::size_t>(ds.meta_.pool_size));
    for (int i = 0; i < ds.meta_.pool_size; ++i) {
      ds.pool_[static_cast<std::size_t>(i)].assign(
          pool_data.begin() + static_cast<std::ptrdiff_t>(i) * ds.meta_.enroll_dim,
          pool_data.begin() +
              static_cast<std::ptrdiff_t>(i + 1) * ds.meta_.enroll_dim);
    }
  }
  return ds;
}

std::vector<std::vector<std::uint8_t>> Dataset::labels(std::size_t i) const {
  const auto& seg = segments_.at(i);
  std::vector<std::vector<std::uint8_t>> out(
      static_cast<std::size_t>(meta_.speakers));
  std::size_t off = static_cast<std::size_t>(seg.labels_offset);
  for (int s = 0; s < meta_.speakers; ++s) {
    out[static_cast<std::size_t>(s)].assign(
        label_bytes_.begin() + static_cast<std::ptrdiff_t>(off),
        label_bytes_.begin() +
            static_cast<std::ptrdiff_t>(off + meta_.label_frames));
    off += static_cast<std::size_t>(meta_.label_frames);
  }
  return out;
}

num::Tensor Dataset::features(std::size_t i) const {
  if (!meta_.with_features) {
    throw Error(ErrorCategory::kPrereq,
                "dataset " + dir_ + " was built without features");
  }
  const auto& seg = segments_.at(i);
  int rows = meta_.downsample * meta_.label_frames;
  std::size_t per_seg = static_cast<std::size_t>(rows) * meta_.feature_dim;
  std::size_t off = static_cast<std::size_t>(seg.feature_index) * per_seg;
  std::vector<double> v(feature_data_.begin() + static_cast<std::ptrdiff_t>(off),
                        feature_data_.begin() +
                            static_cast<std::ptrdiff_t>(off + per_seg));
  return num::Tensor::from({rows, meta_.feature_dim}, std::move(v));
}

std::vector<std::vector<double>> Dataset::enrollments(std::size_t i) const {
  std::vector<std::vector<double>> out(static_cast<std::size_t>(meta_.speakers));
  std::size_t per_seg =
      static_cast<std::size_t>(meta_.speakers) * meta_.enroll_dim;
  std::size_t off = i * per_seg;
  for (int s = 0; s < meta_.speakers; ++s) {
    out[static_cast<std::size_t>(s)].assign(
        enroll_data_.begin() + static_cast<std::ptrdiff_t>(off),
        enroll_data_.begin() + static_cast<std::ptrdiff_t>(off + meta_.enroll_dim));
    off += static_cast<std::size_t>(meta_.enroll_dim);
  }
  return out;
}

std::vector<std::size_t> Dataset::split_indices(bool eval) const {
  std::vector<std::size_t> out;
  for (std::size_t i = 0; i < segments_.size(); ++i) {
    if (segments_[i].eval == eval) out.push_back(i);
  }
  return out;
}

}  // namespace flowdiar
