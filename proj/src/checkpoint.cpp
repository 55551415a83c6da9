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

#include "flowdiar/checkpoint.hpp"

#include <cstring>
#include <fstream>

#include "flowdiar/errors.hpp"

namespace flowdiar {

namespace {

constexpr char kMagic[4] = {'F', 'D', 'C', 'P'};
constexpr std::uint32_t kVersion = 1;
constexpr std::uint8_t kDtypeF64 = 8;

void put_u32(std::ostream& out, std::uint32_t v) {
  unsigned char b[4] = {static_cast<unsigned char>(v & 0xff),
                        static_cast<unsigned char>((v >> 8) & 0xff),
                        static_cast<unsigned char>((v >> 16) & 0xff),
                        static_cast<unsigned char>((v >> 24) & 0xff)};
  out.write(reinterpret_cast<const char*>(b), 4);
}

void put_u64(std::ostream& out, std::uint64_t v) {
  put_u32(out, static_cast<std::uint32_t>(v & 0xffffffffULL));
  put_u32(out, static_cast<std::uint32_t>(v >> 32));
}

std::uint32_t take_u32(std::istream& in, const std::string& path) {
  unsigned char b[4];
  if (!in.read(reinterpret_cast<char*>(b), 4)) {
    throw Error(ErrorCategory::kFormat, "truncated checkpoint: " + path);
  }
  return static_cast<std::uint32_t>(b[0]) |
         (static_cast<std::uint32_t>(b[1]) << 8) |
         (static_cast<std::uint32_t>(b[2]) << 16) |
         (static_cast<std::uint32_t>(b[3]) << 24);
}

std::uint64_t take_u64(std::istream& in, const std::string& path) {
  std::uint64_t lo = take_u32(in, path);
  std::uint64_t hi = take_u32(in, path);
  return lo | (hi << 32);
}

}  // namespace

void Checkpoint::set_meta(const std::string& key, const std::string& value) {
  for (auto& [k, v] : meta) {
    if (k == key) {
      v = value;
      return;
    }
  }
  meta.emplace_back(key, value);
}

const std::string& Checkpoint::get_meta(const std::string& key) const {
  for (const auto& [k, v] : meta) {
    if (k == key) return v;
  }
  throw Error(ErrorCategory::kFormat, "checkpoint metadata missing key: " + key);
}

bool Checkpoint::has_meta(const std::string& key) const {
  for (const auto& [k, v] : meta) {
    if (k == key) return true;
  }
  return false;
}

int Checkpoint::get_meta_int(const std::string& key) const {
  return std::stoi(get_meta(key));
}

Checkpoint Checkpoint::from_params(const num::ParamList& params) {
  Checkpoint ckpt;
  for (const auto& p : params) {
    ckpt.tensors.push_back({p.name, p.tensor.shape(), p.tensor.values()});
  }
  return ckpt;
}

void Checkpoint::apply_to(num::ParamList* params) const {
  for (auto& p : *params) {
    const TensorRecord* found = nullptr;
    for (const auto& rec : tensors) {
      if (rec.name == p.name) {
        found = &rec;
        break;
      }
    }
    if (!found) {
      throw Error(ErrorCategory::kFormat,
                  "checkpoint is missing parameter " + p.name);
    }
    if (found->shape != p.tensor.shape()) {
      throw Error(ErrorCategory::kFormat,
                  "checkpoint shape mismatch for parameter " + p.name);
    }
    p.tensor.values() = found->values;
  }
}

void Checkpoint::save(const std::string& path) const {
  std::ofstream out(path, std::ios::binary);
  if (!out) throw Error(ErrorCategory::kIo, "cannot write checkpoint: " + path);
  out.write(kMagic, 4);
  put_u32(out, kVersion);
  std::string meta_text;
  for (const auto& [k, v] : meta) meta_text += k + " = " + v + "\n";
  put_u64(out, meta_text.size());
  out.write(meta_text.data(), static_cast<std::streamsize>(meta_text.size()));
  put_u32(out, static_cast<std::uint32_t>(tensors.size()));
  for (const auto& rec : tensors) {
    put_u32(out, static_cast<std::uint32_t>(rec.name.size()));
    out.write(rec.name.data(), static_cast<std::streamsize>(rec.name.size()));
    out.put(static_cast<char>(kDtypeF64));
    put_u32(out, static_cast<std::uint32_t>(rec.shape.size()));
    for (int d : rec.shape) put_u32(out, static_cast<std::uint32_t>(d));
    for (double v : rec.values) {
      std::uint64_t bits;
      std::memcpy(&bits, &v, 8);
      put_u64(out, bits);
    }
  }
  if (!out) throw Error(ErrorCategory::kIo, "write failed: " + path);
}

Checkpoint Checkpoint::load(const std::string& path) {
  std::ifstream in(path, std::ios::binary);
  if (!in) throw Error(ErrorCategory::kIo, "cannot open checkpoint: " + path);
  char magic[4];
  if (!in.read(magic, 4) || std::memcmp(magic, kMagic, 4) != 0) {
    throw Error(ErrorCategory::kFormat, "not a checkpoint file: " + path);
  }
  std::uint32_t version = take_u32(in, path);
  if (version != kVersion) {
    throw Error(ErrorCategory::kFormat,
                "unsupported checkpoint version " + std::to_string(version) +
                    " (expected " + std::to_string(kVersion) + "): " + path);
  }
  Checkpoint ckpt;
  std::uint64_t meta_len = take_u64(in, path);
  std::string meta_text(meta_len, '\0');
  if (!in.read(meta_text.data(), static_cast<std::streamsize>(meta_len))) {
    throw Error(ErrorCategory::kFormat, "truncated checkpoint: " + path);
  }
  std::size_t pos = 0;
  while (pos < meta_text.size()) {
    std::size_t eol = meta_text.find('\n', pos);
    if (eol == std::string::npos) eol = meta_text.size();
    std::string line = meta_text.substr(pos, eol - pos);
    pos = eol + 1;
    if (line.empty()) continue;
    std::size_t eq = line.find(" = ");
    if (eq == std::string::npos) {
      throw Error(ErrorCategory::kFormat, "bad checkpoint metadata line: " + line);
    }
    ckpt.meta.emplace_back(line.substr(0, eq), line.substr(eq + 3));
  }
  std::uint32_t count = take_u32(in, path);
  for (std::uint32_t i = 0; i < count; ++i) {
    TensorRecord rec;
    std::uint32_t name_len = take_u32(in, path);
    rec.name.resize(name_len);
    if (!in.read(rec.name.data(), name_len)) {
      throw Error(ErrorCategory::kFormat, "truncated checkpoint: " + path);
    }
    int dtype = in.get();
    if (dtype != kDtypeF64) {
      throw Error(ErrorCategory::kFormat,
                  "unsupported tensor dtype in checkpoint: " + path);
    }
    std::uint32_t ndim = take_u32(in, path);
    std::int64_t n = 1;
    for (std::uint32_t d = 0; d < ndim; ++d) {
      std::uint32_t dim = take_u32(in, path);
      rec.shape.push_back(static_cast<int>(dim));
      n *= dim;
    }
    rec.values.resize(static_cast<std::size_t>(n));
    for (std::int64_t j = 0; j < n; ++j) {
      std::uint64_t bits = take_u64(in, path);
      double v;
      std::memcpy(&v, &bits, 8);
      rec.values[static_cast<std::size_t>(j)] = v;
    }
    ckpt.tensors.push_back(std::move(rec));
  }
  return ckpt;
}

}  // namespace flowdiar
