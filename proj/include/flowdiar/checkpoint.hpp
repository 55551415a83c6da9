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

#ifndef FLOWDIAR_CHECKPOINT_HPP_
#define FLOWDIAR_CHECKPOINT_HPP_

#include <string>
#include <utility>
#include <vector>

#include "flowdiar/tensor.hpp"

namespace flowdiar {

// Versioned binary container: magic, format version, a textual metadata
// block (hyperparameters, training-stage record, seed record) and named
// little-endian float64 tensors. load(save(x)) is bit-exact; any magic or
// version mismatch is a hard error.
struct Checkpoint {
  struct TensorRecord {
    std::string name;
    std::vector<int> shape;
    std::vector<double> values;
  };

  std::vector<std::pair<std::string, std::string>> meta;
  std::vector<TensorRecord> tensors;

  void set_meta(const std::string& key, const std::string& value);
  const std::string& get_meta(const std::string& key) const;
  bool has_meta(const std::string& key) const;
  int get_meta_int(const std::string& key) const;

  static Checkpoint from_params(const num::ParamList& params);
  // Writes values into matching named parameters; every parameter must be
  // present with the right shape.
  void apply_to(num::ParamList* params) const;

  void save(const std::string& path) const;
  static Checkpoint load(const std::string& path);
};

}  // namespace flowdiar

#endif  // FLOWDIAR_CHECKPOINT_HPP_
