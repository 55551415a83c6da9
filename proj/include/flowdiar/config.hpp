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

#ifndef FLOWDIAR_CONFIG_HPP_
#define FLOWDIAR_CONFIG_HPP_

#include <cstdint>
#include <map>
#include <string>
#include <vector>

namespace flowdiar {

// Flat typed key = value settings. Every key has a documented default;
// unknown keys are rejected on sight.
class RunConfig {
 public:
  enum class Type { kInt, kUint64, kDouble, kBool, kString };

  struct Entry {
    const char* key;
    Type type;
    const char* default_value;
    const char* help;
  };

  RunConfig();

  static const std::vector<Entry>& registry();

  // Parses and validates; throws on unknown key or untyped value.
  void set(const std::string& key, const std::string& value);
  void load_file(const std::string& path);

  bool has(const std::string& key) const;
  int get_int(const std::string& key) const;
  std::uint64_t get_u64(const std::string& key) const;
  double get_double(const std::string& key) const;
  bool get_bool(const std::string& key) const;
  const std::string& get_string(const std::string& key) const;
  std::vector<int> get_int_list(const std::string& key) const;
  std::vector<std::string> get_string_list(const std::string& key) const;

  // Effective configuration, one "key = value" line per registry entry.
  std::string to_text() const;

 private:
  const Entry& entry(const std::string& key) const;
  std::map<std::string, std::string> values_;
};

}  // namespace flowdiar

#endif  // FLOWDIAR_CONFIG_HPP_
