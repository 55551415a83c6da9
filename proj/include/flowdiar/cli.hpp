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

#ifndef FLOWDIAR_CLI_HPP_
#define FLOWDIAR_CLI_HPP_

#include <iosfwd>
#include <string>

#include "flowdiar/checkpoint.hpp"
#include "flowdiar/config.hpp"
#include "flowdiar/label_codec.hpp"
#include "flowdiar/tsvad.hpp"

namespace flowdiar {

// Commands used by both the CLI tool and the test harnesses. All throw
// flowdiar::Error on failure.
void cmd_simulate(const RunConfig& config);
void cmd_train(const RunConfig& config, const std::string& target);
void cmd_infer(const RunConfig& config);
void cmd_score(const RunConfig& config, std::ostream& out);
void cmd_ensemble(const RunConfig& config);

// Checkpoint adapters.
Checkpoint label_codec_checkpoint(const LabelCodec& codec,
                                  const LabelAETrainConfig& train_config,
                                  bool trained);
LabelCodec load_label_codec(const std::string& path);
TsvadConfig tsvad_config_from_checkpoint(const Checkpoint& ckpt);
TsvadModel load_tsvad_model(const Checkpoint& ckpt);

// Full argument parsing + dispatch; returns the process exit code and prints
// a single "ERROR <category>: <message>" line to stderr on failure.
int run_cli(int argc, char** argv);

}  // namespace flowdiar

#endif  // FLOWDIAR_CLI_HPP_
