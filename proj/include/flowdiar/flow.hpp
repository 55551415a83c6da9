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

#ifndef FLOWDIAR_FLOW_HPP_
#define FLOWDIAR_FLOW_HPP_

#include <functional>
#include <string>
#include <vector>

#include "flowdiar/rng.hpp"
#include "flowdiar/tensor.hpp"

namespace flowdiar {

enum class OdeSolver { kEuler, kMidpoint };

OdeSolver parse_solver(const std::string& name);
const char* solver_name(OdeSolver s);

struct FlowConfig {
  double sigma_min = 0.0;
  int steps = 2;
  OdeSolver solver = OdeSolver::kEuler;
};

// One training triple on the straight-line transport path.
struct PathSample {
  std::vector<double> z_t;
  std::vector<double> u_target;
  double t = 0.0;
};

// z_t = t z1 + (1 - (1-sigma) t) z0, u = (z1 - (1-sigma) z_t) / (1 - (1-sigma) t).
// The target is evaluated through the quotient so that the closed-form
// identity u == z1 - z0 at sigma_min = 0 stays a checkable property.
PathSample sample_path(const std::vector<double>& z1, double t,
                       const std::vector<double>& z0, double sigma_min = 0.0);

// Uniform draw on [0, 1).
double sample_timestep(Rng& rng);

// Draws (t, z0) and builds the path sample in one call.
PathSample draw_path_sample(const std::vector<double>& z1, double sigma_min,
                            Rng& rng);

using VectorField =
    std::function<std::vector<double>(const std::vector<double>& z, double t)>;

// Monte-Carlo regression objective: mean over the batch of
// |field(z_t, t) - u_target|^2 (sum over dimensions).
double cfm_loss_value(const VectorField& field,
                      const std::vector<std::vector<double>>& z1_batch,
                      double sigma_min, Rng& rng);

// Same reduction over already-predicted graph tensors: rows are batch items.
num::Tensor cfm_reduction(const num::Tensor& predicted,
                          const num::Tensor& target);

// Fixed-step explicit integration of dz/dt = field(z, t) over [0, 1].
std::vector<double> integrate(const VectorField& field, std::vector<double> z0,
                              const FlowConfig& config);

}  // namespace flowdiar

#endif  // FLOWDIAR_FLOW_HPP_
