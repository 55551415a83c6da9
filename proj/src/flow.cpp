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

#include "flowdiar/flow.hpp"

#include <cmath>

#include "flowdiar/errors.hpp"

namespace flowdiar {

OdeSolver parse_solver(const std::string& name) {
  if (name == "euler") return OdeSolver::kEuler;
  if (name == "midpoint") return OdeSolver::kMidpoint;
  throw Error(ErrorCategory::kConfig, "unknown ODE solver: " + name);
}

const char* solver_name(OdeSolver s) {
  return s == OdeSolver::kEuler ? "euler" : "midpoint";
}

PathSample sample_path(const std::vector<double>& z1, double t,
                       const std::vector<double>& z0, double sigma_min) {
  if (z1.size() != z0.size()) {
    throw Error(ErrorCategory::kShape, "sample_path: z1/z0 dimension mismatch");
  }
  if (t < 0.0 || t >= 1.0) {
    throw Error(ErrorCategory::kNumeric,
                "sample_path: t must lie in [0, 1), got " + std::to_string(t));
  }
  if (sigma_min < 0.0 || sigma_min >= 1.0) {
    throw Error(ErrorCategory::kConfig, "sample_path: sigma_min out of [0, 1)");
  }
  PathSample s;
  s.t = t;
  s.z_t.resize(z1.size());
  s.u_target.resize(z1.size());
  double keep = 1.0 - (1.0 - sigma_min) * t;
  for (std::size_t i = 0; i < z1.size(); ++i) {
    s.z_t[i] = t * z1[i] + keep * z0[i];
    s.u_target[i] = (z1[i] - (1.0 - sigma_min) * s.z_t[i]) / keep;
  }
  return s;
}

double sample_timestep(Rng& rng) { return rng.uniform(); }

PathSample draw_path_sample(const std::vector<double>& z1, double sigma_min,
                            Rng& rng) {
  double t = sample_timestep(rng);
  std::vector<double> z0(z1.size());
  for (auto& v : z0) v = rng.gaussian();
  return sample_path(z1, t, z0, sigma_min);
}

double cfm_loss_value(const VectorField& field,
                      const std::vector<std::vector<double>>& z1_batch,
                      double sigma_min, Rng& rng) {
  if (z1_batch.empty()) {
    throw Error(ErrorCategory::kNumeric, "cfm_loss: empty batch");
  }
  double total = 0.0;
  for (const auto& z1 : z1_batch) {
    PathSample s = draw_path_sample(z1, sigma_min, rng);
    std::vector<double> v = field(s.z_t, s.t);
    if (v.size() != s.u_target.size()) {
      throw Error(ErrorCategory::kShape, "cfm_loss: field dimension mismatch");
    }
    double item = 0.0;
    for (std::size_t i = 0; i < v.size(); ++i) {
      double d = v[i] - s.u_target[i];
      if (!std::isfinite(d)) {
        throw Error(ErrorCategory::kNumeric, "cfm_loss: non-finite field output");
      }
      item += d * d;
    }
    total += item;
  }
  return total / static_cast<double>(z1_batch.size());
}

num::Tensor cfm_reduction(const num::Tensor& predicted,
                          const num::Tensor& target) {
  if (predicted.shape() != target.shape()) {
    throw Error(ErrorCategory::kShape, "cfm_reduction: shape mismatch");
  }
  int rows = predicted.ndim() == 2 ? predicted.dim(0) : 1;
  num::Tensor diff = num::sub(predicted, target);
  return num::scale(num::sum(num::mul(diff, diff)), 1.0 / rows);
}

std::vector<double> integrate(const VectorField& field, std::vector<double> z0,
                              const FlowConfig& config) {
  if (config.steps < 1) {
    throw Error(ErrorCategory::kConfig, "integrate: steps must be >= 1");
  }
  double h = 1.0 / config.steps;
  std::vector<double> z = std::move(z0);
  std::vector<double> mid(z.size());
  for (int step = 0; step < config.steps; ++step) {
    double t = static_cast<double>(step) * h;
    if (config.solver == OdeSolver::kEuler) {
      std::vector<double> v = field(z, t);
      for (std::size_t i = 0; i < z.size(); ++i) z[i] += h * v[i];
    } else {
      std::vector<double> v1 = field(z, t);
      for (std::size_t i = 0; i < z.size(); ++i) mid[i] = z[i] + 0.5 * h * v1[i];
      std::vector<double> v2 = field(mid, t + 0.5 * h);
      for (std::size_t i = 0; i < z.size(); ++i) z[i] += h * v2[i];
    }
    for (double v : z) {
      if (!std::isfinite(v)) {
        throw Error(ErrorCategory::kNumeric,
                    "integrate: non-finite state after step " +
                        std::to_string(step));
      }
    }
  }
  return z;
}

}  // namespace flowdiar
