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

#ifndef FLOWDIAR_OPTIM_HPP_
#define FLOWDIAR_OPTIM_HPP_

#include <cmath>
#include <cstdint>
#include <vector>

#include "flowdiar/tensor.hpp"

namespace flowdiar {
namespace num {

// Adam with bias correction. Parameters flagged non-trainable are skipped,
// which leaves their values bit-identical (frozen training stages).
class Adam {
 public:
  explicit Adam(ParamList* params, double lr = 1e-3, double beta1 = 0.9,
                double beta2 = 0.999, double eps = 1e-8)
      : params_(params), lr_(lr), beta1_(beta1), beta2_(beta2), eps_(eps) {
    m_.resize(params->size());
    v_.resize(params->size());
    for (std::size_t i = 0; i < params->size(); ++i) {
      std::size_t n = (*params)[i].tensor.values().size();
      m_[i].assign(n, 0.0);
      v_[i].assign(n, 0.0);
    }
  }

  void zero_grad() {
    for (auto& p : *params_) p.tensor.zero_grad();
  }

  void step() {
    ++t_;
    double bc1 = 1.0 - std::pow(beta1_, static_cast<double>(t_));
    double bc2 = 1.0 - std::pow(beta2_, static_cast<double>(t_));
    for (std::size_t i = 0; i < params_->size(); ++i) {
      Parameter& p = (*params_)[i];
      if (!p.trainable) continue;
      auto& val = p.tensor.values();
      auto& g = p.tensor.grad();
      auto& m = m_[i];
      auto& v = v_[i];
      for (std::size_t j = 0; j < val.size(); ++j) {
        m[j] = beta1_ * m[j] + (1.0 - beta1_) * g[j];
        v[j] = beta2_ * v[j] + (1.0 - beta2_) * g[j] * g[j];
        double mhat = m[j] / bc1;
        double vhat = v[j] / bc2;
        val[j] -= lr_ * mhat / (std::sqrt(vhat) + eps_);
      }
    }
  }

  void set_lr(double lr) { lr_ = lr; }
  double lr() const { return lr_; }

 private:
  ParamList* params_;
  double lr_, beta1_, beta2_, eps_;
  std::int64_t t_ = 0;
  std::vector<std::vector<double>> m_, v_;
};

}  // namespace num
}  // namespace flowdiar

#endif  // FLOWDIAR_OPTIM_HPP_
