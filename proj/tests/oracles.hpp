// Copyright 2026 The lagdyna Authors
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

// Test-only oracles: a naive re-evaluation of the network formula, plus the
// finite-difference helpers shared with the check suite. Nothing here calls
// into the derivative code under test.

#pragma once

#include <Eigen/Dense>

#include <cmath>
#include <vector>

#include "lagdyna/checks.hpp"

namespace lagdyna::testing {

/// Straight loop evaluation of a dense network stored in the documented flat
/// order (per layer: row-major weight matrix, then biases).
inline double naive_forward(const std::vector<int>& widths, int activation,
                            const Eigen::VectorXd& w, const Eigen::VectorXd& x) {
  std::vector<double> h(x.data(), x.data() + x.size());
  std::size_t off = 0;
  const std::size_t layers = widths.size() - 1;
  for (std::size_t l = 0; l < layers; ++l) {
    const int in = widths[l], out = widths[l + 1];
    std::vector<double> z(out, 0.0);
    for (int i = 0; i < out; ++i) {
      double acc = 0;
      for (int j = 0; j < in; ++j) acc += w[off + i * in + j] * h[j];
      z[i] = acc + w[off + in * out + i];
    }
    off += static_cast<std::size_t>(in + 1) * out;
    if (l + 1 < layers) {
      for (double& v : z) {
        if (activation == 0) v = std::log(1.0 + std::exp(v));
        else if (activation == 1) v = std::tanh(v);
      }
    }
    h = z;
  }
  return h[0];
}

using checks::fd_gradient;
using checks::fd_hessian;
using checks::fd_jacobian;
using checks::max_rel_err;
using checks::rel_err;

}  // namespace lagdyna::testing
