// Copyright 2026 The wsel Authors
// SPDX-License-Identifier: Apache-2.0
//
// Licensed under the Apache License, Version 2.0 (the "License");
// you may not use this file except in compliance with the License.
// You may obtain a copy of the License at
//
//     https://www.apache.org/licenses/LICENSE-2.0
//
// Unless required by applicable law or agreed to in writing, software
// distributed under the License is distributed on an "AS IS" BASIS,
// WITHOUT WARRANTIES OR CONDITIONS OF ANY KIND, either express or implied.
// See the License for the specific language governing permissions and
// limitations under the License.

#pragma once

#include <cmath>
#include <string>
#include <string_view>
#include <vector>

#include "wsel/arch.hpp"
#include "wsel/checkpoint.hpp"
#include "wsel/error.hpp"
#include "wsel/rng.hpp"

namespace wsel {

enum class InitMethod { kTruncNormal, kXavierUniform, kKaimingNormal };

inline std::string_view to_string(InitMethod m) {
  switch (m) {
    case InitMethod::kTruncNormal: return "trunc_normal";
    case InitMethod::kXavierUniform: return "xavier";
    case InitMethod::kKaimingNormal: return "kaiming";
  }
  return "?";
}

inline InitMethod parse_init_method(std::string_view s) {
  if (s == "trunc_normal") return InitMethod::kTruncNormal;
  if (s == "xavier" || s == "xavier_uniform") return InitMethod::kXavierUniform;
  if (s == "kaiming" || s == "kaiming_normal") return InitMethod::kKaimingNormal;
  throw Error(ErrorCode::kInvalidArgument, "unknown init method '" + std::string(s) + "'");
}

inline constexpr double kDefaultInitStd = 0.02;
inline constexpr double kLayerScaleInit = 1e-6;

struct Fans {
  double fan_in = 1;
  double fan_out = 1;
};

/// Axis 0 is the output axis; every other axis (kernel dims included) folds
/// into fan_in. A rank-1 weight uses its length for both.
inline Fans compute_fans(const Shape& shape) {
  if (shape.size() == 1) return {static_cast<double>(shape[0]), static_cast<double>(shape[0])};
  double in = 1;
  for (std::size_t a = 1; a < shape.size(); ++a) in *= static_cast<double>(shape[a]);
  return {in, static_cast<double>(shape[0])};
}

inline double xavier_bound(const Shape& shape) {
  const Fans f = compute_fans(shape);
  return std::sqrt(6.0 / (f.fan_in + f.fan_out));
}

inline double kaiming_std(const Shape& shape) { return std::sqrt(2.0 / compute_fans(shape).fan_in); }

/// Fresh values for one tensor. Only kWeight tensors are random; biases and
/// norm shifts start at 0, norm scales at 1, layer scales at 1e-6.
inline std::vector<double> init_values(TensorKind kind, const Shape& shape, InitMethod method,
                                       double stddev, Rng& rng) {
  std::vector<double> values(shape_numel(shape), 0.0);
  switch (kind) {
    case TensorKind::kBias:
    case TensorKind::kNormShift:
      return values;
    case TensorKind::kNormScale:
      std::fill(values.begin(), values.end(), 1.0);
      return values;
    case TensorKind::kLayerScale:
      std::fill(values.begin(), values.end(), kLayerScaleInit);
      return values;
    case TensorKind::kWeight:
      break;
  }
  switch (method) {
    case InitMethod::kTruncNormal:
      if (!(stddev > 0)) throw Error(ErrorCode::kInvalidArgument, "std must be > 0");
      for (auto& v : values) v = rng.truncated_normal(stddev, 2.0 * stddev);
      break;
    case InitMethod::kXavierUniform: {
      const double bound = xavier_bound(shape);
      for (auto& v : values) v = rng.uniform(-bound, bound);
      break;
    }
    case InitMethod::kKaimingNormal: {
      const double sd = kaiming_std(shape);
      for (auto& v : values) v = rng.normal(0.0, sd);
      break;
    }
  }
  return values;
}

}  // namespace wsel
