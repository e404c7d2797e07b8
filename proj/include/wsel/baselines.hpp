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

// Comparison initialisers: classic random inits and two pruning-derived
// selections (per-tensor L1 slice ranking, and magnitude "squeeze").

#pragma once

#include <algorithm>
#include <cmath>
#include <cstdint>
#include <numeric>
#include <string>
#include <utility>
#include <vector>

#include "wsel/arch.hpp"
#include "wsel/checkpoint.hpp"
#include "wsel/error.hpp"
#include "wsel/init.hpp"
#include "wsel/parallel.hpp"
#include "wsel/rng.hpp"
#include "wsel/selection.hpp"

namespace wsel {

struct InitSpec {
  InitMethod method = InitMethod::kTruncNormal;
  double stddev = kDefaultInitStd;  // kTruncNormal only
  std::uint64_t seed = 0;
};

inline Checkpoint init_random(const ArchDescriptor& desc, const InitSpec& spec, std::size_t threads = 1) {
  desc.validate();
  if (spec.method == InitMethod::kTruncNormal && !(spec.stddev > 0)) {
    throw Error(ErrorCode::kInvalidArgument, "std must be > 0");
  }
  const auto tensors = desc.expand();
  std::vector<TensorRecord> out(tensors.size());
  parallel_for(tensors.size(), threads, [&](std::size_t i) {
    const auto& t = tensors[i];
    Rng rng(derive_seed(spec.seed, "init", t.name));
    out[i] = make_tensor(t.name, desc.dtype, t.shape,
                         init_values(desc.spec_of(t).kind, t.shape, spec.method, spec.stddev, rng));
  });
  Checkpoint ckpt;
  for (auto& rec : out) ckpt.add(std::move(rec));
  auto& md = ckpt.metadata();
  md["format_version"] = kFormatVersion;
  md["producer"] = kProducer;
  md["arch"] = desc.name;
  md["init_method"] = to_string(spec.method);
  md["init_seed"] = std::to_string(spec.seed);
  if (spec.method == InitMethod::kTruncNormal) {
    nlohmann::json std_value = spec.stddev;  // shortest round-trip form, e.g. "0.02"
    md["init_std"] = std_value.dump();
  }
  return ckpt;
}

// ---------------------------------------------------------------------------
// L1 pruning

/// Sum of |value| over each slice along `axis`.
inline std::vector<double> slice_l1_norms(const TensorRecord& t, std::size_t axis) {
  std::size_t inner = 1;
  for (std::size_t a = axis + 1; a < t.shape.size(); ++a) inner *= t.shape[a];
  const std::size_t dim = t.shape[axis];
  std::vector<double> norms(dim, 0.0);
  const std::size_t n = t.numel();
  for (std::size_t flat = 0; flat < n; ++flat) {
    norms[(flat / inner) % dim] += std::abs(t.value_at(flat));
  }
  return norms;
}

/// The `keep` slices with the largest L1 norm, returned in ascending index
/// order. Equal norms favour the lower index.
inline std::vector<std::size_t> l1_keep_indices(const TensorRecord& t, std::size_t axis, std::size_t keep) {
  const auto norms = slice_l1_norms(t, axis);
  if (keep > norms.size()) throw Error(ErrorCode::kStudentWider, "cannot keep more slices than exist");
  std::vector<std::size_t> order(norms.size());
  std::iota(order.begin(), order.end(), std::size_t{0});
  std::stable_sort(order.begin(), order.end(), [&](std::size_t a, std::size_t b) { return norms[a] > norms[b]; });
  order.resize(keep);
  std::sort(order.begin(), order.end());
  return order;
}

/// Per tensor and per scaling axis, keep the top-L1 slices of the
/// layer-mapped teacher tensor. The resulting plan carries explicit,
/// generally inconsistent, index sets.
inline SelectionPlan plan_l1_prune(const Checkpoint& teacher, const ArchDescriptor& teacher_desc,
                                   const ArchDescriptor& student_desc, LayerStrategy strategy,
                                   std::size_t threads = 1) {
  SelectionPlan plan = map_components(teacher_desc, student_desc, strategy);
  plan.method = ElementMethod::kL1Prune;
  const BoundModel bound = bind(teacher_desc, teacher);
  parallel_for(plan.directives.size(), threads, [&](std::size_t i) {
    TensorDirective& d = plan.directives[i];
    if (d.reinit) return;
    const TensorRecord& src = *bound.at(d.teacher).record;
    for (std::size_t a = 0; a < d.axes.size(); ++a) {
      if (d.axes[a].kind != AxisDirective::Kind::kGroup) continue;
      d.axes[a].indices = l1_keep_indices(src, a, d.student_shape[a]);
      d.axes[a].kind = AxisDirective::Kind::kExplicit;
    }
  });
  return plan;
}

struct L1PruneResult {
  Checkpoint student;
  SelectionPlan plan;  // per-tensor kept indices, for auditing
};

inline L1PruneResult init_l1_prune(const Checkpoint& teacher, const ArchDescriptor& teacher_desc,
                                   const ArchDescriptor& student_desc, LayerStrategy strategy,
                                   std::size_t threads = 1) {
  SelectionPlan plan = plan_l1_prune(teacher, teacher_desc, student_desc, strategy, threads);
  Checkpoint student = execute_plan(teacher, plan, threads);
  return {std::move(student), std::move(plan)};
}

// ---------------------------------------------------------------------------
// Magnitude pruning

/// Keeps the numel(student_shape) largest-|value| elements in row-major order
/// and reinterprets them with the student shape. Ties go to the earlier
/// position.
inline TensorRecord magnitude_squeeze(const TensorRecord& src, std::string name, const Shape& student_shape) {
  const std::size_t keep = shape_numel(student_shape);
  const std::size_t n = src.numel();
  if (keep > n) throw Error(ErrorCode::kStudentWider, "student tensor '" + name + "' is larger than its source");
  std::vector<double> magnitude(n);
  for (std::size_t i = 0; i < n; ++i) {
    const double v = std::abs(src.value_at(i));
    magnitude[i] = std::isnan(v) ? -1.0 : v;
  }
  std::vector<std::size_t> order(n);
  std::iota(order.begin(), order.end(), std::size_t{0});
  auto before = [&](std::size_t a, std::size_t b) {
    return magnitude[a] != magnitude[b] ? magnitude[a] > magnitude[b] : a < b;
  };
  if (keep < n) std::nth_element(order.begin(), order.begin() + static_cast<std::ptrdiff_t>(keep), order.end(), before);
  order.resize(keep);
  std::sort(order.begin(), order.end());

  const std::size_t esize = src.element_size();
  std::vector<std::byte> data(keep * esize);
  for (std::size_t i = 0; i < keep; ++i) {
    std::memcpy(data.data() + i * esize, src.data.data() + order[i] * esize, esize);
  }
  return {std::move(name), src.dtype, student_shape, std::move(data)};
}

inline SelectionPlan plan_magnitude_prune(const ArchDescriptor& teacher_desc, const ArchDescriptor& student_desc,
                                          LayerStrategy strategy) {
  SelectionPlan plan = map_components(teacher_desc, student_desc, strategy);
  plan.method = ElementMethod::kMagnitude;
  return plan;
}

inline Checkpoint execute_magnitude_plan(const Checkpoint& teacher, const SelectionPlan& plan,
                                         std::size_t threads = 1) {
  if (plan.method != ElementMethod::kMagnitude) {
    throw Error(ErrorCode::kInvalidArgument, "not a magnitude plan");
  }
  const BoundModel bound = bind(plan.teacher_arch, teacher);
  const std::uint64_t reinit_seed = plan.seed.value_or(0);
  return detail::assemble(plan, threads, [&](const TensorDirective& d) {
    const TensorRecord& src = *bound.at(d.teacher).record;
    if (d.reinit) return detail::reinit_tensor(d, src.dtype, reinit_seed);
    return magnitude_squeeze(src, d.student, d.student_shape);
  });
}

inline Checkpoint init_magnitude_prune(const Checkpoint& teacher, const ArchDescriptor& teacher_desc,
                                       const ArchDescriptor& student_desc, LayerStrategy strategy,
                                       std::size_t threads = 1) {
  return execute_magnitude_plan(teacher, plan_magnitude_prune(teacher_desc, student_desc, strategy), threads);
}

/// Executes any plan, whichever module owns its method.
inline Checkpoint run_plan(const Checkpoint& teacher, const SelectionPlan& plan, std::size_t threads = 1) {
  return plan.method == ElementMethod::kMagnitude ? execute_magnitude_plan(teacher, plan, threads)
                                                  : execute_plan(teacher, plan, threads);
}

}  // namespace wsel
