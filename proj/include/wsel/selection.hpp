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

// Weight selection: layer selection, component mapping and element
// selection, captured in a serializable SelectionPlan and executed by pure
// slicing (teacher bytes are copied, never transformed).

#pragma once

#include <algorithm>
#include <cstddef>
#include <cstdint>
#include <cstring>
#include <map>
#include <optional>
#include <string>
#include <string_view>
#include <vector>

#include "json.hpp"
#include "wsel/arch.hpp"
#include "wsel/checkpoint.hpp"
#include "wsel/error.hpp"
#include "wsel/hash.hpp"
#include "wsel/init.hpp"
#include "wsel/parallel.hpp"
#include "wsel/rng.hpp"

namespace wsel {

inline constexpr std::string_view kFormatVersion = "1";
inline constexpr std::string_view kProducer = "wsel";
inline constexpr std::string_view kPlanFormat = "wsel-plan/1";

enum class LayerStrategy { kFirstN, kUniform, kMidN, kLastN };

// kL1Prune and kMagnitude are the pruning baselines; their plans are built
// from teacher content by baselines.hpp.
enum class ElementMethod {
  kUniform,
  kConsecutive,
  kRandomConsistent,
  kRandomInconsistent,
  kL1Prune,
  kMagnitude,
};

inline std::string_view to_string(LayerStrategy s) {
  switch (s) {
    case LayerStrategy::kFirstN: return "first_n";
    case LayerStrategy::kUniform: return "uniform";
    case LayerStrategy::kMidN: return "mid_n";
    case LayerStrategy::kLastN: return "last_n";
  }
  return "?";
}

inline LayerStrategy parse_layer_strategy(std::string_view s) {
  if (s == "first_n") return LayerStrategy::kFirstN;
  if (s == "uniform") return LayerStrategy::kUniform;
  if (s == "mid_n") return LayerStrategy::kMidN;
  if (s == "last_n") return LayerStrategy::kLastN;
  throw Error(ErrorCode::kInvalidArgument, "unknown layer strategy '" + std::string(s) + "'");
}

inline std::string_view to_string(ElementMethod m) {
  switch (m) {
    case ElementMethod::kUniform: return "uniform";
    case ElementMethod::kConsecutive: return "consecutive";
    case ElementMethod::kRandomConsistent: return "random_consistent";
    case ElementMethod::kRandomInconsistent: return "random_inconsistent";
    case ElementMethod::kL1Prune: return "l1";
    case ElementMethod::kMagnitude: return "magnitude";
  }
  return "?";
}

inline ElementMethod parse_element_method(std::string_view s) {
  if (s == "uniform") return ElementMethod::kUniform;
  if (s == "consecutive") return ElementMethod::kConsecutive;
  if (s == "random_consistent") return ElementMethod::kRandomConsistent;
  if (s == "random_inconsistent") return ElementMethod::kRandomInconsistent;
  if (s == "l1") return ElementMethod::kL1Prune;
  if (s == "magnitude") return ElementMethod::kMagnitude;
  throw Error(ErrorCode::kInvalidArgument, "unknown element method '" + std::string(s) + "'");
}

/// Methods that use one index set per dimension group across the model.
inline bool requires_consistency(ElementMethod m) {
  return m == ElementMethod::kUniform || m == ElementMethod::kConsecutive ||
         m == ElementMethod::kRandomConsistent;
}

inline bool is_random(ElementMethod m) {
  return m == ElementMethod::kRandomConsistent || m == ElementMethod::kRandomInconsistent;
}

/// indices[i] = floor(i * t / s): s evenly spaced positions out of t, 0-based.
inline std::vector<std::size_t> even_indices(std::size_t t, std::size_t s) {
  if (s == 0 || s > t) {
    throw Error(ErrorCode::kInvalidArgument,
                "cannot pick " + std::to_string(s) + " evenly spaced indices out of " + std::to_string(t));
  }
  std::vector<std::size_t> out(s);
  for (std::size_t i = 0; i < s; ++i) out[i] = i * t / s;
  return out;
}

/// Teacher layer feeding each student layer of one stage.
inline std::vector<std::size_t> select_layers(std::size_t depth_t, std::size_t depth_s,
                                              LayerStrategy strategy) {
  if (depth_s == 0 || depth_s > depth_t) {
    throw Error(ErrorCode::kInvalidArgument, "student depth " + std::to_string(depth_s) +
                                                 " cannot be drawn from teacher depth " +
                                                 std::to_string(depth_t));
  }
  std::size_t offset = 0;
  switch (strategy) {
    case LayerStrategy::kUniform: return even_indices(depth_t, depth_s);
    case LayerStrategy::kFirstN: offset = 0; break;
    case LayerStrategy::kLastN: offset = depth_t - depth_s; break;
    case LayerStrategy::kMidN: offset = (depth_t - depth_s) / 2; break;
  }
  std::vector<std::size_t> out(depth_s);
  for (std::size_t i = 0; i < depth_s; ++i) out[i] = offset + i;
  return out;
}

struct StageLayerMap {
  std::string stage;
  std::size_t teacher_depth = 0;
  std::vector<std::size_t> teacher_layers;  // indexed by student layer

  friend bool operator==(const StageLayerMap&, const StageLayerMap&) = default;
};

struct LayerPlan {
  LayerStrategy strategy = LayerStrategy::kFirstN;
  std::vector<StageLayerMap> stages;

  friend bool operator==(const LayerPlan&, const LayerPlan&) = default;
};

struct IndexSet {
  std::string group;
  std::size_t teacher_width = 0;
  std::vector<std::size_t> indices;

  friend bool operator==(const IndexSet&, const IndexSet&) = default;
};

/// How one student axis is filled from its teacher axis.
struct AxisDirective {
  enum class Kind { kFixed, kGroup, kExplicit };

  Kind kind = Kind::kFixed;
  std::string group;                 // kGroup and kExplicit
  std::vector<std::size_t> indices;  // kExplicit only
  std::size_t length = 0;            // kFixed only

  friend bool operator==(const AxisDirective&, const AxisDirective&) = default;
};

struct TensorDirective {
  std::string student;
  std::string teacher;
  TensorKind kind = TensorKind::kWeight;
  Shape student_shape;
  std::vector<AxisDirective> axes;
  bool reinit = false;  // fresh truncated-normal init instead of selection

  friend bool operator==(const TensorDirective&, const TensorDirective&) = default;
};

struct FixedAxisCheck {
  std::string tensor;
  std::size_t axis = 0;
  std::size_t length = 0;

  friend bool operator==(const FixedAxisCheck&, const FixedAxisCheck&) = default;
};

/// Complete, replayable record of one selection run.
struct SelectionPlan {
  ArchDescriptor teacher_arch;
  ArchDescriptor student_arch;
  LayerPlan layers;
  ElementMethod method = ElementMethod::kUniform;
  std::optional<std::uint64_t> seed;
  std::map<std::string, IndexSet> group_indices;  // empty for per-tensor methods
  std::vector<TensorDirective> directives;        // student expansion order
  std::vector<FixedAxisCheck> fixed_axis_checks;

  /// Index list used for `axis` of `d`; empty span semantics are not used,
  /// FIXED axes resolve to the identity.
  std::vector<std::size_t> axis_indices(const TensorDirective& d, std::size_t axis) const {
    const AxisDirective& a = d.axes.at(axis);
    switch (a.kind) {
      case AxisDirective::Kind::kExplicit: return a.indices;
      case AxisDirective::Kind::kGroup: {
        const auto it = group_indices.find(a.group);
        if (it == group_indices.end()) {
          throw Error(ErrorCode::kInvariant, "plan has no index set for group '" + a.group + "'");
        }
        return it->second.indices;
      }
      case AxisDirective::Kind::kFixed: {
        std::vector<std::size_t> identity(a.length);
        for (std::size_t i = 0; i < a.length; ++i) identity[i] = i;
        return identity;
      }
    }
    return {};
  }

  nlohmann::json to_json() const;
  static SelectionPlan from_json(const nlohmann::json& j);

  /// "sha256:<hex>" over the canonical JSON form.
  std::string digest() const { return "sha256:" + sha256_hex(to_json().dump()); }

  friend bool operator==(const SelectionPlan&, const SelectionPlan&) = default;
};

// ---------------------------------------------------------------------------
// Plan JSON

inline nlohmann::json SelectionPlan::to_json() const {
  nlohmann::json j;
  j["format"] = kPlanFormat;
  j["teacher_arch"] = descriptor_to_json(teacher_arch);
  j["student_arch"] = descriptor_to_json(student_arch);
  j["layer_strategy"] = to_string(layers.strategy);
  j["element_method"] = to_string(method);
  j["seed"] = seed ? nlohmann::json(*seed) : nlohmann::json(nullptr);
  nlohmann::json stages = nlohmann::json::array();
  for (const auto& s : layers.stages) {
    stages.push_back({{"stage", s.stage}, {"teacher_depth", s.teacher_depth}, {"teacher_layers", s.teacher_layers}});
  }
  j["layer_plan"] = stages;
  nlohmann::json groups = nlohmann::json::object();
  for (const auto& [g, set] : group_indices) {
    groups[g] = {{"teacher_width", set.teacher_width}, {"indices", set.indices}};
  }
  j["group_indices"] = groups;
  nlohmann::json jdirectives = nlohmann::json::array();
  for (const auto& d : directives) {
    nlohmann::json axes = nlohmann::json::array();
    for (const auto& a : d.axes) {
      switch (a.kind) {
        case AxisDirective::Kind::kFixed: axes.push_back({{"fixed", a.length}}); break;
        case AxisDirective::Kind::kGroup: axes.push_back({{"group", a.group}}); break;
        case AxisDirective::Kind::kExplicit:
          axes.push_back({{"group", a.group}, {"indices", a.indices}});
          break;
      }
    }
    nlohmann::json jd = {{"student", d.student},
                         {"teacher", d.teacher},
                         {"kind", to_string(d.kind)},
                         {"shape", d.student_shape},
                         {"axes", axes}};
    if (d.reinit) jd["reinit"] = true;
    jdirectives.push_back(std::move(jd));
  }
  j["directives"] = jdirectives;
  nlohmann::json checks = nlohmann::json::array();
  for (const auto& c : fixed_axis_checks) {
    checks.push_back({{"tensor", c.tensor}, {"axis", c.axis}, {"length", c.length}});
  }
  j["fixed_axis_checks"] = checks;
  return j;
}

inline SelectionPlan SelectionPlan::from_json(const nlohmann::json& j) {
  try {
    if (!j.is_object() || j.value("format", "") != kPlanFormat) {
      throw Error(ErrorCode::kSchema, "not a selection plan (format tag missing or unknown)");
    }
    SelectionPlan plan;
    plan.teacher_arch = descriptor_from_json(j.at("teacher_arch"));
    plan.student_arch = descriptor_from_json(j.at("student_arch"));
    plan.layers.strategy = parse_layer_strategy(j.at("layer_strategy").get<std::string>());
    plan.method = parse_element_method(j.at("element_method").get<std::string>());
    if (!j.at("seed").is_null()) plan.seed = j.at("seed").get<std::uint64_t>();
    for (const auto& s : j.at("layer_plan")) {
      plan.layers.stages.push_back({s.at("stage").get<std::string>(), s.at("teacher_depth").get<std::size_t>(),
                                    s.at("teacher_layers").get<std::vector<std::size_t>>()});
    }
    for (const auto& [g, set] : j.at("group_indices").items()) {
      plan.group_indices.emplace(
          g, IndexSet{g, set.at("teacher_width").get<std::size_t>(), set.at("indices").get<std::vector<std::size_t>>()});
    }
    for (const auto& jd : j.at("directives")) {
      TensorDirective d;
      d.student = jd.at("student").get<std::string>();
      d.teacher = jd.at("teacher").get<std::string>();
      d.kind = detail::parse_tensor_kind(jd.at("kind").get<std::string>());
      d.student_shape = jd.at("shape").get<Shape>();
      d.reinit = jd.value("reinit", false);
      for (const auto& ja : jd.at("axes")) {
        AxisDirective a;
        if (ja.contains("fixed")) {
          a.kind = AxisDirective::Kind::kFixed;
          a.length = ja.at("fixed").get<std::size_t>();
        } else if (ja.contains("indices")) {
          a.kind = AxisDirective::Kind::kExplicit;
          a.group = ja.at("group").get<std::string>();
          a.indices = ja.at("indices").get<std::vector<std::size_t>>();
        } else {
          a.kind = AxisDirective::Kind::kGroup;
          a.group = ja.at("group").get<std::string>();
        }
        d.axes.push_back(std::move(a));
      }
      plan.directives.push_back(std::move(d));
    }
    for (const auto& c : j.at("fixed_axis_checks")) {
      plan.fixed_axis_checks.push_back(
          {c.at("tensor").get<std::string>(), c.at("axis").get<std::size_t>(), c.at("length").get<std::size_t>()});
    }
    return plan;
  } catch (const nlohmann::json::exception& e) {
    throw Error(ErrorCode::kSchema, std::string("selection plan: ") + e.what());
  }
}

inline SelectionPlan load_plan(const std::filesystem::path& path) {
  std::ifstream in(path);
  if (!in) throw Error(ErrorCode::kIo, "cannot open plan '" + path.string() + "'");
  nlohmann::json j = nlohmann::json::parse(in, nullptr, /*allow_exceptions=*/false);
  if (j.is_discarded()) throw Error(ErrorCode::kSchema, "'" + path.string() + "' is not valid JSON");
  return SelectionPlan::from_json(j);
}

inline void save_plan(const SelectionPlan& plan, const std::filesystem::path& path) {
  std::filesystem::path tmp = path;
  tmp += ".tmp";
  {
    std::ofstream out(tmp, std::ios::trunc);
    if (!out) throw Error(ErrorCode::kIo, "cannot create '" + tmp.string() + "'");
    out << plan.to_json().dump(1) << '\n';
    if (!out) throw Error(ErrorCode::kIo, "write failed for '" + path.string() + "'");
  }
  std::filesystem::rename(tmp, path);
}

// ---------------------------------------------------------------------------
// Planning

/// Layer selection plus component mapping: checks that the two descriptors
/// are compatible and emits one directive per student tensor with every
/// scaling axis bound to its group. Element selection is left to the caller.
inline SelectionPlan map_components(const ArchDescriptor& teacher, const ArchDescriptor& student,
                                    LayerStrategy strategy) {
  teacher.validate();
  student.validate();
  if (!same_component_structure(teacher, student)) {
    throw Error(ErrorCode::kFamilyMismatch, "descriptors '" + teacher.name + "' and '" + student.name +
                                                "' do not describe the same model family");
  }
  for (const auto& [group, width] : student.dim_groups) {
    const auto it = teacher.dim_groups.find(group);
    if (it == teacher.dim_groups.end()) {
      throw Error(ErrorCode::kFamilyMismatch, "teacher has no dim_group '" + group + "'");
    }
    if (width > it->second) {
      throw Error(ErrorCode::kStudentWider, "group '" + group + "': student width " + std::to_string(width) +
                                                " exceeds teacher width " + std::to_string(it->second));
    }
  }

  SelectionPlan plan;
  plan.teacher_arch = teacher;
  plan.student_arch = student;
  plan.layers.strategy = strategy;
  for (std::size_t s = 0; s < student.stages.size(); ++s) {
    plan.layers.stages.push_back({student.stages[s].id, teacher.stages[s].depth,
                                  select_layers(teacher.stages[s].depth, student.stages[s].depth, strategy)});
  }

  for (const auto& t : student.expand()) {
    const TensorSpec& s_spec = student.spec_of(t);
    const TensorSpec& t_spec = t.is_global() ? teacher.globals[t.spec] : teacher.stages[t.stage].per_layer[t.spec];
    TensorDirective d;
    d.student = t.name;
    d.kind = s_spec.kind;
    d.student_shape = t.shape;
    d.teacher = t.is_global()
                    ? t.name
                    : expand_template(t_spec.name_template, teacher.stages[t.stage].id,
                                      plan.layers.stages[t.stage].teacher_layers[t.layer]);
    bool fixed_differs = false;
    for (std::size_t a = 0; a < s_spec.axes.size(); ++a) {
      const AxisRole& role = s_spec.axes[a];
      if (role.is_embed()) {
        d.axes.push_back({AxisDirective::Kind::kGroup, role.group, {}, 0});
      } else {
        if (role.length != t_spec.axes[a].length) fixed_differs = true;
        d.axes.push_back({AxisDirective::Kind::kFixed, {}, {}, role.length});
      }
    }
    if (fixed_differs) {
      if (!s_spec.reinit_on_mismatch) {
        throw Error(ErrorCode::kFixedMismatch, "fixed axis of '" + t.name + "' differs between teacher " +
                                                   shape_to_string(teacher.shape_of(t_spec)) + " and student " +
                                                   shape_to_string(t.shape));
      }
      d.reinit = true;
    } else {
      for (std::size_t a = 0; a < s_spec.axes.size(); ++a) {
        if (!s_spec.axes[a].is_embed()) plan.fixed_axis_checks.push_back({t.name, a, s_spec.axes[a].length});
      }
    }
    plan.directives.push_back(std::move(d));
  }
  return plan;
}

inline SelectionPlan build_plan(const ArchDescriptor& teacher, const ArchDescriptor& student,
                                LayerStrategy strategy, ElementMethod method,
                                std::optional<std::uint64_t> seed = std::nullopt) {
  if (method == ElementMethod::kL1Prune || method == ElementMethod::kMagnitude) {
    throw Error(ErrorCode::kInvalidArgument, "pruning baselines need teacher weights; use the baselines module");
  }
  if (is_random(method) && !seed) {
    throw Error(ErrorCode::kInvalidArgument, std::string(to_string(method)) + " requires a seed");
  }
  SelectionPlan plan = map_components(teacher, student, strategy);
  plan.method = method;
  plan.seed = seed;

  if (method == ElementMethod::kRandomInconsistent) {
    for (auto& d : plan.directives) {
      if (d.reinit) continue;
      for (std::size_t a = 0; a < d.axes.size(); ++a) {
        AxisDirective& ax = d.axes[a];
        if (ax.kind != AxisDirective::Kind::kGroup) continue;
        Rng rng(derive_seed(*seed, "tensor", d.student, a));
        ax.indices = rng.sample_sorted(teacher.group_width(ax.group), student.group_width(ax.group));
        ax.kind = AxisDirective::Kind::kExplicit;
      }
    }
    return plan;
  }

  for (const auto& [group, s_width] : student.dim_groups) {
    const std::size_t t_width = teacher.group_width(group);
    IndexSet set{group, t_width, {}};
    switch (method) {
      case ElementMethod::kUniform:
        set.indices = even_indices(t_width, s_width);
        break;
      case ElementMethod::kConsecutive:
        set.indices.resize(s_width);
        for (std::size_t i = 0; i < s_width; ++i) set.indices[i] = i;
        break;
      case ElementMethod::kRandomConsistent: {
        Rng rng(derive_seed(*seed, "group", group));
        set.indices = rng.sample_sorted(t_width, s_width);
        break;
      }
      default:
        break;
    }
    plan.group_indices.emplace(group, std::move(set));
  }
  return plan;
}

// ---------------------------------------------------------------------------
// Execution

namespace detail {

/// Copies teacher elements at the cartesian product of per-axis indices into
/// a fresh row-major buffer.
inline std::vector<std::byte> gather_slices(const TensorRecord& src,
                                            const std::vector<std::vector<std::size_t>>& idx) {
  const std::size_t rank = src.shape.size();
  const std::size_t esize = src.element_size();
  std::vector<std::size_t> stride(rank, 1);
  for (std::size_t a = rank - 1; a > 0; --a) stride[a - 1] = stride[a] * src.shape[a];

  std::size_t out_numel = 1;
  for (const auto& v : idx) out_numel *= v.size();
  std::vector<std::byte> out(out_numel * esize);

  const auto& last = idx[rank - 1];
  const bool last_contiguous = last.back() - last.front() + 1 == last.size();
  const std::byte* base_ptr = src.data.data();
  std::byte* dst = out.data();

  std::vector<std::size_t> counter(rank, 0);  // odometer over all but the last axis
  for (;;) {
    std::size_t base = 0;
    for (std::size_t a = 0; a + 1 < rank; ++a) base += idx[a][counter[a]] * stride[a];
    if (last_contiguous) {
      const std::size_t n = last.size() * esize;
      std::memcpy(dst, base_ptr + (base + last.front()) * esize, n);
      dst += n;
    } else {
      for (std::size_t j : last) {
        std::memcpy(dst, base_ptr + (base + j) * esize, esize);
        dst += esize;
      }
    }
    std::size_t a = rank - 1;
    for (;;) {
      if (a == 0) return out;
      --a;
      if (++counter[a] < idx[a].size()) break;
      counter[a] = 0;
    }
  }
}

inline void stamp_metadata(Checkpoint& ckpt, const SelectionPlan& plan) {
  auto& md = ckpt.metadata();
  md["format_version"] = kFormatVersion;
  md["producer"] = kProducer;
  md["plan_digest"] = plan.digest();
  md["element_method"] = to_string(plan.method);
  md["layer_strategy"] = to_string(plan.layers.strategy);
  md["teacher_arch"] = plan.teacher_arch.name;
  md["student_arch"] = plan.student_arch.name;
  if (plan.seed) md["seed"] = std::to_string(*plan.seed);
}

/// Truncated-normal replacement for a directive marked reinit.
inline TensorRecord reinit_tensor(const TensorDirective& d, DType dtype, std::uint64_t seed) {
  Rng rng(derive_seed(seed, "reinit", d.student));
  return make_tensor(d.student, dtype, d.student_shape,
                     init_values(d.kind, d.student_shape, InitMethod::kTruncNormal, kDefaultInitStd, rng));
}

/// Runs `make(i)` for each directive in parallel and assembles the results in
/// directive order.
template <typename MakeTensor>
Checkpoint assemble(const SelectionPlan& plan, std::size_t threads, MakeTensor&& make) {
  std::vector<TensorRecord> out(plan.directives.size());
  parallel_for(plan.directives.size(), threads, [&](std::size_t i) { out[i] = make(plan.directives[i]); });
  Checkpoint ckpt;
  for (auto& rec : out) ckpt.add(std::move(rec));
  stamp_metadata(ckpt, plan);
  return ckpt;
}

}  // namespace detail

/// Slices every student tensor out of `teacher` as the plan directs. Handles
/// every method whose plan carries index sets (all but kMagnitude).
inline Checkpoint execute_plan(const Checkpoint& teacher, const SelectionPlan& plan, std::size_t threads = 1) {
  if (plan.method == ElementMethod::kMagnitude) {
    throw Error(ErrorCode::kInvalidArgument, "magnitude plans are executed by the baselines module");
  }
  const BoundModel bound = bind(plan.teacher_arch, teacher);
  const std::uint64_t reinit_seed = plan.seed.value_or(0);
  return detail::assemble(plan, threads, [&](const TensorDirective& d) {
    const TensorRecord* src = bound.at(d.teacher).record;
    if (d.reinit) return detail::reinit_tensor(d, src->dtype, reinit_seed);
    if (d.axes.size() != src->shape.size() || d.student_shape.size() != src->shape.size()) {
      throw Error(ErrorCode::kInvariant, "directive for '" + d.student + "' has the wrong rank");
    }
    std::vector<std::vector<std::size_t>> idx(d.axes.size());
    for (std::size_t a = 0; a < d.axes.size(); ++a) {
      idx[a] = plan.axis_indices(d, a);
      if (idx[a].size() != d.student_shape[a]) {
        throw Error(ErrorCode::kInvariant, "index set for axis " + std::to_string(a) + " of '" + d.student +
                                               "' does not match the student shape");
      }
      for (std::size_t v : idx[a]) {
        if (v >= src->shape[a]) {
          throw Error(ErrorCode::kIndexOutOfRange, "index " + std::to_string(v) + " on axis " + std::to_string(a) +
                                                       " of '" + d.teacher + "' (length " +
                                                       std::to_string(src->shape[a]) + ")");
        }
      }
    }
    return TensorRecord{d.student, src->dtype, d.student_shape, detail::gather_slices(*src, idx)};
  });
}

/// Overload matching the documented contract; `student` must be the plan's
/// student descriptor.
inline Checkpoint execute_plan(const Checkpoint& teacher, const SelectionPlan& plan,
                               const ArchDescriptor& student, std::size_t threads = 1) {
  if (!(student == plan.student_arch)) {
    throw Error(ErrorCode::kInvariant, "student descriptor differs from the one the plan was built for");
  }
  return execute_plan(teacher, plan, threads);
}

}  // namespace wsel
