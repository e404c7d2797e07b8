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

// Shared test fixtures: scratch directories, random model families and a
// brute-force reference implementation of weight selection. The reference
// works position by position and shares no slicing code with the library.

#pragma once

#include <algorithm>
#include <cmath>
#include <cstdint>
#include <cstring>
#include <filesystem>
#include <map>
#include <random>
#include <string>
#include <utility>
#include <vector>

#include "json.hpp"
#include "wsel.hpp"

namespace wsel::testing {

class TempDir {
 public:
  TempDir() {
    std::random_device rd;
    const auto base = std::filesystem::temp_directory_path();
    for (;;) {
      path_ = base / ("wsel-test-" + std::to_string(rd()) + std::to_string(rd()));
      if (std::filesystem::create_directory(path_)) break;
    }
  }
  ~TempDir() {
    std::error_code ec;
    std::filesystem::remove_all(path_, ec);
  }
  TempDir(const TempDir&) = delete;
  TempDir& operator=(const TempDir&) = delete;

  const std::filesystem::path& path() const { return path_; }
  std::filesystem::path operator/(const std::string& name) const { return path_ / name; }

 private:
  std::filesystem::path path_;
};

struct Family {
  ArchDescriptor teacher;
  ArchDescriptor student;
};

/// A random teacher/student pair of one family: up to three dim groups,
/// tensors of rank 1 to 4 with every axis at most 8 long, isotropic or
/// hierarchical, optionally with a classifier-like global whose fixed axis
/// differs between the two.
inline Family random_family(std::mt19937_64& gen) {
  auto pick = [&](std::size_t lo, std::size_t hi) {
    return std::uniform_int_distribution<std::size_t>(lo, hi)(gen);
  };
  const std::size_t n_groups = pick(1, 3);
  nlohmann::json t_groups = nlohmann::json::object();
  nlohmann::json s_groups = nlohmann::json::object();
  std::vector<std::string> groups;
  for (std::size_t g = 0; g < n_groups; ++g) {
    const std::string id = "g" + std::to_string(g);
    const std::size_t tw = pick(1, 8);
    t_groups[id] = tw;
    s_groups[id] = pick(1, tw);
    groups.push_back(id);
  }

  auto random_axes = [&](std::size_t rank) {
    nlohmann::json axes = nlohmann::json::array();
    for (std::size_t a = 0; a < rank; ++a) {
      if (pick(0, 9) < 6) {
        axes.push_back(groups[pick(0, groups.size() - 1)]);
      } else {
        axes.push_back({{"fixed", pick(1, 8)}});
      }
    }
    return axes;
  };
  static const char* kKinds[] = {"weight", "bias", "norm_scale", "norm_shift", "layer_scale"};

  nlohmann::json globals = nlohmann::json::array();
  nlohmann::json s_globals = nlohmann::json::array();
  for (std::size_t i = 0, n = pick(0, 2); i < n; ++i) {
    nlohmann::json spec = {{"name", "global" + std::to_string(i) + ".w"}, {"axes", random_axes(pick(1, 3))}};
    globals.push_back(spec);
    s_globals.push_back(spec);
  }
  if (pick(0, 2) == 0) {
    const std::size_t classes = pick(2, 8);
    nlohmann::json head = {{"name", "head.w"},
                           {"axes", {{{"fixed", classes}}, groups[0]}},
                           {"reinit_on_mismatch", true}};
    globals.push_back(head);
    head["axes"][0]["fixed"] = pick(1, classes);
    s_globals.push_back(head);
  }

  const bool hierarchical = pick(0, 1) == 1;
  const std::size_t n_stages = hierarchical ? pick(2, 3) : 1;
  nlohmann::json t_stages = nlohmann::json::array();
  nlohmann::json s_stages = nlohmann::json::array();
  for (std::size_t s = 0; s < n_stages; ++s) {
    nlohmann::json layers = nlohmann::json::array();
    for (std::size_t c = 0, n = pick(1, 3); c < n; ++c) {
      layers.push_back({{"name", "{stage}.{layer}.t" + std::to_string(c)},
                        {"axes", random_axes(pick(1, 4))},
                        {"kind", kKinds[pick(0, 4)]}});
    }
    const std::size_t td = pick(1, 4);
    const std::string id = "s" + std::to_string(s);
    t_stages.push_back({{"id", id}, {"depth", td}, {"layers", layers}});
    s_stages.push_back({{"id", id}, {"depth", pick(1, td)}, {"layers", layers}});
  }
  static const char* kDtypes[] = {"F32", "F16", "F64"};
  const std::string dtype = kDtypes[pick(0, 2)];
  const std::string topology = hierarchical ? "hierarchical" : "isotropic";
  nlohmann::json t = {{"name", "rand_t"}, {"family", "rand"}, {"topology", topology}, {"dtype", dtype},
                      {"dim_groups", t_groups}, {"globals", globals}, {"stages", t_stages}};
  nlohmann::json s = {{"name", "rand_s"}, {"family", "rand"}, {"topology", topology}, {"dtype", dtype},
                      {"dim_groups", s_groups}, {"globals", s_globals}, {"stages", s_stages}};
  return {descriptor_from_json(t), descriptor_from_json(s)};
}

// ---------------------------------------------------------------------------
// Reference implementation

namespace oracle {

/// floor(i * t / s), found by counting rather than dividing.
inline std::vector<std::size_t> spaced(std::size_t t, std::size_t s) {
  std::vector<std::size_t> out;
  for (std::size_t i = 0; i < s; ++i) {
    std::size_t j = 0;
    while ((j + 1) * s <= i * t) ++j;
    out.push_back(j);
  }
  return out;
}

inline std::size_t teacher_layer(LayerStrategy strategy, std::size_t t, std::size_t s, std::size_t l) {
  switch (strategy) {
    case LayerStrategy::kFirstN: return l;
    case LayerStrategy::kLastN: return t - s + l;
    case LayerStrategy::kMidN: return (t - s) / 2 + l;
    case LayerStrategy::kUniform: return spaced(t, s)[l];
  }
  return 0;
}

inline std::vector<std::size_t> coords_of(std::size_t flat, const Shape& shape) {
  std::vector<std::size_t> c(shape.size());
  for (std::size_t a = shape.size(); a-- > 0;) {
    c[a] = flat % shape[a];
    flat /= shape[a];
  }
  return c;
}

inline std::size_t flat_of(const std::vector<std::size_t>& c, const Shape& shape) {
  std::size_t flat = 0;
  for (std::size_t a = 0; a < shape.size(); ++a) flat = flat * shape[a] + c[a];
  return flat;
}

/// Indices of the `keep` slices along `axis` with largest sum of |x|;
/// ties favour the lower index. Result in ascending order.
inline std::vector<std::size_t> l1_top(const TensorRecord& t, std::size_t axis, std::size_t keep) {
  std::vector<std::pair<double, std::size_t>> ranked;
  for (std::size_t i = 0; i < t.shape[axis]; ++i) {
    double norm = 0.0;
    for (std::size_t flat = 0; flat < t.numel(); ++flat) {
      if (coords_of(flat, t.shape)[axis] == i) norm += std::abs(t.value_at(flat));
    }
    ranked.emplace_back(-norm, i);
  }
  std::sort(ranked.begin(), ranked.end());
  std::vector<std::size_t> out;
  for (std::size_t k = 0; k < keep; ++k) out.push_back(ranked[k].second);
  std::sort(out.begin(), out.end());
  return out;
}

inline bool strictly_increasing_below(const std::vector<std::size_t>& v, std::size_t bound) {
  for (std::size_t i = 0; i < v.size(); ++i) {
    if (v[i] >= bound || (i > 0 && v[i] <= v[i - 1])) return false;
  }
  return true;
}

/// Truncated-normal head replacement, rebuilt from the documented seed key.
inline TensorRecord reinit(const std::string& name, DType dtype, const Shape& shape, std::uint64_t seed) {
  Rng rng(derive_seed(seed, "reinit", name));
  std::vector<double> v(shape_numel(shape));
  for (auto& x : v) x = rng.truncated_normal(kDefaultInitStd, 2 * kDefaultInitStd);
  return make_tensor(name, dtype, shape, v);
}

/// Per-position reference for every element method. Random methods take
/// their sampled index sets from `plan` after checking them for shape and
/// consistency; everything else is recomputed from scratch.
inline Checkpoint select(const Checkpoint& teacher, const ArchDescriptor& td, const ArchDescriptor& sd,
                         LayerStrategy strategy, ElementMethod method, const SelectionPlan& plan) {
  std::map<std::string, const TensorDirective*> by_name;
  for (const auto& d : plan.directives) by_name[d.student] = &d;

  Checkpoint out;
  auto emit = [&](const std::string& s_name, const std::string& t_name, const TensorSpec& s_spec,
                  const TensorSpec& t_spec) {
    const Shape s_shape = sd.shape_of(s_spec);
    const TensorRecord& src = teacher.at(t_name);
    bool fixed_differs = false;
    for (std::size_t a = 0; a < s_spec.axes.size(); ++a) {
      if (!s_spec.axes[a].is_embed() && s_spec.axes[a].length != t_spec.axes[a].length) fixed_differs = true;
    }
    if (fixed_differs) {
      out.add(reinit(s_name, src.dtype, s_shape, plan.seed.value_or(0)));
      return;
    }
    const std::size_t es = src.element_size();
    std::vector<std::byte> data(shape_numel(s_shape) * es);
    if (method == ElementMethod::kMagnitude) {
      std::vector<std::pair<double, std::size_t>> ranked;
      for (std::size_t i = 0; i < src.numel(); ++i) {
        const double m = std::abs(src.value_at(i));
        ranked.emplace_back(std::isnan(m) ? 1.0 : -m, i);
      }
      std::sort(ranked.begin(), ranked.end());
      std::vector<std::size_t> kept;
      for (std::size_t k = 0; k < shape_numel(s_shape); ++k) kept.push_back(ranked[k].second);
      std::sort(kept.begin(), kept.end());
      for (std::size_t k = 0; k < kept.size(); ++k) {
        std::memcpy(data.data() + k * es, src.data.data() + kept[k] * es, es);
      }
      out.add({s_name, src.dtype, s_shape, std::move(data)});
      return;
    }
    std::vector<std::vector<std::size_t>> idx(s_shape.size());
    for (std::size_t a = 0; a < s_shape.size(); ++a) {
      const AxisRole& role = s_spec.axes[a];
      if (!role.is_embed()) {
        for (std::size_t i = 0; i < s_shape[a]; ++i) idx[a].push_back(i);
        continue;
      }
      const std::size_t tw = td.group_width(role.group);
      const std::size_t sw = sd.group_width(role.group);
      switch (method) {
        case ElementMethod::kUniform: idx[a] = spaced(tw, sw); break;
        case ElementMethod::kConsecutive:
          for (std::size_t i = 0; i < sw; ++i) idx[a].push_back(i);
          break;
        case ElementMethod::kL1Prune: idx[a] = l1_top(src, a, sw); break;
        case ElementMethod::kRandomConsistent: {
          const TensorDirective& d = *by_name.at(s_name);
          if (d.axes[a].kind != AxisDirective::Kind::kGroup) throw std::runtime_error("axis not group-bound");
          idx[a] = plan.group_indices.at(role.group).indices;
          break;
        }
        case ElementMethod::kRandomInconsistent: {
          const TensorDirective& d = *by_name.at(s_name);
          idx[a] = d.axes[a].indices;
          break;
        }
        case ElementMethod::kMagnitude: break;
      }
      if (idx[a].size() != sw || !strictly_increasing_below(idx[a], tw)) {
        throw std::runtime_error("malformed index set for " + s_name);
      }
    }
    for (std::size_t flat = 0; flat < shape_numel(s_shape); ++flat) {
      auto c = coords_of(flat, s_shape);
      for (std::size_t a = 0; a < c.size(); ++a) c[a] = idx[a][c[a]];
      std::memcpy(data.data() + flat * es, src.data.data() + flat_of(c, src.shape) * es, es);
    }
    out.add({s_name, src.dtype, s_shape, std::move(data)});
  };

  for (std::size_t g = 0; g < sd.globals.size(); ++g) {
    emit(sd.globals[g].name_template, td.globals[g].name_template, sd.globals[g], td.globals[g]);
  }
  for (std::size_t s = 0; s < sd.stages.size(); ++s) {
    const auto& ss = sd.stages[s];
    const auto& ts = td.stages[s];
    for (std::size_t l = 0; l < ss.depth; ++l) {
      const std::size_t tl = teacher_layer(strategy, ts.depth, ss.depth, l);
      for (std::size_t c = 0; c < ss.per_layer.size(); ++c) {
        emit(expand_template(ss.per_layer[c].name_template, ss.id, l),
             expand_template(ts.per_layer[c].name_template, ts.id, tl), ss.per_layer[c], ts.per_layer[c]);
      }
    }
  }
  return out;
}

/// Tensor-by-tensor bitwise comparison; metadata is ignored.
inline bool same_tensors(const Checkpoint& a, const Checkpoint& b, std::string* why = nullptr) {
  if (a.size() != b.size()) {
    if (why) *why = "tensor count " + std::to_string(a.size()) + " vs " + std::to_string(b.size());
    return false;
  }
  for (std::size_t i = 0; i < a.size(); ++i) {
    const auto& x = a.tensors()[i];
    const auto& y = b.tensors()[i];
    if (!(x == y)) {
      if (why) *why = "tensor " + x.name + " vs " + y.name;
      return false;
    }
  }
  return true;
}

}  // namespace oracle

/// Builds the plan for any method and executes it.
inline std::pair<SelectionPlan, Checkpoint> select_any(const Checkpoint& teacher, const ArchDescriptor& td,
                                                       const ArchDescriptor& sd, LayerStrategy strategy,
                                                       ElementMethod method, std::uint64_t seed) {
  if (method == ElementMethod::kL1Prune) {
    auto r = init_l1_prune(teacher, td, sd, strategy);
    return {std::move(r.plan), std::move(r.student)};
  }
  SelectionPlan plan = method == ElementMethod::kMagnitude
                           ? plan_magnitude_prune(td, sd, strategy)
                           : build_plan(td, sd, strategy, method,
                                        is_random(method) ? std::optional<std::uint64_t>(seed) : std::nullopt);
  Checkpoint student = run_plan(teacher, plan);
  return {std::move(plan), std::move(student)};
}

}  // namespace wsel::testing
