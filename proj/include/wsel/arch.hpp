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

// Architecture descriptors: a declarative model-family description that
// enumerates every tensor of a checkpoint and tags each tensor axis as either
// scaling with a named dimension group or fixed across family members.
//
// JSON schema:
//
//   {
//     "name": "vit_t", "family": "vit", "topology": "isotropic" | "hierarchical",
//     "dtype": "F32",                                  (optional, default F32)
//     "dim_groups": {"embed": 192, ...},
//     "globals": [TensorSpec...],
//     "stages": [{"id": "0", "depth": 12, "layers": [TensorSpec...]}],
//     "attention": {                                   (optional)
//       "stage": "0", "head_dim_group": "head_dim", "proj": "<template>",
//       "qkv": "<template>"  |  "q": ..., "k": ..., "v": ...
//     }
//   }
//
//   TensorSpec = {"name": "blocks.{layer}.attn.qkv.weight",
//                 "axes": ["qkv", "embed"]            group id per scaling axis,
//                          | {"fixed": 3}             or a fixed length,
//                 "kind": "weight" | "bias" | "norm_scale" | "norm_shift" | "layer_scale",
//                 "reinit_on_mismatch": false}
//
// Placeholders {stage} and {layer} expand to the stage id and the 0-based
// layer index within that stage.

#pragma once

#include <cstddef>
#include <filesystem>
#include <fstream>
#include <map>
#include <optional>
#include <set>
#include <string>
#include <string_view>
#include <unordered_map>
#include <vector>

#include "json.hpp"
#include "wsel/checkpoint.hpp"
#include "wsel/error.hpp"
#include "wsel/hash.hpp"
#include "wsel/rng.hpp"

#ifndef WSEL_DESCRIPTOR_DIR
#define WSEL_DESCRIPTOR_DIR ""
#endif

namespace wsel {

struct AxisRole {
  enum class Kind { kEmbed, kFixed };

  Kind kind = Kind::kFixed;
  std::string group;       // kEmbed only
  std::size_t length = 0;  // kFixed only

  static AxisRole embed(std::string group_id) { return {Kind::kEmbed, std::move(group_id), 0}; }
  static AxisRole fixed(std::size_t len) { return {Kind::kFixed, {}, len}; }

  bool is_embed() const { return kind == Kind::kEmbed; }

  friend bool operator==(const AxisRole&, const AxisRole&) = default;
};

enum class TensorKind { kWeight, kBias, kNormScale, kNormShift, kLayerScale };

inline std::string_view to_string(TensorKind kind) {
  switch (kind) {
    case TensorKind::kWeight: return "weight";
    case TensorKind::kBias: return "bias";
    case TensorKind::kNormScale: return "norm_scale";
    case TensorKind::kNormShift: return "norm_shift";
    case TensorKind::kLayerScale: return "layer_scale";
  }
  return "weight";
}

struct TensorSpec {
  std::string name_template;
  std::vector<AxisRole> axes;
  TensorKind kind = TensorKind::kWeight;
  // Tensors such as a classifier head whose FIXED axes may legitimately
  // differ (new label space); they are re-initialised instead of selected.
  bool reinit_on_mismatch = false;

  friend bool operator==(const TensorSpec&, const TensorSpec&) = default;
};

struct StageSpec {
  std::string id;
  std::size_t depth = 0;
  std::vector<TensorSpec> per_layer;

  friend bool operator==(const StageSpec&, const StageSpec&) = default;
};

struct AttentionLayout {
  std::string stage;
  std::string head_dim_group;
  std::string proj;
  std::optional<std::string> qkv;
  std::optional<std::string> q, k, v;

  bool fused() const { return qkv.has_value(); }

  friend bool operator==(const AttentionLayout&, const AttentionLayout&) = default;
};

enum class Topology { kIsotropic, kHierarchical };

/// Location of one concrete tensor produced by expanding a descriptor.
struct ExpandedTensor {
  static constexpr std::size_t kGlobal = static_cast<std::size_t>(-1);

  std::string name;
  std::size_t stage = kGlobal;  // index into ArchDescriptor::stages
  std::size_t layer = 0;
  std::size_t spec = 0;         // index into globals or the stage's per_layer
  Shape shape;

  bool is_global() const { return stage == kGlobal; }
};

inline std::string expand_template(std::string_view tmpl, std::string_view stage_id,
                                   std::size_t layer) {
  std::string out;
  out.reserve(tmpl.size() + 8);
  for (std::size_t i = 0; i < tmpl.size();) {
    if (tmpl.compare(i, 7, "{stage}") == 0) {
      out += stage_id;
      i += 7;
    } else if (tmpl.compare(i, 7, "{layer}") == 0) {
      out += std::to_string(layer);
      i += 7;
    } else {
      out += tmpl[i++];
    }
  }
  return out;
}

struct ArchDescriptor {
  std::string name;
  std::string family;
  Topology topology = Topology::kIsotropic;
  DType dtype = DType::kF32;
  std::map<std::string, std::size_t> dim_groups;
  std::vector<TensorSpec> globals;
  std::vector<StageSpec> stages;
  std::optional<AttentionLayout> attention;

  const TensorSpec& spec_of(const ExpandedTensor& t) const {
    return t.is_global() ? globals.at(t.spec) : stages.at(t.stage).per_layer.at(t.spec);
  }

  std::size_t group_width(const std::string& group) const {
    const auto it = dim_groups.find(group);
    if (it == dim_groups.end()) {
      throw Error(ErrorCode::kDanglingGroup, "descriptor '" + name + "' has no dim_group '" + group + "'");
    }
    return it->second;
  }

  Shape shape_of(const TensorSpec& spec) const {
    Shape shape;
    shape.reserve(spec.axes.size());
    for (const auto& axis : spec.axes) {
      shape.push_back(axis.is_embed() ? group_width(axis.group) : axis.length);
    }
    return shape;
  }

  std::size_t stage_index(std::string_view id) const {
    for (std::size_t s = 0; s < stages.size(); ++s) {
      if (stages[s].id == id) return s;
    }
    throw Error(ErrorCode::kSchema, "descriptor '" + name + "' has no stage '" + std::string(id) + "'");
  }

  /// Every tensor the descriptor declares: globals first, then stage by stage,
  /// layer by layer, in template order.
  std::vector<ExpandedTensor> expand() const {
    std::vector<ExpandedTensor> out;
    for (std::size_t g = 0; g < globals.size(); ++g) {
      out.push_back({expand_template(globals[g].name_template, "", 0), ExpandedTensor::kGlobal, 0,
                     g, shape_of(globals[g])});
    }
    for (std::size_t s = 0; s < stages.size(); ++s) {
      const auto& stage = stages[s];
      for (std::size_t l = 0; l < stage.depth; ++l) {
        for (std::size_t c = 0; c < stage.per_layer.size(); ++c) {
          out.push_back({expand_template(stage.per_layer[c].name_template, stage.id, l), s, l, c,
                         shape_of(stage.per_layer[c])});
        }
      }
    }
    return out;
  }

  std::size_t parameter_count() const {
    std::size_t total = 0;
    for (const auto& t : expand()) total += shape_numel(t.shape);
    return total;
  }

  void validate() const {
    if (family.empty()) throw Error(ErrorCode::kSchema, "descriptor needs a family");
    if (topology == Topology::kIsotropic && stages.size() != 1) {
      throw Error(ErrorCode::kSchema, "isotropic descriptor '" + name + "' must have exactly one stage");
    }
    if (topology == Topology::kHierarchical && stages.size() < 2) {
      throw Error(ErrorCode::kSchema, "hierarchical descriptor '" + name + "' needs at least two stages");
    }
    for (const auto& [group, width] : dim_groups) {
      if (width == 0) throw Error(ErrorCode::kSchema, "dim_group '" + group + "' has zero width");
    }
    auto check_spec = [&](const TensorSpec& spec) {
      if (spec.axes.empty()) {
        throw Error(ErrorCode::kSchema, "tensor '" + spec.name_template + "' has no axes");
      }
      for (const auto& axis : spec.axes) {
        if (axis.is_embed() && !dim_groups.contains(axis.group)) {
          throw Error(ErrorCode::kDanglingGroup, "tensor '" + spec.name_template +
                                                     "' references undefined dim_group '" +
                                                     axis.group + "'");
        }
        if (!axis.is_embed() && axis.length == 0) {
          throw Error(ErrorCode::kSchema, "tensor '" + spec.name_template + "' has a zero fixed axis");
        }
      }
    };
    std::set<std::string> stage_ids;
    for (const auto& spec : globals) check_spec(spec);
    for (const auto& stage : stages) {
      if (stage.depth == 0) {
        throw Error(ErrorCode::kZeroDepth, "stage '" + stage.id + "' of '" + name + "' has depth 0");
      }
      if (!stage_ids.insert(stage.id).second) {
        throw Error(ErrorCode::kSchema, "duplicate stage id '" + stage.id + "'");
      }
      for (const auto& spec : stage.per_layer) check_spec(spec);
    }
    std::set<std::string> names;
    for (const auto& t : expand()) {
      if (!names.insert(t.name).second) {
        throw Error(ErrorCode::kSchema, "templates expand to duplicate tensor name '" + t.name + "'");
      }
    }
    if (attention) {
      const auto& att = *attention;
      const auto& stage = stages.at(stage_index(att.stage));
      if (!dim_groups.contains(att.head_dim_group)) {
        throw Error(ErrorCode::kDanglingGroup, "attention head_dim_group '" + att.head_dim_group + "'");
      }
      auto in_stage = [&](const std::string& tmpl) {
        for (const auto& spec : stage.per_layer) {
          if (spec.name_template == tmpl) return;
        }
        throw Error(ErrorCode::kSchema, "attention template '" + tmpl + "' is not a layer tensor of stage '" +
                                            att.stage + "'");
      };
      in_stage(att.proj);
      if (att.fused()) {
        in_stage(*att.qkv);
      } else {
        if (!att.q || !att.k || !att.v) {
          throw Error(ErrorCode::kSchema, "attention needs either qkv or all of q, k, v");
        }
        in_stage(*att.q);
        in_stage(*att.k);
        in_stage(*att.v);
      }
    }
  }

  friend bool operator==(const ArchDescriptor&, const ArchDescriptor&) = default;
};

// ---------------------------------------------------------------------------
// JSON

namespace detail {

inline bool is_count(const nlohmann::json& v) {
  return v.is_number_unsigned() || (v.is_number_integer() && v.get<long long>() >= 0);
}

inline TensorKind parse_tensor_kind(const std::string& s) {
  if (s == "weight") return TensorKind::kWeight;
  if (s == "bias") return TensorKind::kBias;
  if (s == "norm_scale") return TensorKind::kNormScale;
  if (s == "norm_shift") return TensorKind::kNormShift;
  if (s == "layer_scale") return TensorKind::kLayerScale;
  throw Error(ErrorCode::kSchema, "unknown tensor kind '" + s + "'");
}

inline const nlohmann::json& require(const nlohmann::json& obj, const char* key, const std::string& where) {
  if (!obj.is_object() || !obj.contains(key)) {
    throw Error(ErrorCode::kSchema, where + ": missing field '" + key + "'");
  }
  return obj.at(key);
}

inline std::string require_string(const nlohmann::json& obj, const char* key, const std::string& where) {
  const auto& v = require(obj, key, where);
  if (!v.is_string()) throw Error(ErrorCode::kSchema, where + ": '" + key + "' must be a string");
  return v.get<std::string>();
}

inline TensorSpec parse_tensor_spec(const nlohmann::json& j) {
  TensorSpec spec;
  spec.name_template = require_string(j, "name", "tensor spec");
  const auto& axes = require(j, "axes", spec.name_template);
  if (!axes.is_array()) throw Error(ErrorCode::kSchema, spec.name_template + ": axes must be an array");
  for (const auto& axis : axes) {
    if (axis.is_string()) {
      spec.axes.push_back(AxisRole::embed(axis.get<std::string>()));
    } else if (axis.is_object() && axis.contains("fixed") && is_count(axis["fixed"])) {
      spec.axes.push_back(AxisRole::fixed(axis["fixed"].get<std::size_t>()));
    } else {
      throw Error(ErrorCode::kSchema,
                  spec.name_template + ": each axis is a group id or {\"fixed\": <length>}");
    }
  }
  if (j.contains("kind")) spec.kind = parse_tensor_kind(require_string(j, "kind", spec.name_template));
  if (j.contains("reinit_on_mismatch")) {
    if (!j["reinit_on_mismatch"].is_boolean()) {
      throw Error(ErrorCode::kSchema, spec.name_template + ": reinit_on_mismatch must be boolean");
    }
    spec.reinit_on_mismatch = j["reinit_on_mismatch"].get<bool>();
  }
  return spec;
}

inline nlohmann::json tensor_spec_to_json(const TensorSpec& spec) {
  nlohmann::json axes = nlohmann::json::array();
  for (const auto& axis : spec.axes) {
    if (axis.is_embed()) {
      axes.push_back(axis.group);
    } else {
      axes.push_back({{"fixed", axis.length}});
    }
  }
  nlohmann::json j = {{"name", spec.name_template}, {"axes", axes}, {"kind", to_string(spec.kind)}};
  if (spec.reinit_on_mismatch) j["reinit_on_mismatch"] = true;
  return j;
}

}  // namespace detail

inline ArchDescriptor descriptor_from_json(const nlohmann::json& j) {
  if (!j.is_object()) throw Error(ErrorCode::kSchema, "descriptor must be a JSON object");
  ArchDescriptor d;
  d.family = detail::require_string(j, "family", "descriptor");
  d.name = j.contains("name") && j["name"].is_string() ? j["name"].get<std::string>() : d.family;
  const std::string topology = detail::require_string(j, "topology", d.name);
  if (topology == "isotropic") {
    d.topology = Topology::kIsotropic;
  } else if (topology == "hierarchical") {
    d.topology = Topology::kHierarchical;
  } else {
    throw Error(ErrorCode::kSchema, d.name + ": topology must be isotropic or hierarchical");
  }
  if (j.contains("dtype")) d.dtype = parse_dtype(detail::require_string(j, "dtype", d.name));

  const auto& groups = detail::require(j, "dim_groups", d.name);
  if (!groups.is_object()) throw Error(ErrorCode::kSchema, d.name + ": dim_groups must be an object");
  for (const auto& [group, width] : groups.items()) {
    if (!detail::is_count(width)) {
      throw Error(ErrorCode::kSchema, d.name + ": width of group '" + group + "' must be a positive integer");
    }
    d.dim_groups.emplace(group, width.get<std::size_t>());
  }

  if (j.contains("globals")) {
    if (!j["globals"].is_array()) throw Error(ErrorCode::kSchema, d.name + ": globals must be an array");
    for (const auto& spec : j["globals"]) d.globals.push_back(detail::parse_tensor_spec(spec));
  }
  const auto& stages = detail::require(j, "stages", d.name);
  if (!stages.is_array()) throw Error(ErrorCode::kSchema, d.name + ": stages must be an array");
  for (const auto& s : stages) {
    StageSpec stage;
    stage.id = detail::require_string(s, "id", d.name + " stage");
    const auto& depth = detail::require(s, "depth", "stage " + stage.id);
    if (!depth.is_number_integer() || depth.get<long long>() < 0) {
      throw Error(ErrorCode::kSchema, "stage " + stage.id + ": depth must be a non-negative integer");
    }
    stage.depth = depth.get<std::size_t>();
    const auto& layers = detail::require(s, "layers", "stage " + stage.id);
    if (!layers.is_array()) throw Error(ErrorCode::kSchema, "stage " + stage.id + ": layers must be an array");
    for (const auto& spec : layers) stage.per_layer.push_back(detail::parse_tensor_spec(spec));
    d.stages.push_back(std::move(stage));
  }

  if (j.contains("attention")) {
    const auto& a = j["attention"];
    AttentionLayout att;
    att.stage = detail::require_string(a, "stage", "attention");
    att.head_dim_group = detail::require_string(a, "head_dim_group", "attention");
    att.proj = detail::require_string(a, "proj", "attention");
    if (a.contains("qkv")) att.qkv = detail::require_string(a, "qkv", "attention");
    if (a.contains("q")) att.q = detail::require_string(a, "q", "attention");
    if (a.contains("k")) att.k = detail::require_string(a, "k", "attention");
    if (a.contains("v")) att.v = detail::require_string(a, "v", "attention");
    d.attention = std::move(att);
  }
  d.validate();
  return d;
}

inline nlohmann::json descriptor_to_json(const ArchDescriptor& d) {
  nlohmann::json j;
  j["name"] = d.name;
  j["family"] = d.family;
  j["topology"] = d.topology == Topology::kIsotropic ? "isotropic" : "hierarchical";
  j["dtype"] = dtype_tag(d.dtype);
  j["dim_groups"] = d.dim_groups;
  j["globals"] = nlohmann::json::array();
  for (const auto& spec : d.globals) j["globals"].push_back(detail::tensor_spec_to_json(spec));
  j["stages"] = nlohmann::json::array();
  for (const auto& stage : d.stages) {
    nlohmann::json layers = nlohmann::json::array();
    for (const auto& spec : stage.per_layer) layers.push_back(detail::tensor_spec_to_json(spec));
    j["stages"].push_back({{"id", stage.id}, {"depth", stage.depth}, {"layers", layers}});
  }
  if (d.attention) {
    const auto& att = *d.attention;
    nlohmann::json a = {{"stage", att.stage}, {"head_dim_group", att.head_dim_group}, {"proj", att.proj}};
    if (att.qkv) a["qkv"] = *att.qkv;
    if (att.q) a["q"] = *att.q;
    if (att.k) a["k"] = *att.k;
    if (att.v) a["v"] = *att.v;
    j["attention"] = a;
  }
  return j;
}

inline ArchDescriptor load_descriptor(const std::filesystem::path& path) {
  std::ifstream in(path);
  if (!in) throw Error(ErrorCode::kIo, "cannot open descriptor '" + path.string() + "'");
  nlohmann::json j = nlohmann::json::parse(in, nullptr, /*allow_exceptions=*/false);
  if (j.is_discarded()) throw Error(ErrorCode::kSchema, "'" + path.string() + "' is not valid JSON");
  return descriptor_from_json(j);
}

/// Accepts a path, or the name of a bundled descriptor (e.g. "vit_s").
inline std::filesystem::path resolve_descriptor(std::string_view name_or_path) {
  const std::filesystem::path direct(name_or_path);
  if (std::filesystem::exists(direct)) return direct;
  const std::filesystem::path bundled =
      std::filesystem::path(WSEL_DESCRIPTOR_DIR) / (std::string(name_or_path) + ".json");
  if (std::string_view(WSEL_DESCRIPTOR_DIR).size() && std::filesystem::exists(bundled)) return bundled;
  throw Error(ErrorCode::kIo, "no descriptor file or bundled descriptor named '" +
                                  std::string(name_or_path) + "'");
}

inline ArchDescriptor find_descriptor(std::string_view name_or_path) {
  return load_descriptor(resolve_descriptor(name_or_path));
}

// ---------------------------------------------------------------------------
// Binding

struct BoundTensor {
  ExpandedTensor where;
  const TensorRecord* record = nullptr;
};

/// Non-owning view that pairs each descriptor tensor with its record; the
/// checkpoint must outlive it.
struct BoundModel {
  std::vector<BoundTensor> tensors;  // descriptor expansion order
  std::unordered_map<std::string, std::size_t> by_name;
  std::vector<std::string> unmatched;  // checkpoint tensors the descriptor does not declare

  const BoundTensor& at(std::string_view name) const {
    const auto it = by_name.find(std::string(name));
    if (it == by_name.end()) throw Error(ErrorCode::kUnbound, "tensor '" + std::string(name) + "' is not bound");
    return tensors[it->second];
  }

  /// (stage, layer, component) lookup.
  const BoundTensor& at(const ArchDescriptor& desc, std::size_t stage, std::size_t layer,
                        std::size_t component) const {
    const auto& s = desc.stages.at(stage);
    return at(expand_template(s.per_layer.at(component).name_template, s.id, layer));
  }
};

inline BoundModel bind(const ArchDescriptor& desc, const Checkpoint& ckpt) {
  BoundModel bound;
  for (auto& t : desc.expand()) {
    const TensorRecord* rec = ckpt.find(t.name);
    const TensorSpec& spec = desc.spec_of(t);
    if (rec == nullptr) {
      throw Error(ErrorCode::kMissingTensor, "checkpoint has no tensor '" + t.name + "' (template '" +
                                                 spec.name_template + "')");
    }
    if (rec->shape.size() != spec.axes.size()) {
      throw Error(ErrorCode::kRankMismatch, "tensor '" + t.name + "' has rank " +
                                                std::to_string(rec->shape.size()) + " but the descriptor declares " +
                                                std::to_string(spec.axes.size()) + " axes");
    }
    if (rec->shape != t.shape) {
      const bool fixed_differs = [&] {
        for (std::size_t a = 0; a < spec.axes.size(); ++a) {
          if (!spec.axes[a].is_embed() && rec->shape[a] != t.shape[a]) return true;
        }
        return false;
      }();
      throw Error(fixed_differs ? ErrorCode::kFixedMismatch : ErrorCode::kShapeMismatch,
                  "tensor '" + t.name + "' has shape " + shape_to_string(rec->shape) +
                      ", descriptor expects " + shape_to_string(t.shape));
    }
    bound.by_name.emplace(t.name, bound.tensors.size());
    bound.tensors.push_back({std::move(t), rec});
  }
  for (const auto& rec : ckpt) {
    if (!bound.by_name.contains(rec.name)) bound.unmatched.push_back(rec.name);
  }
  return bound;
}

/// Random checkpoint that conforms to `desc`; N(0, 0.02) values, each tensor
/// seeded from (seed, tensor name).
inline Checkpoint synthesize(const ArchDescriptor& desc, std::uint64_t seed, double stddev = 0.02) {
  Checkpoint ckpt;
  for (const auto& t : desc.expand()) {
    Rng rng(derive_seed(seed, "synth", t.name));
    std::vector<double> values(shape_numel(t.shape));
    for (auto& v : values) v = rng.normal(0.0, stddev);
    ckpt.add(make_tensor(t.name, desc.dtype, t.shape, values));
  }
  return ckpt;
}

/// True when both descriptors list the same components with the same axis
/// structure (group ids and fixed-ness), ignoring widths, fixed lengths and
/// depths.
inline bool same_component_structure(const ArchDescriptor& a, const ArchDescriptor& b) {
  auto same_spec = [](const TensorSpec& x, const TensorSpec& y) {
    if (x.name_template != y.name_template || x.kind != y.kind || x.axes.size() != y.axes.size()) return false;
    for (std::size_t i = 0; i < x.axes.size(); ++i) {
      if (x.axes[i].kind != y.axes[i].kind || x.axes[i].group != y.axes[i].group) return false;
    }
    return true;
  };
  auto same_list = [&](const std::vector<TensorSpec>& x, const std::vector<TensorSpec>& y) {
    if (x.size() != y.size()) return false;
    for (std::size_t i = 0; i < x.size(); ++i) {
      if (!same_spec(x[i], y[i])) return false;
    }
    return true;
  };
  if (a.family != b.family || a.topology != b.topology || a.stages.size() != b.stages.size()) return false;
  if (!same_list(a.globals, b.globals)) return false;
  for (std::size_t s = 0; s < a.stages.size(); ++s) {
    if (a.stages[s].id != b.stages[s].id || !same_list(a.stages[s].per_layer, b.stages[s].per_layer)) {
      return false;
    }
  }
  return true;
}

}  // namespace wsel
