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

// Independent audit of a produced student checkpoint. Expected values are
// re-derived element by element from the plan's index lists, and the
// consistency audit infers index sets from tensor contents alone, so a plan
// that misdescribes its own output is caught. Nothing here reuses the
// slicing routines of selection.hpp or baselines.hpp.

#pragma once

#include <algorithm>
#include <cstddef>
#include <cstdint>
#include <cstring>
#include <map>
#include <optional>
#include <string>
#include <utility>
#include <vector>

#include "json.hpp"
#include "wsel/checkpoint.hpp"
#include "wsel/error.hpp"
#include "wsel/hash.hpp"
#include "wsel/parallel.hpp"
#include "wsel/selection.hpp"

namespace wsel {

// ---------------------------------------------------------------------------
// Index inference

struct InferResult {
  enum class Status { kUnique, kAmbiguous, kMismatch };

  static constexpr std::size_t kUnknown = static_cast<std::size_t>(-1);

  Status status = Status::kUnique;
  std::vector<std::size_t> indices;            // kUnknown where not unique
  std::vector<std::size_t> unmatched_slices;   // student slices with no candidate

  IndexSet as_index_set(std::string group, std::size_t teacher_width) const {
    return {std::move(group), teacher_width, indices};
  }
};

inline std::string_view to_string(InferResult::Status s) {
  switch (s) {
    case InferResult::Status::kUnique: return "UNIQUE";
    case InferResult::Status::kAmbiguous: return "AMBIGUOUS";
    case InferResult::Status::kMismatch: return "MISMATCH";
  }
  return "?";
}

namespace detail {

/// Candidate teacher slices per student slice: the teacher slices that
/// contain every value seen so far in that student slice.
class CandidateTracker {
 public:
  explicit CandidateTracker(std::size_t student_slices)
      : candidates_(student_slices), seen_(student_slices, 0) {}

  /// `coords` lists the teacher slices holding the observed value; it may
  /// contain duplicates.
  void observe(std::size_t slice, const std::vector<std::size_t>& coords) {
    auto& cand = candidates_[slice];
    if (!seen_[slice]) {
      cand = coords;
      std::sort(cand.begin(), cand.end());
      cand.erase(std::unique(cand.begin(), cand.end()), cand.end());
      seen_[slice] = 1;
      return;
    }
    std::erase_if(cand, [&](std::size_t c) { return std::find(coords.begin(), coords.end(), c) == coords.end(); });
  }

  InferResult finish() const {
    InferResult r;
    r.indices.assign(candidates_.size(), InferResult::kUnknown);
    bool ambiguous = false;
    for (std::size_t k = 0; k < candidates_.size(); ++k) {
      const auto& cand = candidates_[k];
      if (cand.empty()) {
        r.unmatched_slices.push_back(k);
      } else if (cand.size() == 1) {
        r.indices[k] = cand.front();
      } else {
        ambiguous = true;
      }
    }
    r.status = !r.unmatched_slices.empty() ? InferResult::Status::kMismatch
               : ambiguous                 ? InferResult::Status::kAmbiguous
                                           : InferResult::Status::kUnique;
    return r;
  }

 private:
  std::vector<std::vector<std::size_t>> candidates_;
  std::vector<char> seen_;
};

/// Exact value lookup: open-addressing multimap from element bit pattern to
/// every position holding it.
class ValueIndex {
 public:
  explicit ValueIndex(std::size_t expected) {
    std::size_t cap = 16;
    while (cap < 2 * expected) cap <<= 1;
    slots_.assign(cap, Slot{0, kEmpty});
    mask_ = cap - 1;
  }

  void add(std::uint64_t bits, std::size_t position) {
    std::size_t i = splitmix64(bits) & mask_;
    while (slots_[i].position != kEmpty) i = (i + 1) & mask_;
    slots_[i] = {bits, position};
  }

  template <typename Fn>
  void for_each_match(std::uint64_t bits, Fn&& fn) const {
    for (std::size_t i = splitmix64(bits) & mask_; slots_[i].position != kEmpty; i = (i + 1) & mask_) {
      if (slots_[i].bits == bits) fn(slots_[i].position);
    }
  }

 private:
  static constexpr std::size_t kEmpty = static_cast<std::size_t>(-1);
  struct Slot {
    std::uint64_t bits;
    std::size_t position;
  };
  std::vector<Slot> slots_;
  std::size_t mask_ = 0;
};

template <std::size_t kBytes>
std::uint64_t load_bits(const std::byte* p) {
  std::uint64_t key = 0;
  std::memcpy(&key, p, kBytes);
  return key;
}

/// Calls fn(flat, bits) for every element of `t`, in order.
template <typename Fn>
void for_each_bits(const TensorRecord& t, Fn&& fn) {
  const std::size_t n = t.numel();
  const std::byte* p = t.data.data();
  switch (t.element_size()) {
    case 2: for (std::size_t i = 0; i < n; ++i) fn(i, load_bits<2>(p + 2 * i)); break;
    case 4: for (std::size_t i = 0; i < n; ++i) fn(i, load_bits<4>(p + 4 * i)); break;
    default: for (std::size_t i = 0; i < n; ++i) fn(i, load_bits<8>(p + 8 * i)); break;
  }
}

/// For every student element, the teacher positions holding identical bits.
/// The student (the smaller side) is hashed and the teacher streamed through
/// it once.
class ValueMatches {
 public:
  ValueMatches(const TensorRecord& student, const TensorRecord& teacher)
      : first_(student.numel(), kNone) {
    ValueIndex index(student.numel());
    for_each_bits(student, [&](std::size_t i, std::uint64_t bits) { index.add(bits, i); });
    for_each_bits(teacher, [&](std::size_t t_pos, std::uint64_t bits) {
      index.for_each_match(bits, [&](std::size_t s_pos) {
        if (first_[s_pos] == kNone) {
          first_[s_pos] = t_pos;
        } else {
          extra_.emplace_back(s_pos, t_pos);
        }
      });
    });
    std::sort(extra_.begin(), extra_.end());
  }

  template <typename Fn>
  void for_each_match(std::size_t s_pos, Fn&& fn) const {
    if (first_[s_pos] == kNone) return;
    fn(first_[s_pos]);
    if (extra_.empty()) return;
    auto it = std::lower_bound(extra_.begin(), extra_.end(), std::pair<std::size_t, std::size_t>(s_pos, 0));
    for (; it != extra_.end() && it->first == s_pos; ++it) fn(it->second);
  }

 private:
  static constexpr std::size_t kNone = static_cast<std::size_t>(-1);
  std::vector<std::size_t> first_;
  std::vector<std::pair<std::size_t, std::size_t>> extra_;
};

inline std::size_t inner_extent(const Shape& shape, std::size_t axis) {
  std::size_t inner = 1;
  for (std::size_t a = axis + 1; a < shape.size(); ++a) inner *= shape[a];
  return inner;
}

}  // namespace detail

/// Recovers, for every student slice, the teacher slice it was cut from:
/// the unique teacher slice containing all of the student slice's values.
/// Slices are given as element bit patterns.
inline InferResult infer_indices(const std::vector<std::vector<std::uint64_t>>& student_slices,
                                 const std::vector<std::vector<std::uint64_t>>& teacher_slices) {
  if (teacher_slices.size() < student_slices.size()) {
    throw Error(ErrorCode::kInvalidArgument, "teacher axis is shorter than the student axis");
  }
  std::size_t total = 0;
  for (const auto& slice : teacher_slices) total += slice.size();
  detail::ValueIndex index(total);
  for (std::size_t j = 0; j < teacher_slices.size(); ++j) {
    for (std::uint64_t bits : teacher_slices[j]) index.add(bits, j);
  }
  detail::CandidateTracker tracker(student_slices.size());
  std::vector<std::size_t> coords;
  for (std::size_t k = 0; k < student_slices.size(); ++k) {
    for (std::uint64_t bits : student_slices[k]) {
      coords.clear();
      index.for_each_match(bits, [&](std::size_t j) { coords.push_back(j); });
      tracker.observe(k, coords);
    }
  }
  return tracker.finish();
}

/// Same inference along several axes of whole tensors at once; one result
/// per entry of `axes`.
inline std::vector<InferResult> infer_axis_indices(const TensorRecord& student, const TensorRecord& teacher,
                                                   const std::vector<std::size_t>& axes) {
  std::vector<InferResult> results;
  if (student.dtype != teacher.dtype || student.shape.size() != teacher.shape.size()) {
    for (std::size_t axis : axes) {
      InferResult r;
      r.status = InferResult::Status::kMismatch;
      r.indices.assign(student.shape.at(axis), InferResult::kUnknown);
      for (std::size_t k = 0; k < student.shape[axis]; ++k) r.unmatched_slices.push_back(k);
      results.push_back(std::move(r));
    }
    return results;
  }
  std::vector<detail::CandidateTracker> trackers;
  std::vector<std::size_t> s_inner, t_inner;
  for (std::size_t axis : axes) {
    trackers.emplace_back(student.shape[axis]);
    s_inner.push_back(detail::inner_extent(student.shape, axis));
    t_inner.push_back(detail::inner_extent(teacher.shape, axis));
  }
  const detail::ValueMatches value_matches(student, teacher);
  std::vector<std::size_t> matches, coords;
  for (std::size_t i = 0; i < student.numel(); ++i) {
    matches.clear();
    value_matches.for_each_match(i, [&](std::size_t pos) { matches.push_back(pos); });
    for (std::size_t n = 0; n < axes.size(); ++n) {
      const std::size_t axis = axes[n];
      coords.clear();
      for (std::size_t pos : matches) coords.push_back((pos / t_inner[n]) % teacher.shape[axis]);
      trackers[n].observe((i / s_inner[n]) % student.shape[axis], coords);
    }
  }
  for (const auto& t : trackers) results.push_back(t.finish());
  return results;
}

inline InferResult infer_axis_indices(const TensorRecord& student, const TensorRecord& teacher, std::size_t axis) {
  return std::move(infer_axis_indices(student, teacher, std::vector<std::size_t>{axis}).front());
}

// ---------------------------------------------------------------------------
// Report

enum class Provenance { kAllMatched, kMismatch, kSkipped };
enum class Consistency { kConsistent, kInconsistent, kUndetermined };

inline std::string_view to_string(Provenance p) {
  switch (p) {
    case Provenance::kAllMatched: return "ALL_MATCHED";
    case Provenance::kMismatch: return "MISMATCH";
    case Provenance::kSkipped: return "SKIPPED";
  }
  return "?";
}

inline std::string_view to_string(Consistency c) {
  switch (c) {
    case Consistency::kConsistent: return "CONSISTENT";
    case Consistency::kInconsistent: return "INCONSISTENT";
    case Consistency::kUndetermined: return "UNDETERMINED";
  }
  return "?";
}

struct TensorAudit {
  static constexpr std::size_t kMaxReportedPositions = 16;

  std::string tensor;
  Provenance status = Provenance::kAllMatched;
  std::size_t mismatches = 0;
  std::vector<Shape> positions;  // first few mismatching student coordinates
  std::string reason;
};

struct AxisInference {
  std::string tensor;
  std::size_t axis = 0;
  std::string group;
  InferResult result;
};

struct GroupAudit {
  Consistency status = Consistency::kUndetermined;
  std::vector<std::size_t> indices;   // when consistent
  std::vector<std::string> witnesses; // "tensor#axis" pairs that disagree
};

struct FixedAxisResult {
  FixedAxisCheck check;
  std::optional<std::size_t> actual;
  bool ok = false;
};

struct VerificationReport {
  ElementMethod method = ElementMethod::kUniform;
  bool consistency_required = false;
  std::vector<TensorAudit> tensors;
  std::vector<AxisInference> inferred;
  std::map<std::string, GroupAudit> groups;
  std::vector<FixedAxisResult> fixed_axes;
  std::vector<std::string> warnings;
  bool pass = false;

  const TensorAudit* tensor(std::string_view name) const {
    for (const auto& t : tensors) {
      if (t.tensor == name) return &t;
    }
    return nullptr;
  }

  nlohmann::json to_json() const {
    nlohmann::json j;
    j["verdict"] = pass ? "PASS" : "FAIL";
    j["element_method"] = to_string(method);
    j["consistency_required"] = consistency_required;
    auto& jt = j["tensors"] = nlohmann::json::array();
    for (const auto& t : tensors) {
      nlohmann::json e = {{"tensor", t.tensor}, {"status", to_string(t.status)}};
      if (t.status == Provenance::kMismatch) {
        e["mismatches"] = t.mismatches;
        e["positions"] = t.positions;
      }
      if (!t.reason.empty()) e["reason"] = t.reason;
      jt.push_back(std::move(e));
    }
    auto& jg = j["groups"] = nlohmann::json::object();
    for (const auto& [g, audit] : groups) {
      nlohmann::json e = {{"status", to_string(audit.status)}};
      if (audit.status == Consistency::kConsistent) e["indices"] = audit.indices;
      if (!audit.witnesses.empty()) e["witnesses"] = audit.witnesses;
      jg[g] = std::move(e);
    }
    auto& jf = j["fixed_axis_checks"] = nlohmann::json::array();
    for (const auto& f : fixed_axes) {
      jf.push_back({{"tensor", f.check.tensor},
                    {"axis", f.check.axis},
                    {"required", f.check.length},
                    {"actual", f.actual ? nlohmann::json(*f.actual) : nlohmann::json(nullptr)},
                    {"ok", f.ok}});
    }
    j["warnings"] = warnings;
    return j;
  }
};

namespace detail {

/// Brute force: walk every student position, map each coordinate through the
/// plan's index list for its axis and compare the element bytes.
inline void audit_sliced(const TensorRecord& student, const TensorRecord& teacher,
                         const std::vector<std::vector<std::size_t>>& axis_lists, TensorAudit& audit) {
  const std::size_t rank = student.shape.size();
  const std::size_t esize = student.element_size();
  Shape coord(rank);
  for (std::size_t p = 0; p < student.numel(); ++p) {
    std::size_t rest = p;
    for (std::size_t a = rank; a-- > 0;) {
      coord[a] = rest % student.shape[a];
      rest /= student.shape[a];
    }
    std::size_t t_flat = 0;
    bool in_range = true;
    for (std::size_t a = 0; a < rank; ++a) {
      const std::size_t src = axis_lists[a][coord[a]];
      if (src >= teacher.shape[a]) in_range = false;
      t_flat = t_flat * teacher.shape[a] + src;
    }
    if (!in_range || std::memcmp(student.data.data() + p * esize, teacher.data.data() + t_flat * esize, esize) != 0) {
      if (audit.positions.size() < TensorAudit::kMaxReportedPositions) audit.positions.push_back(coord);
      ++audit.mismatches;
    }
  }
}

/// Brute force for magnitude squeeze: full sort by (|value| desc, position).
inline void audit_magnitude(const TensorRecord& student, const TensorRecord& teacher, TensorAudit& audit) {
  const std::size_t keep = student.numel();
  std::vector<std::pair<double, std::size_t>> ranked;
  ranked.reserve(teacher.numel());
  for (std::size_t i = 0; i < teacher.numel(); ++i) {
    const double m = std::abs(teacher.value_at(i));
    ranked.emplace_back(std::isnan(m) ? 1.0 : -m, i);
  }
  std::sort(ranked.begin(), ranked.end());
  if (keep > ranked.size()) {
    audit.mismatches = keep;
    return;
  }
  std::vector<std::size_t> chosen(keep);
  for (std::size_t i = 0; i < keep; ++i) chosen[i] = ranked[i].second;
  std::sort(chosen.begin(), chosen.end());
  const std::size_t esize = student.element_size();
  for (std::size_t p = 0; p < keep; ++p) {
    if (std::memcmp(student.data.data() + p * esize, teacher.data.data() + chosen[p] * esize, esize) != 0) {
      if (audit.positions.size() < TensorAudit::kMaxReportedPositions) audit.positions.push_back({p});
      ++audit.mismatches;
    }
  }
}

}  // namespace detail

inline VerificationReport verify(const Checkpoint& student, const Checkpoint& teacher, const SelectionPlan& plan,
                                 std::size_t threads = 1) {
  VerificationReport report;
  report.method = plan.method;
  report.consistency_required = requires_consistency(plan.method);

  const auto digest = student.metadata().find("plan_digest");
  if (digest == student.metadata().end()) {
    report.warnings.push_back("student metadata carries no plan_digest");
  } else if (digest->second != plan.digest()) {
    report.warnings.push_back("student plan_digest " + digest->second + " does not match plan " + plan.digest());
  }

  const bool infer = plan.method != ElementMethod::kMagnitude;
  const std::size_t n = plan.directives.size();
  report.tensors.resize(n);
  std::vector<std::vector<AxisInference>> inferred(n);

  parallel_for(n, threads, [&](std::size_t i) {
    const TensorDirective& d = plan.directives[i];
    TensorAudit& audit = report.tensors[i];
    audit.tensor = d.student;
    if (d.reinit) {
      audit.status = Provenance::kSkipped;
      audit.reason = "re-initialised: fixed axis differs from the teacher";
      return;
    }
    const TensorRecord* s = student.find(d.student);
    const TensorRecord* t = teacher.find(d.teacher);
    auto fail = [&](std::string why) {
      audit.status = Provenance::kMismatch;
      audit.reason = std::move(why);
      audit.mismatches = s ? s->numel() : 0;
    };
    if (s == nullptr) return fail("missing from student");
    if (t == nullptr) return fail("source '" + d.teacher + "' missing from teacher");
    if (s->shape != d.student_shape) return fail("shape " + shape_to_string(s->shape) + " differs from plan");
    if (s->dtype != t->dtype) return fail("dtype differs from source");

    if (plan.method == ElementMethod::kMagnitude) {
      detail::audit_magnitude(*s, *t, audit);
    } else {
      if (t->shape.size() != s->shape.size() || d.axes.size() != s->shape.size()) {
        return fail("rank differs from source");
      }
      std::vector<std::vector<std::size_t>> lists(d.axes.size());
      for (std::size_t a = 0; a < d.axes.size(); ++a) {
        lists[a] = plan.axis_indices(d, a);
        if (lists[a].size() != s->shape[a]) return fail("plan index list does not cover axis " + std::to_string(a));
      }
      detail::audit_sliced(*s, *t, lists, audit);
    }
    audit.status = audit.mismatches == 0 ? Provenance::kAllMatched : Provenance::kMismatch;

    if (!infer) return;
    std::vector<std::size_t> axes;
    for (std::size_t a = 0; a < d.axes.size(); ++a) {
      if (d.axes[a].kind != AxisDirective::Kind::kFixed) axes.push_back(a);
    }
    if (axes.empty()) return;
    auto results = infer_axis_indices(*s, *t, axes);
    for (std::size_t k = 0; k < axes.size(); ++k) {
      inferred[i].push_back({d.student, axes[k], d.axes[axes[k]].group, std::move(results[k])});
    }
  });

  for (const auto& rec : student) {
    bool planned = false;
    for (const auto& d : plan.directives) planned = planned || d.student == rec.name;
    if (!planned) report.warnings.push_back("student tensor '" + rec.name + "' is not in the plan");
  }

  // Content-based consistency: every uniquely inferred index set of a group
  // must be identical.
  for (auto& per_tensor : inferred) {
    for (auto& inf : per_tensor) report.inferred.push_back(std::move(inf));
  }
  std::map<std::string, const AxisInference*> first_seen;
  for (const auto& inf : report.inferred) {
    GroupAudit& g = report.groups[inf.group];
    if (inf.result.status != InferResult::Status::kUnique) continue;
    const auto [it, inserted] = first_seen.emplace(inf.group, &inf);
    if (inserted) {
      g.status = Consistency::kConsistent;
      g.indices = inf.result.indices;
    } else if (inf.result.indices != it->second->result.indices) {
      if (g.status != Consistency::kInconsistent) {
        g.status = Consistency::kInconsistent;
        g.indices.clear();
        g.witnesses.push_back(it->second->tensor + "#" + std::to_string(it->second->axis));
      }
      if (g.witnesses.size() < 8) g.witnesses.push_back(inf.tensor + "#" + std::to_string(inf.axis));
    }
  }

  for (const auto& check : plan.fixed_axis_checks) {
    FixedAxisResult r{check, std::nullopt, false};
    if (const TensorRecord* s = student.find(check.tensor); s && check.axis < s->shape.size()) {
      r.actual = s->shape[check.axis];
      r.ok = *r.actual == check.length;
    }
    report.fixed_axes.push_back(std::move(r));
  }

  bool ok = true;
  for (const auto& t : report.tensors) ok = ok && t.status != Provenance::kMismatch;
  for (const auto& f : report.fixed_axes) ok = ok && f.ok;
  if (report.consistency_required) {
    for (const auto& [g, audit] : report.groups) ok = ok && audit.status != Consistency::kInconsistent;
  }
  report.pass = ok;
  return report;
}

}  // namespace wsel
