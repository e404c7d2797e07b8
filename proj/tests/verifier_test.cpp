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

#include <gtest/gtest.h>

#include <cmath>
#include <cstring>
#include <random>
#include <string>
#include <vector>

#include "support.hpp"
#include "wsel/verifier.hpp"

namespace wsel {
namespace {

using Idx = std::vector<std::size_t>;
using Slices = std::vector<std::vector<std::uint64_t>>;

Checkpoint with_tensor(const Checkpoint& src, TensorRecord replacement) {
  Checkpoint out;
  for (const auto& t : src) out.add(t.name == replacement.name ? replacement : t);
  out.metadata() = src.metadata();
  return out;
}

const GroupAudit& group(const VerificationReport& r, const std::string& g) { return r.groups.at(g); }

TEST(InferIndices, RecoversDistinctSlices) {
  const Slices teacher{{1, 2}, {3, 4}, {5, 6}, {7, 8}, {9, 10}};
  const InferResult r = infer_indices({{3, 4}, {7, 8}, {9, 10}}, teacher);
  EXPECT_EQ(r.status, InferResult::Status::kUnique);
  EXPECT_EQ(r.indices, (Idx{1, 3, 4}));
  // A student slice only needs to be contained in its source slice.
  EXPECT_EQ(infer_indices({{4}, {5}}, teacher).indices, (Idx{1, 2}));
}

TEST(InferIndices, ConstantTeacherIsAmbiguous) {
  const Slices teacher(6, std::vector<std::uint64_t>(3, 42));
  const InferResult r = infer_indices(Slices(2, std::vector<std::uint64_t>(3, 42)), teacher);
  EXPECT_EQ(r.status, InferResult::Status::kAmbiguous);
  EXPECT_EQ(r.indices[0], InferResult::kUnknown);
}

TEST(InferIndices, AbsentSliceIsMismatch) {
  const InferResult r = infer_indices({{1, 2}, {1, 99}}, {{1, 2}, {3, 4}});
  EXPECT_EQ(r.status, InferResult::Status::kMismatch);
  EXPECT_EQ(r.unmatched_slices, (Idx{1}));
  EXPECT_THROW(infer_indices({{1}, {2}, {3}}, {{1}, {2}}), Error);
}

TEST(InferIndices, WholeTensorAxesMatchPlan) {
  const ArchDescriptor s = find_descriptor("vit_s");
  const ArchDescriptor t = find_descriptor("vit_t");
  const Checkpoint teacher = synthesize(s, 8);
  const SelectionPlan plan = build_plan(s, t, LayerStrategy::kFirstN, ElementMethod::kRandomConsistent, 8);
  const Checkpoint student = execute_plan(teacher, plan);
  const std::string name = "blocks.3.mlp.fc1.weight";
  const auto res = infer_axis_indices(student.at(name), teacher.at(name), std::vector<std::size_t>{0, 1});
  EXPECT_EQ(res[0].indices, plan.group_indices.at("mlp_hidden").indices);
  EXPECT_EQ(res[1].indices, plan.group_indices.at("embed").indices);
  EXPECT_EQ(infer_axis_indices(student.at(name), teacher.at(name), 1).indices, plan.group_indices.at("embed").indices);
}

class VitVerify : public ::testing::Test {
 protected:
  static void SetUpTestSuite() {
    teacher_desc_ = new ArchDescriptor(find_descriptor("vit_s"));
    student_desc_ = new ArchDescriptor(find_descriptor("vit_t"));
    teacher_ = new Checkpoint(synthesize(*teacher_desc_, 2026));
  }
  static void TearDownTestSuite() {
    delete teacher_;
    delete teacher_desc_;
    delete student_desc_;
  }
  static SelectionPlan plan(ElementMethod m) {
    return build_plan(*teacher_desc_, *student_desc_, LayerStrategy::kUniform, m, 17);
  }

  static ArchDescriptor* teacher_desc_;
  static ArchDescriptor* student_desc_;
  static Checkpoint* teacher_;
};

ArchDescriptor* VitVerify::teacher_desc_ = nullptr;
ArchDescriptor* VitVerify::student_desc_ = nullptr;
Checkpoint* VitVerify::teacher_ = nullptr;

TEST_F(VitVerify, UniformPassesWithEvenIndices) {
  const SelectionPlan p = plan(ElementMethod::kUniform);
  const VerificationReport r = verify(execute_plan(*teacher_, p), *teacher_, p);
  EXPECT_TRUE(r.pass);
  EXPECT_TRUE(r.warnings.empty());
  for (const auto& t : r.tensors) EXPECT_EQ(t.status, Provenance::kAllMatched) << t.tensor;
  EXPECT_EQ(group(r, "embed").status, Consistency::kConsistent);
  EXPECT_EQ(group(r, "embed").indices, even_indices(384, 192));
  EXPECT_EQ(group(r, "mlp_hidden").indices, even_indices(1536, 768));
  EXPECT_EQ(group(r, "qkv").indices, even_indices(1152, 576));
  for (const auto& f : r.fixed_axes) EXPECT_TRUE(f.ok);
  EXPECT_EQ(r.to_json()["verdict"], "PASS");
}

TEST_F(VitVerify, OneUlpPerturbationIsReported) {
  const SelectionPlan p = plan(ElementMethod::kUniform);
  const Checkpoint good = execute_plan(*teacher_, p);
  TensorRecord w = good.at("blocks.5.attn.proj.weight");
  float f;
  const std::size_t flat = 7 * 192 + 11;
  std::memcpy(&f, w.data.data() + flat * 4, 4);
  f = std::nextafter(f, INFINITY);
  std::memcpy(w.data.data() + flat * 4, &f, 4);
  const VerificationReport r = verify(with_tensor(good, w), *teacher_, p);
  EXPECT_FALSE(r.pass);
  const TensorAudit* a = r.tensor("blocks.5.attn.proj.weight");
  ASSERT_NE(a, nullptr);
  EXPECT_EQ(a->status, Provenance::kMismatch);
  EXPECT_EQ(a->mismatches, 1u);
  EXPECT_EQ(a->positions, (std::vector<Shape>{{7, 11}}));
  EXPECT_EQ(r.tensor("blocks.5.attn.proj.bias")->status, Provenance::kAllMatched);
  EXPECT_EQ(r.to_json()["verdict"], "FAIL");
}

TEST_F(VitVerify, RandomInconsistentIsFlaggedButPasses) {
  const SelectionPlan p = plan(ElementMethod::kRandomInconsistent);
  const VerificationReport r = verify(execute_plan(*teacher_, p), *teacher_, p, 2);
  EXPECT_TRUE(r.pass);
  for (const auto& t : r.tensors) EXPECT_EQ(t.status, Provenance::kAllMatched) << t.tensor;
  EXPECT_EQ(group(r, "embed").status, Consistency::kInconsistent);
  EXPECT_GE(group(r, "embed").witnesses.size(), 2u);
  EXPECT_FALSE(r.consistency_required);
}

TEST_F(VitVerify, PlanClaimingConsistencyIsCaught) {
  SelectionPlan p = plan(ElementMethod::kRandomInconsistent);
  const Checkpoint student = execute_plan(*teacher_, p);
  p.method = ElementMethod::kRandomConsistent;
  const VerificationReport r = verify(student, *teacher_, p);
  EXPECT_FALSE(r.pass);
  EXPECT_EQ(group(r, "embed").status, Consistency::kInconsistent);
  EXPECT_FALSE(r.warnings.empty());
}

TEST_F(VitVerify, ReportIsThreadCountInvariant) {
  const SelectionPlan p = plan(ElementMethod::kRandomConsistent);
  const Checkpoint student = execute_plan(*teacher_, p, 3);
  EXPECT_EQ(verify(student, *teacher_, p, 1).to_json(), verify(student, *teacher_, p, 4).to_json());
}

TEST_F(VitVerify, MissingDigestAndExtraTensorsAreWarnings) {
  const SelectionPlan p = plan(ElementMethod::kConsecutive);
  Checkpoint student = execute_plan(*teacher_, p);
  student.metadata().clear();
  student.add(make_tensor("stray", DType::kF32, {1}, std::vector<double>{0}));
  const VerificationReport r = verify(student, *teacher_, p);
  EXPECT_TRUE(r.pass);
  EXPECT_EQ(r.warnings.size(), 2u);
}

TEST_F(VitVerify, MissingStudentTensorFails) {
  const SelectionPlan p = plan(ElementMethod::kUniform);
  const Checkpoint full = execute_plan(*teacher_, p);
  Checkpoint partial;
  for (const auto& t : full) {
    if (t.name != "cls_token") partial.add(t);
  }
  const VerificationReport r = verify(partial, *teacher_, p);
  EXPECT_FALSE(r.pass);
  EXPECT_EQ(r.tensor("cls_token")->status, Provenance::kMismatch);
}

TEST(Verify, AdversarialL1IsInconsistent) {
  const ArchDescriptor td = descriptor_from_json(nlohmann::json::parse(R"({
    "family": "pair", "topology": "isotropic", "dtype": "F64", "dim_groups": {"r": 4},
    "stages": [{"id": "0", "depth": 1, "layers": [{"name": "a", "axes": ["r"]}, {"name": "b", "axes": ["r"]}]}]})"));
  auto js = descriptor_to_json(td);
  js["dim_groups"]["r"] = 2;
  const ArchDescriptor sd = descriptor_from_json(js);
  Checkpoint teacher;
  teacher.add(make_tensor("a", DType::kF64, {4}, std::vector<double>{9, 8, 0.5, 0.25}));
  teacher.add(make_tensor("b", DType::kF64, {4}, std::vector<double>{0.1, 0.2, 5, 4}));
  const auto res = init_l1_prune(teacher, td, sd, LayerStrategy::kFirstN);
  const VerificationReport r = verify(res.student, teacher, res.plan);
  EXPECT_TRUE(r.pass);
  EXPECT_EQ(r.groups.at("r").status, Consistency::kInconsistent);
  EXPECT_EQ(r.groups.at("r").witnesses, (std::vector<std::string>{"a#0", "b#0"}));
}

TEST(Verify, MagnitudeSqueezeAudit) {
  const ArchDescriptor s = find_descriptor("convnext_t");
  const ArchDescriptor t = find_descriptor("convnext_f");
  const Checkpoint teacher = synthesize(s, 3);
  const SelectionPlan p = plan_magnitude_prune(s, t, LayerStrategy::kFirstN);
  const Checkpoint student = execute_magnitude_plan(teacher, p);
  const VerificationReport r = verify(student, teacher, p);
  EXPECT_TRUE(r.pass);
  EXPECT_TRUE(r.groups.empty());
  TensorRecord w = student.at("stem.0.bias");
  std::swap(w.data[0], w.data[4]);
  std::swap(w.data[1], w.data[5]);
  std::swap(w.data[2], w.data[6]);
  std::swap(w.data[3], w.data[7]);
  EXPECT_FALSE(verify(with_tensor(student, w), teacher, p).pass);
}

TEST(VerifyProperty, EveryMethodAndStrategyPasses) {
  std::mt19937_64 gen(808);
  const ElementMethod methods[] = {ElementMethod::kUniform, ElementMethod::kConsecutive,
                                   ElementMethod::kRandomConsistent, ElementMethod::kRandomInconsistent,
                                   ElementMethod::kL1Prune, ElementMethod::kMagnitude};
  const LayerStrategy strategies[] = {LayerStrategy::kFirstN, LayerStrategy::kUniform, LayerStrategy::kMidN,
                                      LayerStrategy::kLastN};
  for (int i = 0; i < 200; ++i) {
    const auto fam = testing::random_family(gen);
    const ElementMethod method = methods[i % 6];
    const LayerStrategy strategy = strategies[(i / 6) % 4];
    const Checkpoint teacher = synthesize(fam.teacher, gen());
    const auto [plan, student] = testing::select_any(teacher, fam.teacher, fam.student, strategy, method, gen());
    const VerificationReport r = verify(student, teacher, plan);
    ASSERT_TRUE(r.pass) << "case " << i << ": " << r.to_json().dump();
    ASSERT_TRUE(r.warnings.empty()) << r.to_json().dump();
    if (requires_consistency(method)) {
      for (const auto& [g, audit] : r.groups) {
        ASSERT_NE(audit.status, Consistency::kInconsistent) << g;
        if (audit.status == Consistency::kConsistent) {
          ASSERT_EQ(audit.indices, plan.group_indices.at(g).indices);
        }
      }
    }
  }
}

TEST(VerifyProperty, AnySingleElementChangeIsDetected) {
  std::mt19937_64 gen(909);
  for (int i = 0; i < 100; ++i) {
    const auto fam = testing::random_family(gen);
    const Checkpoint teacher = synthesize(fam.teacher, gen());
    const SelectionPlan plan = build_plan(fam.teacher, fam.student, LayerStrategy::kMidN, ElementMethod::kUniform);
    const Checkpoint student = execute_plan(teacher, plan);
    std::vector<const TensorDirective*> selectable;
    for (const auto& d : plan.directives) {
      if (!d.reinit) selectable.push_back(&d);
    }
    if (selectable.empty()) continue;
    const TensorDirective& d = *selectable[gen() % selectable.size()];
    TensorRecord w = student.at(d.student);
    const std::size_t pos = gen() % w.numel();
    w.data[pos * w.element_size()] ^= std::byte{1};
    const VerificationReport r = verify(with_tensor(student, w), teacher, plan);
    ASSERT_FALSE(r.pass);
    ASSERT_EQ(r.tensor(d.student)->mismatches, 1u);
    ASSERT_EQ(r.tensor(d.student)->positions.front(), testing::oracle::coords_of(pos, w.shape));
  }
}

}  // namespace
}  // namespace wsel
