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

// wsel: initialise a smaller model from a larger pretrained one of the same
// family by selecting a subset of its weights.

#include <spdlog/sinks/stdout_sinks.h>
#include <spdlog/spdlog.h>

#include <cmath>
#include <cstdint>
#include <filesystem>
#include <iostream>
#include <optional>
#include <string>
#include <vector>

#include "CLI11.hpp"
#include "json.hpp"
#include "wsel.hpp"

namespace {

using nlohmann::json;

struct Globals {
  std::string log_level = "info";
  std::size_t threads = 0;
  std::optional<std::uint64_t> seed;
};

json score_json(double score) {
  if (std::isinf(score)) return "inf";
  return score;
}

// --------------------------------------------------------------------------
// inspect

struct InspectArgs {
  std::string path;
  bool as_json = false;
};

int run_inspect(const InspectArgs& args) {
  const wsel::Checkpoint ckpt = wsel::read_checkpoint(args.path);
  if (args.as_json) {
    json j;
    j["count"] = ckpt.size();
    j["metadata"] = ckpt.metadata();
    j["tensors"] = json::array();
    for (const auto& t : ckpt) {
      j["tensors"].push_back({{"name", t.name}, {"dtype", wsel::dtype_tag(t.dtype)}, {"shape", t.shape}});
    }
    std::cout << j.dump(2) << '\n';
    return 0;
  }
  std::size_t params = 0;
  for (const auto& t : ckpt) params += t.numel();
  std::cout << ckpt.size() << " tensors, " << params << " parameters\n";
  for (const auto& t : ckpt) {
    std::cout << "  " << t.name << "  " << wsel::dtype_tag(t.dtype) << "  " << wsel::shape_to_string(t.shape) << '\n';
  }
  for (const auto& [k, v] : ckpt.metadata()) std::cout << "  @" << k << " = " << v << '\n';
  return 0;
}

// --------------------------------------------------------------------------
// select / replay

struct SelectArgs {
  std::string teacher;
  std::string teacher_arch;
  std::string student_arch;
  std::string layer_strategy = "first_n";
  std::string element_method = "uniform";
  std::string out;
  std::string emit_plan;
};

void write_outputs(const wsel::Checkpoint& student, const wsel::SelectionPlan& plan, const std::string& out,
                   const std::string& emit_plan) {
  if (!emit_plan.empty()) wsel::save_plan(plan, emit_plan);
  try {
    wsel::write_checkpoint(student, out);
  } catch (...) {
    if (!emit_plan.empty()) std::filesystem::remove(emit_plan);
    throw;
  }
  spdlog::info("wrote {} ({} tensors, {} parameters), plan {}", out, student.size(),
               student.payload_bytes() / (student.empty() ? 1 : student.tensors().front().element_size()),
               plan.digest());
}

int run_select(const SelectArgs& args, const Globals& g) {
  const auto method = wsel::parse_element_method(args.element_method);
  const auto strategy = wsel::parse_layer_strategy(args.layer_strategy);
  if (wsel::is_random(method) && !g.seed) {
    std::cerr << "usage error: --element-method " << args.element_method << " requires --seed\n";
    return 1;
  }
  const auto teacher_desc = wsel::find_descriptor(args.teacher_arch);
  const auto student_desc = wsel::find_descriptor(args.student_arch);
  spdlog::info("reading teacher {}", args.teacher);
  const wsel::Checkpoint teacher = wsel::read_checkpoint(args.teacher);

  wsel::SelectionPlan plan;
  if (method == wsel::ElementMethod::kL1Prune) {
    plan = wsel::plan_l1_prune(teacher, teacher_desc, student_desc, strategy, g.threads);
    plan.seed = g.seed;
  } else if (method == wsel::ElementMethod::kMagnitude) {
    plan = wsel::plan_magnitude_prune(teacher_desc, student_desc, strategy);
    plan.seed = g.seed;
  } else {
    plan = wsel::build_plan(teacher_desc, student_desc, strategy, method, g.seed);
  }
  for (const auto& d : plan.directives) {
    if (d.reinit) spdlog::warn("{}: fixed axis differs from teacher, re-initialising", d.student);
  }
  const wsel::Checkpoint student = wsel::run_plan(teacher, plan, g.threads);
  write_outputs(student, plan, args.out, args.emit_plan);
  return 0;
}

struct ReplayArgs {
  std::string teacher;
  std::string plan;
  std::string out;
};

int run_replay(const ReplayArgs& args, const Globals& g) {
  const wsel::SelectionPlan plan = wsel::load_plan(args.plan);
  const wsel::Checkpoint teacher = wsel::read_checkpoint(args.teacher);
  write_outputs(wsel::run_plan(teacher, plan, g.threads), plan, args.out, "");
  return 0;
}

// --------------------------------------------------------------------------
// init / synth

struct InitArgs {
  std::string student_arch;
  std::string method = "trunc_normal";
  double stddev = wsel::kDefaultInitStd;
  std::string out;
};

int run_init(const InitArgs& args, const Globals& g) {
  if (!(args.stddev > 0)) {
    std::cerr << "usage error: --std must be > 0\n";
    return 1;
  }
  const auto desc = wsel::find_descriptor(args.student_arch);
  const wsel::InitSpec spec{wsel::parse_init_method(args.method), args.stddev, g.seed.value_or(0)};
  const wsel::Checkpoint ckpt = wsel::init_random(desc, spec, g.threads);
  wsel::write_checkpoint(ckpt, args.out);
  spdlog::info("wrote {} ({} init, seed {})", args.out, args.method, spec.seed);
  return 0;
}

struct SynthArgs {
  std::string arch;
  std::string out;
  bool planted_attention = false;
};

int run_synth(const SynthArgs& args, const Globals& g) {
  const auto desc = wsel::find_descriptor(args.arch);
  const std::uint64_t seed = g.seed.value_or(0);
  wsel::Checkpoint ckpt =
      args.planted_attention ? wsel::synthesize_planted_attention(desc, seed) : wsel::synthesize(desc, seed);
  ckpt.metadata()["producer"] = "wsel synth";
  ckpt.metadata()["arch"] = desc.name;
  wsel::write_checkpoint(ckpt, args.out);
  spdlog::info("wrote synthetic {} checkpoint {} ({} parameters)", desc.name, args.out, desc.parameter_count());
  return 0;
}

// --------------------------------------------------------------------------
// verify

struct VerifyArgs {
  std::string student;
  std::string teacher;
  std::string plan;
  std::string teacher_arch;
  std::string student_arch;
  std::string layer_strategy = "first_n";
  std::string element_method = "uniform";
};

int run_verify(const VerifyArgs& args, const Globals& g) {
  const wsel::Checkpoint student = wsel::read_checkpoint(args.student);
  const wsel::Checkpoint teacher = wsel::read_checkpoint(args.teacher);
  wsel::SelectionPlan plan;
  if (!args.plan.empty()) {
    plan = wsel::load_plan(args.plan);
  } else {
    if (args.teacher_arch.empty() || args.student_arch.empty()) {
      std::cerr << "usage error: verify needs --plan or both --teacher-arch and --student-arch\n";
      return 1;
    }
    const auto method = wsel::parse_element_method(args.element_method);
    const auto strategy = wsel::parse_layer_strategy(args.layer_strategy);
    const auto tdesc = wsel::find_descriptor(args.teacher_arch);
    const auto sdesc = wsel::find_descriptor(args.student_arch);
    if (method == wsel::ElementMethod::kL1Prune) {
      plan = wsel::plan_l1_prune(teacher, tdesc, sdesc, strategy, g.threads);
      plan.seed = g.seed;
    } else if (method == wsel::ElementMethod::kMagnitude) {
      plan = wsel::plan_magnitude_prune(tdesc, sdesc, strategy);
      plan.seed = g.seed;
    } else {
      plan = wsel::build_plan(tdesc, sdesc, strategy, method, g.seed);
    }
  }
  const wsel::VerificationReport report = wsel::verify(student, teacher, plan, g.threads);
  std::cout << report.to_json().dump(2) << '\n';
  for (const auto& w : report.warnings) spdlog::warn("{}", w);
  spdlog::info("verdict: {}", report.pass ? "PASS" : "FAIL");
  return report.pass ? 0 : 1;
}

// --------------------------------------------------------------------------
// diag

struct DiagAttnArgs {
  std::string ckpt;
  std::string arch;
  std::size_t layer = 0;
  std::size_t head = 0;
  std::string dump_dir;
};

int run_diag_attn(const DiagAttnArgs& args) {
  const auto desc = wsel::find_descriptor(args.arch);
  const wsel::Checkpoint ckpt = wsel::read_checkpoint(args.ckpt);
  const wsel::AttnProducts p = wsel::attn_products(ckpt, desc, args.layer, args.head);
  json j = {{"layer", p.layer},
            {"head", p.head},
            {"diag_score_qk", score_json(p.qk.diag_score)},
            {"diag_score_vproj", score_json(p.vproj.diag_score)}};
  if (!args.dump_dir.empty()) {
    const std::filesystem::path dir(args.dump_dir);
    std::filesystem::create_directories(dir);
    const std::string stem = "l" + std::to_string(p.layer) + "_h" + std::to_string(p.head);
    wsel::write_matrix_csv(p.qk, dir / (stem + "_qk.csv"));
    wsel::write_matrix_csv(p.vproj, dir / (stem + "_vproj.csv"));
    j["qk_csv"] = (dir / (stem + "_qk.csv")).string();
    j["vproj_csv"] = (dir / (stem + "_vproj.csv")).string();
  }
  std::cout << j.dump() << '\n';
  return 0;
}

struct DiagLossArgs {
  std::vector<double> teacher;
  std::vector<double> student;
  double alpha = 1.0;
};

int run_diag_kl(const DiagLossArgs& args) {
  const double loss = wsel::kl_distill_loss(args.teacher, args.student, args.alpha);
  std::cout << json{{"loss", score_json(loss)}}.dump() << '\n';
  return 0;
}

int run_diag_l1(const DiagLossArgs& args) {
  std::cout << json{{"loss", wsel::l1_feature_loss(args.teacher, args.student, args.alpha)}}.dump() << '\n';
  return 0;
}

}  // namespace

int main(int argc, char** argv) {
  CLI::App app{"Weight selection: initialise a small model from a larger pretrained one"};
  app.require_subcommand(1);
  app.fallthrough();

  Globals g;
  app.add_option("--log-level", g.log_level, "trace|debug|info|warn|error|off")->capture_default_str();
  app.add_option("--threads", g.threads, "Worker threads (0 = one per core)")->capture_default_str();
  app.add_option("--seed", g.seed, "Seed for every random choice");

  InspectArgs inspect;
  auto* cmd_inspect = app.add_subcommand("inspect", "List tensors, shapes, dtypes and metadata");
  cmd_inspect->add_option("checkpoint", inspect.path)->required();
  cmd_inspect->add_flag("--json", inspect.as_json, "Machine-readable output");

  SelectArgs select;
  auto* cmd_select = app.add_subcommand("select", "Initialise a student by selecting teacher weights");
  cmd_select->add_option("--teacher", select.teacher, "Teacher checkpoint (.wsck)")->required();
  cmd_select->add_option("--teacher-arch", select.teacher_arch, "Teacher descriptor (path or bundled name)")->required();
  cmd_select->add_option("--student-arch", select.student_arch, "Student descriptor (path or bundled name)")->required();
  cmd_select->add_option("--layer-strategy", select.layer_strategy)
      ->check(CLI::IsMember({"first_n", "uniform", "mid_n", "last_n"}))
      ->capture_default_str();
  cmd_select->add_option("--element-method", select.element_method)
      ->check(CLI::IsMember({"uniform", "consecutive", "random_consistent", "random_inconsistent", "l1", "magnitude"}))
      ->capture_default_str();
  cmd_select->add_option("--out", select.out, "Student checkpoint to write")->required();
  cmd_select->add_option("--emit-plan", select.emit_plan, "Also write the selection plan as JSON");

  ReplayArgs replay;
  auto* cmd_replay = app.add_subcommand("replay", "Re-execute a saved selection plan");
  cmd_replay->add_option("--teacher", replay.teacher)->required();
  cmd_replay->add_option("--plan", replay.plan)->required();
  cmd_replay->add_option("--out", replay.out)->required();

  InitArgs init;
  auto* cmd_init = app.add_subcommand("init", "Randomly initialise a model (baseline)");
  cmd_init->add_option("--student-arch", init.student_arch)->required();
  cmd_init->add_option("--method", init.method)
      ->check(CLI::IsMember({"trunc_normal", "xavier", "kaiming"}))
      ->capture_default_str();
  cmd_init->add_option("--std", init.stddev, "Truncated-normal standard deviation")->capture_default_str();
  cmd_init->add_option("--out", init.out)->required();

  SynthArgs synth;
  auto* cmd_synth = app.add_subcommand("synth", "Write a random checkpoint conforming to a descriptor");
  cmd_synth->add_option("--arch", synth.arch)->required();
  cmd_synth->add_option("--out", synth.out)->required();
  cmd_synth->add_flag("--planted-attention", synth.planted_attention,
                      "Give attention layers diagonal W_q W_k^T and V W_proj structure");

  VerifyArgs verify;
  auto* cmd_verify = app.add_subcommand("verify", "Audit a student against its teacher; exit 0 on PASS");
  cmd_verify->add_option("--student", verify.student)->required();
  cmd_verify->add_option("--teacher", verify.teacher)->required();
  cmd_verify->add_option("--plan", verify.plan, "Plan written by select --emit-plan");
  cmd_verify->add_option("--teacher-arch", verify.teacher_arch, "Rebuild the plan instead of loading one");
  cmd_verify->add_option("--student-arch", verify.student_arch);
  cmd_verify->add_option("--layer-strategy", verify.layer_strategy)->capture_default_str();
  cmd_verify->add_option("--element-method", verify.element_method)->capture_default_str();

  auto* cmd_diag = app.add_subcommand("diag", "Numerical diagnostics");
  cmd_diag->require_subcommand(1);
  DiagAttnArgs attn;
  auto* cmd_attn = cmd_diag->add_subcommand("attn", "Per-head W_q W_k^T and V W_proj diagonal scores");
  cmd_attn->add_option("--ckpt", attn.ckpt)->required();
  cmd_attn->add_option("--arch", attn.arch)->required();
  cmd_attn->add_option("--layer", attn.layer)->capture_default_str();
  cmd_attn->add_option("--head", attn.head)->capture_default_str();
  cmd_attn->add_option("--dump-dir", attn.dump_dir, "Write both matrices as CSV here");
  DiagLossArgs kl;
  auto* cmd_kl = cmd_diag->add_subcommand("kl", "alpha * KL(p_teacher || p_student)");
  cmd_kl->add_option("--p-teacher", kl.teacher)->required()->delimiter(',');
  cmd_kl->add_option("--p-student", kl.student)->required()->delimiter(',');
  cmd_kl->add_option("--alpha", kl.alpha)->capture_default_str();
  DiagLossArgs l1;
  auto* cmd_l1 = cmd_diag->add_subcommand("l1", "alpha * mean |o_teacher - o_student|");
  cmd_l1->add_option("--o-teacher", l1.teacher)->required()->delimiter(',');
  cmd_l1->add_option("--o-student", l1.student)->required()->delimiter(',');
  cmd_l1->add_option("--alpha", l1.alpha)->capture_default_str();

  try {
    app.parse(argc, argv);
  } catch (const CLI::ParseError& e) {
    const int code = app.exit(e);
    return code == 0 ? 0 : 1;
  }

  auto logger = spdlog::stderr_logger_mt("wsel");
  spdlog::set_default_logger(logger);
  spdlog::set_pattern("[%l] %v");
  spdlog::set_level(spdlog::level::from_str(g.log_level));

  try {
    if (*cmd_inspect) return run_inspect(inspect);
    if (*cmd_select) return run_select(select, g);
    if (*cmd_replay) return run_replay(replay, g);
    if (*cmd_init) return run_init(init, g);
    if (*cmd_synth) return run_synth(synth, g);
    if (*cmd_verify) return run_verify(verify, g);
    if (*cmd_attn) return run_diag_attn(attn);
    if (*cmd_kl) return run_diag_kl(kl);
    if (*cmd_l1) return run_diag_l1(l1);
  } catch (const wsel::Error& e) {
    std::cerr << "error: " << e.what() << '\n';
    return 1;
  } catch (const std::exception& e) {
    std::cerr << "error: " << e.what() << '\n';
    return 1;
  }
  return 1;
}
