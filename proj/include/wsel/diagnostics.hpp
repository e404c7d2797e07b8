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
#include <cstddef>
#include <filesystem>
#include <fstream>
#include <limits>
#include <map>
#include <span>
#include <string>
#include <vector>

#include "wsel/arch.hpp"
#include "wsel/checkpoint.hpp"
#include "wsel/error.hpp"
#include "wsel/hash.hpp"
#include "wsel/rng.hpp"

namespace wsel {

/// Square row-major matrix with its diagonal-dominance score.
struct ProductMatrix {
  std::size_t dim = 0;
  std::vector<double> values;
  double diag_score = 0.0;

  double at(std::size_t r, std::size_t c) const { return values[r * dim + c]; }
};

struct AttnProducts {
  std::size_t layer = 0;
  std::size_t head = 0;
  std::size_t head_dim = 0;
  ProductMatrix qk;     // W_q W_k^T restricted to one head
  ProductMatrix vproj;  // V W_proj restricted to one head
};

/// mean |diagonal| / mean |off-diagonal|. Returns +inf when the off-diagonal
/// mass is zero but the diagonal is not (identity-like input, or a 1x1
/// matrix), and 0 for an all-zero matrix.
inline double diag_score(std::span<const double> m, std::size_t n) {
  double diag = 0.0;
  double off = 0.0;
  for (std::size_t r = 0; r < n; ++r) {
    for (std::size_t c = 0; c < n; ++c) {
      (r == c ? diag : off) += std::abs(m[r * n + c]);
    }
  }
  diag /= static_cast<double>(n);
  if (off == 0.0) return diag > 0.0 ? std::numeric_limits<double>::infinity() : 0.0;
  off /= static_cast<double>(n * n - n);
  return diag / off;
}

namespace detail {

/// Rows [row0, row0 + rows) of a 2-D tensor as f64.
inline std::vector<double> row_block(const TensorRecord& t, std::size_t row0, std::size_t rows) {
  const std::size_t cols = t.shape[1];
  std::vector<double> out(rows * cols);
  for (std::size_t r = 0; r < rows; ++r) {
    for (std::size_t c = 0; c < cols; ++c) out[r * cols + c] = t.value_at((row0 + r) * cols + c);
  }
  return out;
}

inline ProductMatrix finish_product(std::size_t n, std::vector<double> values) {
  ProductMatrix p{n, std::move(values), 0.0};
  p.diag_score = diag_score(p.values, n);
  return p;
}

inline const TensorRecord& attention_tensor(const Checkpoint& ckpt, const std::string& name) {
  const TensorRecord* t = ckpt.find(name);
  if (t == nullptr) throw Error(ErrorCode::kUnbound, "attention tensor '" + name + "' not found");
  if (t->shape.size() != 2) throw Error(ErrorCode::kRankMismatch, "attention tensor '" + name + "' is not 2-D");
  return *t;
}

}  // namespace detail

/// Per-head attention products of one layer, computed in f64.
///
/// With row-major [out, in] projection weights, head h owns rows
/// [h*d_h, (h+1)*d_h) of W_q, W_k, W_v and columns [h*d_h, (h+1)*d_h) of
/// W_proj; both products are d_h x d_h.
inline AttnProducts attn_products(const Checkpoint& ckpt, const ArchDescriptor& desc, std::size_t layer,
                                  std::size_t head) {
  if (!desc.attention) {
    throw Error(ErrorCode::kUnbound, "descriptor '" + desc.name + "' declares no attention layout");
  }
  const AttentionLayout& att = *desc.attention;
  const StageSpec& stage = desc.stages.at(desc.stage_index(att.stage));
  if (layer >= stage.depth) {
    throw Error(ErrorCode::kIndexOutOfRange, "layer " + std::to_string(layer) + " out of range (depth " +
                                                 std::to_string(stage.depth) + ")");
  }
  auto name = [&](const std::string& tmpl) { return expand_template(tmpl, stage.id, layer); };

  const std::size_t dh = desc.group_width(att.head_dim_group);
  const TensorRecord& proj = detail::attention_tensor(ckpt, name(att.proj));
  std::vector<double> q, k, v;
  std::size_t width = 0;
  std::size_t in_dim = 0;
  auto head_rows = [&](const TensorRecord& t, std::size_t offset) { return detail::row_block(t, offset + head * dh, dh); };

  if (att.fused()) {
    const TensorRecord& qkv = detail::attention_tensor(ckpt, name(*att.qkv));
    if (qkv.shape[0] % 3 != 0) throw Error(ErrorCode::kShapeMismatch, "fused qkv rows not divisible by 3");
    width = qkv.shape[0] / 3;
    in_dim = qkv.shape[1];
    if (width % dh != 0) throw Error(ErrorCode::kShapeMismatch, "attention width not a multiple of head_dim");
    if (head >= width / dh) {
      throw Error(ErrorCode::kIndexOutOfRange, "head " + std::to_string(head) + " out of range (" +
                                                   std::to_string(width / dh) + " heads)");
    }
    q = head_rows(qkv, 0);
    k = head_rows(qkv, width);
    v = head_rows(qkv, 2 * width);
  } else {
    const TensorRecord& tq = detail::attention_tensor(ckpt, name(*att.q));
    const TensorRecord& tk = detail::attention_tensor(ckpt, name(*att.k));
    const TensorRecord& tv = detail::attention_tensor(ckpt, name(*att.v));
    width = tq.shape[0];
    in_dim = tq.shape[1];
    if (tk.shape != tq.shape || tv.shape != tq.shape) {
      throw Error(ErrorCode::kShapeMismatch, "q, k and v projections differ in shape");
    }
    if (width % dh != 0) throw Error(ErrorCode::kShapeMismatch, "attention width not a multiple of head_dim");
    if (head >= width / dh) {
      throw Error(ErrorCode::kIndexOutOfRange, "head " + std::to_string(head) + " out of range (" +
                                                   std::to_string(width / dh) + " heads)");
    }
    q = head_rows(tq, 0);
    k = head_rows(tk, 0);
    v = head_rows(tv, 0);
  }
  if (proj.shape[1] != width || proj.shape[0] != in_dim) {
    throw Error(ErrorCode::kShapeMismatch, "projection shape " + shape_to_string(proj.shape) +
                                               " does not match the attention width");
  }

  std::vector<double> qk(dh * dh, 0.0);
  for (std::size_t r = 0; r < dh; ++r) {
    for (std::size_t c = 0; c < dh; ++c) {
      double acc = 0.0;
      for (std::size_t i = 0; i < in_dim; ++i) acc += q[r * in_dim + i] * k[c * in_dim + i];
      qk[r * dh + c] = acc;
    }
  }
  // V_h is d_h x in, the head's slice of W_proj is out x d_h with out == in.
  std::vector<double> vproj(dh * dh, 0.0);
  for (std::size_t r = 0; r < dh; ++r) {
    for (std::size_t c = 0; c < dh; ++c) {
      double acc = 0.0;
      for (std::size_t i = 0; i < in_dim; ++i) acc += v[r * in_dim + i] * proj.value_at(i * width + head * dh + c);
      vproj[r * dh + c] = acc;
    }
  }
  return {layer, head, dh, detail::finish_product(dh, std::move(qk)), detail::finish_product(dh, std::move(vproj))};
}

inline void write_matrix_csv(const ProductMatrix& m, const std::filesystem::path& path) {
  std::ofstream out(path, std::ios::trunc);
  if (!out) throw Error(ErrorCode::kIo, "cannot create '" + path.string() + "'");
  out.precision(17);
  for (std::size_t r = 0; r < m.dim; ++r) {
    for (std::size_t c = 0; c < m.dim; ++c) {
      if (c) out << ',';
      out << m.at(r, c);
    }
    out << '\n';
  }
  if (!out) throw Error(ErrorCode::kIo, "write failed for '" + path.string() + "'");
}

/// Synthetic "pretrained" checkpoint whose attention layers carry the
/// diagonal structure of trained ViTs: per layer W_k = W_q + noise and
/// W_proj = W_v^T, so both per-head products are Gram-like. Everything else is
/// N(0, stddev).
inline Checkpoint synthesize_planted_attention(const ArchDescriptor& desc, std::uint64_t seed,
                                               double stddev = 0.02, double noise = 0.1) {
  if (!desc.attention) throw Error(ErrorCode::kUnbound, "descriptor declares no attention layout");
  const AttentionLayout& att = *desc.attention;
  std::map<std::string, std::vector<double>> values;
  const auto tensors = desc.expand();
  for (const auto& t : tensors) {
    Rng rng(derive_seed(seed, "synth", t.name));
    auto& v = values[t.name];
    v.resize(shape_numel(t.shape));
    for (auto& x : v) x = rng.normal(0.0, stddev);
  }
  const std::size_t stage_idx = desc.stage_index(att.stage);
  const StageSpec& stage = desc.stages[stage_idx];
  for (std::size_t layer = 0; layer < stage.depth; ++layer) {
    auto name = [&](const std::string& tmpl) { return expand_template(tmpl, stage.id, layer); };
    Rng rng(derive_seed(seed, "plant", layer));
    auto& proj = values.at(name(att.proj));
    if (att.fused()) {
      auto& qkv = values.at(name(*att.qkv));
      const std::size_t n = qkv.size() / 3;  // elements per q/k/v block
      const std::size_t width = static_cast<std::size_t>(std::sqrt(static_cast<double>(proj.size())));
      for (std::size_t i = 0; i < n; ++i) qkv[n + i] = qkv[i] + rng.normal(0.0, noise * stddev);
      for (std::size_t r = 0; r < width; ++r) {
        for (std::size_t c = 0; c < width; ++c) proj[r * width + c] = qkv[2 * n + c * width + r];
      }
    } else {
      auto& q = values.at(name(*att.q));
      auto& k = values.at(name(*att.k));
      auto& v = values.at(name(*att.v));
      const std::size_t width = static_cast<std::size_t>(std::sqrt(static_cast<double>(q.size())));
      for (std::size_t i = 0; i < q.size(); ++i) k[i] = q[i] + rng.normal(0.0, noise * stddev);
      for (std::size_t r = 0; r < width; ++r) {
        for (std::size_t c = 0; c < width; ++c) proj[r * width + c] = v[c * width + r];
      }
    }
  }
  Checkpoint ckpt;
  for (const auto& t : tensors) ckpt.add(make_tensor(t.name, desc.dtype, t.shape, values.at(t.name)));
  return ckpt;
}

// ---------------------------------------------------------------------------
// Distillation loss terms (forward only)

inline constexpr double kSimplexTolerance = 1e-6;

namespace detail {

inline void check_distribution(std::span<const double> p, const char* which) {
  double sum = 0.0;
  for (double x : p) {
    if (!(x >= 0.0)) throw Error(ErrorCode::kNotNormalized, std::string(which) + " has a negative entry");
    sum += x;
  }
  if (std::abs(sum - 1.0) > kSimplexTolerance) {
    throw Error(ErrorCode::kNotNormalized, std::string(which) + " sums to " + std::to_string(sum));
  }
}

}  // namespace detail

/// alpha * KL(p_t || p_s), with 0 * ln(0 / x) = 0. Returns +inf when p_s is
/// zero somewhere p_t is not (and alpha > 0).
inline double kl_distill_loss(std::span<const double> p_t, std::span<const double> p_s, double alpha) {
  if (p_t.size() != p_s.size()) {
    throw Error(ErrorCode::kLengthMismatch, "distributions have lengths " + std::to_string(p_t.size()) + " and " +
                                                std::to_string(p_s.size()));
  }
  if (!(alpha >= 0.0)) throw Error(ErrorCode::kInvalidArgument, "alpha must be >= 0");
  detail::check_distribution(p_t, "p_t");
  detail::check_distribution(p_s, "p_s");
  if (alpha == 0.0) return 0.0;
  double kl = 0.0;
  for (std::size_t i = 0; i < p_t.size(); ++i) {
    if (p_t[i] == 0.0) continue;
    if (p_s[i] == 0.0) return std::numeric_limits<double>::infinity();
    kl += p_t[i] * (std::log(p_t[i]) - std::log(p_s[i]));
  }
  return alpha * std::max(kl, 0.0);
}

/// alpha * mean |o_t - o_s|, where o_s is the student output already
/// projected to the teacher width.
inline double l1_feature_loss(std::span<const double> o_t, std::span<const double> o_s_projected, double alpha) {
  if (o_t.size() != o_s_projected.size()) {
    throw Error(ErrorCode::kLengthMismatch, "feature vectors have lengths " + std::to_string(o_t.size()) +
                                                " and " + std::to_string(o_s_projected.size()));
  }
  if (o_t.empty()) throw Error(ErrorCode::kInvalidArgument, "feature vectors are empty");
  if (!(alpha >= 0.0)) throw Error(ErrorCode::kInvalidArgument, "alpha must be >= 0");
  double sum = 0.0;
  for (std::size_t i = 0; i < o_t.size(); ++i) sum += std::abs(o_t[i] - o_s_projected[i]);
  return alpha * (sum / static_cast<double>(o_t.size()));
}

}  // namespace wsel
