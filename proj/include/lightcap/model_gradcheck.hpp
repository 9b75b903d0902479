#pragma once

#include <cstdint>
#include <string>
#include <vector>

#include "lightcap/config.hpp"
#include "lightcap/gradcheck.hpp"

namespace lightcap {

/// Parameters of the checked instance are uniform in ±kGradcheckWeightScale.
inline constexpr double kGradcheckWeightScale = 0.5;

/// d=8, h=16, vocab=20, v_dim=32; the MHA grid is 5 × 12.
ModelConfig gradcheck_config(AttentionMode att, BottleneckMode bot, bool tied);

struct GradcheckCell {
  std::string label;  // e.g. "pooled/deep_gru/tied"
  ModelConfig config;
  GradcheckResult result;
};

/// Full-model check in 64-bit reals on the teacher-forced XE loss of two
/// random captions (dropout on, fixed mask), then a second check of the
/// baseline regression with decoder states frozen. Reports the worse one.
GradcheckResult model_gradcheck(const ModelConfig& cfg, std::uint64_t seed, double epsilon,
                                double weight_scale = kGradcheckWeightScale);

/// All eight {pooled, mha} × {linear, deep_gru} × {tied, untied} cells.
std::vector<GradcheckCell> model_gradcheck_suite(std::uint64_t seed = 1, double epsilon = 1e-4);

} // namespace lightcap
