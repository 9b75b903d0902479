#pragma once

#include <array>
#include <cstddef>
#include <span>
#include <vector>

#include "lightcap/metrics.hpp"
#include "lightcap/model.hpp"
#include "lightcap/rng.hpp"
#include "lightcap/training.hpp"
#include "lightcap/vocab.hpp"

namespace lightcap {

struct RewardSample {
  std::vector<TokenId> tokens;  // includes EOS when it was sampled
  double logprob_sum = 0.0;
  double reward = 0.0;
  double baseline = 0.0;  // mean of the per-step baseline predictions
};

/// Ancestral sample from p_t, dropout off, until EOS or max_len.
/// Only `tokens` and `logprob_sum` are filled in.
template <typename T>
RewardSample sample_caption(const CaptionModel<T>& model, const VisualInput<T>& visual, Rng& rng,
                            std::size_t max_len);

/// A policy the REINFORCE core can drive:
///   sample(rng)                     -> trajectory with .tokens and .logprob_sum
///   reward(traj)                    -> r(Y)
///   step_baselines(traj)            -> b_t per emitted token
///   accumulate_policy(traj, w)      += ∇ Σ_t w_t·(−log p_t(y_t))
///   accumulate_baseline(traj, r, k) += ∇ k·mean_t (b_t − r)²
///
/// One sample of  −Σ_t (r − b_t) ∇log p_t(y_t), scaled by `weight`, goes into
/// the policy gradient. b_t depends only on the prefix y_<t, so the estimate is
/// unbiased for −∇E[r].
template <typename Policy>
RewardSample reinforce_sample(Policy& policy, Rng& rng, double weight) {
  auto traj = policy.sample(rng);
  RewardSample out;
  out.tokens = traj.tokens;
  out.logprob_sum = static_cast<double>(traj.logprob_sum);
  out.reward = policy.reward(traj);
  const std::vector<double> base = policy.step_baselines(traj);
  std::vector<double> adv(base.size());
  for (std::size_t t = 0; t < base.size(); ++t) {
    adv[t] = weight * (out.reward - base[t]);
    out.baseline += base[t];
  }
  if (!base.empty()) {
    out.baseline /= static_cast<double>(base.size());
  }
  policy.accumulate_policy(traj, std::span<const double>(adv));
  policy.accumulate_baseline(traj, out.reward, weight);
  return out;
}

/// The caption decoder seen as a policy over one image. Trajectories point
/// into the policy and must not outlive it.
template <typename T>
class CaptionPolicy {
public:
  struct Trajectory {
    std::vector<TokenId> tokens;
    T logprob_sum{0};
    SequenceTrace<T> trace;
  };

  CaptionPolicy(const CaptionPolicy&) = delete;
  CaptionPolicy& operator=(const CaptionPolicy&) = delete;

  CaptionPolicy(CaptionModel<T>& model, const PreparedExample& example, const Vocab& vocab,
                const NGramStats& idf, RewardMetric metric, std::size_t max_len);

  Trajectory sample(Rng& rng) const;
  double reward(const Trajectory& traj) const;
  std::vector<double> step_baselines(const Trajectory& traj) const;
  void accumulate_policy(const Trajectory& traj, std::span<const double> weights);
  void accumulate_baseline(const Trajectory& traj, double reward, double weight);

  /// Σ_t log p_t(y_t) for a fixed caption, teacher-forced without dropout.
  Trajectory score(std::span<const TokenId> tokens) const;

private:
  CaptionModel<T>* model_;
  const PreparedExample* example_;
  const Vocab* vocab_;
  const NGramStats* idf_;
  RewardMetric metric_;
  std::size_t max_len_;
  VisualInput<T> visual_;
};

extern template class CaptionPolicy<float>;
extern template class CaptionPolicy<double>;

/// Sentence-level reward of a caption (EOS optional) against references.
double caption_reward(const std::vector<TokenId>& tokens, const ReferenceSet& references,
                      const Vocab& vocab, const NGramStats& idf, RewardMetric metric);

struct ReinforceStats {
  double mean_reward = 0.0;
  double mean_baseline = 0.0;
  std::size_t samples = 0;
};

/// Accumulates the REINFORCE gradient for a batch, cfg.rl_samples samples per
/// example, each weighted 1/(batch · samples). Does not step the optimizer.
ReinforceStats reinforce_update(CaptionModel<float>& model, std::span<const PreparedExample> batch,
                                const Vocab& vocab, const NGramStats& idf, const TrainConfig& cfg,
                                Rng& rng);

/// RL fine-tuning: fresh ADAM state at cfg.rl_lr, cfg.rl_epochs epochs,
/// validation CIDEr-D each epoch. The model ends holding the best weights seen,
/// counting the starting point as epoch 0. The objective column is the mean
/// sampled reward.
TrainResult finetune_rl(CaptionModel<float>& model, std::span<const PreparedExample> train,
                        std::span<const PreparedExample> val, const TrainConfig& cfg,
                        const Vocab& vocab, const EpochCallback& on_epoch = {});

/// Tabular two-step policy over tokens {0, 1} with a scalar learned baseline.
/// logits[0..1] drive step 1; logits[2 + 2·y1 .. 3 + 2·y1] drive step 2.
class EnumerablePolicy {
public:
  static constexpr std::size_t kLogits = 6;

  struct Trajectory {
    std::vector<TokenId> tokens;
    double logprob_sum = 0.0;
  };

  EnumerablePolicy(std::array<double, kLogits> logits, std::array<double, 4> rewards);

  Trajectory sample(Rng& rng) const;
  double reward(const Trajectory& traj) const;
  std::vector<double> step_baselines(const Trajectory& traj) const;
  void accumulate_policy(const Trajectory& traj, std::span<const double> weights);
  void accumulate_baseline(const Trajectory& traj, double reward, double weight);

  /// p(y1, y2) under the current logits.
  double probability(TokenId y1, TokenId y2) const;

  const std::array<double, kLogits>& logits() const noexcept { return logits_; }
  const std::array<double, kLogits>& grad() const noexcept { return grad_; }
  double baseline() const noexcept { return baseline_; }
  double baseline_grad() const noexcept { return baseline_grad_; }

  void set_baseline(double b) noexcept { baseline_ = b; }
  void zero_grad() noexcept;
  /// Plain gradient step on the baseline only.
  void step_baseline(double lr) noexcept;

private:
  std::array<double, 2> step_probs(std::size_t offset) const;

  std::array<double, kLogits> logits_;
  std::array<double, 4> rewards_;
  std::array<double, kLogits> grad_{};
  double baseline_ = 0.0;
  double baseline_grad_ = 0.0;
};

} // namespace lightcap
