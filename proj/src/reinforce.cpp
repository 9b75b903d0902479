#include "lightcap/reinforce.hpp"

#include <algorithm>
#include <chrono>
#include <cmath>
#include <numeric>

#include <fmt/format.h>

#include "lightcap/error.hpp"
#include "lightcap/ops.hpp"
#include "lightcap/optim.hpp"

namespace lightcap {

template <typename T>
RewardSample sample_caption(const CaptionModel<T>& model, const VisualInput<T>& visual, Rng& rng,
                            std::size_t max_len) {
  RewardSample out;
  const auto ctx = model.encode_visual(visual);
  std::vector<T> h = model.init_hidden(ctx);
  TokenId prev = Vocab::kBos;
  while (out.tokens.size() < max_len) {
    auto st = model.step(ctx, prev, h);
    const std::size_t k = sample_categorical<T>(st.p, rng);
    const auto y = static_cast<TokenId>(k);
    out.tokens.push_back(y);
    out.logprob_sum += std::log(std::max(static_cast<double>(st.p[k]),
                                         std::numeric_limits<double>::min()));
    if (y == Vocab::kEos) {
      break;
    }
    h = std::move(st.h);
    prev = y;
  }
  return out;
}

template RewardSample sample_caption(const CaptionModel<float>&, const VisualInput<float>&, Rng&,
                                     std::size_t);
template RewardSample sample_caption(const CaptionModel<double>&, const VisualInput<double>&, Rng&,
                                     std::size_t);

double caption_reward(const std::vector<TokenId>& tokens, const ReferenceSet& references,
                      const Vocab& vocab, const NGramStats& idf, RewardMetric metric) {
  if (references.empty()) {
    throw ValidationError("reward: example has no references");
  }
  std::vector<TokenId> body = tokens;
  if (!body.empty() && body.back() == Vocab::kEos) {
    body.pop_back();
  }
  const Words words = caption_words(body, vocab);
  return metric == RewardMetric::cider_d ? cider_d_sentence(words, references, idf)
                                         : sentence_bleu4(words, references);
}

template <typename T>
CaptionPolicy<T>::CaptionPolicy(CaptionModel<T>& model, const PreparedExample& example,
                                const Vocab& vocab, const NGramStats& idf, RewardMetric metric,
                                std::size_t max_len)
    : model_(&model), example_(&example), vocab_(&vocab), idf_(&idf), metric_(metric),
      max_len_(max_len) {
  visual_.pooled.assign(example.visual.pooled.begin(), example.visual.pooled.end());
  visual_.grid = example.visual.grid.template cast<T>();
  if (example.references.empty()) {
    throw ValidationError(fmt::format("example '{}' has no references", example.id));
  }
}

template <typename T>
typename CaptionPolicy<T>::Trajectory CaptionPolicy<T>::score(std::span<const TokenId> tokens) const {
  Trajectory out;
  out.tokens.assign(tokens.begin(), tokens.end());
  out.trace = model_->forward(visual_, tokens, nullptr);
  out.logprob_sum = out.trace.logprob_sum();
  return out;
}

template <typename T>
typename CaptionPolicy<T>::Trajectory CaptionPolicy<T>::sample(Rng& rng) const {
  const RewardSample s = sample_caption(*model_, visual_, rng, max_len_);
  return score(s.tokens);
}

template <typename T>
double CaptionPolicy<T>::reward(const Trajectory& traj) const {
  return caption_reward(traj.tokens, example_->references, *vocab_, *idf_, metric_);
}

template <typename T>
std::vector<double> CaptionPolicy<T>::step_baselines(const Trajectory& traj) const {
  std::vector<double> out;
  out.reserve(traj.trace.steps.size());
  for (const auto& s : traj.trace.steps) {
    out.push_back(static_cast<double>(s.baseline));
  }
  return out;
}

template <typename T>
void CaptionPolicy<T>::accumulate_policy(const Trajectory& traj, std::span<const double> weights) {
  std::vector<T> w(weights.begin(), weights.end());
  model_->backward(traj.trace, w);
}

template <typename T>
void CaptionPolicy<T>::accumulate_baseline(const Trajectory& traj, double reward, double weight) {
  model_->backward_baseline(traj.trace, static_cast<T>(reward), static_cast<T>(weight));
}

template class CaptionPolicy<float>;
template class CaptionPolicy<double>;

ReinforceStats reinforce_update(CaptionModel<float>& model, std::span<const PreparedExample> batch,
                                const Vocab& vocab, const NGramStats& idf, const TrainConfig& cfg,
                                Rng& rng) {
  ReinforceStats st;
  if (batch.empty()) {
    return st;
  }
  const double weight = 1.0 / static_cast<double>(batch.size() * cfg.rl_samples);
  for (const auto& ex : batch) {
    CaptionPolicy<float> policy(model, ex, vocab, idf, cfg.rl_reward_metric, model.config().max_len);
    for (std::size_t k = 0; k < cfg.rl_samples; ++k) {
      const RewardSample s = reinforce_sample(policy, rng, weight);
      st.mean_reward += s.reward;
      st.mean_baseline += s.baseline;
      ++st.samples;
    }
  }
  st.mean_reward /= static_cast<double>(st.samples);
  st.mean_baseline /= static_cast<double>(st.samples);
  return st;
}

namespace {

std::vector<ReferenceSet> reference_sets(std::span<const PreparedExample> examples) {
  std::vector<ReferenceSet> out;
  out.reserve(examples.size());
  for (const auto& ex : examples) {
    out.push_back(ex.references);
  }
  return out;
}

} // namespace

TrainResult finetune_rl(CaptionModel<float>& model, std::span<const PreparedExample> train,
                        std::span<const PreparedExample> val, const TrainConfig& cfg,
                        const Vocab& vocab, const EpochCallback& on_epoch) {
  cfg.validate();
  if (train.empty()) {
    throw ValidationError("finetune_rl: empty training set");
  }
  if (val.empty()) {
    throw ValidationError("finetune_rl: empty validation set");
  }
  const NGramStats train_idf = build_idf(reference_sets(train));
  const NGramStats val_idf = build_idf(reference_sets(val));

  reset_optimizer_state(model.params());
  AdamConfig adam;
  adam.lr = cfg.rl_lr;
  Rng order_rng(cfg.seed);
  Rng sample_rng(order_rng.fork_seed());

  TrainResult result;
  std::vector<double> history{evaluate(model, val, cfg.beam, vocab, val_idf).cider_d};
  result.best_val_cider_d = history.front();
  result.best_epoch = 0;
  std::vector<Tensor2D<float>> best = model.snapshot();

  std::vector<std::size_t> order(train.size());
  std::iota(order.begin(), order.end(), std::size_t{0});
  std::vector<PreparedExample> batch;
  const auto start = std::chrono::steady_clock::now();

  for (std::size_t epoch = 1; epoch <= cfg.rl_epochs; ++epoch) {
    order_rng.shuffle(std::span(order));
    double reward_sum = 0.0;
    std::size_t reward_count = 0;
    for (std::size_t begin = 0; begin < order.size(); begin += cfg.batch_size) {
      const std::size_t end = std::min(order.size(), begin + cfg.batch_size);
      batch.clear();
      for (std::size_t k = begin; k < end; ++k) {
        batch.push_back(train[order[k]]);
      }
      const ReinforceStats st = reinforce_update(model, batch, vocab, train_idf, cfg, sample_rng);
      reward_sum += st.mean_reward * static_cast<double>(st.samples);
      reward_count += st.samples;
      adam_step(model.params(), adam);
    }

    const EvalResult ev = evaluate(model, val, cfg.beam, vocab, val_idf);
    EpochLog entry;
    entry.epoch = epoch;
    entry.objective = reward_sum / static_cast<double>(reward_count);
    entry.val_bleu4 = ev.bleu4;
    entry.val_cider_d = ev.cider_d;
    entry.elapsed_seconds =
        std::chrono::duration<double>(std::chrono::steady_clock::now() - start).count();
    result.log.push_back(entry);
    if (on_epoch) {
      on_epoch(entry);
    }

    history.push_back(ev.cider_d);
    if (ev.cider_d > result.best_val_cider_d) {
      result.best_val_cider_d = ev.cider_d;
      result.best_epoch = epoch;
      best = model.snapshot();
    }
    if (early_stop(history, cfg.patience_epochs).stop) {
      result.early_stopped = true;
      break;
    }
  }
  model.restore(best);
  return result;
}

EnumerablePolicy::EnumerablePolicy(std::array<double, kLogits> logits, std::array<double, 4> rewards)
    : logits_(logits), rewards_(rewards) {}

std::array<double, 2> EnumerablePolicy::step_probs(std::size_t offset) const {
  std::array<double, 2> p{logits_[offset], logits_[offset + 1]};
  softmax_inplace<double>(p);
  return p;
}

double EnumerablePolicy::probability(TokenId y1, TokenId y2) const {
  if (y1 < 0 || y1 > 1 || y2 < 0 || y2 > 1) {
    throw IndexError("EnumerablePolicy: tokens must be 0 or 1");
  }
  const auto p1 = step_probs(0);
  const auto p2 = step_probs(2 + 2 * static_cast<std::size_t>(y1));
  return p1[static_cast<std::size_t>(y1)] * p2[static_cast<std::size_t>(y2)];
}

EnumerablePolicy::Trajectory EnumerablePolicy::sample(Rng& rng) const {
  Trajectory out;
  const auto p1 = step_probs(0);
  const std::size_t y1 = sample_categorical<double>(p1, rng);
  const auto p2 = step_probs(2 + 2 * y1);
  const std::size_t y2 = sample_categorical<double>(p2, rng);
  out.tokens = {static_cast<TokenId>(y1), static_cast<TokenId>(y2)};
  out.logprob_sum = std::log(p1[y1]) + std::log(p2[y2]);
  return out;
}

double EnumerablePolicy::reward(const Trajectory& traj) const {
  return rewards_[static_cast<std::size_t>(2 * traj.tokens.at(0) + traj.tokens.at(1))];
}

std::vector<double> EnumerablePolicy::step_baselines(const Trajectory& traj) const {
  return std::vector<double>(traj.tokens.size(), baseline_);
}

void EnumerablePolicy::accumulate_policy(const Trajectory& traj, std::span<const double> weights) {
  if (weights.size() != 2 || traj.tokens.size() != 2) {
    throw ShapeError("EnumerablePolicy: expects two steps");
  }
  const auto y1 = static_cast<std::size_t>(traj.tokens[0]);
  const auto y2 = static_cast<std::size_t>(traj.tokens[1]);
  const std::size_t offsets[2] = {0, 2 + 2 * y1};
  const std::size_t ys[2] = {y1, y2};
  for (std::size_t t = 0; t < 2; ++t) {
    const auto p = step_probs(offsets[t]);
    for (std::size_t k = 0; k < 2; ++k) {
      grad_[offsets[t] + k] += weights[t] * (p[k] - (k == ys[t] ? 1.0 : 0.0));
    }
  }
}

void EnumerablePolicy::accumulate_baseline(const Trajectory& traj, double reward, double weight) {
  (void)traj;
  baseline_grad_ += 2.0 * weight * (baseline_ - reward);
}

void EnumerablePolicy::zero_grad() noexcept {
  grad_.fill(0.0);
  baseline_grad_ = 0.0;
}

void EnumerablePolicy::step_baseline(double lr) noexcept {
  baseline_ -= lr * baseline_grad_;
  baseline_grad_ = 0.0;
}

} // namespace lightcap
