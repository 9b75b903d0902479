#pragma once

#include <cstddef>
#include <functional>
#include <optional>
#include <span>
#include <string>
#include <vector>

#include "lightcap/config.hpp"
#include "lightcap/metrics.hpp"
#include "lightcap/model.hpp"
#include "lightcap/optim.hpp"
#include "lightcap/vocab.hpp"

namespace lightcap {

/// One image ready for the decoder: visual input, encoded targets (each ending
/// in EOS) and metric-tokenized references.
struct PreparedExample {
  std::string id;
  VisualInput<float> visual;
  std::vector<std::vector<TokenId>> targets;
  ReferenceSet references;
};

/// Teacher-forced Σ_t −log p_t(y_t) over `targets` (which must end in EOS).
/// Gradients are accumulated into the model parameters.
template <typename T>
T xe_loss(CaptionModel<T>& model, const VisualInput<T>& visual, std::span<const TokenId> targets,
          Rng* dropout_rng);

/// Same value without touching gradients.
template <typename T>
T xe_loss_value(const CaptionModel<T>& model, const VisualInput<T>& visual,
                std::span<const TokenId> targets, Rng* dropout_rng);

struct EarlyStopDecision {
  bool stop = false;
  std::optional<std::size_t> best_epoch;  // 1-based
};

/// history[i] is the validation score after epoch i + 1. Stops once the
/// current epoch is `patience` or more epochs past the first best one.
EarlyStopDecision early_stop(std::span<const double> history, std::size_t patience);

struct EvalResult {
  double bleu4 = 0.0;
  double cider_d = 0.0;
  std::vector<std::vector<TokenId>> hypotheses;  // without EOS
};

/// Beam-decodes every example (greedy when beam == 1) and scores it.
EvalResult evaluate(const CaptionModel<float>& model, std::span<const PreparedExample> examples,
                    std::size_t beam, const Vocab& vocab, const NGramStats& idf);

/// BPE-decodes ids and tokenizes the result for scoring.
Words caption_words(const std::vector<TokenId>& ids, const Vocab& vocab);

struct EpochLog {
  std::size_t epoch = 0;
  double objective = 0.0;  // mean XE loss per caption, or mean reward for RL
  double val_bleu4 = 0.0;
  double val_cider_d = 0.0;
  double elapsed_seconds = 0.0;
};

struct TrainResult {
  std::vector<EpochLog> log;
  std::size_t best_epoch = 0;
  double best_val_cider_d = -1.0;
  bool early_stopped = false;
};

using EpochCallback = std::function<void(const EpochLog&)>;

/// Cross-entropy training with shuffled mini-batches, ADAM and validation
/// CIDEr-D early stopping. The model ends holding the best-validation weights.
TrainResult train_xe(CaptionModel<float>& model, std::span<const PreparedExample> train,
                     std::span<const PreparedExample> val, const TrainConfig& cfg,
                     const Vocab& vocab, const EpochCallback& on_epoch = {});

/// Zeroes ADAM moments and step counters.
template <typename T>
void reset_optimizer_state(ParameterSet<T>& params) {
  for (auto& p : params) {
    p->adam_m.fill(T{0});
    p->adam_v.fill(T{0});
    p->grad.fill(T{0});
    p->step_count = 0;
  }
}

} // namespace lightcap
