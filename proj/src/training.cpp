#include "lightcap/training.hpp"

#include <chrono>
#include <utility>

#include <fmt/format.h>

#include "lightcap/bpe.hpp"
#include "lightcap/decoding.hpp"

namespace lightcap {

template <typename T>
T xe_loss(CaptionModel<T>& model, const VisualInput<T>& visual, std::span<const TokenId> targets,
          Rng* dropout_rng) {
  if (targets.empty()) {
    throw ValidationError("xe_loss: empty caption");
  }
  const auto trace = model.forward(visual, targets, dropout_rng);
  const std::vector<T> weights(targets.size(), T{1});
  model.backward(trace, weights);
  return -trace.logprob_sum();
}

template <typename T>
T xe_loss_value(const CaptionModel<T>& model, const VisualInput<T>& visual,
                std::span<const TokenId> targets, Rng* dropout_rng) {
  if (targets.empty()) {
    throw ValidationError("xe_loss: empty caption");
  }
  return -model.forward(visual, targets, dropout_rng).logprob_sum();
}

template float xe_loss(CaptionModel<float>&, const VisualInput<float>&, std::span<const TokenId>, Rng*);
template double xe_loss(CaptionModel<double>&, const VisualInput<double>&, std::span<const TokenId>, Rng*);
template float xe_loss_value(const CaptionModel<float>&, const VisualInput<float>&,
                             std::span<const TokenId>, Rng*);
template double xe_loss_value(const CaptionModel<double>&, const VisualInput<double>&,
                              std::span<const TokenId>, Rng*);

EarlyStopDecision early_stop(std::span<const double> history, std::size_t patience) {
  EarlyStopDecision out;
  if (history.empty()) {
    return out;
  }
  std::size_t best = 0;
  for (std::size_t i = 1; i < history.size(); ++i) {
    if (history[i] > history[best]) {
      best = i;
    }
  }
  out.best_epoch = best + 1;
  out.stop = history.size() - (best + 1) >= patience;
  return out;
}

Words caption_words(const std::vector<TokenId>& ids, const Vocab& vocab) {
  return metric_tokens(bpe_decode(vocab.decode(ids)));
}

EvalResult evaluate(const CaptionModel<float>& model, std::span<const PreparedExample> examples,
                    std::size_t beam, const Vocab& vocab, const NGramStats& idf) {
  EvalResult out;
  std::vector<Words> cands;
  std::vector<ReferenceSet> refs;
  const std::size_t max_len = model.config().max_len;
  for (const auto& ex : examples) {
    Hypothesis hyp = beam <= 1 ? greedy_decode(model, ex.visual, max_len)
                               : beam_search(model, ex.visual, beam, max_len);
    if (!hyp.tokens.empty() && hyp.tokens.back() == Vocab::kEos) {
      hyp.tokens.pop_back();
    }
    cands.push_back(caption_words(hyp.tokens, vocab));
    refs.push_back(ex.references);
    out.hypotheses.push_back(std::move(hyp.tokens));
  }
  if (!examples.empty()) {
    out.bleu4 = bleu4(cands, refs);
    out.cider_d = cider_d(cands, refs, idf).mean;
  }
  return out;
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

TrainResult train_xe(CaptionModel<float>& model, std::span<const PreparedExample> train,
                     std::span<const PreparedExample> val, const TrainConfig& cfg,
                     const Vocab& vocab, const EpochCallback& on_epoch) {
  cfg.validate();
  if (train.empty()) {
    throw ValidationError("train_xe: empty training set");
  }
  if (val.empty()) {
    throw ValidationError("train_xe: empty validation set");
  }
  const NGramStats val_idf = build_idf(reference_sets(val));

  std::vector<std::pair<std::size_t, std::size_t>> samples;
  for (std::size_t i = 0; i < train.size(); ++i) {
    for (std::size_t j = 0; j < train[i].targets.size(); ++j) {
      samples.emplace_back(i, j);
    }
  }
  if (samples.empty()) {
    throw ValidationError("train_xe: training set has no captions");
  }

  Rng shuffle_rng(cfg.seed);
  Rng dropout_rng(shuffle_rng.fork_seed());
  AdamConfig adam;
  adam.lr = cfg.lr;

  TrainResult result;
  std::vector<double> history;
  std::vector<Tensor2D<float>> best = model.snapshot();
  const auto start = std::chrono::steady_clock::now();

  for (std::size_t epoch = 1; epoch <= cfg.max_epochs; ++epoch) {
    shuffle_rng.shuffle(std::span(samples));
    double loss_sum = 0.0;
    for (std::size_t begin = 0; begin < samples.size(); begin += cfg.batch_size) {
      const std::size_t end = std::min(samples.size(), begin + cfg.batch_size);
      for (std::size_t k = begin; k < end; ++k) {
        const auto& ex = train[samples[k].first];
        loss_sum += xe_loss(model, ex.visual, std::span<const TokenId>(ex.targets[samples[k].second]),
                            &dropout_rng);
      }
      model.params().scale_grad(1.0F / static_cast<float>(end - begin));
      adam_step(model.params(), adam);
    }

    const EvalResult ev = evaluate(model, val, cfg.beam, vocab, val_idf);
    EpochLog entry;
    entry.epoch = epoch;
    entry.objective = loss_sum / static_cast<double>(samples.size());
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

} // namespace lightcap
