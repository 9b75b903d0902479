#pragma once

#include <algorithm>
#include <cmath>
#include <cstddef>
#include <limits>
#include <vector>

#include "lightcap/error.hpp"
#include "lightcap/model.hpp"
#include "lightcap/vocab.hpp"

namespace lightcap {

/// PAD, BOS and UNK are never emitted at decode time.
inline bool is_decode_masked(TokenId id) noexcept {
  return id == Vocab::kPad || id == Vocab::kBos || id == Vocab::kUnk;
}

struct Hypothesis {
  std::vector<TokenId> tokens;  // includes the terminating EOS when present
  double logprob = 0.0;
  bool finished = false;

  double normalized_score() const noexcept {
    return tokens.empty() ? 0.0 : logprob / static_cast<double>(tokens.size());
  }
};

/// Argmax token per step from BOS until EOS or max_len; ties go to the lowest id.
template <typename T>
Hypothesis greedy_decode(const CaptionModel<T>& model, const VisualInput<T>& visual,
                         std::size_t max_len) {
  Hypothesis hyp;
  if (max_len == 0) {
    return hyp;
  }
  const auto ctx = model.encode_visual(visual);
  std::vector<T> h = model.init_hidden(ctx);
  TokenId prev = Vocab::kBos;
  while (hyp.tokens.size() < max_len) {
    auto st = model.step(ctx, prev, h);
    TokenId best = -1;
    for (std::size_t k = 0; k < st.p.size(); ++k) {
      const auto id = static_cast<TokenId>(k);
      if (is_decode_masked(id)) {
        continue;
      }
      if (best < 0 || st.p[k] > st.p[static_cast<std::size_t>(best)]) {
        best = id;
      }
    }
    if (best < 0) {
      throw ValidationError("greedy_decode: every token is masked");
    }
    hyp.tokens.push_back(best);
    hyp.logprob += std::log(std::max(static_cast<double>(st.p[static_cast<std::size_t>(best)]),
                                     std::numeric_limits<double>::min()));
    if (best == Vocab::kEos) {
      break;
    }
    h = std::move(st.h);
    prev = best;
  }
  hyp.finished = true;
  return hyp;
}

/// Beam search over log-probabilities. Each step keeps the `beam` best
/// extensions over all live hypotheses; those ending in EOS or reaching
/// max_len move to the completed pool, shrinking the live beam. Returns the
/// completed hypothesis with the highest logprob / length.
template <typename T>
Hypothesis beam_search(const CaptionModel<T>& model, const VisualInput<T>& visual, std::size_t beam,
                       std::size_t max_len) {
  if (beam < 1) {
    throw ValidationError("beam_search: beam must be at least 1");
  }
  struct Live {
    Hypothesis hyp;
    std::vector<T> h;
  };
  struct Candidate {
    std::size_t parent;
    TokenId token;
    double logprob;
  };

  const auto ctx = model.encode_visual(visual);
  std::vector<Live> live;
  live.push_back({Hypothesis{}, model.init_hidden(ctx)});
  std::vector<Hypothesis> completed;

  std::vector<DecoderState<T>> states;
  std::vector<Candidate> cands;
  for (std::size_t t = 0; t < max_len && !live.empty(); ++t) {
    states.clear();
    cands.clear();
    for (std::size_t i = 0; i < live.size(); ++i) {
      const TokenId prev = live[i].hyp.tokens.empty() ? Vocab::kBos : live[i].hyp.tokens.back();
      states.push_back(model.step(ctx, prev, live[i].h));
      const auto& p = states.back().p;
      for (std::size_t k = 0; k < p.size(); ++k) {
        const auto id = static_cast<TokenId>(k);
        if (is_decode_masked(id)) {
          continue;
        }
        const double lp = std::log(std::max(static_cast<double>(p[k]),
                                            std::numeric_limits<double>::min()));
        cands.push_back({i, id, live[i].hyp.logprob + lp});
      }
    }
    const std::size_t keep = std::min(beam, cands.size());
    std::partial_sort(cands.begin(), cands.begin() + static_cast<std::ptrdiff_t>(keep), cands.end(),
                      [](const Candidate& a, const Candidate& b) {
                        if (a.logprob != b.logprob) {
                          return a.logprob > b.logprob;
                        }
                        if (a.parent != b.parent) {
                          return a.parent < b.parent;
                        }
                        return a.token < b.token;
                      });
    std::vector<Live> next;
    for (std::size_t j = 0; j < keep; ++j) {
      const auto& c = cands[j];
      Hypothesis hyp = live[c.parent].hyp;
      hyp.tokens.push_back(c.token);
      hyp.logprob = c.logprob;
      if (c.token == Vocab::kEos || hyp.tokens.size() >= max_len) {
        hyp.finished = true;
        completed.push_back(std::move(hyp));
      } else {
        next.push_back({std::move(hyp), states[c.parent].h});
      }
    }
    live = std::move(next);
  }

  if (completed.empty()) {
    Hypothesis best;
    for (const auto& l : live) {
      if (best.tokens.empty() || l.hyp.normalized_score() > best.normalized_score()) {
        best = l.hyp;
      }
    }
    return best;
  }
  std::size_t best = 0;
  for (std::size_t i = 1; i < completed.size(); ++i) {
    if (completed[i].normalized_score() > completed[best].normalized_score()) {
      best = i;
    }
  }
  return completed[best];
}

} // namespace lightcap
