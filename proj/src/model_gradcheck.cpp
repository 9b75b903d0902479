#include "lightcap/model_gradcheck.hpp"

#include <fmt/format.h>

#include "lightcap/model.hpp"
#include "lightcap/rng.hpp"

namespace lightcap {

ModelConfig gradcheck_config(AttentionMode att, BottleneckMode bot, bool tied) {
  ModelConfig c;
  c.d = 8;
  c.h = 16;
  c.vocab_size = 20;
  c.v_dim = 32;
  c.attention_mode = att;
  c.bottleneck_mode = bot;
  c.tie_weights = tied;
  c.mha_heads = 3;
  c.mha_dq = 0;
  c.mha_regions = 5;
  c.mha_key_dim = 12;
  c.max_len = 8;
  c.dropout_p = 0.5;
  return c;
}

GradcheckResult model_gradcheck(const ModelConfig& cfg, std::uint64_t seed, double epsilon,
                                double weight_scale) {
  Rng rng(seed);
  CaptionModel<double> model(cfg);
  model.init_weights(rng);
  // Weights well away from zero keep every gradient entry far above the
  // finite-difference roundoff floor; biases get random values too.
  for (auto& p : model.params()) {
    for (auto& v : p->value.flat()) {
      v = rng.uniform(-weight_scale, weight_scale);
    }
  }

  VisualInput<double> visual;
  visual.pooled.resize(cfg.v_dim);
  for (auto& v : visual.pooled) {
    v = rng.normal();
  }
  if (cfg.attention_mode == AttentionMode::mha) {
    visual.grid = Tensor2D<double>(cfg.mha_regions, cfg.mha_key_dim);
    for (auto& v : visual.grid.flat()) {
      v = 0.3 * rng.normal();
    }
  }

  std::vector<std::vector<TokenId>> captions(2);
  for (std::size_t k = 0; k < captions.size(); ++k) {
    for (std::size_t t = 0; t < 2 + k; ++t) {
      captions[k].push_back(static_cast<TokenId>(4 + rng.below(cfg.vocab_size - 4)));
    }
    captions[k].push_back(Vocab::kEos);
  }
  const std::uint64_t dropout_seed = rng.fork_seed();

  // The objective is centred on the log-probabilities at the unperturbed
  // point. Same gradient, but its value stays near zero, so the difference
  // f(x+ε) − f(x−ε) is not limited by the ulp of a large f.
  std::vector<std::vector<double>> centre;
  {
    Rng dropout(dropout_seed);
    for (const auto& cap : captions) {
      centre.push_back(model.forward(visual, cap, &dropout).logprobs);
    }
  }
  const GradcheckObjective xe = [&](bool accumulate) {
    Rng dropout(dropout_seed);
    double total = 0.0;
    for (std::size_t k = 0; k < captions.size(); ++k) {
      const auto trace = model.forward(visual, captions[k], &dropout);
      for (std::size_t t = 0; t < trace.logprobs.size(); ++t) {
        total -= trace.logprobs[t] - centre[k][t];
      }
      if (accumulate) {
        const std::vector<double> w(captions[k].size(), 1.0);
        model.backward(trace, w);
      }
    }
    return total;
  };
  GradcheckResult worst = finite_diff_gradcheck(xe, model.params(), epsilon);

  // Baseline regression with the decoder states held fixed, matching the
  // stop-gradient of backward_baseline.
  const double reward = 0.7;
  Rng dropout(dropout_seed);
  const auto frozen = model.forward(visual, captions.front(), &dropout);
  const auto& w = model.params().at("baseline.w").value;
  const auto& b = model.params().at("baseline.b").value;
  const GradcheckObjective base = [&](bool accumulate) {
    double sq = 0.0;
    for (const auto& s : frozen.steps) {
      double pred = b[0];
      for (std::size_t i = 0; i < s.gru2.h.size(); ++i) {
        pred += w[i] * s.gru2.h[i];
      }
      sq += (pred - reward) * (pred - reward);
    }
    if (accumulate) {
      auto trace = frozen;
      for (auto& s : trace.steps) {
        s.baseline = b[0];
        for (std::size_t i = 0; i < s.gru2.h.size(); ++i) {
          s.baseline += w[i] * s.gru2.h[i];
        }
      }
      model.backward_baseline(trace, reward);
    }
    return sq / static_cast<double>(frozen.steps.size());
  };
  const GradcheckResult head = finite_diff_gradcheck(base, model.params(), epsilon);
  if (head.max_rel_error > worst.max_rel_error) {
    const std::size_t n = worst.entries_checked;
    worst = head;
    worst.entries_checked = n;
  }
  return worst;
}

std::vector<GradcheckCell> model_gradcheck_suite(std::uint64_t seed, double epsilon) {
  std::vector<GradcheckCell> out;
  for (const auto att : {AttentionMode::pooled, AttentionMode::mha}) {
    for (const auto bot : {BottleneckMode::linear, BottleneckMode::deep_gru}) {
      for (const bool tied : {true, false}) {
        GradcheckCell cell;
        cell.config = gradcheck_config(att, bot, tied);
        cell.label = fmt::format("{}/{}/{}", to_string(att), to_string(bot), tied ? "tied" : "untied");
        cell.result = model_gradcheck(cell.config, seed, epsilon);
        out.push_back(std::move(cell));
      }
    }
  }
  return out;
}

} // namespace lightcap
