#pragma once

#include <cstddef>
#include <span>
#include <string>
#include <vector>

#include "lightcap/attention.hpp"
#include "lightcap/config.hpp"
#include "lightcap/gru.hpp"
#include "lightcap/rng.hpp"
#include "lightcap/tensor.hpp"
#include "lightcap/vocab.hpp"

namespace lightcap {

/// What the decoder sees of an image: the pooled vector V_I, plus a
/// regions × key_dim grid when attention runs in multi-head mode.
template <typename T>
struct VisualInput {
  std::vector<T> pooled;
  Tensor2D<T> grid;
};

/// Per-image quantities computed once before decoding.
template <typename T>
struct VisualContext {
  const VisualInput<T>* input = nullptr;
  std::vector<T> gate;  // tanh(W_imgᵀ V); doubles as h_0
  MhaMemory<T> memory;
};

/// Variables of one decoder timestep.
template <typename T>
struct DecoderState {
  std::vector<T> h_prev;
  std::vector<T> h_mid;  // h'_t
  std::vector<T> c;
  std::vector<T> x;
  std::vector<T> b;
  std::vector<T> p;
  std::vector<T> h;  // h_t, the next step's h_prev
};

template <typename T>
struct StepCache {
  TokenId y_prev = Vocab::kBos;
  std::vector<T> e;
  std::vector<T> x;
  GruCache<T> gru1;
  std::vector<T> c;
  MhaStepCache<T> mha;
  GruCache<T> gru2;
  std::vector<T> bottleneck_in;
  GruCache<T> gru3;
  std::vector<T> b_pre_dropout;
  std::vector<T> mask;  // empty when dropout is off
  std::vector<T> b;
  std::vector<T> p;
  T baseline{0};
};

/// Forward record of one teacher-forced sequence, consumed by backward().
template <typename T>
struct SequenceTrace {
  VisualContext<T> ctx;
  std::vector<TokenId> targets;
  std::vector<StepCache<T>> steps;
  std::vector<T> logprobs;  // log p_t(target_t)

  T logprob_sum() const {
    T s{0};
    for (const T v : logprobs) {
      s += v;
    }
    return s;
  }
  /// Mean of the per-step baseline predictions.
  T mean_baseline() const {
    T s{0};
    for (const auto& st : steps) {
      s += st.baseline;
    }
    return steps.empty() ? T{0} : s / static_cast<T>(steps.size());
  }
};

enum class ParamInit { zero, embedding, fan_in };

struct ParamShape {
  std::string name;
  std::size_t rows = 0;
  std::size_t cols = 0;
  ParamInit init = ParamInit::fan_in;

  std::size_t size() const noexcept { return rows * cols; }
};

/// Every learned matrix present under `cfg`, in storage order.
std::vector<ParamShape> parameter_shapes(const ModelConfig& cfg);

struct ParamCount {
  std::vector<ParamShape> entries;
  std::size_t total = 0;
};

/// Exact trainable scalar count; a tied output projection is counted once.
ParamCount count_params(const ModelConfig& cfg);

/// Conditional-GRU caption decoder.
///
/// Per step t with previous token y:
///   x_t  = W_xᵀ E[y]
///   h'_t = GRU1(x_t, h_{t-1})
///   c_t  = h'_t ⊙ tanh(W_imgᵀ V)            (pooled) or MHA(h'_t, grid)
///   h_t  = GRU2(c_t, h'_t)
///   b_t  = W_botᵀ[E[y]; h_t; c_t]            (linear)
///        = W_shrinkᵀ GRU3([E[y]; h'_t; c_t], h_t)   (deep_gru)
///   p_t  = softmax(E b_t)                     (tied; W_out when untied)
/// with h_0 = tanh(W_imgᵀ V).
template <typename T>
class CaptionModel {
public:
  explicit CaptionModel(const ModelConfig& cfg);

  CaptionModel(const CaptionModel&) = delete;
  CaptionModel& operator=(const CaptionModel&) = delete;
  CaptionModel(CaptionModel&&) noexcept = default;
  CaptionModel& operator=(CaptionModel&&) noexcept = default;

  /// Uniform [−k, k], k = 1/√fan_in for matrices; [−0.08, 0.08] for
  /// embeddings; zero biases.
  void init_weights(Rng& rng);

  const ModelConfig& config() const noexcept { return cfg_; }
  ParameterSet<T>& params() noexcept { return params_; }
  const ParameterSet<T>& params() const noexcept { return params_; }

  /// The matrix producing logits: the embedding itself when weights are tied.
  const Parameter<T>& output_projection() const noexcept { return *out_; }
  const Parameter<T>& embedding() const noexcept { return *embedding_; }

  VisualContext<T> encode_visual(const VisualInput<T>& input) const;
  std::vector<T> init_hidden(const VisualContext<T>& ctx) const { return ctx.gate; }

  /// x_t = W_xᵀ E[y_prev].
  std::vector<T> embed_prev(TokenId y_prev) const;

  /// b_t for already-computed step quantities (no dropout).
  std::vector<T> bottleneck(std::span<const T> y_prev_emb, std::span<const T> h_mid,
                            std::span<const T> c, std::span<const T> h) const;

  /// softmax(W_out b).
  std::vector<T> output_distribution(std::span<const T> b) const;

  /// Evaluation-mode step (no dropout).
  DecoderState<T> step(const VisualContext<T>& ctx, TokenId y_prev, std::span<const T> h_prev) const;

  /// Teacher-forced pass over `targets` (inputs are BOS followed by all but the
  /// last target). Dropout is applied to b_t when `dropout_rng` is given.
  SequenceTrace<T> forward(const VisualInput<T>& input, std::span<const TokenId> targets,
                           Rng* dropout_rng) const;

  /// Accumulates gradients of Σ_t w_t·(−log p_t(target_t)) into the parameters.
  void backward(const SequenceTrace<T>& trace, std::span<const T> step_weights);

  /// Accumulates gradients of weight · mean_t (baseline_t − reward)² into the
  /// baseline head only; the decoder states are treated as constants.
  void backward_baseline(const SequenceTrace<T>& trace, T reward, T weight = T{1});

  /// Copy of all parameter values, for best-checkpoint retention.
  std::vector<Tensor2D<T>> snapshot() const;
  void restore(const std::vector<Tensor2D<T>>& values);

  template <typename U>
  CaptionModel<U> cast() const {
    CaptionModel<U> out(cfg_);
    for (std::size_t i = 0; i < params_.count(); ++i) {
      out.params()[i].value = params_[i].value.template cast<U>();
    }
    return out;
  }

private:
  void forward_step(const VisualContext<T>& ctx, TokenId y_prev, std::span<const T> h_prev,
                    StepCache<T>& cache, Rng* dropout_rng) const;
  const T* embedding_row(TokenId id) const;

  ModelConfig cfg_;
  ParameterSet<T> params_;
  Parameter<T>* embedding_ = nullptr;
  Parameter<T>* x_proj_ = nullptr;
  Parameter<T>* img_proj_ = nullptr;
  Parameter<T>* out_ = nullptr;
  Parameter<T>* bottleneck_ = nullptr;
  Parameter<T>* shrink_ = nullptr;
  Parameter<T>* baseline_w_ = nullptr;
  Parameter<T>* baseline_b_ = nullptr;
  GruBlock<T> gru1_;
  GruBlock<T> gru2_;
  GruBlock<T> gru3_;
  MhaParams<T> mha_;
};

extern template class CaptionModel<float>;
extern template class CaptionModel<double>;

} // namespace lightcap
