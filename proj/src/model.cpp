#include "lightcap/model.hpp"

#include <cmath>

#include <fmt/format.h>

namespace lightcap {

std::vector<ParamShape> parameter_shapes(const ModelConfig& cfg) {
  cfg.validate();
  const std::size_t d = cfg.emb_dim();
  const std::size_t h = cfg.hidden_dim();
  const std::size_t vocab = cfg.vocab_size;
  std::vector<ParamShape> s;
  auto gate_biases = [&](const std::string& prefix) {
    for (const char* g : {"bz", "br", "bh"}) {
      s.push_back({prefix + "." + g, 1, h, ParamInit::zero});
    }
  };

  s.push_back({"embedding", vocab, d, ParamInit::embedding});
  s.push_back({"x_proj", d, h, ParamInit::fan_in});

  for (const char* g : {"uz", "ur", "uh"}) {
    s.push_back({std::string("gru1.") + g, h, h, ParamInit::fan_in});
  }
  gate_biases("gru1");

  s.push_back({"img_proj", cfg.v_dim, h, ParamInit::fan_in});

  if (cfg.attention_mode == AttentionMode::mha) {
    const std::size_t dq = cfg.query_dim();
    for (std::size_t k = 0; k < cfg.mha_heads; ++k) {
      s.push_back({fmt::format("mha.query{}", k), h, dq, ParamInit::fan_in});
      s.push_back({fmt::format("mha.key{}", k), cfg.mha_key_dim, dq, ParamInit::fan_in});
      s.push_back({fmt::format("mha.value{}", k), cfg.mha_key_dim, dq, ParamInit::fan_in});
    }
    s.push_back({"mha.out", cfg.mha_heads * dq, h, ParamInit::fan_in});
  }

  for (const char* g : {"wz", "wr", "wh", "uz", "ur", "uh"}) {
    s.push_back({std::string("gru2.") + g, h, h, ParamInit::fan_in});
  }
  gate_biases("gru2");

  const std::size_t concat = d + 2 * h;
  if (cfg.bottleneck_mode == BottleneckMode::linear) {
    s.push_back({"bottleneck", concat, cfg.bottleneck_dim(), ParamInit::fan_in});
  } else {
    for (const char* g : {"wz", "wr", "wh"}) {
      s.push_back({std::string("gru3.") + g, concat, h, ParamInit::fan_in});
    }
    for (const char* g : {"uz", "ur", "uh"}) {
      s.push_back({std::string("gru3.") + g, h, h, ParamInit::fan_in});
    }
    gate_biases("gru3");
    s.push_back({"shrink", h, cfg.bottleneck_dim(), ParamInit::fan_in});
  }

  if (!cfg.tie_weights) {
    s.push_back({"out_proj", vocab, cfg.bottleneck_dim(), ParamInit::embedding});
  }

  s.push_back({"baseline.w", h, 1, ParamInit::fan_in});
  s.push_back({"baseline.b", 1, 1, ParamInit::zero});
  return s;
}

ParamCount count_params(const ModelConfig& cfg) {
  ParamCount out;
  out.entries = parameter_shapes(cfg);
  for (const auto& e : out.entries) {
    out.total += e.size();
  }
  return out;
}

template <typename T>
CaptionModel<T>::CaptionModel(const ModelConfig& cfg) : cfg_(cfg) {
  for (const auto& shape : parameter_shapes(cfg_)) {
    params_.add(shape.name, shape.rows, shape.cols);
  }
  auto get = [&](const std::string& n) { return &params_.at(n); };
  auto gru = [&](const std::string& prefix, bool with_input) {
    GruBlock<T> b;
    if (with_input) {
      b.wz = get(prefix + ".wz");
      b.wr = get(prefix + ".wr");
      b.wh = get(prefix + ".wh");
    }
    b.uz = get(prefix + ".uz");
    b.ur = get(prefix + ".ur");
    b.uh = get(prefix + ".uh");
    b.bz = get(prefix + ".bz");
    b.br = get(prefix + ".br");
    b.bh = get(prefix + ".bh");
    return b;
  };
  embedding_ = get("embedding");
  x_proj_ = get("x_proj");
  img_proj_ = get("img_proj");
  gru1_ = gru("gru1", false);
  gru2_ = gru("gru2", true);
  if (cfg_.attention_mode == AttentionMode::mha) {
    for (std::size_t k = 0; k < cfg_.mha_heads; ++k) {
      mha_.query.push_back(get(fmt::format("mha.query{}", k)));
      mha_.key.push_back(get(fmt::format("mha.key{}", k)));
      mha_.value.push_back(get(fmt::format("mha.value{}", k)));
    }
    mha_.out = get("mha.out");
  }
  if (cfg_.bottleneck_mode == BottleneckMode::linear) {
    bottleneck_ = get("bottleneck");
  } else {
    gru3_ = gru("gru3", true);
    shrink_ = get("shrink");
  }
  out_ = cfg_.tie_weights ? embedding_ : get("out_proj");
  baseline_w_ = get("baseline.w");
  baseline_b_ = get("baseline.b");
}

template <typename T>
void CaptionModel<T>::init_weights(Rng& rng) {
  const auto shapes = parameter_shapes(cfg_);
  for (std::size_t i = 0; i < shapes.size(); ++i) {
    auto& p = params_[i];
    double k = 0.0;
    switch (shapes[i].init) {
      case ParamInit::zero:
        k = 0.0;
        break;
      case ParamInit::embedding:
        k = 0.08;
        break;
      case ParamInit::fan_in:
        k = 1.0 / std::sqrt(static_cast<double>(shapes[i].rows));
        break;
    }
    for (auto& v : p.value.flat()) {
      v = k == 0.0 ? T{0} : static_cast<T>(rng.uniform(-k, k));
    }
  }
}

template <typename T>
const T* CaptionModel<T>::embedding_row(TokenId id) const {
  if (id < 0 || static_cast<std::size_t>(id) >= cfg_.vocab_size) {
    throw IndexError(fmt::format("token id {} outside vocabulary of size {}", id, cfg_.vocab_size));
  }
  return embedding_->value.row(static_cast<std::size_t>(id)).data();
}

template <typename T>
VisualContext<T> CaptionModel<T>::encode_visual(const VisualInput<T>& input) const {
  if (input.pooled.size() != cfg_.v_dim) {
    throw ShapeError(fmt::format("visual feature length {} but v_dim is {}", input.pooled.size(),
                                 cfg_.v_dim));
  }
  VisualContext<T> ctx;
  ctx.input = &input;
  ctx.gate = visual_gate<T>(img_proj_->value, input.pooled);
  if (cfg_.attention_mode == AttentionMode::mha) {
    ctx.memory = mha_project_memory(mha_, input.grid);
  }
  return ctx;
}

template <typename T>
std::vector<T> CaptionModel<T>::embed_prev(TokenId y_prev) const {
  const std::span<const T> e(embedding_row(y_prev), cfg_.emb_dim());
  return matvec_t(x_proj_->value, e);
}

template <typename T>
std::vector<T> CaptionModel<T>::bottleneck(std::span<const T> y_prev_emb, std::span<const T> h_mid,
                                           std::span<const T> c, std::span<const T> h) const {
  std::vector<T> in;
  in.reserve(y_prev_emb.size() + 2 * h.size());
  in.insert(in.end(), y_prev_emb.begin(), y_prev_emb.end());
  if (cfg_.bottleneck_mode == BottleneckMode::linear) {
    in.insert(in.end(), h.begin(), h.end());
    in.insert(in.end(), c.begin(), c.end());
    return matvec_t(bottleneck_->value, std::span<const T>(in));
  }
  in.insert(in.end(), h_mid.begin(), h_mid.end());
  in.insert(in.end(), c.begin(), c.end());
  GruCache<T> g;
  gru_forward<T>(gru3_, in, h, g);
  return matvec_t(shrink_->value, std::span<const T>(g.h));
}

template <typename T>
std::vector<T> CaptionModel<T>::output_distribution(std::span<const T> b) const {
  if (b.size() != out_->value.cols()) {
    throw ShapeError(fmt::format("bottleneck of length {} for output projection {}", b.size(),
                                 out_->value.shape_string()));
  }
  std::vector<T> logits(out_->value.rows(), T{0});
  gemv_acc<T>(out_->value, b, logits);
  softmax_inplace<T>(logits);
  return logits;
}

template <typename T>
void CaptionModel<T>::forward_step(const VisualContext<T>& ctx, TokenId y_prev,
                                   std::span<const T> h_prev, StepCache<T>& s,
                                   Rng* dropout_rng) const {
  const std::size_t d = cfg_.emb_dim();
  const std::size_t h = cfg_.hidden_dim();
  if (h_prev.size() != h) {
    throw ShapeError(fmt::format("hidden state of length {} but hidden size is {}", h_prev.size(), h));
  }
  s.y_prev = y_prev;
  const T* erow = embedding_row(y_prev);
  s.e.assign(erow, erow + d);
  s.x.assign(h, T{0});
  gemv_t_acc<T>(x_proj_->value, s.e, s.x);

  gru_forward<T>(gru1_, s.x, h_prev, s.gru1);
  const std::span<const T> h_mid(s.gru1.h);

  if (cfg_.attention_mode == AttentionMode::pooled) {
    s.c = attend_pooled<T>(h_mid, ctx.gate);
  } else {
    s.c = attend_mha<T>(mha_, ctx.memory, h_mid, &s.mha);
  }

  gru_forward<T>(gru2_, s.c, h_mid, s.gru2);
  const std::span<const T> h_t(s.gru2.h);

  s.bottleneck_in.clear();
  s.bottleneck_in.reserve(d + 2 * h);
  s.bottleneck_in.insert(s.bottleneck_in.end(), s.e.begin(), s.e.end());
  if (cfg_.bottleneck_mode == BottleneckMode::linear) {
    s.bottleneck_in.insert(s.bottleneck_in.end(), h_t.begin(), h_t.end());
    s.bottleneck_in.insert(s.bottleneck_in.end(), s.c.begin(), s.c.end());
    s.b_pre_dropout = matvec_t(bottleneck_->value, std::span<const T>(s.bottleneck_in));
  } else {
    s.bottleneck_in.insert(s.bottleneck_in.end(), h_mid.begin(), h_mid.end());
    s.bottleneck_in.insert(s.bottleneck_in.end(), s.c.begin(), s.c.end());
    gru_forward<T>(gru3_, s.bottleneck_in, h_t, s.gru3);
    s.b_pre_dropout = matvec_t(shrink_->value, std::span<const T>(s.gru3.h));
  }

  s.b = s.b_pre_dropout;
  s.mask.clear();
  if (dropout_rng != nullptr && cfg_.dropout_p > 0.0) {
    const T keep_scale = static_cast<T>(1.0 / (1.0 - cfg_.dropout_p));
    s.mask.resize(s.b.size());
    for (std::size_t i = 0; i < s.b.size(); ++i) {
      s.mask[i] = dropout_rng->uniform() < cfg_.dropout_p ? T{0} : keep_scale;
      s.b[i] *= s.mask[i];
    }
  }

  s.p.assign(out_->value.rows(), T{0});
  gemv_acc<T>(out_->value, s.b, s.p);
  softmax_inplace<T>(s.p);

  T base = baseline_b_->value[0];
  for (std::size_t i = 0; i < h; ++i) {
    base += baseline_w_->value[i] * h_t[i];
  }
  s.baseline = base;
}

template <typename T>
DecoderState<T> CaptionModel<T>::step(const VisualContext<T>& ctx, TokenId y_prev,
                                      std::span<const T> h_prev) const {
  StepCache<T> s;
  forward_step(ctx, y_prev, h_prev, s, nullptr);
  DecoderState<T> st;
  st.h_prev.assign(h_prev.begin(), h_prev.end());
  st.h_mid = std::move(s.gru1.h);
  st.c = std::move(s.c);
  st.x = std::move(s.x);
  st.b = std::move(s.b);
  st.p = std::move(s.p);
  st.h = std::move(s.gru2.h);
  return st;
}

template <typename T>
SequenceTrace<T> CaptionModel<T>::forward(const VisualInput<T>& input,
                                          std::span<const TokenId> targets, Rng* dropout_rng) const {
  SequenceTrace<T> tr;
  tr.ctx = encode_visual(input);
  tr.targets.assign(targets.begin(), targets.end());
  tr.steps.resize(targets.size());
  tr.logprobs.resize(targets.size());
  std::vector<T> h = tr.ctx.gate;
  TokenId y_prev = Vocab::kBos;
  for (std::size_t t = 0; t < targets.size(); ++t) {
    const TokenId y = targets[t];
    if (y < 0 || static_cast<std::size_t>(y) >= cfg_.vocab_size) {
      throw IndexError(fmt::format("target id {} outside vocabulary of size {}", y, cfg_.vocab_size));
    }
    auto& s = tr.steps[t];
    forward_step(tr.ctx, y_prev, h, s, dropout_rng);
    tr.logprobs[t] = std::log(std::max(s.p[static_cast<std::size_t>(y)],
                                       std::numeric_limits<T>::min()));
    h = s.gru2.h;
    y_prev = y;
  }
  return tr;
}

template <typename T>
void CaptionModel<T>::backward(const SequenceTrace<T>& tr, std::span<const T> step_weights) {
  if (step_weights.size() != tr.steps.size()) {
    throw ShapeError(fmt::format("backward: {} step weights for {} steps", step_weights.size(),
                                 tr.steps.size()));
  }
  const std::size_t d = cfg_.emb_dim();
  const std::size_t h = cfg_.hidden_dim();
  const std::span<const T> gate(tr.ctx.gate);
  std::vector<T> dgate(h, T{0});
  std::vector<T> dh_next(h, T{0});
  std::vector<MhaMemoryGrad<T>> dmem;
  if (cfg_.attention_mode == AttentionMode::mha) {
    dmem.emplace_back(tr.ctx.memory);
  }

  std::vector<T> dlogits, db, dbot_in, de, dh_t, dh_mid, dc, dx, dh_prev, dg3;
  for (std::size_t ti = tr.steps.size(); ti-- > 0;) {
    const auto& s = tr.steps[ti];
    const T w = step_weights[ti];

    // logits = W_out b; d(−log p_y)/dlogits = p − onehot(y)
    dlogits.assign(s.p.begin(), s.p.end());
    dlogits[static_cast<std::size_t>(tr.targets[ti])] -= T{1};
    for (auto& v : dlogits) {
      v *= w;
    }
    db.assign(s.b.size(), T{0});
    gemv_t_acc<T>(out_->value, dlogits, db);
    outer_acc<T>(dlogits, s.b, out_->grad);
    if (!s.mask.empty()) {
      for (std::size_t i = 0; i < db.size(); ++i) {
        db[i] *= s.mask[i];
      }
    }

    dbot_in.assign(s.bottleneck_in.size(), T{0});
    dh_t = dh_next;
    dh_mid.assign(h, T{0});
    dc.assign(h, T{0});
    de.assign(d, T{0});
    if (cfg_.bottleneck_mode == BottleneckMode::linear) {
      gemv_acc<T>(bottleneck_->value, db, dbot_in);
      outer_acc<T>(s.bottleneck_in, db, bottleneck_->grad);
      for (std::size_t i = 0; i < h; ++i) {
        dh_t[i] += dbot_in[d + i];
        dc[i] += dbot_in[d + h + i];
      }
    } else {
      dg3.assign(h, T{0});
      gemv_acc<T>(shrink_->value, db, dg3);
      outer_acc<T>(s.gru3.h, db, shrink_->grad);
      gru_backward<T>(gru3_, s.gru3, dg3, dbot_in, dh_t);
      for (std::size_t i = 0; i < h; ++i) {
        dh_mid[i] += dbot_in[d + i];
        dc[i] += dbot_in[d + h + i];
      }
    }
    for (std::size_t i = 0; i < d; ++i) {
      de[i] += dbot_in[i];
    }

    gru_backward<T>(gru2_, s.gru2, dh_t, dc, dh_mid);

    const std::span<const T> h_mid(s.gru1.h);
    if (cfg_.attention_mode == AttentionMode::pooled) {
      for (std::size_t i = 0; i < h; ++i) {
        dh_mid[i] += dc[i] * gate[i];
        dgate[i] += dc[i] * h_mid[i];
      }
    } else {
      attend_mha_backward<T>(mha_, tr.ctx.memory, h_mid, s.mha, dc, dh_mid, dmem.front());
    }

    dx.assign(h, T{0});
    dh_prev.assign(h, T{0});
    gru_backward<T>(gru1_, s.gru1, dh_mid, dx, dh_prev);

    gemv_acc<T>(x_proj_->value, dx, de);
    outer_acc<T>(s.e, dx, x_proj_->grad);
    auto erow = embedding_->grad.row(static_cast<std::size_t>(s.y_prev));
    for (std::size_t i = 0; i < d; ++i) {
      erow[i] += de[i];
    }
    dh_next = dh_prev;
  }

  // h_0 is the visual gate itself.
  for (std::size_t i = 0; i < h; ++i) {
    dgate[i] += dh_next[i];
    dgate[i] *= T{1} - gate[i] * gate[i];
  }
  outer_acc<T>(tr.ctx.input->pooled, dgate, img_proj_->grad);
  if (cfg_.attention_mode == AttentionMode::mha) {
    mha_memory_backward<T>(mha_, tr.ctx.memory, dmem.front());
  }
}

template <typename T>
void CaptionModel<T>::backward_baseline(const SequenceTrace<T>& tr, T reward, T weight) {
  if (tr.steps.empty()) {
    return;
  }
  const T scale = T{2} * weight / static_cast<T>(tr.steps.size());
  auto gw = baseline_w_->grad.flat();
  for (const auto& s : tr.steps) {
    const T coef = scale * (s.baseline - reward);
    for (std::size_t i = 0; i < gw.size(); ++i) {
      gw[i] += coef * s.gru2.h[i];
    }
    baseline_b_->grad[0] += coef;
  }
}

template <typename T>
std::vector<Tensor2D<T>> CaptionModel<T>::snapshot() const {
  std::vector<Tensor2D<T>> out;
  out.reserve(params_.count());
  for (const auto& p : params_) {
    out.push_back(p->value);
  }
  return out;
}

template <typename T>
void CaptionModel<T>::restore(const std::vector<Tensor2D<T>>& values) {
  if (values.size() != params_.count()) {
    throw ValidationError("restore: snapshot does not match parameter set");
  }
  for (std::size_t i = 0; i < values.size(); ++i) {
    if (!values[i].same_shape(params_[i].value)) {
      throw ShapeError(fmt::format("restore: '{}' expects {}, got {}", params_[i].name,
                                   params_[i].value.shape_string(), values[i].shape_string()));
    }
    params_[i].value = values[i];
  }
}

template class CaptionModel<float>;
template class CaptionModel<double>;

} // namespace lightcap
