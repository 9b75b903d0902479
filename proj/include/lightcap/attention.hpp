#pragma once

#include <cmath>
#include <span>
#include <vector>

#include "lightcap/ops.hpp"
#include "lightcap/tensor.hpp"

namespace lightcap {

// ---------------------------------------------------------------------------
// Pooled attention: c = h' ⊙ tanh(W_imgᵀ V)

/// tanh(W_imgᵀ V). Computed once per image; it is also the initial hidden state.
template <typename T>
std::vector<T> visual_gate(const Tensor2D<T>& w_img, std::span<const T> pooled) {
  if (pooled.size() != w_img.rows()) {
    throw ShapeError(fmt::format("visual feature of length {} for image projection {}",
                                 pooled.size(), w_img.shape_string()));
  }
  std::vector<T> g = matvec_t(w_img, pooled);
  for (auto& v : g) {
    v = std::tanh(v);
  }
  return g;
}

template <typename T>
std::vector<T> attend_pooled(std::span<const T> h_mid, std::span<const T> gate) {
  if (h_mid.size() != gate.size()) {
    throw ShapeError(fmt::format("attend_pooled: query {} vs gate {}", h_mid.size(), gate.size()));
  }
  std::vector<T> c(h_mid.size());
  for (std::size_t i = 0; i < c.size(); ++i) {
    c[i] = h_mid[i] * gate[i];
  }
  return c;
}

// ---------------------------------------------------------------------------
// Multi-head scaled dot-product attention over a grid of region features.

template <typename T>
struct MhaParams {
  std::vector<Parameter<T>*> query;  // hidden × dq, one per head
  std::vector<Parameter<T>*> key;    // key_dim × dq
  std::vector<Parameter<T>*> value;  // key_dim × dq
  Parameter<T>* out = nullptr;       // (heads·dq) × hidden

  std::size_t heads() const noexcept { return query.size(); }
  std::size_t dq() const noexcept { return query.front()->value.cols(); }
};

/// Per-head projected keys and values of one image (regions × dq each).
template <typename T>
struct MhaMemory {
  const Tensor2D<T>* features = nullptr;
  std::vector<Tensor2D<T>> keys;
  std::vector<Tensor2D<T>> values;
};

template <typename T>
struct MhaStepCache {
  std::vector<std::vector<T>> q;
  std::vector<std::vector<T>> weights;
  std::vector<T> concat;
};

template <typename T>
MhaMemory<T> mha_project_memory(const MhaParams<T>& p, const Tensor2D<T>& features) {
  if (features.cols() != p.key.front()->value.rows() || features.rows() == 0) {
    throw ShapeError(fmt::format("attend_mha: feature grid {} does not match key projection {}",
                                 features.shape_string(), p.key.front()->value.shape_string()));
  }
  MhaMemory<T> mem;
  mem.features = &features;
  for (std::size_t k = 0; k < p.heads(); ++k) {
    mem.keys.push_back(matmul(features, p.key[k]->value));
    mem.values.push_back(matmul(features, p.value[k]->value));
  }
  return mem;
}

template <typename T>
std::vector<T> attend_mha(const MhaParams<T>& p, const MhaMemory<T>& mem, std::span<const T> h_mid,
                          MhaStepCache<T>* cache = nullptr) {
  const std::size_t dq = p.dq();
  const T scale = T{1} / std::sqrt(static_cast<T>(dq));
  MhaStepCache<T> local;
  MhaStepCache<T>& c = cache != nullptr ? *cache : local;
  c.q.assign(p.heads(), {});
  c.weights.assign(p.heads(), {});
  c.concat.assign(p.heads() * dq, T{0});
  for (std::size_t k = 0; k < p.heads(); ++k) {
    c.q[k] = matvec_t(p.query[k]->value, h_mid);
    const auto& keys = mem.keys[k];
    auto& w = c.weights[k];
    w.assign(keys.rows(), T{0});
    for (std::size_t r = 0; r < keys.rows(); ++r) {
      T s{0};
      const auto krow = keys.row(r);
      for (std::size_t j = 0; j < dq; ++j) {
        s += krow[j] * c.q[k][j];
      }
      w[r] = s * scale;
    }
    softmax_inplace<T>(w);
    std::span<T> head(c.concat.data() + k * dq, dq);
    gemv_t_acc<T>(mem.values[k], w, head);
  }
  return matvec_t(p.out->value, std::span<const T>(c.concat));
}

/// Memory gradients accumulated over all steps of a sequence.
template <typename T>
struct MhaMemoryGrad {
  std::vector<Tensor2D<T>> keys;
  std::vector<Tensor2D<T>> values;

  explicit MhaMemoryGrad(const MhaMemory<T>& mem) {
    for (const auto& k : mem.keys) {
      keys.emplace_back(k.rows(), k.cols());
    }
    for (const auto& v : mem.values) {
      values.emplace_back(v.rows(), v.cols());
    }
  }
};

template <typename T>
void attend_mha_backward(MhaParams<T>& p, const MhaMemory<T>& mem, std::span<const T> h_mid,
                         const MhaStepCache<T>& c, std::span<const T> dc, std::span<T> dh_mid,
                         MhaMemoryGrad<T>& dmem) {
  const std::size_t dq = p.dq();
  const T scale = T{1} / std::sqrt(static_cast<T>(dq));
  std::vector<T> dconcat(c.concat.size(), T{0});
  gemv_acc<T>(p.out->value, dc, dconcat);
  outer_acc<T>(c.concat, dc, p.out->grad);
  for (std::size_t k = 0; k < p.heads(); ++k) {
    const std::span<const T> dhead(dconcat.data() + k * dq, dq);
    const auto& w = c.weights[k];
    outer_acc<T>(w, dhead, dmem.values[k]);
    std::vector<T> dw(w.size(), T{0});
    gemv_acc<T>(mem.values[k], dhead, dw);
    std::vector<T> ds(w.size(), T{0});
    softmax_backward<T>(w, dw, ds);
    for (auto& v : ds) {
      v *= scale;
    }
    std::vector<T> dq_vec(dq, T{0});
    gemv_t_acc<T>(mem.keys[k], ds, dq_vec);
    outer_acc<T>(ds, c.q[k], dmem.keys[k]);
    gemv_acc<T>(p.query[k]->value, dq_vec, dh_mid);
    outer_acc<T>(h_mid, dq_vec, p.query[k]->grad);
  }
}

/// Pushes the accumulated memory gradients into the key/value projections.
template <typename T>
void mha_memory_backward(MhaParams<T>& p, const MhaMemory<T>& mem, const MhaMemoryGrad<T>& dmem) {
  for (std::size_t k = 0; k < p.heads(); ++k) {
    matmul_backward<T>(*mem.features, p.key[k]->value, dmem.keys[k], nullptr, &p.key[k]->grad);
    matmul_backward<T>(*mem.features, p.value[k]->value, dmem.values[k], nullptr,
                       &p.value[k]->grad);
  }
}

} // namespace lightcap
