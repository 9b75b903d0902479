#pragma once

#include <cmath>
#include <span>
#include <vector>

#include "lightcap/ops.hpp"
#include "lightcap/tensor.hpp"

namespace lightcap {

/// One GRU block with the gate layout
///
///   z = σ(in_z + U_zᵀh + b_z)
///   r = σ(in_r + U_rᵀh + b_r)
///   ĥ = tanh(in_h + r ⊙ (Uᵀh) + b_h)
///   h' = (1 − z) ⊙ ĥ + z ⊙ h
///
/// The gate inputs are either W_zᵀx, W_rᵀx, Wᵀx (input weights present) or the
/// same vector x for all three gates (input weights null).
template <typename T>
struct GruBlock {
  Parameter<T>* wz = nullptr;
  Parameter<T>* wr = nullptr;
  Parameter<T>* wh = nullptr;
  Parameter<T>* uz = nullptr;
  Parameter<T>* ur = nullptr;
  Parameter<T>* uh = nullptr;
  Parameter<T>* bz = nullptr;
  Parameter<T>* br = nullptr;
  Parameter<T>* bh = nullptr;

  bool has_input_weights() const noexcept { return wz != nullptr; }
};

template <typename T>
struct GruCache {
  std::vector<T> input;
  std::vector<T> h_prev;
  std::vector<T> z;
  std::vector<T> r;
  std::vector<T> u;  // Uᵀh_prev, before the reset gate
  std::vector<T> h_hat;
  std::vector<T> h;
};

/// The gate arithmetic on precomputed input contributions.
template <typename T>
void gru_cell(std::span<const T> pre_z, std::span<const T> pre_r, std::span<const T> pre_h,
              std::span<const T> h_prev, const GruBlock<T>& blk, GruCache<T>& c) {
  const std::size_t n = h_prev.size();
  if (pre_z.size() != n || pre_r.size() != n || pre_h.size() != n || blk.uz->value.rows() != n ||
      blk.uz->value.cols() != n) {
    throw ShapeError(fmt::format("gru_cell: gate inputs {}/{}/{} with hidden {} and U {}",
                                 pre_z.size(), pre_r.size(), pre_h.size(), n,
                                 blk.uz->value.shape_string()));
  }
  c.h_prev.assign(h_prev.begin(), h_prev.end());
  c.z.assign(pre_z.begin(), pre_z.end());
  c.r.assign(pre_r.begin(), pre_r.end());
  c.u.assign(n, T{0});
  gemv_t_acc<T>(blk.uz->value, h_prev, c.z);
  gemv_t_acc<T>(blk.ur->value, h_prev, c.r);
  gemv_t_acc<T>(blk.uh->value, h_prev, c.u);
  c.h_hat.resize(n);
  c.h.resize(n);
  const auto bz = blk.bz->value.flat();
  const auto br = blk.br->value.flat();
  const auto bh = blk.bh->value.flat();
  for (std::size_t i = 0; i < n; ++i) {
    c.z[i] = sigmoid(c.z[i] + bz[i]);
    c.r[i] = sigmoid(c.r[i] + br[i]);
    c.h_hat[i] = std::tanh(pre_h[i] + c.r[i] * c.u[i] + bh[i]);
    c.h[i] = (T{1} - c.z[i]) * c.h_hat[i] + c.z[i] * h_prev[i];
  }
}

template <typename T>
void gru_forward(const GruBlock<T>& blk, std::span<const T> input, std::span<const T> h_prev,
                 GruCache<T>& c) {
  c.input.assign(input.begin(), input.end());
  if (!blk.has_input_weights()) {
    gru_cell<T>(input, input, input, h_prev, blk, c);
    return;
  }
  const std::size_t n = h_prev.size();
  std::vector<T> pz(n, T{0}), pr(n, T{0}), ph(n, T{0});
  if (blk.wz->value.rows() != input.size()) {
    throw ShapeError(fmt::format("gru_forward: input of length {} for W {}", input.size(),
                                 blk.wz->value.shape_string()));
  }
  gemv_t_acc<T>(blk.wz->value, input, pz);
  gemv_t_acc<T>(blk.wr->value, input, pr);
  gemv_t_acc<T>(blk.wh->value, input, ph);
  gru_cell<T>(pz, pr, ph, h_prev, blk, c);
}

/// Backpropagates dh through one block. Accumulates weight gradients and adds
/// into d_input (length of the block input) and d_hprev.
template <typename T>
void gru_backward(GruBlock<T>& blk, const GruCache<T>& c, std::span<const T> dh,
                  std::span<T> d_input, std::span<T> d_hprev) {
  const std::size_t n = c.h.size();
  std::vector<T> da_z(n), da_r(n), da_h(n), du(n);
  for (std::size_t i = 0; i < n; ++i) {
    const T dh_hat = dh[i] * (T{1} - c.z[i]);
    const T dz = dh[i] * (c.h_prev[i] - c.h_hat[i]);
    d_hprev[i] += dh[i] * c.z[i];
    da_h[i] = dh_hat * (T{1} - c.h_hat[i] * c.h_hat[i]);
    const T dr = da_h[i] * c.u[i];
    du[i] = da_h[i] * c.r[i];
    da_r[i] = dr * c.r[i] * (T{1} - c.r[i]);
    da_z[i] = dz * c.z[i] * (T{1} - c.z[i]);
  }
  const std::span<const T> hp(c.h_prev);
  outer_acc<T>(hp, da_z, blk.uz->grad);
  outer_acc<T>(hp, da_r, blk.ur->grad);
  outer_acc<T>(hp, du, blk.uh->grad);
  gemv_acc<T>(blk.uz->value, da_z, d_hprev);
  gemv_acc<T>(blk.ur->value, da_r, d_hprev);
  gemv_acc<T>(blk.uh->value, du, d_hprev);
  auto gbz = blk.bz->grad.flat();
  auto gbr = blk.br->grad.flat();
  auto gbh = blk.bh->grad.flat();
  for (std::size_t i = 0; i < n; ++i) {
    gbz[i] += da_z[i];
    gbr[i] += da_r[i];
    gbh[i] += da_h[i];
  }
  if (!blk.has_input_weights()) {
    for (std::size_t i = 0; i < n; ++i) {
      d_input[i] += da_z[i] + da_r[i] + da_h[i];
    }
    return;
  }
  const std::span<const T> in(c.input);
  outer_acc<T>(in, da_z, blk.wz->grad);
  outer_acc<T>(in, da_r, blk.wr->grad);
  outer_acc<T>(in, da_h, blk.wh->grad);
  gemv_acc<T>(blk.wz->value, da_z, d_input);
  gemv_acc<T>(blk.wr->value, da_r, d_input);
  gemv_acc<T>(blk.wh->value, da_h, d_input);
}

} // namespace lightcap
