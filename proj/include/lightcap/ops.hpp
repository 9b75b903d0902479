#pragma once

#include <algorithm>
#include <cmath>
#include <cstddef>
#include <limits>
#include <span>
#include <vector>

#include <fmt/format.h>

#include "lightcap/error.hpp"
#include "lightcap/rng.hpp"
#include "lightcap/tensor.hpp"

namespace lightcap {

// ---------------------------------------------------------------------------
// Matrix products

template <typename T>
Tensor2D<T> matmul(const Tensor2D<T>& a, const Tensor2D<T>& b) {
  if (a.cols() != b.rows()) {
    throw ShapeError(
        fmt::format("matmul shape mismatch: {} x {}", a.shape_string(), b.shape_string()));
  }
  Tensor2D<T> out(a.rows(), b.cols());
  for (std::size_t i = 0; i < a.rows(); ++i) {
    auto orow = out.row(i);
    for (std::size_t k = 0; k < a.cols(); ++k) {
      const T aik = a(i, k);
      if (aik == T{0}) {
        continue;
      }
      auto brow = b.row(k);
      for (std::size_t j = 0; j < b.cols(); ++j) {
        orow[j] += aik * brow[j];
      }
    }
  }
  return out;
}

/// Accumulates da += dout·bᵀ and db += aᵀ·dout. Either target may be null.
template <typename T>
void matmul_backward(const Tensor2D<T>& a, const Tensor2D<T>& b, const Tensor2D<T>& dout,
                     Tensor2D<T>* da, Tensor2D<T>* db) {
  if (dout.rows() != a.rows() || dout.cols() != b.cols()) {
    throw ShapeError(fmt::format("matmul_backward: upstream {} does not match {} x {}",
                                 dout.shape_string(), a.shape_string(), b.shape_string()));
  }
  if (da != nullptr) {
    for (std::size_t i = 0; i < a.rows(); ++i) {
      auto grow = dout.row(i);
      for (std::size_t k = 0; k < a.cols(); ++k) {
        auto brow = b.row(k);
        T acc{0};
        for (std::size_t j = 0; j < b.cols(); ++j) {
          acc += grow[j] * brow[j];
        }
        (*da)(i, k) += acc;
      }
    }
  }
  if (db != nullptr) {
    for (std::size_t i = 0; i < a.rows(); ++i) {
      auto grow = dout.row(i);
      for (std::size_t k = 0; k < a.cols(); ++k) {
        const T aik = a(i, k);
        auto dbrow = db->row(k);
        for (std::size_t j = 0; j < b.cols(); ++j) {
          dbrow[j] += aik * grow[j];
        }
      }
    }
  }
}

/// y += Wᵀ·x for a weight stored input-major (in × out).
template <typename T>
void gemv_t_acc(const Tensor2D<T>& w, std::span<const T> x, std::span<T> y) {
  for (std::size_t i = 0; i < w.rows(); ++i) {
    const T xi = x[i];
    if (xi == T{0}) {
      continue;
    }
    const T* wrow = w.data() + i * w.cols();
    for (std::size_t j = 0; j < w.cols(); ++j) {
      y[j] += xi * wrow[j];
    }
  }
}

/// dx += W·dy: input gradient of gemv_t_acc.
template <typename T>
void gemv_acc(const Tensor2D<T>& w, std::span<const T> dy, std::span<T> dx) {
  for (std::size_t i = 0; i < w.rows(); ++i) {
    const T* wrow = w.data() + i * w.cols();
    T acc{0};
    for (std::size_t j = 0; j < w.cols(); ++j) {
      acc += wrow[j] * dy[j];
    }
    dx[i] += acc;
  }
}

/// dW += x·dyᵀ: weight gradient of gemv_t_acc.
template <typename T>
void outer_acc(std::span<const T> x, std::span<const T> dy, Tensor2D<T>& dw) {
  for (std::size_t i = 0; i < dw.rows(); ++i) {
    const T xi = x[i];
    if (xi == T{0}) {
      continue;
    }
    T* grow = dw.data() + i * dw.cols();
    for (std::size_t j = 0; j < dw.cols(); ++j) {
      grow[j] += xi * dy[j];
    }
  }
}

template <typename T>
std::vector<T> matvec_t(const Tensor2D<T>& w, std::span<const T> x) {
  if (x.size() != w.rows()) {
    throw ShapeError(
        fmt::format("matvec: weight {} applied to vector of length {}", w.shape_string(), x.size()));
  }
  std::vector<T> y(w.cols(), T{0});
  gemv_t_acc<T>(w, x, y);
  return y;
}

// ---------------------------------------------------------------------------
// Activations

enum class Activation { sigmoid, tanh };

template <typename T>
T sigmoid(T x) noexcept {
  if (x >= T{0}) {
    return T{1} / (T{1} + std::exp(-x));
  }
  const T e = std::exp(x);
  return e / (T{1} + e);
}

template <typename T>
Tensor2D<T> activations(const Tensor2D<T>& x, Activation kind) {
  Tensor2D<T> out(x.rows(), x.cols());
  for (std::size_t i = 0; i < x.size(); ++i) {
    out[i] = kind == Activation::sigmoid ? sigmoid(x[i]) : std::tanh(x[i]);
  }
  return out;
}

/// Derivative expressed through the forward output y: σ' = y(1−y), tanh' = 1−y².
template <typename T>
Tensor2D<T> activation_grad_from_output(const Tensor2D<T>& y, Activation kind) {
  Tensor2D<T> out(y.rows(), y.cols());
  for (std::size_t i = 0; i < y.size(); ++i) {
    out[i] = kind == Activation::sigmoid ? y[i] * (T{1} - y[i]) : T{1} - y[i] * y[i];
  }
  return out;
}

// ---------------------------------------------------------------------------
// Softmax

template <typename T>
void softmax_inplace(std::span<T> v) {
  if (v.empty()) {
    return;
  }
  const T mx = *std::max_element(v.begin(), v.end());
  T sum{0};
  for (auto& x : v) {
    x = std::exp(x - mx);
    sum += x;
  }
  for (auto& x : v) {
    x /= sum;
  }
}

template <typename T>
Tensor2D<T> softmax_rows(const Tensor2D<T>& x) {
  Tensor2D<T> out = x;
  for (std::size_t r = 0; r < out.rows(); ++r) {
    softmax_inplace(out.row(r));
  }
  return out;
}

/// Backward through a softmax row: dx = p ⊙ (dp − ⟨dp, p⟩).
template <typename T>
void softmax_backward(std::span<const T> p, std::span<const T> dp, std::span<T> dx) {
  T dot{0};
  for (std::size_t i = 0; i < p.size(); ++i) {
    dot += dp[i] * p[i];
  }
  for (std::size_t i = 0; i < p.size(); ++i) {
    dx[i] += p[i] * (dp[i] - dot);
  }
}

template <typename T>
std::size_t argmax(std::span<const T> v) {
  std::size_t best = 0;
  for (std::size_t i = 1; i < v.size(); ++i) {
    if (v[i] > v[best]) {
      best = i;
    }
  }
  return best;
}

// ---------------------------------------------------------------------------
// Sampling

inline constexpr double kProbabilitySumTolerance = 1e-5;

/// Draws index i with probability p[i]. Exactly one uniform is consumed per call.
template <typename T>
std::size_t sample_categorical(std::span<const T> p, Rng& rng) {
  if (p.empty()) {
    throw ValidationError("sample_categorical: empty distribution");
  }
  double total = 0.0;
  for (const T x : p) {
    if (!(x >= T{0})) {
      throw ValidationError("sample_categorical: negative or NaN probability");
    }
    total += static_cast<double>(x);
  }
  if (std::abs(total - 1.0) > kProbabilitySumTolerance) {
    throw ValidationError(fmt::format("sample_categorical: probabilities sum to {}", total));
  }
  const double u = rng.uniform() * total;
  double acc = 0.0;
  std::size_t last_positive = 0;
  for (std::size_t i = 0; i < p.size(); ++i) {
    if (p[i] > T{0}) {
      last_positive = i;
      acc += static_cast<double>(p[i]);
      if (u < acc) {
        return i;
      }
    }
  }
  return last_positive;
}

} // namespace lightcap
