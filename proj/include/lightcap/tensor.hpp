#pragma once

#include <algorithm>
#include <cstddef>
#include <cstdint>
#include <initializer_list>
#include <memory>
#include <span>
#include <string>
#include <unordered_map>
#include <vector>

#include <fmt/format.h>

#include "lightcap/error.hpp"

namespace lightcap {

/// Dense row-major matrix. Vectors are 1×n tensors or plain std::vector.
template <typename T>
class Tensor2D {
public:
  using value_type = T;

  Tensor2D() = default;

  Tensor2D(std::size_t rows, std::size_t cols, T fill = T{0})
      : rows_(rows), cols_(cols), data_(rows * cols, fill) {}

  Tensor2D(std::size_t rows, std::size_t cols, std::vector<T> data)
      : rows_(rows), cols_(cols), data_(std::move(data)) {
    if (data_.size() != rows_ * cols_) {
      throw ShapeError(fmt::format("tensor data length {} does not match shape {}x{}", data_.size(),
                                   rows_, cols_));
    }
  }

  static Tensor2D from_rows(std::initializer_list<std::initializer_list<T>> rows) {
    const std::size_t r = rows.size();
    const std::size_t c = r == 0 ? 0 : rows.begin()->size();
    std::vector<T> data;
    data.reserve(r * c);
    for (const auto& row : rows) {
      if (row.size() != c) {
        throw ShapeError("ragged initializer for Tensor2D");
      }
      data.insert(data.end(), row.begin(), row.end());
    }
    return Tensor2D(r, c, std::move(data));
  }

  std::size_t rows() const noexcept { return rows_; }
  std::size_t cols() const noexcept { return cols_; }
  std::size_t size() const noexcept { return data_.size(); }
  bool empty() const noexcept { return data_.empty(); }

  T& operator()(std::size_t r, std::size_t c) noexcept { return data_[r * cols_ + c]; }
  const T& operator()(std::size_t r, std::size_t c) const noexcept { return data_[r * cols_ + c]; }

  T& operator[](std::size_t i) noexcept { return data_[i]; }
  const T& operator[](std::size_t i) const noexcept { return data_[i]; }

  std::span<T> row(std::size_t r) noexcept { return {data_.data() + r * cols_, cols_}; }
  std::span<const T> row(std::size_t r) const noexcept { return {data_.data() + r * cols_, cols_}; }

  std::span<T> flat() noexcept { return data_; }
  std::span<const T> flat() const noexcept { return data_; }

  T* data() noexcept { return data_.data(); }
  const T* data() const noexcept { return data_.data(); }

  void fill(T v) { std::fill(data_.begin(), data_.end(), v); }

  bool same_shape(const Tensor2D& o) const noexcept { return rows_ == o.rows_ && cols_ == o.cols_; }

  std::string shape_string() const { return fmt::format("{}x{}", rows_, cols_); }

  template <typename U>
  Tensor2D<U> cast() const {
    std::vector<U> out(data_.begin(), data_.end());
    return Tensor2D<U>(rows_, cols_, std::move(out));
  }

  friend bool operator==(const Tensor2D& a, const Tensor2D& b) {
    return a.rows_ == b.rows_ && a.cols_ == b.cols_ && a.data_ == b.data_;
  }

private:
  std::size_t rows_ = 0;
  std::size_t cols_ = 0;
  std::vector<T> data_;
};

/// A learned tensor with its gradient accumulator and ADAM moments.
template <typename T>
struct Parameter {
  std::string name;
  Tensor2D<T> value;
  Tensor2D<T> grad;
  Tensor2D<T> adam_m;
  Tensor2D<T> adam_v;
  std::uint64_t step_count = 0;

  Parameter(std::string n, std::size_t rows, std::size_t cols)
      : name(std::move(n)), value(rows, cols), grad(rows, cols), adam_m(rows, cols),
        adam_v(rows, cols) {}

  std::size_t size() const noexcept { return value.size(); }
  void zero_grad() { grad.fill(T{0}); }
};

/// Ordered collection of uniquely named parameters with stable addresses.
template <typename T>
class ParameterSet {
public:
  Parameter<T>& add(const std::string& name, std::size_t rows, std::size_t cols) {
    if (index_.contains(name)) {
      throw ValidationError(fmt::format("duplicate parameter name '{}'", name));
    }
    index_.emplace(name, params_.size());
    params_.push_back(std::make_unique<Parameter<T>>(name, rows, cols));
    return *params_.back();
  }

  Parameter<T>* find(const std::string& name) noexcept {
    auto it = index_.find(name);
    return it == index_.end() ? nullptr : params_[it->second].get();
  }
  const Parameter<T>* find(const std::string& name) const noexcept {
    auto it = index_.find(name);
    return it == index_.end() ? nullptr : params_[it->second].get();
  }

  Parameter<T>& at(const std::string& name) {
    auto* p = find(name);
    if (p == nullptr) {
      throw ValidationError(fmt::format("unknown parameter '{}'", name));
    }
    return *p;
  }

  std::size_t count() const noexcept { return params_.size(); }
  Parameter<T>& operator[](std::size_t i) noexcept { return *params_[i]; }
  const Parameter<T>& operator[](std::size_t i) const noexcept { return *params_[i]; }

  auto begin() noexcept { return params_.begin(); }
  auto end() noexcept { return params_.end(); }
  auto begin() const noexcept { return params_.begin(); }
  auto end() const noexcept { return params_.end(); }

  std::size_t scalar_count() const noexcept {
    std::size_t n = 0;
    for (const auto& p : params_) {
      n += p->size();
    }
    return n;
  }

  void zero_grad() {
    for (auto& p : params_) {
      p->zero_grad();
    }
  }

  void scale_grad(T factor) {
    for (auto& p : params_) {
      for (auto& g : p->grad.flat()) {
        g *= factor;
      }
    }
  }

private:
  std::vector<std::unique_ptr<Parameter<T>>> params_;
  std::unordered_map<std::string, std::size_t> index_;
};

} // namespace lightcap
