#pragma once

#include <cmath>
#include <concepts>
#include <cstdint>
#include <cstring>
#include <initializer_list>
#include <limits>
#include <random>
#include <span>
#include <utility>
#include <vector>

#include "attnkit/common.hpp"

namespace attnkit {

// Dense row-major tensor. The scalar type selects the precision mode:
// double is the wide (64-bit) mode, float the narrow (32-bit) one. All
// reductions accumulate in double and run in a fixed left-to-right order,
// so results are bitwise reproducible.
template <std::floating_point T>
class Tensor {
 public:
  Tensor() = default;

  explicit Tensor(std::vector<std::int64_t> shape)
      : shape_(std::move(shape)), data_(checked_numel(shape_), T{0}) {}

  Tensor(std::vector<std::int64_t> shape, std::vector<T> data)
      : shape_(std::move(shape)), data_(std::move(data)) {
    if (checked_numel(shape_) != static_cast<std::int64_t>(data_.size()))
      throw ShapeError("tensor: data length does not match shape");
  }

  static Tensor full(std::vector<std::int64_t> shape, T value) {
    Tensor t(std::move(shape));
    for (auto& x : t.data_) x = value;
    return t;
  }

  static Tensor identity(std::int64_t n) {
    Tensor t({n, n});
    for (std::int64_t i = 0; i < n; ++i) t.data_[i * n + i] = T{1};
    return t;
  }

  // Uniform values in [lo, hi), reproducible from the seed alone.
  static Tensor random_uniform(std::vector<std::int64_t> shape,
                               std::uint64_t seed, T lo = T{-1}, T hi = T{1}) {
    Tensor t(std::move(shape));
    std::mt19937_64 rng(seed);
    std::uniform_real_distribution<double> dist(static_cast<double>(lo),
                                                static_cast<double>(hi));
    for (auto& x : t.data_) x = static_cast<T>(dist(rng));
    return t;
  }

  const std::vector<std::int64_t>& shape() const { return shape_; }
  std::int64_t extent(std::size_t dim) const { return shape_.at(dim); }
  std::size_t rank() const { return shape_.size(); }
  std::int64_t size() const { return static_cast<std::int64_t>(data_.size()); }

  std::span<T> data() { return data_; }
  std::span<const T> data() const { return data_; }

  T& operator[](std::int64_t flat) { return data_[static_cast<std::size_t>(flat)]; }
  T operator[](std::int64_t flat) const { return data_[static_cast<std::size_t>(flat)]; }

  template <typename... Ix>
  T& operator()(Ix... ix) {
    return data_[flat_index({static_cast<std::int64_t>(ix)...})];
  }
  template <typename... Ix>
  T operator()(Ix... ix) const {
    return data_[flat_index({static_cast<std::int64_t>(ix)...})];
  }

  std::int64_t flat_index(std::initializer_list<std::int64_t> ix) const {
    if (ix.size() != shape_.size())
      throw ShapeError("tensor: index rank mismatch");
    std::int64_t flat = 0;
    std::size_t d = 0;
    for (std::int64_t i : ix) {
      if (i < 0 || i >= shape_[d]) throw ShapeError("tensor: index out of range");
      flat = flat * shape_[d] + i;
      ++d;
    }
    return flat;
  }

  // Same data, new shape metadata; the element count must be preserved.
  Tensor reshaped(std::vector<std::int64_t> shape) const {
    if (checked_numel(shape) != size())
      throw ShapeError("reshape: element count mismatch");
    return Tensor(std::move(shape), data_);
  }

  bool same_shape(const Tensor& o) const { return shape_ == o.shape_; }

  static std::int64_t checked_numel(const std::vector<std::int64_t>& shape) {
    std::int64_t n = 1;
    for (std::int64_t e : shape) {
      if (e < 0) throw ShapeError("tensor: negative extent");
      if (e != 0 && n > std::numeric_limits<std::int64_t>::max() / e)
        throw ShapeError("tensor: extent product overflow");
      n *= e;
    }
    return n;
  }

 private:
  std::vector<std::int64_t> shape_;
  std::vector<T> data_;
};

using TensorD = Tensor<double>;
using TensorF = Tensor<float>;

// Read-only strided window into a tensor. Views compose: a view of a view
// addresses the same parent elements as the directly offset view.
template <std::floating_point T>
class BlockView {
 public:
  BlockView(const Tensor<T>& parent, std::vector<std::int64_t> offsets,
            std::vector<std::int64_t> extents)
      : parent_(&parent), offsets_(std::move(offsets)), extents_(std::move(extents)) {
    const auto& shape = parent.shape();
    if (offsets_.size() != shape.size() || extents_.size() != shape.size())
      throw ShapeError("block_view: rank mismatch");
    for (std::size_t d = 0; d < shape.size(); ++d) {
      if (offsets_[d] < 0 || extents_[d] < 0 || offsets_[d] + extents_[d] > shape[d])
        throw ShapeError("block_view: window out of bounds");
    }
  }

  const std::vector<std::int64_t>& extents() const { return extents_; }

  template <typename... Ix>
  T operator()(Ix... ix) const {
    return at({static_cast<std::int64_t>(ix)...});
  }

  T at(std::initializer_list<std::int64_t> ix) const {
    if (ix.size() != extents_.size()) throw ShapeError("block_view: index rank mismatch");
    std::int64_t flat = 0;
    std::size_t d = 0;
    for (std::int64_t i : ix) {
      if (i < 0 || i >= extents_[d]) throw ShapeError("block_view: index out of range");
      flat = flat * parent_->extent(d) + offsets_[d] + i;
      ++d;
    }
    return (*parent_)[flat];
  }

  BlockView view(std::vector<std::int64_t> offsets, std::vector<std::int64_t> extents) const {
    if (offsets.size() != offsets_.size() || extents.size() != extents_.size())
      throw ShapeError("block_view: rank mismatch");
    for (std::size_t d = 0; d < offsets.size(); ++d) {
      if (offsets[d] < 0 || extents[d] < 0 || offsets[d] + extents[d] > extents_[d])
        throw ShapeError("block_view: window out of bounds");
      offsets[d] += offsets_[d];
    }
    return BlockView(*parent_, std::move(offsets), std::move(extents));
  }

  Tensor<T> to_tensor() const {
    Tensor<T> out(extents_);
    std::vector<std::int64_t> ix(extents_.size(), 0);
    for (std::int64_t flat = 0; flat < out.size(); ++flat) {
      std::int64_t src = 0;
      for (std::size_t d = 0; d < ix.size(); ++d)
        src = src * parent_->extent(d) + offsets_[d] + ix[d];
      out[flat] = (*parent_)[src];
      for (std::size_t d = ix.size(); d-- > 0;) {
        if (++ix[d] < extents_[d]) break;
        ix[d] = 0;
      }
    }
    return out;
  }

 private:
  const Tensor<T>* parent_;
  std::vector<std::int64_t> offsets_;
  std::vector<std::int64_t> extents_;
};

template <std::floating_point T>
BlockView<T> block_view(const Tensor<T>& t, std::vector<std::int64_t> offsets,
                        std::vector<std::int64_t> extents) {
  return BlockView<T>(t, std::move(offsets), std::move(extents));
}

// c[i][j] = sum_k a[i][k] * b[k][j], accumulated in double with a fixed
// left-to-right k order.
template <std::floating_point T>
Tensor<T> matmul(const Tensor<T>& a, const Tensor<T>& b) {
  if (a.rank() != 2 || b.rank() != 2) throw ShapeError("matmul: rank-2 operands required");
  const std::int64_t m = a.extent(0), k = a.extent(1), n = b.extent(1);
  if (b.extent(0) != k) throw ShapeError("matmul: inner extents disagree");
  Tensor<T> c({m, n});
  const auto ad = a.data();
  const auto bd = b.data();
  auto cd = c.data();
  for (std::int64_t i = 0; i < m; ++i) {
    for (std::int64_t j = 0; j < n; ++j) {
      double acc = 0.0;
      for (std::int64_t p = 0; p < k; ++p)
        acc += static_cast<double>(ad[i * k + p]) * static_cast<double>(bd[p * n + j]);
      cd[i * n + j] = static_cast<T>(acc);
    }
  }
  return c;
}

template <std::floating_point T>
Tensor<T> add(const Tensor<T>& a, const Tensor<T>& b) {
  if (!a.same_shape(b)) throw ShapeError("add: shape mismatch");
  Tensor<T> c(a.shape());
  for (std::int64_t i = 0; i < a.size(); ++i) c[i] = a[i] + b[i];
  return c;
}

// Row-wise numerically stabilized softmax. -inf entries are legal and get
// weight 0; a row of all -inf maps to all zeros. NaN input is rejected.
template <std::floating_point T>
Tensor<T> softmax_rows(const Tensor<T>& x) {
  if (x.rank() != 2) throw ShapeError("softmax_rows: rank-2 input required");
  const std::int64_t m = x.extent(0), n = x.extent(1);
  Tensor<T> out({m, n});
  for (std::int64_t i = 0; i < m; ++i) {
    double best = -std::numeric_limits<double>::infinity();
    for (std::int64_t j = 0; j < n; ++j) {
      const double v = static_cast<double>(x(i, j));
      if (std::isnan(v)) throw std::domain_error("softmax_rows: NaN input");
      best = std::max(best, v);
    }
    if (std::isinf(best) && best < 0) continue;  // fully masked row -> zeros
    double sum = 0.0;
    for (std::int64_t j = 0; j < n; ++j)
      sum += std::exp(static_cast<double>(x(i, j)) - best);
    for (std::int64_t j = 0; j < n; ++j)
      out(i, j) = static_cast<T>(std::exp(static_cast<double>(x(i, j)) - best) / sum);
  }
  return out;
}

template <std::floating_point T>
double max_abs_diff(const Tensor<T>& a, const Tensor<T>& b) {
  if (!a.same_shape(b)) throw ShapeError("max_abs_diff: shape mismatch");
  double worst = 0.0;
  for (std::int64_t i = 0; i < a.size(); ++i)
    worst = std::max(worst, std::abs(static_cast<double>(a[i]) - static_cast<double>(b[i])));
  return worst;
}

template <std::floating_point T>
bool bitwise_equal(const Tensor<T>& a, const Tensor<T>& b) {
  if (!a.same_shape(b)) return false;
  return std::memcmp(a.data().data(), b.data().data(),
                     sizeof(T) * static_cast<std::size_t>(a.size())) == 0;
}

}  // namespace attnkit
