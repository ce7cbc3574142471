#pragma once

// Dense multi-index arrays, index signatures and evaluated d-tensors.

#include <array>
#include <cstddef>
#include <initializer_list>
#include <span>
#include <string>
#include <utility>
#include <vector>

#include "jetkcc/errors.hpp"
#include "jetkcc/expr.hpp"

namespace jetkcc {

/// Row-major array with a runtime shape.
template <class T>
class Array {
 public:
  Array() = default;
  explicit Array(std::vector<int> shape, T fill = T{}) : shape_(std::move(shape)) {
    std::size_t count = 1;
    for (int e : shape_) {
      if (e < 0) throw PreconditionError("negative array extent");
      count *= static_cast<std::size_t>(e);
    }
    data_.assign(count, fill);
  }

  const std::vector<int>& shape() const { return shape_; }
  int rank() const { return static_cast<int>(shape_.size()); }
  std::size_t size() const { return data_.size(); }

  std::size_t offset(std::span<const int> idx) const {
    if (idx.size() != shape_.size()) throw PreconditionError("array rank mismatch");
    std::size_t off = 0;
    for (std::size_t k = 0; k < idx.size(); ++k) {
      if (idx[k] < 0 || idx[k] >= shape_[k]) throw PreconditionError("array index out of range");
      off = off * static_cast<std::size_t>(shape_[k]) + static_cast<std::size_t>(idx[k]);
    }
    return off;
  }

  T& at(std::span<const int> idx) { return data_[offset(idx)]; }
  const T& at(std::span<const int> idx) const { return data_[offset(idx)]; }

  template <class... I>
  T& operator()(I... idx) {
    const std::array<int, sizeof...(I)> ix{static_cast<int>(idx)...};
    return at(ix);
  }
  template <class... I>
  const T& operator()(I... idx) const {
    const std::array<int, sizeof...(I)> ix{static_cast<int>(idx)...};
    return at(ix);
  }

  std::span<T> flat() & { return data_; }
  std::span<const T> flat() const& { return data_; }
  // A span into a temporary would dangle, e.g. in a range-for.
  std::span<const T> flat() const&& = delete;

  /// Multi-index of flat position `k`.
  std::vector<int> index_of(std::size_t k) const {
    std::vector<int> idx(shape_.size());
    for (std::size_t d = shape_.size(); d-- > 0;) {
      idx[d] = static_cast<int>(k % static_cast<std::size_t>(shape_[d]));
      k /= static_cast<std::size_t>(shape_[d]);
    }
    return idx;
  }

 private:
  std::vector<int> shape_;
  std::vector<T> data_;
};

using ExprArray = Array<Expression>;
using NumArray = Array<double>;

/// Evaluates every component of `a` at `b` with one compiled tape.
NumArray evaluate(const ExprArray& a, const Bindings& b);

/// A compiled ExprArray for repeated evaluation at many points.
class CompiledArray {
 public:
  CompiledArray() = default;
  explicit CompiledArray(const ExprArray& a);
  NumArray evaluate(const Bindings& b) const;
  const std::vector<int>& shape() const { return shape_; }

 private:
  std::vector<int> shape_;
  Tape tape_;
};

enum class IndexKind { temporal, spatial };
enum class Variance { upper, lower };

struct IndexSlot {
  IndexKind kind;
  Variance variance;
  std::string name;  // for reports, e.g. "alpha" or "i"

  friend bool operator==(const IndexSlot&, const IndexSlot&) = default;
};

/// Ordered slots of a d-tensor. Jet pairs (spatial-upper with temporal-lower,
/// or spatial-lower with temporal-upper) group two slots that act as one
/// index; each slot still transforms with its own Jacobian factor.
class IndexSignature {
 public:
  IndexSignature() = default;
  IndexSignature(std::vector<IndexSlot> slots, std::vector<std::pair<int, int>> pairs = {});

  const std::vector<IndexSlot>& slots() const { return slots_; }
  const std::vector<std::pair<int, int>>& pairs() const { return pairs_; }
  int rank() const { return static_cast<int>(slots_.size()); }
  std::vector<int> extents(int m, int n) const;

  friend bool operator==(const IndexSignature&, const IndexSignature&) = default;

 private:
  std::vector<IndexSlot> slots_;
  std::vector<std::pair<int, int>> pairs_;
};

inline IndexSlot temporal_up(std::string name) { return {IndexKind::temporal, Variance::upper, std::move(name)}; }
inline IndexSlot temporal_down(std::string name) { return {IndexKind::temporal, Variance::lower, std::move(name)}; }
inline IndexSlot spatial_up(std::string name) { return {IndexKind::spatial, Variance::upper, std::move(name)}; }
inline IndexSlot spatial_down(std::string name) { return {IndexKind::spatial, Variance::lower, std::move(name)}; }

/// Numeric components of a d-tensor at one point.
struct DTensorValue {
  IndexSignature signature;
  NumArray values;

  /// Throws unless the array extents match the signature for (m, n).
  void validate(int m, int n) const;
};

}  // namespace jetkcc
