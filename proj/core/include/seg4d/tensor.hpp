#pragma once

#include <algorithm>
#include <cstdint>
#include <functional>
#include <memory>
#include <span>
#include <string>
#include <utility>
#include <vector>

#include "seg4d/error.hpp"

namespace seg4d {

using Shape = std::vector<std::int64_t>;

std::int64_t numel(const Shape& shape);
std::string to_string(const Shape& shape);

// Dense row-major array with an optional gradient buffer.
//
// Tensor is a shared handle: copies alias the same storage, which is what lets
// the tape hold on to activations and accumulate gradients into them. Use
// clone() for an independent copy. The canonical training layout is
// (batch, channel, X, Y, Z, T) with T varying fastest.
template <typename T>
class Tensor {
 public:
  Tensor() = default;

  explicit Tensor(Shape shape, bool requires_grad = false)
      : storage_(std::make_shared<Storage>()) {
    for (auto extent : shape) {
      if (extent <= 0) {
        throw Error(ErrorCode::kInvalidArgument,
                    "tensor extents must be positive, got " + seg4d::to_string(shape));
      }
    }
    storage_->data.assign(static_cast<std::size_t>(seg4d::numel(shape)), T{0});
    storage_->shape = std::move(shape);
    storage_->requires_grad = requires_grad;
  }

  Tensor(Shape shape, std::vector<T> values, bool requires_grad = false)
      : Tensor(std::move(shape), requires_grad) {
    if (values.size() != storage_->data.size()) {
      throw Error(ErrorCode::kShapeMismatch,
                  "value count " + std::to_string(values.size()) + " does not match shape " +
                      seg4d::to_string(storage_->shape));
    }
    storage_->data = std::move(values);
  }

  static Tensor full(Shape shape, T value, bool requires_grad = false) {
    Tensor t(std::move(shape), requires_grad);
    std::fill(t.storage_->data.begin(), t.storage_->data.end(), value);
    return t;
  }

  static Tensor scalar(T value, bool requires_grad = false) {
    return full(Shape{1}, value, requires_grad);
  }

  bool defined() const noexcept { return storage_ != nullptr; }
  const Shape& shape() const { return storage_->shape; }
  std::size_t rank() const { return storage_->shape.size(); }
  std::int64_t dim(std::size_t axis) const { return storage_->shape.at(axis); }
  std::int64_t numel() const { return static_cast<std::int64_t>(storage_->data.size()); }

  std::span<T> data() const { return storage_->data; }
  T item() const {
    if (storage_->data.size() != 1) {
      throw Error(ErrorCode::kShapeMismatch, "item() on non-scalar tensor " + seg4d::to_string(shape()));
    }
    return storage_->data[0];
  }

  bool requires_grad() const { return storage_->requires_grad; }
  void set_requires_grad(bool value) const { storage_->requires_grad = value; }

  bool has_grad() const { return !storage_->grad.empty(); }
  std::span<T> grad() const { return storage_->grad; }

  // Allocates a zero gradient on first use.
  std::span<T> ensure_grad() const {
    if (storage_->grad.empty()) storage_->grad.assign(storage_->data.size(), T{0});
    return storage_->grad;
  }
  void zero_grad() const {
    std::fill(storage_->grad.begin(), storage_->grad.end(), T{0});
  }
  void clear_grad() const {
    storage_->grad.clear();
    storage_->grad.shrink_to_fit();
  }

  Tensor clone() const {
    Tensor copy(shape(), storage_->data, false);
    return copy;
  }

  bool same_as(const Tensor& other) const noexcept { return storage_ == other.storage_; }

 private:
  struct Storage {
    Shape shape;
    std::vector<T> data;
    std::vector<T> grad;
    bool requires_grad = false;
  };
  std::shared_ptr<Storage> storage_;
};

template <typename T, typename U>
Tensor<U> cast(const Tensor<T>& src, bool requires_grad = false) {
  std::vector<U> values(src.data().begin(), src.data().end());
  return Tensor<U>(src.shape(), std::move(values), requires_grad);
}

// Records primitive applications so gradients can be replayed in reverse.
//
// backward() consumes the tape; call reset() before reusing it. Gradients are
// accumulated additively, so a tensor that feeds several ops receives the sum.
template <typename T>
class Tape {
 public:
  using BackwardFn = std::function<void()>;

  void record(std::string op, Tensor<T> output, BackwardFn fn) {
    entries_.push_back(Entry{std::move(op), std::move(output), std::move(fn)});
  }

  void backward(const Tensor<T>& loss) {
    if (consumed_) {
      throw Error(ErrorCode::kBackwardTwice, "backward already ran on this tape; call reset() first");
    }
    if (!loss.defined() || loss.numel() != 1) {
      throw Error(ErrorCode::kShapeMismatch, "backward requires a scalar loss");
    }
    bool produced_here = false;
    for (const auto& e : entries_) {
      if (e.output.same_as(loss)) {
        produced_here = true;
        break;
      }
    }
    if (!loss.requires_grad() || !produced_here) {
      throw Error(ErrorCode::kDetachedGraph, "loss was not produced by an op recorded on this tape");
    }
    loss.ensure_grad()[0] += T{1};
    for (auto it = entries_.rbegin(); it != entries_.rend(); ++it) {
      if (it->output.has_grad()) it->backward();
    }
    consumed_ = true;
  }

  void reset() {
    entries_.clear();
    consumed_ = false;
  }

  std::size_t size() const noexcept { return entries_.size(); }
  bool consumed() const noexcept { return consumed_; }

  std::vector<std::string> op_names() const {
    std::vector<std::string> names;
    names.reserve(entries_.size());
    for (const auto& e : entries_) names.push_back(e.op);
    return names;
  }

 private:
  struct Entry {
    std::string op;
    Tensor<T> output;
    BackwardFn backward;
  };
  std::vector<Entry> entries_;
  bool consumed_ = false;
};

// True when an op applied to these inputs has to be recorded.
template <typename T, typename... Ts>
bool needs_grad(const Tape<T>* tape, const Ts&... inputs) {
  if (tape == nullptr) return false;
  return ((inputs.defined() && inputs.requires_grad()) || ...);
}

}  // namespace seg4d
