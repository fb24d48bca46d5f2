// Copyright 2026 The oadtr Authors.
//
// Licensed under the Apache License, Version 2.0 (the "License");
// you may not use this file except in compliance with the License.
// You may obtain a copy of the License at
//
//     http://www.apache.org/licenses/LICENSE-2.0
//
// Unless required by applicable law or agreed to in writing, software
// distributed under the License is distributed on an "AS IS" BASIS,
// WITHOUT WARRANTIES OR CONDITIONS OF ANY KIND, either express or implied.
// See the License for the specific language governing permissions and
// limitations under the License.

#pragma once

#include <algorithm>
#include <atomic>
#include <cstddef>
#include <cstdint>
#include <functional>
#include <memory>
#include <numeric>
#include <span>
#include <string>
#include <utility>
#include <vector>

#include "oadtr/errors.hpp"

namespace oadtr {

using Shape = std::vector<std::size_t>;

inline std::size_t shape_numel(const Shape& shape) {
  return std::accumulate(shape.begin(), shape.end(), std::size_t{1}, std::multiplies<>{});
}

namespace detail {

inline std::uint64_t next_node_id() {
  static std::atomic<std::uint64_t> counter{0};
  return ++counter;
}

template <typename T>
struct TensorNode {
  Shape shape;
  std::vector<T> data;
  // Empty until a gradient reaches this node during backward.
  std::vector<T> grad;
  bool requires_grad = false;
  std::uint64_t id = next_node_id();
};

template <typename T>
using NodePtr = std::shared_ptr<TensorNode<T>>;

}  // namespace detail

/// Dense row-major tensor. Copies share storage (handle semantics), which is
/// what lets the computation record refer back to the tensors it produced.
template <typename T>
class Tensor {
 public:
  using value_type = T;

  Tensor() = default;

  explicit Tensor(Shape shape, T fill = T{0}) : node_(std::make_shared<detail::TensorNode<T>>()) {
    node_->data.assign(shape_numel(shape), fill);
    node_->shape = std::move(shape);
  }

  Tensor(Shape shape, std::vector<T> values) : node_(std::make_shared<detail::TensorNode<T>>()) {
    if (values.size() != shape_numel(shape)) {
      throw DimensionError("tensor data length " + std::to_string(values.size()) +
                           " does not match shape " + detail::shape_string(shape));
    }
    node_->shape = std::move(shape);
    node_->data = std::move(values);
  }

  static Tensor scalar(T value) { return Tensor(Shape{}, std::vector<T>{value}); }

  /// Leaf tensor that collects gradients.
  static Tensor parameter(Shape shape, std::vector<T> values) {
    Tensor t(std::move(shape), std::move(values));
    t.node_->requires_grad = true;
    return t;
  }

  bool defined() const noexcept { return static_cast<bool>(node_); }
  std::uint64_t id() const noexcept { return node_->id; }

  const Shape& shape() const noexcept { return node_->shape; }
  std::size_t rank() const noexcept { return node_->shape.size(); }
  std::size_t dim(std::size_t i) const { return node_->shape.at(i); }
  std::size_t numel() const noexcept { return node_->data.size(); }
  std::size_t rows() const { return rank() == 0 ? 1 : node_->shape.front(); }
  std::size_t cols() const { return rank() < 2 ? numel() : node_->shape.back(); }

  std::span<const T> data() const noexcept { return node_->data; }
  std::span<T> mutable_data() noexcept { return node_->data; }
  const std::vector<T>& values() const noexcept { return node_->data; }

  T operator[](std::size_t i) const { return node_->data[i]; }
  T at(std::size_t r, std::size_t c) const { return node_->data[r * cols() + c]; }

  /// Value of a single-element tensor.
  T item() const {
    if (numel() != 1) {
      throw ContractError("item() on tensor of shape " + detail::shape_string(shape()));
    }
    return node_->data.front();
  }

  bool requires_grad() const noexcept { return node_->requires_grad; }
  void set_requires_grad(bool on) noexcept { node_->requires_grad = on; }

  bool has_grad() const noexcept { return !node_->grad.empty(); }
  std::span<const T> grad() const noexcept { return node_->grad; }
  std::span<T> mutable_grad() noexcept { return node_->grad; }
  void zero_grad() noexcept {
    node_->grad.clear();
  }

  /// Deep copy without gradient state.
  Tensor clone() const {
    Tensor t(shape(), node_->data);
    t.node_->requires_grad = node_->requires_grad;
    return t;
  }

  const detail::NodePtr<T>& node() const noexcept { return node_; }

 private:
  detail::NodePtr<T> node_;
};

/// Ordered log of the primitive ops executed while it is active. Ops append
/// themselves when at least one input requires a gradient; backward replays
/// the log in reverse, so each op runs its rule exactly once after every op
/// that consumed its output.
template <typename T>
class ComputationRecord {
 public:
  struct Op {
    const char* name;
    std::vector<std::uint64_t> input_ids;
    std::uint64_t output_id;
    detail::NodePtr<T> output;
    std::function<void()> backward;
  };

  ComputationRecord() = default;
  ComputationRecord(const ComputationRecord&) = delete;
  ComputationRecord& operator=(const ComputationRecord&) = delete;

  /// The record ops on this thread write to, or nullptr.
  static ComputationRecord*& current() noexcept {
    thread_local ComputationRecord* active = nullptr;
    return active;
  }

  /// Activates a record for the lifetime of the guard.
  class Scope {
   public:
    explicit Scope(ComputationRecord& record) : previous_(current()) { current() = &record; }
    ~Scope() { current() = previous_; }
    Scope(const Scope&) = delete;
    Scope& operator=(const Scope&) = delete;

   private:
    ComputationRecord* previous_;
  };

  void append(Op op) { ops_.push_back(std::move(op)); }

  const std::vector<Op>& ops() const noexcept { return ops_; }
  std::size_t size() const noexcept { return ops_.size(); }
  void clear() noexcept { ops_.clear(); }

  /// Seeds d(loss)/d(loss) = 1 and runs every recorded backward rule in
  /// reverse execution order. Ops whose output never received a gradient are
  /// skipped, so parameters off the loss path keep an empty grad.
  void backward(const Tensor<T>& loss) {
    if (loss.numel() != 1 || loss.rank() > 1) {
      throw ContractError("backward requires a scalar root, got shape " +
                          detail::shape_string(loss.shape()));
    }
    auto& root = loss.node()->grad;
    if (root.empty()) root.assign(1, T{0});
    root[0] += T{1};
    for (auto it = ops_.rbegin(); it != ops_.rend(); ++it) {
      if (it->output->grad.empty()) continue;
      it->backward();
    }
  }

 private:
  std::vector<Op> ops_;
};

namespace detail {

/// Gradient buffer of a node, allocated on first touch. Nodes that do not
/// require a gradient yield an empty span.
template <typename T>
std::span<T> grad_buffer(const NodePtr<T>& node) {
  if (!node->requires_grad) return {};
  if (node->grad.empty()) node->grad.assign(node->data.size(), T{0});
  return node->grad;
}

template <typename T>
bool any_requires_grad(std::initializer_list<const Tensor<T>*> inputs) {
  return std::any_of(inputs.begin(), inputs.end(),
                     [](const Tensor<T>* t) { return t->requires_grad(); });
}

/// Appends `rule` to the active record when gradients are needed. The rule
/// receives the output node's gradient.
template <typename T, typename Rule>
void record_op(const char* name, std::initializer_list<const Tensor<T>*> inputs, Tensor<T>& out,
               Rule&& rule) {
  auto* record = ComputationRecord<T>::current();
  if (record == nullptr || !any_requires_grad<T>(inputs)) return;
  out.set_requires_grad(true);
  std::vector<std::uint64_t> ids;
  ids.reserve(inputs.size());
  for (const auto* t : inputs) ids.push_back(t->id());
  NodePtr<T> out_node = out.node();
  TensorNode<T>* raw = out_node.get();
  record->append({name, std::move(ids), raw->id, out_node,
                  [raw, rule = std::forward<Rule>(rule)]() mutable {
                    rule(std::span<const T>(raw->grad));
                  }});
}

}  // namespace detail

/// Convenience: run `loss.backward()` on the active record.
template <typename T>
void backward(const Tensor<T>& loss) {
  auto* record = ComputationRecord<T>::current();
  if (record == nullptr) throw ContractError("backward called with no active computation record");
  record->backward(loss);
}

}  // namespace oadtr
