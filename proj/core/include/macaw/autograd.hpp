// SPDX-License-Identifier: Apache-2.0
#pragma once

#include <cstddef>
#include <deque>
#include <functional>
#include <map>
#include <span>
#include <string>
#include <string_view>
#include <unordered_map>
#include <vector>

#include "macaw/tensor.hpp"

namespace macaw {

/// Ordered collection of named trainable tensors. Insertion order is the
/// canonical order used by gradients, optimizer state and checkpoints.
class ParamStore {
 public:
  std::size_t add(std::string name, Tensor value);

  std::size_t size() const noexcept { return values_.size(); }
  std::size_t numel() const noexcept;
  bool contains(std::string_view name) const;
  std::size_t index_of(std::string_view name) const;

  const std::string& name(std::size_t i) const { return names_.at(i); }
  Tensor& operator[](std::size_t i) { return values_.at(i); }
  const Tensor& operator[](std::size_t i) const { return values_.at(i); }
  Tensor& at(std::string_view name) { return values_[index_of(name)]; }
  const Tensor& at(std::string_view name) const { return values_[index_of(name)]; }

  bool operator==(const ParamStore& other) const {
    return names_ == other.names_ && values_ == other.values_;
  }

 private:
  std::vector<std::string> names_;
  std::vector<Tensor> values_;
  std::map<std::string, std::size_t, std::less<>> index_;
};

/// One tensor per parameter, aligned with a ParamStore.
using Gradients = std::vector<Tensor>;

Gradients zero_gradients(const ParamStore& params);
double global_norm(const Gradients& grads);

namespace ag {

class Tape;

/// Handle to a value recorded on a Tape. Cheap to copy; only valid while
/// the owning tape is alive.
class Var {
 public:
  Var() = default;

  bool attached() const noexcept { return tape_ != nullptr; }
  Tape* tape() const noexcept { return tape_; }
  std::size_t id() const noexcept { return id_; }
  const Tensor& value() const;
  const Shape& shape() const { return value().shape(); }
  std::size_t rows() const { return value().rows(); }
  std::size_t cols() const { return value().cols(); }

 private:
  friend class Tape;
  Var(Tape* tape, std::size_t id) : tape_(tape), id_(id) {}

  Tape* tape_ = nullptr;
  std::size_t id_ = 0;
};

/// Reverse-mode recording of one forward computation. Nodes are appended in
/// evaluation order so a reverse sweep is a valid topological order.
class Tape {
 public:
  using BackwardFn = std::function<void(Tape&, std::size_t self)>;

  Tape() = default;
  Tape(const Tape&) = delete;
  Tape& operator=(const Tape&) = delete;

  /// Untracked input. Gradients never flow into constants.
  Var constant(Tensor value);
  /// Leaf bound to params[index]. Repeated requests return the same node.
  Var param(const ParamStore& params, std::size_t index);
  Var param(const ParamStore& params, std::string_view name) {
    return param(params, params.index_of(name));
  }

  Var record(Tensor value, std::initializer_list<Var> parents, BackwardFn backward);
  Var record(Tensor value, std::span<const Var> parents, BackwardFn backward);

  const Tensor& value(std::size_t id) const { return nodes_[id].value; }
  bool requires_grad(std::size_t id) const { return nodes_[id].requires_grad; }
  /// Gradient buffer for a node, zero-initialised on first access.
  Tensor& grad(std::size_t id);

  /// Runs the reverse sweep from a scalar loss and returns one gradient per
  /// entry of `params`. Parameters the loss does not reach get zeros.
  Gradients backward(Var loss, const ParamStore& params);

  std::size_t node_count() const noexcept { return nodes_.size(); }

 private:
  struct Node {
    Tensor value;
    Tensor grad;
    bool has_grad = false;
    bool requires_grad = false;
    std::ptrdiff_t param_index = -1;
    BackwardFn backward;
  };

  void check_owned(const Var& v) const;

  std::deque<Node> nodes_;
  const ParamStore* bound_params_ = nullptr;
  std::unordered_map<std::size_t, std::size_t> param_nodes_;
};

// Differentiable operations. All inputs must live on the same tape.

Var matmul(Var a, Var b);
Var matmul_nt(Var a, Var b);
Var add(Var a, Var b);
/// x (n x d) + b broadcast over rows (b has d entries).
Var add_bias(Var x, Var b);
Var scale(Var x, double s);
Var mul(Var a, Var b);
Var sum(Var x);
Var gelu(Var x);
Var softmax_rows(Var x);
Var causal_softmax_rows(Var x);
Var layer_norm(Var x, Var gain, Var bias, double eps = 1e-5);
Var conv1d(Var x, Var w, Var bias, std::size_t stride);
/// Rows of `table` selected by ids (embedding lookup).
Var gather_rows(Var table, std::span<const std::size_t> ids);
Var slice_rows(Var x, std::size_t begin, std::size_t count);
Var slice_cols(Var x, std::size_t begin, std::size_t count);
Var concat_rows(std::span<const Var> parts);
Var concat_cols(std::span<const Var> parts);
/// Cuts the gradient path: the result is a constant copy of x.
Var detach(Var x);

/// Weighted token cross-entropy: sum_i weight[i] * -log softmax(logits[i])[target[i]].
/// Rows with zero weight contribute nothing and need no valid target.
Var weighted_nll(Var logits, std::span<const std::size_t> targets, std::span<const double> weights);

}  // namespace ag
}  // namespace macaw
