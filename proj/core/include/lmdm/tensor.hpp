// SPDX-License-Identifier: Apache-2.0
//
// Dense float32 tensors with a reverse-mode gradient tape.
//
// Tensors are rank 1 or rank 2, row-major, and immutable once produced by an
// op. Recording happens only while a Tape is bound to the current thread
// (TapeScope) and at least one input requires a gradient. NoGradGuard turns
// recording off for a scope.
#pragma once

#include <cstdint>
#include <functional>
#include <memory>
#include <span>
#include <string>
#include <unordered_map>
#include <vector>

#include "lmdm/errors.hpp"

namespace lmdm {

using Shape = std::vector<int>;

std::string shape_str(const Shape& shape);

struct TensorImpl {
  Shape shape;
  std::vector<float> data;
  bool requires_grad = false;
  // Index of the producing node on its tape, -1 for leaves.
  int node = -1;
};

class Tensor {
 public:
  Tensor() = default;

  static Tensor zeros(Shape shape);
  static Tensor ones(Shape shape);
  static Tensor full(Shape shape, float value);
  static Tensor from(Shape shape, std::vector<float> data);
  static Tensor scalar(float value);
  /// Leaf that accumulates gradients on backward.
  static Tensor parameter(Shape shape, std::vector<float> data);

  bool defined() const { return impl_ != nullptr; }
  const Shape& shape() const;
  int rank() const { return static_cast<int>(shape().size()); }
  /// Rank-1 tensors are viewed as a single row.
  int rows() const;
  int cols() const;
  std::size_t size() const;

  std::span<const float> data() const;
  /// In-place access for leaves (optimizer updates, checkpoint loads).
  std::span<float> mutable_data();
  float item() const;
  float at(int r, int c) const;

  bool requires_grad() const;
  const TensorImpl* id() const { return impl_.get(); }

 private:
  explicit Tensor(std::shared_ptr<TensorImpl> impl) : impl_(std::move(impl)) {}
  std::shared_ptr<TensorImpl> impl_;

  friend class Tape;
  friend struct OpRecorder;
};

/// Gradients of a backward pass, keyed by leaf tensor identity.
class Gradients {
 public:
  bool contains(const Tensor& t) const;
  /// nullptr when the tensor received no gradient.
  const std::vector<float>* find(const Tensor& t) const;
  Tensor of(const Tensor& t) const;
  std::size_t size() const { return grads_.size(); }

 private:
  std::unordered_map<const TensorImpl*, std::vector<float>> grads_;
  std::unordered_map<const TensorImpl*, Shape> shapes_;
  friend class Tape;
};

class Tape {
 public:
  using BackwardFn =
      std::function<void(std::span<const float> grad_out, std::span<std::vector<float>*> grad_in)>;

  struct Node {
    std::vector<std::shared_ptr<TensorImpl>> inputs;
    std::shared_ptr<TensorImpl> output;
    BackwardFn backward;
  };

  Tape() = default;
  Tape(const Tape&) = delete;
  Tape& operator=(const Tape&) = delete;

  std::size_t size() const { return nodes_.size(); }
  bool frozen() const { return frozen_; }

  /// Accumulates d(root)/d(leaf) for every grad-enabled leaf reachable from
  /// root. Root must be a scalar; the tape is frozen afterwards and a second
  /// call throws ContractError.
  Gradients backward(const Tensor& root);

  void record(Node node);

 private:
  std::vector<Node> nodes_;
  bool frozen_ = false;
};

/// Binds a tape to the calling thread for the lifetime of the scope.
class TapeScope {
 public:
  explicit TapeScope(Tape& tape);
  ~TapeScope();
  TapeScope(const TapeScope&) = delete;
  TapeScope& operator=(const TapeScope&) = delete;

 private:
  Tape* previous_;
};

class NoGradGuard {
 public:
  NoGradGuard();
  ~NoGradGuard();
  NoGradGuard(const NoGradGuard&) = delete;
  NoGradGuard& operator=(const NoGradGuard&) = delete;

 private:
  bool previous_;
};

bool recording_enabled();
/// Tape bound to this thread, or nullptr.
const Tape* active_tape();

/// Multiply-accumulate count of matmul kernels on this thread.
std::uint64_t mac_count();
void reset_mac_count();

// --- ops -------------------------------------------------------------------

Tensor matmul(const Tensor& a, const Tensor& b);
/// a × bᵀ
Tensor matmul_nt(const Tensor& a, const Tensor& b);
Tensor transpose(const Tensor& x);

/// Elementwise with broadcasting restricted to a scalar rhs or a single-row
/// rhs expanded over the rows of lhs.
Tensor add(const Tensor& a, const Tensor& b);
Tensor sub(const Tensor& a, const Tensor& b);
Tensor mul(const Tensor& a, const Tensor& b);
Tensor scale(const Tensor& x, float s);
Tensor silu(const Tensor& x);
Tensor softplus(const Tensor& x);

/// axis 0 normalizes columns, axis 1 (or -1) normalizes rows.
Tensor softmax(const Tensor& x, int axis);
/// Row softmax over entries where mask[r * cols + c] != 0; masked entries
/// become exactly 0. A row without any allowed column is a ContractError.
Tensor masked_softmax(const Tensor& x, std::span<const std::uint8_t> mask);
/// Normalizes over the last axis. gain/bias may be undefined (identity).
Tensor layer_norm(const Tensor& x, const Tensor& gain, const Tensor& bias, float eps = 1e-5f);
/// Rotary embedding applied independently to each head of width head_dim.
/// positions[r] is the position of row r.
Tensor rope(const Tensor& x, std::span<const int> positions, int head_dim, float base = 10000.f);

Tensor slice_rows(const Tensor& x, int begin, int end);
Tensor slice_cols(const Tensor& x, int begin, int end);
Tensor concat_rows(std::span<const Tensor> parts);
Tensor concat_cols(std::span<const Tensor> parts);
Tensor gather_rows(const Tensor& x, std::span<const int> index);

Tensor sum(const Tensor& x);
Tensor mean(const Tensor& x);
/// Column means, [rows × cols] -> [1 × cols].
Tensor mean_rows(const Tensor& x);

/// Same values, no tape participation.
Tensor detach(const Tensor& x);

}  // namespace lmdm
