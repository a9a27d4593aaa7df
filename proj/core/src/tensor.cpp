// SPDX-License-Identifier: Apache-2.0
#include "lmdm/tensor.hpp"

#include <algorithm>
#include <cmath>
#include <limits>
#include <numeric>
#include <sstream>

namespace lmdm {

namespace {

thread_local Tape* t_active_tape = nullptr;
thread_local bool t_no_grad = false;
thread_local std::uint64_t t_macs = 0;

std::size_t shape_size(const Shape& shape) {
  std::size_t n = 1;
  for (int d : shape) n *= static_cast<std::size_t>(d);
  return n;
}

void check_shape(const Shape& shape) {
  if (shape.empty() || shape.size() > 2) {
    throw DimensionError("tensor rank must be 1 or 2, got " + shape_str(shape));
  }
  for (int d : shape) {
    if (d <= 0) throw DimensionError("tensor extents must be positive, got " + shape_str(shape));
  }
}

// C[m×n] (+)= A·B where A(i, p) = a[i*si + p*sp] and B is [k×n] row-major.
// 4×32 register tiles; every element accumulates over p in order, so tiled
// and remainder paths round identically.
void gemm_strided(const float* __restrict a, std::size_t si, std::size_t sp, const float* __restrict b,
                  float* __restrict c, int m, int k, int n, bool accumulate) {
  constexpr int TR = 4, TC = 32;
  const int mt = m - m % TR, nt = n - n % TC;
  for (int i0 = 0; i0 < mt; i0 += TR) {
    for (int j0 = 0; j0 < nt; j0 += TC) {
      float acc[TR][TC];
      for (int r = 0; r < TR; ++r)
        for (int l = 0; l < TC; ++l) acc[r][l] = accumulate ? c[static_cast<std::size_t>(i0 + r) * n + j0 + l] : 0.f;
      for (int p = 0; p < k; ++p) {
        const float* bp = b + static_cast<std::size_t>(p) * n + j0;
        for (int r = 0; r < TR; ++r) {
          const float av = a[(i0 + r) * si + p * sp];
          for (int l = 0; l < TC; ++l) acc[r][l] += av * bp[l];
        }
      }
      for (int r = 0; r < TR; ++r)
        for (int l = 0; l < TC; ++l) c[static_cast<std::size_t>(i0 + r) * n + j0 + l] = acc[r][l];
    }
  }
  auto plain = [&](int i, int j_begin) {
    float* crow = c + static_cast<std::size_t>(i) * n;
    if (!accumulate) std::fill(crow + j_begin, crow + n, 0.f);
    for (int p = 0; p < k; ++p) {
      const float av = a[i * si + p * sp];
      const float* brow = b + static_cast<std::size_t>(p) * n;
      for (int j = j_begin; j < n; ++j) crow[j] += av * brow[j];
    }
  };
  if (nt < n)
    for (int i = 0; i < mt; ++i) plain(i, nt);
  for (int i = mt; i < m; ++i) plain(i, 0);
}

// C[m×n] (+)= A[m×k] · B[k×n]
void gemm_nn(const float* a, const float* b, float* c, int m, int k, int n, bool accumulate) {
  gemm_strided(a, static_cast<std::size_t>(k), 1, b, c, m, k, n, accumulate);
}

// C[m×n] (+)= A[m×k] · B[n×k]ᵀ, through a transposed copy of B.
void gemm_nt(const float* a, const float* b, float* c, int m, int k, int n, bool accumulate) {
  thread_local std::vector<float> bt;
  bt.resize(static_cast<std::size_t>(k) * n);
  for (int j = 0; j < n; ++j) {
    const float* brow = b + static_cast<std::size_t>(j) * k;
    for (int p = 0; p < k; ++p) bt[static_cast<std::size_t>(p) * n + j] = brow[p];
  }
  gemm_strided(a, static_cast<std::size_t>(k), 1, bt.data(), c, m, k, n, accumulate);
}

// C[m×n] += A[k×m]ᵀ · B[k×n]
void gemm_tn_acc(const float* a, const float* b, float* c, int k, int m, int n) {
  gemm_strided(a, 1, static_cast<std::size_t>(m), b, c, m, k, n, true);
}

float sigmoid(float x) { return 1.f / (1.f + std::exp(-x)); }

}  // namespace

std::string shape_str(const Shape& shape) {
  std::ostringstream os;
  os << '[';
  for (std::size_t i = 0; i < shape.size(); ++i) os << (i ? "x" : "") << shape[i];
  os << ']';
  return os.str();
}

// --- Tensor ------------------------------------------------------------------

Tensor Tensor::from(Shape shape, std::vector<float> data) {
  check_shape(shape);
  if (shape_size(shape) != data.size()) {
    throw DimensionError("data length " + std::to_string(data.size()) + " does not match shape " +
                         shape_str(shape));
  }
  auto impl = std::make_shared<TensorImpl>();
  impl->shape = std::move(shape);
  impl->data = std::move(data);
  return Tensor(std::move(impl));
}

Tensor Tensor::full(Shape shape, float value) {
  check_shape(shape);
  const std::size_t n = shape_size(shape);
  return from(std::move(shape), std::vector<float>(n, value));
}
Tensor Tensor::zeros(Shape shape) { return full(std::move(shape), 0.f); }
Tensor Tensor::ones(Shape shape) { return full(std::move(shape), 1.f); }
Tensor Tensor::scalar(float value) { return from({1}, {value}); }

Tensor Tensor::parameter(Shape shape, std::vector<float> data) {
  Tensor t = from(std::move(shape), std::move(data));
  t.impl_->requires_grad = true;
  return t;
}

const Shape& Tensor::shape() const {
  if (!impl_) throw ContractError("use of undefined tensor");
  return impl_->shape;
}
int Tensor::rows() const { return rank() == 1 ? 1 : shape()[0]; }
int Tensor::cols() const { return rank() == 1 ? shape()[0] : shape()[1]; }
std::size_t Tensor::size() const { return impl_ ? impl_->data.size() : 0; }
std::span<const float> Tensor::data() const {
  if (!impl_) throw ContractError("use of undefined tensor");
  return impl_->data;
}
std::span<float> Tensor::mutable_data() {
  if (!impl_) throw ContractError("use of undefined tensor");
  if (impl_->node >= 0) throw ContractError("only leaf tensors may be modified in place");
  return impl_->data;
}
float Tensor::item() const {
  if (size() != 1) throw ContractError("item() requires a single-element tensor, got " + shape_str(shape()));
  return impl_->data[0];
}
float Tensor::at(int r, int c) const { return impl_->data[static_cast<std::size_t>(r) * cols() + c]; }
bool Tensor::requires_grad() const { return impl_ && impl_->requires_grad; }

// --- recording -----------------------------------------------------------------

struct OpRecorder {
  static const std::shared_ptr<TensorImpl>& impl(const Tensor& t) { return t.impl_; }

  static Tensor finish(Shape shape, std::vector<float> data, std::vector<const Tensor*> inputs,
                       Tape::BackwardFn fn) {
    auto out = std::make_shared<TensorImpl>();
    out->shape = std::move(shape);
    out->data = std::move(data);
    Tape* tape = t_active_tape;
    const bool any_grad =
        std::any_of(inputs.begin(), inputs.end(), [](const Tensor* t) { return t->requires_grad(); });
    if (tape && !t_no_grad && any_grad) {
      if (tape->frozen()) throw ContractError("cannot record onto a frozen tape");
      out->requires_grad = true;
      Tape::Node node;
      node.output = out;
      node.backward = std::move(fn);
      node.inputs.reserve(inputs.size());
      for (const Tensor* t : inputs) node.inputs.push_back(t->impl_);
      tape->record(std::move(node));
    }
    return Tensor(std::move(out));
  }
};

void Tape::record(Node node) {
  node.output->node = static_cast<int>(nodes_.size());
  nodes_.push_back(std::move(node));
}

Gradients Tape::backward(const Tensor& root) {
  if (frozen_) throw ContractError("backward already ran on this tape");
  if (root.size() != 1) throw ContractError("backward root must be a scalar, got " + shape_str(root.shape()));
  frozen_ = true;
  Gradients result;
  if (!root.requires_grad()) return result;

  std::unordered_map<const TensorImpl*, std::vector<float>> grads;
  grads[root.id()] = {1.f};
  std::vector<std::vector<float>*> gin;
  for (auto it = nodes_.rbegin(); it != nodes_.rend(); ++it) {
    auto found = grads.find(it->output.get());
    if (found == grads.end()) continue;
    gin.assign(it->inputs.size(), nullptr);
    for (std::size_t i = 0; i < it->inputs.size(); ++i) {
      const auto& in = it->inputs[i];
      if (!in->requires_grad) continue;
      auto& g = grads[in.get()];
      if (g.empty()) g.assign(in->data.size(), 0.f);
      gin[i] = &g;
    }
    it->backward(found->second, gin);
    grads.erase(it->output.get());
  }
  for (auto& [impl, g] : grads) {
    if (impl->node >= 0 || !impl->requires_grad) continue;
    result.shapes_[impl] = impl->shape;
    result.grads_[impl] = std::move(g);
  }
  return result;
}

bool Gradients::contains(const Tensor& t) const { return grads_.count(t.id()) > 0; }
const std::vector<float>* Gradients::find(const Tensor& t) const {
  auto it = grads_.find(t.id());
  return it == grads_.end() ? nullptr : &it->second;
}
Tensor Gradients::of(const Tensor& t) const {
  auto it = grads_.find(t.id());
  if (it == grads_.end()) return Tensor::zeros(t.shape());
  return Tensor::from(shapes_.at(t.id()), it->second);
}

TapeScope::TapeScope(Tape& tape) : previous_(t_active_tape) { t_active_tape = &tape; }
TapeScope::~TapeScope() { t_active_tape = previous_; }
NoGradGuard::NoGradGuard() : previous_(t_no_grad) { t_no_grad = true; }
NoGradGuard::~NoGradGuard() { t_no_grad = previous_; }
bool recording_enabled() { return t_active_tape != nullptr && !t_no_grad; }
const Tape* active_tape() { return t_active_tape; }

std::uint64_t mac_count() { return t_macs; }
void reset_mac_count() { t_macs = 0; }

// --- matmul ------------------------------------------------------------------

Tensor matmul(const Tensor& a, const Tensor& b) {
  const int m = a.rows(), k = a.cols(), n = b.cols();
  if (b.rows() != k) {
    throw DimensionError("matmul inner extents differ: " + shape_str(a.shape()) + " x " + shape_str(b.shape()));
  }
  std::vector<float> out(static_cast<std::size_t>(m) * n);
  gemm_nn(a.data().data(), b.data().data(), out.data(), m, k, n, false);
  t_macs += static_cast<std::uint64_t>(m) * k * n;
  std::vector<float> av(a.data().begin(), a.data().end());
  std::vector<float> bv(b.data().begin(), b.data().end());
  return OpRecorder::finish({m, n}, std::move(out), {&a, &b},
                            [av = std::move(av), bv = std::move(bv), m, k, n](auto gout, auto gin) {
                              if (gin[0]) gemm_nt(gout.data(), bv.data(), gin[0]->data(), m, n, k, true);
                              if (gin[1]) gemm_tn_acc(av.data(), gout.data(), gin[1]->data(), m, k, n);
                            });
}

Tensor matmul_nt(const Tensor& a, const Tensor& b) {
  const int m = a.rows(), k = a.cols(), n = b.rows();
  if (b.cols() != k) {
    throw DimensionError("matmul_nt inner extents differ: " + shape_str(a.shape()) + " x " +
                         shape_str(b.shape()) + "^T");
  }
  std::vector<float> out(static_cast<std::size_t>(m) * n);
  gemm_nt(a.data().data(), b.data().data(), out.data(), m, k, n, false);
  t_macs += static_cast<std::uint64_t>(m) * k * n;
  std::vector<float> av(a.data().begin(), a.data().end());
  std::vector<float> bv(b.data().begin(), b.data().end());
  return OpRecorder::finish({m, n}, std::move(out), {&a, &b},
                            [av = std::move(av), bv = std::move(bv), m, k, n](auto gout, auto gin) {
                              // dA = dC · B, dB = dCᵀ · A
                              if (gin[0]) gemm_nn(gout.data(), bv.data(), gin[0]->data(), m, n, k, true);
                              if (gin[1]) gemm_tn_acc(gout.data(), av.data(), gin[1]->data(), m, n, k);
                            });
}

Tensor transpose(const Tensor& x) {
  const int r = x.rows(), c = x.cols();
  std::vector<float> out(x.size());
  auto xd = x.data();
  for (int i = 0; i < r; ++i)
    for (int j = 0; j < c; ++j) out[static_cast<std::size_t>(j) * r + i] = xd[static_cast<std::size_t>(i) * c + j];
  return OpRecorder::finish({c, r}, std::move(out), {&x}, [r, c](auto gout, auto gin) {
    auto& g = *gin[0];
    for (int i = 0; i < r; ++i)
      for (int j = 0; j < c; ++j) g[static_cast<std::size_t>(i) * c + j] += gout[static_cast<std::size_t>(j) * r + i];
  });
}

// --- elementwise -------------------------------------------------------------------

namespace {

enum class Bcast { Same, Scalar, Row };

Bcast broadcast_kind(const Tensor& a, const Tensor& b, const char* op) {
  if (a.shape() == b.shape()) return Bcast::Same;
  if (b.size() == 1) return Bcast::Scalar;
  if (b.rows() == 1 && b.cols() == a.cols() && a.rank() == 2) return Bcast::Row;
  throw DimensionError(std::string(op) + ": cannot broadcast " + shape_str(b.shape()) + " onto " +
                       shape_str(a.shape()));
}

inline std::size_t bindex(Bcast kind, std::size_t i, int cols) {
  switch (kind) {
    case Bcast::Same: return i;
    case Bcast::Scalar: return 0;
    case Bcast::Row: return i % static_cast<std::size_t>(cols);
  }
  return i;
}

template <typename Fwd, typename Bwd>
Tensor binary(const Tensor& a, const Tensor& b, const char* name, Fwd fwd, Bwd bwd) {
  const Bcast kind = broadcast_kind(a, b, name);
  const int cols = a.cols();
  auto ad = a.data();
  auto bd = b.data();
  std::vector<float> out(a.size());
  for (std::size_t i = 0; i < out.size(); ++i) out[i] = fwd(ad[i], bd[bindex(kind, i, cols)]);
  std::vector<float> av(ad.begin(), ad.end()), bv(bd.begin(), bd.end());
  return OpRecorder::finish(a.shape(), std::move(out), {&a, &b},
                            [kind, cols, av = std::move(av), bv = std::move(bv), bwd](auto gout, auto gin) {
                              for (std::size_t i = 0; i < gout.size(); ++i) {
                                const std::size_t j = bindex(kind, i, cols);
                                float da = 0.f, db = 0.f;
                                bwd(av[i], bv[j], gout[i], da, db);
                                if (gin[0]) (*gin[0])[i] += da;
                                if (gin[1]) (*gin[1])[j] += db;
                              }
                            });
}

template <typename Fwd, typename Deriv>
Tensor unary(const Tensor& x, Fwd fwd, Deriv deriv) {
  auto xd = x.data();
  std::vector<float> out(x.size());
  for (std::size_t i = 0; i < out.size(); ++i) out[i] = fwd(xd[i]);
  std::vector<float> xv(xd.begin(), xd.end());
  return OpRecorder::finish(x.shape(), std::move(out), {&x}, [xv = std::move(xv), deriv](auto gout, auto gin) {
    auto& g = *gin[0];
    for (std::size_t i = 0; i < gout.size(); ++i) g[i] += gout[i] * deriv(xv[i]);
  });
}

}  // namespace

Tensor add(const Tensor& a, const Tensor& b) {
  return binary(
      a, b, "add", [](float x, float y) { return x + y; },
      [](float, float, float g, float& da, float& db) { da = g; db = g; });
}

Tensor sub(const Tensor& a, const Tensor& b) {
  return binary(
      a, b, "sub", [](float x, float y) { return x - y; },
      [](float, float, float g, float& da, float& db) { da = g; db = -g; });
}

Tensor mul(const Tensor& a, const Tensor& b) {
  return binary(
      a, b, "mul", [](float x, float y) { return x * y; },
      [](float x, float y, float g, float& da, float& db) { da = g * y; db = g * x; });
}

Tensor scale(const Tensor& x, float s) {
  auto xd = x.data();
  std::vector<float> out(x.size());
  for (std::size_t i = 0; i < out.size(); ++i) out[i] = xd[i] * s;
  return OpRecorder::finish(x.shape(), std::move(out), {&x}, [s](auto gout, auto gin) {
    auto& g = *gin[0];
    for (std::size_t i = 0; i < gout.size(); ++i) g[i] += gout[i] * s;
  });
}

Tensor silu(const Tensor& x) {
  return unary(
      x, [](float v) { return v * sigmoid(v); },
      [](float v) {
        const float s = sigmoid(v);
        return s * (1.f + v * (1.f - s));
      });
}

Tensor softplus(const Tensor& x) {
  return unary(
      x, [](float v) { return v > 20.f ? v : std::log1p(std::exp(v)); }, [](float v) { return sigmoid(v); });
}

// --- normalization -----------------------------------------------------------------

Tensor masked_softmax(const Tensor& x, std::span<const std::uint8_t> mask) {
  const int r = x.rows(), c = x.cols();
  if (!mask.empty() && mask.size() != x.size()) {
    throw DimensionError("mask has " + std::to_string(mask.size()) + " entries for " + shape_str(x.shape()));
  }
  auto xd = x.data();
  std::vector<float> out(x.size(), 0.f);
  for (int i = 0; i < r; ++i) {
    const std::size_t base = static_cast<std::size_t>(i) * c;
    float mx = -std::numeric_limits<float>::infinity();
    bool any = false;
    for (int j = 0; j < c; ++j) {
      if (!mask.empty() && !mask[base + j]) continue;
      mx = std::max(mx, xd[base + j]);
      any = true;
    }
    if (!any) throw ContractError("attention row " + std::to_string(i) + " has no allowed columns");
    float total = 0.f;
    for (int j = 0; j < c; ++j) {
      if (!mask.empty() && !mask[base + j]) continue;
      out[base + j] = std::exp(xd[base + j] - mx);
      total += out[base + j];
    }
    const float inv = 1.f / total;
    for (int j = 0; j < c; ++j) out[base + j] *= inv;
  }
  std::vector<float> yv = out;
  return OpRecorder::finish(x.shape(), std::move(out), {&x}, [yv = std::move(yv), r, c](auto gout, auto gin) {
    auto& g = *gin[0];
    for (int i = 0; i < r; ++i) {
      const std::size_t base = static_cast<std::size_t>(i) * c;
      float dot = 0.f;
      for (int j = 0; j < c; ++j) dot += yv[base + j] * gout[base + j];
      for (int j = 0; j < c; ++j) g[base + j] += yv[base + j] * (gout[base + j] - dot);
    }
  });
}

Tensor softmax(const Tensor& x, int axis) {
  if (axis == 1 || axis == -1 || (axis == 0 && x.rank() == 1)) return masked_softmax(x, {});
  if (axis == 0) return transpose(masked_softmax(transpose(x), {}));
  throw DimensionError("softmax axis " + std::to_string(axis) + " invalid for " + shape_str(x.shape()));
}

Tensor layer_norm(const Tensor& x, const Tensor& gain, const Tensor& bias, float eps) {
  const int r = x.rows(), c = x.cols();
  if (gain.defined() && static_cast<int>(gain.size()) != c) throw DimensionError("layer_norm gain width mismatch");
  if (bias.defined() && static_cast<int>(bias.size()) != c) throw DimensionError("layer_norm bias width mismatch");
  auto xd = x.data();
  std::vector<float> xhat(x.size()), inv_std(r), out(x.size());
  for (int i = 0; i < r; ++i) {
    const std::size_t base = static_cast<std::size_t>(i) * c;
    float mu = 0.f;
    for (int j = 0; j < c; ++j) mu += xd[base + j];
    mu /= static_cast<float>(c);
    float var = 0.f;
    for (int j = 0; j < c; ++j) {
      const float d = xd[base + j] - mu;
      var += d * d;
    }
    var /= static_cast<float>(c);
    inv_std[i] = 1.f / std::sqrt(var + eps);
    for (int j = 0; j < c; ++j) {
      xhat[base + j] = (xd[base + j] - mu) * inv_std[i];
      float y = xhat[base + j];
      if (gain.defined()) y *= gain.data()[j];
      if (bias.defined()) y += bias.data()[j];
      out[base + j] = y;
    }
  }
  std::vector<float> gv;
  if (gain.defined()) gv.assign(gain.data().begin(), gain.data().end());
  std::vector<const Tensor*> inputs{&x};
  const bool has_gain = gain.defined(), has_bias = bias.defined();
  if (has_gain) inputs.push_back(&gain);
  if (has_bias) inputs.push_back(&bias);
  return OpRecorder::finish(
      x.shape(), std::move(out), std::move(inputs),
      [xhat = std::move(xhat), inv_std = std::move(inv_std), gv = std::move(gv), r, c, has_gain,
       has_bias](auto gout, auto gin) {
        std::vector<float>* gx = gin[0];
        std::vector<float>* gg = has_gain ? gin[1] : nullptr;
        std::vector<float>* gb = has_bias ? gin[has_gain ? 2 : 1] : nullptr;
        std::vector<float> dxhat(static_cast<std::size_t>(c));
        for (int i = 0; i < r; ++i) {
          const std::size_t base = static_cast<std::size_t>(i) * c;
          float m1 = 0.f, m2 = 0.f;
          for (int j = 0; j < c; ++j) {
            const float go = gout[base + j];
            if (gg) (*gg)[j] += go * xhat[base + j];
            if (gb) (*gb)[j] += go;
            dxhat[j] = has_gain ? go * gv[j] : go;
            m1 += dxhat[j];
            m2 += dxhat[j] * xhat[base + j];
          }
          if (!gx) continue;
          m1 /= static_cast<float>(c);
          m2 /= static_cast<float>(c);
          for (int j = 0; j < c; ++j) (*gx)[base + j] += inv_std[i] * (dxhat[j] - m1 - xhat[base + j] * m2);
        }
      });
}

Tensor rope(const Tensor& x, std::span<const int> positions, int head_dim, float base) {
  const int r = x.rows(), c = x.cols();
  if (static_cast<int>(positions.size()) != r) throw DimensionError("rope needs one position per row");
  if (head_dim <= 0 || head_dim % 2 != 0 || c % head_dim != 0) {
    throw DimensionError("rope head_dim " + std::to_string(head_dim) + " incompatible with width " +
                         std::to_string(c));
  }
  const int half = head_dim / 2;
  std::vector<float> cs(static_cast<std::size_t>(r) * half), sn(cs.size());
  for (int i = 0; i < r; ++i) {
    for (int j = 0; j < half; ++j) {
      const double freq = std::pow(static_cast<double>(base), -2.0 * j / head_dim);
      const double angle = positions[i] * freq;
      cs[static_cast<std::size_t>(i) * half + j] = static_cast<float>(std::cos(angle));
      sn[static_cast<std::size_t>(i) * half + j] = static_cast<float>(std::sin(angle));
    }
  }
  auto xd = x.data();
  std::vector<float> out(x.size());
  const int heads = c / head_dim;
  for (int i = 0; i < r; ++i) {
    for (int h = 0; h < heads; ++h) {
      const std::size_t off = static_cast<std::size_t>(i) * c + static_cast<std::size_t>(h) * head_dim;
      for (int j = 0; j < half; ++j) {
        const float co = cs[static_cast<std::size_t>(i) * half + j], si = sn[static_cast<std::size_t>(i) * half + j];
        const float x1 = xd[off + j], x2 = xd[off + j + half];
        out[off + j] = x1 * co - x2 * si;
        out[off + j + half] = x1 * si + x2 * co;
      }
    }
  }
  return OpRecorder::finish(x.shape(), std::move(out), {&x},
                            [cs = std::move(cs), sn = std::move(sn), r, c, heads, half, head_dim](auto gout,
                                                                                                   auto gin) {
                              auto& g = *gin[0];
                              for (int i = 0; i < r; ++i) {
                                for (int h = 0; h < heads; ++h) {
                                  const std::size_t off = static_cast<std::size_t>(i) * c +
                                                          static_cast<std::size_t>(h) * head_dim;
                                  for (int j = 0; j < half; ++j) {
                                    const float co = cs[static_cast<std::size_t>(i) * half + j];
                                    const float si = sn[static_cast<std::size_t>(i) * half + j];
                                    const float g1 = gout[off + j], g2 = gout[off + j + half];
                                    g[off + j] += g1 * co + g2 * si;
                                    g[off + j + half] += -g1 * si + g2 * co;
                                  }
                                }
                              }
                            });
}

// --- structural --------------------------------------------------------------------

Tensor slice_rows(const Tensor& x, int begin, int end) {
  const int r = x.rows(), c = x.cols();
  if (begin < 0 || end > r || begin >= end) {
    throw DimensionError("slice_rows [" + std::to_string(begin) + "," + std::to_string(end) + ") of " +
                         shape_str(x.shape()));
  }
  auto xd = x.data();
  std::vector<float> out(xd.begin() + static_cast<std::ptrdiff_t>(begin) * c,
                         xd.begin() + static_cast<std::ptrdiff_t>(end) * c);
  return OpRecorder::finish({end - begin, c}, std::move(out), {&x}, [begin, c](auto gout, auto gin) {
    auto& g = *gin[0];
    const std::size_t off = static_cast<std::size_t>(begin) * c;
    for (std::size_t i = 0; i < gout.size(); ++i) g[off + i] += gout[i];
  });
}

Tensor slice_cols(const Tensor& x, int begin, int end) {
  const int r = x.rows(), c = x.cols();
  if (begin < 0 || end > c || begin >= end) {
    throw DimensionError("slice_cols [" + std::to_string(begin) + "," + std::to_string(end) + ") of " +
                         shape_str(x.shape()));
  }
  const int w = end - begin;
  auto xd = x.data();
  std::vector<float> out(static_cast<std::size_t>(r) * w);
  for (int i = 0; i < r; ++i)
    std::copy_n(xd.begin() + static_cast<std::ptrdiff_t>(i) * c + begin, w,
                out.begin() + static_cast<std::ptrdiff_t>(i) * w);
  return OpRecorder::finish({r, w}, std::move(out), {&x}, [r, c, w, begin](auto gout, auto gin) {
    auto& g = *gin[0];
    for (int i = 0; i < r; ++i)
      for (int j = 0; j < w; ++j)
        g[static_cast<std::size_t>(i) * c + begin + j] += gout[static_cast<std::size_t>(i) * w + j];
  });
}

Tensor concat_rows(std::span<const Tensor> parts) {
  if (parts.empty()) throw DimensionError("concat_rows of nothing");
  const int c = parts[0].cols();
  int total = 0;
  std::vector<const Tensor*> inputs;
  std::vector<int> offsets;
  for (const auto& p : parts) {
    if (p.cols() != c) throw DimensionError("concat_rows width mismatch");
    offsets.push_back(total);
    total += p.rows();
    inputs.push_back(&p);
  }
  std::vector<float> out;
  out.reserve(static_cast<std::size_t>(total) * c);
  for (const auto& p : parts) out.insert(out.end(), p.data().begin(), p.data().end());
  return OpRecorder::finish({total, c}, std::move(out), std::move(inputs),
                            [offsets = std::move(offsets), c](auto gout, auto gin) {
                              for (std::size_t k = 0; k < gin.size(); ++k) {
                                if (!gin[k]) continue;
                                auto& g = *gin[k];
                                const std::size_t off = static_cast<std::size_t>(offsets[k]) * c;
                                for (std::size_t i = 0; i < g.size(); ++i) g[i] += gout[off + i];
                              }
                            });
}

Tensor concat_cols(std::span<const Tensor> parts) {
  if (parts.empty()) throw DimensionError("concat_cols of nothing");
  const int r = parts[0].rows();
  int total = 0;
  std::vector<const Tensor*> inputs;
  std::vector<int> offsets, widths;
  for (const auto& p : parts) {
    if (p.rows() != r) throw DimensionError("concat_cols height mismatch");
    offsets.push_back(total);
    widths.push_back(p.cols());
    total += p.cols();
    inputs.push_back(&p);
  }
  std::vector<float> out(static_cast<std::size_t>(r) * total);
  for (std::size_t k = 0; k < parts.size(); ++k) {
    auto pd = parts[k].data();
    for (int i = 0; i < r; ++i)
      std::copy_n(pd.begin() + static_cast<std::ptrdiff_t>(i) * widths[k], widths[k],
                  out.begin() + static_cast<std::ptrdiff_t>(i) * total + offsets[k]);
  }
  return OpRecorder::finish({r, total}, std::move(out), std::move(inputs),
                            [offsets = std::move(offsets), widths = std::move(widths), r, total](auto gout,
                                                                                              auto gin) {
                              for (std::size_t k = 0; k < gin.size(); ++k) {
                                if (!gin[k]) continue;
                                auto& g = *gin[k];
                                for (int i = 0; i < r; ++i)
                                  for (int j = 0; j < widths[k]; ++j)
                                    g[static_cast<std::size_t>(i) * widths[k] + j] +=
                                        gout[static_cast<std::size_t>(i) * total + offsets[k] + j];
                              }
                            });
}

Tensor gather_rows(const Tensor& x, std::span<const int> index) {
  const int r = x.rows(), c = x.cols();
  if (index.empty()) throw DimensionError("gather_rows with empty index");
  auto xd = x.data();
  std::vector<float> out(index.size() * static_cast<std::size_t>(c));
  for (std::size_t i = 0; i < index.size(); ++i) {
    if (index[i] < 0 || index[i] >= r) throw DimensionError("gather_rows index out of range");
    std::copy_n(xd.begin() + static_cast<std::ptrdiff_t>(index[i]) * c, c,
                out.begin() + static_cast<std::ptrdiff_t>(i) * c);
  }
  std::vector<int> idx(index.begin(), index.end());
  return OpRecorder::finish({static_cast<int>(index.size()), c}, std::move(out), {&x},
                            [idx = std::move(idx), c](auto gout, auto gin) {
                              auto& g = *gin[0];
                              for (std::size_t i = 0; i < idx.size(); ++i)
                                for (int j = 0; j < c; ++j)
                                  g[static_cast<std::size_t>(idx[i]) * c + j] += gout[i * c + j];
                            });
}

// --- reductions ----------------------------------------------------------------------

Tensor sum(const Tensor& x) {
  float total = 0.f;
  for (float v : x.data()) total += v;
  return OpRecorder::finish({1}, {total}, {&x}, [](auto gout, auto gin) {
    for (auto& g : *gin[0]) g += gout[0];
  });
}

Tensor mean(const Tensor& x) { return scale(sum(x), 1.f / static_cast<float>(x.size())); }

Tensor mean_rows(const Tensor& x) {
  const int r = x.rows(), c = x.cols();
  auto xd = x.data();
  std::vector<float> out(c, 0.f);
  for (int i = 0; i < r; ++i)
    for (int j = 0; j < c; ++j) out[j] += xd[static_cast<std::size_t>(i) * c + j];
  const float inv = 1.f / static_cast<float>(r);
  for (auto& v : out) v *= inv;
  return OpRecorder::finish({1, c}, std::move(out), {&x}, [r, c, inv](auto gout, auto gin) {
    auto& g = *gin[0];
    for (int i = 0; i < r; ++i)
      for (int j = 0; j < c; ++j) g[static_cast<std::size_t>(i) * c + j] += gout[j] * inv;
  });
}

Tensor detach(const Tensor& x) {
  return Tensor::from(x.shape(), std::vector<float>(x.data().begin(), x.data().end()));
}

}  // namespace lmdm
