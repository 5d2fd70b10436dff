#pragma once

// Dense numeric kernel shared by the three proxy-task streams: a row-major
// matrix, a handful of BLAS-1/2 style loops, the LSTM cell with its hand
// derived backward pass, row softmax, Adam and a finite-difference gradient
// checker. Everything is 64-bit and single threaded.

#include <algorithm>
#include <cmath>
#include <cstddef>
#include <cstdint>
#include <functional>
#include <limits>
#include <random>
#include <span>
#include <string>
#include <string_view>
#include <utility>
#include <vector>

#include "dssbd/errors.hpp"

namespace dssbd {

using Vector = std::vector<double>;

// ---------------------------------------------------------------------------
// Random numbers
// ---------------------------------------------------------------------------

inline std::uint64_t splitmix64(std::uint64_t x) {
  x += 0x9e3779b97f4a7c15ULL;
  x = (x ^ (x >> 30)) * 0xbf58476d1ce4e5b9ULL;
  x = (x ^ (x >> 27)) * 0x94d049bb133111ebULL;
  return x ^ (x >> 31);
}

// Independent child seed for a named consumer (stream, video, ...).
inline std::uint64_t derive_seed(std::uint64_t seed, std::uint64_t tag) {
  return splitmix64(seed ^ splitmix64(tag + 0x51ed270b27a3f1c5ULL));
}

inline std::uint64_t derive_seed(std::uint64_t seed, std::string_view tag) {
  std::uint64_t h = 1469598103934665603ULL;  // FNV-1a
  for (char ch : tag) {
    h ^= static_cast<unsigned char>(ch);
    h *= 1099511628211ULL;
  }
  return derive_seed(seed, h);
}

// mt19937_64 is fully specified by the standard; the distributions are not,
// so uniform/normal draws are derived from raw bits here.
class Rng {
 public:
  explicit Rng(std::uint64_t seed) : engine_(seed) {}

  std::uint64_t next() { return engine_(); }

  // [0, 1)
  double uniform() { return static_cast<double>(engine_() >> 11) * 0x1.0p-53; }

  double uniform(double lo, double hi) { return lo + (hi - lo) * uniform(); }

  double normal() {
    const double u1 = 1.0 - uniform();  // (0, 1]
    const double u2 = uniform();
    return std::sqrt(-2.0 * std::log(u1)) * std::cos(2.0 * M_PI * u2);
  }

  // Uniform integer in [0, n).
  std::size_t below(std::size_t n) {
    if (n == 0) throw UsageError("Rng::below: empty range");
    return static_cast<std::size_t>(engine_() % n);
  }

  // Uniform integer in [lo, hi].
  long between(long lo, long hi) {
    return lo + static_cast<long>(below(static_cast<std::size_t>(hi - lo + 1)));
  }

  template <class T>
  void shuffle(std::vector<T>& v) {
    for (std::size_t i = v.size(); i > 1; --i) std::swap(v[i - 1], v[below(i)]);
  }

 private:
  std::mt19937_64 engine_;
};

// ---------------------------------------------------------------------------
// Matrix
// ---------------------------------------------------------------------------

class Matrix {
 public:
  Matrix() = default;
  Matrix(std::size_t rows, std::size_t cols, double fill = 0.0)
      : rows_(rows), cols_(cols), data_(rows * cols, fill) {}
  Matrix(std::size_t rows, std::size_t cols, Vector data)
      : rows_(rows), cols_(cols), data_(std::move(data)) {
    if (data_.size() != rows_ * cols_) {
      throw DimensionError("Matrix: data length " + std::to_string(data_.size()) +
                           " != " + std::to_string(rows_) + "x" + std::to_string(cols_));
    }
  }

  std::size_t rows() const noexcept { return rows_; }
  std::size_t cols() const noexcept { return cols_; }
  std::size_t size() const noexcept { return data_.size(); }

  double& operator()(std::size_t r, std::size_t c) { return data_[r * cols_ + c]; }
  double operator()(std::size_t r, std::size_t c) const { return data_[r * cols_ + c]; }

  std::span<double> row(std::size_t r) { return {data_.data() + r * cols_, cols_}; }
  std::span<const double> row(std::size_t r) const { return {data_.data() + r * cols_, cols_}; }

  std::span<double> values() noexcept { return data_; }
  std::span<const double> values() const noexcept { return data_; }

  void fill(double v) { std::fill(data_.begin(), data_.end(), v); }

  bool operator==(const Matrix&) const = default;

 private:
  std::size_t rows_ = 0;
  std::size_t cols_ = 0;
  Vector data_;
};

// Xavier/Glorot uniform: U(-a, a), a = sqrt(6 / (fan_in + fan_out)).
inline void xavier_uniform(Matrix& m, Rng& rng) {
  const double a = std::sqrt(6.0 / static_cast<double>(m.rows() + m.cols()));
  for (double& v : m.values()) v = rng.uniform(-a, a);
}

// ---------------------------------------------------------------------------
// Kernels
// ---------------------------------------------------------------------------

namespace detail {
inline void require(bool ok, const char* what) {
  if (!ok) throw DimensionError(what);
}
}  // namespace detail

// Four partial sums keep the reduction order fixed while letting the
// compiler pipeline the multiply-adds.
inline double dot(std::span<const double> a, std::span<const double> b) {
  detail::require(a.size() == b.size(), "dot: length mismatch");
  const std::size_t n = a.size();
  double s0 = 0.0, s1 = 0.0, s2 = 0.0, s3 = 0.0;
  std::size_t i = 0;
  for (; i + 4 <= n; i += 4) {
    s0 += a[i] * b[i];
    s1 += a[i + 1] * b[i + 1];
    s2 += a[i + 2] * b[i + 2];
    s3 += a[i + 3] * b[i + 3];
  }
  for (; i < n; ++i) s0 += a[i] * b[i];
  return (s0 + s1) + (s2 + s3);
}

// y += alpha * x
inline void axpy(double alpha, std::span<const double> x, std::span<double> y) {
  detail::require(x.size() == y.size(), "axpy: length mismatch");
  for (std::size_t i = 0; i < x.size(); ++i) y[i] += alpha * x[i];
}

// out += W x
inline void gemv_add(const Matrix& w, std::span<const double> x, std::span<double> out) {
  detail::require(w.cols() == x.size() && w.rows() == out.size(), "gemv: shape mismatch");
  for (std::size_t r = 0; r < w.rows(); ++r) out[r] += dot(w.row(r), x);
}

// out += W^T v
inline void gemv_t_add(const Matrix& w, std::span<const double> v, std::span<double> out) {
  detail::require(w.rows() == v.size() && w.cols() == out.size(), "gemv_t: shape mismatch");
  for (std::size_t r = 0; r < w.rows(); ++r) {
    if (v[r] != 0.0) axpy(v[r], w.row(r), out);
  }
}

// G += a b^T
inline void outer_add(Matrix& g, std::span<const double> a, std::span<const double> b) {
  detail::require(g.rows() == a.size() && g.cols() == b.size(), "outer: shape mismatch");
  for (std::size_t r = 0; r < g.rows(); ++r) {
    if (a[r] != 0.0) axpy(a[r], b, g.row(r));
  }
}

inline double sigmoid(double x) {
  if (x >= 0.0) return 1.0 / (1.0 + std::exp(-x));
  const double e = std::exp(x);
  return e / (1.0 + e);
}

inline double squared_norm(std::span<const double> v) { return dot(v, v); }

inline double squared_distance(std::span<const double> a, std::span<const double> b) {
  detail::require(a.size() == b.size(), "squared_distance: length mismatch");
  double s = 0.0;
  for (std::size_t i = 0; i < a.size(); ++i) {
    const double d = a[i] - b[i];
    s += d * d;
  }
  return s;
}

inline bool all_finite(std::span<const double> v) {
  return std::all_of(v.begin(), v.end(), [](double x) { return std::isfinite(x); });
}

// Max-subtracted softmax of one row.
inline Vector softmax_row(std::span<const double> v) {
  if (v.empty()) throw DimensionError("softmax_row: empty vector");
  const double mx = *std::max_element(v.begin(), v.end());
  Vector out(v.size());
  double sum = 0.0;
  for (std::size_t i = 0; i < v.size(); ++i) {
    out[i] = std::exp(v[i] - mx);
    sum += out[i];
  }
  for (double& x : out) x /= sum;
  return out;
}

// Gradient w.r.t. the logits given the softmax output p and dL/dp.
inline Vector softmax_row_backward(std::span<const double> p, std::span<const double> dp) {
  detail::require(p.size() == dp.size(), "softmax_row_backward: length mismatch");
  const double inner = dot(p, dp);
  Vector dz(p.size());
  for (std::size_t i = 0; i < p.size(); ++i) dz[i] = p[i] * (dp[i] - inner);
  return dz;
}

// ---------------------------------------------------------------------------
// Parameter sets
//
// A parameter set is any type exposing
//   template <class F> void for_each_param(F&& f) [const]
// which calls f(name, span) for each array in a fixed order. Gradients use the
// same type, so flatten/unflatten line up one-to-one.
// ---------------------------------------------------------------------------

template <class P>
std::size_t param_count(const P& p) {
  std::size_t n = 0;
  p.for_each_param([&](const std::string&, std::span<const double> s) { n += s.size(); });
  return n;
}

template <class P>
Vector flatten(const P& p) {
  Vector out;
  out.reserve(param_count(p));
  p.for_each_param(
      [&](const std::string&, std::span<const double> s) { out.insert(out.end(), s.begin(), s.end()); });
  return out;
}

template <class P>
void unflatten(P& p, std::span<const double> flat) {
  if (flat.size() != param_count(p)) throw DimensionError("unflatten: parameter count mismatch");
  std::size_t off = 0;
  p.for_each_param([&](const std::string&, std::span<double> s) {
    std::copy_n(flat.begin() + static_cast<std::ptrdiff_t>(off), s.size(), s.begin());
    off += s.size();
  });
}

template <class P>
P zeros_like(const P& p) {
  P z = p;
  z.for_each_param([](const std::string&, std::span<double> s) { std::fill(s.begin(), s.end(), 0.0); });
  return z;
}

template <class P>
bool params_finite(const P& p) {
  bool ok = true;
  p.for_each_param([&](const std::string&, std::span<const double> s) { ok = ok && all_finite(s); });
  return ok;
}

// Per-scalar trainable flags; arrays whose name satisfies `frozen` get 0.
template <class P, class Pred>
std::vector<std::uint8_t> trainable_mask(const P& p, Pred frozen) {
  std::vector<std::uint8_t> mask;
  p.for_each_param([&](const std::string& name, std::span<const double> s) {
    mask.insert(mask.end(), s.size(), frozen(name) ? 0 : 1);
  });
  return mask;
}

// ---------------------------------------------------------------------------
// LSTM cell
// ---------------------------------------------------------------------------

// Gate rows are stacked as [input; forget; cell; output], each hidden_dim tall.
struct LstmParams {
  enum Gate : std::size_t { kInput = 0, kForget = 1, kCell = 2, kOutput = 3 };

  std::size_t input_dim = 0;
  std::size_t hidden_dim = 0;
  Matrix W;  // 4H x I
  Matrix U;  // 4H x H
  Vector b;  // 4H

  LstmParams() = default;
  LstmParams(std::size_t input, std::size_t hidden)
      : input_dim(input), hidden_dim(hidden), W(4 * hidden, input), U(4 * hidden, hidden), b(4 * hidden, 0.0) {}

  static LstmParams xavier(std::size_t input, std::size_t hidden, Rng& rng) {
    LstmParams p(input, hidden);
    xavier_uniform(p.W, rng);
    xavier_uniform(p.U, rng);
    for (std::size_t k = 0; k < hidden; ++k) p.b[kForget * hidden + k] = 1.0;
    return p;
  }

  std::span<double> gate_bias(Gate g) { return {b.data() + g * hidden_dim, hidden_dim}; }

  template <class F>
  void for_each_param(F&& f) {
    f(std::string("W"), W.values());
    f(std::string("U"), U.values());
    f(std::string("b"), std::span<double>(b));
  }
  template <class F>
  void for_each_param(F&& f) const {
    f(std::string("W"), W.values());
    f(std::string("U"), U.values());
    f(std::string("b"), std::span<const double>(b));
  }

  bool operator==(const LstmParams&) const = default;
};

// Everything the backward pass needs from one forward step.
struct LstmCache {
  Vector x, h_prev, c_prev;
  Vector gates;  // activated i, f, g, o
  Vector c, tanh_c, h;

  bool empty() const noexcept { return gates.empty(); }
};

inline LstmCache lstm_cell_forward(const LstmParams& p, std::span<const double> x, std::span<const double> h,
                                   std::span<const double> c) {
  const std::size_t H = p.hidden_dim;
  if (x.size() != p.input_dim || h.size() != H || c.size() != H) {
    throw DimensionError("lstm_cell_forward: expected x[" + std::to_string(p.input_dim) + "], h/c[" +
                         std::to_string(H) + "], got x[" + std::to_string(x.size()) + "], h[" +
                         std::to_string(h.size()) + "], c[" + std::to_string(c.size()) + "]");
  }
  LstmCache k;
  k.x.assign(x.begin(), x.end());
  k.h_prev.assign(h.begin(), h.end());
  k.c_prev.assign(c.begin(), c.end());
  k.gates = p.b;
  gemv_add(p.W, x, k.gates);
  gemv_add(p.U, h, k.gates);
  for (std::size_t r = 0; r < 4 * H; ++r) {
    k.gates[r] = (r / H == LstmParams::kCell) ? std::tanh(k.gates[r]) : sigmoid(k.gates[r]);
  }
  k.c.resize(H);
  k.tanh_c.resize(H);
  k.h.resize(H);
  for (std::size_t j = 0; j < H; ++j) {
    const double i = k.gates[j], f = k.gates[H + j], g = k.gates[2 * H + j], o = k.gates[3 * H + j];
    k.c[j] = f * c[j] + i * g;
    k.tanh_c[j] = std::tanh(k.c[j]);
    k.h[j] = o * k.tanh_c[j];
  }
  return k;
}

struct LstmInputGrads {
  Vector dx, dh_prev, dc_prev;
};

// Accumulates parameter gradients into `grads`; returns gradients w.r.t. the
// step inputs. dh / dc are the total upstream gradients on h' and c'.
inline LstmInputGrads lstm_cell_backward(const LstmParams& p, const LstmCache& k, std::span<const double> dh,
                                         std::span<const double> dc, LstmParams& grads) {
  if (k.empty()) throw UsageError("lstm_cell_backward: missing forward cache");
  const std::size_t H = p.hidden_dim;
  detail::require(dh.size() == H && dc.size() == H, "lstm_cell_backward: upstream gradient shape");
  Vector da(4 * H);
  LstmInputGrads out{Vector(p.input_dim, 0.0), Vector(H, 0.0), Vector(H, 0.0)};
  for (std::size_t j = 0; j < H; ++j) {
    const double i = k.gates[j], f = k.gates[H + j], g = k.gates[2 * H + j], o = k.gates[3 * H + j];
    const double tc = k.tanh_c[j];
    const double dct = dc[j] + dh[j] * o * (1.0 - tc * tc);
    da[j] = dct * g * i * (1.0 - i);
    da[H + j] = dct * k.c_prev[j] * f * (1.0 - f);
    da[2 * H + j] = dct * i * (1.0 - g * g);
    da[3 * H + j] = dh[j] * tc * o * (1.0 - o);
    out.dc_prev[j] = dct * f;
  }
  outer_add(grads.W, da, k.x);
  outer_add(grads.U, da, k.h_prev);
  axpy(1.0, da, grads.b);
  gemv_t_add(p.W, da, out.dx);
  gemv_t_add(p.U, da, out.dh_prev);
  return out;
}

// ---------------------------------------------------------------------------
// Dense layer y = W x + b
// ---------------------------------------------------------------------------

struct Dense {
  Matrix W;
  Vector b;

  Dense() = default;
  Dense(std::size_t out, std::size_t in) : W(out, in), b(out, 0.0) {}

  static Dense xavier(std::size_t out, std::size_t in, Rng& rng) {
    Dense d(out, in);
    xavier_uniform(d.W, rng);
    return d;
  }

  std::size_t in_dim() const noexcept { return W.cols(); }
  std::size_t out_dim() const noexcept { return W.rows(); }

  Vector forward(std::span<const double> x) const {
    Vector y = b;
    gemv_add(W, x, y);
    return y;
  }

  // Accumulates into grads; returns dL/dx.
  Vector backward(std::span<const double> x, std::span<const double> dy, Dense& grads) const {
    outer_add(grads.W, dy, x);
    axpy(1.0, dy, grads.b);
    Vector dx(in_dim(), 0.0);
    gemv_t_add(W, dy, dx);
    return dx;
  }

  template <class F>
  void for_each_param(F&& f) {
    f(std::string("W"), W.values());
    f(std::string("b"), std::span<double>(b));
  }
  template <class F>
  void for_each_param(F&& f) const {
    f(std::string("W"), W.values());
    f(std::string("b"), std::span<const double>(b));
  }

  bool operator==(const Dense&) const = default;
};

// Forwards a sub-parameter-set's arrays with a "prefix." name.
template <class Sub, class F>
void visit_prefixed(Sub& sub, const char* prefix, F& f) {
  sub.for_each_param([&](const std::string& name, auto s) { f(std::string(prefix) + "." + name, s); });
}

// ---------------------------------------------------------------------------
// Adam
// ---------------------------------------------------------------------------

struct AdamConfig {
  double lr = 0.004;
  double beta1 = 0.9;
  double beta2 = 0.999;
  double eps = 1e-8;
};

struct AdamState {
  AdamConfig config;
  Vector m;
  Vector v;
  std::uint64_t step = 0;
  // Empty means every scalar is trainable.
  std::vector<std::uint8_t> trainable;
};

inline AdamState make_adam_state(std::size_t n, AdamConfig config, std::vector<std::uint8_t> trainable = {}) {
  if (!trainable.empty() && trainable.size() != n) throw DimensionError("adam: trainable mask length");
  return AdamState{config, Vector(n, 0.0), Vector(n, 0.0), 0, std::move(trainable)};
}

struct AdamUpdate {
  Vector params;
  AdamState state;
};

// Bias-corrected Adam. Frozen scalars keep both their value and moments.
inline AdamUpdate adam_step(std::span<const double> params, std::span<const double> grads, AdamState state) {
  const std::size_t n = params.size();
  if (grads.size() != n || state.m.size() != n || state.v.size() != n) {
    throw DimensionError("adam_step: params/grads/state length mismatch");
  }
  const AdamConfig& c = state.config;
  state.step += 1;
  const double t = static_cast<double>(state.step);
  const double bc1 = 1.0 - std::pow(c.beta1, t);
  const double bc2 = 1.0 - std::pow(c.beta2, t);
  AdamUpdate out{Vector(params.begin(), params.end()), std::move(state)};
  AdamState& s = out.state;
  for (std::size_t i = 0; i < n; ++i) {
    if (!s.trainable.empty() && !s.trainable[i]) continue;
    const double g = grads[i];
    s.m[i] = c.beta1 * s.m[i] + (1.0 - c.beta1) * g;
    s.v[i] = c.beta2 * s.v[i] + (1.0 - c.beta2) * g * g;
    const double mhat = s.m[i] / bc1;
    const double vhat = s.v[i] / bc2;
    out.params[i] -= c.lr * mhat / (std::sqrt(vhat) + c.eps);
  }
  return out;
}

// Rescales g in place so its L2 norm is at most max_norm; returns the norm
// before clipping.
inline double clip_global_norm(std::span<double> g, double max_norm) {
  const double norm = std::sqrt(squared_norm(g));
  if (norm > max_norm && norm > 0.0) {
    const double s = max_norm / norm;
    for (double& x : g) x *= s;
  }
  return norm;
}

// ---------------------------------------------------------------------------
// Gradient checking
// ---------------------------------------------------------------------------

struct GradCheckReport {
  double max_rel_error = 0.0;
  std::size_t worst_index = 0;
  double analytic = 0.0;
  double numeric = 0.0;
  std::size_t checked = 0;
  bool passed = true;
};

using LossAndGrad = std::function<std::pair<double, Vector>(std::span<const double>)>;

// Relative error is |a - n| / max(|a|, |n|, abs_floor); the floor keeps
// gradients that are zero up to rounding from reporting spurious failures.
inline GradCheckReport grad_check(const LossAndGrad& fn, std::span<const double> params, double step = 1e-5,
                                  double tolerance = 1e-4, double abs_floor = 1e-6) {
  Vector p(params.begin(), params.end());
  const Vector analytic = fn(p).second;
  if (analytic.size() != p.size()) throw DimensionError("grad_check: gradient length mismatch");
  GradCheckReport rep;
  for (std::size_t i = 0; i < p.size(); ++i) {
    const double orig = p[i];
    p[i] = orig + step;
    const double lp = fn(p).first;
    p[i] = orig - step;
    const double lm = fn(p).first;
    p[i] = orig;
    const double numeric = (lp - lm) / (2.0 * step);
    const double denom = std::max({std::abs(analytic[i]), std::abs(numeric), abs_floor});
    const double rel = std::abs(analytic[i] - numeric) / denom;
    if (rel > rep.max_rel_error || !std::isfinite(rel)) {
      rep.max_rel_error = std::isfinite(rel) ? rel : std::numeric_limits<double>::infinity();
      rep.worst_index = i;
      rep.analytic = analytic[i];
      rep.numeric = numeric;
    }
    ++rep.checked;
  }
  rep.passed = rep.max_rel_error < tolerance;
  return rep;
}

}  // namespace dssbd
