#include "memeclip/numerics.hpp"

#include <algorithm>
#include <cmath>
#include <cstring>
#include <string>

#include "clones.hpp"
#include "memeclip/error.hpp"

namespace memeclip {

namespace {

// Four lanes = the four fixed partial sums of dot_kernel.
typedef double Lanes __attribute__((vector_size(32)));

inline Lanes load(const double* p) noexcept {
  Lanes v;
  std::memcpy(&v, p, sizeof v);
  return v;
}

inline double finish(Lanes s) noexcept { return (s[0] + s[1]) + (s[2] + s[3]); }

// Four fixed partial sums: vectorizes without reassociation flags and the
// summation order (hence the result) stays the same on every call.
inline double dot_kernel(const double* __restrict a, const double* __restrict b, std::size_t n) noexcept {
  Lanes s = {0.0, 0.0, 0.0, 0.0};
  std::size_t i = 0;
  for (; i + 4 <= n; i += 4) s += load(a + i) * load(b + i);
  for (; i < n; ++i) s[0] += a[i] * b[i];
  return finish(s);
}

// y += g * x
inline void axpy(double g, const double* __restrict x, double* __restrict y, std::size_t n) noexcept {
  for (std::size_t j = 0; j < n; ++j) y[j] += g * x[j];
}

// y += g[0] x[0] + g[1] x[1] + ..., added one source at a time (so rounding
// matches repeated axpy) but with y kept in registers across four sources.
inline void axpy_many(const double* gs, const double* const* xs, std::size_t count, double* __restrict y,
                      std::size_t n) noexcept {
  std::size_t k = 0;
  for (; k + 4 <= count; k += 4) {
    const double g0 = gs[k], g1 = gs[k + 1], g2 = gs[k + 2], g3 = gs[k + 3];
    const double* __restrict x0 = xs[k];
    const double* __restrict x1 = xs[k + 1];
    const double* __restrict x2 = xs[k + 2];
    const double* __restrict x3 = xs[k + 3];
    for (std::size_t j = 0; j < n; ++j) y[j] = (((y[j] + g0 * x0[j]) + g1 * x1[j]) + g2 * x2[j]) + g3 * x3[j];
  }
  for (; k < count; ++k) axpy(gs[k], xs[k], y, n);
}

// Four dot_kernel results sharing the loads of `w`; each lane sums in the
// same order as dot_kernel.
inline void dot4(const double* __restrict w, const double* const* xs, std::size_t n, double* out) noexcept {
  Lanes s0 = {0.0, 0.0, 0.0, 0.0}, s1 = s0, s2 = s0, s3 = s0;
  std::size_t i = 0;
  for (; i + 4 <= n; i += 4) {
    const Lanes wv = load(w + i);
    s0 += wv * load(xs[0] + i);
    s1 += wv * load(xs[1] + i);
    s2 += wv * load(xs[2] + i);
    s3 += wv * load(xs[3] + i);
  }
  for (; i < n; ++i) {
    s0[0] += w[i] * xs[0][i];
    s1[0] += w[i] * xs[1][i];
    s2[0] += w[i] * xs[2][i];
    s3[0] += w[i] * xs[3][i];
  }
  out[0] = finish(s0);
  out[1] = finish(s1);
  out[2] = finish(s2);
  out[3] = finish(s3);
}

std::string shape(std::size_t r, std::size_t c) { return std::to_string(r) + "x" + std::to_string(c); }

}  // namespace

DenseMatrix::DenseMatrix(std::size_t rows, std::size_t cols, double fill)
    : rows_(rows), cols_(cols), data_(rows * cols, fill) {}

DenseMatrix::DenseMatrix(std::size_t rows, std::size_t cols, std::vector<double> data)
    : rows_(rows), cols_(cols), data_(std::move(data)) {
  if (data_.size() != rows * cols) fail(ErrorCode::dimension, "matrix data does not match shape " + shape(rows, cols));
}

DenseMatrix DenseMatrix::from_rows(const std::vector<std::vector<double>>& rows) {
  const std::size_t cols = rows.empty() ? 0 : rows.front().size();
  std::vector<double> data;
  data.reserve(rows.size() * cols);
  for (const auto& r : rows) {
    if (r.size() != cols) fail(ErrorCode::dimension, "ragged matrix rows");
    data.insert(data.end(), r.begin(), r.end());
  }
  return DenseMatrix(rows.size(), cols, std::move(data));
}

MEMECLIP_HOT double dot(std::span<const double> a, std::span<const double> b) noexcept {
  return dot_kernel(a.data(), b.data(), a.size());
}

double squared_norm(std::span<const double> a) noexcept { return dot(a, a); }

bool all_finite(std::span<const double> v) noexcept {
  return std::all_of(v.begin(), v.end(), [](double x) { return std::isfinite(x); });
}

Vector affine_forward(std::span<const double> x, const DenseMatrix& weight, std::span<const double> bias) {
  if (weight.cols() != x.size() || weight.rows() != bias.size()) {
    fail(ErrorCode::dimension, "affine: weight " + shape(weight.rows(), weight.cols()) + ", input " +
                                   std::to_string(x.size()) + ", bias " + std::to_string(bias.size()));
  }
  Vector out(weight.rows());
  for (std::size_t i = 0; i < out.size(); ++i) out[i] = dot(weight.row(i), x) + bias[i];
  return out;
}

Vector affine_backward(std::span<const double> x, const DenseMatrix& weight, std::span<const double> dout,
                       DenseMatrix& dweight, std::span<double> dbias, bool want_dx) {
  if (weight.cols() != x.size() || weight.rows() != dout.size() || dweight.rows() != weight.rows() ||
      dweight.cols() != weight.cols() || dbias.size() != dout.size()) {
    fail(ErrorCode::dimension, "affine_backward: shape mismatch");
  }
  Vector dx(want_dx ? x.size() : 0, 0.0);
  for (std::size_t i = 0; i < dout.size(); ++i) {
    const double g = dout[i];
    dbias[i] += g;
    if (g == 0.0) continue;
    auto dw = dweight.row(i);
    for (std::size_t j = 0; j < x.size(); ++j) dw[j] += g * x[j];
    if (want_dx) {
      const auto w = weight.row(i);
      for (std::size_t j = 0; j < x.size(); ++j) dx[j] += g * w[j];
    }
  }
  return dx;
}

MEMECLIP_HOT std::vector<Vector> affine_forward_batch(const Batch& xs, const DenseMatrix& weight, std::span<const double> bias) {
  if (weight.rows() != bias.size()) fail(ErrorCode::dimension, "affine: weight/bias mismatch");
  for (const auto& x : xs) {
    if (x.size() != weight.cols()) {
      fail(ErrorCode::dimension, "affine: weight " + shape(weight.rows(), weight.cols()) + ", input " +
                                     std::to_string(x.size()));
    }
  }
  std::vector<Vector> out(xs.size(), Vector(weight.rows()));
  const std::size_t n = weight.cols();
  for (std::size_t i = 0; i < weight.rows(); ++i) {
    const double* w = weight.row(i).data();
    std::size_t b = 0;
    for (; b + 4 <= xs.size(); b += 4) {
      const double* group[4] = {xs[b].data(), xs[b + 1].data(), xs[b + 2].data(), xs[b + 3].data()};
      double d[4];
      dot4(w, group, n, d);
      for (int k = 0; k < 4; ++k) out[b + static_cast<std::size_t>(k)][i] = d[k] + bias[i];
    }
    for (; b < xs.size(); ++b) out[b][i] = dot_kernel(w, xs[b].data(), n) + bias[i];
  }
  return out;
}

MEMECLIP_HOT std::vector<Vector> affine_backward_batch(const Batch& xs, const DenseMatrix& weight, const Batch& douts,
                                          DenseMatrix& dweight, std::span<double> dbias, bool want_dx) {
  if (xs.size() != douts.size() || dweight.rows() != weight.rows() || dweight.cols() != weight.cols() ||
      dbias.size() != weight.rows()) {
    fail(ErrorCode::dimension, "affine_backward: shape mismatch");
  }
  for (std::size_t b = 0; b < xs.size(); ++b) {
    if (xs[b].size() != weight.cols() || douts[b].size() != weight.rows()) {
      fail(ErrorCode::dimension, "affine_backward: shape mismatch");
    }
  }
  const std::size_t cols = weight.cols();
  std::vector<Vector> dx(xs.size(), Vector(want_dx ? cols : 0, 0.0));
  for (std::size_t i = 0; i < weight.rows(); ++i) {
    for (const auto& d : douts) dbias[i] += d[i];
  }
  // Zero upstream entries are skipped, as in affine_backward.
  std::vector<double> gs;
  std::vector<const double*> srcs;
  for (std::size_t i = 0; i < weight.rows(); ++i) {
    gs.clear();
    srcs.clear();
    for (std::size_t b = 0; b < xs.size(); ++b) {
      if (douts[b][i] == 0.0) continue;
      gs.push_back(douts[b][i]);
      srcs.push_back(xs[b].data());
    }
    axpy_many(gs.data(), srcs.data(), gs.size(), dweight.row(i).data(), cols);
  }
  if (want_dx) {
    constexpr std::size_t kRows = 8;
    for (std::size_t i0 = 0; i0 < weight.rows(); i0 += kRows) {
      const std::size_t i1 = std::min(weight.rows(), i0 + kRows);
      for (std::size_t b = 0; b < xs.size(); ++b) {
        gs.clear();
        srcs.clear();
        for (std::size_t i = i0; i < i1; ++i) {
          if (douts[b][i] == 0.0) continue;
          gs.push_back(douts[b][i]);
          srcs.push_back(weight.row(i).data());
        }
        axpy_many(gs.data(), srcs.data(), gs.size(), dx[b].data(), cols);
      }
    }
  }
  return dx;
}

Vector relu(std::span<const double> x) {
  Vector out(x.size());
  std::transform(x.begin(), x.end(), out.begin(), [](double v) { return v > 0.0 ? v : 0.0; });
  return out;
}

Vector relu_backward(std::span<const double> x, std::span<const double> dout) {
  if (x.size() != dout.size()) fail(ErrorCode::dimension, "relu_backward: shape mismatch");
  Vector dx(x.size());
  for (std::size_t i = 0; i < x.size(); ++i) dx[i] = x[i] > 0.0 ? dout[i] : 0.0;
  return dx;
}

Vector cosine_logits(std::span<const double> f, const DenseMatrix& weight, double sigma, double eps) {
  if (weight.cols() != f.size()) {
    fail(ErrorCode::dimension, "cosine: weight " + shape(weight.rows(), weight.cols()) + ", input " +
                                   std::to_string(f.size()));
  }
  const double eps2 = eps * eps;
  const double ff = std::max(squared_norm(f), eps2);
  Vector z(weight.rows());
  for (std::size_t k = 0; k < z.size(); ++k) {
    const double d = dot(weight.row(k), f);
    if (d == 0.0) {
      z[k] = 0.0;
      continue;
    }
    const double ww = std::max(squared_norm(weight.row(k)), eps2);
    z[k] = std::copysign(sigma * std::sqrt((d * d) / (ww * ff)), d);
  }
  return z;
}

Vector cosine_backward(std::span<const double> f, const DenseMatrix& weight, double sigma, double eps,
                       std::span<const double> dlogits, DenseMatrix& dweight) {
  if (weight.cols() != f.size() || weight.rows() != dlogits.size() || dweight.rows() != weight.rows() ||
      dweight.cols() != weight.cols()) {
    fail(ErrorCode::dimension, "cosine_backward: shape mismatch");
  }
  const double f_sq = squared_norm(f);
  const double f_norm = std::sqrt(f_sq);
  // The norm clamps are constant below eps, so they contribute no gradient there.
  const bool f_clamped = f_norm <= eps;
  const double b = f_clamped ? eps : f_norm;

  Vector df(f.size(), 0.0);
  for (std::size_t k = 0; k < weight.rows(); ++k) {
    const double g = dlogits[k];
    if (g == 0.0) continue;
    const auto w = weight.row(k);
    const double w_norm = std::sqrt(squared_norm(w));
    const bool w_clamped = w_norm <= eps;
    const double a = w_clamped ? eps : w_norm;
    const double d = dot(w, f);
    const double scale = g * sigma / (a * b);

    const double f_coef = f_clamped ? 0.0 : d / (b * b);
    for (std::size_t j = 0; j < f.size(); ++j) df[j] += scale * (w[j] - f_coef * f[j]);

    const double w_coef = w_clamped ? 0.0 : d / (a * a);
    auto dw = dweight.row(k);
    for (std::size_t j = 0; j < f.size(); ++j) dw[j] += scale * (f[j] - w_coef * w[j]);
  }
  return df;
}

Vector softmax(std::span<const double> logits) {
  Vector p(logits.size());
  if (logits.empty()) return p;
  const double shift = *std::max_element(logits.begin(), logits.end());
  double total = 0.0;
  for (std::size_t i = 0; i < p.size(); ++i) {
    p[i] = std::exp(logits[i] - shift);
    total += p[i];
  }
  for (auto& v : p) v /= total;
  return p;
}

LossAndGrad softmax_ce_loss(std::span<const double> logits, int label) {
  if (label < 0 || static_cast<std::size_t>(label) >= logits.size()) {
    fail(ErrorCode::index, "label " + std::to_string(label) + " out of range for " + std::to_string(logits.size()) +
                               " logits");
  }
  const double shift = *std::max_element(logits.begin(), logits.end());
  double total = 0.0;
  for (double z : logits) total += std::exp(z - shift);
  const double log_sum = shift + std::log(total);

  LossAndGrad out;
  out.loss = std::max(0.0, log_sum - logits[static_cast<std::size_t>(label)]);
  out.dlogits.resize(logits.size());
  for (std::size_t i = 0; i < logits.size(); ++i) out.dlogits[i] = std::exp(logits[i] - log_sum);
  out.dlogits[static_cast<std::size_t>(label)] -= 1.0;
  return out;
}

Vector finite_diff_grad(const std::function<double(std::span<const double>)>& loss_fn,
                        std::span<const double> params, double h) {
  Vector p(params.begin(), params.end());
  Vector grad(p.size());
  for (std::size_t i = 0; i < p.size(); ++i) {
    const double orig = p[i];
    p[i] = orig + h;
    const double up = loss_fn(p);
    p[i] = orig - h;
    const double down = loss_fn(p);
    p[i] = orig;
    grad[i] = (up - down) / (2.0 * h);
  }
  return grad;
}

}  // namespace memeclip
