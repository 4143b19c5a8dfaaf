#pragma once

// Dense primitives for the classification head. Everything is double
// precision, row-major, and pure.

#include <cstddef>
#include <functional>
#include <span>
#include <vector>

namespace memeclip {

using Vector = std::vector<double>;

class DenseMatrix {
 public:
  DenseMatrix() = default;
  DenseMatrix(std::size_t rows, std::size_t cols, double fill = 0.0);
  DenseMatrix(std::size_t rows, std::size_t cols, std::vector<double> data);
  /// Row-list constructor for small literals in tests and fixtures.
  static DenseMatrix from_rows(const std::vector<std::vector<double>>& rows);

  std::size_t rows() const noexcept { return rows_; }
  std::size_t cols() const noexcept { return cols_; }

  double& operator()(std::size_t r, std::size_t c) noexcept { return data_[r * cols_ + c]; }
  double operator()(std::size_t r, std::size_t c) const noexcept { return data_[r * cols_ + c]; }

  std::span<double> row(std::size_t r) noexcept { return {data_.data() + r * cols_, cols_}; }
  std::span<const double> row(std::size_t r) const noexcept { return {data_.data() + r * cols_, cols_}; }

  std::span<double> data() noexcept { return data_; }
  std::span<const double> data() const noexcept { return data_; }

  bool operator==(const DenseMatrix&) const = default;

 private:
  std::size_t rows_ = 0;
  std::size_t cols_ = 0;
  std::vector<double> data_;
};

inline constexpr double kNormEps = 1e-8;

double dot(std::span<const double> a, std::span<const double> b) noexcept;
double squared_norm(std::span<const double> a) noexcept;
bool all_finite(std::span<const double> v) noexcept;

/// out[i] = sum_j W[i,j] x[j] + b[i]
Vector affine_forward(std::span<const double> x, const DenseMatrix& weight, std::span<const double> bias);

/// Reverse pass of affine_forward. Accumulates into dweight/dbias (so batch
/// gradients can be summed in place) and returns dx when `want_dx`.
Vector affine_backward(std::span<const double> x, const DenseMatrix& weight, std::span<const double> dout,
                       DenseMatrix& dweight, std::span<double> dbias, bool want_dx = true);

using Batch = std::vector<std::span<const double>>;

/// affine_forward over several inputs. Each weight row is read once for the
/// whole batch; results are bitwise equal to per-sample calls.
std::vector<Vector> affine_forward_batch(const Batch& xs, const DenseMatrix& weight, std::span<const double> bias);

/// affine_backward over several samples, accumulating in sample order so the
/// sums match sequential per-sample calls bit for bit.
std::vector<Vector> affine_backward_batch(const Batch& xs, const DenseMatrix& weight, const Batch& douts,
                                          DenseMatrix& dweight, std::span<double> dbias, bool want_dx = true);

Vector relu(std::span<const double> x);
/// dx = dout where the forward input was positive, else 0.
Vector relu_backward(std::span<const double> x, std::span<const double> dout);

/// Z[k] = sigma * (W_k . f) / (max(|W_k|, eps) * max(|f|, eps))
///
/// Evaluated as sigma * sign(W_k . f) * sqrt((W_k . f)^2 / (|W_k|^2 |f|^2)),
/// so the result depends on f only through ratios that scale exactly with f.
Vector cosine_logits(std::span<const double> f, const DenseMatrix& weight, double sigma, double eps = kNormEps);

/// Reverse pass of cosine_logits: accumulates into dweight and returns df.
Vector cosine_backward(std::span<const double> f, const DenseMatrix& weight, double sigma, double eps,
                       std::span<const double> dlogits, DenseMatrix& dweight);

struct LossAndGrad {
  double loss = 0.0;
  Vector dlogits;
};

/// Softmax cross-entropy with max-shift stabilization.
LossAndGrad softmax_ce_loss(std::span<const double> logits, int label);

/// Numerically stable softmax.
Vector softmax(std::span<const double> logits);

/// Central differences (f(p + h e_i) - f(p - h e_i)) / 2h for every coordinate.
Vector finite_diff_grad(const std::function<double(std::span<const double>)>& loss_fn,
                        std::span<const double> params, double h = 1e-5);

}  // namespace memeclip
