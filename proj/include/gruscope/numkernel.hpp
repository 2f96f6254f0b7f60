#pragma once

// Dense vector/matrix arithmetic for the recurrent encoder and the analyses
// built on top of it. Everything is 64-bit; shapes are checked on every
// binary operation and a mismatch throws ShapeError. No broadcasting.

#include <cstddef>
#include <functional>
#include <span>
#include <string>
#include <vector>

namespace gruscope {

using Vector = std::vector<double>;

// Row-major dense matrix.
class Matrix {
 public:
  Matrix() = default;
  Matrix(std::size_t rows, std::size_t cols, double fill = 0.0)
      : rows_(rows), cols_(cols), data_(rows * cols, fill) {}

  static Matrix identity(std::size_t n);

  std::size_t rows() const { return rows_; }
  std::size_t cols() const { return cols_; }
  std::size_t size() const { return data_.size(); }
  bool empty() const { return data_.empty(); }

  double& operator()(std::size_t r, std::size_t c) { return data_[r * cols_ + c]; }
  double operator()(std::size_t r, std::size_t c) const { return data_[r * cols_ + c]; }

  std::span<double> row(std::size_t r) { return {data_.data() + r * cols_, cols_}; }
  std::span<const double> row(std::size_t r) const {
    return {data_.data() + r * cols_, cols_};
  }

  std::span<double> data() { return data_; }
  std::span<const double> data() const { return data_; }

  void fill(double value);

  bool operator==(const Matrix&) const = default;

 private:
  std::size_t rows_ = 0;
  std::size_t cols_ = 0;
  std::vector<double> data_;
};

void require_same_size(std::size_t a, std::size_t b, const char* what);

// m * v
Vector matvec(const Matrix& m, std::span<const double> v);
// m^T * v
Vector matvec_transposed(const Matrix& m, std::span<const double> v);
// m += scale * a b^T
void add_outer(Matrix& m, std::span<const double> a, std::span<const double> b,
               double scale = 1.0);

Vector add(std::span<const double> a, std::span<const double> b);
Vector subtract(std::span<const double> a, std::span<const double> b);
Vector hadamard(std::span<const double> a, std::span<const double> b);
Vector scaled(std::span<const double> a, double s);
// y += alpha * x
void axpy(double alpha, std::span<const double> x, std::span<double> y);

double dot(std::span<const double> a, std::span<const double> b);
double norm(std::span<const double> a);
double max_abs(std::span<const double> a);

Vector sigmoid(std::span<const double> v);
Vector tanh_act(std::span<const double> v);
// Max-subtracted for stability.
Vector softmax(std::span<const double> v);

// Throws NumericError when either input has zero norm.
double cosine_similarity(std::span<const double> a, std::span<const double> b);
// 1 - cosine similarity, clamped to [0, 2].
double cosine_distance(std::span<const double> a, std::span<const double> b);

// Linear-interpolation quantile (type 7) of an ascending-sorted sample.
double quantile_sorted(std::span<const double> sorted, double p);
double median(std::vector<double> values);

// ---- finite-difference gradient checking -------------------------------

struct GradCheckTarget {
  std::string name;
  std::span<double> values;          // perturbed in place, restored after
  std::span<const double> analytic;  // same length as values
};

struct GradCheckEntry {
  std::string name;
  double max_rel_error = 0.0;
  std::size_t worst_index = 0;
  double analytic = 0.0;
  double numeric = 0.0;
};

struct GradCheckReport {
  std::vector<GradCheckEntry> entries;
  double max_rel_error = 0.0;
  double tolerance = 0.0;
  bool passed() const { return max_rel_error < tolerance; }
  std::vector<std::string> flagged() const;
};

// Relative error |a - n| / max(|a|, |n|, floor). The floor keeps
// near-zero gradients from reporting round-off as relative error.
inline constexpr double kGradCheckFloor = 1e-6;
double relative_error(double analytic, double numeric);

// Central differences (f(x+eps) - f(x-eps)) / 2eps for every element of
// every target. loss_fn is evaluated twice at the base point first; a
// differing value throws NumericError (non-deterministic loss).
GradCheckReport grad_check(const std::function<double()>& loss_fn,
                           std::span<const GradCheckTarget> targets,
                           double epsilon, double tolerance);

}  // namespace gruscope
