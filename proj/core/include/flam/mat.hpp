#pragma once

#include <initializer_list>
#include <utility>
#include <vector>

namespace flam {

// Dense row-major matrix of doubles. The workhorse container for feature
// tokens, attention scores and small geometry systems alike.
class Mat {
 public:
  Mat() = default;
  Mat(int rows, int cols);  // zero-initialized
  Mat(int rows, int cols, std::vector<double> data);
  Mat(std::initializer_list<std::initializer_list<double>> rows);

  static Mat identity(int n);

  int rows() const { return rows_; }
  int cols() const { return cols_; }
  std::size_t size() const { return data_.size(); }

  double& operator()(int r, int c) { return data_[static_cast<std::size_t>(r) * cols_ + c]; }
  double operator()(int r, int c) const { return data_[static_cast<std::size_t>(r) * cols_ + c]; }

  double* row_ptr(int r) { return data_.data() + static_cast<std::size_t>(r) * cols_; }
  const double* row_ptr(int r) const { return data_.data() + static_cast<std::size_t>(r) * cols_; }

  std::vector<double>& data() { return data_; }
  const std::vector<double>& data() const { return data_; }

  bool same_shape(const Mat& o) const { return rows_ == o.rows_ && cols_ == o.cols_; }
  bool all_finite() const;

  Mat transposed() const;

 private:
  int rows_ = 0;
  int cols_ = 0;
  std::vector<double> data_;
};

// a * b. Throws ShapeError on inner-dimension mismatch.
Mat matmul(const Mat& a, const Mat& b);

// a * b^T without materializing the transpose.
Mat matmul_nt(const Mat& a, const Mat& b);

// Row-wise softmax of scale*a, stabilized by per-row max subtraction.
Mat row_softmax(const Mat& a, double scale);

Mat add(const Mat& a, const Mat& b);
Mat sub(const Mat& a, const Mat& b);
Mat scaled(const Mat& a, double s);
Mat hadamard(const Mat& a, const Mat& b);
Mat relu(const Mat& a);

double frobenius_norm(const Mat& a);
double max_abs_diff(const Mat& a, const Mat& b);

struct SymEigen {
  std::vector<double> values;  // ascending
  Mat vectors;                 // column i pairs with values[i]
};

// Eigendecomposition of a symmetric matrix by cyclic Jacobi rotations.
// Intended for the small (<= ~16x16) systems used by the geometry stack.
SymEigen sym_eigen(const Mat& a);

}  // namespace flam
