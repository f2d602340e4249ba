#include "flam/mat.hpp"

#include <algorithm>
#include <cmath>
#include <numeric>

#include "flam/errors.hpp"

namespace flam {

Mat::Mat(int rows, int cols) : rows_(rows), cols_(cols) {
  if (rows < 0 || cols < 0) throw ShapeError("negative matrix dimension");
  data_.assign(static_cast<std::size_t>(rows) * cols, 0.0);
}

Mat::Mat(int rows, int cols, std::vector<double> data) : rows_(rows), cols_(cols), data_(std::move(data)) {
  if (data_.size() != static_cast<std::size_t>(rows) * cols)
    throw ShapeError("data length does not match rows*cols");
}

Mat::Mat(std::initializer_list<std::initializer_list<double>> rows) {
  rows_ = static_cast<int>(rows.size());
  cols_ = rows_ ? static_cast<int>(rows.begin()->size()) : 0;
  data_.reserve(static_cast<std::size_t>(rows_) * cols_);
  for (const auto& r : rows) {
    if (static_cast<int>(r.size()) != cols_) throw ShapeError("ragged initializer");
    data_.insert(data_.end(), r.begin(), r.end());
  }
}

Mat Mat::identity(int n) {
  Mat m(n, n);
  for (int i = 0; i < n; ++i) m(i, i) = 1.0;
  return m;
}

bool Mat::all_finite() const {
  for (double v : data_)
    if (!std::isfinite(v)) return false;
  return true;
}

Mat Mat::transposed() const {
  Mat t(cols_, rows_);
  for (int r = 0; r < rows_; ++r)
    for (int c = 0; c < cols_; ++c) t(c, r) = (*this)(r, c);
  return t;
}

Mat matmul(const Mat& a, const Mat& b) {
  if (a.cols() != b.rows()) throw ShapeError("matmul: inner dimensions differ");
  Mat c(a.rows(), b.cols());
  const int n = a.rows(), k = a.cols(), m = b.cols();
  for (int i = 0; i < n; ++i) {
    const double* arow = a.row_ptr(i);
    double* crow = c.row_ptr(i);
    for (int p = 0; p < k; ++p) {
      const double aip = arow[p];
      if (aip == 0.0) continue;
      const double* brow = b.row_ptr(p);
      for (int j = 0; j < m; ++j) crow[j] += aip * brow[j];
    }
  }
  return c;
}

Mat matmul_nt(const Mat& a, const Mat& b) {
  if (a.cols() != b.cols()) throw ShapeError("matmul_nt: column counts differ");
  Mat c(a.rows(), b.rows());
  const int d = a.cols();
  for (int i = 0; i < a.rows(); ++i) {
    const double* arow = a.row_ptr(i);
    double* crow = c.row_ptr(i);
    for (int j = 0; j < b.rows(); ++j) {
      const double* brow = b.row_ptr(j);
      double s = 0.0;
      for (int p = 0; p < d; ++p) s += arow[p] * brow[p];
      crow[j] = s;
    }
  }
  return c;
}

Mat row_softmax(const Mat& a, double scale) {
  Mat out(a.rows(), a.cols());
  for (int i = 0; i < a.rows(); ++i) {
    const double* x = a.row_ptr(i);
    double* y = out.row_ptr(i);
    double m = -HUGE_VAL;
    for (int j = 0; j < a.cols(); ++j) m = std::max(m, scale * x[j]);
    double sum = 0.0;
    for (int j = 0; j < a.cols(); ++j) {
      y[j] = std::exp(scale * x[j] - m);
      sum += y[j];
    }
    const double inv = 1.0 / sum;
    for (int j = 0; j < a.cols(); ++j) y[j] *= inv;
  }
  return out;
}

Mat add(const Mat& a, const Mat& b) {
  if (!a.same_shape(b)) throw ShapeError("add: shape mismatch");
  Mat c = a;
  for (std::size_t i = 0; i < c.size(); ++i) c.data()[i] += b.data()[i];
  return c;
}

Mat sub(const Mat& a, const Mat& b) {
  if (!a.same_shape(b)) throw ShapeError("sub: shape mismatch");
  Mat c = a;
  for (std::size_t i = 0; i < c.size(); ++i) c.data()[i] -= b.data()[i];
  return c;
}

Mat scaled(const Mat& a, double s) {
  Mat c = a;
  for (double& v : c.data()) v *= s;
  return c;
}

Mat hadamard(const Mat& a, const Mat& b) {
  if (!a.same_shape(b)) throw ShapeError("hadamard: shape mismatch");
  Mat c = a;
  for (std::size_t i = 0; i < c.size(); ++i) c.data()[i] *= b.data()[i];
  return c;
}

Mat relu(const Mat& a) {
  Mat c = a;
  for (double& v : c.data()) v = v > 0.0 ? v : 0.0;
  return c;
}

double frobenius_norm(const Mat& a) {
  double s = 0.0;
  for (double v : a.data()) s += v * v;
  return std::sqrt(s);
}

double max_abs_diff(const Mat& a, const Mat& b) {
  if (!a.same_shape(b)) throw ShapeError("max_abs_diff: shape mismatch");
  double m = 0.0;
  for (std::size_t i = 0; i < a.size(); ++i) m = std::max(m, std::abs(a.data()[i] - b.data()[i]));
  return m;
}

SymEigen sym_eigen(const Mat& a_in) {
  if (a_in.rows() != a_in.cols()) throw ShapeError("sym_eigen: matrix not square");
  const int n = a_in.rows();

  // Work on the symmetrized copy; callers guarantee near-symmetry.
  Mat a(n, n);
  for (int i = 0; i < n; ++i)
    for (int j = 0; j < n; ++j) a(i, j) = 0.5 * (a_in(i, j) + a_in(j, i));
  Mat v = Mat::identity(n);

  const double norm = std::max(frobenius_norm(a), 1e-300);
  for (int sweep = 0; sweep < 100; ++sweep) {
    double off = 0.0;
    for (int p = 0; p < n; ++p)
      for (int q = p + 1; q < n; ++q) off += a(p, q) * a(p, q);
    if (std::sqrt(2.0 * off) <= 1e-15 * norm) break;

    for (int p = 0; p < n; ++p) {
      for (int q = p + 1; q < n; ++q) {
        const double apq = a(p, q);
        if (std::abs(apq) <= 1e-300) continue;
        const double theta = (a(q, q) - a(p, p)) / (2.0 * apq);
        const double t = (theta >= 0 ? 1.0 : -1.0) / (std::abs(theta) + std::sqrt(theta * theta + 1.0));
        const double c = 1.0 / std::sqrt(t * t + 1.0);
        const double s = t * c;

        for (int k = 0; k < n; ++k) {
          const double akp = a(k, p), akq = a(k, q);
          a(k, p) = c * akp - s * akq;
          a(k, q) = s * akp + c * akq;
        }
        for (int k = 0; k < n; ++k) {
          const double apk = a(p, k), aqk = a(q, k);
          a(p, k) = c * apk - s * aqk;
          a(q, k) = s * apk + c * aqk;
        }
        for (int k = 0; k < n; ++k) {
          const double vkp = v(k, p), vkq = v(k, q);
          v(k, p) = c * vkp - s * vkq;
          v(k, q) = s * vkp + c * vkq;
        }
      }
    }
  }

  std::vector<int> order(n);
  std::iota(order.begin(), order.end(), 0);
  std::sort(order.begin(), order.end(), [&](int x, int y) { return a(x, x) < a(y, y); });

  SymEigen result;
  result.values.resize(n);
  result.vectors = Mat(n, n);
  for (int i = 0; i < n; ++i) {
    result.values[i] = a(order[i], order[i]);
    for (int k = 0; k < n; ++k) result.vectors(k, i) = v(k, order[i]);
  }
  return result;
}

}  // namespace flam
