#include "attnpool/matrix.hpp"

#include <stdexcept>

namespace attnpool {

std::string shape_of(std::size_t rows, std::size_t cols) {
  return "[" + std::to_string(rows) + "x" + std::to_string(cols) + "]";
}

Matrix::Matrix(std::size_t rows, std::size_t cols, std::vector<double> values)
    : rows_(rows), cols_(cols), data_(std::move(values)) {
  if (data_.size() != rows * cols)
    throw std::invalid_argument("Matrix: " + std::to_string(data_.size()) +
                                " values do not fill shape " + shape_of(rows, cols));
}

Matrix Matrix::identity(std::size_t n) {
  Matrix m(n, n);
  for (std::size_t i = 0; i < n; ++i) m(i, i) = 1.0;
  return m;
}

Matrix Matrix::column(std::vector<double> values) {
  const std::size_t n = values.size();
  return Matrix(n, 1, std::move(values));
}

std::string Matrix::shape_string() const { return shape_of(rows_, cols_); }

void Matrix::fill(double v) {
  for (double& x : data_) x = v;
}

Matrix& Matrix::operator+=(const Matrix& o) {
  if (!same_shape(o))
    throw std::invalid_argument("Matrix +=: shape " + o.shape_string() + " into " + shape_string());
  for (std::size_t i = 0; i < data_.size(); ++i) data_[i] += o.data_[i];
  return *this;
}

}  // namespace attnpool
