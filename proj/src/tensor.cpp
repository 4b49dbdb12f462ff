#include "bfvae/tensor.hpp"

#include <algorithm>
#include <cmath>

namespace bfvae {

Tensor2::Tensor2(std::size_t rows, std::size_t cols, std::vector<double> data)
    : rows_(rows), cols_(cols), data_(data.begin(), data.end()) {
  if (data_.size() != rows * cols) {
    throw DimensionError("Tensor2: data length " + std::to_string(data_.size()) + " != " +
                         std::to_string(rows) + "x" + std::to_string(cols));
  }
}

Tensor2 Tensor2::from_rows(std::initializer_list<std::initializer_list<double>> rows) {
  const std::size_t r = rows.size();
  const std::size_t c = r == 0 ? 0 : rows.begin()->size();
  std::vector<double> data;
  data.reserve(r * c);
  for (const auto& row : rows) {
    if (row.size() != c) throw DimensionError("Tensor2::from_rows: ragged rows");
    data.insert(data.end(), row.begin(), row.end());
  }
  return Tensor2(r, c, std::move(data));
}

Tensor2 Tensor2::from_rows(const std::vector<std::vector<double>>& rows) {
  const std::size_t r = rows.size();
  const std::size_t c = r == 0 ? 0 : rows.front().size();
  std::vector<double> data;
  data.reserve(r * c);
  for (const auto& row : rows) {
    if (row.size() != c) throw DimensionError("Tensor2::from_rows: ragged rows");
    data.insert(data.end(), row.begin(), row.end());
  }
  return Tensor2(r, c, std::move(data));
}

std::vector<std::vector<double>> Tensor2::to_rows() const {
  std::vector<std::vector<double>> out(rows_);
  for (std::size_t r = 0; r < rows_; ++r) {
    const auto v = row(r);
    out[r].assign(v.begin(), v.end());
  }
  return out;
}

Tensor2 Tensor2::identity(std::size_t n) {
  Tensor2 t(n, n);
  for (std::size_t i = 0; i < n; ++i) t(i, i) = 1.0;
  return t;
}

Tensor2 Tensor2::from_eigen(const RowMajorMatrix& m) {
  Tensor2 t(static_cast<std::size_t>(m.rows()), static_cast<std::size_t>(m.cols()));
  t.eigen() = m;
  return t;
}

Tensor2 Tensor2::transposed() const {
  Tensor2 t(cols_, rows_);
  for (std::size_t r = 0; r < rows_; ++r)
    for (std::size_t c = 0; c < cols_; ++c) t(c, r) = (*this)(r, c);
  return t;
}

Tensor2 Tensor2::slice_rows(std::size_t begin, std::size_t count) const {
  if (begin + count > rows_) throw DimensionError("Tensor2::slice_rows out of range");
  std::vector<double> d(data_.begin() + static_cast<std::ptrdiff_t>(begin * cols_),
                        data_.begin() + static_cast<std::ptrdiff_t>((begin + count) * cols_));
  return Tensor2(count, cols_, std::move(d));
}

Tensor2 Tensor2::gather_rows(std::span<const std::size_t> indices) const {
  Tensor2 t(indices.size(), cols_);
  for (std::size_t i = 0; i < indices.size(); ++i) {
    if (indices[i] >= rows_) throw DimensionError("Tensor2::gather_rows index out of range");
    std::copy_n(data_.begin() + static_cast<std::ptrdiff_t>(indices[i] * cols_), cols_,
                t.data_.begin() + static_cast<std::ptrdiff_t>(i * cols_));
  }
  return t;
}

Tensor2 Tensor2::slice_cols(std::size_t begin, std::size_t count) const {
  if (begin + count > cols_) throw DimensionError("Tensor2::slice_cols out of range");
  Tensor2 t(rows_, count);
  for (std::size_t r = 0; r < rows_; ++r)
    for (std::size_t c = 0; c < count; ++c) t(r, c) = (*this)(r, begin + c);
  return t;
}

bool Tensor2::all_finite() const noexcept {
  return std::all_of(data_.begin(), data_.end(), [](double v) { return std::isfinite(v); });
}

double Tensor2::max_abs() const noexcept {
  double m = 0.0;
  for (double v : data_) m = std::max(m, std::abs(v));
  return m;
}

double pairwise_sum(std::span<const double> values) {
  constexpr std::size_t kBlock = 8;
  if (values.size() <= kBlock) {
    double s = 0.0;
    for (double v : values) s += v;
    return s;
  }
  const std::size_t half = values.size() / 2;
  return pairwise_sum(values.first(half)) + pairwise_sum(values.subspan(half));
}

}  // namespace bfvae
