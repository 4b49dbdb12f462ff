#pragma once

#include <cstddef>
#include <initializer_list>
#include <new>
#include <span>
#include <string>
#include <vector>

#include <Eigen/Dense>

#include "bfvae/error.hpp"

namespace bfvae {

using RowMajorMatrix = Eigen::Matrix<double, Eigen::Dynamic, Eigen::Dynamic, Eigen::RowMajor>;
using MatrixMap = Eigen::Map<RowMajorMatrix>;
using ConstMatrixMap = Eigen::Map<const RowMajorMatrix>;

/// Dense row-major matrix of doubles. Every 2-D quantity in the library
/// (data batches, latent codes, weights, association matrices) is one of these.
/// 64-byte aligned storage, so vectorized kernels see the same layout on every allocation.
template <class T>
struct AlignedAllocator {
  using value_type = T;
  AlignedAllocator() = default;
  template <class U>
  AlignedAllocator(const AlignedAllocator<U>&) noexcept {}
  T* allocate(std::size_t n) {
    const std::size_t bytes = (n * sizeof(T) + 63) / 64 * 64;
    return static_cast<T*>(::operator new(bytes, std::align_val_t{64}));
  }
  void deallocate(T* p, std::size_t) noexcept { ::operator delete(p, std::align_val_t{64}); }
  friend bool operator==(const AlignedAllocator&, const AlignedAllocator&) { return true; }
};

class Tensor2 {
 public:
  Tensor2() = default;
  Tensor2(std::size_t rows, std::size_t cols, double fill = 0.0)
      : rows_(rows), cols_(cols), data_(rows * cols, fill) {}
  Tensor2(std::size_t rows, std::size_t cols, std::vector<double> data);

  /// Builds from nested rows; all rows must have equal length.
  static Tensor2 from_rows(std::initializer_list<std::initializer_list<double>> rows);
  static Tensor2 from_rows(const std::vector<std::vector<double>>& rows);
  std::vector<std::vector<double>> to_rows() const;
  static Tensor2 identity(std::size_t n);
  static Tensor2 from_eigen(const RowMajorMatrix& m);

  std::size_t rows() const noexcept { return rows_; }
  std::size_t cols() const noexcept { return cols_; }
  std::size_t size() const noexcept { return data_.size(); }
  bool empty() const noexcept { return data_.empty(); }

  double& operator()(std::size_t r, std::size_t c) { return data_[r * cols_ + c]; }
  double operator()(std::size_t r, std::size_t c) const { return data_[r * cols_ + c]; }

  std::span<double> data() noexcept { return data_; }
  std::span<const double> data() const noexcept { return data_; }
  std::span<double> row(std::size_t r) { return {data_.data() + r * cols_, cols_}; }
  std::span<const double> row(std::size_t r) const { return {data_.data() + r * cols_, cols_}; }

  MatrixMap eigen() { return {data_.data(), static_cast<Eigen::Index>(rows_), static_cast<Eigen::Index>(cols_)}; }
  ConstMatrixMap eigen() const {
    return {data_.data(), static_cast<Eigen::Index>(rows_), static_cast<Eigen::Index>(cols_)};
  }

  Tensor2 transposed() const;
  /// Rows [begin, begin + count).
  Tensor2 slice_rows(std::size_t begin, std::size_t count) const;
  /// Gathers the given rows in order.
  Tensor2 gather_rows(std::span<const std::size_t> indices) const;
  /// Columns [begin, begin + count).
  Tensor2 slice_cols(std::size_t begin, std::size_t count) const;

  bool all_finite() const noexcept;
  double max_abs() const noexcept;

  friend bool operator==(const Tensor2& a, const Tensor2& b) {
    return a.rows_ == b.rows_ && a.cols_ == b.cols_ && a.data_ == b.data_;
  }

 private:
  std::size_t rows_ = 0;
  std::size_t cols_ = 0;
  std::vector<double, AlignedAllocator<double>> data_;
};

inline void require_same_shape(const Tensor2& a, const Tensor2& b, const char* what) {
  if (a.rows() != b.rows() || a.cols() != b.cols()) {
    throw DimensionError(std::string(what) + ": shape " + std::to_string(a.rows()) + "x" +
                         std::to_string(a.cols()) + " vs " + std::to_string(b.rows()) + "x" +
                         std::to_string(b.cols()));
  }
}

/// Pairwise (cascade) summation; result does not depend on how callers
/// partitioned the work that produced `values`.
double pairwise_sum(std::span<const double> values);

}  // namespace bfvae
