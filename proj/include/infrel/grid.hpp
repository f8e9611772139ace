#pragma once

#include <cassert>
#include <cstddef>
#include <utility>
#include <vector>

namespace infrel {

// Dense row-major matrix. Columns can be appended/removed, which is how the
// uncollapsed sampler grows and prunes communities.
template <typename T>
class Grid {
 public:
  Grid() = default;
  Grid(int rows, int cols, T fill = T{})
      : rows_(rows), cols_(cols),
        data_(static_cast<std::size_t>(rows) * static_cast<std::size_t>(cols), fill) {}

  int rows() const { return rows_; }
  int cols() const { return cols_; }
  bool empty() const { return data_.empty(); }

  T& operator()(int i, int j) {
    assert(i >= 0 && i < rows_ && j >= 0 && j < cols_);
    return data_[static_cast<std::size_t>(i) * cols_ + j];
  }
  const T& operator()(int i, int j) const {
    assert(i >= 0 && i < rows_ && j >= 0 && j < cols_);
    return data_[static_cast<std::size_t>(i) * cols_ + j];
  }

  T* row(int i) { return data_.data() + static_cast<std::size_t>(i) * cols_; }
  const T* row(int i) const { return data_.data() + static_cast<std::size_t>(i) * cols_; }

  std::vector<T>& raw() { return data_; }
  const std::vector<T>& raw() const { return data_; }

  void fill(T v) { data_.assign(data_.size(), v); }

  void append_col(T fill = T{}) {
    Grid g(rows_, cols_ + 1, fill);
    for (int i = 0; i < rows_; ++i)
      for (int j = 0; j < cols_; ++j) g(i, j) = (*this)(i, j);
    *this = std::move(g);
  }

  void remove_col(int c) {
    assert(c >= 0 && c < cols_);
    Grid g(rows_, cols_ - 1);
    for (int i = 0; i < rows_; ++i) {
      for (int j = 0, t = 0; j < cols_; ++j) {
        if (j == c) continue;
        g(i, t++) = (*this)(i, j);
      }
    }
    *this = std::move(g);
  }

  friend bool operator==(const Grid& a, const Grid& b) {
    return a.rows_ == b.rows_ && a.cols_ == b.cols_ && a.data_ == b.data_;
  }

 private:
  int rows_ = 0;
  int cols_ = 0;
  std::vector<T> data_;
};

}  // namespace infrel
