#pragma once

#include <cstdint>
#include <stdexcept>
#include <vector>

namespace pepo {

// Dense row-major (prompt, action) table. Small by construction: desk-scale
// environments have a handful of prompts and at most a few dozen actions.
template <typename T>
class Grid {
 public:
  Grid() = default;
  Grid(int rows, int cols, T fill = T{})
      : rows_(rows), cols_(cols), v_(static_cast<size_t>(rows) * cols, fill) {
    if (rows < 0 || cols < 0) throw std::invalid_argument("Grid: negative shape");
  }

  T& operator()(int r, int c) { return v_[static_cast<size_t>(r) * cols_ + c]; }
  T operator()(int r, int c) const { return v_[static_cast<size_t>(r) * cols_ + c]; }

  int rows() const { return rows_; }
  int cols() const { return cols_; }
  bool empty() const { return v_.empty(); }

  std::vector<T>& data() { return v_; }
  const std::vector<T>& data() const { return v_; }

  friend bool operator==(const Grid& a, const Grid& b) {
    return a.rows_ == b.rows_ && a.cols_ == b.cols_ && a.v_ == b.v_;
  }

 private:
  int rows_ = 0, cols_ = 0;
  std::vector<T> v_;
};

// (prompt, action, action) table, used for pair counts and tie weights.
template <typename T>
class PairGrid {
 public:
  PairGrid() = default;
  PairGrid(int prompts, int actions, T fill = T{})
      : prompts_(prompts),
        actions_(actions),
        v_(static_cast<size_t>(prompts) * actions * actions, fill) {}

  T& operator()(int x, int a, int b) {
    return v_[(static_cast<size_t>(x) * actions_ + a) * actions_ + b];
  }
  T operator()(int x, int a, int b) const {
    return v_[(static_cast<size_t>(x) * actions_ + a) * actions_ + b];
  }

  int prompts() const { return prompts_; }
  int actions() const { return actions_; }

  std::vector<T>& data() { return v_; }
  const std::vector<T>& data() const { return v_; }

  friend bool operator==(const PairGrid& a, const PairGrid& b) {
    return a.prompts_ == b.prompts_ && a.actions_ == b.actions_ && a.v_ == b.v_;
  }

 private:
  int prompts_ = 0, actions_ = 0;
  std::vector<T> v_;
};

using Table = Grid<double>;
using CountGrid = Grid<std::int64_t>;
using PairCountGrid = PairGrid<std::int64_t>;

}  // namespace pepo
