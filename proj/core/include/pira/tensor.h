#pragma once

#include <cstdint>
#include <span>
#include <vector>

#include "pira/rng.h"

namespace pira {

// Dense row-major float32 tensor. The model only needs rank 1 and 2.
class Tensor {
 public:
  Tensor() = default;
  explicit Tensor(std::vector<int> shape);
  Tensor(std::vector<int> shape, std::vector<float> data);

  static Tensor zeros(std::vector<int> shape) { return Tensor(std::move(shape)); }
  static Tensor full(std::vector<int> shape, float v);
  static Tensor scalar(float v) { return Tensor({1}, {v}); }
  static Tensor gaussian(std::vector<int> shape, double stddev, CounterRng& rng);

  const std::vector<int>& shape() const { return shape_; }
  int ndim() const { return static_cast<int>(shape_.size()); }
  int64_t numel() const { return static_cast<int64_t>(data_.size()); }
  bool same_shape(const Tensor& o) const { return shape_ == o.shape_; }

  // 2D / 1D views. rows()/cols() treat a vector as a single row.
  int rows() const { return ndim() == 2 ? shape_[0] : 1; }
  int cols() const { return ndim() == 2 ? shape_[1] : (ndim() == 1 ? shape_[0] : 1); }

  float& operator()(int r, int c) { return data_[static_cast<size_t>(r) * cols() + c]; }
  float operator()(int r, int c) const { return data_[static_cast<size_t>(r) * cols() + c]; }
  float& at(int64_t i) { return data_[static_cast<size_t>(i)]; }
  float at(int64_t i) const { return data_[static_cast<size_t>(i)]; }

  std::span<float> data() { return data_; }
  std::span<const float> data() const { return data_; }

  bool all_finite() const;
  bool bitwise_equal(const Tensor& o) const;

 private:
  std::vector<int> shape_;
  std::vector<float> data_;
};

// Throws NumericError naming `op` if any element is NaN/Inf.
void check_finite(const Tensor& t, const char* op);

}  // namespace pira
