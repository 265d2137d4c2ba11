#include "pira/tensor.h"

#include <cmath>
#include <cstring>

#include "pira/errors.h"

namespace pira {

namespace {
int64_t shape_numel(const std::vector<int>& shape) {
  int64_t n = 1;
  for (int d : shape) {
    if (d < 0) throw DimensionError("negative dimension in tensor shape");
    n *= d;
  }
  return n;
}
}  // namespace

Tensor::Tensor(std::vector<int> shape)
    : shape_(std::move(shape)), data_(static_cast<size_t>(shape_numel(shape_)), 0.0f) {}

Tensor::Tensor(std::vector<int> shape, std::vector<float> data) : shape_(std::move(shape)) {
  if (shape_numel(shape_) != static_cast<int64_t>(data.size())) {
    throw DimensionError("tensor data size does not match shape");
  }
  data_ = std::move(data);
}

Tensor Tensor::full(std::vector<int> shape, float v) {
  Tensor t(std::move(shape));
  for (float& x : t.data_) x = v;
  return t;
}

Tensor Tensor::gaussian(std::vector<int> shape, double stddev, CounterRng& rng) {
  Tensor t(std::move(shape));
  for (float& x : t.data_) x = static_cast<float>(stddev * rng.next_gaussian());
  return t;
}

bool Tensor::all_finite() const {
  for (float x : data_) {
    if (!std::isfinite(x)) return false;
  }
  return true;
}

bool Tensor::bitwise_equal(const Tensor& o) const {
  return shape_ == o.shape_ &&
         std::memcmp(data_.data(), o.data_.data(), data_.size() * sizeof(float)) == 0;
}

void check_finite(const Tensor& t, const char* op) {
  if (!t.all_finite()) {
    throw NumericError(std::string("non-finite value produced by '") + op + "'");
  }
}

}  // namespace pira
