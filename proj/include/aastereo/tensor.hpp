#pragma once

#include <cstddef>
#include <functional>
#include <initializer_list>
#include <random>
#include <span>
#include <string>
#include <vector>

namespace aastereo {

using Shape = std::vector<std::size_t>;

std::string shape_string(const Shape& shape);
std::size_t shape_numel(const Shape& shape);

// Dense row-major array of doubles. Every extent is positive; a scalar is
// represented with shape {1}. A default-constructed tensor is "empty" and is
// used as the "no value" marker (e.g. an absent gradient).
class Tensor {
 public:
  Tensor() = default;
  explicit Tensor(Shape shape, double fill = 0.0);
  Tensor(Shape shape, std::vector<double> values);

  static Tensor scalar(double value) { return Tensor({1}, value); }
  static Tensor zeros_like(const Tensor& other) { return Tensor(other.shape_); }

  const Shape& shape() const { return shape_; }
  std::size_t rank() const { return shape_.size(); }
  std::size_t dim(std::size_t axis) const { return shape_.at(axis); }
  std::size_t size() const { return data_.size(); }
  bool empty() const { return shape_.empty(); }

  std::span<double> data() { return data_; }
  std::span<const double> data() const { return data_; }
  const std::vector<double>& values() const { return data_; }

  double& operator[](std::size_t i) { return data_[i]; }
  double operator[](std::size_t i) const { return data_[i]; }

  template <typename... Index>
  double& operator()(Index... index) {
    return data_[offset({static_cast<std::size_t>(index)...})];
  }
  template <typename... Index>
  double operator()(Index... index) const {
    return data_[offset({static_cast<std::size_t>(index)...})];
  }

  // Returns the value as a scalar; the tensor must hold exactly one element.
  double item() const;

  // Same data viewed under a new shape with equal element count.
  Tensor reshaped(Shape shape) const;

  void fill(double value);
  Tensor& operator+=(const Tensor& other);
  Tensor& operator*=(double factor);

  bool all_finite() const;
  bool operator==(const Tensor& other) const = default;

 private:
  std::size_t offset(std::initializer_list<std::size_t> index) const;

  Shape shape_;
  std::vector<double> data_;
};

Tensor operator+(Tensor lhs, const Tensor& rhs);
Tensor operator*(Tensor lhs, double factor);

double dot(const Tensor& a, const Tensor& b);
double max_abs(const Tensor& t);
double max_abs_diff(const Tensor& a, const Tensor& b);

// Throws ShapeError mentioning `op` when shapes differ.
void require_same_shape(const char* op, const Tensor& a, const Tensor& b);
void require_rank(const char* op, const Tensor& t, std::size_t rank);

Tensor random_uniform(const Shape& shape, double lo, double hi, std::mt19937_64& rng);
Tensor random_normal(const Shape& shape, double stddev, std::mt19937_64& rng);

// Number of worker threads used by parallel kernels. Read once from the
// AASTEREO_NUM_THREADS environment variable; defaults to 1.
std::size_t worker_count();

// Runs body(i) for i in [0, n). Each index is visited by exactly one worker,
// so kernels that write disjoint outputs per index stay bitwise
// deterministic regardless of the thread count.
void parallel_for(std::size_t n, const std::function<void(std::size_t)>& body);

}  // namespace aastereo
