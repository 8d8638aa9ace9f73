#pragma once

#include <cmath>
#include <cstddef>
#include <initializer_list>
#include <numeric>
#include <stdexcept>
#include <string>
#include <vector>

namespace lossland {

// Dense row-major array of 64-bit floats with an explicit shape.
// The universal value carrier: inputs, parameters, gradients, loss grids.
struct Tensor {
  std::vector<std::size_t> shape;
  std::vector<double> data;

  Tensor() = default;

  explicit Tensor(std::vector<std::size_t> s, double fill = 0.0)
      : shape(std::move(s)),
        data(std::accumulate(shape.begin(), shape.end(), std::size_t{1},
                             std::multiplies<>()),
             fill) {}

  static Tensor from(std::vector<std::size_t> s, std::vector<double> values) {
    Tensor t;
    t.shape = std::move(s);
    t.data = std::move(values);
    std::size_t n = std::accumulate(t.shape.begin(), t.shape.end(),
                                    std::size_t{1}, std::multiplies<>());
    if (n != t.data.size())
      throw std::invalid_argument("tensor: shape/data length mismatch");
    return t;
  }

  std::size_t numel() const { return data.size(); }
  bool empty() const { return data.empty(); }

  double& operator[](std::size_t i) { return data[i]; }
  double operator[](std::size_t i) const { return data[i]; }

  // Multi-index access; slow, intended for tests and setup code.
  double& at(std::initializer_list<std::size_t> idx) {
    return data[flat_index(idx)];
  }
  double at(std::initializer_list<std::size_t> idx) const {
    return data[flat_index(idx)];
  }

  std::size_t flat_index(std::initializer_list<std::size_t> idx) const {
    if (idx.size() != shape.size())
      throw std::out_of_range("tensor: index rank mismatch");
    std::size_t flat = 0, d = 0;
    for (std::size_t i : idx) {
      if (i >= shape[d]) throw std::out_of_range("tensor: index out of range");
      flat = flat * shape[d] + i;
      ++d;
    }
    return flat;
  }

  bool same_shape(const Tensor& other) const { return shape == other.shape; }

  bool all_finite() const {
    for (double v : data)
      if (!std::isfinite(v)) return false;
    return true;
  }

  void fill(double v) { std::fill(data.begin(), data.end(), v); }
};

inline std::string shape_string(const std::vector<std::size_t>& s) {
  std::string out = "(";
  for (std::size_t i = 0; i < s.size(); ++i) {
    if (i) out += ",";
    out += std::to_string(s[i]);
  }
  out += ")";
  return out;
}

}  // namespace lossland
