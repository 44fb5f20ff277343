#pragma once

#include <Eigen/Dense>
#include <cmath>
#include <cstdint>
#include <initializer_list>
#include <numeric>
#include <stdexcept>
#include <string>
#include <vector>

#include "ahand/rng.hpp"

namespace ahand {

// Dense row-major tensor. Rank is 1..4; most ops treat rank-2 as [rows, cols].
template <typename T>
struct Tensor {
  std::vector<int> shape;
  std::vector<T> data;

  Tensor() = default;
  explicit Tensor(std::vector<int> s) : shape(std::move(s)), data(numel_of(shape), T(0)) {}

  static Tensor zeros(std::vector<int> s) { return Tensor(std::move(s)); }
  static Tensor full(std::vector<int> s, T v) {
    Tensor t(std::move(s));
    std::fill(t.data.begin(), t.data.end(), v);
    return t;
  }
  static Tensor from(std::vector<int> s, std::vector<T> d) {
    Tensor t;
    t.shape = std::move(s);
    t.data = std::move(d);
    if (t.data.size() != static_cast<std::size_t>(numel_of(t.shape)))
      throw std::invalid_argument("Tensor::from: size mismatch");
    return t;
  }

  static int numel_of(const std::vector<int>& s) {
    int n = 1;
    for (int d : s) {
      if (d <= 0) throw std::invalid_argument("Tensor: non-positive dim");
      n *= d;
    }
    return n;
  }

  int numel() const { return static_cast<int>(data.size()); }
  int rank() const { return static_cast<int>(shape.size()); }
  int rows() const { return shape.at(0); }
  int cols() const { return rank() == 1 ? 1 : shape.at(1); }

  T& operator()(int r, int c) { return data[static_cast<std::size_t>(r) * cols() + c]; }
  T operator()(int r, int c) const { return data[static_cast<std::size_t>(r) * cols() + c]; }
  T& operator[](int i) { return data[i]; }
  T operator[](int i) const { return data[i]; }

  bool same_shape(const Tensor& o) const { return shape == o.shape; }

  bool all_finite() const {
    for (T v : data)
      if (!std::isfinite(static_cast<double>(v))) return false;
    return true;
  }

  template <typename U>
  Tensor<U> cast() const {
    Tensor<U> out;
    out.shape = shape;
    out.data.resize(data.size());
    for (std::size_t i = 0; i < data.size(); ++i) out.data[i] = static_cast<U>(data[i]);
    return out;
  }

  using EigenMat = Eigen::Matrix<T, Eigen::Dynamic, Eigen::Dynamic, Eigen::RowMajor>;
  Eigen::Map<EigenMat> mat() { return {data.data(), rows(), cols()}; }
  Eigen::Map<const EigenMat> mat() const { return {data.data(), rows(), cols()}; }
};

// Trainable tensor with gradient and optimizer moments.
template <typename T>
struct Parameter {
  std::string name;
  Tensor<T> value;
  Tensor<T> grad;
  Tensor<T> m, v;  // Adam moments

  Parameter() = default;
  Parameter(std::string n, Tensor<T> val) : name(std::move(n)), value(std::move(val)) {
    grad = Tensor<T>::zeros(value.shape);
    m = Tensor<T>::zeros(value.shape);
    v = Tensor<T>::zeros(value.shape);
  }

  void zero_grad() { std::fill(grad.data.begin(), grad.data.end(), T(0)); }
};

namespace init {

template <typename T>
Tensor<T> normal(std::vector<int> shape, Rng& rng, double sd) {
  Tensor<T> t(std::move(shape));
  for (auto& v : t.data) v = static_cast<T>(rng.normal(0.0, sd));
  return t;
}

// Orthogonal init scaled by gain (rows x cols weight, inputs-by-outputs).
template <typename T>
Tensor<T> orthogonal(int in_dim, int out_dim, Rng& rng, double gain) {
  const int big = std::max(in_dim, out_dim);
  Eigen::MatrixXd A(big, big);
  for (int i = 0; i < big; ++i)
    for (int j = 0; j < big; ++j) A(i, j) = rng.normal();
  Eigen::HouseholderQR<Eigen::MatrixXd> qr(A);
  Eigen::MatrixXd Q = qr.householderQ();
  Eigen::MatrixXd R = qr.matrixQR().triangularView<Eigen::Upper>();
  for (int j = 0; j < big; ++j)
    if (R(j, j) < 0) Q.col(j) = -Q.col(j);
  Tensor<T> w({in_dim, out_dim});
  for (int i = 0; i < in_dim; ++i)
    for (int j = 0; j < out_dim; ++j) w(i, j) = static_cast<T>(gain * Q(i, j));
  return w;
}

}  // namespace init

}  // namespace ahand
