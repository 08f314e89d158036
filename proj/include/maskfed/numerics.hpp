// Copyright 2026 The maskfed Authors.
//
// Licensed under the Apache License, Version 2.0 (the "License");
// you may not use this file except in compliance with the License.
// You may obtain a copy of the License at
//
//     https://www.apache.org/licenses/LICENSE-2.0
//
// Unless required by applicable law or agreed to in writing, software
// distributed under the License is distributed on an "AS IS" BASIS,
// WITHOUT WARRANTIES OR CONDITIONS OF ANY KIND, either express or implied.
// See the License for the specific language governing permissions and
// limitations under the License.

// Dense linear algebra and probability helpers for the small adapter models.
// All training math runs in double precision; narrower types only appear at
// serialization boundaries.

#ifndef MASKFED_NUMERICS_HPP_
#define MASKFED_NUMERICS_HPP_

#include <algorithm>
#include <cmath>
#include <cstddef>
#include <functional>
#include <limits>
#include <span>
#include <string>
#include <vector>

#include "maskfed/error.hpp"

namespace maskfed {

// Row-major dense matrix.
struct Matrix {
  std::size_t rows = 0;
  std::size_t cols = 0;
  std::vector<double> data;

  Matrix() = default;
  Matrix(std::size_t r, std::size_t c, double fill = 0.0)
      : rows(r), cols(c), data(r * c, fill) {}

  double& operator()(std::size_t r, std::size_t c) { return data[r * cols + c]; }
  double operator()(std::size_t r, std::size_t c) const {
    return data[r * cols + c];
  }

  std::span<double> row(std::size_t r) { return {data.data() + r * cols, cols}; }
  std::span<const double> row(std::size_t r) const {
    return {data.data() + r * cols, cols};
  }

  std::size_t size() const { return data.size(); }
  bool operator==(const Matrix&) const = default;
};

inline bool AllFinite(std::span<const double> values) {
  return std::all_of(values.begin(), values.end(),
                     [](double v) { return std::isfinite(v); });
}

inline double Dot(std::span<const double> a, std::span<const double> b) {
  double acc = 0.0;
  for (std::size_t i = 0; i < a.size(); ++i) acc += a[i] * b[i];
  return acc;
}

inline double Norm(std::span<const double> a) { return std::sqrt(Dot(a, a)); }

inline double LogSumExp(std::span<const double> x, double scale = 1.0) {
  double m = -std::numeric_limits<double>::infinity();
  for (double v : x) m = std::max(m, v * scale);
  double acc = 0.0;
  for (double v : x) acc += std::exp(v * scale - m);
  return m + std::log(acc);
}

// exp(l_i / t) / sum_k exp(l_k / t), with max subtraction.
inline std::vector<double> Softmax(std::span<const double> logits,
                                   double temperature = 1.0) {
  Require(temperature > 0.0 && std::isfinite(temperature),
          ErrorCode::kInvalidInput, "softmax temperature must be positive");
  Require(!logits.empty(), ErrorCode::kInvalidInput, "softmax of empty vector");
  Require(AllFinite(logits), ErrorCode::kInvalidInput,
          "softmax input is not finite");
  const double inv_t = 1.0 / temperature;
  double m = logits[0];
  for (double v : logits) m = std::max(m, v);
  std::vector<double> out(logits.size());
  double total = 0.0;
  for (std::size_t i = 0; i < logits.size(); ++i) {
    out[i] = std::exp((logits[i] - m) * inv_t);
    total += out[i];
  }
  for (double& v : out) v /= total;
  return out;
}

// Row-wise softmax of a matrix.
inline Matrix SoftmaxRows(const Matrix& logits, double temperature = 1.0) {
  Matrix out(logits.rows, logits.cols);
  for (std::size_t r = 0; r < logits.rows; ++r) {
    const auto p = Softmax(logits.row(r), temperature);
    std::copy(p.begin(), p.end(), out.row(r).begin());
  }
  return out;
}

inline double CosineSimilarity(std::span<const double> a,
                               std::span<const double> b) {
  Require(a.size() == b.size(), ErrorCode::kInvalidInput,
          "cosine similarity of vectors with different dimensions");
  const double na = Norm(a);
  const double nb = Norm(b);
  Require(na > 0.0 && nb > 0.0, ErrorCode::kDegenerateInput,
          "cosine similarity of a zero-norm vector");
  return std::clamp(Dot(a, b) / (na * nb), -1.0, 1.0);
}

// Pairwise cosine similarities between the rows of `x` (n x D) and `y` (m x D).
inline Matrix CosineMatrix(const Matrix& x, const Matrix& y) {
  Require(x.cols == y.cols, ErrorCode::kInvalidInput,
          "cosine matrix dimension mismatch");
  Matrix out(x.rows, y.rows);
  for (std::size_t i = 0; i < x.rows; ++i) {
    for (std::size_t j = 0; j < y.rows; ++j) {
      out(i, j) = CosineSimilarity(x.row(i), y.row(j));
    }
  }
  return out;
}

// Gradient of sum(upstream .* CosineMatrix(x, y)) with respect to x; y is
// treated as a constant. The clamp in CosineSimilarity is ignored here since
// it only binds at exactly parallel vectors.
inline Matrix CosineMatrixBackward(const Matrix& x, const Matrix& y,
                                   const Matrix& upstream) {
  Matrix dx(x.rows, x.cols);
  std::vector<double> y_norm(y.rows);
  for (std::size_t j = 0; j < y.rows; ++j) y_norm[j] = Norm(y.row(j));
  for (std::size_t i = 0; i < x.rows; ++i) {
    const auto xi = x.row(i);
    const double nx = Norm(xi);
    Require(nx > 0.0, ErrorCode::kDegenerateInput,
            "cosine gradient at a zero-norm vector");
    auto dxi = dx.row(i);
    for (std::size_t j = 0; j < y.rows; ++j) {
      const double g = upstream(i, j);
      if (g == 0.0) continue;
      const auto yj = y.row(j);
      const double dot = Dot(xi, yj);
      const double inv = 1.0 / (nx * y_norm[j]);
      const double cos = dot * inv;
      const double scale_x = cos / (nx * nx);
      for (std::size_t d = 0; d < x.cols; ++d) {
        dxi[d] += g * (yj[d] * inv - scale_x * xi[d]);
      }
    }
  }
  return dx;
}

// Shannon entropy in nats with 0 ln 0 = 0.
inline double Entropy(std::span<const double> p) {
  double h = 0.0;
  for (double v : p) {
    if (v > 0.0) h -= v * std::log(v);
  }
  return h;
}

inline double Sigmoid(double x) {
  if (x >= 0.0) return 1.0 / (1.0 + std::exp(-x));
  const double e = std::exp(x);
  return e / (1.0 + e);
}

inline std::size_t ArgMax(std::span<const double> v) {
  return static_cast<std::size_t>(std::max_element(v.begin(), v.end()) -
                                  v.begin());
}

// Compares an analytic gradient against central differences of `f` at `theta`
// and returns max_i |analytic_i - fd_i| / max(1, |analytic_i|).
inline double GradCheck(const std::function<double(std::span<const double>)>& f,
                        std::span<const double> analytic,
                        std::span<const double> theta, double h = 1e-5) {
  Require(h > 0.0, ErrorCode::kInvalidInput, "grad check step must be positive");
  Require(analytic.size() == theta.size(), ErrorCode::kInvalidInput,
          "analytic gradient has wrong length");
  std::vector<double> point(theta.begin(), theta.end());
  double worst = 0.0;
  for (std::size_t i = 0; i < point.size(); ++i) {
    const double saved = point[i];
    point[i] = saved + h;
    const double up = f(point);
    point[i] = saved - h;
    const double down = f(point);
    point[i] = saved;
    if (!std::isfinite(up) || !std::isfinite(down)) {
      throw Error(ErrorCode::kCheckFailed,
                  "non-finite objective at index " + std::to_string(i));
    }
    const double fd = (up - down) / (2.0 * h);
    const double err =
        std::abs(analytic[i] - fd) / std::max(1.0, std::abs(analytic[i]));
    worst = std::max(worst, err);
  }
  return worst;
}

}  // namespace maskfed

#endif  // MASKFED_NUMERICS_HPP_
