// Copyright 2026 The slmfg Authors
//
// Licensed under the Apache License, Version 2.0 (the "License");
// you may not use this file except in compliance with the License.
// You may obtain a copy of the License at
//
//      http://www.apache.org/licenses/LICENSE-2.0
//
// Unless required by applicable law or agreed to in writing, software
// distributed under the License is distributed on an "AS IS" BASIS,
// WITHOUT WARRANTIES OR CONDITIONS OF ANY KIND, either express or implied.
// See the License for the specific language governing permissions and
// limitations under the License.

#pragma once

#include <array>
#include <cmath>
#include <cstddef>
#include <cstdint>
#include <stdexcept>
#include <string>
#include <vector>

namespace slmfg {

// Error taxonomy. Every failure the library reports is one of these.
class Error : public std::runtime_error {
 public:
  using std::runtime_error::runtime_error;
};

// Problem data violates a structural assumption (e.g. singular B1).
class StructuralError : public Error {
 public:
  using Error::Error;
};

// Discretization or run configuration is unusable.
class ConfigError : public Error {
 public:
  using Error::Error;
};

// Broken internal invariant (level-set closure, empty reachable set, ...).
class InternalError : public Error {
 public:
  using Error::Error;
};

// Non-finite or overflowing arithmetic.
class NumericError : public Error {
 public:
  using Error::Error;
};

// Caller misuse: mismatched shapes, unnormalized inputs, guardrails.
class UsageError : public Error {
 public:
  using Error::Error;
};

// The lattice does not cover the support of the initial measure.
class CoverageError : public Error {
 public:
  using Error::Error;
};

template <int N>
using Vec = std::array<double, N>;

template <int N>
using Index = std::array<std::int64_t, N>;

// Row-major N x N matrix.
template <int N>
using Mat = std::array<double, static_cast<std::size_t>(N) * N>;

// Row-major Rows x Cols matrix.
template <int Rows, int Cols>
using MatRC = std::array<double, static_cast<std::size_t>(Rows) * Cols>;

using NodeId = std::int32_t;
inline constexpr NodeId kNoNode = -1;

template <int N>
inline double norm_inf(const Vec<N>& v) {
  double m = 0.0;
  for (double x : v) m = std::max(m, std::abs(x));
  return m;
}

// Operator infinity norm (max absolute row sum).
template <int Rows, int Cols>
inline double op_norm_inf(const MatRC<Rows, Cols>& m) {
  double best = 0.0;
  for (int i = 0; i < Rows; ++i) {
    double row = 0.0;
    for (int j = 0; j < Cols; ++j) row += std::abs(m[i * Cols + j]);
    best = std::max(best, row);
  }
  return best;
}

template <int Rows, int Cols>
inline Vec<Rows> mat_vec(const MatRC<Rows, Cols>& m, const Vec<Cols>& v) {
  Vec<Rows> out{};
  for (int i = 0; i < Rows; ++i) {
    double s = 0.0;
    for (int j = 0; j < Cols; ++j) s += m[i * Cols + j] * v[j];
    out[i] = s;
  }
  return out;
}

// Gauss-Jordan inversion with partial pivoting. Returns false when a pivot
// falls below `pivot_floor`; `det` receives the determinant either way.
template <int N>
inline bool invert(const Mat<N>& m, Mat<N>& inv, double& det,
                   double pivot_floor = 0.0) {
  Mat<N> a = m;
  inv = {};
  for (int i = 0; i < N; ++i) inv[i * N + i] = 1.0;
  det = 1.0;
  for (int col = 0; col < N; ++col) {
    int piv = col;
    for (int r = col + 1; r < N; ++r) {
      if (std::abs(a[r * N + col]) > std::abs(a[piv * N + col])) piv = r;
    }
    double p = a[piv * N + col];
    if (piv != col) {
      for (int j = 0; j < N; ++j) {
        std::swap(a[piv * N + j], a[col * N + j]);
        std::swap(inv[piv * N + j], inv[col * N + j]);
      }
      det = -det;
    }
    det *= p;
    if (std::abs(p) <= pivot_floor || p == 0.0) return false;
    for (int j = 0; j < N; ++j) {
      a[col * N + j] /= p;
      inv[col * N + j] /= p;
    }
    for (int r = 0; r < N; ++r) {
      if (r == col) continue;
      double f = a[r * N + col];
      if (f == 0.0) continue;
      for (int j = 0; j < N; ++j) {
        a[r * N + j] -= f * a[col * N + j];
        inv[r * N + j] -= f * inv[col * N + j];
      }
    }
  }
  return true;
}

// Splits x = (x1, x2) into the first R and last D-R coordinates.
template <int D, int R, class T>
inline std::array<T, R> head(const std::array<T, D>& x) {
  std::array<T, R> out{};
  for (int i = 0; i < R; ++i) out[i] = x[i];
  return out;
}

template <int D, int R, class T>
inline std::array<T, D - R> tail(const std::array<T, D>& x) {
  std::array<T, D - R> out{};
  for (int i = 0; i < D - R; ++i) out[i] = x[R + i];
  return out;
}

template <int D, int R, class T>
inline std::array<T, D> join(const std::array<T, R>& a,
                             const std::array<T, D - R>& b) {
  std::array<T, D> out{};
  for (int i = 0; i < R; ++i) out[i] = a[i];
  for (int i = 0; i < D - R; ++i) out[R + i] = b[i];
  return out;
}

template <int D>
inline Vec<D> coords(const Index<D>& idx, double dx) {
  Vec<D> x{};
  for (int i = 0; i < D; ++i) x[i] = static_cast<double>(idx[i]) * dx;
  return x;
}

}  // namespace slmfg
