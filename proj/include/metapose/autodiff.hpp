// Copyright (C) 2026 metapose contributors
// SPDX-License-Identifier: Apache-2.0

#pragma once

#include <cmath>
#include <vector>

namespace metapose::ad {

class Tape;

/// Handle to a scalar recorded on a Tape. Cheap to copy; valid while the
/// tape is alive and not cleared.
struct Var {
  Tape* tape = nullptr;
  int index = -1;
  double val = 0.0;

  double value() const { return val; }
};

/// Minimal reverse-mode tape. Every node has at most two parents with their
/// local partial derivatives; gradients are accumulated by one reverse sweep.
class Tape {
 public:
  Tape() { nodes_.reserve(1024); }

  Var variable(double value) { return push(value, -1, 0.0, -1, 0.0); }
  Var constant(double value) { return push(value, -1, 0.0, -1, 0.0); }

  Var unary(double value, const Var& a, double da) { return push(value, a.index, da, -1, 0.0); }
  Var binary(double value, const Var& a, double da, const Var& b, double db) {
    return push(value, a.index, da, b.index, db);
  }

  int size() const { return static_cast<int>(nodes_.size()); }
  void clear() { nodes_.clear(); }

  /// Adjoints of every node with respect to `output`.
  std::vector<double> gradient(const Var& output) const {
    std::vector<double> adj(nodes_.size(), 0.0);
    adj[output.index] = 1.0;
    for (int i = output.index; i >= 0; --i) {
      const double g = adj[i];
      if (g == 0.0) continue;
      const Node& n = nodes_[i];
      if (n.a >= 0) adj[n.a] += g * n.da;
      if (n.b >= 0) adj[n.b] += g * n.db;
    }
    return adj;
  }

 private:
  struct Node {
    int a;
    int b;
    double da;
    double db;
  };

  Var push(double value, int a, double da, int b, double db) {
    nodes_.push_back(Node{a, b, da, db});
    return Var{this, static_cast<int>(nodes_.size()) - 1, value};
  }

  std::vector<Node> nodes_;
};

inline Var operator+(const Var& a, const Var& b) { return a.tape->binary(a.val + b.val, a, 1.0, b, 1.0); }
inline Var operator-(const Var& a, const Var& b) { return a.tape->binary(a.val - b.val, a, 1.0, b, -1.0); }
inline Var operator*(const Var& a, const Var& b) { return a.tape->binary(a.val * b.val, a, b.val, b, a.val); }
inline Var operator/(const Var& a, const Var& b) {
  const double q = a.val / b.val;
  return a.tape->binary(q, a, 1.0 / b.val, b, -q / b.val);
}
inline Var operator-(const Var& a) { return a.tape->unary(-a.val, a, -1.0); }

inline Var operator+(const Var& a, double b) { return a.tape->unary(a.val + b, a, 1.0); }
inline Var operator+(double a, const Var& b) { return b + a; }
inline Var operator-(const Var& a, double b) { return a.tape->unary(a.val - b, a, 1.0); }
inline Var operator-(double a, const Var& b) { return b.tape->unary(a - b.val, b, -1.0); }
inline Var operator*(const Var& a, double b) { return a.tape->unary(a.val * b, a, b); }
inline Var operator*(double a, const Var& b) { return b * a; }
inline Var operator/(const Var& a, double b) { return a.tape->unary(a.val / b, a, 1.0 / b); }
inline Var operator/(double a, const Var& b) {
  const double q = a / b.val;
  return b.tape->unary(q, b, -q / b.val);
}

inline Var& operator+=(Var& a, const Var& b) { return a = a + b; }
inline Var& operator-=(Var& a, const Var& b) { return a = a - b; }
inline Var& operator*=(Var& a, double b) { return a = a * b; }

inline Var exp(const Var& a) {
  const double e = std::exp(a.val);
  return a.tape->unary(e, a, e);
}
inline Var log(const Var& a) { return a.tape->unary(std::log(a.val), a, 1.0 / a.val); }
inline Var sqrt(const Var& a) {
  const double r = std::sqrt(a.val);
  return a.tape->unary(r, a, 0.5 / r);
}

/// Scalar helpers shared by double and Var code paths.
inline double value_of(double x) { return x; }
inline double value_of(const Var& x) { return x.val; }

}  // namespace metapose::ad
