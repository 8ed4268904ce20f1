#pragma once

namespace merge {

enum class ActivationKind { ReluSignAssisted, Quad };

// quad(x) = a2 x^2 + a1 x + a0, a cheap stand-in for GeLU.
struct QuadCoeffs {
  double a2 = 0.125, a1 = 0.5, a0 = 0.25;
  bool operator==(const QuadCoeffs&) const = default;
};

inline double activate(ActivationKind kind, const QuadCoeffs& q, double x) {
  if (kind == ActivationKind::Quad) return (q.a2 * x + q.a1) * x + q.a0;
  return x > 0 ? x : 0.0;
}

}  // namespace merge
