#pragma once

// Built-in scalar operators of the expression language: evaluation with the
// documented default values (so every operator is total on the reals),
// analytic partial derivatives consistent with those defaults, and the
// per-argument smoothness classification consumed by the static analysis.

#include <cmath>
#include <cstdint>
#include <cstring>
#include <stdexcept>
#include <string>

namespace spge {

// Totalising defaults. A non-positive variance falls back to kDefaultVariance,
// sqrt of a non-positive argument yields sqrt(kDefaultVariance), log of a
// non-positive argument yields kLogFloor, and division by zero yields zero.
inline constexpr double kDefaultVariance = 1.0;
inline constexpr double kLogFloor = -745.0;

inline constexpr double kInvSqrt2Pi = 0.3989422804014326779399461;

enum class Op : std::uint8_t {
  Add,
  Sub,
  Mul,
  Div,
  Neg,
  Exp,
  Log,
  Sqrt,
  Relu,
  NormalPdf,
  Floor,
  Step,
  Gxy,
};

// How one argument position behaves for a given smoothness property.
//   Smooth        the operator is smooth in this argument everywhere
//   NeedsPositive smooth only where the argument is provably > 0
//   NeedsNonzero  smooth only where the argument provably avoids 0
//   Opaque        no smoothness claim; dependence is treated as a black box
enum class ArgSmooth : std::uint8_t { Smooth, NeedsPositive, NeedsNonzero, Opaque };

struct OpInfo {
  Op op;
  const char* name;
  int arity;
  ArgSmooth differentiable[3];
  ArgSmooth lipschitz[3];
};

inline constexpr OpInfo kOpTable[] = {
    {Op::Add, "+", 2, {ArgSmooth::Smooth, ArgSmooth::Smooth}, {ArgSmooth::Smooth, ArgSmooth::Smooth}},
    {Op::Sub, "-", 2, {ArgSmooth::Smooth, ArgSmooth::Smooth}, {ArgSmooth::Smooth, ArgSmooth::Smooth}},
    {Op::Mul, "*", 2, {ArgSmooth::Smooth, ArgSmooth::Smooth}, {ArgSmooth::Smooth, ArgSmooth::Smooth}},
    {Op::Div, "/", 2, {ArgSmooth::Smooth, ArgSmooth::NeedsNonzero}, {ArgSmooth::Smooth, ArgSmooth::NeedsNonzero}},
    {Op::Neg, "neg", 1, {ArgSmooth::Smooth}, {ArgSmooth::Smooth}},
    {Op::Exp, "exp", 1, {ArgSmooth::Smooth}, {ArgSmooth::Smooth}},
    {Op::Log, "log", 1, {ArgSmooth::NeedsPositive}, {ArgSmooth::NeedsPositive}},
    {Op::Sqrt, "sqrt", 1, {ArgSmooth::NeedsPositive}, {ArgSmooth::NeedsPositive}},
    {Op::Relu, "relu", 1, {ArgSmooth::Opaque}, {ArgSmooth::Smooth}},
    {Op::NormalPdf, "normal_pdf", 3,
     {ArgSmooth::Smooth, ArgSmooth::Smooth, ArgSmooth::NeedsPositive},
     {ArgSmooth::Smooth, ArgSmooth::Smooth, ArgSmooth::NeedsPositive}},
    {Op::Floor, "floor", 1, {ArgSmooth::Opaque}, {ArgSmooth::Opaque}},
    {Op::Step, "step", 1, {ArgSmooth::Opaque}, {ArgSmooth::Opaque}},
    {Op::Gxy, "gxy", 2, {ArgSmooth::Opaque, ArgSmooth::Opaque}, {ArgSmooth::Opaque, ArgSmooth::Opaque}},
};

inline const OpInfo& op_info(Op op) { return kOpTable[static_cast<int>(op)]; }

inline const OpInfo* find_op(const std::string& name) {
  for (const OpInfo& info : kOpTable) {
    if (name == info.name) return &info;
  }
  return nullptr;
}

// Density of a normal distribution with the variance default applied.
inline double normal_pdf(double x, double mean, double variance) {
  const double v = variance > 0.0 ? variance : kDefaultVariance;
  const double z = x - mean;
  return kInvSqrt2Pi / std::sqrt(v) * std::exp(-z * z / (2.0 * v));
}

// Value of `op` at `a`, total thanks to the defaults above.
inline double op_value(Op op, const double* a) {
  switch (op) {
    case Op::Add: return a[0] + a[1];
    case Op::Sub: return a[0] - a[1];
    case Op::Mul: return a[0] * a[1];
    case Op::Div: return a[1] == 0.0 ? 0.0 : a[0] / a[1];
    case Op::Neg: return -a[0];
    case Op::Exp: return std::exp(a[0]);
    case Op::Log: return a[0] > 0.0 ? std::log(a[0]) : kLogFloor;
    case Op::Sqrt: return a[0] > 0.0 ? std::sqrt(a[0]) : std::sqrt(kDefaultVariance);
    case Op::Relu: return a[0] > 0.0 ? a[0] : 0.0;
    case Op::NormalPdf: return normal_pdf(a[0], a[1], a[2]);
    case Op::Floor: return std::floor(a[0]);
    case Op::Step: return a[0] > 0.0 ? 1.0 : 0.0;
    case Op::Gxy: {
      const double q = a[0] * a[0] + a[1] * a[1];
      return q == 0.0 ? 0.0 : a[0] * a[1] / q;
    }
  }
  throw std::logic_error("op_value: unknown operator");
}

// Partial derivatives of `op` at `a`, written to `out` (one per argument).
// In a default region the result is locally constant in the defaulted
// argument, so the corresponding partial is zero.
inline void op_partials(Op op, const double* a, double* out) {
  switch (op) {
    case Op::Add: out[0] = 1.0; out[1] = 1.0; return;
    case Op::Sub: out[0] = 1.0; out[1] = -1.0; return;
    case Op::Mul: out[0] = a[1]; out[1] = a[0]; return;
    case Op::Div:
      if (a[1] == 0.0) {
        out[0] = 0.0;
        out[1] = 0.0;
      } else {
        out[0] = 1.0 / a[1];
        out[1] = -a[0] / (a[1] * a[1]);
      }
      return;
    case Op::Neg: out[0] = -1.0; return;
    case Op::Exp: out[0] = std::exp(a[0]); return;
    case Op::Log: out[0] = a[0] > 0.0 ? 1.0 / a[0] : 0.0; return;
    case Op::Sqrt: out[0] = a[0] > 0.0 ? 0.5 / std::sqrt(a[0]) : 0.0; return;
    case Op::Relu: out[0] = a[0] > 0.0 ? 1.0 : 0.0; return;
    case Op::NormalPdf: {
      const bool defaulted = !(a[2] > 0.0);
      const double v = defaulted ? kDefaultVariance : a[2];
      const double z = a[0] - a[1];
      const double pdf = kInvSqrt2Pi / std::sqrt(v) * std::exp(-z * z / (2.0 * v));
      out[0] = pdf * (-z / v);
      out[1] = pdf * (z / v);
      out[2] = defaulted ? 0.0 : pdf * (z * z / (2.0 * v * v) - 0.5 / v);
      return;
    }
    case Op::Floor: out[0] = 0.0; return;
    case Op::Step: out[0] = 0.0; return;
    case Op::Gxy: {
      const double q = a[0] * a[0] + a[1] * a[1];
      if (q == 0.0) {
        out[0] = 0.0;
        out[1] = 0.0;
      } else {
        out[0] = a[1] * (a[1] * a[1] - a[0] * a[0]) / (q * q);
        out[1] = a[0] * (a[0] * a[0] - a[1] * a[1]) / (q * q);
      }
      return;
    }
  }
  throw std::logic_error("op_partials: unknown operator");
}

}  // namespace spge
