#pragma once

#include <cstdint>
#include <string>
#include <vector>

namespace blindsnf {

struct GradSuiteEntry {
  std::string name;
  std::string precision;  // "fp32" or "fp64"
  double error = 0.0;
  double tolerance = 0.0;

  bool passed() const { return error < tolerance; }
};

inline constexpr double kGradTolerance32 = 1e-2;
inline constexpr double kGradTolerance64 = 1e-5;

/// Finite-difference checks of the DAConv, residual block, time-embedding
/// perceptron, projection head and encoder loss, in fp64 and fp32, on tiny
/// random shapes.
std::vector<GradSuiteEntry> run_grad_suite(std::uint64_t seed = 0);

}  // namespace blindsnf
