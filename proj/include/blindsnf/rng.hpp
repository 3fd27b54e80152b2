#pragma once

#include <bit>
#include <cmath>
#include <cstdint>
#include <numbers>
#include <random>
#include <sstream>
#include <string>

#include "blindsnf/tensor.hpp"

namespace blindsnf {

/// Seeded 64-bit random stream.
///
/// Uniform and normal variates are derived from raw engine output by fixed
/// formulas, so a seed reproduces the same draws with any standard library.
/// Instances are single-owner; fork() derives an independent stream.
class Rng {
 public:
  explicit Rng(std::uint64_t seed = 0) : seed_(seed), engine_(seed) {}

  std::uint64_t seed() const { return seed_; }

  std::uint64_t next_u64() { return engine_(); }

  /// Uniform on [0, 1) with 53 random bits.
  double uniform() { return static_cast<double>(engine_() >> 11) * 0x1.0p-53; }

  double uniform(double lo, double hi) { return lo + (hi - lo) * uniform(); }

  /// Uniform integer on [lo, hi] inclusive.
  std::int64_t uniform_int(std::int64_t lo, std::int64_t hi) {
    const auto span = static_cast<std::uint64_t>(hi - lo) + 1;
    return lo + static_cast<std::int64_t>(engine_() % span);
  }

  /// Standard normal via Box-Muller; the second variate is cached.
  double normal() {
    if (has_spare_) {
      has_spare_ = false;
      return spare_;
    }
    double u1 = uniform();
    while (u1 <= 0.0) u1 = uniform();
    const double u2 = uniform();
    const double radius = std::sqrt(-2.0 * std::log(u1));
    const double angle = 2.0 * std::numbers::pi * u2;
    spare_ = radius * std::sin(angle);
    has_spare_ = true;
    return radius * std::cos(angle);
  }

  template <typename Scalar>
  Tensor<Scalar> normal_tensor(Shape shape) {
    Tensor<Scalar> out(std::move(shape));
    for (Index i = 0; i < out.size(); ++i) out[i] = static_cast<Scalar>(normal());
    return out;
  }

  template <typename Scalar>
  Tensor<Scalar> uniform_tensor(Shape shape, double lo, double hi) {
    Tensor<Scalar> out(std::move(shape));
    for (Index i = 0; i < out.size(); ++i) out[i] = static_cast<Scalar>(uniform(lo, hi));
    return out;
  }

  /// Independent child stream seeded from this one.
  Rng fork() { return Rng(engine_() ^ 0x9E3779B97F4A7C15ULL); }

  /// Full state as text, for checkpoints.
  std::string state() const {
    std::ostringstream os;
    os << seed_ << ' ' << has_spare_ << ' ' << std::bit_cast<std::uint64_t>(spare_) << ' ' << engine_;
    return os.str();
  }

  void set_state(const std::string& text) {
    std::istringstream is(text);
    std::uint64_t spare_bits = 0;
    is >> seed_ >> has_spare_ >> spare_bits >> engine_;
    if (!is) throw ParseError("malformed rng state");
    spare_ = std::bit_cast<double>(spare_bits);
  }

  friend bool operator==(const Rng& a, const Rng& b) {
    return a.engine_ == b.engine_ && a.has_spare_ == b.has_spare_ && (!a.has_spare_ || a.spare_ == b.spare_);
  }

 private:
  std::uint64_t seed_;
  std::mt19937_64 engine_;
  bool has_spare_ = false;
  double spare_ = 0.0;
};

}  // namespace blindsnf
