#pragma once

#include <Eigen/Core>

#include <string>
#include <vector>

#include "blindsnf/tensor.hpp"

namespace blindsnf {

/// Variance schedule of the forward diffusion over steps 1..T.
///
/// Vectors are indexed by step: entry t holds the value for step t, and
/// entry 0 is the t = 0 boundary (beta 0, alpha_bar 1).
struct DiffusionSchedule {
  int steps = 0;
  Eigen::ArrayXd beta;
  Eigen::ArrayXd alpha;
  Eigen::ArrayXd alpha_bar;

  double beta_at(int t) const { return beta[t]; }
  double alpha_bar_at(int t) const { return alpha_bar[t]; }
};

/// Linear beta from beta_start (t = 1) to beta_end (t = T).
DiffusionSchedule make_schedule(int steps, double beta_start, double beta_end);
/// Schedule from explicit betas for steps 1..T.
DiffusionSchedule make_schedule_from_betas(const std::vector<double>& betas);

/// sqrt(1 - beta_t) x_prev + sqrt(beta_t) eps
template <typename Scalar>
Tensor<Scalar> forward_step(const Tensor<Scalar>& x_prev, int t, const Tensor<Scalar>& eps,
                            const DiffusionSchedule& schedule);

/// sqrt(alpha_bar_t) x0 + sqrt(1 - alpha_bar_t) eps
template <typename Scalar>
Tensor<Scalar> forward_marginal(const Tensor<Scalar>& x0, int t, const Tensor<Scalar>& eps,
                                const DiffusionSchedule& schedule);

/// Reverse path 0 = tau_0 < tau_1 < ... < tau_M = T with stride gamma.
struct SamplingPath {
  int gamma = 1;
  double eta = 1.0;
  std::vector<int> tau;        // length M + 1
  std::vector<double> sigma;   // sigma[i] pairs with tau[i]; sigma[0] = 0

  int num_steps() const { return static_cast<int>(tau.size()) - 1; }
};

/// sigma_i = eta * sqrt((1 - abar(tau_{i-1})) / (1 - abar(tau_i)) * beta(tau_i)).
/// Throws ParameterError when gamma does not divide T.
SamplingPath make_path(const DiffusionSchedule& schedule, int gamma, double eta);

/// "t,beta,alpha,alpha_bar" header plus one row per step.
std::string schedule_csv(const DiffusionSchedule& schedule);

}  // namespace blindsnf
