#include "blindsnf/schedule.hpp"

#include <cmath>
#include <sstream>

namespace blindsnf {

namespace {

void require_step(const DiffusionSchedule& schedule, int t) {
  if (t < 1 || t > schedule.steps) {
    throw ParameterError("step " + std::to_string(t) + " outside [1, " + std::to_string(schedule.steps) + "]");
  }
}

}  // namespace

DiffusionSchedule make_schedule_from_betas(const std::vector<double>& betas) {
  if (betas.empty()) throw ParameterError("schedule needs at least one step");
  DiffusionSchedule s;
  s.steps = static_cast<int>(betas.size());
  s.beta = Eigen::ArrayXd::Zero(s.steps + 1);
  s.alpha = Eigen::ArrayXd::Ones(s.steps + 1);
  s.alpha_bar = Eigen::ArrayXd::Ones(s.steps + 1);
  for (int t = 1; t <= s.steps; ++t) {
    const double b = betas[t - 1];
    if (!(b > 0.0 && b < 1.0)) throw ParameterError("beta values must lie in (0, 1)");
    s.beta[t] = b;
    s.alpha[t] = 1.0 - b;
    s.alpha_bar[t] = s.alpha_bar[t - 1] * s.alpha[t];
  }
  return s;
}

DiffusionSchedule make_schedule(int steps, double beta_start, double beta_end) {
  if (steps < 1) throw ParameterError("T must be at least 1");
  if (!(beta_start > 0.0 && beta_start < 1.0 && beta_end > 0.0 && beta_end < 1.0)) {
    throw ParameterError("beta endpoints must lie in (0, 1)");
  }
  std::vector<double> betas(static_cast<std::size_t>(steps));
  for (int t = 0; t < steps; ++t) {
    const double frac = steps == 1 ? 0.0 : static_cast<double>(t) / (steps - 1);
    betas[t] = beta_start + (beta_end - beta_start) * frac;
  }
  return make_schedule_from_betas(betas);
}

template <typename Scalar>
Tensor<Scalar> forward_step(const Tensor<Scalar>& x_prev, int t, const Tensor<Scalar>& eps,
                            const DiffusionSchedule& schedule) {
  require_step(schedule, t);
  require_same_shape(x_prev, eps, "forward_step");
  const auto keep = static_cast<Scalar>(std::sqrt(1.0 - schedule.beta[t]));
  const auto noise = static_cast<Scalar>(std::sqrt(schedule.beta[t]));
  return Tensor<Scalar>(x_prev.shape(), keep * x_prev.values() + noise * eps.values());
}

template <typename Scalar>
Tensor<Scalar> forward_marginal(const Tensor<Scalar>& x0, int t, const Tensor<Scalar>& eps,
                                const DiffusionSchedule& schedule) {
  require_step(schedule, t);
  require_same_shape(x0, eps, "forward_marginal");
  const auto keep = static_cast<Scalar>(std::sqrt(schedule.alpha_bar[t]));
  const auto noise = static_cast<Scalar>(std::sqrt(1.0 - schedule.alpha_bar[t]));
  return Tensor<Scalar>(x0.shape(), keep * x0.values() + noise * eps.values());
}

template Tensor<float> forward_step(const Tensor<float>&, int, const Tensor<float>&, const DiffusionSchedule&);
template Tensor<double> forward_step(const Tensor<double>&, int, const Tensor<double>&, const DiffusionSchedule&);
template Tensor<float> forward_marginal(const Tensor<float>&, int, const Tensor<float>&, const DiffusionSchedule&);
template Tensor<double> forward_marginal(const Tensor<double>&, int, const Tensor<double>&,
                                         const DiffusionSchedule&);

SamplingPath make_path(const DiffusionSchedule& schedule, int gamma, double eta) {
  if (gamma < 1 || schedule.steps % gamma != 0) {
    throw ParameterError("sampling interval " + std::to_string(gamma) + " does not divide T = " +
                         std::to_string(schedule.steps));
  }
  if (!(eta >= 0.0)) throw ParameterError("eta must be non-negative");
  SamplingPath path;
  path.gamma = gamma;
  path.eta = eta;
  const int m = schedule.steps / gamma;
  for (int i = 0; i <= m; ++i) path.tau.push_back(i * gamma);
  path.sigma.assign(path.tau.size(), 0.0);
  for (int i = 1; i <= m; ++i) {
    const int cur = path.tau[i], prev = path.tau[i - 1];
    const double ratio = (1.0 - schedule.alpha_bar[prev]) / (1.0 - schedule.alpha_bar[cur]);
    path.sigma[i] = eta * std::sqrt(ratio * schedule.beta[cur]);
  }
  return path;
}

std::string schedule_csv(const DiffusionSchedule& schedule) {
  std::ostringstream os;
  os.precision(17);
  os << "t,beta,alpha,alpha_bar\n";
  for (int t = 1; t <= schedule.steps; ++t) {
    os << t << ',' << schedule.beta[t] << ',' << schedule.alpha[t] << ',' << schedule.alpha_bar[t] << '\n';
  }
  return os.str();
}

}  // namespace blindsnf
