#include "blindsnf/sampler.hpp"

#include <cmath>

namespace blindsnf {

template <typename Scalar>
Tensor<Scalar> predicted_noise(const Tensor<Scalar>& x_t, const Tensor<Scalar>& x0_hat, int step,
                               const DiffusionSchedule& schedule) {
  require_same_shape(x_t, x0_hat, "predicted_noise");
  const double abar = schedule.alpha_bar_at(step);
  const auto keep = static_cast<Scalar>(std::sqrt(abar));
  const auto inv_noise = static_cast<Scalar>(1.0 / std::sqrt(1.0 - abar));
  return Tensor<Scalar>(x_t.shape(), (x_t.values() - keep * x0_hat.values()) * inv_noise);
}

template <typename Scalar>
Tensor<Scalar> ddim_step(const Tensor<Scalar>& x_tau, int i, const Tensor<Scalar>& u, const Tensor<Scalar>& v,
                         const SamplingPath& path, const DiffusionSchedule& schedule, Rng& rng,
                         ConditionalModel<Scalar>& model) {
  if (i < 2 || i > path.num_steps()) throw ParameterError("ddim_step index must lie in [2, M]");
  const int cur = path.tau[static_cast<std::size_t>(i)];
  const int prev = path.tau[static_cast<std::size_t>(i - 1)];
  const double sigma = path.sigma[static_cast<std::size_t>(i)];
  const double abar_prev = schedule.alpha_bar_at(prev);
  const double residual = 1.0 - abar_prev - sigma * sigma;
  if (residual < -1e-12) throw StateError("schedule inconsistency: 1 - abar - sigma^2 < 0 at step " + std::to_string(cur));

  const Tensor<Scalar> x0_hat = model.denoise(x_tau, cur, u, v);
  const Tensor<Scalar> eps_hat = predicted_noise(x_tau, x0_hat, cur, schedule);
  Tensor<Scalar> out(x_tau.shape(), static_cast<Scalar>(std::sqrt(abar_prev)) * x0_hat.values() +
                                        static_cast<Scalar>(std::sqrt(std::max(residual, 0.0))) * eps_hat.values());
  if (sigma > 0.0) out.values() += static_cast<Scalar>(sigma) * rng.normal_tensor<Scalar>(x_tau.shape()).values();
  return out;
}

template Tensor<float> predicted_noise(const Tensor<float>&, const Tensor<float>&, int, const DiffusionSchedule&);
template Tensor<double> predicted_noise(const Tensor<double>&, const Tensor<double>&, int, const DiffusionSchedule&);
template Tensor<float> ddim_step(const Tensor<float>&, int, const Tensor<float>&, const Tensor<float>&,
                                 const SamplingPath&, const DiffusionSchedule&, Rng&, ConditionalModel<float>&);
template Tensor<double> ddim_step(const Tensor<double>&, int, const Tensor<double>&, const Tensor<double>&,
                                  const SamplingPath&, const DiffusionSchedule&, Rng&, ConditionalModel<double>&);

Image sample(const SampleRequest& request, ConditionalModel<float>& model, const DiffusionSchedule& schedule,
             const StepObserver& observer) {
  require_rank(request.x_lr, 3, "sample");
  if (request.x_lr.dim(0) != 3) throw DimensionError("sample: LR image must have 3 channels");
  const SamplingPath path =
      request.eta ? make_path(schedule, request.path.gamma, *request.eta) : request.path;
  if (path.tau.empty() || path.tau.back() != schedule.steps) {
    throw ParameterError("sampling path does not end at T = " + std::to_string(schedule.steps));
  }
  const Index hr_h = request.x_lr.dim(1) * model.scale(), hr_w = request.x_lr.dim(2) * model.scale();
  if (hr_h % model.size_multiple() != 0 || hr_w % model.size_multiple() != 0) {
    throw DimensionError("sample: HR size " + std::to_string(hr_h) + "x" + std::to_string(hr_w) +
                         " not divisible by " + std::to_string(model.size_multiple()));
  }

  const Tensor<float> lr = unsqueeze(request.x_lr);
  const Tensor<float> u = model.encode_lr(lr);
  const Tensor<float> v = model.encode_degradation(lr);

  Rng rng(request.seed);
  Tensor<float> x = rng.normal_tensor<float>(Shape{1, 3, hr_h, hr_w});
  const int m = path.num_steps();
  for (int i = m; i >= 2; --i) {
    if (observer) observer(path.tau[static_cast<std::size_t>(i)], squeeze(x));
    x = ddim_step(x, i, u, v, path, schedule, rng, model);
  }
  if (observer) observer(path.tau[1], squeeze(x));
  Image out = squeeze(model.denoise(x, path.tau[1], u, v));
  if (!out.all_finite()) throw NumericalError("sampling produced non-finite values");
  if (observer) observer(0, out);
  return out;
}

}  // namespace blindsnf
