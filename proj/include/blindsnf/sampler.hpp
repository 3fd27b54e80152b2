#pragma once

#include <cstdint>
#include <functional>
#include <optional>

#include "blindsnf/image.hpp"
#include "blindsnf/model.hpp"
#include "blindsnf/rng.hpp"
#include "blindsnf/schedule.hpp"

namespace blindsnf {

/// eps_hat = (x_t - sqrt(abar_t) x0_hat) / sqrt(1 - abar_t)
template <typename Scalar>
Tensor<Scalar> predicted_noise(const Tensor<Scalar>& x_t, const Tensor<Scalar>& x0_hat, int step,
                               const DiffusionSchedule& schedule);

/// One reverse update from tau_i to tau_{i-1} (i >= 2):
/// sqrt(abar_prev) x0_hat + sqrt(1 - abar_prev - sigma_i^2) eps_hat + sigma_i z.
/// z is drawn only when sigma_i > 0.
template <typename Scalar>
Tensor<Scalar> ddim_step(const Tensor<Scalar>& x_tau, int i, const Tensor<Scalar>& u, const Tensor<Scalar>& v,
                         const SamplingPath& path, const DiffusionSchedule& schedule, Rng& rng,
                         ConditionalModel<Scalar>& model);

struct SampleRequest {
  Image x_lr;
  SamplingPath path;
  std::uint64_t seed = 0;
  std::optional<double> eta;
};

/// Called with (tau_i, latent) for every tau_M..tau_1 and finally (0, X_SR).
using StepObserver = std::function<void(int, const Image&)>;

/// Interval-subsampled conditional reverse diffusion. The encoders run once;
/// the denoiser runs exactly M = T/gamma times. The output is not clamped.
Image sample(const SampleRequest& request, ConditionalModel<float>& model, const DiffusionSchedule& schedule,
             const StepObserver& observer = {});

}  // namespace blindsnf
