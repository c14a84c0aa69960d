#pragma once

#include <cstdint>
#include <functional>
#include <span>

#include <torch/torch.h>

#include "fdct/schedule.hpp"

namespace fdct::diffusion {

/// x_t = sqrt(alpha_bar_t) x0 + sqrt(1 - alpha_bar_t) eps, elementwise for any shape.
torch::Tensor forward_sample(const torch::Tensor& x0, int t, const torch::Tensor& eps, const NoiseSchedule& sched);

/// Batched form: x0 and eps are [B, ...], t is an int64 tensor of B timesteps.
torch::Tensor forward_sample(const torch::Tensor& x0, const torch::Tensor& t, const torch::Tensor& eps,
                             const NoiseSchedule& sched);

struct DiffusionState {
    torch::Tensor x_t;
    int t = 1;
    torch::Tensor condition;
};

/// One ancestral step with posterior variance:
/// x_{t-1} = (x_t - beta_t / sqrt(1 - alpha_bar_t) * eps_hat) / sqrt(alpha_t) + sqrt(posterior_var_t) * z.
/// z must be all zeros at t = 1.
torch::Tensor reverse_step(const DiffusionState& state, const torch::Tensor& eps_hat, const NoiseSchedule& sched,
                           const torch::Tensor& z);

/// Noise prediction for a batch: x_t and condition are [B, 1, H, W]; returns [B, 1, H, W].
using NoisePredictor = std::function<torch::Tensor(const torch::Tensor& x_t, int t, const torch::Tensor& condition)>;

/// Called after each reverse step with the timestep just completed.
using StepCallback = std::function<void(int t)>;

/// Conditional ancestral sampling from x_T ~ N(0, I) down to t = 1 for one
/// [H, W] condition. Output is clamped to [0, 1] and depends only on
/// (seed, predictor, condition).
torch::Tensor sample(const torch::Tensor& condition, const NoisePredictor& predictor, const NoiseSchedule& sched,
                     std::uint64_t seed);

/// Samples B conditions ([B, H, W]) at once. Item i draws all of its noise
/// from its own generator seeded with seeds[i], so its result matches a
/// single-item run up to batched-arithmetic rounding.
torch::Tensor sample_batch(const torch::Tensor& conditions, const NoisePredictor& predictor,
                           const NoiseSchedule& sched, std::span<const std::uint64_t> seeds,
                           const StepCallback& on_step = {});

}  // namespace fdct::diffusion
