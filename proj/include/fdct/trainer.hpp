#pragma once

#include <cstdint>
#include <filesystem>
#include <functional>
#include <span>
#include <string>
#include <vector>

#include <torch/torch.h>

#include "fdct/artifact_sim.hpp"
#include "fdct/denoiser.hpp"
#include "fdct/schedule.hpp"

namespace fdct::train {

struct TrainingConfig {
    double learning_rate = 2.5e-5;
    int batch_size = 12;
    int epochs = 642;
    /// Stop after this many optimizer steps (0: run all epochs).
    std::int64_t max_steps = 0;
    diffusion::ScheduleSettings schedule;
    std::uint64_t seed = 0;
    /// Save a checkpoint every N epochs and after the last one (0: never).
    int checkpoint_every = 0;
    std::filesystem::path checkpoint_dir;
    /// JSON-lines log, one record appended per epoch (empty: no log).
    std::filesystem::path log_path;

    void validate() const;
    std::string to_json() const;

    /// Settings reported for the clinical dataset run.
    static TrainingConfig paper_spinners();
    /// Settings reported for the public challenge dataset run.
    static TrainingConfig paper_synthrad();
    /// Desk-scale settings used with the toy denoiser preset.
    static TrainingConfig toy();
};

struct TrainingRecord {
    int epoch = 0;
    double mean_loss = 0.0;
    double wall_time_s = 0.0;
    std::int64_t steps = 0;  // cumulative optimizer steps at the end of the epoch
};

/// Mean over pixels of (eps - eps_hat)^2.
double loss(const torch::Tensor& eps, const torch::Tensor& eps_hat);
/// Differentiable form of loss().
torch::Tensor loss_tensor(const torch::Tensor& eps, const torch::Tensor& eps_hat);

/// Noise-prediction loss of one batch: draws t and eps from gen, noises the
/// targets and scores the denoiser on (x_t, t, condition).
torch::Tensor batch_loss(model::Denoiser& denoiser, const torch::Tensor& targets, const torch::Tensor& conditions,
                         const diffusion::NoiseSchedule& sched, torch::Generator& gen);

struct TrainingResult {
    model::Denoiser denoiser;
    std::vector<TrainingRecord> history;
};

using EpochCallback = std::function<void(const TrainingRecord&)>;

/// Trains a fresh denoiser built from dcfg with seed tcfg.seed. Data order,
/// timesteps and noise all derive from tcfg.seed.
TrainingResult train(std::span<const sim::PairedSample> dataset, const model::DenoiserConfig& dcfg,
                     const TrainingConfig& tcfg, const EpochCallback& on_epoch = {});

/// Continues training an existing denoiser in place.
std::vector<TrainingRecord> train_in_place(model::Denoiser& denoiser, std::span<const sim::PairedSample> dataset,
                                           const TrainingConfig& tcfg, const EpochCallback& on_epoch = {});

std::string record_to_json(const TrainingRecord& r);

}  // namespace fdct::train
