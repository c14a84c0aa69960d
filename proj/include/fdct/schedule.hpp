#pragma once

#include <vector>

namespace fdct::diffusion {

struct ScheduleSettings {
    int steps = 1000;
    double beta_start = 1e-4;
    double beta_end = 0.02;

    friend bool operator==(const ScheduleSettings&, const ScheduleSettings&) = default;
};

/// Variance schedule over timesteps 1..T. Index 0 holds the alpha_bar_0 = 1
/// convention so every accessor takes the 1-based timestep directly.
class NoiseSchedule {
public:
    /// Betas linearly spaced from beta_start to beta_end inclusive.
    static NoiseSchedule linear(const ScheduleSettings& settings);

    int steps() const { return settings_.steps; }
    const ScheduleSettings& settings() const { return settings_; }

    double beta(int t) const { return beta_.at(checked(t)); }
    double alpha(int t) const { return 1.0 - beta(t); }
    /// Cumulative product of alphas; alpha_bar(0) == 1.
    double alpha_bar(int t) const;
    /// ((1 - alpha_bar(t-1)) / (1 - alpha_bar(t))) * beta(t); zero at t = 1.
    double posterior_variance(int t) const { return posterior_var_.at(checked(t)); }

private:
    explicit NoiseSchedule(ScheduleSettings s) : settings_(s) {}
    std::size_t checked(int t) const;

    ScheduleSettings settings_;
    std::vector<double> beta_;
    std::vector<double> alpha_bar_;
    std::vector<double> posterior_var_;
};

NoiseSchedule make_schedule(int steps, double beta_start, double beta_end);

}  // namespace fdct::diffusion
