#include "fdct/schedule.hpp"

#include <cmath>
#include <string>

#include "fdct/error.hpp"

namespace fdct::diffusion {

NoiseSchedule NoiseSchedule::linear(const ScheduleSettings& s) {
    if (s.steps < 1) throw ValidationError("schedule needs at least one step");
    if (!(s.beta_start > 0.0) || !(s.beta_start <= s.beta_end) || !(s.beta_end < 1.0)) {
        throw ValidationError("schedule requires 0 < beta_start <= beta_end < 1");
    }
    NoiseSchedule sched(s);
    const auto n = static_cast<std::size_t>(s.steps);
    sched.beta_.assign(n + 1, 0.0);
    sched.alpha_bar_.assign(n + 1, 1.0);
    sched.posterior_var_.assign(n + 1, 0.0);
    for (std::size_t t = 1; t <= n; ++t) {
        const double frac = n == 1 ? 0.0 : static_cast<double>(t - 1) / static_cast<double>(n - 1);
        sched.beta_[t] = s.beta_start + frac * (s.beta_end - s.beta_start);
        sched.alpha_bar_[t] = sched.alpha_bar_[t - 1] * (1.0 - sched.beta_[t]);
        sched.posterior_var_[t] = (1.0 - sched.alpha_bar_[t - 1]) / (1.0 - sched.alpha_bar_[t]) * sched.beta_[t];
    }
    return sched;
}

double NoiseSchedule::alpha_bar(int t) const {
    if (t < 0 || t > settings_.steps) throw ValidationError("timestep " + std::to_string(t) + " out of range");
    return alpha_bar_[static_cast<std::size_t>(t)];
}

std::size_t NoiseSchedule::checked(int t) const {
    if (t < 1 || t > settings_.steps) {
        throw ValidationError("timestep " + std::to_string(t) + " outside [1, " + std::to_string(settings_.steps) + "]");
    }
    return static_cast<std::size_t>(t);
}

NoiseSchedule make_schedule(int steps, double beta_start, double beta_end) {
    return NoiseSchedule::linear({steps, beta_start, beta_end});
}

}  // namespace fdct::diffusion
