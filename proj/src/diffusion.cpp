#include "fdct/diffusion.hpp"

#include <cmath>
#include <string>
#include <vector>

#include "fdct/error.hpp"
#include "fdct/tensor_util.hpp"

namespace fdct::diffusion {

namespace {

void require_same_shape(const torch::Tensor& a, const torch::Tensor& b, const char* what) {
    if (a.sizes() != b.sizes()) throw ValidationError(std::string(what) + ": shape mismatch");
}

}  // namespace

torch::Tensor forward_sample(const torch::Tensor& x0, int t, const torch::Tensor& eps, const NoiseSchedule& sched) {
    require_same_shape(x0, eps, "forward_sample");
    if (t < 1) throw ValidationError("forward_sample needs t >= 1");
    const double ab = sched.alpha_bar(t);
    return std::sqrt(ab) * x0 + std::sqrt(1.0 - ab) * eps;
}

torch::Tensor forward_sample(const torch::Tensor& x0, const torch::Tensor& t, const torch::Tensor& eps,
                             const NoiseSchedule& sched) {
    require_same_shape(x0, eps, "forward_sample");
    if (t.dim() != 1 || t.size(0) != x0.size(0)) throw ValidationError("forward_sample: one timestep per batch item");
    auto t_cpu = t.to(torch::kLong).contiguous();
    std::vector<double> signal(static_cast<std::size_t>(t.size(0)));
    std::vector<double> noise(signal.size());
    for (std::size_t i = 0; i < signal.size(); ++i) {
        const int ti = static_cast<int>(t_cpu.data_ptr<std::int64_t>()[i]);
        if (ti < 1) throw ValidationError("forward_sample needs t >= 1");
        const double ab = sched.alpha_bar(ti);
        signal[i] = std::sqrt(ab);
        noise[i] = std::sqrt(1.0 - ab);
    }
    std::vector<std::int64_t> shape(static_cast<std::size_t>(x0.dim()), 1);
    shape[0] = x0.size(0);
    auto opts = torch::TensorOptions().dtype(torch::kFloat64);
    auto s = torch::tensor(signal, opts).reshape(shape).to(x0.dtype());
    auto n = torch::tensor(noise, opts).reshape(shape).to(x0.dtype());
    return s * x0 + n * eps;
}

torch::Tensor reverse_step(const DiffusionState& state, const torch::Tensor& eps_hat, const NoiseSchedule& sched,
                           const torch::Tensor& z) {
    const int t = state.t;
    if (t < 1 || t > sched.steps()) throw ValidationError("reverse_step: timestep " + std::to_string(t) + " out of range");
    require_same_shape(state.x_t, eps_hat, "reverse_step");
    require_same_shape(state.x_t, z, "reverse_step");
    if (t == 1 && z.ne(0).any().item<bool>()) throw ValidationError("reverse_step: noise must be zero at t = 1");
    const double beta = sched.beta(t);
    const double mean_scale = 1.0 / std::sqrt(sched.alpha(t));
    const double eps_scale = beta / std::sqrt(1.0 - sched.alpha_bar(t));
    auto mean = mean_scale * (state.x_t - eps_scale * eps_hat);
    if (t == 1) return mean;
    return mean + std::sqrt(sched.posterior_variance(t)) * z;
}

torch::Tensor sample(const torch::Tensor& condition, const NoisePredictor& predictor, const NoiseSchedule& sched,
                     std::uint64_t seed) {
    if (condition.dim() != 2) throw ValidationError("sample expects an [H, W] condition");
    const std::uint64_t seeds[] = {seed};
    return sample_batch(condition.unsqueeze(0), predictor, sched, seeds)[0];
}

torch::Tensor sample_batch(const torch::Tensor& conditions, const NoisePredictor& predictor,
                           const NoiseSchedule& sched, std::span<const std::uint64_t> seeds,
                           const StepCallback& on_step) {
    if (conditions.dim() != 3) throw ValidationError("sample_batch expects [B, H, W] conditions");
    const auto batch = conditions.size(0);
    if (static_cast<std::int64_t>(seeds.size()) != batch) throw ValidationError("sample_batch: one seed per condition");
    if (conditions.lt(0).any().item<bool>() || conditions.gt(1).any().item<bool>()) {
        throw ValidationError("condition values must lie in [0, 1]");
    }
    torch::NoGradGuard no_grad;
    const auto h = conditions.size(1);
    const auto w = conditions.size(2);
    const auto opts = torch::TensorOptions().dtype(conditions.dtype());
    const auto cond = conditions.unsqueeze(1);

    std::vector<torch::Generator> gens;
    gens.reserve(seeds.size());
    for (auto s : seeds) gens.push_back(make_generator(s));
    auto draw = [&] {
        std::vector<torch::Tensor> parts;
        parts.reserve(gens.size());
        for (auto& g : gens) parts.push_back(torch::randn({1, h, w}, g, opts));
        return torch::stack(parts);
    };

    auto x = draw();
    for (int t = sched.steps(); t >= 1; --t) {
        auto eps_hat = predictor(x, t, cond);
        if (!eps_hat.defined() || eps_hat.sizes() != x.sizes()) {
            throw ModelContractError("noise predictor returned the wrong shape at step " + std::to_string(t));
        }
        auto z = t > 1 ? draw() : torch::zeros_like(x);
        x = reverse_step({x, t, cond}, eps_hat.to(x.dtype()), sched, z);
        if (!torch::isfinite(x).all().item<bool>()) {
            throw DivergenceError("sampling diverged at step " + std::to_string(t));
        }
        if (on_step) on_step(t);
    }
    return x.clamp(0.0, 1.0).squeeze(1);
}

}  // namespace fdct::diffusion
