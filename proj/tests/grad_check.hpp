#pragma once

#include <algorithm>
#include <cmath>
#include <cstdint>
#include <vector>

#include <torch/torch.h>

#include "fdct/denoiser.hpp"
#include "fdct/seed.hpp"
#include "fdct/tensor_util.hpp"

namespace fdct::testing {

struct GradCheckResult {
    int coordinates = 0;
    int within_tolerance = 0;
    double worst_relative_error = 0.0;
};

// Compares autograd against central differences of L = sum(w * f(x_t, t, c))
// on `coordinates` randomly chosen parameters. Runs in double precision.
inline GradCheckResult check_gradients(const model::DenoiserConfig& cfg, std::uint64_t seed, int coordinates,
                                       double tolerance, double h = 1e-6) {
    model::Denoiser d(cfg, seed);
    auto net = d.network();
    net->to(torch::kFloat64);
    net->train();
    auto gen = make_generator(seed + 1);
    const auto opts = torch::TensorOptions().dtype(torch::kFloat64);
    const auto side = cfg.input_side;
    auto x = torch::randn({2, 1, side, side}, gen, opts);
    auto c = torch::rand({2, 1, side, side}, gen, opts);
    auto t = torch::tensor({17.0, 640.0}, opts);
    auto w = torch::randn({2, 1, side, side}, gen, opts);
    auto objective = [&] { return (net->forward(x, t, c) * w).sum(); };

    net->zero_grad();
    objective().backward();

    auto params = net->parameters();
    std::vector<std::int64_t> offsets{0};
    for (const auto& p : params) offsets.push_back(offsets.back() + p.numel());
    Rng rng(seed + 2);

    GradCheckResult r;
    torch::NoGradGuard no_grad;
    for (int k = 0; k < coordinates; ++k) {
        const auto flat = static_cast<std::int64_t>(rng.index(static_cast<std::size_t>(offsets.back())));
        const auto which = static_cast<std::size_t>(std::upper_bound(offsets.begin(), offsets.end(), flat) - offsets.begin() - 1);
        auto p = params[which].view(-1);
        const auto i = flat - offsets[which];
        const double analytic = params[which].grad().view(-1)[i].item<double>();
        const double orig = p[i].item<double>();
        p[i] = orig + h;
        const double up = objective().item<double>();
        p[i] = orig - h;
        const double down = objective().item<double>();
        p[i] = orig;
        const double numeric = (up - down) / (2.0 * h);
        const double scale = std::max({std::abs(analytic), std::abs(numeric), 1e-8});
        const double rel = std::abs(analytic - numeric) / scale;
        r.worst_relative_error = std::max(r.worst_relative_error, rel);
        ++r.coordinates;
        if (rel <= tolerance) ++r.within_tolerance;
    }
    return r;
}

}  // namespace fdct::testing
