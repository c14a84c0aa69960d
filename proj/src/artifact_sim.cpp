#include "fdct/artifact_sim.hpp"

#include <algorithm>
#include <cmath>
#include <cstdio>
#include <numbers>

#include "fdct/error.hpp"
#include "fdct/seed.hpp"

namespace fdct::sim {

namespace {

double center(std::size_t n) { return (static_cast<double>(n) - 1.0) / 2.0; }

double sample_clamped(const Image2D& img, double y, double x) {
    y = std::clamp(y, 0.0, static_cast<double>(img.rows - 1));
    x = std::clamp(x, 0.0, static_cast<double>(img.cols - 1));
    const auto y0 = std::min(static_cast<std::size_t>(y), img.rows > 1 ? img.rows - 2 : 0);
    const auto x0 = std::min(static_cast<std::size_t>(x), img.cols > 1 ? img.cols - 2 : 0);
    const auto y1 = std::min(y0 + 1, img.rows - 1);
    const auto x1 = std::min(x0 + 1, img.cols - 1);
    const double ty = y - static_cast<double>(y0);
    const double tx = x - static_cast<double>(x0);
    const double top = img.at(y0, x0) * (1.0 - tx) + img.at(y0, x1) * tx;
    const double bottom = img.at(y1, x0) * (1.0 - tx) + img.at(y1, x1) * tx;
    return top * (1.0 - ty) + bottom * ty;
}

}  // namespace

Phantom make_phantom(std::uint64_t seed, int side, const TissueParams& tissue) {
    if (side < 16) throw ValidationError("phantom side must be at least 16 pixels");
    Rng rng(seed);
    const auto n = static_cast<std::size_t>(side);
    const double s = static_cast<double>(side);

    Phantom p;
    p.seed = seed;
    p.tissue = tissue;
    p.gray_hu = tissue.gray_hu + rng.uniform(-tissue.tissue_jitter_hu, tissue.tissue_jitter_hu);
    p.white_hu = tissue.white_hu + rng.uniform(-tissue.tissue_jitter_hu, tissue.tissue_jitter_hu);

    const double cy = center(n) + rng.uniform(-0.03, 0.03) * s;
    const double cx = center(n) + rng.uniform(-0.03, 0.03) * s;
    const double ax = s * rng.uniform(0.38, 0.45);
    const double ay = s * rng.uniform(0.32, 0.40);
    const double white_radius = rng.uniform(0.70, 0.82);
    const int folds = rng.integer(5, 9);
    const double fold_phase = rng.uniform(0.0, 2.0 * std::numbers::pi);

    p.has_lesion = rng.uniform() < tissue.lesion_probability;
    double ly = 0.0, lx = 0.0, lr = 0.0;
    if (p.has_lesion) {
        const double rho = 0.55 * std::sqrt(rng.uniform());
        const double theta = rng.uniform(0.0, 2.0 * std::numbers::pi);
        ly = cy + rho * ay * std::sin(theta);
        lx = cx + rho * ax * std::cos(theta);
        lr = std::max(1.5, s * rng.uniform(0.06, 0.11));
        p.lesion_hu = rng.uniform(tissue.lesion_min_hu, tissue.lesion_max_hu);
    }

    p.clean = Image2D(n, n, tissue.background_hu);
    p.lesion_mask = Image2D(n, n, 0.0);
    for (std::size_t y = 0; y < n; ++y) {
        for (std::size_t x = 0; x < n; ++x) {
            const double dy = (static_cast<double>(y) - cy) / ay;
            const double dx = (static_cast<double>(x) - cx) / ax;
            const double rho = std::sqrt(dy * dy + dx * dx);
            if (rho > 1.0) continue;
            const double theta = std::atan2(dy, dx);
            const double boundary = white_radius * (1.0 + 0.06 * std::sin(folds * theta + fold_phase));
            double value = rho < boundary ? p.white_hu : p.gray_hu;
            if (p.has_lesion) {
                const double ey = static_cast<double>(y) - ly;
                const double ex = static_cast<double>(x) - lx;
                if (ey * ey + ex * ex <= lr * lr) {
                    value = p.lesion_hu;
                    p.lesion_mask.at(y, x) = 1.0;
                }
            }
            p.clean.at(y, x) = value;
        }
    }
    return p;
}

void ArtifactRecipe::validate() const {
    auto finite_nonneg = [](double v, const char* what) {
        if (!std::isfinite(v) || v < 0.0) throw ValidationError(std::string(what) + " must be finite and >= 0");
    };
    finite_nonneg(cupping_hu, "cupping strength");
    finite_nonneg(noise_sigma_hu, "noise sigma");
    finite_nonneg(ghost_weight, "ghost weight");
    if (ghost_weight > 0.5) throw ValidationError("ghost weight must be <= 0.5");
    for (const auto& r : rings) {
        finite_nonneg(r.amplitude_hu, "ring amplitude");
        finite_nonneg(r.radius_px, "ring radius");
        if (!(r.width_px > 0.0) || !std::isfinite(r.width_px)) throw ValidationError("ring width must be > 0");
    }
    for (double c : inhomogeneity_hu) {
        if (!std::isfinite(c)) throw ValidationError("inhomogeneity coefficient must be finite");
    }
    if (!std::isfinite(motion_shift_x_px) || !std::isfinite(motion_shift_y_px)) {
        throw ValidationError("motion shift must be finite");
    }
}

ArtifactRecipe ArtifactRecipe::scaled(double factor) const {
    ArtifactRecipe r = *this;
    r.cupping_hu *= factor;
    for (auto& ring : r.rings) ring.amplitude_hu *= factor;
    for (auto& c : r.inhomogeneity_hu) c *= factor;
    r.motion_shift_x_px *= factor;
    r.motion_shift_y_px *= factor;
    r.ghost_weight = std::min(0.5, r.ghost_weight * factor);
    r.noise_sigma_hu *= factor;
    return r;
}

bool ArtifactRecipe::is_null() const {
    const bool no_rings = std::all_of(rings.begin(), rings.end(), [](const RingSpec& r) { return r.amplitude_hu == 0.0; });
    const bool no_field = std::all_of(inhomogeneity_hu.begin(), inhomogeneity_hu.end(), [](double c) { return c == 0.0; });
    return cupping_hu == 0.0 && no_rings && no_field && ghost_weight == 0.0 && noise_sigma_hu == 0.0;
}

Image2D inject_artifacts(const Image2D& clean, const ArtifactRecipe& recipe, std::uint64_t seed) {
    recipe.validate();
    Image2D img = clean;
    const double cy = center(img.rows);
    const double cx = center(img.cols);
    const double half_diagonal = std::sqrt(cy * cy + cx * cx);
    auto radius = [&](std::size_t y, std::size_t x) {
        const double dy = static_cast<double>(y) - cy;
        const double dx = static_cast<double>(x) - cx;
        return std::sqrt(dy * dy + dx * dx);
    };

    if (recipe.cupping_hu != 0.0 && half_diagonal > 0.0) {
        for (std::size_t y = 0; y < img.rows; ++y) {
            for (std::size_t x = 0; x < img.cols; ++x) {
                const double q = radius(y, x) / half_diagonal;
                img.at(y, x) -= recipe.cupping_hu * q * q;
            }
        }
    }

    for (const auto& ring : recipe.rings) {
        if (ring.amplitude_hu == 0.0) continue;
        for (std::size_t y = 0; y < img.rows; ++y) {
            for (std::size_t x = 0; x < img.cols; ++x) {
                const double d = radius(y, x) - ring.radius_px;
                img.at(y, x) += ring.amplitude_hu * std::exp(-d * d / (2.0 * ring.width_px * ring.width_px));
            }
        }
    }

    const auto& c = recipe.inhomogeneity_hu;
    if (c[0] != 0.0 || c[1] != 0.0 || c[2] != 0.0) {
        const double du = img.cols > 1 ? static_cast<double>(img.cols - 1) : 1.0;
        const double dv = img.rows > 1 ? static_cast<double>(img.rows - 1) : 1.0;
        for (std::size_t y = 0; y < img.rows; ++y) {
            const double mv = std::cos(std::numbers::pi * static_cast<double>(y) / dv);
            for (std::size_t x = 0; x < img.cols; ++x) {
                const double mu = std::cos(std::numbers::pi * static_cast<double>(x) / du);
                img.at(y, x) += c[0] * mu + c[1] * mv + c[2] * mu * mv;
            }
        }
    }

    if (recipe.ghost_weight > 0.0) {
        const Image2D still = img;
        const double g = recipe.ghost_weight;
        for (std::size_t y = 0; y < img.rows; ++y) {
            for (std::size_t x = 0; x < img.cols; ++x) {
                const double moved = sample_clamped(still, static_cast<double>(y) - recipe.motion_shift_y_px,
                                                    static_cast<double>(x) - recipe.motion_shift_x_px);
                img.at(y, x) = (1.0 - g) * still.at(y, x) + g * moved;
            }
        }
    }

    if (recipe.noise_sigma_hu > 0.0) {
        Rng rng(seed);
        for (auto& v : img.values) v += recipe.noise_sigma_hu * rng.normal();
    }
    return img;
}

RecipeDistribution RecipeDistribution::none() {
    RecipeDistribution d;
    d.cupping_max_hu = 0.0;
    d.rings_max = 0;
    d.inhomogeneity_max_hu = 0.0;
    d.motion_probability = 0.0;
    d.noise_sigma_min_hu = 0.0;
    d.noise_sigma_max_hu = 0.0;
    return d;
}

ArtifactRecipe draw_recipe(const RecipeDistribution& dist, int side, std::uint64_t seed) {
    Rng rng(seed);
    ArtifactRecipe r;
    r.cupping_hu = rng.uniform(0.0, dist.cupping_max_hu);
    const int ring_count = dist.rings_max > 0 ? rng.integer(0, dist.rings_max) : 0;
    for (int i = 0; i < ring_count; ++i) {
        r.rings.push_back({rng.uniform(dist.ring_amplitude_min_hu, dist.ring_amplitude_max_hu),
                           rng.uniform(2.0, 0.5 * side), rng.uniform(dist.ring_width_min_px, dist.ring_width_max_px)});
    }
    for (auto& c : r.inhomogeneity_hu) c = rng.uniform(-dist.inhomogeneity_max_hu, dist.inhomogeneity_max_hu);
    if (rng.uniform() < dist.motion_probability) {
        const double shift = rng.uniform(1.0, dist.motion_shift_max_px);
        const double angle = rng.uniform(0.0, 2.0 * std::numbers::pi);
        r.motion_shift_x_px = shift * std::cos(angle);
        r.motion_shift_y_px = shift * std::sin(angle);
        r.ghost_weight = rng.uniform(0.4 * dist.ghost_weight_max, dist.ghost_weight_max);
    }
    r.noise_sigma_hu = rng.uniform(dist.noise_sigma_min_hu, dist.noise_sigma_max_hu);
    return r;
}

std::string case_name(std::size_t index) {
    char buf[32];
    std::snprintf(buf, sizeof buf, "case_%05zu", index);
    return buf;
}

SimulatedCase simulate_case(std::size_t index, int side, std::uint64_t seed, const RecipeDistribution& dist,
                            const WindowSpec& window) {
    SimulatedCase c;
    c.phantom_seed = derive_seed(seed, 1, index);
    c.artifact_seed = derive_seed(seed, 2, index);
    const auto phantom = make_phantom(c.phantom_seed, side);
    c.recipe = draw_recipe(dist, side, derive_seed(seed, 3, index));
    c.clean_hu = phantom.clean;
    c.corrupted_hu = inject_artifacts(phantom.clean, c.recipe, c.artifact_seed);
    c.has_lesion = phantom.has_lesion;
    c.sample = PairedSample{window_to_unit(c.corrupted_hu, window), window_to_unit(c.clean_hu, window),
                            phantom.lesion_mask, case_name(index)};
    return c;
}

std::vector<PairedSample> make_paired_dataset(std::size_t n, int side, std::uint64_t seed,
                                              const RecipeDistribution& dist, const WindowSpec& window) {
    if (n < 1) throw ValidationError("dataset size must be >= 1");
    std::vector<PairedSample> out;
    out.reserve(n);
    for (std::size_t i = 0; i < n; ++i) out.push_back(simulate_case(i, side, seed, dist, window).sample);
    return out;
}

}  // namespace fdct::sim
