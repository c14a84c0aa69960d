#pragma once

#include <array>
#include <cstdint>
#include <string>
#include <vector>

#include "fdct/volume.hpp"

namespace fdct::sim {

/// Simulator tissue parameters in HU. These are chosen to sit inside the
/// brain display window; they are not anatomical reference values.
struct TissueParams {
    double background_hu = -1000.0;
    double gray_hu = 38.0;
    double white_hu = 30.0;
    double tissue_jitter_hu = 2.0;  // per-phantom uniform offset of each tissue mean
    double lesion_min_hu = 65.0;
    double lesion_max_hu = 80.0;
    double lesion_probability = 0.5;
};

struct Phantom {
    Image2D clean;        // HU
    Image2D lesion_mask;  // 0 / 1
    std::uint64_t seed = 0;
    TissueParams tissue;
    double gray_hu = 0.0;
    double white_hu = 0.0;
    double lesion_hu = 0.0;
    bool has_lesion = false;
};

/// Elliptical two-compartment brain in air, with an optional hyperdense blob.
Phantom make_phantom(std::uint64_t seed, int side, const TissueParams& tissue = {});

struct RingSpec {
    double amplitude_hu = 0.0;
    double radius_px = 0.0;
    double width_px = 1.0;
};

/// Image-domain artifact model. Stages are applied in the order cupping,
/// rings, inhomogeneity, motion ghost, noise.
struct ArtifactRecipe {
    double cupping_hu = 0.0;
    std::vector<RingSpec> rings;
    std::array<double, 3> inhomogeneity_hu{};  // coefficients of cos(pi u), cos(pi v), cos(pi u) cos(pi v)
    double motion_shift_x_px = 0.0;
    double motion_shift_y_px = 0.0;
    double ghost_weight = 0.0;
    double noise_sigma_hu = 0.0;

    void validate() const;
    /// Multiplies every magnitude by factor; ghost weight saturates at 0.5.
    ArtifactRecipe scaled(double factor) const;
    bool is_null() const;
};

Image2D inject_artifacts(const Image2D& clean, const ArtifactRecipe& recipe, std::uint64_t seed);

/// Ranges from which per-case recipes are drawn.
struct RecipeDistribution {
    double cupping_max_hu = 30.0;
    int rings_max = 3;
    double ring_amplitude_min_hu = 5.0;
    double ring_amplitude_max_hu = 25.0;
    double ring_width_min_px = 0.5;
    double ring_width_max_px = 1.5;
    double inhomogeneity_max_hu = 12.0;
    double motion_probability = 0.3;
    double motion_shift_max_px = 3.0;
    double ghost_weight_max = 0.25;
    double noise_sigma_min_hu = 2.0;
    double noise_sigma_max_hu = 8.0;

    /// Every draw is the null recipe.
    static RecipeDistribution none();
};

ArtifactRecipe draw_recipe(const RecipeDistribution& dist, int side, std::uint64_t seed);

struct PairedSample {
    Image2D condition;  // windowed corrupted image, [0, 1]
    Image2D target;     // windowed clean image, [0, 1]
    Image2D lesion_mask;
    std::string case_id;
};

struct SimulatedCase {
    PairedSample sample;
    Image2D clean_hu;
    Image2D corrupted_hu;
    ArtifactRecipe recipe;
    std::uint64_t phantom_seed = 0;
    std::uint64_t artifact_seed = 0;
    bool has_lesion = false;
};

std::string case_name(std::size_t index);

SimulatedCase simulate_case(std::size_t index, int side, std::uint64_t seed, const RecipeDistribution& dist,
                            const WindowSpec& window = {});

std::vector<PairedSample> make_paired_dataset(std::size_t n, int side, std::uint64_t seed,
                                              const RecipeDistribution& dist = {}, const WindowSpec& window = {});

}  // namespace fdct::sim
