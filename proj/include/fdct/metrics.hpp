#pragma once

#include <optional>
#include <span>
#include <string>
#include <utility>
#include <vector>

#include "fdct/volume.hpp"

namespace fdct::metrics {

/// Gaussian-window SSIM settings (Wang et al. defaults).
struct SsimParams {
    std::size_t window = 11;
    double sigma = 1.5;
    double k1 = 0.01;
    double k2 = 0.03;
};

/// PSNR reported when the two inputs are identical.
inline constexpr double kPsnrSentinelDb = 99.0;

/// Copy of v with every voxel clamped to the window bounds.
HUVolume clamp_to(const HUVolume& v, const WindowSpec& w);

double mse_hu(const HUVolume& pred, const HUVolume& target);

double psnr_from_mse(double mse, double peak);
double psnr(const HUVolume& pred, const HUVolume& target, double peak = 100.0);

/// Mean of the SSIM map over the valid (fully covered) window positions.
double ssim_2d(const Image2D& a, const Image2D& b, double range, const SsimParams& params = {});

/// 2D SSIM per z-slice, averaged over slices.
double ssim(const HUVolume& pred, const HUVolume& target, double range = 100.0, const SsimParams& params = {});

struct Summary {
    double mean = 0.0;
    double std = 0.0;  // population
};

Summary summarize(std::span<const double> values);

struct CaseMetrics {
    std::string case_id;
    double mse_hu2 = 0.0;
    double psnr_db = 0.0;
    double ssim = 0.0;
};

struct MetricsConfig {
    double psnr_peak = 100.0;
    double ssim_range = 100.0;
    SsimParams ssim;
    /// Both volumes are clamped to this window before scoring; nullopt scores raw HU.
    std::optional<WindowSpec> clamp_window = WindowSpec{};
};

struct MetricsReport {
    std::vector<CaseMetrics> per_case;  // sorted by case_id
    Summary mse_hu2;
    Summary psnr_db;
    Summary ssim;
    MetricsConfig config;
};

using VolumePair = std::pair<HUVolume, HUVolume>;  // (prediction, target)

CaseMetrics evaluate_case(const HUVolume& pred, const HUVolume& target, const MetricsConfig& config = {});
MetricsReport evaluate_cases(std::span<const VolumePair> pairs, const MetricsConfig& config = {});

/// Spread of per-run means when the same cases were sampled several times.
struct RunAggregate {
    std::size_t runs = 0;
    Summary mse_hu2;
    Summary psnr_db;
    Summary ssim;
};

RunAggregate aggregate_runs(std::span<const MetricsReport> runs);

std::string report_to_json(const MetricsReport& report, const std::optional<RunAggregate>& runs = std::nullopt);

/// Aligned text table with the columns MSE [HU^2], SSIM, PSNR.
std::string report_table(const MetricsReport& report, const std::string& label);

/// Mean absolute difference of adjacent slice means.
double slice_consistency(const HUVolume& vol);

/// Lesion contrast: mean inside the mask minus mean over the in-plane ring
/// obtained by dilating the mask by kLesionRingRadius pixels.
inline constexpr int kLesionRingRadius = 3;
double lesion_contrast(const HUVolume& vol, const HUVolume& mask);

/// lesion_contrast(pred) / lesion_contrast(target). Mask voxels are those > 0.5.
double lesion_preservation(const HUVolume& pred, const HUVolume& target, const HUVolume& mask);

}  // namespace fdct::metrics
