#include "fdct/metrics.hpp"

#include <algorithm>
#include <cmath>
#include <cstdio>
#include <sstream>

#include <json.hpp>

#include "fdct/error.hpp"

namespace fdct::metrics {

namespace {

void require_same_shape(const HUVolume& a, const HUVolume& b) {
    if (a.dims() != b.dims()) {
        throw ValidationError("shape mismatch between '" + a.case_id() + "' and '" + b.case_id() + "'");
    }
}

std::vector<double> gaussian_kernel(std::size_t size, double sigma) {
    std::vector<double> k(size);
    const double c = static_cast<double>(size - 1) / 2.0;
    double sum = 0.0;
    for (std::size_t i = 0; i < size; ++i) {
        const double d = static_cast<double>(i) - c;
        k[i] = std::exp(-d * d / (2.0 * sigma * sigma));
        sum += k[i];
    }
    for (auto& v : k) v /= sum;
    return k;
}

// Separable "valid" filtering: output is (rows-k+1) x (cols-k+1).
Image2D filter_valid(const Image2D& img, const std::vector<double>& k) {
    const auto n = k.size();
    const auto out_cols = img.cols - n + 1;
    const auto out_rows = img.rows - n + 1;
    Image2D horizontal(img.rows, out_cols);
    for (std::size_t r = 0; r < img.rows; ++r) {
        for (std::size_t c = 0; c < out_cols; ++c) {
            double acc = 0.0;
            for (std::size_t i = 0; i < n; ++i) acc += k[i] * img.at(r, c + i);
            horizontal.at(r, c) = acc;
        }
    }
    Image2D out(out_rows, out_cols);
    for (std::size_t r = 0; r < out_rows; ++r) {
        for (std::size_t c = 0; c < out_cols; ++c) {
            double acc = 0.0;
            for (std::size_t i = 0; i < n; ++i) acc += k[i] * horizontal.at(r + i, c);
            out.at(r, c) = acc;
        }
    }
    return out;
}

std::vector<bool> mask_bits(const HUVolume& mask) {
    std::vector<bool> bits(mask.voxel_count());
    for (std::size_t i = 0; i < bits.size(); ++i) bits[i] = mask.data()[i] > 0.5;
    return bits;
}

}  // namespace

HUVolume clamp_to(const HUVolume& v, const WindowSpec& w) {
    std::vector<double> data(v.data().begin(), v.data().end());
    for (auto& x : data) x = std::clamp(x, w.lower(), w.upper());
    return HUVolume(v.dims(), std::move(data), v.spacing_mm(), v.modality(), v.case_id());
}

double mse_hu(const HUVolume& pred, const HUVolume& target) {
    require_same_shape(pred, target);
    double acc = 0.0;
    for (std::size_t i = 0; i < pred.voxel_count(); ++i) {
        const double d = pred.data()[i] - target.data()[i];
        acc += d * d;
    }
    return acc / static_cast<double>(pred.voxel_count());
}

double psnr_from_mse(double mse, double peak) {
    if (!(peak > 0.0)) throw ValidationError("PSNR peak must be positive");
    if (mse < 0.0) throw ValidationError("MSE must be non-negative");
    if (mse == 0.0) return kPsnrSentinelDb;
    return 10.0 * std::log10(peak * peak / mse);
}

double psnr(const HUVolume& pred, const HUVolume& target, double peak) {
    return psnr_from_mse(mse_hu(pred, target), peak);
}

double ssim_2d(const Image2D& a, const Image2D& b, double range, const SsimParams& params) {
    if (!a.same_shape(b)) throw ValidationError("SSIM inputs differ in shape");
    if (a.rows < params.window || a.cols < params.window) {
        throw ValidationError("slice smaller than the " + std::to_string(params.window) + "-pixel SSIM window");
    }
    if (!(range > 0.0)) throw ValidationError("SSIM range must be positive");
    const double c1 = (params.k1 * range) * (params.k1 * range);
    const double c2 = (params.k2 * range) * (params.k2 * range);
    const auto k = gaussian_kernel(params.window, params.sigma);

    Image2D aa(a.rows, a.cols), bb(a.rows, a.cols), ab(a.rows, a.cols);
    for (std::size_t i = 0; i < a.size(); ++i) {
        aa.values[i] = a.values[i] * a.values[i];
        bb.values[i] = b.values[i] * b.values[i];
        ab.values[i] = a.values[i] * b.values[i];
    }
    const auto mu_a = filter_valid(a, k);
    const auto mu_b = filter_valid(b, k);
    const auto e_aa = filter_valid(aa, k);
    const auto e_bb = filter_valid(bb, k);
    const auto e_ab = filter_valid(ab, k);

    double acc = 0.0;
    for (std::size_t i = 0; i < mu_a.size(); ++i) {
        const double ma = mu_a.values[i];
        const double mb = mu_b.values[i];
        const double va = e_aa.values[i] - ma * ma;
        const double vb = e_bb.values[i] - mb * mb;
        const double cov = e_ab.values[i] - ma * mb;
        acc += ((2.0 * ma * mb + c1) * (2.0 * cov + c2)) / ((ma * ma + mb * mb + c1) * (va + vb + c2));
    }
    return acc / static_cast<double>(mu_a.size());
}

double ssim(const HUVolume& pred, const HUVolume& target, double range, const SsimParams& params) {
    require_same_shape(pred, target);
    double acc = 0.0;
    for (std::size_t z = 0; z < pred.depth(); ++z) acc += ssim_2d(pred.slice(z), target.slice(z), range, params);
    return acc / static_cast<double>(pred.depth());
}

Summary summarize(std::span<const double> values) {
    if (values.empty()) return {};
    double mean = 0.0;
    for (double v : values) mean += v;
    mean /= static_cast<double>(values.size());
    double var = 0.0;
    for (double v : values) var += (v - mean) * (v - mean);
    var /= static_cast<double>(values.size());
    return {mean, std::sqrt(var)};
}

CaseMetrics evaluate_case(const HUVolume& pred, const HUVolume& target, const MetricsConfig& config) {
    if (pred.dims() != target.dims()) {
        throw ValidationError("case '" + target.case_id() + "': prediction and target differ in shape");
    }
    auto score = [&](const HUVolume& p, const HUVolume& t) {
        const double m = mse_hu(p, t);
        return CaseMetrics{target.case_id(), m, psnr_from_mse(m, config.psnr_peak),
                           ssim(p, t, config.ssim_range, config.ssim)};
    };
    if (config.clamp_window) return score(clamp_to(pred, *config.clamp_window), clamp_to(target, *config.clamp_window));
    return score(pred, target);
}

MetricsReport evaluate_cases(std::span<const VolumePair> pairs, const MetricsConfig& config) {
    if (pairs.empty()) throw ValidationError("no cases to evaluate");
    MetricsReport report;
    report.config = config;
    for (const auto& [pred, target] : pairs) report.per_case.push_back(evaluate_case(pred, target, config));
    std::stable_sort(report.per_case.begin(), report.per_case.end(),
                     [](const CaseMetrics& a, const CaseMetrics& b) { return a.case_id < b.case_id; });
    std::vector<double> m, p, s;
    for (const auto& c : report.per_case) {
        m.push_back(c.mse_hu2);
        p.push_back(c.psnr_db);
        s.push_back(c.ssim);
    }
    report.mse_hu2 = summarize(m);
    report.psnr_db = summarize(p);
    report.ssim = summarize(s);
    return report;
}

RunAggregate aggregate_runs(std::span<const MetricsReport> runs) {
    std::vector<double> m, p, s;
    for (const auto& r : runs) {
        m.push_back(r.mse_hu2.mean);
        p.push_back(r.psnr_db.mean);
        s.push_back(r.ssim.mean);
    }
    return {runs.size(), summarize(m), summarize(p), summarize(s)};
}

std::string report_to_json(const MetricsReport& report, const std::optional<RunAggregate>& runs) {
    using nlohmann::json;
    auto summary = [](const Summary& s) { return json{{"mean", s.mean}, {"std", s.std}}; };
    json j;
    j["per_case"] = json::array();
    for (const auto& c : report.per_case) {
        j["per_case"].push_back({{"case_id", c.case_id}, {"mse_hu2", c.mse_hu2}, {"psnr_db", c.psnr_db}, {"ssim", c.ssim}});
    }
    j["aggregate_over_cases"] = {{"mse_hu2", summary(report.mse_hu2)},
                                 {"psnr_db", summary(report.psnr_db)},
                                 {"ssim", summary(report.ssim)},
                                 {"std_kind", "population"}};
    if (runs) {
        j["aggregate_over_runs"] = {{"runs", runs->runs},
                                    {"mse_hu2", summary(runs->mse_hu2)},
                                    {"psnr_db", summary(runs->psnr_db)},
                                    {"ssim", summary(runs->ssim)},
                                    {"std_kind", "population"}};
    }
    json cfg{{"psnr_peak_hu", report.config.psnr_peak},
             {"ssim_range_hu", report.config.ssim_range},
             {"ssim_window", report.config.ssim.window},
             {"ssim_sigma", report.config.ssim.sigma},
             {"ssim_k1", report.config.ssim.k1},
             {"ssim_k2", report.config.ssim.k2}};
    if (report.config.clamp_window) {
        cfg["clamp_window"] = {{"level", report.config.clamp_window->level}, {"width", report.config.clamp_window->width}};
    }
    j["config"] = cfg;
    return j.dump(2);
}

std::string report_table(const MetricsReport& report, const std::string& label) {
    char line[256];
    std::ostringstream out;
    std::snprintf(line, sizeof line, "%-28s | %-20s | %-18s | %-16s\n", "Experiment", "MSE [HU^2]", "SSIM", "PSNR");
    out << line;
    out << std::string(28, '-') << "-+-" << std::string(20, '-') << "-+-" << std::string(18, '-') << "-+-"
        << std::string(16, '-') << "\n";
    char mse[32], ssim_s[32], psnr_s[32];
    std::snprintf(mse, sizeof mse, "%.2f +/- %.2f", report.mse_hu2.mean, report.mse_hu2.std);
    std::snprintf(ssim_s, sizeof ssim_s, "%.4f +/- %.4f", report.ssim.mean, report.ssim.std);
    std::snprintf(psnr_s, sizeof psnr_s, "%.2f +/- %.2f", report.psnr_db.mean, report.psnr_db.std);
    std::snprintf(line, sizeof line, "%-28s | %-20s | %-18s | %-16s\n", label.c_str(), mse, ssim_s, psnr_s);
    out << line;
    return out.str();
}

double slice_consistency(const HUVolume& vol) {
    if (vol.depth() < 2) throw ValidationError("slice consistency needs at least two slices");
    const auto n = vol.rows() * vol.cols();
    std::vector<double> means(vol.depth(), 0.0);
    for (std::size_t z = 0; z < vol.depth(); ++z) {
        for (std::size_t i = 0; i < n; ++i) means[z] += vol.data()[z * n + i];
        means[z] /= static_cast<double>(n);
    }
    double acc = 0.0;
    for (std::size_t z = 0; z + 1 < vol.depth(); ++z) acc += std::abs(means[z] - means[z + 1]);
    return acc / static_cast<double>(vol.depth() - 1);
}

double lesion_contrast(const HUVolume& vol, const HUVolume& mask) {
    if (vol.dims() != mask.dims()) throw ValidationError("mask shape differs from volume '" + vol.case_id() + "'");
    const auto inside = mask_bits(mask);
    const auto rows = static_cast<long>(vol.rows());
    const auto cols = static_cast<long>(vol.cols());
    const long r = kLesionRingRadius;
    double in_sum = 0.0, ring_sum = 0.0;
    std::size_t in_n = 0, ring_n = 0;
    for (std::size_t z = 0; z < vol.depth(); ++z) {
        const auto base = z * vol.rows() * vol.cols();
        for (long y = 0; y < rows; ++y) {
            for (long x = 0; x < cols; ++x) {
                const auto idx = base + static_cast<std::size_t>(y * cols + x);
                if (inside[idx]) {
                    in_sum += vol.data()[idx];
                    ++in_n;
                    continue;
                }
                bool near = false;
                for (long dy = -r; dy <= r && !near; ++dy) {
                    for (long dx = -r; dx <= r && !near; ++dx) {
                        if (dy * dy + dx * dx > r * r) continue;
                        const long yy = y + dy, xx = x + dx;
                        if (yy < 0 || yy >= rows || xx < 0 || xx >= cols) continue;
                        near = inside[base + static_cast<std::size_t>(yy * cols + xx)];
                    }
                }
                if (near) {
                    ring_sum += vol.data()[idx];
                    ++ring_n;
                }
            }
        }
    }
    if (in_n == 0) throw ValidationError("lesion mask is empty");
    if (ring_n == 0) throw ValidationError("lesion mask leaves no surrounding ring");
    return in_sum / static_cast<double>(in_n) - ring_sum / static_cast<double>(ring_n);
}

double lesion_preservation(const HUVolume& pred, const HUVolume& target, const HUVolume& mask) {
    if (pred.dims() != target.dims()) throw ValidationError("prediction and target differ in shape");
    const double target_contrast = lesion_contrast(target, mask);
    if (target_contrast < 1.0) {
        throw UndefinedContrastError("target lesion contrast below 1 HU in '" + target.case_id() + "'");
    }
    return lesion_contrast(pred, mask) / target_contrast;
}

}  // namespace fdct::metrics
