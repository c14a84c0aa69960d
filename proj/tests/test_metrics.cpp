#include <gtest/gtest.h>

#include <cmath>
#include <random>

#include <json.hpp>

#include "fdct/error.hpp"
#include "fdct/metrics.hpp"
#include "metric_oracles.hpp"
#include "test_support.hpp"

using namespace fdct;
using namespace fdct::metrics;
using fdct::testing::random_image;
using fdct::testing::volume_of;
using fdct::testing::oracle_mse;
using fdct::testing::oracle_ssim;
using fdct::testing::rel;

TEST(Mse, HandValues) {
    const Image2D t(2, 2, 40.0);
    EXPECT_EQ(mse_hu(volume_of(t), volume_of(t)), 0.0);
    EXPECT_DOUBLE_EQ(mse_hu(volume_of(Image2D(2, 2, 50.0)), volume_of(t)), 100.0);
    const Image2D a(1, 2, std::vector<double>{3, -4}), z(1, 2, 0.0);
    EXPECT_DOUBLE_EQ(mse_hu(volume_of(a), volume_of(z)), 12.5);
    EXPECT_THROW(mse_hu(volume_of(Image2D(2, 3)), volume_of(t)), ValidationError);
}

TEST(Psnr, HandValuesAndSentinel) {
    EXPECT_DOUBLE_EQ(psnr_from_mse(100.0, 100.0), 20.0);
    EXPECT_EQ(psnr_from_mse(0.0, 100.0), kPsnrSentinelDb);
    const Image2D t(3, 3, 20.0);
    EXPECT_EQ(psnr(volume_of(t), volume_of(t)), 99.0);
    EXPECT_NEAR(psnr_from_mse(78.22, 100.0), 21.07, 0.005);
}

TEST(Psnr, StrictlyDecreasingInMse) {
    double prev = psnr_from_mse(1e-6, 100);
    for (double m = 1e-3; m < 1e5; m *= 1.7) {
        const double p = psnr_from_mse(m, 100);
        EXPECT_LT(p, prev);
        prev = p;
    }
}

TEST(Ssim, IdentityAndConstantClosedForm) {
    std::mt19937_64 rng(4);
    const auto x = random_image(16, 16, 0, 100, rng);
    EXPECT_NEAR(ssim_2d(x, x, 100.0), 1.0, 1e-12);
    const double got = ssim_2d(Image2D(16, 16, 0.0), Image2D(16, 16, 100.0), 100.0);
    EXPECT_NEAR(got, 1.0 / 10001.0, 1e-18);
    EXPECT_THROW(ssim_2d(Image2D(10, 10), Image2D(10, 10), 100.0), ValidationError);
}

TEST(Ssim, MatchesDirectDefinitionOracle) {
    std::mt19937_64 rng(8);
    for (int trial = 0; trial < 100; ++trial) {
        const auto a = random_image(16, 16, 0, 100, rng);
        const auto b = random_image(16, 16, 0, 100, rng);
        EXPECT_LE(rel(ssim_2d(a, b, 100.0), oracle_ssim(a, b, 100.0L)), 1e-9);
        EXPECT_LE(rel(mse_hu(volume_of(a), volume_of(b)), oracle_mse(a, b)), 1e-9);
        const long double op = 10.0L * std::log10(100.0L * 100.0L / oracle_mse(a, b));
        EXPECT_LE(rel(psnr(volume_of(a), volume_of(b)), op), 1e-9);
    }
}

TEST(Ssim, BoundedAndPerSliceAveraged) {
    std::mt19937_64 rng(6);
    std::vector<Image2D> pa, pb;
    double manual = 0;
    for (int z = 0; z < 3; ++z) {
        pa.push_back(random_image(12, 12, 0, 100, rng));
        pb.push_back(random_image(12, 12, 0, 100, rng));
        manual += ssim_2d(pa.back(), pb.back(), 100.0) / 3.0;
    }
    const auto va = HUVolume::from_slices(pa, {1, 1, 1}, Modality::Prediction, "c");
    const auto vb = HUVolume::from_slices(pb, {1, 1, 1}, Modality::MDCT, "c");
    const double s = ssim(va, vb);
    EXPECT_NEAR(s, manual, 1e-12);
    EXPECT_GE(s, -1.0);
    EXPECT_LE(s, 1.0);
}

TEST(Aggregate, MeanAndPopulationStd) {
    const std::vector<double> v{50.0, 150.0};
    const auto s = summarize(v);
    EXPECT_DOUBLE_EQ(s.mean, 100.0);
    EXPECT_DOUBLE_EQ(s.std, 50.0);
    const std::vector<double> one{7.0};
    EXPECT_EQ(summarize(one).std, 0.0);
}

TEST(Aggregate, EvaluateCasesSortedAndRecomputable) {
    const Image2D t(12, 12, 50.0);
    std::vector<VolumePair> pairs;
    pairs.emplace_back(volume_of(Image2D(12, 12, 50.0 + std::sqrt(150.0)), Modality::Prediction, "b"), volume_of(t, Modality::MDCT, "b"));
    pairs.emplace_back(volume_of(Image2D(12, 12, 50.0 + std::sqrt(50.0)), Modality::Prediction, "a"), volume_of(t, Modality::MDCT, "a"));
    const auto r = evaluate_cases(pairs);
    ASSERT_EQ(r.per_case.size(), 2u);
    EXPECT_EQ(r.per_case[0].case_id, "a");
    EXPECT_NEAR(r.mse_hu2.mean, 100.0, 1e-9);
    EXPECT_NEAR(r.mse_hu2.std, 50.0, 1e-9);
    std::vector<double> ps{r.per_case[0].psnr_db, r.per_case[1].psnr_db};
    EXPECT_DOUBLE_EQ(summarize(ps).mean, r.psnr_db.mean);

    const auto j = nlohmann::json::parse(report_to_json(r));
    EXPECT_TRUE(j.contains("aggregate_over_cases"));
    EXPECT_EQ(j["config"]["psnr_peak_hu"], 100.0);
    const auto table = report_table(r, "toy");
    EXPECT_NE(table.find("MSE [HU^2]"), std::string::npos);
    EXPECT_NE(table.find("SSIM"), std::string::npos);
    EXPECT_NE(table.find("PSNR"), std::string::npos);
}

TEST(Aggregate, SingleCaseHasZeroStd) {
    const Image2D t(12, 12, 50.0);
    const std::vector<VolumePair> pairs{{volume_of(Image2D(12, 12, 55.0)), volume_of(t)}};
    EXPECT_EQ(evaluate_cases(pairs).mse_hu2.std, 0.0);
}

TEST(Aggregate, MeanPsnrIsNotPsnrOfMeanMse) {
    const std::vector<double> mses{10.0, 1000.0};
    const std::vector<double> psnrs{psnr_from_mse(10.0, 100), psnr_from_mse(1000.0, 100)};
    EXPECT_DOUBLE_EQ(summarize(psnrs).mean, 20.0);
    EXPECT_NEAR(psnr_from_mse(summarize(mses).mean, 100), 12.967, 1e-3);
}

TEST(Aggregate, ShapeMismatchNamesCase) {
    std::vector<VolumePair> pairs{{volume_of(Image2D(12, 12), Modality::Prediction, "case_42"),
                                   volume_of(Image2D(12, 13), Modality::MDCT, "case_42")}};
    try {
        evaluate_cases(pairs);
        FAIL();
    } catch (const ValidationError& e) {
        EXPECT_NE(std::string(e.what()).find("case_42"), std::string::npos);
    }
}

TEST(Aggregate, RunsAggregation) {
    MetricsReport a, b;
    a.mse_hu2.mean = 10;
    b.mse_hu2.mean = 20;
    const std::vector<MetricsReport> runs{a, b};
    const auto agg = aggregate_runs(runs);
    EXPECT_EQ(agg.runs, 2u);
    EXPECT_DOUBLE_EQ(agg.mse_hu2.mean, 15.0);
    EXPECT_DOUBLE_EQ(agg.mse_hu2.std, 5.0);
}

TEST(EvaluateCase, ClampsToWindowByDefault) {
    const auto pred = volume_of(Image2D(12, 12, -1000.0));
    const auto target = volume_of(Image2D(12, 12, 0.0));
    EXPECT_EQ(evaluate_case(pred, target).mse_hu2, 0.0);
    MetricsConfig raw;
    raw.clamp_window.reset();
    EXPECT_DOUBLE_EQ(evaluate_case(pred, target, raw).mse_hu2, 1e6);
}

TEST(SliceConsistency, HandValues) {
    const auto v = HUVolume::from_slices({Image2D(2, 2, 10.0), Image2D(2, 2, 20.0), Image2D(2, 2, 20.0)}, {1, 1, 1},
                                         Modality::Prediction, "c");
    EXPECT_DOUBLE_EQ(slice_consistency(v), 5.0);
    const auto c = HUVolume::from_slices({Image2D(2, 2, 3.0), Image2D(2, 2, 3.0)}, {1, 1, 1}, Modality::Prediction, "c");
    EXPECT_EQ(slice_consistency(c), 0.0);
    EXPECT_THROW(slice_consistency(volume_of(Image2D(2, 2))), ValidationError);
}

namespace {

struct LesionScene {
    HUVolume mask = volume_of(Image2D(1, 1));
    Image2D base = Image2D(16, 16, 30.0);
    Image2D mask_img = Image2D(16, 16, 0.0);

    LesionScene() {
        for (std::size_t y = 6; y < 10; ++y) {
            for (std::size_t x = 6; x < 10; ++x) mask_img.at(y, x) = 1.0;
        }
        mask = volume_of(mask_img);
    }
    HUVolume with_lesion(double lesion_hu) const {
        auto img = base;
        for (std::size_t i = 0; i < img.size(); ++i) {
            if (mask_img.values[i] > 0.5) img.values[i] = lesion_hu;
        }
        return volume_of(img);
    }
};

}  // namespace

TEST(LesionPreservation, HandValues) {
    LesionScene s;
    const auto target = s.with_lesion(60.0);  // contrast 30
    EXPECT_DOUBLE_EQ(lesion_contrast(target, s.mask), 30.0);
    EXPECT_DOUBLE_EQ(lesion_preservation(target, target, s.mask), 1.0);
    EXPECT_DOUBLE_EQ(lesion_preservation(s.with_lesion(30.0), target, s.mask), 0.0);
    EXPECT_DOUBLE_EQ(lesion_preservation(s.with_lesion(45.0), target, s.mask), 0.5);
}

TEST(LesionPreservation, RingIsThreePixelDiskDilation) {
    // Single-pixel mask: ring = disk of radius 3 minus centre = 28 pixels.
    Image2D m(16, 16, 0.0), img(16, 16, 0.0);
    m.at(8, 8) = 1.0;
    int ring = 0;
    for (int y = 0; y < 16; ++y) {
        for (int x = 0; x < 16; ++x) {
            const int d2 = (y - 8) * (y - 8) + (x - 8) * (x - 8);
            if (d2 > 0 && d2 <= 9) {
                img.at(y, x) = 28.0;
                ++ring;
            }
        }
    }
    EXPECT_EQ(ring, 28);
    img.at(8, 8) = 100.0;
    // Ring mean is 28 only if exactly those pixels are averaged.
    EXPECT_DOUBLE_EQ(lesion_contrast(volume_of(img), volume_of(m)), 72.0);
}

TEST(LesionPreservation, Errors) {
    LesionScene s;
    const auto target = s.with_lesion(60.0);
    EXPECT_THROW(lesion_preservation(target, target, volume_of(Image2D(16, 16, 0.0))), ValidationError);
    EXPECT_THROW(lesion_preservation(target, s.with_lesion(30.5), s.mask), UndefinedContrastError);
}
