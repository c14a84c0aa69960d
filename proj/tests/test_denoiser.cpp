#include <gtest/gtest.h>

#include "fdct/denoiser.hpp"
#include "fdct/error.hpp"
#include "fdct/tensor_util.hpp"
#include "grad_check.hpp"
#include "tiny_model.hpp"

using namespace fdct;
using namespace fdct::model;
using fdct::testing::tiny_config;

TEST(DenoiserConfig, TinyParameterCountByHand) {
    // conv_in 76, time MLP 544, down path 1904, middle 2976, up path 6304, head 45.
    EXPECT_EQ(param_count(tiny_config()), 11849);
    EXPECT_EQ(Denoiser(tiny_config(), 0).parameter_count(), 11849);
}

TEST(DenoiserConfig, CountMatchesModuleForPresets) {
    EXPECT_EQ(param_count(DenoiserConfig::toy_preset()), Denoiser(DenoiserConfig::toy_preset(), 0).parameter_count());
    auto c = tiny_config();
    c.res_blocks = 2;
    c.level_channels = {4, 8, 8};
    c.attention_levels = {0, 2};
    c.input_side = 16;
    EXPECT_EQ(param_count(c), Denoiser(c, 0).parameter_count());
}

TEST(DenoiserConfig, CountGrowsWithWidth) {
    auto c = tiny_config();
    const auto base = param_count(c);
    c.level_channels = {4, 16};
    EXPECT_GT(param_count(c), base);
    c = tiny_config();
    c.res_blocks = 2;
    EXPECT_GT(param_count(c), base);
    EXPECT_LT(param_count(DenoiserConfig::toy_preset()), param_count(DenoiserConfig::paper_preset()));
}

TEST(DenoiserConfig, PresetsValidateAndBadLayoutsReject) {
    EXPECT_NO_THROW(DenoiserConfig::paper_preset().validate());
    EXPECT_NO_THROW(DenoiserConfig::toy_preset().validate());
    EXPECT_EQ(DenoiserConfig::paper_preset().levels(), 9);
    EXPECT_EQ(DenoiserConfig::paper_preset().attention_heads, 64);

    auto bad = tiny_config();
    bad.attention_heads = 3;
    EXPECT_THROW(bad.validate(), ConfigurationError);
    bad = tiny_config();
    bad.input_side = 9;
    EXPECT_THROW(bad.validate(), ConfigurationError);
    bad = tiny_config();
    bad.attention_levels = {2};
    EXPECT_THROW(bad.validate(), ConfigurationError);
    bad = tiny_config();
    bad.level_channels = {4};
    EXPECT_THROW(bad.validate(), ConfigurationError);
    bad = tiny_config();
    bad.norm_groups = 3;
    EXPECT_THROW(bad.validate(), ConfigurationError);
    bad = tiny_config();
    bad.in_channels = 1;
    EXPECT_THROW(Denoiser(bad, 0), ConfigurationError);
}

TEST(DenoiserConfig, JsonRoundTrip) {
    for (const auto& c : {tiny_config(), DenoiserConfig::paper_preset(), DenoiserConfig::toy_preset()}) {
        EXPECT_EQ(DenoiserConfig::from_json(c.to_json()), c);
    }
    EXPECT_THROW(DenoiserConfig::from_json("{\"level_channels\": 3}"), ConfigurationError);
}

TEST(Denoiser, DeterministicInitAndShapes) {
    Denoiser a(tiny_config(), 5), b(tiny_config(), 5), c(tiny_config(), 6);
    auto gen = make_generator(1);
    auto x = torch::randn({3, 1, 8, 8}, gen);
    auto cond = torch::rand({3, 1, 8, 8}, gen);
    auto ya = a.denoise(x, 10, cond);
    EXPECT_EQ(ya.sizes(), x.sizes());
    EXPECT_TRUE(torch::equal(ya, b.denoise(x, 10, cond)));
    EXPECT_FALSE(torch::equal(ya, c.denoise(x, 10, cond)));
    EXPECT_EQ(a.denoise(x[0][0], 10, cond[0][0]).sizes(), x[0][0].sizes());
    EXPECT_THROW(a.denoise(torch::zeros({1, 1, 7, 7}), 1, torch::zeros({1, 1, 7, 7})), ModelContractError);
    EXPECT_THROW(a.denoise(x, 1, cond[0]), ModelContractError);
    EXPECT_THROW(a.denoise(x, 0, cond), ValidationError);
}

TEST(Denoiser, BatchItemsAreIndependent) {
    Denoiser d(tiny_config(), 2);
    auto gen = make_generator(3);
    auto x = torch::randn({4, 1, 8, 8}, gen);
    auto cond = torch::rand({4, 1, 8, 8}, gen);
    auto batch = d.denoise(x, 50, cond);
    for (int i = 0; i < 4; ++i) {
        auto single = d.denoise(x.slice(0, i, i + 1), 50, cond.slice(0, i, i + 1));
        EXPECT_TRUE(torch::allclose(batch.slice(0, i, i + 1), single, 1e-5, 1e-6));
    }
}

TEST(Denoiser, TimestepEmbedding) {
    auto e = timestep_embedding(torch::tensor({0.0, 5.0}, torch::kFloat64), 8);
    ASSERT_EQ(e.sizes(), (torch::IntArrayRef{2, 8}));
    for (int k = 0; k < 4; ++k) {
        EXPECT_DOUBLE_EQ(e[0][k].item<double>(), 1.0);
        EXPECT_DOUBLE_EQ(e[0][4 + k].item<double>(), 0.0);
        const double f = std::exp(-std::log(10000.0) * k / 4.0);
        EXPECT_NEAR(e[1][k].item<double>(), std::cos(5.0 * f), 1e-12);
        EXPECT_NEAR(e[1][4 + k].item<double>(), std::sin(5.0 * f), 1e-12);
    }
}

TEST(Denoiser, AnalyticGradientsMatchFiniteDifferences) {
    const auto r = fdct::testing::check_gradients(tiny_config(), 11, 200, 1e-2);
    EXPECT_GE(r.within_tolerance, 190) << "worst relative error " << r.worst_relative_error;
}
