#include <gtest/gtest.h>

#include "fdct/dataset.hpp"
#include "fdct/error.hpp"
#include "fdct/volume_io.hpp"
#include "test_support.hpp"

using namespace fdct;
using namespace fdct::sim;
using fdct::testing::TempDir;

TEST(DatasetFiles, WriteReadRoundTrip) {
    TempDir tmp;
    std::vector<SimulatedCase> cases;
    for (std::size_t i = 0; i < 6; ++i) cases.push_back(simulate_case(i, 32, 9, {}));
    write_dataset(cases, tmp.path());
    const auto records = read_manifest(tmp.path());
    ASSERT_EQ(records.size(), 6u);
    for (std::size_t i = 0; i < 6; ++i) {
        EXPECT_EQ(records[i].case_id, cases[i].sample.case_id);
        EXPECT_EQ(records[i].phantom_seed, cases[i].phantom_seed);
        EXPECT_EQ(records[i].has_lesion, cases[i].has_lesion);
        EXPECT_EQ(recipe_to_json(records[i].recipe), recipe_to_json(cases[i].recipe));
        const auto pair = load_pair(tmp.path(), records[i]);
        for (std::size_t k = 0; k < pair.target.size(); ++k) {
            EXPECT_NEAR(pair.target.values[k], cases[i].sample.target.values[k], 1e-6);
            EXPECT_NEAR(pair.condition.values[k], cases[i].sample.condition.values[k], 1e-6);
        }
        EXPECT_EQ(pair.lesion_mask, cases[i].sample.lesion_mask);
        EXPECT_EQ(read_volume_header(tmp.path() / records[i].condition_path).modality, Modality::FDCT);
        EXPECT_EQ(read_volume_header(tmp.path() / records[i].target_path).modality, Modality::MDCT);
    }
}

TEST(DatasetFiles, RecipeJsonRoundTrip) {
    const auto r = draw_recipe(RecipeDistribution{}, 32, 1234);
    EXPECT_EQ(recipe_to_json(recipe_from_json(recipe_to_json(r))), recipe_to_json(r));
    EXPECT_THROW(recipe_from_json("{}"), ValidationError);
}

TEST(DatasetFiles, MissingManifest) {
    TempDir tmp;
    EXPECT_THROW(read_manifest(tmp.path()), IoError);
}
