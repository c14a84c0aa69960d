#pragma once

#include <filesystem>
#include <string>
#include <vector>

#include "fdct/artifact_sim.hpp"

namespace fdct::sim {

// A simulated dataset directory holds manifest.jsonl (one record per pair)
// and cases/<case_id>/{condition,target,mask}/ volume containers in HU.

inline constexpr const char* kManifestFile = "manifest.jsonl";

struct DatasetRecord {
    std::string case_id;
    std::uint64_t phantom_seed = 0;
    std::uint64_t artifact_seed = 0;
    ArtifactRecipe recipe;
    bool has_lesion = false;
    std::string condition_path;  // relative to the dataset root
    std::string target_path;
    std::string mask_path;
};

std::string recipe_to_json(const ArtifactRecipe& r);
ArtifactRecipe recipe_from_json(const std::string& text);

/// Writes every case and the manifest. Volumes are single-slice containers.
void write_dataset(const std::vector<SimulatedCase>& cases, const std::filesystem::path& root,
                   double pixel_spacing_mm = 1.0);

std::vector<DatasetRecord> read_manifest(const std::filesystem::path& root);

/// Loads one pair from disk and windows it.
PairedSample load_pair(const std::filesystem::path& root, const DatasetRecord& record, const WindowSpec& window = {});

}  // namespace fdct::sim
