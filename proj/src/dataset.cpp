#include "fdct/dataset.hpp"

#include <fstream>

#include <json.hpp>

#include "fdct/error.hpp"
#include "fdct/volume_io.hpp"

namespace fdct::sim {

namespace fs = std::filesystem;
using nlohmann::json;

namespace {

json recipe_json(const ArtifactRecipe& r) {
    json rings = json::array();
    for (const auto& ring : r.rings) {
        rings.push_back({{"amplitude_hu", ring.amplitude_hu}, {"radius_px", ring.radius_px}, {"width_px", ring.width_px}});
    }
    return {{"cupping_hu", r.cupping_hu},
            {"rings", rings},
            {"inhomogeneity_hu", r.inhomogeneity_hu},
            {"motion", {{"shift_x_px", r.motion_shift_x_px}, {"shift_y_px", r.motion_shift_y_px}, {"ghost_weight", r.ghost_weight}}},
            {"noise_sigma_hu", r.noise_sigma_hu}};
}

ArtifactRecipe recipe_from(const json& j) {
    ArtifactRecipe r;
    r.cupping_hu = j.at("cupping_hu").get<double>();
    for (const auto& ring : j.at("rings")) {
        r.rings.push_back({ring.at("amplitude_hu").get<double>(), ring.at("radius_px").get<double>(),
                           ring.at("width_px").get<double>()});
    }
    r.inhomogeneity_hu = j.at("inhomogeneity_hu").get<std::array<double, 3>>();
    const auto& motion = j.at("motion");
    r.motion_shift_x_px = motion.at("shift_x_px").get<double>();
    r.motion_shift_y_px = motion.at("shift_y_px").get<double>();
    r.ghost_weight = motion.at("ghost_weight").get<double>();
    r.noise_sigma_hu = j.at("noise_sigma_hu").get<double>();
    r.validate();
    return r;
}

HUVolume single_slice(const Image2D& img, double spacing, Modality m, const std::string& id) {
    return HUVolume({1, img.rows, img.cols}, img.values, {spacing, spacing, spacing}, m, id);
}

}  // namespace

std::string recipe_to_json(const ArtifactRecipe& r) { return recipe_json(r).dump(); }

ArtifactRecipe recipe_from_json(const std::string& text) {
    try {
        return recipe_from(json::parse(text));
    } catch (const json::exception& e) {
        throw ValidationError(std::string("malformed recipe: ") + e.what());
    }
}

void write_dataset(const std::vector<SimulatedCase>& cases, const fs::path& root, double pixel_spacing_mm) {
    fs::create_directories(root);
    std::ofstream manifest(root / kManifestFile, std::ios::trunc);
    if (!manifest) throw IoError("cannot write " + (root / kManifestFile).string());
    for (const auto& c : cases) {
        const auto& id = c.sample.case_id;
        const std::string base = "cases/" + id + "/";
        save_volume(single_slice(c.corrupted_hu, pixel_spacing_mm, Modality::FDCT, id), root / (base + "condition"));
        save_volume(single_slice(c.clean_hu, pixel_spacing_mm, Modality::MDCT, id), root / (base + "target"));
        save_volume(single_slice(c.sample.lesion_mask, pixel_spacing_mm, Modality::Synthetic, id), root / (base + "mask"));
        json rec{{"case_id", id},
                 {"phantom_seed", c.phantom_seed},
                 {"artifact_seed", c.artifact_seed},
                 {"recipe", recipe_json(c.recipe)},
                 {"has_lesion", c.has_lesion},
                 {"condition", base + "condition"},
                 {"target", base + "target"},
                 {"mask", base + "mask"}};
        manifest << rec.dump() << "\n";
    }
}

std::vector<DatasetRecord> read_manifest(const fs::path& root) {
    std::ifstream in(root / kManifestFile);
    if (!in) throw IoError("no dataset manifest at " + (root / kManifestFile).string());
    std::vector<DatasetRecord> out;
    std::string line;
    std::size_t lineno = 0;
    while (std::getline(in, line)) {
        ++lineno;
        if (line.empty()) continue;
        try {
            const auto j = json::parse(line);
            DatasetRecord r;
            r.case_id = j.at("case_id").get<std::string>();
            r.phantom_seed = j.at("phantom_seed").get<std::uint64_t>();
            r.artifact_seed = j.at("artifact_seed").get<std::uint64_t>();
            r.recipe = recipe_from(j.at("recipe"));
            r.has_lesion = j.at("has_lesion").get<bool>();
            r.condition_path = j.at("condition").get<std::string>();
            r.target_path = j.at("target").get<std::string>();
            r.mask_path = j.at("mask").get<std::string>();
            out.push_back(std::move(r));
        } catch (const json::exception& e) {
            throw IoError((root / kManifestFile).string() + ":" + std::to_string(lineno) + ": " + e.what());
        }
    }
    return out;
}

PairedSample load_pair(const fs::path& root, const DatasetRecord& record, const WindowSpec& window) {
    const auto condition = load_volume(root / record.condition_path);
    const auto target = load_volume(root / record.target_path);
    const auto mask = load_volume(root / record.mask_path);
    if (condition.dims() != target.dims() || condition.depth() != 1) {
        throw PairingError("case '" + record.case_id + "': condition and target must be matching single slices");
    }
    return {window_to_unit(condition.slice(0), window), window_to_unit(target.slice(0), window), mask.slice(0),
            record.case_id};
}

}  // namespace fdct::sim
