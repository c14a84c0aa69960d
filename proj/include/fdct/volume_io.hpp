#pragma once

#include <filesystem>
#include <optional>

#include "fdct/volume.hpp"

namespace fdct {

// On-disk container: a directory with meta.json and data.raw (little-endian
// float32, C order, z-major). When meta.json carries hu_window the payload is
// in the unit interval under that window; otherwise it is HU.

inline constexpr const char* kMetaFile = "meta.json";
inline constexpr const char* kDataFile = "data.raw";

struct VolumeHeader {
    Dims3 dims{};
    Spacing3 spacing_mm{};
    Modality modality = Modality::Synthetic;
    std::string case_id;
    std::optional<WindowSpec> hu_window;
};

VolumeHeader read_volume_header(const std::filesystem::path& dir);

/// Writes HU values as float32.
void save_volume(const HUVolume& v, const std::filesystem::path& dir);

/// Loads a container as HU. Normalized payloads are mapped back through their window.
HUVolume load_volume(const std::filesystem::path& dir);

/// Writes a normalized stack plus source_index.json next to the container files.
void save_stack(const NormalizedSliceStack& stack, Modality modality, const std::filesystem::path& dir);
NormalizedSliceStack load_stack(const std::filesystem::path& dir);

}  // namespace fdct
