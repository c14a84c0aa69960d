#include "fdct/volume_io.hpp"

#include <bit>
#include <cstdint>
#include <cstring>
#include <fstream>

#include <json.hpp>

#include "fdct/error.hpp"

namespace fdct {

namespace fs = std::filesystem;
using nlohmann::json;

namespace {

std::uint32_t to_little(std::uint32_t v) {
    if constexpr (std::endian::native == std::endian::big) {
        return ((v & 0xFFu) << 24) | ((v & 0xFF00u) << 8) | ((v >> 8) & 0xFF00u) | (v >> 24);
    }
    return v;
}

void write_text(const fs::path& p, const std::string& text) {
    std::ofstream out(p, std::ios::binary | std::ios::trunc);
    if (!out) throw IoError("cannot write " + p.string());
    out << text;
}

json read_json(const fs::path& p) {
    std::ifstream in(p);
    if (!in) throw IoError("cannot read " + p.string());
    try {
        return json::parse(in);
    } catch (const json::exception& e) {
        throw IoError("malformed JSON in " + p.string() + ": " + e.what());
    }
}

void write_container(const fs::path& dir, const VolumeHeader& h, const std::vector<double>& values) {
    fs::create_directories(dir);
    json meta;
    meta["dims"] = {h.dims[0], h.dims[1], h.dims[2]};
    meta["spacing_mm"] = {h.spacing_mm[0], h.spacing_mm[1], h.spacing_mm[2]};
    meta["dtype"] = "float32";
    meta["byte_order"] = "little";
    meta["modality"] = std::string(to_string(h.modality));
    meta["case_id"] = h.case_id;
    if (h.hu_window) meta["hu_window"] = {{"level", h.hu_window->level}, {"width", h.hu_window->width}};
    write_text(dir / kMetaFile, meta.dump(2) + "\n");

    std::vector<std::uint32_t> raw(values.size());
    for (std::size_t i = 0; i < values.size(); ++i) {
        raw[i] = to_little(std::bit_cast<std::uint32_t>(static_cast<float>(values[i])));
    }
    std::ofstream out(dir / kDataFile, std::ios::binary | std::ios::trunc);
    if (!out) throw IoError("cannot write " + (dir / kDataFile).string());
    out.write(reinterpret_cast<const char*>(raw.data()), static_cast<std::streamsize>(raw.size() * sizeof(std::uint32_t)));
}

std::vector<double> read_payload(const fs::path& dir, const VolumeHeader& h) {
    const auto path = dir / kDataFile;
    const std::uintmax_t expected = 4ull * h.dims[0] * h.dims[1] * h.dims[2];
    std::error_code ec;
    const auto actual = fs::file_size(path, ec);
    if (ec) throw IoError("cannot stat " + path.string());
    if (actual != expected) {
        throw IoError(path.string() + ": expected " + std::to_string(expected) + " bytes, found " +
                      std::to_string(actual));
    }
    std::vector<std::uint32_t> raw(expected / 4);
    std::ifstream in(path, std::ios::binary);
    in.read(reinterpret_cast<char*>(raw.data()), static_cast<std::streamsize>(expected));
    if (!in) throw IoError("short read on " + path.string());
    std::vector<double> values(raw.size());
    for (std::size_t i = 0; i < raw.size(); ++i) values[i] = std::bit_cast<float>(to_little(raw[i]));
    return values;
}

}  // namespace

VolumeHeader read_volume_header(const fs::path& dir) {
    const auto meta = read_json(dir / kMetaFile);
    VolumeHeader h;
    try {
        const auto dims = meta.at("dims").get<std::vector<std::size_t>>();
        const auto spacing = meta.at("spacing_mm").get<std::vector<double>>();
        if (dims.size() != 3 || spacing.size() != 3) throw IoError("dims and spacing_mm must have 3 entries");
        if (meta.at("dtype").get<std::string>() != "float32") throw IoError("unsupported dtype");
        if (meta.at("byte_order").get<std::string>() != "little") throw IoError("unsupported byte order");
        h.dims = {dims[0], dims[1], dims[2]};
        h.spacing_mm = {spacing[0], spacing[1], spacing[2]};
        h.modality = modality_from_string(meta.at("modality").get<std::string>());
        h.case_id = meta.at("case_id").get<std::string>();
        if (meta.contains("hu_window")) {
            h.hu_window = WindowSpec{meta["hu_window"].at("level").get<double>(), meta["hu_window"].at("width").get<double>()};
            h.hu_window->validate();
        }
    } catch (const json::exception& e) {
        throw IoError((dir / kMetaFile).string() + ": " + e.what());
    }
    return h;
}

void save_volume(const HUVolume& v, const fs::path& dir) {
    VolumeHeader h{v.dims(), v.spacing_mm(), v.modality(), v.case_id(), std::nullopt};
    write_container(dir, h, std::vector<double>(v.data().begin(), v.data().end()));
}

HUVolume load_volume(const fs::path& dir) {
    const auto h = read_volume_header(dir);
    auto values = read_payload(dir, h);
    if (h.hu_window) {
        for (auto& u : values) u = unit_to_hu(u, *h.hu_window);
    }
    return HUVolume(h.dims, std::move(values), h.spacing_mm, h.modality, h.case_id);
}

void save_stack(const NormalizedSliceStack& stack, Modality modality, const fs::path& dir) {
    stack.validate();
    if (stack.slices.empty()) throw ValidationError("cannot save an empty stack");
    const auto& first = stack.slices.front();
    VolumeHeader h{{stack.size(), first.rows, first.cols}, stack.spacing_mm, modality, stack.case_id, stack.window};
    std::vector<double> values;
    values.reserve(stack.size() * first.size());
    for (const auto& s : stack.slices) values.insert(values.end(), s.values.begin(), s.values.end());
    write_container(dir, h, values);
    write_text(dir / "source_index.json", json(stack.source_index_map).dump() + "\n");
}

NormalizedSliceStack load_stack(const fs::path& dir) {
    const auto h = read_volume_header(dir);
    if (!h.hu_window) throw IoError(dir.string() + " holds HU data, not a normalized stack");
    const auto values = read_payload(dir, h);
    NormalizedSliceStack out{{}, *h.hu_window, {}, h.spacing_mm, h.case_id};
    const auto n = h.dims[1] * h.dims[2];
    for (std::size_t z = 0; z < h.dims[0]; ++z) {
        auto first = values.begin() + static_cast<std::ptrdiff_t>(z * n);
        out.slices.emplace_back(h.dims[1], h.dims[2], std::vector<double>(first, first + static_cast<std::ptrdiff_t>(n)));
    }
    if (fs::exists(dir / "source_index.json")) {
        out.source_index_map = read_json(dir / "source_index.json").get<std::vector<std::size_t>>();
    } else {
        for (std::size_t z = 0; z < h.dims[0]; ++z) out.source_index_map.push_back(z);
    }
    out.validate();
    return out;
}

}  // namespace fdct
