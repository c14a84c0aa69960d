#pragma once

#include <array>
#include <cstddef>
#include <span>
#include <string>
#include <string_view>
#include <utility>
#include <vector>

namespace fdct {

enum class Modality { FDCT, MDCT, Prediction, Synthetic };

std::string_view to_string(Modality m);
Modality modality_from_string(std::string_view s);

/// Row-major 2D scalar field.
struct Image2D {
    std::size_t rows = 0;
    std::size_t cols = 0;
    std::vector<double> values;

    Image2D() = default;
    Image2D(std::size_t r, std::size_t c, double fill = 0.0) : rows(r), cols(c), values(r * c, fill) {}
    Image2D(std::size_t r, std::size_t c, std::vector<double> v);

    double& at(std::size_t r, std::size_t c) { return values[r * cols + c]; }
    double at(std::size_t r, std::size_t c) const { return values[r * cols + c]; }
    std::size_t size() const { return values.size(); }
    bool same_shape(const Image2D& o) const { return rows == o.rows && cols == o.cols; }

    friend bool operator==(const Image2D&, const Image2D&) = default;
};

using Dims3 = std::array<std::size_t, 3>;     // z, y, x
using Spacing3 = std::array<double, 3>;       // z, y, x in mm

/// A 3D field of Hounsfield values, z-major. Construction validates that every
/// value is finite, every extent is at least one and spacing is positive.
class HUVolume {
public:
    HUVolume(Dims3 dims, std::vector<double> data, Spacing3 spacing_mm, Modality modality, std::string case_id);

    static HUVolume from_slices(const std::vector<Image2D>& slices, Spacing3 spacing_mm, Modality modality,
                                std::string case_id);

    const Dims3& dims() const { return dims_; }
    std::size_t depth() const { return dims_[0]; }
    std::size_t rows() const { return dims_[1]; }
    std::size_t cols() const { return dims_[2]; }
    std::size_t voxel_count() const { return data_.size(); }
    const Spacing3& spacing_mm() const { return spacing_; }
    Modality modality() const { return modality_; }
    const std::string& case_id() const { return case_id_; }

    std::span<const double> data() const { return data_; }
    double at(std::size_t z, std::size_t y, std::size_t x) const { return data_[(z * dims_[1] + y) * dims_[2] + x]; }
    Image2D slice(std::size_t z) const;

    void set_modality(Modality m) { modality_ = m; }
    void set_case_id(std::string id) { case_id_ = std::move(id); }

    friend bool operator==(const HUVolume&, const HUVolume&) = default;

private:
    Dims3 dims_;
    std::vector<double> data_;
    Spacing3 spacing_;
    Modality modality_;
    std::string case_id_;
};

/// Display window in HU. Maps [level - width/2, level + width/2] onto [0, 1].
struct WindowSpec {
    double level = 50.0;
    double width = 100.0;

    double lower() const { return level - width / 2.0; }
    double upper() const { return level + width / 2.0; }
    void validate() const;

    friend bool operator==(const WindowSpec&, const WindowSpec&) = default;
};

/// Slices in the unit interval after windowing, with the original z index of
/// each slice. Spacing and case id are carried through so a stack can be
/// turned back into a volume.
struct NormalizedSliceStack {
    std::vector<Image2D> slices;
    WindowSpec window;
    std::vector<std::size_t> source_index_map;
    Spacing3 spacing_mm{1.0, 1.0, 1.0};
    std::string case_id;

    std::size_t size() const { return slices.size(); }
    /// Checks the value range, the shared slice shape and a strictly increasing index map.
    void validate() const;
};

/// Fraction of pixels that must be above the window floor for a slice to count as non-empty.
inline constexpr double kEmptySliceFraction = 0.005;

double window_to_unit(double hu, const WindowSpec& w);
Image2D window_to_unit(const Image2D& hu, const WindowSpec& w);

/// Inverse of window_to_unit inside the window. Values within 1e-6 of the unit
/// interval are clamped; anything further out is rejected.
double unit_to_hu(double u, const WindowSpec& w);
Image2D unit_to_hu(const Image2D& u, const WindowSpec& w);

bool is_empty_slice(const Image2D& unit_slice, double min_fraction = kEmptySliceFraction);

/// Windows both volumes and drops every z index at which either slice is empty.
std::pair<NormalizedSliceStack, NormalizedSliceStack> drop_empty_slices_paired(
    const HUVolume& a, const HUVolume& b, const WindowSpec& w, double min_fraction = kEmptySliceFraction);

/// Bilinear resize to target x target with corner-aligned sampling.
Image2D resize_slice(const Image2D& s, int target);
NormalizedSliceStack resize_stack(const NormalizedSliceStack& stack, int target);

/// Windows every slice of a volume; identity index map.
NormalizedSliceStack unstack(const HUVolume& v, const WindowSpec& w);

/// Maps a stack back to HU. The result is tagged as a prediction.
HUVolume stack_slices(const NormalizedSliceStack& stack, const WindowSpec& w);

}  // namespace fdct
