#include "fdct/volume.hpp"

#include <algorithm>
#include <cmath>
#include <sstream>

#include "fdct/error.hpp"

namespace fdct {

namespace {

constexpr double kUnitTolerance = 1e-6;

}  // namespace

std::string_view to_string(Modality m) {
    switch (m) {
        case Modality::FDCT: return "FDCT";
        case Modality::MDCT: return "MDCT";
        case Modality::Prediction: return "PREDICTION";
        case Modality::Synthetic: return "SYNTHETIC";
    }
    return "SYNTHETIC";
}

Modality modality_from_string(std::string_view s) {
    if (s == "FDCT") return Modality::FDCT;
    if (s == "MDCT") return Modality::MDCT;
    if (s == "PREDICTION") return Modality::Prediction;
    if (s == "SYNTHETIC") return Modality::Synthetic;
    throw ValidationError("unknown modality '" + std::string(s) + "'");
}

Image2D::Image2D(std::size_t r, std::size_t c, std::vector<double> v) : rows(r), cols(c), values(std::move(v)) {
    if (values.size() != rows * cols) {
        throw ValidationError("image buffer size does not match " + std::to_string(rows) + "x" + std::to_string(cols));
    }
}

HUVolume::HUVolume(Dims3 dims, std::vector<double> data, Spacing3 spacing_mm, Modality modality, std::string case_id)
    : dims_(dims), data_(std::move(data)), spacing_(spacing_mm), modality_(modality), case_id_(std::move(case_id)) {
    for (auto d : dims_) {
        if (d < 1) throw ValidationError("volume extents must be >= 1");
    }
    if (data_.size() != dims_[0] * dims_[1] * dims_[2]) {
        throw ValidationError("volume buffer size does not match its dims");
    }
    for (double s : spacing_) {
        if (!(s > 0.0) || !std::isfinite(s)) throw ValidationError("spacing must be strictly positive");
    }
    for (double v : data_) {
        if (!std::isfinite(v)) throw ValidationError("volume '" + case_id_ + "' contains non-finite values");
    }
}

HUVolume HUVolume::from_slices(const std::vector<Image2D>& slices, Spacing3 spacing_mm, Modality modality,
                               std::string case_id) {
    if (slices.empty()) throw ValidationError("cannot build a volume from zero slices");
    const auto rows = slices.front().rows;
    const auto cols = slices.front().cols;
    std::vector<double> data;
    data.reserve(slices.size() * rows * cols);
    for (const auto& s : slices) {
        if (s.rows != rows || s.cols != cols) throw ValidationError("slices differ in shape");
        data.insert(data.end(), s.values.begin(), s.values.end());
    }
    return HUVolume({slices.size(), rows, cols}, std::move(data), spacing_mm, modality, std::move(case_id));
}

Image2D HUVolume::slice(std::size_t z) const {
    if (z >= dims_[0]) throw ValidationError("slice index out of range");
    const auto n = dims_[1] * dims_[2];
    auto first = data_.begin() + static_cast<std::ptrdiff_t>(z * n);
    return Image2D(dims_[1], dims_[2], std::vector<double>(first, first + static_cast<std::ptrdiff_t>(n)));
}

void WindowSpec::validate() const {
    if (!std::isfinite(level) || !std::isfinite(width) || !(width > 0.0)) {
        throw ValidationError("window width must be positive and finite");
    }
}

void NormalizedSliceStack::validate() const {
    if (slices.size() != source_index_map.size()) throw ValidationError("index map length differs from slice count");
    for (std::size_t i = 1; i < source_index_map.size(); ++i) {
        if (source_index_map[i] <= source_index_map[i - 1]) throw ValidationError("index map not strictly increasing");
    }
    for (const auto& s : slices) {
        if (!s.same_shape(slices.front())) throw ValidationError("stack slices differ in shape");
        for (double v : s.values) {
            if (!(v >= 0.0 && v <= 1.0)) throw ValidationError("stack value outside [0, 1]");
        }
    }
}

double window_to_unit(double hu, const WindowSpec& w) {
    w.validate();
    if (!std::isfinite(hu)) throw ValidationError("non-finite HU value");
    return std::clamp((hu - w.lower()) / w.width, 0.0, 1.0);
}

Image2D window_to_unit(const Image2D& hu, const WindowSpec& w) {
    Image2D out(hu.rows, hu.cols);
    for (std::size_t i = 0; i < hu.size(); ++i) out.values[i] = window_to_unit(hu.values[i], w);
    return out;
}

double unit_to_hu(double u, const WindowSpec& w) {
    w.validate();
    if (!std::isfinite(u) || u < -kUnitTolerance || u > 1.0 + kUnitTolerance) {
        std::ostringstream msg;
        msg << "normalized value " << u << " outside [0, 1]";
        throw ValidationError(msg.str());
    }
    return std::clamp(u, 0.0, 1.0) * w.width + w.lower();
}

Image2D unit_to_hu(const Image2D& u, const WindowSpec& w) {
    Image2D out(u.rows, u.cols);
    for (std::size_t i = 0; i < u.size(); ++i) out.values[i] = unit_to_hu(u.values[i], w);
    return out;
}

bool is_empty_slice(const Image2D& unit_slice, double min_fraction) {
    if (unit_slice.size() == 0) return true;
    const auto occupied = std::count_if(unit_slice.values.begin(), unit_slice.values.end(), [](double v) { return v > 0.0; });
    return static_cast<double>(occupied) < min_fraction * static_cast<double>(unit_slice.size());
}

std::pair<NormalizedSliceStack, NormalizedSliceStack> drop_empty_slices_paired(const HUVolume& a, const HUVolume& b,
                                                                                const WindowSpec& w,
                                                                                double min_fraction) {
    w.validate();
    if (a.depth() != b.depth()) {
        throw PairingError("z-extent mismatch: '" + a.case_id() + "' has " + std::to_string(a.depth()) + " slices, '" +
                           b.case_id() + "' has " + std::to_string(b.depth()));
    }
    NormalizedSliceStack sa{{}, w, {}, a.spacing_mm(), a.case_id()};
    NormalizedSliceStack sb{{}, w, {}, b.spacing_mm(), b.case_id()};
    for (std::size_t z = 0; z < a.depth(); ++z) {
        auto ua = window_to_unit(a.slice(z), w);
        auto ub = window_to_unit(b.slice(z), w);
        if (is_empty_slice(ua, min_fraction) || is_empty_slice(ub, min_fraction)) continue;
        sa.slices.push_back(std::move(ua));
        sb.slices.push_back(std::move(ub));
        sa.source_index_map.push_back(z);
        sb.source_index_map.push_back(z);
    }
    return {std::move(sa), std::move(sb)};
}

Image2D resize_slice(const Image2D& s, int target) {
    if (target <= 0) throw ValidationError("resize target must be positive");
    if (s.rows < 2 || s.cols < 2) throw ValidationError("resize source must be at least 2x2");
    const auto n = static_cast<std::size_t>(target);
    if (s.rows == n && s.cols == n) return s;

    auto coord = [n](std::size_t i, std::size_t src) {
        if (n == 1) return static_cast<double>(src - 1) / 2.0;
        return static_cast<double>(i) * static_cast<double>(src - 1) / static_cast<double>(n - 1);
    };
    Image2D out(n, n);
    for (std::size_t i = 0; i < n; ++i) {
        const double fy = coord(i, s.rows);
        const auto y0 = std::min(static_cast<std::size_t>(fy), s.rows - 2);
        const double ty = fy - static_cast<double>(y0);
        for (std::size_t j = 0; j < n; ++j) {
            const double fx = coord(j, s.cols);
            const auto x0 = std::min(static_cast<std::size_t>(fx), s.cols - 2);
            const double tx = fx - static_cast<double>(x0);
            const double top = s.at(y0, x0) * (1.0 - tx) + s.at(y0, x0 + 1) * tx;
            const double bottom = s.at(y0 + 1, x0) * (1.0 - tx) + s.at(y0 + 1, x0 + 1) * tx;
            out.at(i, j) = top * (1.0 - ty) + bottom * ty;
        }
    }
    return out;
}

NormalizedSliceStack resize_stack(const NormalizedSliceStack& stack, int target) {
    NormalizedSliceStack out = stack;
    if (stack.slices.empty()) return out;
    const auto& first = stack.slices.front();
    for (auto& s : out.slices) s = resize_slice(s, target);
    out.spacing_mm[1] = stack.spacing_mm[1] * static_cast<double>(first.rows) / target;
    out.spacing_mm[2] = stack.spacing_mm[2] * static_cast<double>(first.cols) / target;
    return out;
}

NormalizedSliceStack unstack(const HUVolume& v, const WindowSpec& w) {
    NormalizedSliceStack out{{}, w, {}, v.spacing_mm(), v.case_id()};
    for (std::size_t z = 0; z < v.depth(); ++z) {
        out.slices.push_back(window_to_unit(v.slice(z), w));
        out.source_index_map.push_back(z);
    }
    return out;
}

HUVolume stack_slices(const NormalizedSliceStack& stack, const WindowSpec& w) {
    if (stack.slices.empty()) throw ValidationError("cannot stack an empty slice list");
    std::vector<Image2D> hu;
    hu.reserve(stack.size());
    for (const auto& s : stack.slices) hu.push_back(unit_to_hu(s, w));
    return HUVolume::from_slices(hu, stack.spacing_mm, Modality::Prediction, stack.case_id);
}

}  // namespace fdct
