#include "fdct/tensor_util.hpp"

#include <ATen/CPUGeneratorImpl.h>

#include "fdct/error.hpp"

namespace fdct {

torch::Tensor to_tensor(const Image2D& img, torch::Dtype dtype) {
    auto t = torch::empty({static_cast<std::int64_t>(img.rows), static_cast<std::int64_t>(img.cols)}, torch::kFloat64);
    std::copy(img.values.begin(), img.values.end(), t.data_ptr<double>());
    return t.to(dtype);
}

torch::Tensor to_batch(const std::vector<Image2D>& imgs, torch::Dtype dtype) {
    if (imgs.empty()) throw ValidationError("cannot batch zero images");
    std::vector<torch::Tensor> parts;
    parts.reserve(imgs.size());
    for (const auto& img : imgs) {
        if (!img.same_shape(imgs.front())) throw ValidationError("batched images differ in shape");
        parts.push_back(to_tensor(img, dtype));
    }
    return torch::stack(parts).unsqueeze(1);
}

Image2D to_image(const torch::Tensor& t, std::size_t rows, std::size_t cols) {
    auto flat = t.detach().to(torch::kFloat64).contiguous().reshape({-1});
    if (static_cast<std::size_t>(flat.numel()) != rows * cols) throw ValidationError("tensor size does not match image shape");
    const double* p = flat.data_ptr<double>();
    return Image2D(rows, cols, std::vector<double>(p, p + flat.numel()));
}

Image2D to_image(const torch::Tensor& t2d) {
    if (t2d.dim() != 2) throw ValidationError("expected a 2D tensor");
    return to_image(t2d, static_cast<std::size_t>(t2d.size(0)), static_cast<std::size_t>(t2d.size(1)));
}

torch::Generator make_generator(std::uint64_t seed) { return at::make_generator<at::CPUGeneratorImpl>(seed); }

}  // namespace fdct
