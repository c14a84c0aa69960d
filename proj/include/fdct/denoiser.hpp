#pragma once

#include <cstdint>
#include <string>
#include <vector>

#include <torch/torch.h>

#include "fdct/diffusion.hpp"

namespace fdct::model {

/// U-Net layout. Level i runs at input_side / 2^i with level_channels[i]
/// feature maps; self-attention is inserted at attention_levels only.
struct DenoiserConfig {
    std::vector<int> level_channels{32, 64, 128};
    std::vector<int> attention_levels{2};
    int attention_heads = 4;
    int in_channels = 2;  // x_t and the condition slice
    int out_channels = 1;
    int timestep_embedding_dim = 128;
    int res_blocks = 1;
    int norm_groups = 8;
    int input_side = 32;

    /// Throws ConfigurationError when the layout cannot be built.
    void validate() const;
    int levels() const { return static_cast<int>(level_channels.size()); }
    bool has_attention(int level) const;

    /// Nine levels at 512 x 512, 64-head attention at the lowest resolution.
    static DenoiserConfig paper_preset();
    /// Three levels at 32 x 32 for desk-scale runs.
    static DenoiserConfig toy_preset();

    std::string to_json() const;
    static DenoiserConfig from_json(const std::string& text);

    friend bool operator==(const DenoiserConfig&, const DenoiserConfig&) = default;
};

/// Exact learnable parameter count derived from the layout alone.
std::int64_t param_count(const DenoiserConfig& config);

torch::Tensor timestep_embedding(const torch::Tensor& t, int dim);

struct ResBlockImpl : torch::nn::Module {
    ResBlockImpl(int in_ch, int out_ch, int emb_dim, int groups);
    torch::Tensor forward(const torch::Tensor& x, const torch::Tensor& emb);

    torch::nn::GroupNorm norm1{nullptr}, norm2{nullptr};
    torch::nn::Conv2d conv1{nullptr}, conv2{nullptr}, skip{nullptr};
    torch::nn::Linear emb_proj{nullptr};
};
TORCH_MODULE(ResBlock);

struct AttentionBlockImpl : torch::nn::Module {
    AttentionBlockImpl(int channels, int heads, int groups);
    torch::Tensor forward(const torch::Tensor& x);

    int heads;
    torch::nn::GroupNorm norm{nullptr};
    torch::nn::Conv2d qkv{nullptr}, proj{nullptr};
};
TORCH_MODULE(AttentionBlock);

struct UNetImpl : torch::nn::Module {
    explicit UNetImpl(const DenoiserConfig& config);
    /// x_t, condition: [B, 1, H, W]; t: [B] timesteps.
    torch::Tensor forward(const torch::Tensor& x_t, const torch::Tensor& t, const torch::Tensor& condition);

    DenoiserConfig config;
    torch::nn::Sequential time_mlp{nullptr};
    torch::nn::Conv2d conv_in{nullptr};
    torch::nn::ModuleList down_res, down_attn, downsample;
    ResBlock mid_res1{nullptr}, mid_res2{nullptr};
    AttentionBlock mid_attn{nullptr};
    torch::nn::ModuleList up_res, up_attn, upsample;
    torch::nn::GroupNorm norm_out{nullptr};
    torch::nn::Conv2d conv_out{nullptr};
};
TORCH_MODULE(UNet);

/// A noise-prediction network eps_hat = f(x_t, t, condition).
class Denoiser {
public:
    /// Initialization is deterministic given the seed (reseeds torch's global generator).
    Denoiser(const DenoiserConfig& config, std::uint64_t seed);

    const DenoiserConfig& config() const { return config_; }
    UNet& network() { return net_; }
    const UNet& network() const { return net_; }

    /// Evaluation without gradients. Accepts [H, W] or [B, 1, H, W] inputs.
    torch::Tensor denoise(const torch::Tensor& x_t, int t, const torch::Tensor& condition) const;
    /// Differentiable forward for training; t holds one timestep per item.
    torch::Tensor forward(const torch::Tensor& x_t, const torch::Tensor& t, const torch::Tensor& condition);

    diffusion::NoisePredictor predictor() const;
    std::int64_t parameter_count() const;

    void check_input(const torch::Tensor& x_t, const torch::Tensor& condition) const;

private:
    DenoiserConfig config_;
    // Evaluation runs forward() on a logically const network.
    mutable UNet net_{nullptr};
};

Denoiser build_denoiser(const DenoiserConfig& config, std::uint64_t seed);

}  // namespace fdct::model
