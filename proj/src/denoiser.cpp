#include "fdct/denoiser.hpp"

#include <algorithm>
#include <cmath>
#include <set>

#include <json.hpp>

#include "fdct/error.hpp"

namespace fdct::model {

namespace nn = torch::nn;
using nlohmann::json;

namespace {

nn::Conv2d conv(int in, int out, int kernel, int stride = 1) {
    return nn::Conv2d(nn::Conv2dOptions(in, out, kernel).stride(stride).padding(kernel / 2));
}

nn::GroupNorm group_norm(int channels, int groups) { return nn::GroupNorm(nn::GroupNormOptions(groups, channels)); }

// Per-layer parameter formulas mirroring the module constructors below.
std::int64_t conv_params(std::int64_t in, std::int64_t out, std::int64_t k) { return k * k * in * out + out; }
std::int64_t linear_params(std::int64_t in, std::int64_t out) { return in * out + out; }
std::int64_t norm_params(std::int64_t c) { return 2 * c; }

std::int64_t res_block_params(std::int64_t in, std::int64_t out, std::int64_t emb) {
    std::int64_t n = norm_params(in) + conv_params(in, out, 3) + linear_params(emb, out) + norm_params(out) +
                     conv_params(out, out, 3);
    if (in != out) n += conv_params(in, out, 1);
    return n;
}

std::int64_t attention_params(std::int64_t c) { return norm_params(c) + conv_params(c, 3 * c, 1) + conv_params(c, c, 1); }

}  // namespace

bool DenoiserConfig::has_attention(int level) const {
    return std::find(attention_levels.begin(), attention_levels.end(), level) != attention_levels.end();
}

void DenoiserConfig::validate() const {
    const int n = levels();
    if (n < 2) throw ConfigurationError("denoiser needs at least two resolution levels");
    for (int c : level_channels) {
        if (c <= 0) throw ConfigurationError("level channel counts must be positive");
    }
    if (in_channels != 2) throw ConfigurationError("denoiser input is x_t plus one condition channel (in_channels = 2)");
    if (out_channels != 1) throw ConfigurationError("denoiser predicts a single noise channel (out_channels = 1)");
    if (attention_heads <= 0) throw ConfigurationError("attention_heads must be positive");
    if (timestep_embedding_dim <= 0 || timestep_embedding_dim % 2 != 0) {
        throw ConfigurationError("timestep_embedding_dim must be a positive even number");
    }
    if (res_blocks < 1) throw ConfigurationError("res_blocks must be >= 1");
    if (norm_groups <= 0) throw ConfigurationError("norm_groups must be positive");
    for (int c : level_channels) {
        if (c % norm_groups != 0) {
            throw ConfigurationError("channel count " + std::to_string(c) + " not divisible by " +
                                     std::to_string(norm_groups) + " norm groups");
        }
    }
    std::set<int> seen;
    for (int lvl : attention_levels) {
        if (lvl < 0 || lvl >= n) throw ConfigurationError("attention level " + std::to_string(lvl) + " does not exist");
        if (!seen.insert(lvl).second) throw ConfigurationError("attention level listed twice");
        const int c = level_channels[static_cast<std::size_t>(lvl)];
        if (c % attention_heads != 0) {
            throw ConfigurationError("level " + std::to_string(lvl) + " has " + std::to_string(c) +
                                     " channels, not divisible by " + std::to_string(attention_heads) + " heads");
        }
    }
    const long factor = 1L << (n - 1);
    if (input_side <= 0 || input_side % factor != 0) {
        throw ConfigurationError("input side " + std::to_string(input_side) + " not divisible by 2^" +
                                 std::to_string(n - 1) + " = " + std::to_string(factor));
    }
}

DenoiserConfig DenoiserConfig::paper_preset() {
    DenoiserConfig c;
    c.level_channels = {64, 128, 256, 256, 256, 256, 256, 256, 256};
    c.attention_levels = {8};
    c.attention_heads = 64;
    c.timestep_embedding_dim = 4 * 64;
    c.res_blocks = 2;
    c.norm_groups = 32;
    c.input_side = 512;
    return c;
}

DenoiserConfig DenoiserConfig::toy_preset() { return DenoiserConfig{}; }

std::string DenoiserConfig::to_json() const {
    json j{{"level_channels", level_channels},
           {"attention_levels", attention_levels},
           {"attention_heads", attention_heads},
           {"in_channels", in_channels},
           {"out_channels", out_channels},
           {"timestep_embedding_dim", timestep_embedding_dim},
           {"res_blocks", res_blocks},
           {"norm_groups", norm_groups},
           {"input_side", input_side}};
    return j.dump();
}

DenoiserConfig DenoiserConfig::from_json(const std::string& text) {
    try {
        const auto j = json::parse(text);
        DenoiserConfig c;
        c.level_channels = j.at("level_channels").get<std::vector<int>>();
        c.attention_levels = j.at("attention_levels").get<std::vector<int>>();
        c.attention_heads = j.at("attention_heads").get<int>();
        c.in_channels = j.value("in_channels", 2);
        c.out_channels = j.value("out_channels", 1);
        c.timestep_embedding_dim = j.value("timestep_embedding_dim", 4 * c.level_channels.at(0));
        c.res_blocks = j.value("res_blocks", 1);
        c.norm_groups = j.value("norm_groups", 8);
        c.input_side = j.at("input_side").get<int>();
        return c;
    } catch (const json::exception& e) {
        throw ConfigurationError(std::string("malformed denoiser config: ") + e.what());
    }
}

std::int64_t param_count(const DenoiserConfig& config) {
    config.validate();
    const auto emb = static_cast<std::int64_t>(config.timestep_embedding_dim);
    const int levels = config.levels();
    auto channels = [&](int i) { return static_cast<std::int64_t>(config.level_channels[static_cast<std::size_t>(i)]); };

    std::int64_t total = 2 * linear_params(emb, emb);
    std::int64_t ch = channels(0);
    total += conv_params(config.in_channels, ch, 3);
    std::vector<std::int64_t> skips{ch};
    for (int i = 0; i < levels; ++i) {
        for (int r = 0; r < config.res_blocks; ++r) {
            total += res_block_params(ch, channels(i), emb);
            ch = channels(i);
            if (config.has_attention(i)) total += attention_params(ch);
            skips.push_back(ch);
        }
        if (i + 1 < levels) {
            total += conv_params(ch, ch, 3);
            skips.push_back(ch);
        }
    }
    total += 2 * res_block_params(ch, ch, emb);
    if (config.has_attention(levels - 1)) total += attention_params(ch);
    for (int i = levels - 1; i >= 0; --i) {
        for (int r = 0; r <= config.res_blocks; ++r) {
            total += res_block_params(ch + skips.back(), channels(i), emb);
            skips.pop_back();
            ch = channels(i);
            if (config.has_attention(i)) total += attention_params(ch);
        }
        if (i > 0) total += conv_params(ch, ch, 3);
    }
    total += norm_params(ch) + conv_params(ch, config.out_channels, 3);
    return total;
}

torch::Tensor timestep_embedding(const torch::Tensor& t, int dim) {
    const int half = dim / 2;
    auto opts = torch::TensorOptions().dtype(t.dtype());
    auto freqs = torch::exp(-std::log(10000.0) * torch::arange(half, opts) / static_cast<double>(half));
    auto args = t.unsqueeze(1) * freqs.unsqueeze(0);
    return torch::cat({torch::cos(args), torch::sin(args)}, 1);
}

ResBlockImpl::ResBlockImpl(int in_ch, int out_ch, int emb_dim, int groups) {
    norm1 = register_module("norm1", group_norm(in_ch, groups));
    conv1 = register_module("conv1", conv(in_ch, out_ch, 3));
    emb_proj = register_module("emb_proj", nn::Linear(emb_dim, out_ch));
    norm2 = register_module("norm2", group_norm(out_ch, groups));
    conv2 = register_module("conv2", conv(out_ch, out_ch, 3));
    if (in_ch != out_ch) skip = register_module("skip", conv(in_ch, out_ch, 1));
}

torch::Tensor ResBlockImpl::forward(const torch::Tensor& x, const torch::Tensor& emb) {
    auto h = conv1->forward(torch::silu(norm1->forward(x)));
    h = h + emb_proj->forward(torch::silu(emb)).unsqueeze(-1).unsqueeze(-1);
    h = conv2->forward(torch::silu(norm2->forward(h)));
    return (skip ? skip->forward(x) : x) + h;
}

AttentionBlockImpl::AttentionBlockImpl(int channels, int heads_, int groups) : heads(heads_) {
    norm = register_module("norm", group_norm(channels, groups));
    qkv = register_module("qkv", conv(channels, 3 * channels, 1));
    proj = register_module("proj", conv(channels, channels, 1));
}

torch::Tensor AttentionBlockImpl::forward(const torch::Tensor& x) {
    const auto b = x.size(0), c = x.size(1), h = x.size(2), w = x.size(3);
    const auto head_dim = c / heads;
    auto qkv_t = qkv->forward(norm->forward(x)).reshape({b, 3, heads, head_dim, h * w});
    auto q = qkv_t.select(1, 0);
    auto k = qkv_t.select(1, 1);
    auto v = qkv_t.select(1, 2);
    auto weights = torch::softmax(torch::matmul(q.transpose(-1, -2), k) / std::sqrt(static_cast<double>(head_dim)), -1);
    auto out = torch::matmul(v, weights.transpose(-1, -2)).reshape({b, c, h, w});
    return x + proj->forward(out);
}

UNetImpl::UNetImpl(const DenoiserConfig& cfg) : config(cfg) {
    config.validate();
    const int levels = config.levels();
    const int emb = config.timestep_embedding_dim;
    const int groups = config.norm_groups;
    auto channels = [&](int i) { return config.level_channels[static_cast<std::size_t>(i)]; };

    time_mlp = register_module("time_mlp", nn::Sequential(nn::Linear(emb, emb), nn::SiLU(), nn::Linear(emb, emb)));
    int ch = channels(0);
    conv_in = register_module("conv_in", conv(config.in_channels, ch, 3));
    std::vector<int> skips{ch};
    for (int i = 0; i < levels; ++i) {
        for (int r = 0; r < config.res_blocks; ++r) {
            down_res->push_back(ResBlock(ch, channels(i), emb, groups));
            ch = channels(i);
            if (config.has_attention(i)) down_attn->push_back(AttentionBlock(ch, config.attention_heads, groups));
            skips.push_back(ch);
        }
        if (i + 1 < levels) {
            downsample->push_back(conv(ch, ch, 3, 2));
            skips.push_back(ch);
        }
    }
    mid_res1 = register_module("mid_res1", ResBlock(ch, ch, emb, groups));
    if (config.has_attention(levels - 1)) {
        mid_attn = register_module("mid_attn", AttentionBlock(ch, config.attention_heads, groups));
    }
    mid_res2 = register_module("mid_res2", ResBlock(ch, ch, emb, groups));
    for (int i = levels - 1; i >= 0; --i) {
        for (int r = 0; r <= config.res_blocks; ++r) {
            up_res->push_back(ResBlock(ch + skips.back(), channels(i), emb, groups));
            skips.pop_back();
            ch = channels(i);
            if (config.has_attention(i)) up_attn->push_back(AttentionBlock(ch, config.attention_heads, groups));
        }
        if (i > 0) upsample->push_back(conv(ch, ch, 3));
    }
    register_module("down_res", down_res);
    register_module("down_attn", down_attn);
    register_module("downsample", downsample);
    register_module("up_res", up_res);
    register_module("up_attn", up_attn);
    register_module("upsample", upsample);
    norm_out = register_module("norm_out", group_norm(ch, groups));
    conv_out = register_module("conv_out", conv(ch, config.out_channels, 3));

    // Small output layer so an untrained network predicts near-zero noise.
    torch::NoGradGuard no_grad;
    conv_out->weight.mul_(0.1);
    conv_out->bias.zero_();
}

torch::Tensor UNetImpl::forward(const torch::Tensor& x_t, const torch::Tensor& t, const torch::Tensor& condition) {
    const int levels = config.levels();
    auto emb = time_mlp->forward(timestep_embedding(t.to(x_t.dtype()), config.timestep_embedding_dim));
    auto h = conv_in->forward(torch::cat({x_t, condition}, 1));
    std::vector<torch::Tensor> skips{h};
    std::size_t res_i = 0, attn_i = 0;
    for (int i = 0; i < levels; ++i) {
        for (int r = 0; r < config.res_blocks; ++r) {
            h = down_res[res_i++]->as<ResBlockImpl>()->forward(h, emb);
            if (config.has_attention(i)) h = down_attn[attn_i++]->as<AttentionBlockImpl>()->forward(h);
            skips.push_back(h);
        }
        if (i + 1 < levels) {
            h = downsample[static_cast<std::size_t>(i)]->as<nn::Conv2dImpl>()->forward(h);
            skips.push_back(h);
        }
    }
    h = mid_res1->forward(h, emb);
    if (mid_attn) h = mid_attn->forward(h);
    h = mid_res2->forward(h, emb);
    res_i = attn_i = 0;
    std::size_t up_i = 0;
    for (int i = levels - 1; i >= 0; --i) {
        for (int r = 0; r <= config.res_blocks; ++r) {
            h = up_res[res_i++]->as<ResBlockImpl>()->forward(torch::cat({h, skips.back()}, 1), emb);
            skips.pop_back();
            if (config.has_attention(i)) h = up_attn[attn_i++]->as<AttentionBlockImpl>()->forward(h);
        }
        if (i > 0) {
            h = torch::upsample_nearest2d(h, {h.size(2) * 2, h.size(3) * 2});
            h = upsample[up_i++]->as<nn::Conv2dImpl>()->forward(h);
        }
    }
    return conv_out->forward(torch::silu(norm_out->forward(h)));
}

Denoiser::Denoiser(const DenoiserConfig& config, std::uint64_t seed) : config_(config) {
    config_.validate();
    torch::manual_seed(seed);
    net_ = UNet(config_);
    net_->eval();
}

void Denoiser::check_input(const torch::Tensor& x_t, const torch::Tensor& condition) const {
    if (x_t.sizes() != condition.sizes()) throw ModelContractError("x_t and condition differ in shape");
    if (x_t.dim() != 4 || x_t.size(1) != 1) throw ModelContractError("expected [B, 1, H, W] inputs");
    const long factor = 1L << (config_.levels() - 1);
    if (x_t.size(2) % factor != 0 || x_t.size(3) % factor != 0) {
        throw ModelContractError("spatial size not divisible by " + std::to_string(factor));
    }
}

torch::Tensor Denoiser::denoise(const torch::Tensor& x_t, int t, const torch::Tensor& condition) const {
    if (t < 1) throw ValidationError("timestep must be >= 1");
    const bool single = x_t.dim() == 2;
    auto x = single ? x_t.unsqueeze(0).unsqueeze(0) : x_t;
    auto c = single ? condition.unsqueeze(0).unsqueeze(0) : condition;
    check_input(x, c);
    torch::NoGradGuard no_grad;
    auto param = net_->parameters().front();
    auto steps = torch::full({x.size(0)}, static_cast<double>(t), torch::TensorOptions().dtype(param.dtype()));
    auto out = net_->forward(x.to(param.dtype()), steps, c.to(param.dtype()));
    return single ? out.squeeze(0).squeeze(0) : out;
}

torch::Tensor Denoiser::forward(const torch::Tensor& x_t, const torch::Tensor& t, const torch::Tensor& condition) {
    check_input(x_t, condition);
    return net_->forward(x_t, t, condition);
}

diffusion::NoisePredictor Denoiser::predictor() const {
    return [this](const torch::Tensor& x_t, int t, const torch::Tensor& condition) { return denoise(x_t, t, condition); };
}

std::int64_t Denoiser::parameter_count() const {
    std::int64_t n = 0;
    for (const auto& p : net_->parameters()) n += p.numel();
    return n;
}

Denoiser build_denoiser(const DenoiserConfig& config, std::uint64_t seed) { return Denoiser(config, seed); }

}  // namespace fdct::model
