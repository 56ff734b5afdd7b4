#pragma once

#include "itstyler/archive.hpp"
#include "itstyler/image.hpp"
#include "itstyler/style_space.hpp"

#include <torch/torch.h>

#include <array>
#include <string>
#include <vector>

namespace itstyler::nets {

/// Layer output widths of the mapper: a rounded linear ramp 512 -> 1024.
inline constexpr std::array<int64_t, 7> kMapperDims = {512, 598, 684, 769, 855, 940, 1024};

/// Six fully connected layers, ReLU between them, none after the last.
/// Output layout: first 512 entries are sigma, last 512 are mu.
class MapperImpl : public torch::nn::Module {
public:
    MapperImpl();
    torch::Tensor forward(const torch::Tensor& embedding);
    std::vector<torch::nn::Linear> layers;
};
TORCH_MODULE(Mapper);

/// Mirror of VGG-19 relu4_1 -> input: nearest x2 upsampling in place of
/// pooling, reflection padding before every 3x3 conv, no normalization.
class DecoderImpl : public torch::nn::Module {
public:
    DecoderImpl();
    torch::Tensor forward(const torch::Tensor& features);

    struct Stage {
        torch::nn::Conv2d conv{nullptr};
        bool upsample_after = false;
        bool relu = true;
    };
    std::vector<Stage> stages;
};
TORCH_MODULE(Decoder);

/// Names of the decoder convolutions in forward order.
const std::vector<std::string>& decoder_layer_names();

/// Patch discriminator applied at full and half resolution.
class DiscriminatorImpl : public torch::nn::Module {
public:
    explicit DiscriminatorImpl(int64_t scales = 2, int64_t base_channels = 64);
    /// (N,3,H,W) in [0,1] -> one (N,1,h,w) logit map per scale.
    std::vector<torch::Tensor> forward(const torch::Tensor& images);

    std::vector<torch::nn::Sequential> heads;
};
TORCH_MODULE(Discriminator);

/// Splits raw mapper output into (sigma, mu) without clamping; shapes follow
/// the leading batch dimension.
std::pair<torch::Tensor, torch::Tensor> split_raw_code(const torch::Tensor& raw);

/// Clamped style code for a single (512) or batched (N,512) embedding.
/// Throws Error(DimensionMismatch).
style::StyleCode map_to_style(Mapper& mapper, const torch::Tensor& embedding);

/// g(t). Throws Error(ChannelMismatch) unless t has 512 channels.
torch::Tensor decode(Decoder& decoder, const torch::Tensor& features);
Image decode_image(Decoder& decoder, const torch::Tensor& features);

/// Throws Error(ImageTooSmall) below 64x64.
std::vector<torch::Tensor> discriminate(Discriminator& disc, const torch::Tensor& images);

/// The three trainable networks with archive (de)serialization under the
/// `mapper.`, `decoder.` and `disc.` prefixes.
struct NetworkSet {
    Mapper mapper;
    Decoder decoder;
    Discriminator disc;

    /// Seeds torch's generator, then builds all three with fan-in scaled init.
    static NetworkSet create(uint64_t seed);

    void save_to(TensorArchive& archive) const;
    /// Throws MissingTensor/ShapeMismatch. When `with_disc` is false the
    /// discriminator is left untouched.
    void load_from(const TensorArchive& archive, bool with_disc = true);
    /// Loads only `decoder.*` tensors (warm start).
    void load_decoder(const TensorArchive& archive);

    int64_t parameter_count(const std::string& which) const;
    void to(torch::Dtype dtype);
    void eval();
    void train();
};

/// Copy of all parameters of a module into a fresh tensor list.
std::vector<torch::Tensor> snapshot_parameters(const torch::nn::Module& module);

} // namespace itstyler::nets
